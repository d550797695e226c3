#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "thermorl/encoder.hpp"

namespace thermorl {

struct InvalidMutation : std::runtime_error {
    explicit InvalidMutation(const std::string& why) : std::runtime_error("invalid mutation: " + why) {}
};
struct UnknownMutation : std::runtime_error {
    explicit UnknownMutation(const std::string& key)
        : std::runtime_error("no ddg record for: " + key) {}
};
struct TooFewRecords : std::runtime_error {
    TooFewRecords() : std::runtime_error("too few records for k-fold training") {}
};
struct LengthMismatch : std::runtime_error {
    LengthMismatch() : std::runtime_error("prediction/target length mismatch") {}
};
struct OracleFailure : std::runtime_error {
    explicit OracleFailure(const std::string& why) : std::runtime_error("oracle failure: " + why) {}
};

struct Mutation {
    std::string protein_id;
    int position = 0;  // node index into V
    char wild_aa = 'A';
    char mut_aa = 'G';
};

struct DDGRecord {
    Mutation mutation;
    double ddg = 0.0;  // kcal/mol, positive = stabilizing
};

// The 19 substitution codes at a position, i.e. the canonical codes minus the
// wild type, in table order.
std::vector<char> substitution_codes(char wild_aa);
int substitution_index(char wild_aa, char mut_aa);  // 0..18

int node_index_for_seq(const ProteinGraph& g, int seq_index);  // -1 if absent

// Uniform ddG evaluation contract shared by the agent and the baselines.
class RewardOracle {
public:
    virtual ~RewardOracle() = default;
    virtual double evaluate(const ProteinGraph& g, const GraphEmbedding& emb,
                            const Mutation& m) = 0;
    // action-mask support: whether (position, mut_aa) has a defined reward
    virtual bool covers(const ProteinGraph& g, int position, char mut_aa) const {
        (void)g, (void)position, (void)mut_aa;
        return true;
    }
};

// Experimental lookup; missing pairs are a hard error (no silent fallback).
class TableOracle : public RewardOracle {
public:
    explicit TableOracle(const std::vector<DDGRecord>& records);
    double evaluate(const ProteinGraph&, const GraphEmbedding&, const Mutation& m) override;
    bool covers(const ProteinGraph&, int position, char mut_aa) const override;

private:
    std::map<std::pair<int, char>, double> table_;  // (position, mut_aa) -> ddg
};

// Deterministic landscape with one planted optimum: 1.0 at the planted
// (position, substitution), -0.1 * |pos - planted_pos| elsewhere.
class PlantedOptimumOracle : public RewardOracle {
public:
    PlantedOptimumOracle(int planted_position, char planted_mut_aa)
        : planted_pos_(planted_position), planted_aa_(planted_mut_aa) {}
    double evaluate(const ProteinGraph&, const GraphEmbedding&, const Mutation& m) override;
    int planted_position() const { return planted_pos_; }
    char planted_mut_aa() const { return planted_aa_; }

private:
    int planted_pos_;
    char planted_aa_;
};

// Mixed-sign landscape: a small explicit positive set, everything else
// mildly negative with a deterministic gradient toward lower indices.
class MixedSignOracle : public RewardOracle {
public:
    explicit MixedSignOracle(std::vector<std::pair<Mutation, double>> positives);
    double evaluate(const ProteinGraph&, const GraphEmbedding&, const Mutation& m) override;
    const std::vector<std::pair<Mutation, double>>& positives() const { return positives_; }

private:
    std::vector<std::pair<Mutation, double>> positives_;
};

// Same topology as g, features zero except the mutated row which carries
// featurize(mut) - featurize(wild).
ProteinGraph build_difference_graph(const ProteinGraph& g, const Mutation& m);

// Cross-attention surrogate: encode the difference graph with the shared
// encoder, attend wild node embeddings over it, pool, concat the wild
// super-node, then a two-hidden-layer MLP head. Params under "surrogate/...".
Tape::Var surrogate_forward_on_tape(Tape& tape, ParameterStore& store, const EncoderConfig& cfg,
                                    Tape::Var wild_nodes, Tape::Var wild_super,
                                    const ProteinGraph& diff_graph,
                                    std::mt19937_64* dropout_rng = nullptr);

double surrogate_forward(ParameterStore& store, const EncoderConfig& cfg,
                         const GraphEmbedding& wild, const ProteinGraph& diff_graph);

class SurrogateOracle : public RewardOracle {
public:
    SurrogateOracle(std::shared_ptr<ParameterStore> store, EncoderConfig cfg)
        : store_(std::move(store)), cfg_(std::move(cfg)) {}
    double evaluate(const ProteinGraph& g, const GraphEmbedding& emb, const Mutation& m) override;

private:
    std::shared_ptr<ParameterStore> store_;
    EncoderConfig cfg_;
};

struct Metrics {
    double rmse = 0.0;
    std::optional<double> r2;   // absent when target variance is zero
    std::optional<double> pcc;  // absent when either vector is constant
    bool degenerate = false;    // constant-target fold
};

Metrics compute_metrics(const std::vector<double>& pred, const std::vector<double>& target);

struct SurrogateTrainConfig {
    EncoderConfig encoder;
    int epochs = 30;
    int batch_size = 32;
    double lr = 1e-3;
    double encoder_lr = 0.1;  // scale for fine-tuning the shared encoder
    int k_folds = 5;
    uint64_t seed = 0;
};

struct SurrogateTrainResult {
    std::vector<Metrics> fold_metrics;
    Metrics mean_metrics;  // over non-degenerate folds
    std::shared_ptr<ParameterStore> params;  // retrained on the full set
    std::vector<double> loss_history;
};

SurrogateTrainResult train_surrogate(const std::vector<DDGRecord>& dataset,
                                     const std::map<std::string, ProteinGraph>& graphs,
                                     const SurrogateTrainConfig& cfg);

// CSV schema: protein_id,chain,position,wild_aa,mut_aa,ddg (header required,
// positions in PDB author numbering). flip_sign accommodates datasets using
// the negative-is-stabilizing convention.
std::vector<DDGRecord> load_ddg_csv(const std::string& path, bool flip_sign = false);
void write_ddg_csv(const std::vector<DDGRecord>& records, const std::string& path);

// Map CSV author numbering onto node indices for one graph; records for other
// proteins or unknown positions are dropped (count reported via *dropped).
std::vector<DDGRecord> records_for_graph(const std::vector<DDGRecord>& records,
                                         const ProteinGraph& g, int* dropped = nullptr);

// Synthetic dataset whose ddg is an exact linear function of the mutation's
// feature delta; useful for learnability checks and the bundled demo data.
std::vector<DDGRecord> synth_linear_dataset(const ProteinGraph& g, int n, uint64_t seed,
                                            std::vector<double>* weights_out = nullptr);

}  // namespace thermorl
