#pragma once

#include <deque>
#include <memory>
#include <optional>

#include "thermorl/oracle.hpp"

namespace thermorl {

struct AllMasked : std::runtime_error {
    AllMasked() : std::runtime_error("no unmasked actions available") {}
};
struct InvalidPosition : std::runtime_error {
    InvalidPosition() : std::runtime_error("position out of range") {}
};

struct AgentConfig {
    double gamma = 0.9;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    int epsilon_decay_steps = 0;  // 0 -> half of the training episodes
    int replay_capacity = 2000;
    int batch_size = 32;
    int target_sync_period = 100;  // h, in train steps
    int max_steps_per_episode = 1;  // K
    int hidden_dim = 64;
    double lr = 1e-3;
    std::optional<double> reward_threshold;  // early episode stop, disabled by default

    void validate() const;
};

struct Experience {
    GraphEmbedding state;
    int a1 = 0;  // position
    int a2 = 0;  // substitution index, 0..18
    char wild_aa = 'A';  // wild residue at a1 when the action was taken
    double reward = 0.0;
    GraphEmbedding next_state;
    char next_wild_aa = 'A';  // residue at a1 in the next state
    bool terminal = true;
};

// FIFO ring with uniform without-replacement batch sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity) : capacity_(capacity) {}
    void push(Experience e);
    int size() const { return static_cast<int>(ring_.size()); }
    long inserted() const { return inserted_; }
    const Experience& at(int i) const { return ring_[i]; }
    std::vector<const Experience*> sample(int batch, std::mt19937_64& rng) const;

private:
    std::deque<Experience> ring_;
    int capacity_;
    long inserted_ = 0;
};

// Per-(position, substitution) availability, built from oracle coverage.
struct ActionMask {
    std::vector<std::vector<bool>> allowed;  // |V| x 19
    bool position_allowed(int j) const;
    static ActionMask full(const ProteinGraph& g);
    static ActionMask from_oracle(const ProteinGraph& g, const RewardOracle& oracle);
};

struct TrajectoryStep {
    Experience experience;
    long hierarchical_evals = 0;  // Q-network evaluations this step (|V| + 19)
    long flat_reference_evals = 0;  // |V| * 19, the flat-agent counterfactual
};

struct EpisodeCurvePoint {
    int episode = 0;
    double reward = 0.0;
    double epsilon = 0.0;
    double loss1 = 0.0;
    double loss2 = 0.0;
};

struct DesignEntry {
    Mutation mutation;
    double q2_score = 0.0;
};

struct DesignResult {
    int greedy_position = 0;
    std::vector<double> position_scores;       // Q1 over all positions
    std::vector<double> substitution_scores;   // Q2 at the greedy position, 19 entries
    std::vector<DesignEntry> ranked;           // substitutions at the greedy position, desc
};

// Hierarchical DQN: Q1 scores positions from [super || node_j], Q2 scores
// substitutions from [super || node_a1 || one-hot(19)]. Two-hidden-layer MLP
// heads with delayed target copies. The encoder is frozen during agent
// training; only the Q heads learn.
class HrlAgent {
public:
    HrlAgent(AgentConfig cfg, EncoderConfig encoder_cfg, uint64_t seed);

    AgentConfig& config() { return cfg_; }
    const AgentConfig& config() const { return cfg_; }
    ParameterStore& store() { return *store_; }
    std::shared_ptr<ParameterStore> store_ptr() { return store_; }
    const ParameterStore& target_store() const { return target_store_; }
    const EncoderConfig& encoder_config() const { return encoder_cfg_; }
    ReplayBuffer& buffer() { return buffer_; }
    std::mt19937_64& rng() { return rng_; }

    GraphEmbedding encode_state(const ProteinGraph& g);

    std::vector<double> q1_scores(const GraphEmbedding& emb, const ActionMask* mask = nullptr);
    std::vector<double> q2_scores(const GraphEmbedding& emb, int a1, char wild_aa,
                                  const ActionMask* mask = nullptr);

    static int select_greedy(const std::vector<double>& scores);  // lowest-index tie-break
    int select_epsilon_greedy(const std::vector<double>& scores, double epsilon);

    struct TdTargets {
        std::vector<double> y1, y2;
    };
    TdTargets td_targets(const std::vector<const Experience*>& batch);

    std::pair<double, double> train_step(const std::vector<const Experience*>& batch);
    void sync_targets();

    std::vector<TrajectoryStep> run_episode(const ProteinGraph& g, RewardOracle& oracle,
                                            double epsilon);

    std::vector<EpisodeCurvePoint> train(const std::vector<ProteinGraph>& corpus,
                                         RewardOracle& oracle, int episodes);

    DesignResult design(const ProteinGraph& g, const RewardOracle* oracle = nullptr);

    long q_eval_count() const { return q_eval_count_; }
    long train_steps() const { return train_steps_; }

private:
    Tape::Var q1_head(Tape& tape, ParameterStore& store, Tape::Var x);
    Tape::Var q2_head(Tape& tape, ParameterStore& store, Tape::Var x);
    std::vector<double> q1_scores_with(ParameterStore& store, const GraphEmbedding& emb,
                                       const ActionMask* mask);
    std::vector<double> q2_scores_with(ParameterStore& store, const GraphEmbedding& emb, int a1,
                                       char wild_aa, const ActionMask* mask);

    AgentConfig cfg_;
    EncoderConfig encoder_cfg_;
    std::shared_ptr<ParameterStore> store_;   // encoder + online Q heads
    ParameterStore target_store_;             // Q-head copies
    ReplayBuffer buffer_;
    std::mt19937_64 rng_;
    long q_eval_count_ = 0;
    long train_steps_ = 0;
};

// Apply a mutation to node features only (topology unchanged); the mutated
// node takes the substituted residue's identity and features.
ProteinGraph apply_mutation(const ProteinGraph& g, const Mutation& m);

void write_learning_curve_csv(const std::vector<EpisodeCurvePoint>& curve,
                              const std::string& path);

}  // namespace thermorl
