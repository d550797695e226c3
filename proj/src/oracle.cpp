#include "thermorl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace thermorl {

std::vector<char> substitution_codes(char wild_aa) {
    const auto& table = AminoAcidTable::instance();
    table.index_of(wild_aa);  // validate
    std::vector<char> codes;
    codes.reserve(kNumSubstitutions);
    for (int i = 0; i < kNumAminoAcids; ++i)
        if (table.one_letter(i) != wild_aa) codes.push_back(table.one_letter(i));
    return codes;
}

int substitution_index(char wild_aa, char mut_aa) {
    auto codes = substitution_codes(wild_aa);
    for (int i = 0; i < kNumSubstitutions; ++i)
        if (codes[i] == mut_aa) return i;
    throw InvalidMutation("substitution equals wild type or is non-canonical");
}

int node_index_for_seq(const ProteinGraph& g, int seq_index) {
    for (int i = 0; i < g.num_nodes(); ++i)
        if (g.nodes[i].seq_index == seq_index) return i;
    return -1;
}

namespace {
void validate_mutation(const ProteinGraph& g, const Mutation& m) {
    if (m.position < 0 || m.position >= g.num_nodes())
        throw InvalidMutation("position out of range");
    if (m.mut_aa == m.wild_aa) throw InvalidMutation("mut_aa equals wild_aa");
    if (g.nodes[m.position].aa_code != m.wild_aa)
        throw InvalidMutation("wild_aa does not match the graph");
    AminoAcidTable::instance().index_of(m.mut_aa);
}
}  // namespace

TableOracle::TableOracle(const std::vector<DDGRecord>& records) {
    for (const auto& r : records) table_[{r.mutation.position, r.mutation.mut_aa}] = r.ddg;
}

double TableOracle::evaluate(const ProteinGraph& g, const GraphEmbedding&, const Mutation& m) {
    validate_mutation(g, m);
    auto it = table_.find({m.position, m.mut_aa});
    if (it == table_.end())
        throw UnknownMutation(std::to_string(m.position) + std::string(1, m.mut_aa));
    return it->second;
}

bool TableOracle::covers(const ProteinGraph&, int position, char mut_aa) const {
    return table_.count({position, mut_aa}) != 0;
}

double PlantedOptimumOracle::evaluate(const ProteinGraph& g, const GraphEmbedding&,
                                      const Mutation& m) {
    validate_mutation(g, m);
    if (m.position == planted_pos_ && m.mut_aa == planted_aa_) return 1.0;
    return -0.1 * std::abs(m.position - planted_pos_);
}

MixedSignOracle::MixedSignOracle(std::vector<std::pair<Mutation, double>> positives)
    : positives_(std::move(positives)) {}

double MixedSignOracle::evaluate(const ProteinGraph& g, const GraphEmbedding&, const Mutation& m) {
    validate_mutation(g, m);
    for (const auto& [pm, value] : positives_)
        if (pm.position == m.position && pm.mut_aa == m.mut_aa) return value;
    int sub = substitution_index(m.wild_aa, m.mut_aa);
    return -0.2 - 0.01 * m.position - 0.005 * sub;
}

ProteinGraph build_difference_graph(const ProteinGraph& g, const Mutation& m) {
    validate_mutation(g, m);
    const auto& table = AminoAcidTable::instance();
    ProteinGraph diff = g;
    diff.id = g.id + "|diff";
    for (auto& row : diff.node_features) row.fill(0.0);
    auto wild = table.featurize(m.wild_aa);
    auto mut = table.featurize(m.mut_aa);
    for (int j = 0; j < kFeatureDim; ++j) diff.node_features[m.position][j] = mut[j] - wild[j];
    return diff;
}

Tape::Var surrogate_forward_on_tape(Tape& tape, ParameterStore& store, const EncoderConfig& cfg,
                                    Tape::Var wild_nodes, Tape::Var wild_super,
                                    const ProteinGraph& diff_graph,
                                    std::mt19937_64* dropout_rng) {
    Tape::Var diff_nodes = encode_on_tape(tape, store, diff_graph, cfg, nullptr, dropout_rng);
    Tape::Var fused = multi_head_attention(tape, store, "surrogate/xattn", wild_nodes, diff_nodes,
                                           cfg.embed_dim, cfg.n_heads);
    if (dropout_rng && cfg.dropout > 0.0) fused = tape.dropout(fused, cfg.dropout, *dropout_rng);
    Tape::Var pooled = tape.mean_rows(fused);
    Tape::Var ctx = tape.concat_cols(pooled, wild_super);  // 1 x 2d
    int d = cfg.embed_dim;
    Tape::Var h1 = tape.tanh_(dense(tape, store, "surrogate/mlp1", ctx, 2 * d, d));
    Tape::Var h2 = tape.tanh_(dense(tape, store, "surrogate/mlp2", h1, d, d));
    return dense(tape, store, "surrogate/out", h2, d, 1);
}

double surrogate_forward(ParameterStore& store, const EncoderConfig& cfg,
                         const GraphEmbedding& wild, const ProteinGraph& diff_graph) {
    Tape tape;
    tape.training = false;
    Tape::Var wn = tape.input(wild.node_embeddings);
    Tape::Var ws = tape.input(wild.super_node);
    Tape::Var out = surrogate_forward_on_tape(tape, store, cfg, wn, ws, diff_graph);
    return tape.scalar(out);
}

double SurrogateOracle::evaluate(const ProteinGraph& g, const GraphEmbedding& emb,
                                 const Mutation& m) {
    ProteinGraph diff = build_difference_graph(g, m);
    return surrogate_forward(*store_, cfg_, emb, diff);
}

Metrics compute_metrics(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.size() < 2) throw LengthMismatch();
    const size_t n = pred.size();
    double mse = 0, pmean = 0, tmean = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = pred[i] - target[i];
        mse += d * d;
        pmean += pred[i];
        tmean += target[i];
    }
    mse /= n;
    pmean /= n;
    tmean /= n;

    Metrics out;
    out.rmse = std::sqrt(mse);

    double ss_res = 0, ss_tot = 0, sp = 0, st = 0, spt = 0;
    for (size_t i = 0; i < n; ++i) {
        double dt = target[i] - tmean, dp = pred[i] - pmean;
        ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
        ss_tot += dt * dt;
        sp += dp * dp;
        st += dt * dt;
        spt += dp * dt;
    }
    if (ss_tot > 0) {
        out.r2 = 1.0 - ss_res / ss_tot;
    } else {
        out.degenerate = true;  // constant targets
    }
    if (sp > 0 && st > 0) out.pcc = spt / std::sqrt(sp * st);
    return out;
}

namespace {

// One optimization pass over `records`; wild-type embeddings are encoded once
// per distinct protein per batch so gradients reach the shared encoder.
std::vector<double> run_surrogate_training(const std::vector<DDGRecord>& records,
                                           const std::map<std::string, ProteinGraph>& graphs,
                                           const SurrogateTrainConfig& cfg, ParameterStore& store,
                                           std::mt19937_64& rng) {
    std::vector<double> losses;
    std::vector<int> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    auto scale = encoder_lr_scale(cfg.encoder_lr);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            std::map<std::string, std::pair<Tape::Var, Tape::Var>> wild_cache;
            Tape::Var total = -1;
            for (size_t i = start; i < end; ++i) {
                const DDGRecord& rec = records[order[i]];
                auto git = graphs.find(rec.mutation.protein_id);
                if (git == graphs.end())
                    throw OracleFailure("no graph for protein " + rec.mutation.protein_id);
                auto [cit, fresh] = wild_cache.try_emplace(rec.mutation.protein_id);
                if (fresh) {
                    Tape::Var super = -1;
                    Tape::Var nodes =
                        encode_on_tape(tape, store, git->second, cfg.encoder, &super, &rng);
                    cit->second = {nodes, super};
                }
                ProteinGraph diff = build_difference_graph(git->second, rec.mutation);
                Tape::Var pred = surrogate_forward_on_tape(tape, store, cfg.encoder,
                                                           cit->second.first, cit->second.second,
                                                           diff, &rng);
                Tape::Var err = tape.square(tape.add_const(pred, -rec.ddg));
                total = (total < 0) ? err : tape.add(total, err);
            }
            Tape::Var loss = tape.scale(total, 1.0 / static_cast<double>(end - start));
            tape.backward(loss);
            adam_step(store, tape.gradients(), cfg.lr, 0.9, 0.999, 1e-8, scale);
            losses.push_back(tape.scalar(loss));
        }
    }
    return losses;
}

std::vector<double> predict_all(const std::vector<DDGRecord>& records,
                                const std::map<std::string, ProteinGraph>& graphs,
                                const EncoderConfig& ecfg, ParameterStore& store) {
    std::map<std::string, GraphEmbedding> cache;
    std::vector<double> preds;
    preds.reserve(records.size());
    for (const auto& rec : records) {
        const ProteinGraph& g = graphs.at(rec.mutation.protein_id);
        auto [it, fresh] = cache.try_emplace(rec.mutation.protein_id);
        if (fresh) it->second = encode(g, ecfg, store);
        ProteinGraph diff = build_difference_graph(g, rec.mutation);
        preds.push_back(surrogate_forward(store, ecfg, it->second, diff));
    }
    return preds;
}

}  // namespace

SurrogateTrainResult train_surrogate(const std::vector<DDGRecord>& dataset,
                                     const std::map<std::string, ProteinGraph>& graphs,
                                     const SurrogateTrainConfig& cfg) {
    const int k = cfg.k_folds;
    if (static_cast<int>(dataset.size()) < 5 * k) throw TooFewRecords();

    std::mt19937_64 fold_rng(cfg.seed);
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), fold_rng);

    SurrogateTrainResult result;
    std::vector<double> mean_rmse, mean_r2, mean_pcc;
    for (int fold = 0; fold < k; ++fold) {
        std::vector<DDGRecord> train, held;
        for (size_t i = 0; i < order.size(); ++i)
            (static_cast<int>(i) % k == fold ? held : train).push_back(dataset[order[i]]);

        ParameterStore store(cfg.seed + 1000 + fold);
        std::mt19937_64 rng(cfg.seed + 2000 + fold);
        run_surrogate_training(train, graphs, cfg, store, rng);

        std::vector<double> preds = predict_all(held, graphs, cfg.encoder, store);
        std::vector<double> targets;
        for (const auto& r : held) targets.push_back(r.ddg);
        Metrics m = compute_metrics(preds, targets);
        if (!m.degenerate) {
            mean_rmse.push_back(m.rmse);
            if (m.r2) mean_r2.push_back(*m.r2);
            if (m.pcc) mean_pcc.push_back(*m.pcc);
        }
        result.fold_metrics.push_back(m);
    }
    auto avg = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    };
    result.mean_metrics.rmse = avg(mean_rmse);
    if (!mean_r2.empty()) result.mean_metrics.r2 = avg(mean_r2);
    if (!mean_pcc.empty()) result.mean_metrics.pcc = avg(mean_pcc);

    // final params retrained on the full set
    auto final_store = std::make_shared<ParameterStore>(cfg.seed + 3000);
    std::mt19937_64 rng(cfg.seed + 4000);
    result.loss_history = run_surrogate_training(dataset, graphs, cfg, *final_store, rng);
    result.params = final_store;
    return result;
}

std::vector<DDGRecord> load_ddg_csv(const std::string& path, bool flip_sign) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
    if (line.rfind("protein_id,chain,position,wild_aa,mut_aa,ddg", 0) != 0)
        throw std::runtime_error("bad csv header in " + path);
    std::vector<DDGRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string pid, chain, pos, wild, mut, ddg;
        if (!std::getline(ss, pid, ',') || !std::getline(ss, chain, ',') ||
            !std::getline(ss, pos, ',') || !std::getline(ss, wild, ',') ||
            !std::getline(ss, mut, ',') || !std::getline(ss, ddg, ','))
            throw std::runtime_error("bad csv row: " + line);
        DDGRecord r;
        r.mutation.protein_id = pid;
        r.mutation.position = std::stoi(pos);  // author numbering until remapped
        r.mutation.wild_aa = wild.at(0);
        r.mutation.mut_aa = mut.at(0);
        r.ddg = std::stod(ddg) * (flip_sign ? -1.0 : 1.0);
        records.push_back(r);
    }
    return records;
}

void write_ddg_csv(const std::vector<DDGRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "protein_id,chain,position,wild_aa,mut_aa,ddg\n";
    for (const auto& r : records)
        out << r.mutation.protein_id << ",A," << r.mutation.position << "," << r.mutation.wild_aa
            << "," << r.mutation.mut_aa << "," << r.ddg << "\n";
}

std::vector<DDGRecord> records_for_graph(const std::vector<DDGRecord>& records,
                                         const ProteinGraph& g, int* dropped) {
    std::vector<DDGRecord> out;
    int drop = 0;
    for (const auto& r : records) {
        if (r.mutation.protein_id != g.id) {
            ++drop;
            continue;
        }
        int node = node_index_for_seq(g, r.mutation.position);
        if (node < 0 || g.nodes[node].aa_code != r.mutation.wild_aa) {
            ++drop;
            continue;
        }
        DDGRecord mapped = r;
        mapped.mutation.position = node;
        out.push_back(mapped);
    }
    if (dropped) *dropped = drop;
    return out;
}

std::vector<DDGRecord> synth_linear_dataset(const ProteinGraph& g, int n, uint64_t seed,
                                            std::vector<double>* weights_out) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> wdist(0.0, 1.0);
    std::vector<double> w(kFeatureDim);
    for (auto& x : w) x = wdist(rng);
    if (weights_out) *weights_out = w;

    const auto& table = AminoAcidTable::instance();
    std::uniform_int_distribution<int> pos_dist(0, g.num_nodes() - 1);
    std::uniform_int_distribution<int> sub_dist(0, kNumSubstitutions - 1);
    std::vector<DDGRecord> records;
    for (int i = 0; i < n; ++i) {
        DDGRecord r;
        r.mutation.protein_id = g.id;
        r.mutation.position = pos_dist(rng);
        r.mutation.wild_aa = g.nodes[r.mutation.position].aa_code;
        r.mutation.mut_aa = substitution_codes(r.mutation.wild_aa)[sub_dist(rng)];
        auto wild = table.featurize(r.mutation.wild_aa);
        auto mut = table.featurize(r.mutation.mut_aa);
        double ddg = 0;
        for (int j = 0; j < kFeatureDim; ++j) ddg += w[j] * (mut[j] - wild[j]);
        r.ddg = ddg;
        records.push_back(r);
    }
    return records;
}

}  // namespace thermorl
