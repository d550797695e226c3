#include "thermorl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace thermorl {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void AgentConfig::validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw std::runtime_error("gamma must be in [0, 1]");
    if (epsilon_end > epsilon_start) throw std::runtime_error("epsilon_end > epsilon_start");
    if (replay_capacity < batch_size) throw std::runtime_error("capacity < batch_size");
    if (max_steps_per_episode < 1) throw std::runtime_error("max_steps_per_episode < 1");
}

void ReplayBuffer::push(Experience e) {
    ring_.push_back(std::move(e));
    ++inserted_;
    while (static_cast<int>(ring_.size()) > capacity_) ring_.pop_front();
}

std::vector<const Experience*> ReplayBuffer::sample(int batch, std::mt19937_64& rng) const {
    if (batch > size()) throw std::runtime_error("batch larger than buffer");
    // partial Fisher-Yates: uniform without replacement within the batch
    std::vector<int> idx(ring_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<const Experience*> out;
    out.reserve(batch);
    for (int i = 0; i < batch; ++i) {
        std::uniform_int_distribution<int> dist(i, static_cast<int>(idx.size()) - 1);
        std::swap(idx[i], idx[dist(rng)]);
        out.push_back(&ring_[idx[i]]);
    }
    return out;
}

bool ActionMask::position_allowed(int j) const {
    return std::any_of(allowed[j].begin(), allowed[j].end(), [](bool b) { return b; });
}

ActionMask ActionMask::full(const ProteinGraph& g) {
    ActionMask m;
    m.allowed.assign(g.num_nodes(), std::vector<bool>(kNumSubstitutions, true));
    return m;
}

ActionMask ActionMask::from_oracle(const ProteinGraph& g, const RewardOracle& oracle) {
    ActionMask m;
    m.allowed.assign(g.num_nodes(), std::vector<bool>(kNumSubstitutions, false));
    for (int j = 0; j < g.num_nodes(); ++j) {
        auto codes = substitution_codes(g.nodes[j].aa_code);
        for (int c = 0; c < kNumSubstitutions; ++c)
            m.allowed[j][c] = oracle.covers(g, j, codes[c]);
    }
    return m;
}

HrlAgent::HrlAgent(AgentConfig cfg, EncoderConfig encoder_cfg, uint64_t seed)
    : cfg_(std::move(cfg)),
      encoder_cfg_(std::move(encoder_cfg)),
      store_(std::make_shared<ParameterStore>(seed)),
      target_store_(seed),
      buffer_(cfg_.replay_capacity),
      rng_(seed ^ 0x9e3779b97f4a7c15ull) {
    cfg_.validate();
    // materialize Q-head weights up front so target sync is well-defined
    const int d = encoder_cfg_.embed_dim;
    Tape tape;
    tape.training = false;
    q1_head(tape, *store_, tape.zeros(1, 2 * d));
    q2_head(tape, *store_, tape.zeros(1, 2 * d + kNumSubstitutions));
    sync_targets();
}

Tape::Var HrlAgent::q1_head(Tape& tape, ParameterStore& store, Tape::Var x) {
    const int d = encoder_cfg_.embed_dim, h = cfg_.hidden_dim;
    Tape::Var a = tape.tanh_(dense(tape, store, "q1/l1", x, 2 * d, h));
    Tape::Var b = tape.tanh_(dense(tape, store, "q1/l2", a, h, h));
    return dense(tape, store, "q1/out", b, h, 1);
}

Tape::Var HrlAgent::q2_head(Tape& tape, ParameterStore& store, Tape::Var x) {
    const int d = encoder_cfg_.embed_dim, h = cfg_.hidden_dim;
    Tape::Var a = tape.tanh_(dense(tape, store, "q2/l1", x, 2 * d + kNumSubstitutions, h));
    Tape::Var b = tape.tanh_(dense(tape, store, "q2/l2", a, h, h));
    return dense(tape, store, "q2/out", b, h, 1);
}

GraphEmbedding HrlAgent::encode_state(const ProteinGraph& g) {
    return encode(g, encoder_cfg_, *store_);
}

std::vector<double> HrlAgent::q1_scores_with(ParameterStore& store, const GraphEmbedding& emb,
                                             const ActionMask* mask) {
    const int n = emb.node_embeddings.rows;
    if (n == 0) throw EmptyGraph();
    const int d = encoder_cfg_.embed_dim;
    Tensor x(n, 2 * d);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < d; ++k) {
            x.at(j, k) = emb.super_node.at(0, k);
            x.at(j, d + k) = emb.node_embeddings.at(j, k);
        }
    }
    Tape tape;
    tape.training = false;
    Tape::Var out = q1_head(tape, store, tape.input(std::move(x)));
    q_eval_count_ += n;
    std::vector<double> scores(n);
    for (int j = 0; j < n; ++j)
        scores[j] = (mask && !mask->position_allowed(j)) ? kNegInf : tape.val(out).at(j, 0);
    return scores;
}

std::vector<double> HrlAgent::q1_scores(const GraphEmbedding& emb, const ActionMask* mask) {
    return q1_scores_with(*store_, emb, mask);
}

std::vector<double> HrlAgent::q2_scores_with(ParameterStore& store, const GraphEmbedding& emb,
                                             int a1, char wild_aa, const ActionMask* mask) {
    const int n = emb.node_embeddings.rows;
    if (a1 < 0 || a1 >= n) throw InvalidPosition();
    const int d = encoder_cfg_.embed_dim;
    Tensor x(kNumSubstitutions, 2 * d + kNumSubstitutions);
    for (int c = 0; c < kNumSubstitutions; ++c) {
        for (int k = 0; k < d; ++k) {
            x.at(c, k) = emb.super_node.at(0, k);
            x.at(c, d + k) = emb.node_embeddings.at(a1, k);
        }
        x.at(c, 2 * d + c) = 1.0;
    }
    Tape tape;
    tape.training = false;
    Tape::Var out = q2_head(tape, store, tape.input(std::move(x)));
    q_eval_count_ += kNumSubstitutions;
    std::vector<double> scores(kNumSubstitutions);
    for (int c = 0; c < kNumSubstitutions; ++c)
        scores[c] = (mask && !mask->allowed[a1][c]) ? kNegInf : tape.val(out).at(c, 0);
    (void)wild_aa;  // substitution index already excludes the wild type
    return scores;
}

std::vector<double> HrlAgent::q2_scores(const GraphEmbedding& emb, int a1, char wild_aa,
                                        const ActionMask* mask) {
    return q2_scores_with(*store_, emb, a1, wild_aa, mask);
}

int HrlAgent::select_greedy(const std::vector<double>& scores) {
    int best = -1;
    for (size_t i = 0; i < scores.size(); ++i)
        if (scores[i] != kNegInf && (best < 0 || scores[i] > scores[best]))
            best = static_cast<int>(i);
    if (best < 0) throw AllMasked();
    return best;
}

int HrlAgent::select_epsilon_greedy(const std::vector<double>& scores, double epsilon) {
    std::vector<int> unmasked;
    for (size_t i = 0; i < scores.size(); ++i)
        if (scores[i] != kNegInf) unmasked.push_back(static_cast<int>(i));
    if (unmasked.empty()) throw AllMasked();
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng_) < epsilon) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(unmasked.size()) - 1);
        return unmasked[pick(rng_)];
    }
    return select_greedy(scores);
}

HrlAgent::TdTargets HrlAgent::td_targets(const std::vector<const Experience*>& batch) {
    TdTargets t;
    for (const Experience* e : batch) {
        if (e->terminal || cfg_.gamma == 0.0) {
            t.y1.push_back(e->reward);
            t.y2.push_back(e->reward);
            continue;
        }
        std::vector<double> next_q1 = q1_scores_with(target_store_, e->next_state, nullptr);
        int greedy_pos = select_greedy(next_q1);
        double v1 = next_q1[greedy_pos];
        std::vector<double> next_q2 =
            q2_scores_with(target_store_, e->next_state, greedy_pos, e->next_wild_aa, nullptr);
        double v2 = *std::max_element(next_q2.begin(), next_q2.end());
        t.y1.push_back(e->reward + cfg_.gamma * v1);
        t.y2.push_back(e->reward + cfg_.gamma * v2);
    }
    return t;
}

std::pair<double, double> HrlAgent::train_step(const std::vector<const Experience*>& batch) {
    if (batch.empty()) throw std::runtime_error("empty batch");
    TdTargets targets = td_targets(batch);
    const int d = encoder_cfg_.embed_dim;
    const int b = static_cast<int>(batch.size());

    Tensor x1(b, 2 * d), x2(b, 2 * d + kNumSubstitutions), y1(b, 1), y2(b, 1);
    for (int i = 0; i < b; ++i) {
        const Experience& e = *batch[i];
        for (int k = 0; k < d; ++k) {
            x1.at(i, k) = e.state.super_node.at(0, k);
            x1.at(i, d + k) = e.state.node_embeddings.at(e.a1, k);
            x2.at(i, k) = e.state.super_node.at(0, k);
            x2.at(i, d + k) = e.state.node_embeddings.at(e.a1, k);
        }
        x2.at(i, 2 * d + e.a2) = 1.0;
        y1.at(i, 0) = targets.y1[i];
        y2.at(i, 0) = targets.y2[i];
    }

    Tape tape;
    Tape::Var p1 = q1_head(tape, *store_, tape.input(std::move(x1)));
    Tape::Var p2 = q2_head(tape, *store_, tape.input(std::move(x2)));
    Tape::Var l1 = tape.mean_all(tape.square(tape.sub(p1, tape.input(std::move(y1)))));
    Tape::Var l2 = tape.mean_all(tape.square(tape.sub(p2, tape.input(std::move(y2)))));
    Tape::Var loss = tape.add(l1, l2);
    tape.backward(loss);
    adam_step(*store_, tape.gradients(), cfg_.lr);

    ++train_steps_;
    if (cfg_.target_sync_period > 0 && train_steps_ % cfg_.target_sync_period == 0) sync_targets();
    return {tape.scalar(l1), tape.scalar(l2)};
}

void HrlAgent::sync_targets() {
    target_store_.entries().clear();
    for (const auto& [name, entry] : store_->entries()) {
        if (name.rfind("q1/", 0) == 0 || name.rfind("q2/", 0) == 0) {
            ParameterStore::Entry copy;
            copy.value = entry.value;
            copy.m = Tensor(entry.value.rows, entry.value.cols);
            copy.v = Tensor(entry.value.rows, entry.value.cols);
            target_store_.entries().emplace(name, std::move(copy));
        }
    }
}

ProteinGraph apply_mutation(const ProteinGraph& g, const Mutation& m) {
    ProteinGraph next = g;
    next.nodes[m.position].aa_code = m.mut_aa;
    next.node_features[m.position] = AminoAcidTable::instance().featurize(m.mut_aa);
    return next;
}

std::vector<TrajectoryStep> HrlAgent::run_episode(const ProteinGraph& g, RewardOracle& oracle,
                                                  double epsilon) {
    std::vector<TrajectoryStep> trajectory;
    ProteinGraph state_graph = g;
    GraphEmbedding emb = encode_state(state_graph);

    for (int step = 0; step < cfg_.max_steps_per_episode; ++step) {
        ActionMask mask = ActionMask::from_oracle(state_graph, oracle);
        long evals_before = q_eval_count_;

        std::vector<double> p_scores = q1_scores(emb, &mask);
        int a1 = select_epsilon_greedy(p_scores, epsilon);
        char wild = state_graph.nodes[a1].aa_code;
        std::vector<double> s_scores = q2_scores(emb, a1, wild, &mask);
        int a2 = select_epsilon_greedy(s_scores, epsilon);

        Mutation m;
        m.protein_id = state_graph.id;
        m.position = a1;
        m.wild_aa = wild;
        m.mut_aa = substitution_codes(wild)[a2];

        double r;
        try {
            r = oracle.evaluate(state_graph, emb, m);
        } catch (const UnknownMutation& e) {
            throw OracleFailure(e.what());
        }

        ProteinGraph next_graph = apply_mutation(state_graph, m);
        GraphEmbedding next_emb = encode_state(next_graph);

        bool terminal = (step == cfg_.max_steps_per_episode - 1) ||
                        (cfg_.reward_threshold && r >= *cfg_.reward_threshold);

        TrajectoryStep ts;
        ts.experience = {emb, a1, a2, wild, r, next_emb, next_graph.nodes[a1].aa_code, terminal};
        ts.hierarchical_evals = q_eval_count_ - evals_before;
        ts.flat_reference_evals = static_cast<long>(state_graph.num_nodes()) * kNumSubstitutions;
        trajectory.push_back(std::move(ts));

        if (terminal) break;
        state_graph = std::move(next_graph);
        emb = std::move(next_emb);
    }
    return trajectory;
}

std::vector<EpisodeCurvePoint> HrlAgent::train(const std::vector<ProteinGraph>& corpus,
                                               RewardOracle& oracle, int episodes) {
    if (corpus.empty()) throw EmptyCorpus();
    int decay_steps = cfg_.epsilon_decay_steps > 0 ? cfg_.epsilon_decay_steps
                                                   : std::max(1, episodes / 2);
    std::vector<EpisodeCurvePoint> curve;
    std::uniform_int_distribution<size_t> pick(0, corpus.size() - 1);

    for (int ep = 0; ep < episodes; ++ep) {
        double frac = std::min(1.0, static_cast<double>(ep) / decay_steps);
        double epsilon = cfg_.epsilon_start + frac * (cfg_.epsilon_end - cfg_.epsilon_start);

        const ProteinGraph& g = corpus[pick(rng_)];
        auto trajectory = run_episode(g, oracle, epsilon);

        EpisodeCurvePoint point;
        point.episode = ep;
        point.epsilon = epsilon;
        for (auto& ts : trajectory) {
            point.reward += ts.experience.reward;
            buffer_.push(std::move(ts.experience));
        }
        if (buffer_.size() >= cfg_.batch_size) {
            auto batch = buffer_.sample(cfg_.batch_size, rng_);
            std::tie(point.loss1, point.loss2) = train_step(batch);
        }
        curve.push_back(point);
    }
    return curve;
}

DesignResult HrlAgent::design(const ProteinGraph& g, const RewardOracle* oracle) {
    if (g.num_nodes() == 0) throw EmptyGraph();
    GraphEmbedding emb = encode_state(g);
    std::optional<ActionMask> mask;
    if (oracle) mask = ActionMask::from_oracle(g, *oracle);

    DesignResult result;
    result.position_scores = q1_scores(emb, mask ? &*mask : nullptr);
    result.greedy_position = select_greedy(result.position_scores);
    char wild = g.nodes[result.greedy_position].aa_code;
    result.substitution_scores =
        q2_scores(emb, result.greedy_position, wild, mask ? &*mask : nullptr);

    auto codes = substitution_codes(wild);
    for (int c = 0; c < kNumSubstitutions; ++c) {
        if (result.substitution_scores[c] == kNegInf) continue;
        DesignEntry entry;
        entry.mutation = {g.id, result.greedy_position, wild, codes[c]};
        entry.q2_score = result.substitution_scores[c];
        result.ranked.push_back(entry);
    }
    std::stable_sort(result.ranked.begin(), result.ranked.end(),
                     [](const DesignEntry& a, const DesignEntry& b) { return a.q2_score > b.q2_score; });
    return result;
}

void write_learning_curve_csv(const std::vector<EpisodeCurvePoint>& curve,
                              const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "episode,reward,epsilon,loss1,loss2\n";
    for (const auto& p : curve)
        out << p.episode << "," << p.reward << "," << p.epsilon << "," << p.loss1 << ","
            << p.loss2 << "\n";
}

}  // namespace thermorl
