#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_util.hpp"

using namespace thermorl;
using namespace thermorl::testutil;

namespace {

EncoderConfig tiny_encoder() {
    EncoderConfig cfg;
    cfg.embed_dim = 8;
    cfg.n_message_layers = 1;
    cfg.n_heads = 2;
    cfg.dropout = 0.0;
    return cfg;
}

AgentConfig tiny_agent() {
    AgentConfig cfg;
    cfg.hidden_dim = 16;
    cfg.replay_capacity = 64;
    cfg.batch_size = 8;
    return cfg;
}

// MLP head re-implementation used as the q-score oracle
double mlp_row(const ParameterStore& store, const std::string& q, const std::vector<double>& x) {
    auto layer = [&](const std::vector<double>& in, const std::string& name, bool act) {
        const Tensor& W = store.get(q + "/" + name + "/W");
        const Tensor& b = store.get(q + "/" + name + "/b");
        std::vector<double> out(W.cols);
        for (int j = 0; j < W.cols; ++j) {
            double s = b.at(0, j);
            for (int i = 0; i < W.rows; ++i) s += in[i] * W.at(i, j);
            out[j] = act ? std::tanh(s) : s;
        }
        return out;
    };
    auto h = layer(layer(layer(x, "l1", true), "l2", true), "out", false);
    return h[0];
}

}  // namespace

TEST_CASE("replay buffer: FIFO eviction at capacity") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) {
        Experience e;
        e.reward = i;
        buf.push(e);
    }
    CHECK(buf.size() == 3);
    CHECK(buf.inserted() == 5);
    CHECK(buf.at(0).reward == doctest::Approx(2.0));
    CHECK(buf.at(1).reward == doctest::Approx(3.0));
    CHECK(buf.at(2).reward == doctest::Approx(4.0));
}

TEST_CASE("replay buffer: sampling is uniform without replacement") {
    ReplayBuffer buf(10);
    for (int i = 0; i < 10; ++i) {
        Experience e;
        e.reward = i;
        buf.push(e);
    }
    std::mt19937_64 rng(1);
    const int draws = 30000, batch = 3;
    std::vector<int> counts(10, 0);
    for (int d = 0; d < draws; ++d) {
        auto batch_ptrs = buf.sample(batch, rng);
        std::set<double> uniq;
        for (auto* e : batch_ptrs) uniq.insert(e->reward);
        CHECK(uniq.size() == batch);  // without replacement
        for (auto* e : batch_ptrs) counts[static_cast<int>(e->reward)]++;
    }
    // each index lands in a batch with p = 0.3; 3 sigma of Binomial(30000, 0.3)
    double expect = draws * 0.3, sigma = std::sqrt(draws * 0.3 * 0.7);
    for (int c : counts) CHECK(std::abs(c - expect) <= 3.0 * sigma);

    CHECK_THROWS(buf.sample(11, rng));
}

TEST_CASE("action mask from oracle coverage") {
    auto g = chain_graph("GAKW");
    TableOracle oracle({{{"toy", 1, 'A', 'W'}, 0.5}, {{"toy", 1, 'A', 'C'}, 0.2}});
    auto mask = ActionMask::from_oracle(g, oracle);
    CHECK(mask.position_allowed(1));
    CHECK_FALSE(mask.position_allowed(0));
    CHECK_FALSE(mask.position_allowed(2));
    int allowed = 0;
    for (int c = 0; c < kNumSubstitutions; ++c)
        if (mask.allowed[1][c]) ++allowed;
    CHECK(allowed == 2);
    CHECK(mask.allowed[1][substitution_index('A', 'W')]);
    CHECK(mask.allowed[1][substitution_index('A', 'C')]);
}

TEST_CASE("q1/q2 scores match a per-row MLP oracle") {
    auto g = chain_graph("GAKWLM");
    HrlAgent agent(tiny_agent(), tiny_encoder(), 5);
    auto emb = agent.encode_state(g);
    const int d = agent.encoder_config().embed_dim;

    auto q1 = agent.q1_scores(emb);
    REQUIRE(static_cast<int>(q1.size()) == g.num_nodes());
    for (int j = 0; j < g.num_nodes(); ++j) {
        std::vector<double> x(2 * d);
        for (int k = 0; k < d; ++k) {
            x[k] = emb.super_node.at(0, k);
            x[d + k] = emb.node_embeddings.at(j, k);
        }
        CHECK(q1[j] == doctest::Approx(mlp_row(agent.store(), "q1", x)).epsilon(1e-10));
    }

    auto q2 = agent.q2_scores(emb, 2, 'K');
    REQUIRE(q2.size() == kNumSubstitutions);
    for (int c = 0; c < kNumSubstitutions; ++c) {
        std::vector<double> x(2 * d + kNumSubstitutions, 0.0);
        for (int k = 0; k < d; ++k) {
            x[k] = emb.super_node.at(0, k);
            x[d + k] = emb.node_embeddings.at(2, k);
        }
        x[2 * d + c] = 1.0;
        CHECK(q2[c] == doctest::Approx(mlp_row(agent.store(), "q2", x)).epsilon(1e-10));
    }
}

TEST_CASE("greedy selection: argmax with lowest-index tie-break") {
    CHECK(HrlAgent::select_greedy({0.1, 0.9, 0.3}) == 1);
    CHECK(HrlAgent::select_greedy({0.5, 0.5, 0.5}) == 0);
    double ninf = -std::numeric_limits<double>::infinity();
    CHECK(HrlAgent::select_greedy({ninf, 0.2, 0.2}) == 1);
    CHECK_THROWS_AS(HrlAgent::select_greedy({ninf, ninf}), AllMasked);
}

TEST_CASE("epsilon-greedy: epsilon 1 is uniform over unmasked actions") {
    HrlAgent agent(tiny_agent(), tiny_encoder(), 3);
    double ninf = -std::numeric_limits<double>::infinity();
    std::vector<double> scores = {0.1, ninf, 0.5, 0.2};
    const int trials = 30000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < trials; ++i) counts[agent.select_epsilon_greedy(scores, 1.0)]++;
    CHECK(counts[1] == 0);  // masked action never chosen
    double expect = trials / 3.0, sigma = std::sqrt(trials * (1.0 / 3.0) * (2.0 / 3.0));
    for (int i : {0, 2, 3}) CHECK(std::abs(counts[i] - expect) <= 3.0 * sigma);

    // epsilon 0 is pure greedy
    for (int i = 0; i < 100; ++i) CHECK(agent.select_epsilon_greedy(scores, 0.0) == 2);
}

TEST_CASE("td targets: terminal and gamma-zero cases collapse to the reward") {
    auto g = chain_graph("GAKW");
    HrlAgent agent(tiny_agent(), tiny_encoder(), 7);
    auto emb = agent.encode_state(g);

    Experience e;
    e.state = emb;
    e.next_state = emb;
    e.a1 = 1;
    e.a2 = 4;
    e.reward = 2.8;
    e.terminal = true;
    auto t = agent.td_targets({&e});
    CHECK(t.y1[0] == doctest::Approx(2.8));
    CHECK(t.y2[0] == doctest::Approx(2.8));

    AgentConfig cfg = tiny_agent();
    cfg.gamma = 0.0;
    HrlAgent agent0(cfg, tiny_encoder(), 7);
    e.terminal = false;
    auto t0 = agent0.td_targets({&e});
    CHECK(t0.y1[0] == doctest::Approx(2.8));
}

TEST_CASE("td targets: non-terminal bootstrap uses the synced target net") {
    auto g = chain_graph("GAKWLM");
    AgentConfig cfg = tiny_agent();
    cfg.gamma = 0.9;
    HrlAgent agent(cfg, tiny_encoder(), 11);
    auto emb = agent.encode_state(g);

    Experience e;
    e.state = emb;
    e.next_state = emb;
    e.next_wild_aa = g.nodes[0].aa_code;
    e.a1 = 0;
    e.a2 = 0;
    e.reward = 0.5;
    e.terminal = false;

    // right after construction target == online, so the bootstrap values can
    // be recomputed from the public online scores
    auto q1 = agent.q1_scores(emb);
    int greedy = HrlAgent::select_greedy(q1);
    auto q2 = agent.q2_scores(emb, greedy, g.nodes[greedy].aa_code);
    double v1 = q1[greedy];
    double v2 = *std::max_element(q2.begin(), q2.end());

    auto t = agent.td_targets({&e});
    CHECK(t.y1[0] == doctest::Approx(0.5 + 0.9 * v1).epsilon(1e-12));
    CHECK(t.y2[0] == doctest::Approx(0.5 + 0.9 * v2).epsilon(1e-12));
}

TEST_CASE("target network stays frozen until sync, then matches bitwise") {
    auto g = chain_graph("GAKWLM");
    AgentConfig cfg = tiny_agent();
    cfg.gamma = 0.9;
    cfg.target_sync_period = 1000000;  // no automatic sync in this test
    HrlAgent agent(cfg, tiny_encoder(), 13);
    auto emb = agent.encode_state(g);

    Experience e;
    e.state = emb;
    e.next_state = emb;
    e.next_wild_aa = g.nodes[0].aa_code;
    e.a1 = 1;
    e.a2 = 2;
    e.reward = 1.0;
    e.terminal = false;
    double y1_before = agent.td_targets({&e}).y1[0];

    std::vector<const Experience*> batch(cfg.batch_size, &e);
    Experience et = e;
    et.terminal = true;
    et.reward = -3.0;
    for (size_t i = 0; i + 1 < batch.size(); i += 2) batch[i] = &et;
    for (int i = 0; i < 5; ++i) agent.train_step(batch);

    // online net moved, target did not: bootstrap target unchanged
    CHECK(agent.td_targets({&e}).y1[0] == y1_before);

    agent.sync_targets();
    auto q1 = agent.q1_scores(emb);
    int greedy = HrlAgent::select_greedy(q1);
    CHECK(agent.td_targets({&e}).y1[0] == e.reward + cfg.gamma * q1[greedy]);
}

TEST_CASE("train_step regresses toward fixed terminal targets") {
    auto g = chain_graph("GAKWLM");
    HrlAgent agent(tiny_agent(), tiny_encoder(), 17);
    auto emb = agent.encode_state(g);
    std::vector<Experience> pool;
    std::mt19937_64 rng(2);
    for (int i = 0; i < g.num_nodes(); ++i) {
        // distinct positions with position-determined rewards, so both heads
        // have a consistent zero-loss fit
        Experience e;
        e.state = emb;
        e.next_state = emb;
        e.a1 = i;
        e.a2 = (3 * i) % kNumSubstitutions;
        e.reward = 0.3 * i - 0.8;
        e.terminal = true;
        pool.push_back(e);
    }
    (void)rng;
    std::vector<const Experience*> batch;
    for (auto& e : pool) batch.push_back(&e);
    auto [l1_first, l2_first] = agent.train_step(batch);
    double l1_last = 0, l2_last = 0;
    for (int i = 0; i < 200; ++i) std::tie(l1_last, l2_last) = agent.train_step(batch);
    CHECK(l1_last < l1_first);
    CHECK(l2_last < l2_first);
    CHECK(l1_last < 0.05);
    CHECK(l2_last < 0.05);
}

TEST_CASE("train_step gradients pass the finite-difference check") {
    auto g = chain_graph("GAKW");
    AgentConfig acfg = tiny_agent();
    acfg.hidden_dim = 8;
    HrlAgent agent(acfg, tiny_encoder(), 19);
    auto emb = agent.encode_state(g);
    Experience e;
    e.state = emb;
    e.next_state = emb;
    e.a1 = 1;
    e.a2 = 3;
    e.reward = 0.7;
    e.terminal = true;

    const int d = agent.encoder_config().embed_dim;
    Tensor x1(1, 2 * d), x2(1, 2 * d + kNumSubstitutions);
    for (int k = 0; k < d; ++k) {
        x1.at(0, k) = x2.at(0, k) = emb.super_node.at(0, k);
        x1.at(0, d + k) = x2.at(0, d + k) = emb.node_embeddings.at(e.a1, k);
    }
    x2.at(0, 2 * d + e.a2) = 1.0;

    // same loss as train_step, rebuilt on a scratch tape over the agent store
    auto run = [&](std::map<std::string, Tensor>* grads) {
        Tape tape;
        Tape::Var p1 = tape.tanh_(dense(tape, agent.store(), "q1/l1", tape.input(x1), 2 * d, 8));
        p1 = dense(tape, agent.store(), "q1/out",
                   tape.tanh_(dense(tape, agent.store(), "q1/l2", p1, 8, 8)), 8, 1);
        Tape::Var p2 = tape.tanh_(dense(tape, agent.store(), "q2/l1", tape.input(x2),
                                        2 * d + kNumSubstitutions, 8));
        p2 = dense(tape, agent.store(), "q2/out",
                   tape.tanh_(dense(tape, agent.store(), "q2/l2", p2, 8, 8)), 8, 1);
        Tape::Var l1 = tape.mean_all(tape.square(tape.add_const(p1, -e.reward)));
        Tape::Var l2 = tape.mean_all(tape.square(tape.add_const(p2, -e.reward)));
        Tape::Var loss = tape.add(l1, l2);
        if (grads) {
            tape.backward(loss);
            *grads = tape.gradients();
        }
        return tape.scalar(loss);
    };
    CHECK(max_grad_rel_error(agent.store(), run) <= 1e-4);
}

TEST_CASE("run_episode: hierarchical eval count is |V| + 19") {
    auto g = chain_graph("GAKWLMNQ");
    HrlAgent agent(tiny_agent(), tiny_encoder(), 23);
    PlantedOptimumOracle oracle(2, 'C');
    auto traj = agent.run_episode(g, oracle, 0.5);
    REQUIRE(traj.size() == 1);  // K = 1 by default
    CHECK(traj[0].experience.terminal);
    CHECK(traj[0].hierarchical_evals == g.num_nodes() + kNumSubstitutions);
    CHECK(traj[0].flat_reference_evals == static_cast<long>(g.num_nodes()) * kNumSubstitutions);
}

TEST_CASE("run_episode: masked actions are never taken") {
    auto g = chain_graph("GAKW");
    HrlAgent agent(tiny_agent(), tiny_encoder(), 29);
    TableOracle oracle({{{"toy", 1, 'A', 'W'}, 0.5}, {{"toy", 3, 'W', 'A'}, -0.2}});
    for (int trial = 0; trial < 200; ++trial) {
        auto traj = agent.run_episode(g, oracle, 1.0);
        const Experience& e = traj[0].experience;
        bool legal = (e.a1 == 1 && substitution_codes('A')[e.a2] == 'W') ||
                     (e.a1 == 3 && substitution_codes('W')[e.a2] == 'A');
        CHECK(legal);
    }
}

TEST_CASE("run_episode: greedy rollout is deterministic across identical agents") {
    auto g = chain_graph("GAKWLM");
    PlantedOptimumOracle oracle(4, 'C');
    HrlAgent a(tiny_agent(), tiny_encoder(), 31), b(tiny_agent(), tiny_encoder(), 31);
    auto ta = a.run_episode(g, oracle, 0.0), tb = b.run_episode(g, oracle, 0.0);
    CHECK(ta[0].experience.a1 == tb[0].experience.a1);
    CHECK(ta[0].experience.a2 == tb[0].experience.a2);
    CHECK(ta[0].experience.reward == tb[0].experience.reward);
}

TEST_CASE("multi-step episode applies the mutation to the state") {
    auto g = chain_graph("GAKWLM");
    AgentConfig cfg = tiny_agent();
    cfg.max_steps_per_episode = 2;
    HrlAgent agent(cfg, tiny_encoder(), 37);
    PlantedOptimumOracle oracle(1, 'C');
    auto traj = agent.run_episode(g, oracle, 0.3);
    REQUIRE(traj.size() == 2);
    CHECK_FALSE(traj[0].experience.terminal);
    CHECK(traj[1].experience.terminal);
    // next-state wild at the acted position equals the substitution taken
    const Experience& e0 = traj[0].experience;
    char expected = substitution_codes(e0.wild_aa)[e0.a2];
    CHECK(e0.next_wild_aa == expected);
}

TEST_CASE("training on a planted landscape improves the greedy design") {
    auto g = chain_graph("GAKWLMNQ");
    AgentConfig cfg = tiny_agent();
    cfg.lr = 3e-3;
    HrlAgent agent(cfg, tiny_encoder(), 41);
    PlantedOptimumOracle oracle(5, 'C');
    auto curve = agent.train({g}, oracle, 1200);
    REQUIRE(curve.size() == 1200);
    auto design = agent.design(g);
    CHECK(design.greedy_position == 5);
    CHECK(design.ranked.front().mutation.mut_aa == 'C');
    // epsilon decayed linearly to its floor
    CHECK(curve.back().epsilon == doctest::Approx(cfg.epsilon_end));
    CHECK(curve.front().epsilon == doctest::Approx(cfg.epsilon_start));
}

TEST_CASE("design: ranked list is sorted and aligned with q2 scores") {
    auto g = chain_graph("GAKW");
    HrlAgent agent(tiny_agent(), tiny_encoder(), 43);
    auto result = agent.design(g);
    REQUIRE(result.ranked.size() == kNumSubstitutions);
    for (size_t i = 1; i < result.ranked.size(); ++i)
        CHECK(result.ranked[i - 1].q2_score >= result.ranked[i].q2_score);
    for (const auto& entry : result.ranked) {
        CHECK(entry.mutation.position == result.greedy_position);
        int c = substitution_index(entry.mutation.wild_aa, entry.mutation.mut_aa);
        CHECK(entry.q2_score == result.substitution_scores[c]);
    }
}

TEST_CASE("config validation rejects bad settings") {
    AgentConfig cfg = tiny_agent();
    cfg.gamma = 1.5;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_agent();
    cfg.epsilon_end = 2.0;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_agent();
    cfg.replay_capacity = 4;
    cfg.batch_size = 8;
    CHECK_THROWS(cfg.validate());
}
