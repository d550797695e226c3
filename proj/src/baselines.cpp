#include "thermorl/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace thermorl {

std::vector<Candidate> candidate_space(const ProteinGraph& g, const RewardOracle& oracle) {
    std::vector<Candidate> out;
    for (int j = 0; j < g.num_nodes(); ++j) {
        char wild = g.nodes[j].aa_code;
        auto codes = substitution_codes(wild);
        for (int c = 0; c < kNumSubstitutions; ++c) {
            if (!oracle.covers(g, j, codes[c])) continue;
            Candidate cand;
            cand.mutation = {g.id, j, wild, codes[c]};
            cand.sub_index = c;
            out.push_back(cand);
        }
    }
    return out;
}

std::vector<double> candidate_features(const ProteinGraph& g, const Candidate& c) {
    const auto& table = AminoAcidTable::instance();
    std::vector<double> f(kCandidateFeatureDim, 0.0);
    f[0] = static_cast<double>(c.mutation.position) / g.num_nodes();
    f[1 + table.index_of(c.mutation.wild_aa)] = 1.0;
    f[21 + table.index_of(c.mutation.mut_aa)] = 1.0;
    auto wild = table.normalized_properties(table.index_of(c.mutation.wild_aa));
    auto mut = table.normalized_properties(table.index_of(c.mutation.mut_aa));
    for (int p = 0; p < kNumProperties; ++p) f[41 + p] = mut[p] - wild[p];
    return f;
}

namespace {
SearchResult result_from_queries(const std::vector<Candidate>& order,
                                 const std::vector<double>& rewards) {
    SearchResult res;
    res.trace = rewards;
    double best = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < rewards.size(); ++i) {
        if (rewards[i] > best) {
            best = rewards[i];
            res.best = order[i].mutation;
        }
        res.running_best.push_back(best);
    }
    res.best_reward = best;
    return res;
}
}  // namespace

SearchResult random_search(const ProteinGraph& g, RewardOracle& oracle,
                           const GraphEmbedding& emb, int budget, std::mt19937_64& rng) {
    if (budget < 1) throw std::runtime_error("budget must be >= 1");
    std::vector<Candidate> space = candidate_space(g, oracle);
    if (space.empty()) throw EmptySpace();
    std::shuffle(space.begin(), space.end(), rng);  // without replacement
    int n = std::min<int>(budget, static_cast<int>(space.size()));
    std::vector<Candidate> order(space.begin(), space.begin() + n);
    std::vector<double> rewards;
    for (const auto& c : order) rewards.push_back(oracle.evaluate(g, emb, c.mutation));
    return result_from_queries(order, rewards);
}

ExhaustiveResult exhaustive_best(const ProteinGraph& g, RewardOracle& oracle,
                                 const GraphEmbedding& emb) {
    ExhaustiveResult res;
    res.table.assign(g.num_nodes(),
                     std::vector<double>(kNumSubstitutions,
                                         -std::numeric_limits<double>::infinity()));
    res.best_reward = -std::numeric_limits<double>::infinity();
    for (const auto& c : candidate_space(g, oracle)) {
        double r = oracle.evaluate(g, emb, c.mutation);
        res.table[c.mutation.position][c.sub_index] = r;
        if (r > res.best_reward) {  // lowest-index tie-break via scan order
            res.best_reward = r;
            res.best = c.mutation;
        }
    }
    if (res.best_reward == -std::numeric_limits<double>::infinity())
        throw EmptySpace();
    return res;
}

double GaussianProcess::kernel(const std::vector<double>& a, const std::vector<double>& b) const {
    double d2 = 0;
    for (size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return signal_var_ * std::exp(-0.5 * d2 / (lengthscale_ * lengthscale_));
}

void GaussianProcess::fit(const std::vector<std::vector<double>>& inputs,
                          const std::vector<double>& targets) {
    const int n = static_cast<int>(inputs.size());
    const int d = static_cast<int>(inputs[0].size());

    // re-standardize features and targets each fit
    feat_mean_.assign(d, 0.0);
    feat_std_.assign(d, 0.0);
    for (const auto& x : inputs)
        for (int j = 0; j < d; ++j) feat_mean_[j] += x[j] / n;
    for (const auto& x : inputs)
        for (int j = 0; j < d; ++j)
            feat_std_[j] += (x[j] - feat_mean_[j]) * (x[j] - feat_mean_[j]) / n;
    for (int j = 0; j < d; ++j) feat_std_[j] = std::max(std::sqrt(feat_std_[j]), 1e-12);

    inputs_.assign(n, std::vector<double>(d));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) inputs_[i][j] = (inputs[i][j] - feat_mean_[j]) / feat_std_[j];

    target_mean_ = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
    double tvar = 0;
    for (double t : targets) tvar += (t - target_mean_) * (t - target_mean_) / n;
    target_std_ = std::max(std::sqrt(tvar), 1e-12);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = (targets[i] - target_mean_) / target_std_;

    // Cholesky with jitter escalation
    for (double jitter = jitter_;; jitter *= 10.0) {
        if (jitter > 1e-4) throw SingularKernel();
        std::vector<std::vector<double>> K(n, std::vector<double>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) {
                double k = kernel(inputs_[i], inputs_[j]);
                K[i][j] = K[j][i] = k + (i == j ? jitter : 0.0);
            }
        chol_.assign(n, std::vector<double>(n, 0.0));
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = K[i][j];
                for (int k = 0; k < j; ++k) s -= chol_[i][k] * chol_[j][k];
                if (i == j) {
                    if (s <= 0) {
                        ok = false;
                        break;
                    }
                    chol_[i][i] = std::sqrt(s);
                } else {
                    chol_[i][j] = s / chol_[j][j];
                }
            }
        }
        if (!ok) continue;
        // alpha = K^-1 y via forward/back substitution
        std::vector<double> tmp(n);
        for (int i = 0; i < n; ++i) {
            double s = y[i];
            for (int k = 0; k < i; ++k) s -= chol_[i][k] * tmp[k];
            tmp[i] = s / chol_[i][i];
        }
        alpha_.assign(n, 0.0);
        for (int i = n - 1; i >= 0; --i) {
            double s = tmp[i];
            for (int k = i + 1; k < n; ++k) s -= chol_[k][i] * alpha_[k];
            alpha_[i] = s / chol_[i][i];
        }
        return;
    }
}

std::pair<double, double> GaussianProcess::posterior(const std::vector<double>& x) const {
    const int n = static_cast<int>(inputs_.size());
    std::vector<double> xs(x.size());
    for (size_t j = 0; j < x.size(); ++j) xs[j] = (x[j] - feat_mean_[j]) / feat_std_[j];
    std::vector<double> k(n);
    for (int i = 0; i < n; ++i) k[i] = kernel(xs, inputs_[i]);
    double mean = 0;
    for (int i = 0; i < n; ++i) mean += k[i] * alpha_[i];
    // v = L^-1 k
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) {
        double s = k[i];
        for (int j = 0; j < i; ++j) s -= chol_[i][j] * v[j];
        v[i] = s / chol_[i][i];
    }
    double var = kernel(xs, xs);
    for (int i = 0; i < n; ++i) var -= v[i] * v[i];
    var = std::max(var, 0.0);  // clamp tiny negatives
    return {mean * target_std_ + target_mean_, var * target_std_ * target_std_};
}

double expected_improvement(double mean, double var, double best_so_far) {
    double sigma = std::sqrt(std::max(var, 0.0));
    double improvement = mean - best_so_far;
    if (sigma < 1e-12) return std::max(improvement, 0.0);  // sigma -> 0 limit
    double z = improvement / sigma;
    double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return std::max(improvement * cdf + sigma * pdf, 0.0);
}

SearchResult bo_gp_optimize(const ProteinGraph& g, RewardOracle& oracle,
                            const GraphEmbedding& emb, int budget, int init_samples,
                            std::mt19937_64& rng) {
    if (init_samples < 2 || budget <= init_samples)
        throw std::runtime_error("need budget > init_samples >= 2");
    std::vector<Candidate> space = candidate_space(g, oracle);
    if (space.empty()) throw EmptySpace();

    std::vector<int> unobserved(space.size());
    std::iota(unobserved.begin(), unobserved.end(), 0);
    std::shuffle(unobserved.begin(), unobserved.end(), rng);

    std::vector<Candidate> order;
    std::vector<double> rewards;
    std::vector<std::vector<double>> observed_x;

    auto query = [&](size_t pos_in_unobserved) {
        int idx = unobserved[pos_in_unobserved];
        unobserved.erase(unobserved.begin() + static_cast<long>(pos_in_unobserved));
        const Candidate& c = space[idx];
        order.push_back(c);
        observed_x.push_back(candidate_features(g, c));
        rewards.push_back(oracle.evaluate(g, emb, c.mutation));
    };

    int n_init = std::min<int>(init_samples, static_cast<int>(space.size()));
    for (int i = 0; i < n_init; ++i) query(0);

    int total = std::min<int>(budget, static_cast<int>(space.size()));
    while (static_cast<int>(order.size()) < total) {
        GaussianProcess gp;
        gp.fit(observed_x, rewards);
        double best = *std::max_element(rewards.begin(), rewards.end());
        size_t pick = 0;
        double best_ei = -1.0;
        for (size_t i = 0; i < unobserved.size(); ++i) {
            auto [mean, var] = gp.posterior(candidate_features(g, space[unobserved[i]]));
            double ei = expected_improvement(mean, var, best);
            if (ei > best_ei) {
                best_ei = ei;
                pick = i;
            }
        }
        query(pick);
    }
    return result_from_queries(order, rewards);
}

std::vector<BenchmarkRow> benchmark(const std::vector<ProteinGraph>& graphs,
                                    const std::vector<std::pair<std::string, MethodFn>>& methods,
                                    RewardOracle& oracle, int budget, int repeats,
                                    uint64_t base_seed) {
    if (methods.empty()) throw std::runtime_error("no methods to benchmark");
    std::vector<BenchmarkRow> rows;
    for (const auto& g : graphs) {
        GraphEmbedding emb;  // the table/synthetic oracles don't consume the embedding
        for (const auto& [name, fn] : methods) {
            for (int rep = 0; rep < repeats; ++rep) {
                auto start = std::chrono::steady_clock::now();
                SearchResult res = fn(g, oracle, emb, budget, base_seed + rep);
                auto stop = std::chrono::steady_clock::now();
                BenchmarkRow row;
                row.method = name;
                row.protein_id = g.id;
                row.repeat = rep;
                row.budget = budget;
                row.best_reward = res.best_reward;
                row.cumulative_reward = std::accumulate(res.trace.begin(), res.trace.end(), 0.0);
                row.seconds = std::chrono::duration<double>(stop - start).count();
                rows.push_back(row);
            }
        }
    }
    return rows;
}

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "method,protein_id,repeat,budget,best_reward,cumulative_reward,seconds\n";
    for (const auto& r : rows)
        out << r.method << "," << r.protein_id << "," << r.repeat << "," << r.budget << ","
            << r.best_reward << "," << r.cumulative_reward << "," << r.seconds << "\n";
}

}  // namespace thermorl
