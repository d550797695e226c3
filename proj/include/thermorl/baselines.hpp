#pragma once

#include <functional>

#include "thermorl/agent.hpp"

namespace thermorl {

struct EmptySpace : std::runtime_error {
    EmptySpace() : std::runtime_error("no unmasked candidates") {}
};
struct SingularKernel : std::runtime_error {
    SingularKernel() : std::runtime_error("kernel matrix not positive definite") {}
};

struct Candidate {
    Mutation mutation;
    int sub_index = 0;
};

// All unmasked (position, substitution) pairs in deterministic order.
std::vector<Candidate> candidate_space(const ProteinGraph& g, const RewardOracle& oracle);

// 46-dim GP feature: [pos/|V| || one-hot(20) wild || one-hot(20) mut ||
// 5-dim property delta].
std::vector<double> candidate_features(const ProteinGraph& g, const Candidate& c);
inline constexpr int kCandidateFeatureDim = 46;

struct SearchResult {
    Mutation best;
    double best_reward = 0.0;
    std::vector<double> trace;          // reward per query, in query order
    std::vector<double> running_best;   // prefix max of trace
};

SearchResult random_search(const ProteinGraph& g, RewardOracle& oracle,
                           const GraphEmbedding& emb, int budget, std::mt19937_64& rng);

struct ExhaustiveResult {
    Mutation best;
    double best_reward = 0.0;
    std::vector<std::vector<double>> table;  // |V| x 19
};

ExhaustiveResult exhaustive_best(const ProteinGraph& g, RewardOracle& oracle,
                                 const GraphEmbedding& emb);

// Fixed-hyperparameter GP on standardized features/targets: RBF kernel,
// lengthscale 1, signal variance 1, jitter escalated from 1e-6 to 1e-4.
class GaussianProcess {
public:
    GaussianProcess(double lengthscale = 1.0, double signal_var = 1.0, double jitter = 1e-6)
        : lengthscale_(lengthscale), signal_var_(signal_var), jitter_(jitter) {}

    void fit(const std::vector<std::vector<double>>& inputs, const std::vector<double>& targets);
    // posterior over a query point, in the original (unstandardized) target scale
    std::pair<double, double> posterior(const std::vector<double>& x) const;  // (mean, var)

private:
    double kernel(const std::vector<double>& a, const std::vector<double>& b) const;
    double lengthscale_, signal_var_, jitter_;
    std::vector<std::vector<double>> inputs_;       // standardized
    std::vector<double> feat_mean_, feat_std_;
    double target_mean_ = 0.0, target_std_ = 1.0;
    std::vector<std::vector<double>> chol_;         // lower Cholesky of K + jitter I
    std::vector<double> alpha_;                      // K^-1 y (standardized)
};

// EI(x) = (mu - best) Phi(z) + sigma phi(z), z = (mu - best) / sigma; 0 at sigma = 0.
double expected_improvement(double mean, double var, double best_so_far);

SearchResult bo_gp_optimize(const ProteinGraph& g, RewardOracle& oracle,
                            const GraphEmbedding& emb, int budget, int init_samples,
                            std::mt19937_64& rng);

struct BenchmarkRow {
    std::string method;
    std::string protein_id;
    int repeat = 0;
    int budget = 0;
    double best_reward = 0.0;
    double cumulative_reward = 0.0;
    double seconds = 0.0;
};

using MethodFn = std::function<SearchResult(const ProteinGraph&, RewardOracle&,
                                            const GraphEmbedding&, int budget, uint64_t seed)>;

std::vector<BenchmarkRow> benchmark(const std::vector<ProteinGraph>& graphs,
                                    const std::vector<std::pair<std::string, MethodFn>>& methods,
                                    RewardOracle& oracle, int budget, int repeats,
                                    uint64_t base_seed);

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const std::string& path);

}  // namespace thermorl
