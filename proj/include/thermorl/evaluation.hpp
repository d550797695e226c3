#pragma once

#include <string>
#include <vector>

#include "thermorl/protein_graph.hpp"

namespace thermorl {

struct NonFinite : std::runtime_error {
    NonFinite() : std::runtime_error("rewards must be finite") {}
};
struct DimMismatch : std::runtime_error {
    DimMismatch() : std::runtime_error("reward dimensions disagree") {}
};
struct EmptyTrace : std::runtime_error {
    EmptyTrace() : std::runtime_error("empty reward trace") {}
};

struct ProbabilityProfile {
    std::vector<double> p_position;                   // |V|
    std::vector<std::vector<double>> p_mut_given_pos; // |V| x 19
    std::vector<std::vector<double>> p_joint;         // |V| x 19
};

// Stable softmax (max-subtraction) over position-wise rewards.
std::vector<double> position_probabilities(const std::vector<double>& position_rewards,
                                           double temperature = 1.0);

// Row-wise softmax over the per-position mutation rewards.
std::vector<std::vector<double>> conditional_probabilities(
    const std::vector<std::vector<double>>& mutation_rewards, double temperature = 1.0);

ProbabilityProfile joint_profile(const std::vector<double>& position_rewards,
                                 const std::vector<std::vector<double>>& mutation_rewards,
                                 double temperature = 1.0);

struct CumulativeReward {
    double total = 0.0;
    std::vector<double> curve;  // prefix sums
};

CumulativeReward cumulative_reward(const std::vector<double>& trace);

// CSV of (position, wild_aa, p_position) and (position, mut_aa, reward,
// p_joint), plus a JSON summary with the top-k designs by joint probability.
void export_profiles(const ProbabilityProfile& profile,
                     const std::vector<std::vector<double>>& mutation_rewards,
                     const ProteinGraph& g, const std::string& position_csv_path,
                     const std::string& joint_csv_path, const std::string& summary_json_path,
                     int top_k = 10, const std::string& mode_label = "oracle_max");

}  // namespace thermorl
