#include "thermorl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "thermorl/oracle.hpp"

namespace thermorl {

namespace {
std::vector<double> stable_softmax(const std::vector<double>& x, double temperature) {
    for (double v : x)
        if (!std::isfinite(v)) throw NonFinite();
    double mx = *std::max_element(x.begin(), x.end());
    std::vector<double> out(x.size());
    double sum = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp((x[i] - mx) / temperature);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}
}  // namespace

std::vector<double> position_probabilities(const std::vector<double>& position_rewards,
                                           double temperature) {
    if (position_rewards.empty()) throw EmptyTrace();
    return stable_softmax(position_rewards, temperature);
}

std::vector<std::vector<double>> conditional_probabilities(
    const std::vector<std::vector<double>>& mutation_rewards, double temperature) {
    std::vector<std::vector<double>> out;
    out.reserve(mutation_rewards.size());
    for (const auto& row : mutation_rewards) out.push_back(stable_softmax(row, temperature));
    return out;
}

ProbabilityProfile joint_profile(const std::vector<double>& position_rewards,
                                 const std::vector<std::vector<double>>& mutation_rewards,
                                 double temperature) {
    if (position_rewards.size() != mutation_rewards.size()) throw DimMismatch();
    for (const auto& row : mutation_rewards)
        if (row.size() != static_cast<size_t>(kNumSubstitutions)) throw DimMismatch();
    ProbabilityProfile p;
    p.p_position = position_probabilities(position_rewards, temperature);
    p.p_mut_given_pos = conditional_probabilities(mutation_rewards, temperature);
    p.p_joint.resize(position_rewards.size());
    for (size_t j = 0; j < position_rewards.size(); ++j) {
        p.p_joint[j].resize(p.p_mut_given_pos[j].size());
        for (size_t c = 0; c < p.p_mut_given_pos[j].size(); ++c)
            p.p_joint[j][c] = p.p_position[j] * p.p_mut_given_pos[j][c];
    }
    return p;
}

CumulativeReward cumulative_reward(const std::vector<double>& trace) {
    if (trace.empty()) throw EmptyTrace();
    CumulativeReward out;
    for (double r : trace) {
        out.total += r;
        out.curve.push_back(out.total);
    }
    return out;
}

void export_profiles(const ProbabilityProfile& profile,
                     const std::vector<std::vector<double>>& mutation_rewards,
                     const ProteinGraph& g, const std::string& position_csv_path,
                     const std::string& joint_csv_path, const std::string& summary_json_path,
                     int top_k, const std::string& mode_label) {
    if (profile.p_position.size() != static_cast<size_t>(g.num_nodes())) throw DimMismatch();

    {
        std::ofstream out(position_csv_path);
        if (!out) throw std::runtime_error("cannot open " + position_csv_path);
        out << "position,wild_aa,p_position\n";
        out.precision(17);
        for (int j = 0; j < g.num_nodes(); ++j)
            out << g.nodes[j].seq_index << "," << g.nodes[j].aa_code << ","
                << profile.p_position[j] << "\n";
    }

    struct Cell {
        int j, c;
        double p;
    };
    std::vector<Cell> cells;
    {
        std::ofstream out(joint_csv_path);
        if (!out) throw std::runtime_error("cannot open " + joint_csv_path);
        out << "position,mut_aa,reward,p_joint\n";
        out.precision(17);
        for (int j = 0; j < g.num_nodes(); ++j) {
            auto codes = substitution_codes(g.nodes[j].aa_code);
            for (size_t c = 0; c < profile.p_joint[j].size(); ++c) {
                out << g.nodes[j].seq_index << "," << codes[c] << "," << mutation_rewards[j][c]
                    << "," << profile.p_joint[j][c] << "\n";
                cells.push_back({j, static_cast<int>(c), profile.p_joint[j][c]});
            }
        }
    }

    std::stable_sort(cells.begin(), cells.end(),
                     [](const Cell& a, const Cell& b) { return a.p > b.p; });
    int k = std::min<int>(top_k, static_cast<int>(cells.size()));
    nlohmann::json summary;
    summary["protein_id"] = g.id;
    summary["position_reward_mode"] = mode_label;
    summary["top_designs"] = nlohmann::json::array();
    for (int i = 0; i < k; ++i) {
        const Cell& cell = cells[i];
        auto codes = substitution_codes(g.nodes[cell.j].aa_code);
        summary["top_designs"].push_back({{"position", g.nodes[cell.j].seq_index},
                                          {"wild_aa", std::string(1, g.nodes[cell.j].aa_code)},
                                          {"mut_aa", std::string(1, codes[cell.c])},
                                          {"reward", mutation_rewards[cell.j][cell.c]},
                                          {"p_joint", cell.p}});
    }
    std::ofstream out(summary_json_path);
    if (!out) throw std::runtime_error("cannot open " + summary_json_path);
    out << summary.dump(2) << "\n";
}

}  // namespace thermorl
