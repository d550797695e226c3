#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "thermorl/baselines.hpp"
#include "thermorl/config.hpp"
#include "thermorl/evaluation.hpp"

namespace fs = std::filesystem;
using namespace thermorl;

namespace {

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& sets,
                         const std::string& manifest_path) {
    RunConfig cfg;
    if (!manifest_path.empty()) {
        cfg = load_manifest(manifest_path);
    } else if (!config_path.empty()) {
        cfg = RunConfig::from_file(config_path);
    }
    for (const auto& kv : sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

ProteinGraph load_graph(const std::string& pdb_path, const RunConfig& cfg) {
    std::ifstream in(pdb_path);
    if (!in) throw DataError("cannot open PDB file: " + pdb_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::optional<char> chain;
    std::string chain_str = cfg.get_string("chain", "");
    if (!chain_str.empty()) chain = chain_str[0];
    ParseResult parsed;
    try {
        parsed = parse_pdb(text, chain);
    } catch (const std::exception& e) {
        throw DataError(pdb_path + ": " + e.what());
    }
    if (parsed.skipped_non_canonical > 0)
        std::cerr << "warning: skipped " << parsed.skipped_non_canonical
                  << " non-canonical residues in " << pdb_path << "\n";
    return build_contact_graph(parsed.residues, kDefaultContactCutoff, fs::path(pdb_path).stem());
}

std::vector<ProteinGraph> load_graph_corpus(const RunConfig& cfg) {
    std::vector<ProteinGraph> graphs;
    if (cfg.has("data.pdb")) graphs.push_back(load_graph(cfg.require_string("data.pdb"), cfg));
    if (cfg.has("data.pdb_dir")) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(cfg.require_string("data.pdb_dir")))
            if (entry.path().extension() == ".pdb") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& p : files) graphs.push_back(load_graph(p.string(), cfg));
    }
    if (graphs.empty()) throw ConfigError("set data.pdb or data.pdb_dir");
    return graphs;
}

std::unique_ptr<RewardOracle> make_oracle(const RunConfig& cfg, const ProteinGraph& g) {
    std::string kind = cfg.get_string("oracle.kind", "planted");
    if (kind == "planted") {
        int pos = cfg.get_int("oracle.planted_position", g.num_nodes() / 2);
        std::string aa = cfg.get_string("oracle.planted_mut_aa", "K");
        return std::make_unique<PlantedOptimumOracle>(pos, aa.at(0));
    }
    if (kind == "mixed") {
        int pos = cfg.get_int("oracle.planted_position", g.num_nodes() / 2);
        std::vector<std::pair<Mutation, double>> positives;
        for (auto [aa, val] : {std::pair{'K', 0.8}, std::pair{'R', 0.6}}) {
            if (g.nodes[pos].aa_code == aa) continue;
            positives.push_back({{g.id, pos, g.nodes[pos].aa_code, aa}, val});
        }
        return std::make_unique<MixedSignOracle>(std::move(positives));
    }
    if (kind == "table") {
        auto records = load_ddg_csv(cfg.require_string("oracle.table_csv"),
                                    cfg.get_bool("oracle.flip_sign", false));
        int dropped = 0;
        auto mapped = records_for_graph(records, g, &dropped);
        if (mapped.empty()) throw DataError("no table records match protein " + g.id);
        if (dropped > 0)
            std::cerr << "note: " << dropped << " records did not match " << g.id << "\n";
        return std::make_unique<TableOracle>(mapped);
    }
    if (kind == "surrogate") {
        auto store = std::make_shared<ParameterStore>();
        load_weights(*store, cfg.require_string("oracle.surrogate_weights"));
        return std::make_unique<SurrogateOracle>(store, cfg.encoder_config());
    }
    throw ConfigError("oracle.kind must be table|planted|mixed|surrogate, got '" + kind + "'");
}

fs::path make_out_dir(const RunConfig& cfg) {
    fs::path dir = cfg.get_string("out_dir", "runs/out");
    fs::create_directories(dir);
    return dir;
}

int cmd_train_surrogate(const RunConfig& cfg) {
    auto graphs = load_graph_corpus(cfg);
    auto records = load_ddg_csv(cfg.require_string("data.dataset_csv"),
                                cfg.get_bool("oracle.flip_sign", false));
    std::map<std::string, ProteinGraph> graph_map;
    std::vector<DDGRecord> mapped;
    for (const auto& g : graphs) {
        int dropped = 0;
        auto part = records_for_graph(records, g, &dropped);
        mapped.insert(mapped.end(), part.begin(), part.end());
        graph_map.emplace(g.id, g);
    }
    if (mapped.empty()) throw DataError("no dataset records match the loaded proteins");

    SurrogateTrainResult result = train_surrogate(mapped, graph_map, cfg.surrogate_config());

    fs::path dir = make_out_dir(cfg);
    nlohmann::json metrics;
    metrics["folds"] = nlohmann::json::array();
    for (const auto& m : result.fold_metrics) {
        nlohmann::json fm;
        fm["rmse"] = m.rmse;
        if (m.r2) fm["r2"] = *m.r2;
        if (m.pcc) fm["pcc"] = *m.pcc;
        fm["degenerate"] = m.degenerate;
        metrics["folds"].push_back(fm);
    }
    metrics["mean"]["rmse"] = result.mean_metrics.rmse;
    if (result.mean_metrics.r2) metrics["mean"]["r2"] = *result.mean_metrics.r2;
    if (result.mean_metrics.pcc) metrics["mean"]["pcc"] = *result.mean_metrics.pcc;
    std::ofstream mj(dir / "surrogate_metrics.json");
    mj << metrics.dump(2) << "\n";

    save_weights(*result.params, (dir / "surrogate_weights.bin").string());
    write_manifest(cfg, (dir / "manifest.json").string(),
                   {{"kind", "surrogate"}, {"records", std::to_string(mapped.size())}});
    std::cout << "surrogate trained on " << mapped.size() << " records; mean rmse "
              << result.mean_metrics.rmse << "\n";
    return 0;
}

int cmd_train_agent(const RunConfig& cfg, const std::string& resume) {
    auto graphs = load_graph_corpus(cfg);
    auto oracle = make_oracle(cfg, graphs.front());

    HrlAgent agent(cfg.agent_config(), cfg.encoder_config(), cfg.seed());
    int episode_offset = 0;
    if (!resume.empty()) {
        std::map<std::string, std::string> extra;
        load_manifest((fs::path(resume) / "manifest.json").string(), &extra);
        load_weights(agent.store(), (fs::path(resume) / "agent_weights.bin").string());
        agent.sync_targets();
        episode_offset = std::stoi(extra.at("episodes"));
    }

    int episodes = cfg.get_int("train.episodes", 500);
    auto curve = agent.train(graphs, *oracle, episodes);
    for (auto& p : curve) p.episode += episode_offset;

    fs::path dir = make_out_dir(cfg);
    write_learning_curve_csv(curve, (dir / "curve.csv").string());
    save_weights(agent.store(), (dir / "agent_weights.bin").string());
    write_manifest(cfg, (dir / "manifest.json").string(),
                   {{"kind", "agent-checkpoint"},
                    {"episodes", std::to_string(episode_offset + episodes)}});
    std::cout << "trained " << episodes << " episodes; checkpoint in " << dir << "\n";
    return 0;
}

int cmd_design(const RunConfig& base_cfg, const std::string& checkpoint,
               const std::string& pdb_path, int top_k) {
    std::map<std::string, std::string> extra;
    RunConfig cfg = load_manifest((fs::path(checkpoint) / "manifest.json").string(), &extra);
    if (extra.count("kind") && extra["kind"] != "agent-checkpoint")
        throw DataError("checkpoint manifest is not an agent checkpoint");
    for (const auto& [k, v] : base_cfg.values()) cfg.set(k, v);  // CLI overrides

    HrlAgent agent(cfg.agent_config(), cfg.encoder_config(), cfg.seed());
    try {
        load_weights(agent.store(), (fs::path(checkpoint) / "agent_weights.bin").string());
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    agent.sync_targets();

    ProteinGraph g = load_graph(pdb_path, cfg);
    GraphEmbedding emb = agent.encode_state(g);

    // Q-score dump: positions via Q1, the full |V| x 19 table via Q2
    std::vector<double> position_rewards = agent.q1_scores(emb);
    std::vector<std::vector<double>> mutation_rewards;
    for (int j = 0; j < g.num_nodes(); ++j)
        mutation_rewards.push_back(agent.q2_scores(emb, j, g.nodes[j].aa_code));

    ProbabilityProfile profile = joint_profile(position_rewards, mutation_rewards,
                                               cfg.get_double("eval.temperature", 1.0));
    fs::path dir = make_out_dir(cfg);
    std::string stem = (dir / (g.id + "_q1")).string();
    export_profiles(profile, mutation_rewards, g, stem + "_positions.csv", stem + "_joint.csv",
                    stem + "_summary.json", top_k, "q1");

    DesignResult design = agent.design(g);
    std::ofstream out(dir / (g.id + "_designs.csv"));
    out << "rank,position,wild_aa,mut_aa,q2_score\n";
    for (size_t i = 0; i < design.ranked.size(); ++i)
        out << i + 1 << "," << g.nodes[design.ranked[i].mutation.position].seq_index << ","
            << design.ranked[i].mutation.wild_aa << "," << design.ranked[i].mutation.mut_aa << ","
            << design.ranked[i].q2_score << "\n";
    std::cout << "design outputs in " << dir << "\n";
    return 0;
}

MethodFn method_by_name(const std::string& name, const RunConfig& cfg) {
    if (name == "random") {
        return [](const ProteinGraph& g, RewardOracle& oracle, const GraphEmbedding& emb,
                  int budget, uint64_t seed) {
            std::mt19937_64 rng(seed);
            return random_search(g, oracle, emb, budget, rng);
        };
    }
    if (name == "exhaustive") {
        return [](const ProteinGraph& g, RewardOracle& oracle, const GraphEmbedding& emb, int,
                  uint64_t) {
            ExhaustiveResult ex = exhaustive_best(g, oracle, emb);
            SearchResult res;
            res.best = ex.best;
            res.best_reward = ex.best_reward;
            for (const auto& row : ex.table)
                for (double r : row)
                    if (std::isfinite(r)) res.trace.push_back(r);
            double best = -std::numeric_limits<double>::infinity();
            for (double r : res.trace) res.running_best.push_back(best = std::max(best, r));
            return res;
        };
    }
    if (name == "bo-gp") {
        int init = cfg.get_int("bench.init_samples", 5);
        return [init](const ProteinGraph& g, RewardOracle& oracle, const GraphEmbedding& emb,
                      int budget, uint64_t seed) {
            std::mt19937_64 rng(seed);
            return bo_gp_optimize(g, oracle, emb, budget, init, rng);
        };
    }
    throw ConfigError("unknown benchmark method: " + name);
}

int cmd_benchmark(const RunConfig& cfg) {
    auto graphs = load_graph_corpus(cfg);
    auto oracle = make_oracle(cfg, graphs.front());

    std::vector<std::pair<std::string, MethodFn>> methods;
    std::string spec = cfg.get_string("bench.methods", "random,exhaustive,bo-gp");
    std::stringstream ss(spec);
    std::string name;
    while (std::getline(ss, name, ','))
        if (!name.empty()) methods.emplace_back(name, method_by_name(name, cfg));
    if (methods.empty()) throw ConfigError("bench.methods is empty");

    auto rows = benchmark(graphs, methods, *oracle, cfg.get_int("bench.budget", 50),
                          cfg.get_int("bench.repeats", 10), cfg.seed());
    fs::path dir = make_out_dir(cfg);
    write_benchmark_csv(rows, (dir / "benchmark.csv").string());
    write_manifest(cfg, (dir / "manifest.json").string(), {{"kind", "benchmark"}});
    std::cout << "benchmark rows: " << rows.size() << " -> " << (dir / "benchmark.csv") << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    auto graphs = load_graph_corpus(cfg);
    const ProteinGraph& g = graphs.front();
    auto oracle = make_oracle(cfg, g);
    GraphEmbedding emb;

    ExhaustiveResult ex = exhaustive_best(g, *oracle, emb);
    std::string mode = cfg.get_string("eval.position_mode", "oracle_max");
    if (mode != "oracle_max" && mode != "q1")
        throw ConfigError("eval.position_mode must be oracle_max or q1");

    // position-wise reward = max over substitutions at that position
    std::vector<double> position_rewards;
    std::vector<std::vector<double>> mutation_rewards = ex.table;
    for (auto& row : mutation_rewards) {
        double mx = -std::numeric_limits<double>::infinity();
        for (double& r : row) {
            if (!std::isfinite(r)) r = -1e6;  // uncovered pairs get negligible mass
            mx = std::max(mx, r);
        }
        position_rewards.push_back(mx);
    }

    ProbabilityProfile profile = joint_profile(position_rewards, mutation_rewards,
                                               cfg.get_double("eval.temperature", 1.0));
    fs::path dir = make_out_dir(cfg);
    std::string stem = (dir / (g.id + "_" + mode)).string();
    export_profiles(profile, mutation_rewards, g, stem + "_positions.csv", stem + "_joint.csv",
                    stem + "_summary.json", cfg.get_int("design.top_k", 10), mode);
    write_manifest(cfg, (dir / "manifest.json").string(), {{"kind", "eval"}});
    std::cout << "profiles in " << dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ThermoRL: hierarchical Q-learning for stabilizing point mutations"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, resume, checkpoint, pdb_path;
    std::vector<std::string> sets;
    int top_k = 10;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file");
        cmd->add_option("--set", sets, "override config keys (key=value)");
        cmd->add_option("--from-manifest", manifest_path, "re-run a recorded manifest");
    };

    auto* ts = app.add_subcommand("train-surrogate", "k-fold train the ddG surrogate");
    add_common(ts);
    auto* ta = app.add_subcommand("train-agent", "train the hierarchical DQN agent");
    add_common(ta);
    ta->add_option("--resume", resume, "checkpoint directory to continue from");
    auto* de = app.add_subcommand("design", "rank mutations for a protein");
    add_common(de);
    de->add_option("--checkpoint", checkpoint, "agent checkpoint directory")->required();
    de->add_option("--pdb", pdb_path, "PDB file")->required();
    de->add_option("--top-k", top_k, "designs in the JSON summary");
    auto* be = app.add_subcommand("benchmark", "compare search methods");
    add_common(be);
    auto* ev = app.add_subcommand("eval", "probability profiles from oracle rewards");
    add_common(ev);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = resolve_config(config_path, sets, manifest_path);
        if (ts->parsed()) return cmd_train_surrogate(cfg);
        if (ta->parsed()) return cmd_train_agent(cfg, resume);
        if (de->parsed()) return cmd_design(cfg, checkpoint, pdb_path, top_k);
        if (be->parsed()) return cmd_benchmark(cfg);
        if (ev->parsed()) return cmd_eval(cfg);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const NoResidues& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const CorruptFile& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const VersionMismatch& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
