#include "thermorl/protein_graph.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include <json.hpp>

namespace thermorl {

namespace {

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view field, const std::string& line) {
    std::string t = trim(field);
    try {
        size_t pos = 0;
        double v = std::stod(t, &pos);
        if (pos != t.size()) throw MalformedRecord(line);
        return v;
    } catch (const MalformedRecord&) {
        throw;
    } catch (...) {
        throw MalformedRecord(line);
    }
}

int parse_int(std::string_view field, const std::string& line) {
    std::string t = trim(field);
    try {
        size_t pos = 0;
        int v = std::stoi(t, &pos);
        if (pos != t.size()) throw MalformedRecord(line);
        return v;
    } catch (const MalformedRecord&) {
        throw;
    } catch (...) {
        throw MalformedRecord(line);
    }
}

}  // namespace

ParseResult parse_pdb(const std::string& text, std::optional<char> chain) {
    ParseResult result;
    std::istringstream in(text);
    std::string line;
    std::optional<char> selected = chain;
    std::set<int> seen_seq;  // altLoc / duplicate resolution: first wins
    const auto& table = AminoAcidTable::instance();

    while (std::getline(in, line)) {
        if (line.rfind("ATOM", 0) != 0) continue;
        if (line.size() < 54) throw MalformedRecord(line);
        std::string atom_name = trim(std::string_view(line).substr(12, 4));
        if (atom_name != "CA") continue;
        char chain_id = line[21];
        if (!selected) selected = chain_id;  // first chain encountered
        if (chain_id != *selected) continue;
        std::string res_name = trim(std::string_view(line).substr(17, 3));
        int res_seq = parse_int(std::string_view(line).substr(22, 4), line);
        if (seen_seq.count(res_seq)) continue;  // altLoc: keep first occurrence
        if (!table.is_canonical_three(res_name)) {
            seen_seq.insert(res_seq);
            ++result.skipped_non_canonical;
            continue;
        }
        Residue r;
        r.chain_id = chain_id;
        r.seq_index = res_seq;
        r.aa_code = table.one_letter(table.index_of_three(res_name));
        r.ca_coord.x = parse_double(std::string_view(line).substr(30, 8), line);
        r.ca_coord.y = parse_double(std::string_view(line).substr(38, 8), line);
        r.ca_coord.z = parse_double(std::string_view(line).substr(46, 8), line);
        seen_seq.insert(res_seq);
        result.residues.push_back(r);
    }
    if (result.residues.empty()) throw NoResidues();
    std::stable_sort(result.residues.begin(), result.residues.end(),
                     [](const Residue& a, const Residue& b) { return a.seq_index < b.seq_index; });
    return result;
}

bool ProteinGraph::has_edge(int j, int k) const {
    if (j > k) std::swap(j, k);
    return std::find(edges.begin(), edges.end(), std::make_pair(j, k)) != edges.end();
}

namespace reference {
std::vector<std::pair<int, int>> contact_edges_serial(const std::vector<Residue>& residues,
                                                      double cutoff) {
    std::vector<std::pair<int, int>> edges;
    const int n = static_cast<int>(residues.size());
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k)
            if (distance(residues[j].ca_coord, residues[k].ca_coord) <= cutoff)
                edges.emplace_back(j, k);
    return edges;
}
}  // namespace reference

ProteinGraph build_contact_graph(const std::vector<Residue>& residues, double cutoff,
                                 const std::string& id) {
    const int n = static_cast<int>(residues.size());
    if (n < 2) throw TooFewResidues();

    ProteinGraph g;
    g.id = id;
    g.nodes = residues;
    g.node_features.resize(n);
    const auto& table = AminoAcidTable::instance();
    for (int j = 0; j < n; ++j) g.node_features[j] = table.featurize(residues[j].aa_code);

    // row-parallel enumeration; per-row buckets keep the merged order
    // identical to the serial reference
    std::vector<std::vector<int>> row_partners(n);
#pragma omp parallel for schedule(dynamic, 8)
    for (int j = 0; j < n; ++j) {
        for (int k = j + 1; k < n; ++k)
            if (distance(residues[j].ca_coord, residues[k].ca_coord) <= cutoff)
                row_partners[j].push_back(k);
    }
    for (int j = 0; j < n; ++j)
        for (int k : row_partners[j]) g.edges.emplace_back(j, k);
    return g;
}

std::string graph_to_json(const ProteinGraph& g) {
    nlohmann::json j;
    j["id"] = g.id;
    j["nodes"] = nlohmann::json::array();
    for (int i = 0; i < g.num_nodes(); ++i) {
        const Residue& r = g.nodes[i];
        j["nodes"].push_back({{"index", r.seq_index},
                              {"aa", std::string(1, r.aa_code)},
                              {"coord", {r.ca_coord.x, r.ca_coord.y, r.ca_coord.z}}});
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& [a, b] : g.edges) j["edges"].push_back({a, b});
    return j.dump(2);
}

}  // namespace thermorl
