#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermorl/aa.hpp"

namespace thermorl {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline double distance(const Vec3& a, const Vec3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct Residue {
    char chain_id = ' ';
    int seq_index = 0;  // 1-based author numbering from the PDB file
    char aa_code = 'A';
    Vec3 ca_coord;
};

struct ParseResult {
    std::vector<Residue> residues;
    int skipped_non_canonical = 0;
};

struct NoResidues : std::runtime_error {
    NoResidues() : std::runtime_error("no CA ATOM records found") {}
};
struct MalformedRecord : std::runtime_error {
    explicit MalformedRecord(const std::string& line)
        : std::runtime_error("malformed ATOM record: " + line) {}
};
struct TooFewResidues : std::runtime_error {
    TooFewResidues() : std::runtime_error("need at least 2 residues") {}
};

// Fixed-column PDB v3.3 ATOM parsing, CA atoms only. Default chain = first
// chain encountered; altLoc duplicates resolve to the first occurrence.
ParseResult parse_pdb(const std::string& text, std::optional<char> chain = std::nullopt);

struct ProteinGraph {
    std::string id;
    std::vector<Residue> nodes;
    std::vector<std::array<double, kFeatureDim>> node_features;  // |V| x 25
    std::vector<std::pair<int, int>> edges;                      // j < k

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    bool has_edge(int j, int k) const;
};

inline constexpr double kDefaultContactCutoff = 8.0;  // angstroms, inclusive

ProteinGraph build_contact_graph(const std::vector<Residue>& residues,
                                 double cutoff = kDefaultContactCutoff,
                                 const std::string& id = "");

// JSON export: {id, nodes:[{index, aa, coord}], edges:[[j,k]]}
std::string graph_to_json(const ProteinGraph& g);

namespace reference {
// Serial O(n^2) all-pairs edge enumeration, kept as the test oracle for the
// parallel builder.
std::vector<std::pair<int, int>> contact_edges_serial(const std::vector<Residue>& residues,
                                                      double cutoff);
}  // namespace reference

}  // namespace thermorl
