#pragma once

#include <array>
#include <string>
#include <string_view>
#include <stdexcept>

namespace thermorl {

// Canonical amino acid property table, version-stamped. Properties are
// molecular weight (g/mol), pKa (alpha-COOH), pKb (alpha-NH3+), pKx
// (side chain, 0.0 when the side chain is non-ionizable) and pI.
inline constexpr const char* kAminoAcidTableVersion = "aa-props-v1";

inline constexpr int kNumAminoAcids = 20;
inline constexpr int kNumProperties = 5;
inline constexpr int kFeatureDim = kNumAminoAcids + kNumProperties;  // 25
inline constexpr int kNumSubstitutions = kNumAminoAcids - 1;         // 19

struct AminoAcidRecord {
    char one_letter;
    const char* three_letter;
    double molecular_weight;
    double pKa;
    double pKb;
    double pKx;  // 0.0 sentinel for non-ionizable side chains
    double pI;
};

struct UnknownAminoAcid : std::runtime_error {
    explicit UnknownAminoAcid(const std::string& code)
        : std::runtime_error("unknown amino acid: " + code) {}
};

class AminoAcidTable {
public:
    static const AminoAcidTable& instance();

    // one-hot index 0..19, alphabetical by three-letter code
    int index_of(char one_letter) const;
    int index_of_three(std::string_view three_letter) const;
    bool is_canonical_three(std::string_view three_letter) const;

    const AminoAcidRecord& record(int index) const { return records_[index]; }
    char one_letter(int index) const { return records_[index].one_letter; }

    // raw property vector [MW, pKa, pKb, pKx, pI]
    std::array<double, kNumProperties> properties(int index) const;
    // z-score normalized over the 20 table rows
    std::array<double, kNumProperties> normalized_properties(int index) const;

    // 25-dim node feature: 20 one-hot + 5 normalized properties
    std::array<double, kFeatureDim> featurize(char one_letter) const;

private:
    AminoAcidTable();
    std::array<AminoAcidRecord, kNumAminoAcids> records_;
    std::array<double, kNumProperties> prop_mean_;
    std::array<double, kNumProperties> prop_std_;
};

}  // namespace thermorl
