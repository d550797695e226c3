#include "thermorl/aa.hpp"

#include <cmath>
#include <cstring>

namespace thermorl {

const AminoAcidTable& AminoAcidTable::instance() {
    static AminoAcidTable table;
    return table;
}

AminoAcidTable::AminoAcidTable()
    : records_{{
          // one, three, MW, pKa, pKb, pKx, pI  (alphabetical by 3-letter code)
          {'A', "ALA", 89.094, 2.34, 9.69, 0.00, 6.00},
          {'R', "ARG", 174.203, 2.17, 9.04, 12.48, 10.76},
          {'N', "ASN", 132.119, 2.02, 8.80, 0.00, 5.41},
          {'D', "ASP", 133.104, 1.88, 9.60, 3.65, 2.77},
          {'C', "CYS", 121.154, 1.96, 10.28, 8.18, 5.07},
          {'Q', "GLN", 146.146, 2.17, 9.13, 0.00, 5.65},
          {'E', "GLU", 147.131, 2.19, 9.67, 4.25, 3.22},
          {'G', "GLY", 75.067, 2.34, 9.60, 0.00, 5.97},
          {'H', "HIS", 155.156, 1.82, 9.17, 6.00, 7.59},
          {'I', "ILE", 131.175, 2.36, 9.60, 0.00, 6.02},
          {'L', "LEU", 131.175, 2.36, 9.60, 0.00, 5.98},
          {'K', "LYS", 146.189, 2.18, 8.95, 10.53, 9.74},
          {'M', "MET", 149.208, 2.28, 9.21, 0.00, 5.74},
          {'F', "PHE", 165.192, 1.83, 9.13, 0.00, 5.48},
          {'P', "PRO", 115.132, 1.99, 10.60, 0.00, 6.30},
          {'S', "SER", 105.093, 2.21, 9.15, 0.00, 5.68},
          {'T', "THR", 119.119, 2.09, 9.10, 0.00, 5.60},
          {'W', "TRP", 204.228, 2.83, 9.39, 0.00, 5.89},
          {'Y', "TYR", 181.191, 2.20, 9.11, 10.07, 5.66},
          {'V', "VAL", 117.148, 2.32, 9.62, 0.00, 5.96},
      }} {
    for (int p = 0; p < kNumProperties; ++p) {
        double sum = 0.0;
        for (const auto& r : records_) sum += properties(&r - records_.data())[p];
        prop_mean_[p] = sum / kNumAminoAcids;
        double ss = 0.0;
        for (int i = 0; i < kNumAminoAcids; ++i) {
            double d = properties(i)[p] - prop_mean_[p];
            ss += d * d;
        }
        prop_std_[p] = std::sqrt(ss / kNumAminoAcids);
    }
}

int AminoAcidTable::index_of(char one_letter) const {
    for (int i = 0; i < kNumAminoAcids; ++i)
        if (records_[i].one_letter == one_letter) return i;
    throw UnknownAminoAcid(std::string(1, one_letter));
}

int AminoAcidTable::index_of_three(std::string_view three_letter) const {
    for (int i = 0; i < kNumAminoAcids; ++i)
        if (three_letter == records_[i].three_letter) return i;
    throw UnknownAminoAcid(std::string(three_letter));
}

bool AminoAcidTable::is_canonical_three(std::string_view three_letter) const {
    for (const auto& r : records_)
        if (three_letter == r.three_letter) return true;
    return false;
}

std::array<double, kNumProperties> AminoAcidTable::properties(int index) const {
    const auto& r = records_[index];
    return {r.molecular_weight, r.pKa, r.pKb, r.pKx, r.pI};
}

std::array<double, kNumProperties> AminoAcidTable::normalized_properties(int index) const {
    auto p = properties(index);
    for (int i = 0; i < kNumProperties; ++i) p[i] = (p[i] - prop_mean_[i]) / prop_std_[i];
    return p;
}

std::array<double, kFeatureDim> AminoAcidTable::featurize(char one_letter) const {
    int idx = index_of(one_letter);
    std::array<double, kFeatureDim> feat{};
    feat[idx] = 1.0;
    auto norm = normalized_properties(idx);
    for (int p = 0; p < kNumProperties; ++p) feat[kNumAminoAcids + p] = norm[p];
    return feat;
}

}  // namespace thermorl
