// Timing comparison between the OpenMP kernels and their serial references.
#include <chrono>
#include <cstdio>
#include <random>

#include "thermorl/protein_graph.hpp"
#include "thermorl/tensor.hpp"

using namespace thermorl;

namespace {

template <typename F>
double time_ms(F&& fn, int iters) {
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) fn();
    auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / iters;
}

}  // namespace

int main() {
    std::mt19937_64 rng(7);

    for (int n : {64, 256, 512}) {
        Tensor a = Tensor::glorot(n, n, rng);
        Tensor b = Tensor::glorot(n, n, rng);
        Tensor out;
        double parallel = time_ms([&] { kernels::matmul(a, b, out); }, 5);
        double serial = time_ms([&] { reference::matmul_serial(a, b, out); }, 5);
        std::printf("matmul %4dx%-4d  parallel %8.3f ms   serial %8.3f ms   speedup %.2fx\n", n, n,
                    parallel, serial, serial / parallel);
    }

    std::uniform_real_distribution<double> coord(0.0, 60.0);
    for (int n : {200, 800, 2000}) {
        std::vector<Residue> residues(n);
        for (int i = 0; i < n; ++i) {
            residues[i] = {'A', i + 1, 'A', {coord(rng), coord(rng), coord(rng)}};
        }
        double parallel = time_ms([&] { build_contact_graph(residues); }, 5);
        double serial =
            time_ms([&] { reference::contact_edges_serial(residues, kDefaultContactCutoff); }, 5);
        std::printf("contacts n=%-5d parallel %8.3f ms   serial %8.3f ms   speedup %.2fx\n", n,
                    parallel, serial, serial / parallel);
    }
    return 0;
}
