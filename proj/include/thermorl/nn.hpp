#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>

#include "thermorl/tensor.hpp"

namespace thermorl {

struct VersionMismatch : std::runtime_error {
    explicit VersionMismatch(uint32_t got)
        : std::runtime_error("weight file version " + std::to_string(got) + " unsupported") {}
};
struct CorruptFile : std::runtime_error {
    explicit CorruptFile(const std::string& why) : std::runtime_error("corrupt weight file: " + why) {}
};
struct HeadDivisibility : std::runtime_error {
    HeadDivisibility() : std::runtime_error("model dim not divisible by n_heads") {}
};

// Named parameter tensors plus Adam moments and a global step counter.
// ensure() creates missing parameters with Glorot init from the store's rng,
// so layer helpers can lazily build their weights in a deterministic order.
class ParameterStore {
public:
    struct Entry {
        Tensor value, m, v;
    };

    explicit ParameterStore(uint64_t seed = 0) : rng_(seed) {}

    Tensor& ensure(const std::string& name, int rows, int cols);
    Tensor& ensure_zeros(const std::string& name, int rows, int cols);
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }
    long step() const { return step_; }
    void set_step(long s) { step_ = s; }
    std::mt19937_64& rng() { return rng_; }

    friend void adam_step(ParameterStore&, const std::map<std::string, Tensor>&, double, double,
                          double, double, const std::function<double(const std::string&)>&);

private:
    std::map<std::string, Entry> entries_;
    long step_ = 0;
    std::mt19937_64 rng_;
};

// Bias-corrected adaptive-moment update. lr_scale, when given, multiplies the
// learning rate per parameter name (used for reduced-rate encoder fine-tuning).
void adam_step(ParameterStore& store, const std::map<std::string, Tensor>& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
               const std::function<double(const std::string&)>& lr_scale = nullptr);

// Layers. Each takes a parameter-name prefix; weights are created on first
// use via ParameterStore::ensure.

// y = act(x W + b), x: n x in
Tape::Var dense(Tape& tape, ParameterStore& store, const std::string& prefix, Tape::Var x,
                int in_dim, int out_dim);

// Standard GRU: z = sig(xWz + hUz + bz), r = sig(xWr + hUr + br),
// n = tanh(xWn + (r*h)Un + bn), h' = (1-z)*n + z*h. Rows are batch entries.
Tape::Var gru_cell(Tape& tape, ParameterStore& store, const std::string& prefix, Tape::Var h,
                   Tape::Var x, int hidden_dim, int input_dim);

// Scaled dot-product attention with n_heads heads; q: nq x d, kv: nk x d.
// mask (optional, nq x nk additive, -inf to forbid) applies to every head.
Tape::Var multi_head_attention(Tape& tape, ParameterStore& store, const std::string& prefix,
                               Tape::Var q_in, Tape::Var kv_in, int model_dim, int n_heads,
                               const Tensor* mask = nullptr);

// Binds a store parameter as a named tape leaf (grads collected under its
// name; repeated bindings accumulate).
Tape::Var bind_param(Tape& tape, ParameterStore& store, const std::string& name);

// Versioned, checksummed binary weight files (name, shape, little-endian
// float64 payload).
void save_weights(const ParameterStore& store, const std::string& path);
void load_weights(ParameterStore& store, const std::string& path);

}  // namespace thermorl
