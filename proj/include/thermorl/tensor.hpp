#pragma once

#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace thermorl {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error("shape mismatch: " + what) {}
};
struct NonScalarLoss : std::runtime_error {
    NonScalarLoss() : std::runtime_error("backward requires a 1x1 loss") {}
};

// Dense row-major 2-D tensor. Row/column vectors are 1xN / Nx1.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), v(size_t(r) * c, fill) {}

    double& at(int r, int c) { return v[size_t(r) * cols + c]; }
    double at(int r, int c) const { return v[size_t(r) * cols + c]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    static Tensor row_vector(const std::vector<double>& vals);
    static Tensor glorot(int r, int c, std::mt19937_64& rng);
};

namespace kernels {
// out = a * b; row-parallel when large, deterministic regardless of thread count
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
// out = a * b^T
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out);
// out = a^T * b
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out);
}  // namespace kernels

namespace reference {
// serial kernels kept as bench/test baselines
void matmul_serial(const Tensor& a, const Tensor& b, Tensor& out);
}  // namespace reference

// Dynamic reverse-mode tape. Ops execute eagerly and record a backward
// closure; backward() sweeps in reverse insertion order, which is a reverse
// topological order by construction.
class Tape {
public:
    using Var = int;

    bool training = true;

    Var input(Tensor t);
    Var zeros(int rows, int cols) { return input(Tensor(rows, cols)); }

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var add_rowvec(Var a, Var row);
    Var scale(Var a, double s);
    Var add_const(Var a, double c);
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var relu_(Var a);
    Var square(Var a);
    // row-wise softmax; mask, when given, is added to the logits (use -inf
    // to zero an entry exactly)
    Var softmax_rows(Var a, const Tensor* mask = nullptr);
    Var dropout(Var a, double rate, std::mt19937_64& rng);
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, int start, int len);
    Var row(Var a, int r);
    Var gather_rows(Var a, std::vector<int> indices);
    Var mean_rows(Var a);  // n x c -> 1 x c
    Var sum_all(Var a);    // -> 1 x 1
    Var mean_all(Var a);   // -> 1 x 1

    const Tensor& val(Var v) const { return nodes_[v].val; }
    const Tensor& grad(Var v) const { return nodes_[v].grad; }
    double scalar(Var v) const;

    // Marks a leaf whose gradient is collected under `name` (accumulating
    // additively if the same name is bound more than once).
    Var leaf(Tensor t, const std::string& name);

    void backward(Var loss);
    const std::map<std::string, Tensor>& gradients() const { return param_grads_; }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void()> back;  // empty for leaves
    };
    std::vector<Node> nodes_;
    std::vector<std::pair<Var, std::string>> named_leaves_;
    std::map<std::string, Tensor> param_grads_;

    Var push(Tensor val, std::function<void()> back = nullptr);
    Tensor& g(Var v) { return nodes_[v].grad; }
};

}  // namespace thermorl
