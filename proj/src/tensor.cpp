#include "thermorl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace thermorl {

Tensor Tensor::row_vector(const std::vector<double>& vals) {
    Tensor t(1, static_cast<int>(vals.size()));
    t.v = vals;
    return t;
}

Tensor Tensor::glorot(int r, int c, std::mt19937_64& rng) {
    Tensor t(r, c);
    double limit = std::sqrt(6.0 / (r + c));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& x : t.v) x = dist(rng);
    return t;
}

namespace kernels {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.cols != b.rows) throw ShapeMismatch("matmul");
    out = Tensor(a.rows, b.cols);
#pragma omp parallel for schedule(static) if (a.rows > 8 && size_t(a.rows) * a.cols * b.cols > 32768)
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.v[size_t(i) * a.cols];
        double* orow = &out.v[size_t(i) * b.cols];
        for (int k = 0; k < a.cols; ++k) {
            double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.v[size_t(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.cols != b.cols) throw ShapeMismatch("matmul_nt");
    out = Tensor(a.rows, b.rows);
#pragma omp parallel for schedule(static) if (a.rows > 8 && size_t(a.rows) * a.cols * b.rows > 32768)
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) {
            double s = 0;
            for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(j, k);
            out.at(i, j) = s;
        }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.rows != b.rows) throw ShapeMismatch("matmul_tn");
    out = Tensor(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k)
        for (int i = 0; i < a.cols; ++i) {
            double aki = a.at(k, i);
            if (aki == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aki * b.at(k, j);
        }
}

}  // namespace kernels

namespace reference {
void matmul_serial(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.cols != b.rows) throw ShapeMismatch("matmul");
    out = Tensor(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
        }
}
}  // namespace reference

Tape::Var Tape::push(Tensor val, std::function<void()> back) {
    nodes_.push_back({std::move(val), Tensor(), std::move(back)});
    Var id = static_cast<Var>(nodes_.size()) - 1;
    nodes_[id].grad = Tensor(nodes_[id].val.rows, nodes_[id].val.cols);
    return id;
}

Tape::Var Tape::input(Tensor t) { return push(std::move(t)); }

Tape::Var Tape::leaf(Tensor t, const std::string& name) {
    Var v = push(std::move(t));
    named_leaves_.emplace_back(v, name);
    return v;
}

double Tape::scalar(Var v) const {
    const Tensor& t = nodes_[v].val;
    if (t.rows != 1 || t.cols != 1) throw ShapeMismatch("scalar");
    return t.v[0];
}

Tape::Var Tape::matmul(Var a, Var b) {
    Tensor out;
    kernels::matmul(val(a), val(b), out);
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        Tensor da, db;
        kernels::matmul_nt(g(o), val(b), da);  // dA = dO * B^T
        kernels::matmul_tn(val(a), g(o), db);  // dB = A^T * dO
        for (size_t i = 0; i < da.size(); ++i) g(a).v[i] += da.v[i];
        for (size_t i = 0; i < db.size(); ++i) g(b).v[i] += db.v[i];
    };
    return o;
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
    Tensor out;
    kernels::matmul_nt(val(a), val(b), out);
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        Tensor da, db;
        kernels::matmul(g(o), val(b), da);     // dA = dO * B
        kernels::matmul_tn(g(o), val(a), db);  // dB = dO^T * A
        for (size_t i = 0; i < da.size(); ++i) g(a).v[i] += da.v[i];
        for (size_t i = 0; i < db.size(); ++i) g(b).v[i] += db.v[i];
    };
    return o;
}

Tape::Var Tape::add(Var a, Var b) {
    if (!val(a).same_shape(val(b))) throw ShapeMismatch("add");
    Tensor out = val(a);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += val(b).v[i];
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        for (size_t i = 0; i < g(o).size(); ++i) {
            g(a).v[i] += g(o).v[i];
            g(b).v[i] += g(o).v[i];
        }
    };
    return o;
}

Tape::Var Tape::sub(Var a, Var b) {
    if (!val(a).same_shape(val(b))) throw ShapeMismatch("sub");
    Tensor out = val(a);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] -= val(b).v[i];
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        for (size_t i = 0; i < g(o).size(); ++i) {
            g(a).v[i] += g(o).v[i];
            g(b).v[i] -= g(o).v[i];
        }
    };
    return o;
}

Tape::Var Tape::mul(Var a, Var b) {
    if (!val(a).same_shape(val(b))) throw ShapeMismatch("mul");
    Tensor out = val(a);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= val(b).v[i];
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        for (size_t i = 0; i < g(o).size(); ++i) {
            g(a).v[i] += g(o).v[i] * val(b).v[i];
            g(b).v[i] += g(o).v[i] * val(a).v[i];
        }
    };
    return o;
}

Tape::Var Tape::add_rowvec(Var a, Var rowv) {
    const Tensor& r = val(rowv);
    if (r.rows != 1 || r.cols != val(a).cols) throw ShapeMismatch("add_rowvec");
    Tensor out = val(a);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += r.at(0, j);
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, rowv, o] {
        for (size_t i = 0; i < g(o).size(); ++i) g(a).v[i] += g(o).v[i];
        for (int i = 0; i < g(o).rows; ++i)
            for (int j = 0; j < g(o).cols; ++j) g(rowv).at(0, j) += g(o).at(i, j);
    };
    return o;
}

Tape::Var Tape::scale(Var a, double s) {
    Tensor out = val(a);
    for (auto& x : out.v) x *= s;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, s] {
        for (size_t i = 0; i < g(o).size(); ++i) g(a).v[i] += s * g(o).v[i];
    };
    return o;
}

Tape::Var Tape::add_const(Var a, double c) {
    Tensor out = val(a);
    for (auto& x : out.v) x += c;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        for (size_t i = 0; i < g(o).size(); ++i) g(a).v[i] += g(o).v[i];
    };
    return o;
}

Tape::Var Tape::tanh_(Var a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = std::tanh(x);
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        for (size_t i = 0; i < g(o).size(); ++i) {
            double y = val(o).v[i];
            g(a).v[i] += g(o).v[i] * (1.0 - y * y);
        }
    };
    return o;
}

Tape::Var Tape::sigmoid_(Var a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        for (size_t i = 0; i < g(o).size(); ++i) {
            double y = val(o).v[i];
            g(a).v[i] += g(o).v[i] * y * (1.0 - y);
        }
    };
    return o;
}

Tape::Var Tape::relu_(Var a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = x > 0 ? x : 0.0;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        for (size_t i = 0; i < g(o).size(); ++i)
            if (val(a).v[i] > 0) g(a).v[i] += g(o).v[i];
    };
    return o;
}

Tape::Var Tape::square(Var a) {
    Tensor out = val(a);
    for (auto& x : out.v) x *= x;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        for (size_t i = 0; i < g(o).size(); ++i) g(a).v[i] += 2.0 * val(a).v[i] * g(o).v[i];
    };
    return o;
}

Tape::Var Tape::softmax_rows(Var a, const Tensor* mask) {
    Tensor out = val(a);
    if (mask && !mask->same_shape(out)) throw ShapeMismatch("softmax mask");
    for (int i = 0; i < out.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < out.cols; ++j) {
            double lj = out.at(i, j) + (mask ? mask->at(i, j) : 0.0);
            out.at(i, j) = lj;
            mx = std::max(mx, lj);
        }
        double sum = 0;
        for (int j = 0; j < out.cols; ++j) {
            double e = std::exp(out.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < out.cols; ++j) out.at(i, j) /= sum;
    }
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        // dL/dx = y * (dL/dy - sum_j(dL/dy_j * y_j)) per row
        for (int i = 0; i < g(o).rows; ++i) {
            double dot = 0;
            for (int j = 0; j < g(o).cols; ++j) dot += g(o).at(i, j) * val(o).at(i, j);
            for (int j = 0; j < g(o).cols; ++j)
                g(a).at(i, j) += val(o).at(i, j) * (g(o).at(i, j) - dot);
        }
    };
    return o;
}

Tape::Var Tape::dropout(Var a, double rate, std::mt19937_64& rng) {
    if (!training || rate <= 0.0) return a;  // identity in eval mode / at rate 0
    Tensor out = val(a);
    auto mask = std::make_shared<std::vector<char>>(out.size());
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    double keep_scale = 1.0 / (1.0 - rate);  // inverted scaling at train time
    for (size_t i = 0; i < out.size(); ++i) {
        bool keep = dist(rng) >= rate;
        (*mask)[i] = keep;
        out.v[i] = keep ? out.v[i] * keep_scale : 0.0;
    }
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, mask, keep_scale] {
        for (size_t i = 0; i < g(o).size(); ++i)
            if ((*mask)[i]) g(a).v[i] += g(o).v[i] * keep_scale;
    };
    return o;
}

Tape::Var Tape::concat_cols(Var a, Var b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (ta.rows != tb.rows) throw ShapeMismatch("concat_cols");
    Tensor out(ta.rows, ta.cols + tb.cols);
    for (int i = 0; i < ta.rows; ++i) {
        for (int j = 0; j < ta.cols; ++j) out.at(i, j) = ta.at(i, j);
        for (int j = 0; j < tb.cols; ++j) out.at(i, ta.cols + j) = tb.at(i, j);
    }
    int acols = ta.cols;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o, acols] {
        for (int i = 0; i < g(o).rows; ++i) {
            for (int j = 0; j < acols; ++j) g(a).at(i, j) += g(o).at(i, j);
            for (int j = 0; j < g(b).cols; ++j) g(b).at(i, j) += g(o).at(i, acols + j);
        }
    };
    return o;
}

Tape::Var Tape::slice_cols(Var a, int start, int len) {
    const Tensor& ta = val(a);
    if (start < 0 || start + len > ta.cols) throw ShapeMismatch("slice_cols");
    Tensor out(ta.rows, len);
    for (int i = 0; i < ta.rows; ++i)
        for (int j = 0; j < len; ++j) out.at(i, j) = ta.at(i, start + j);
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, start, len] {
        for (int i = 0; i < g(o).rows; ++i)
            for (int j = 0; j < len; ++j) g(a).at(i, start + j) += g(o).at(i, j);
    };
    return o;
}

Tape::Var Tape::row(Var a, int r) {
    const Tensor& ta = val(a);
    if (r < 0 || r >= ta.rows) throw ShapeMismatch("row");
    Tensor out(1, ta.cols);
    for (int j = 0; j < ta.cols; ++j) out.at(0, j) = ta.at(r, j);
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, r] {
        for (int j = 0; j < g(o).cols; ++j) g(a).at(r, j) += g(o).at(0, j);
    };
    return o;
}

Tape::Var Tape::gather_rows(Var a, std::vector<int> indices) {
    const Tensor& ta = val(a);
    Tensor out(static_cast<int>(indices.size()), ta.cols);
    for (size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < ta.cols; ++j) out.at(static_cast<int>(i), j) = ta.at(indices[i], j);
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, indices = std::move(indices)] {
        for (size_t i = 0; i < indices.size(); ++i)
            for (int j = 0; j < g(o).cols; ++j)
                g(a).at(indices[i], j) += g(o).at(static_cast<int>(i), j);
    };
    return o;
}

Tape::Var Tape::mean_rows(Var a) {
    const Tensor& ta = val(a);
    Tensor out(1, ta.cols);
    for (int i = 0; i < ta.rows; ++i)
        for (int j = 0; j < ta.cols; ++j) out.at(0, j) += ta.at(i, j);
    for (auto& x : out.v) x /= ta.rows;
    int n = ta.rows;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, n] {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < g(o).cols; ++j) g(a).at(i, j) += g(o).at(0, j) / n;
    };
    return o;
}

Tape::Var Tape::sum_all(Var a) {
    double s = 0;
    for (double x : val(a).v) s += x;
    Tensor out(1, 1);
    out.v[0] = s;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        for (auto& x : g(a).v) x += g(o).v[0];
    };
    return o;
}

Tape::Var Tape::mean_all(Var a) {
    double n = static_cast<double>(val(a).size());
    double s = 0;
    for (double x : val(a).v) s += x;
    Tensor out(1, 1);
    out.v[0] = s / n;
    Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, n] {
        for (auto& x : g(a).v) x += g(o).v[0] / n;
    };
    return o;
}

void Tape::backward(Var loss) {
    const Tensor& lt = val(loss);
    if (lt.rows != 1 || lt.cols != 1) throw NonScalarLoss();
    for (auto& n : nodes_) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
    param_grads_.clear();
    nodes_[loss].grad.v[0] = 1.0;
    for (Var v = loss; v >= 0; --v)
        if (nodes_[v].back) nodes_[v].back();
    for (const auto& [var, name] : named_leaves_) {
        auto it = param_grads_.find(name);
        if (it == param_grads_.end()) {
            param_grads_[name] = nodes_[var].grad;
        } else {
            for (size_t i = 0; i < it->second.size(); ++i) it->second.v[i] += nodes_[var].grad.v[i];
        }
    }
}

}  // namespace thermorl
