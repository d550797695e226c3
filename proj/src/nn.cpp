#include "thermorl/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace thermorl {

Tensor& ParameterStore::ensure(const std::string& name, int rows, int cols) {
    auto it = entries_.find(name);
    if (it != entries_.end()) {
        Tensor& t = it->second.value;
        if (t.rows != rows || t.cols != cols) throw ShapeMismatch("param " + name);
        return t;
    }
    Entry e;
    e.value = Tensor::glorot(rows, cols, rng_);
    e.m = Tensor(rows, cols);
    e.v = Tensor(rows, cols);
    return entries_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParameterStore::ensure_zeros(const std::string& name, int rows, int cols) {
    auto it = entries_.find(name);
    if (it != entries_.end()) return it->second.value;
    Entry e;
    e.value = Tensor(rows, cols);
    e.m = Tensor(rows, cols);
    e.v = Tensor(rows, cols);
    return entries_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::runtime_error("missing parameter: " + name);
    return it->second.value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::runtime_error("missing parameter: " + name);
    return it->second.value;
}

void adam_step(ParameterStore& store, const std::map<std::string, Tensor>& grads, double lr,
               double beta1, double beta2, double eps,
               const std::function<double(const std::string&)>& lr_scale) {
    store.step_ += 1;
    double t = static_cast<double>(store.step_);
    double bc1 = 1.0 - std::pow(beta1, t);
    double bc2 = 1.0 - std::pow(beta2, t);
    for (const auto& [name, grad] : grads) {
        auto it = store.entries_.find(name);
        if (it == store.entries_.end()) throw std::runtime_error("gradient for unknown parameter: " + name);
        ParameterStore::Entry& e = it->second;
        if (!e.value.same_shape(grad)) throw ShapeMismatch("adam " + name);
        double step_lr = lr * (lr_scale ? lr_scale(name) : 1.0);
        for (size_t i = 0; i < e.value.size(); ++i) {
            double gi = grad.v[i];
            e.m.v[i] = beta1 * e.m.v[i] + (1.0 - beta1) * gi;
            e.v.v[i] = beta2 * e.v.v[i] + (1.0 - beta2) * gi * gi;
            double mhat = e.m.v[i] / bc1;
            double vhat = e.v.v[i] / bc2;
            e.value.v[i] -= step_lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

Tape::Var bind_param(Tape& tape, ParameterStore& store, const std::string& name) {
    return tape.leaf(store.get(name), name);
}

Tape::Var dense(Tape& tape, ParameterStore& store, const std::string& prefix, Tape::Var x,
                int in_dim, int out_dim) {
    store.ensure(prefix + "/W", in_dim, out_dim);
    store.ensure_zeros(prefix + "/b", 1, out_dim);
    Tape::Var W = bind_param(tape, store, prefix + "/W");
    Tape::Var b = bind_param(tape, store, prefix + "/b");
    return tape.add_rowvec(tape.matmul(x, W), b);
}

Tape::Var gru_cell(Tape& tape, ParameterStore& store, const std::string& prefix, Tape::Var h,
                   Tape::Var x, int hidden_dim, int input_dim) {
    auto gate = [&](const char* g) {
        store.ensure(prefix + "/W" + g, input_dim, hidden_dim);
        store.ensure(prefix + "/U" + g, hidden_dim, hidden_dim);
        store.ensure_zeros(prefix + "/b" + g, 1, hidden_dim);
    };
    gate("z");
    gate("r");
    gate("n");
    auto lin = [&](Tape::Var in_x, Tape::Var in_h, const char* g) {
        Tape::Var W = bind_param(tape, store, prefix + "/W" + std::string(g));
        Tape::Var U = bind_param(tape, store, prefix + "/U" + std::string(g));
        Tape::Var b = bind_param(tape, store, prefix + "/b" + std::string(g));
        return tape.add_rowvec(tape.add(tape.matmul(in_x, W), tape.matmul(in_h, U)), b);
    };
    Tape::Var z = tape.sigmoid_(lin(x, h, "z"));
    Tape::Var r = tape.sigmoid_(lin(x, h, "r"));
    Tape::Var rh = tape.mul(r, h);
    Tape::Var n = tape.tanh_(lin(x, rh, "n"));
    // h' = (1 - z) * n + z * h
    Tape::Var one_minus_z = tape.add_const(tape.scale(z, -1.0), 1.0);
    return tape.add(tape.mul(one_minus_z, n), tape.mul(z, h));
}

Tape::Var multi_head_attention(Tape& tape, ParameterStore& store, const std::string& prefix,
                               Tape::Var q_in, Tape::Var kv_in, int model_dim, int n_heads,
                               const Tensor* mask) {
    if (model_dim % n_heads != 0) throw HeadDivisibility();
    int head_dim = model_dim / n_heads;
    store.ensure(prefix + "/Wq", model_dim, model_dim);
    store.ensure(prefix + "/Wk", model_dim, model_dim);
    store.ensure(prefix + "/Wv", model_dim, model_dim);
    store.ensure(prefix + "/Wo", model_dim, model_dim);
    Tape::Var Q = tape.matmul(q_in, bind_param(tape, store, prefix + "/Wq"));
    Tape::Var K = tape.matmul(kv_in, bind_param(tape, store, prefix + "/Wk"));
    Tape::Var V = tape.matmul(kv_in, bind_param(tape, store, prefix + "/Wv"));
    Tape::Var heads = -1;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (int h = 0; h < n_heads; ++h) {
        Tape::Var Qh = tape.slice_cols(Q, h * head_dim, head_dim);
        Tape::Var Kh = tape.slice_cols(K, h * head_dim, head_dim);
        Tape::Var Vh = tape.slice_cols(V, h * head_dim, head_dim);
        Tape::Var scores = tape.scale(tape.matmul_nt(Qh, Kh), inv_sqrt);
        Tape::Var attn = tape.softmax_rows(scores, mask);
        Tape::Var Oh = tape.matmul(attn, Vh);
        heads = (h == 0) ? Oh : tape.concat_cols(heads, Oh);
    }
    return tape.matmul(heads, bind_param(tape, store, prefix + "/Wo"));
}

namespace {

constexpr uint32_t kWeightMagic = 0x57'4c'52'54;  // "TRLW"
constexpr uint32_t kWeightVersion = 1;

uint64_t fnv1a(const std::string& data) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));  // little-endian host assumed
}

template <typename T>
T take(const std::string& in, size_t& off) {
    if (off + sizeof(T) > in.size()) throw CorruptFile("truncated");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void save_weights(const ParameterStore& store, const std::string& path) {
    std::string body;
    put(body, kWeightMagic);
    put(body, kWeightVersion);
    put(body, static_cast<uint64_t>(store.step()));
    put(body, static_cast<uint32_t>(store.entries().size()));
    for (const auto& [name, e] : store.entries()) {
        put(body, static_cast<uint32_t>(name.size()));
        body.append(name);
        put(body, static_cast<uint32_t>(e.value.rows));
        put(body, static_cast<uint32_t>(e.value.cols));
        for (double d : e.value.v) put(body, d);
        for (double d : e.m.v) put(body, d);
        for (double d : e.v.v) put(body, d);
    }
    put(body, fnv1a(body));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
}

void load_weights(ParameterStore& store, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < sizeof(uint64_t)) throw CorruptFile("too short");
    std::string body = data.substr(0, data.size() - sizeof(uint64_t));
    size_t coff = body.size();
    uint64_t stored_sum = take<uint64_t>(data, coff);
    if (fnv1a(body) != stored_sum) throw CorruptFile("checksum");

    size_t off = 0;
    if (take<uint32_t>(body, off) != kWeightMagic) throw CorruptFile("bad magic");
    uint32_t version = take<uint32_t>(body, off);
    if (version != kWeightVersion) throw VersionMismatch(version);
    store.set_step(static_cast<long>(take<uint64_t>(body, off)));
    uint32_t count = take<uint32_t>(body, off);
    store.entries().clear();
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = take<uint32_t>(body, off);
        if (off + name_len > body.size()) throw CorruptFile("truncated name");
        std::string name = body.substr(off, name_len);
        off += name_len;
        int rows = static_cast<int>(take<uint32_t>(body, off));
        int cols = static_cast<int>(take<uint32_t>(body, off));
        ParameterStore::Entry e;
        e.value = Tensor(rows, cols);
        e.m = Tensor(rows, cols);
        e.v = Tensor(rows, cols);
        for (auto& d : e.value.v) d = take<double>(body, off);
        for (auto& d : e.m.v) d = take<double>(body, off);
        for (auto& d : e.v.v) d = take<double>(body, off);
        store.entries().emplace(std::move(name), std::move(e));
    }
}

}  // namespace thermorl
