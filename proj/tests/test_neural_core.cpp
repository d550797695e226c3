#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "thermorl/nn.hpp"

using namespace thermorl;
using namespace thermorl::testutil;

TEST_CASE("forward/backward: loss = sum(w * x) gives dloss/dw = x") {
    Tape tape;
    Tensor w(1, 4), x(1, 4);
    for (int j = 0; j < 4; ++j) {
        w.at(0, j) = 0.5 * j;
        x.at(0, j) = 1.0 + j;
    }
    Tape::Var wv = tape.leaf(w, "w");
    Tape::Var loss = tape.sum_all(tape.mul(wv, tape.input(x)));
    tape.backward(loss);
    const Tensor& grad = tape.gradients().at("w");
    for (int j = 0; j < 4; ++j) CHECK(grad.at(0, j) == doctest::Approx(x.at(0, j)));
}

TEST_CASE("MSE at its minimum has zero gradients") {
    Tape tape;
    Tensor y(2, 3, 1.5);
    Tape::Var yv = tape.leaf(y, "y");
    Tape::Var loss = tape.mean_all(tape.square(tape.sub(yv, tape.input(y))));
    tape.backward(loss);
    CHECK(tape.scalar(loss) == 0.0);
    for (double gi : tape.gradients().at("y").v) CHECK(gi == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    Tape::Var v = tape.input(Tensor(2, 2, 1.0));
    CHECK_THROWS_AS(tape.backward(v), NonScalarLoss);
}

TEST_CASE("2-layer MLP gradients match central finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        ParameterStore store(seed);
        std::mt19937_64 rng(seed + 100);
        Tensor x = Tensor::glorot(3, 6, rng), t = Tensor::glorot(3, 2, rng);
        auto run = [&](std::map<std::string, Tensor>* grads) {
            Tape tape;
            Tape::Var h = tape.tanh_(dense(tape, store, "l1", tape.input(x), 6, 8));
            Tape::Var y = dense(tape, store, "l2", h, 8, 2);
            Tape::Var loss = tape.mean_all(tape.square(tape.sub(y, tape.input(t))));
            if (grads) {
                tape.backward(loss);
                *grads = tape.gradients();
            }
            return tape.scalar(loss);
        };
        CHECK(max_grad_rel_error(store, run) <= 1e-4);
    }
}

TEST_CASE("adam: zero gradient leaves parameters, bumps step") {
    ParameterStore store(1);
    store.ensure("p", 2, 2);
    Tensor before = store.get("p");
    std::map<std::string, Tensor> grads{{"p", Tensor(2, 2)}};
    adam_step(store, grads, 0.1);
    CHECK(store.step() == 1);
    for (size_t i = 0; i < before.size(); ++i) CHECK(store.get("p").v[i] == before.v[i]);
}

TEST_CASE("adam: first step with unit gradient moves by ~lr (bias-corrected)") {
    ParameterStore store(1);
    store.ensure_zeros("p", 1, 1);
    std::map<std::string, Tensor> grads{{"p", Tensor(1, 1, 1.0)}};
    adam_step(store, grads, 0.01);
    // mhat = 1, vhat = 1 -> update = lr / (1 + eps)
    CHECK(store.get("p").v[0] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam converges on a quadratic bowl from x=5") {
    ParameterStore store(1);
    store.ensure_zeros("x", 1, 1);
    store.get("x").v[0] = 5.0;
    // momentum makes the path non-monotone near the optimum; check convergence
    for (int i = 0; i < 500; ++i) {
        std::map<std::string, Tensor> grads{{"x", Tensor(1, 1, 2.0 * store.get("x").v[0])}};
        adam_step(store, grads, 0.1);
    }
    CHECK(std::abs(store.get("x").v[0]) < 0.05);
}

TEST_CASE("gru: large update-gate bias carries the state through") {
    ParameterStore store(3);
    Tape tape;
    Tensor h(1, 4);
    for (int j = 0; j < 4; ++j) h.at(0, j) = 0.3 * (j + 1);
    Tensor x(1, 4, 0.2);
    gru_cell(tape, store, "gru", tape.input(h), tape.input(x), 4, 4);  // create params
    store.get("gru/bz") = Tensor(1, 4, 50.0);                          // z ~ 1
    Tape tape2;
    Tape::Var out = gru_cell(tape2, store, "gru", tape2.input(h), tape2.input(x), 4, 4);
    for (int j = 0; j < 4; ++j) CHECK(tape2.val(out).at(0, j) == doctest::Approx(h.at(0, j)).epsilon(1e-9));
}

TEST_CASE("gru: all-zero parameters halve the state") {
    ParameterStore store(3);
    Tape tape;
    gru_cell(tape, store, "g0", tape.zeros(1, 3), tape.zeros(1, 3), 3, 3);
    for (auto& [name, e] : store.entries())
        if (name.rfind("g0/", 0) == 0) std::fill(e.value.v.begin(), e.value.v.end(), 0.0);
    Tensor h(1, 3);
    h.v = {1.0, -2.0, 0.5};
    Tape tape2;
    Tape::Var out = gru_cell(tape2, store, "g0", tape2.input(h), tape2.zeros(1, 3), 3, 3);
    for (int j = 0; j < 3; ++j) CHECK(tape2.val(out).at(0, j) == doctest::Approx(0.5 * h.at(0, j)));
}

TEST_CASE("gru: matches an independent re-implementation on random inputs") {
    ParameterStore store(9);
    std::mt19937_64 rng(11);
    const int dh = 5, dx = 3;
    Tensor h = Tensor::glorot(1, dh, rng), x = Tensor::glorot(1, dx, rng);
    Tape tape;
    Tape::Var out = gru_cell(tape, store, "gru", tape.input(h), tape.input(x), dh, dx);

    // straightforward loop re-implementation as the oracle
    auto matvec = [&](const Tensor& m, const Tensor& vec) {
        std::vector<double> out_v(m.cols, 0.0);
        for (int i = 0; i < m.rows; ++i)
            for (int j = 0; j < m.cols; ++j) out_v[j] += vec.at(0, i) * m.at(i, j);
        return out_v;
    };
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    auto xz = matvec(store.get("gru/Wz"), x), hz = matvec(store.get("gru/Uz"), h);
    auto xr = matvec(store.get("gru/Wr"), x), hr = matvec(store.get("gru/Ur"), h);
    auto xn = matvec(store.get("gru/Wn"), x);
    for (int j = 0; j < dh; ++j) {
        double z = sig(xz[j] + hz[j] + store.get("gru/bz").at(0, j));
        double r = sig(xr[j] + hr[j] + store.get("gru/br").at(0, j));
        Tensor rh(1, dh);
        for (int k = 0; k < dh; ++k) {
            double rk = sig(matvec(store.get("gru/Wr"), x)[k] + matvec(store.get("gru/Ur"), h)[k] +
                            store.get("gru/br").at(0, k));
            rh.at(0, k) = rk * h.at(0, k);
        }
        double n = std::tanh(xn[j] + matvec(store.get("gru/Un"), rh)[j] +
                             store.get("gru/bn").at(0, j));
        double expected = (1.0 - z) * n + z * h.at(0, j);
        CHECK(tape.val(out).at(0, j) == doctest::Approx(expected).epsilon(1e-10));
        (void)r;
    }
}

TEST_CASE("gru gradients match finite differences") {
    ParameterStore store(21);
    std::mt19937_64 rng(22);
    Tensor h = Tensor::glorot(1, 4, rng), x = Tensor::glorot(1, 4, rng);
    auto run = [&](std::map<std::string, Tensor>* grads) {
        Tape tape;
        Tape::Var out = gru_cell(tape, store, "gru", tape.input(h), tape.input(x), 4, 4);
        Tape::Var loss = tape.mean_all(tape.square(out));
        if (grads) {
            tape.backward(loss);
            *grads = tape.gradients();
        }
        return tape.scalar(loss);
    };
    CHECK(max_grad_rel_error(store, run) <= 1e-4);
}

TEST_CASE("attention: single key/value ignores the query") {
    ParameterStore store(5);
    std::mt19937_64 rng(6);
    Tensor kv = Tensor::glorot(1, 8, rng);
    Tensor q1 = Tensor::glorot(1, 8, rng), q2 = Tensor::glorot(1, 8, rng);
    Tape tape;
    Tape::Var o1 = multi_head_attention(tape, store, "att", tape.input(q1), tape.input(kv), 8, 2);
    Tape::Var o2 = multi_head_attention(tape, store, "att", tape.input(q2), tape.input(kv), 8, 2);
    for (int j = 0; j < 8; ++j)
        CHECK(tape.val(o1).at(0, j) == doctest::Approx(tape.val(o2).at(0, j)).epsilon(1e-12));
}

TEST_CASE("attention: identical keys give uniform weights") {
    // with all key rows equal, output equals attention over the mean value,
    // which equals the mean of the projected values
    ParameterStore store(5);
    std::mt19937_64 rng(8);
    Tensor kv(4, 8);
    Tensor row = Tensor::glorot(1, 8, rng);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 8; ++j) kv.at(i, j) = row.at(0, j);
    Tensor q = Tensor::glorot(2, 8, rng);
    Tape tape;
    Tape::Var o = multi_head_attention(tape, store, "att", tape.input(q), tape.input(kv), 8, 2);
    Tape::Var single =
        multi_head_attention(tape, store, "att", tape.input(q), tape.input(row), 8, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(tape.val(o).at(i, j) == doctest::Approx(tape.val(single).at(i, j)).epsilon(1e-10));
}

TEST_CASE("attention: 2-head case equals an explicit per-head loop oracle") {
    ParameterStore store(15);
    std::mt19937_64 rng(16);
    const int d = 6, heads = 2, hd = d / heads;
    Tensor q = Tensor::glorot(3, d, rng), kv = Tensor::glorot(4, d, rng);
    Tape tape;
    Tape::Var out = multi_head_attention(tape, store, "att", tape.input(q), tape.input(kv), d, heads);

    auto mm = [](const Tensor& a, const Tensor& b) {
        Tensor o;
        reference::matmul_serial(a, b, o);
        return o;
    };
    Tensor Q = mm(q, store.get("att/Wq")), K = mm(kv, store.get("att/Wk")),
           V = mm(kv, store.get("att/Wv"));
    Tensor concat(3, d);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < 3; ++i) {
            std::vector<double> logits(4);
            for (int j = 0; j < 4; ++j) {
                double s = 0;
                for (int k = 0; k < hd; ++k) s += Q.at(i, h * hd + k) * K.at(j, h * hd + k);
                logits[j] = s / std::sqrt(static_cast<double>(hd));
            }
            double mx = *std::max_element(logits.begin(), logits.end()), sum = 0;
            for (auto& l : logits) sum += (l = std::exp(l - mx));
            for (int k = 0; k < hd; ++k) {
                double acc = 0;
                for (int j = 0; j < 4; ++j) acc += (logits[j] / sum) * V.at(j, h * hd + k);
                concat.at(i, h * hd + k) = acc;
            }
        }
    }
    Tensor expected = mm(concat, store.get("att/Wo"));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(tape.val(out).at(i, j) == doctest::Approx(expected.at(i, j)).epsilon(1e-10));
}

TEST_CASE("attention gradients match finite differences") {
    ParameterStore store(31);
    std::mt19937_64 rng(32);
    Tensor q = Tensor::glorot(2, 4, rng), kv = Tensor::glorot(3, 4, rng);
    auto run = [&](std::map<std::string, Tensor>* grads) {
        Tape tape;
        Tape::Var o = multi_head_attention(tape, store, "att", tape.input(q), tape.input(kv), 4, 2);
        Tape::Var loss = tape.mean_all(tape.square(o));
        if (grads) {
            tape.backward(loss);
            *grads = tape.gradients();
        }
        return tape.scalar(loss);
    };
    CHECK(max_grad_rel_error(store, run) <= 1e-4);
}

TEST_CASE("attention head divisibility enforced") {
    ParameterStore store(1);
    Tape tape;
    Tape::Var x = tape.input(Tensor(2, 6, 0.1));
    CHECK_THROWS_AS(multi_head_attention(tape, store, "att", x, x, 6, 4), HeadDivisibility);
}

TEST_CASE("softmax rows: sum to one, strictly positive, shift invariant") {
    std::mt19937_64 rng(3);
    Tensor x = Tensor::glorot(5, 7, rng);
    Tape tape;
    Tape::Var s = tape.softmax_rows(tape.input(x));
    for (int i = 0; i < 5; ++i) {
        double sum = 0;
        for (int j = 0; j < 7; ++j) {
            CHECK(tape.val(s).at(i, j) > 0.0);
            sum += tape.val(s).at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    Tensor shifted = x;
    for (auto& v : shifted.v) v += 123.0;
    Tape::Var s2 = tape.softmax_rows(tape.input(shifted));
    for (size_t i = 0; i < tape.val(s).size(); ++i)
        CHECK(tape.val(s).v[i] == doctest::Approx(tape.val(s2).v[i]).epsilon(1e-12));
}

TEST_CASE("dropout: identity at rate 0 and in eval mode") {
    std::mt19937_64 rng(4);
    Tensor x = Tensor::glorot(4, 4, rng);
    Tape train_tape;
    Tape::Var a = train_tape.input(x);
    CHECK(train_tape.dropout(a, 0.0, rng) == a);

    Tape eval_tape;
    eval_tape.training = false;
    Tape::Var b = eval_tape.input(x);
    CHECK(eval_tape.dropout(b, 0.9, rng) == b);
}

TEST_CASE("dropout: inverted scaling keeps the kept entries at x/(1-p)") {
    std::mt19937_64 rng(5);
    Tensor x(1, 1000, 1.0);
    Tape tape;
    Tape::Var d = tape.dropout(tape.input(x), 0.4, rng);
    int kept = 0;
    for (double v : tape.val(d).v) {
        if (v != 0.0) {
            CHECK(v == doctest::Approx(1.0 / 0.6));
            ++kept;
        }
    }
    CHECK(kept > 500);
    CHECK(kept < 700);
}

TEST_CASE("weight files round-trip bit-exactly") {
    ParameterStore store(77);
    store.ensure("a/W", 3, 5);
    store.ensure("b/W", 7, 2);
    store.set_step(42);
    std::string path = (std::filesystem::temp_directory_path() / "trl_w.bin").string();
    save_weights(store, path);

    ParameterStore loaded;
    load_weights(loaded, path);
    CHECK(loaded.step() == 42);
    REQUIRE(loaded.entries().size() == store.entries().size());
    for (const auto& [name, e] : store.entries()) {
        const Tensor& l = loaded.get(name);
        REQUIRE(l.same_shape(e.value));
        for (size_t i = 0; i < l.size(); ++i) CHECK(l.v[i] == e.value.v[i]);
    }
    std::filesystem::remove(path);
}

TEST_CASE("truncated weight file raises CorruptFile") {
    ParameterStore store(78);
    store.ensure("a/W", 4, 4);
    std::string path = (std::filesystem::temp_directory_path() / "trl_trunc.bin").string();
    save_weights(store, path);
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9);
    ParameterStore loaded;
    CHECK_THROWS_AS(load_weights(loaded, path), CorruptFile);
    std::filesystem::remove(path);
}

TEST_CASE("wrong version header raises VersionMismatch") {
    ParameterStore store(79);
    store.ensure("a/W", 2, 2);
    std::string path = (std::filesystem::temp_directory_path() / "trl_ver.bin").string();
    save_weights(store, path);
    // bump the version field (bytes 4..7) and refresh the trailing checksum
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    data[4] = 99;
    std::string body = data.substr(0, data.size() - 8);
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : body) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::memcpy(data.data() + data.size() - 8, &h, 8);
    std::ofstream out(path, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.close();
    ParameterStore loaded;
    CHECK_THROWS_AS(load_weights(loaded, path), VersionMismatch);
    std::filesystem::remove(path);
}

TEST_CASE("parallel matmul kernel equals the serial reference") {
    std::mt19937_64 rng(12);
    Tensor a = Tensor::glorot(37, 19, rng), b = Tensor::glorot(19, 23, rng);
    Tensor fast, slow;
    kernels::matmul(a, b, fast);
    reference::matmul_serial(a, b, slow);
    REQUIRE(fast.same_shape(slow));
    for (size_t i = 0; i < fast.size(); ++i) CHECK(fast.v[i] == slow.v[i]);
}

TEST_CASE("fixed seed gives bit-identical training trajectories") {
    auto train_once = [] {
        ParameterStore store(123);
        std::mt19937_64 rng(5);
        Tensor x = Tensor::glorot(4, 3, rng), t = Tensor::glorot(4, 1, rng);
        for (int i = 0; i < 20; ++i) {
            Tape tape;
            Tape::Var y = dense(tape, store, "d", tape.input(x), 3, 1);
            Tape::Var loss = tape.mean_all(tape.square(tape.sub(y, tape.input(t))));
            tape.backward(loss);
            adam_step(store, tape.gradients(), 1e-2);
        }
        return store.get("d/W").v;
    };
    auto a = train_once(), b = train_once();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
