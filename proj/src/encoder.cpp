#include "thermorl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace thermorl {

void EncoderConfig::validate() const {
    if (embed_dim <= 0 || embed_dim % n_heads != 0) throw HeadDivisibility();
    if (n_message_layers < 1) throw std::runtime_error("n_message_layers must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw std::runtime_error("dropout must be in [0, 1)");
}

Tensor neighbor_mask(const ProteinGraph& g) {
    const int n = g.num_nodes();
    const double neg_inf = -std::numeric_limits<double>::infinity();
    Tensor mask(n, n, neg_inf);
    for (int i = 0; i < n; ++i) mask.at(i, i) = 0.0;
    for (const auto& [j, k] : g.edges) {
        mask.at(j, k) = 0.0;
        mask.at(k, j) = 0.0;
    }
    return mask;
}

Tensor positional_encoding(const ProteinGraph& g, int dim) {
    const int n = g.num_nodes();
    Tensor pe(n, dim);
    for (int i = 0; i < n; ++i) {
        double pos = static_cast<double>(g.nodes[i].seq_index);
        for (int j = 0; j < dim; j += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(j) / dim);
            pe.at(i, j) = std::sin(pos * freq);
            if (j + 1 < dim) pe.at(i, j + 1) = std::cos(pos * freq);
        }
    }
    return pe;
}

namespace {

Tensor feature_matrix(const ProteinGraph& g) {
    Tensor x(g.num_nodes(), kFeatureDim);
    for (int i = 0; i < g.num_nodes(); ++i)
        for (int j = 0; j < kFeatureDim; ++j) x.at(i, j) = g.node_features[i][j];
    return x;
}

}  // namespace

Tape::Var encode_on_tape(Tape& tape, ParameterStore& store, const ProteinGraph& g,
                         const EncoderConfig& cfg, Tape::Var* super_out,
                         std::mt19937_64* dropout_rng) {
    cfg.validate();
    const int n = g.num_nodes();
    if (n == 0) throw EmptyGraph();
    const int d = cfg.embed_dim;

    Tensor feats = feature_matrix(g);

    if (cfg.passthrough) {
        if (d < kFeatureDim) throw ShapeMismatch("passthrough needs embed_dim >= 25");
        Tensor padded(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < kFeatureDim; ++j) padded.at(i, j) = feats.at(i, j);
        Tape::Var h = tape.input(std::move(padded));
        if (super_out) *super_out = tape.mean_rows(h);
        return h;
    }

    Tape::Var x = tape.input(std::move(feats));
    Tape::Var h = dense(tape, store, "encoder/input_proj", x, kFeatureDim, d);
    h = tape.add(h, tape.input(positional_encoding(g, d)));

    Tensor mask = neighbor_mask(g);
    Tape::Var super = tape.zeros(1, d);
    for (int layer = 0; layer < cfg.n_message_layers; ++layer) {
        std::string prefix = "encoder/layer" + std::to_string(layer);
        Tape::Var msg = multi_head_attention(tape, store, prefix + "/attn", h, h, d, cfg.n_heads, &mask);
        if (dropout_rng && cfg.dropout > 0.0) msg = tape.dropout(msg, cfg.dropout, *dropout_rng);
        h = tape.tanh_(tape.add(h, msg));  // residual + nonlinearity
        super = gru_cell(tape, store, prefix + "/super_gru", super, tape.mean_rows(h), d, d);
    }
    if (super_out) *super_out = super;
    return h;
}

GraphEmbedding encode(const ProteinGraph& g, const EncoderConfig& cfg, ParameterStore& store) {
    Tape tape;
    tape.training = false;
    Tape::Var super = -1;
    Tape::Var h = encode_on_tape(tape, store, g, cfg, &super);
    return {tape.val(h), tape.val(super)};
}

PretrainResult pretrain_unsupervised(const std::vector<ProteinGraph>& graphs,
                                     const EncoderConfig& cfg, ParameterStore& store, int steps,
                                     double lr, double mask_rate, uint64_t seed) {
    if (graphs.empty()) throw EmptyCorpus();
    cfg.validate();
    std::mt19937_64 rng(seed);
    PretrainResult result;

    for (int step = 0; step < steps; ++step) {
        const ProteinGraph& base = graphs[step % graphs.size()];

        // mask node feature rows by zeroing them on a copy of the graph
        std::vector<int> masked;
        ProteinGraph corrupted = base;
        if (mask_rate > 0.0) {
            std::uniform_real_distribution<double> dist(0.0, 1.0);
            for (int i = 0; i < base.num_nodes(); ++i)
                if (dist(rng) < mask_rate) masked.push_back(i);
            if (masked.empty())
                masked.push_back(std::uniform_int_distribution<int>(0, base.num_nodes() - 1)(rng));
            for (int i : masked) corrupted.node_features[i].fill(0.0);
        } else {
            for (int i = 0; i < base.num_nodes(); ++i) masked.push_back(i);
        }

        Tape tape;
        Tape::Var h = encode_on_tape(tape, store, corrupted, cfg, nullptr, &rng);
        Tape::Var decoded = dense(tape, store, "pretrain_decoder", h, cfg.embed_dim, kFeatureDim);

        Tensor target(static_cast<int>(masked.size()), kFeatureDim);
        for (size_t i = 0; i < masked.size(); ++i)
            for (int j = 0; j < kFeatureDim; ++j)
                target.at(static_cast<int>(i), j) = base.node_features[masked[i]][j];
        Tape::Var picked = tape.gather_rows(decoded, masked);
        Tape::Var loss = tape.mean_all(tape.square(tape.sub(picked, tape.input(std::move(target)))));

        tape.backward(loss);
        adam_step(store, tape.gradients(), lr);
        result.loss_history.push_back(tape.scalar(loss));
    }

    // decode head is pretraining-only
    store.entries().erase("pretrain_decoder/W");
    store.entries().erase("pretrain_decoder/b");
    return result;
}

std::function<double(const std::string&)> encoder_lr_scale(double scale) {
    if (!(scale > 0.0) || scale > 1.0) throw BadScale();
    return [scale](const std::string& name) {
        return name.rfind("encoder/", 0) == 0 ? scale : 1.0;
    };
}

}  // namespace thermorl
