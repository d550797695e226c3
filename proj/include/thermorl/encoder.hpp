#pragma once

#include <vector>

#include "thermorl/nn.hpp"
#include "thermorl/protein_graph.hpp"

namespace thermorl {

struct EmptyGraph : std::runtime_error {
    EmptyGraph() : std::runtime_error("graph has no nodes") {}
};
struct EmptyCorpus : std::runtime_error {
    EmptyCorpus() : std::runtime_error("need at least one graph") {}
};
struct BadScale : std::runtime_error {
    BadScale() : std::runtime_error("lr_scale must be in (0, 1]") {}
};

struct EncoderConfig {
    int embed_dim = 64;
    int n_message_layers = 3;
    int n_heads = 4;
    double dropout = 0.1;
    // ablation hook: bypass the encoder, zero-padding raw 25-dim features
    bool passthrough = false;

    void validate() const;
};

struct GraphEmbedding {
    Tensor node_embeddings;  // |V| x embed_dim
    Tensor super_node;       // 1 x embed_dim
};

// Additive attention mask restricted to graph edges plus self-loops.
Tensor neighbor_mask(const ProteinGraph& g);

// Sinusoidal positional encoding of the residues' author sequence indices.
Tensor positional_encoding(const ProteinGraph& g, int dim);

// Differentiable encoder pass; returns the node-embedding Var and writes the
// super-node Var to *super_out. Parameters live under "encoder/..." in store.
Tape::Var encode_on_tape(Tape& tape, ParameterStore& store, const ProteinGraph& g,
                         const EncoderConfig& cfg, Tape::Var* super_out,
                         std::mt19937_64* dropout_rng = nullptr);

// Eval-mode convenience (no dropout, deterministic).
GraphEmbedding encode(const ProteinGraph& g, const EncoderConfig& cfg, ParameterStore& store);

struct PretrainResult {
    std::vector<double> loss_history;
};

// Masked-feature reconstruction pretraining: mask a fraction of node feature
// rows, reconstruct the 25-dim features through a decode head (discarded on
// return).
PretrainResult pretrain_unsupervised(const std::vector<ProteinGraph>& graphs,
                                     const EncoderConfig& cfg, ParameterStore& store, int steps,
                                     double lr = 1e-3, double mask_rate = 0.15, uint64_t seed = 0);

// Per-name lr multiplier for fine-tuning: encoder parameters train at
// base_lr * scale, everything else at base_lr.
std::function<double(const std::string&)> encoder_lr_scale(double scale);

}  // namespace thermorl
