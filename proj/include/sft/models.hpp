#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sft/graph.hpp"
#include "sft/param_tree.hpp"
#include "sft/registry.hpp"

namespace sft {

// Token id conventions shared by models, losses, decoding and data synthesis.
constexpr int kBlankId = 0;
constexpr int kSosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;
constexpr int kFirstContentId = 4;

struct TransformerConfig {
    int64_t feat_dim = 16;   // F
    int64_t model_dim = 64;  // D
    int64_t enc_blocks = 2;  // N
    int64_t dec_blocks = 2;  // M
    int64_t heads = 4;
    int64_t ffn_dim = 128;
    int64_t vocab = 36;  // V, includes blank, start/end and unk
    // Two stride-2 convolutions; empty means {model_dim, model_dim}.
    std::vector<int64_t> sub_channels;
    double dropout = 0.0;
    static constexpr int64_t subsample_factor = 4;

    void validate() const;
    std::vector<int64_t> channels() const;
    int64_t sub_out_feat() const;  // F' feeding w0
    static TransformerConfig paper_scale();
};

struct RnntConfig {
    int64_t feat_dim = 16;
    int64_t model_dim = 64;
    int64_t enc_blocks = 2;  // N Conformer blocks
    int64_t heads = 4;
    int64_t ffn_dim = 128;
    int64_t vocab = 36;
    // Four convolutions with strides {2,1,2,1}; empty means {16,16,32,32}.
    std::vector<int64_t> sub_channels;
    int64_t conv_kernel = 7;     // depthwise kernel width (odd)
    int64_t pred_embed_dim = 0;  // 0 -> model_dim
    int64_t pred_hidden = 0;     // 0 -> model_dim
    int64_t joint_hidden = 0;    // 0 -> model_dim
    double dropout = 0.0;
    static constexpr int64_t subsample_factor = 4;

    void validate() const;
    std::vector<int64_t> channels() const;
    int64_t sub_out_feat() const;
    int64_t embed_dim() const { return pred_embed_dim > 0 ? pred_embed_dim : model_dim; }
    int64_t hidden_dim() const { return pred_hidden > 0 ? pred_hidden : model_dim; }
    int64_t joint_dim() const { return joint_hidden > 0 ? joint_hidden : model_dim; }
    static RnntConfig paper_scale();
};

// Canonical (path, shape) layouts. Censuses and checkpoint validation work
// off these without allocating parameter storage.
std::vector<ParamInfo> transformer_layout(const TransformerConfig& cfg);
std::vector<ParamInfo> rnnt_layout(const RnntConfig& cfg);

// Seeded initialization: weights U(+-1/sqrt(fan_in)), embeddings
// N(0, 1/sqrt(D)), biases zero, layer-norm gamma 1 / beta 0.
ParamTree init_params(const std::vector<ParamInfo>& layout, uint64_t seed);

// Output length of a conv stack along one axis (kernel 3, pad 1).
int64_t conv_out_len(int64_t len, const std::vector<int>& strides);

// Sinusoidal encodings, one column per position. Parameter-free.
Tensor positional_encoding(int64_t dim, int64_t length);

// Parameter leaves registered on a graph, addressable by path.
struct ModelLeaves {
    const ParamTree* tree = nullptr;
    std::vector<NodeId> ids;
    NodeId at(const std::string& path) const { return ids[tree->index_of(path)]; }
};

ModelLeaves insert_leaves(Graph& g, const ParamTree& params, bool requires_grad);

// Per-head attention weights captured for test probes.
struct AttentionProbe {
    std::vector<NodeId> row_softmax;  // one T x T (or L x T) node per block x head
};

class TransformerModel {
public:
    TransformerModel(TransformerConfig cfg, uint64_t seed);
    TransformerModel(TransformerConfig cfg, ParamTree params);

    const TransformerConfig& config() const { return cfg_; }
    ParamTree& params() { return params_; }
    const ParamTree& params() const { return params_; }

    // feats: F x T0 acoustic features -> D x T subsampled embeddings with
    // positional encodings added.
    NodeId subsample(Graph& g, const ModelLeaves& L, const Tensor& feats) const;
    // D x T -> D x T through the encoder stack and final norm.
    NodeId encode(Graph& g, const ModelLeaves& L, NodeId x, AttentionProbe* probe = nullptr,
                  uint64_t dropout_key = 0) const;
    NodeId encode_features(Graph& g, const ModelLeaves& L, const Tensor& feats,
                           uint64_t dropout_key = 0) const;
    // V x T frame-wise log-probabilities.
    NodeId ctc_head(Graph& g, const ModelLeaves& L, NodeId enc) const;
    // Teacher forcing over [sos, targets...]; V x (|targets|+1) log-probs,
    // column l depending only on targets[0..l) and the encoder output.
    NodeId decode(Graph& g, const ModelLeaves& L, const std::vector<int>& targets, NodeId enc,
                  uint64_t dropout_key = 0) const;

private:
    TransformerConfig cfg_;
    ParamTree params_;
};

class RnntModel {
public:
    RnntModel(RnntConfig cfg, uint64_t seed);
    RnntModel(RnntConfig cfg, ParamTree params);

    const RnntConfig& config() const { return cfg_; }
    ParamTree& params() { return params_; }
    const ParamTree& params() const { return params_; }

    NodeId subsample(Graph& g, const ModelLeaves& L, const Tensor& feats) const;
    // Conformer stack, D x T -> D x T.
    NodeId encode(Graph& g, const ModelLeaves& L, NodeId x, AttentionProbe* probe = nullptr,
                  uint64_t dropout_key = 0) const;
    NodeId encode_features(Graph& g, const ModelLeaves& L, const Tensor& feats,
                           uint64_t dropout_key = 0) const;
    // LSTM over [sos, tokens...]; H x (|tokens|+1) hidden states, column l
    // conditioning on the first l tokens.
    NodeId predict(Graph& g, const ModelLeaves& L, const std::vector<int>& tokens) const;
    // V log-probabilities for one (frame, context) pair.
    NodeId joint_single(Graph& g, const ModelLeaves& L, NodeId enc_col, NodeId pred_col) const;
    // Full lattice V x T x (L+1) of joint log-probabilities.
    NodeId joint_lattice(Graph& g, const ModelLeaves& L, NodeId enc, NodeId pred) const;

private:
    RnntConfig cfg_;
    ParamTree params_;
};

// Training-loss graphs (hybrid CTC/attention and transducer objectives).
struct HybridLossNodes {
    NodeId total, nll, ctc;
};

HybridLossNodes transformer_loss(Graph& g, const TransformerModel& model, const ModelLeaves& L,
                                 const Tensor& feats, const std::vector<int>& tokens,
                                 double ctc_weight = 0.3, double label_smoothing = 0.0,
                                 uint64_t dropout_key = 0);

NodeId rnnt_training_loss(Graph& g, const RnntModel& model, const ModelLeaves& L,
                          const Tensor& feats, const std::vector<int>& tokens,
                          uint64_t dropout_key = 0);

}  // namespace sft
