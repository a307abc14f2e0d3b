#include "sft/models.hpp"

#include <cmath>

#include "sft/losses.hpp"
#include "sft/rng.hpp"

namespace sft {

namespace {

const std::vector<int> kTransformerSubStrides = {2, 2};
const std::vector<int> kRnntSubStrides = {2, 1, 2, 1};

void check_common(int64_t feat, int64_t dim, int64_t heads, int64_t ffn, int64_t vocab) {
    if (feat < 1 || dim < 1 || ffn < 1) throw ConfigError("model dims must be positive");
    if (heads < 1 || dim % heads != 0)
        throw ConfigError("model_dim " + std::to_string(dim) + " must divide by heads " +
                          std::to_string(heads));
    if (vocab < kFirstContentId + 1)
        throw ConfigError("vocab must cover blank/start/end/unk plus content tokens, got " +
                          std::to_string(vocab));
}

struct LayoutBuilder {
    std::vector<ParamInfo> infos;
    void linear(const std::string& path, int64_t out, int64_t in) {
        infos.push_back({path, {out, in}});
        infos.push_back({path + ".b", {out}});
    }
    void norm(const std::string& path, int64_t d) {
        infos.push_back({path + ".gamma", {d}});
        infos.push_back({path + ".beta", {d}});
    }
    void conv(const std::string& path, int64_t co, int64_t ci) {
        infos.push_back({path, {co, ci, 3, 3}});
        infos.push_back({path + ".b", {co}});
    }
    void attention(const std::string& prefix, int64_t d, bool with_pos) {
        linear(prefix + ".wq", d, d);
        linear(prefix + ".wk", d, d);
        linear(prefix + ".wv", d, d);
        linear(prefix + ".wo", d, d);
        if (with_pos) linear(prefix + ".wpos", d, d);
    }
    void ffn(const std::string& prefix, int64_t d, int64_t hidden) {
        linear(prefix + ".w1", hidden, d);
        linear(prefix + ".w2", d, hidden);
    }
};

void append_subsample(LayoutBuilder& b, const std::vector<int64_t>& channels, int64_t feat,
                      int64_t dim, const std::vector<int>& strides) {
    int64_t ci = 1;
    for (size_t i = 0; i < channels.size(); ++i) {
        b.conv("encoder.sub.conv" + std::to_string(i + 1), channels[i], ci);
        ci = channels[i];
    }
    int64_t fp = conv_out_len(feat, strides) * channels.back();
    b.linear("encoder.sub.w0", dim, fp);
}

}  // namespace

int64_t conv_out_len(int64_t len, const std::vector<int>& strides) {
    for (int s : strides) len = (len + 2 - 3) / s + 1;
    return len;
}

// --- configs -----------------------------------------------------------------

void TransformerConfig::validate() const {
    check_common(feat_dim, model_dim, heads, ffn_dim, vocab);
    if (enc_blocks < 0 || dec_blocks < 0) throw ConfigError("block counts must be >= 0");
    if (!sub_channels.empty() && sub_channels.size() != 2)
        throw ConfigError("transformer subsampling uses exactly 2 convolutions");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

std::vector<int64_t> TransformerConfig::channels() const {
    return sub_channels.empty() ? std::vector<int64_t>{model_dim, model_dim} : sub_channels;
}

int64_t TransformerConfig::sub_out_feat() const {
    return conv_out_len(feat_dim, kTransformerSubStrides) * channels().back();
}

TransformerConfig TransformerConfig::paper_scale() {
    TransformerConfig c;
    c.feat_dim = 80;
    c.model_dim = 512;
    c.enc_blocks = 12;
    c.dec_blocks = 6;
    c.heads = 8;
    c.ffn_dim = 2048;
    c.vocab = 5002;
    c.sub_channels = {512, 512};
    return c;
}

void RnntConfig::validate() const {
    check_common(feat_dim, model_dim, heads, ffn_dim, vocab);
    if (enc_blocks < 0) throw ConfigError("block counts must be >= 0");
    if (!sub_channels.empty() && sub_channels.size() != 4)
        throw ConfigError("transducer subsampling uses exactly 4 convolutions");
    if (conv_kernel < 1 || conv_kernel % 2 == 0)
        throw ConfigError("conformer conv kernel must be odd and positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

std::vector<int64_t> RnntConfig::channels() const {
    return sub_channels.empty() ? std::vector<int64_t>{16, 16, 32, 32} : sub_channels;
}

int64_t RnntConfig::sub_out_feat() const {
    return conv_out_len(feat_dim, kRnntSubStrides) * channels().back();
}

RnntConfig RnntConfig::paper_scale() {
    RnntConfig c;
    c.feat_dim = 80;
    c.model_dim = 512;
    c.enc_blocks = 12;
    c.heads = 4;
    c.ffn_dim = 2048;
    c.vocab = 5002;
    c.sub_channels = {64, 64, 128, 128};
    c.conv_kernel = 31;
    c.pred_embed_dim = 1024;
    c.pred_hidden = 512;
    c.joint_hidden = 512;
    return c;
}

// --- layouts -----------------------------------------------------------------

std::vector<ParamInfo> transformer_layout(const TransformerConfig& cfg) {
    cfg.validate();
    int64_t d = cfg.model_dim;
    LayoutBuilder b;
    append_subsample(b, cfg.channels(), cfg.feat_dim, d, kTransformerSubStrides);
    for (int64_t i = 0; i < cfg.enc_blocks; ++i) {
        std::string p = "encoder.block" + std::to_string(i);
        b.norm(p + ".ln1", d);
        b.attention(p + ".self_attn", d, false);
        b.norm(p + ".ln2", d);
        b.ffn(p + ".ffn", d, cfg.ffn_dim);
    }
    b.norm("encoder.ln_final", d);
    b.infos.push_back({"decoder.embed", {d, cfg.vocab}});
    for (int64_t i = 0; i < cfg.dec_blocks; ++i) {
        std::string p = "decoder.block" + std::to_string(i);
        b.norm(p + ".ln1", d);
        b.attention(p + ".self_attn", d, false);
        b.norm(p + ".ln2", d);
        b.attention(p + ".src_attn", d, false);
        b.norm(p + ".ln3", d);
        b.ffn(p + ".ffn", d, cfg.ffn_dim);
    }
    b.norm("decoder.ln_final", d);
    b.linear("ctc.w", cfg.vocab, d);
    b.linear("out.w", cfg.vocab, d);
    return std::move(b.infos);
}

std::vector<ParamInfo> rnnt_layout(const RnntConfig& cfg) {
    cfg.validate();
    int64_t d = cfg.model_dim;
    LayoutBuilder b;
    append_subsample(b, cfg.channels(), cfg.feat_dim, d, kRnntSubStrides);
    for (int64_t i = 0; i < cfg.enc_blocks; ++i) {
        std::string p = "conformer.block" + std::to_string(i);
        b.norm(p + ".ln1", d);
        b.ffn(p + ".ffn_pre", d, cfg.ffn_dim);
        b.norm(p + ".ln2", d);
        b.attention(p + ".self_attn", d, true);
        b.norm(p + ".ln3", d);
        b.linear(p + ".conv.pw1", 2 * d, d);
        b.infos.push_back({p + ".conv.dw", {d, cfg.conv_kernel}});
        b.infos.push_back({p + ".conv.dw.b", {d}});
        b.norm(p + ".ln4", d);
        b.linear(p + ".conv.pw2", d, d);
        b.norm(p + ".ln5", d);
        b.ffn(p + ".ffn_post", d, cfg.ffn_dim);
        b.norm(p + ".ln6", d);
    }
    b.infos.push_back({"pred.embed", {cfg.embed_dim(), cfg.vocab}});
    b.linear("pred.lstm.wx", 4 * cfg.hidden_dim(), cfg.embed_dim());
    b.linear("pred.lstm.wh", 4 * cfg.hidden_dim(), cfg.hidden_dim());
    b.linear("joint.w_enc", cfg.joint_dim(), d);
    b.linear("joint.w_pred", cfg.joint_dim(), cfg.hidden_dim());
    b.linear("joint.w_out", cfg.vocab, cfg.joint_dim());
    return std::move(b.infos);
}

ParamTree init_params(const std::vector<ParamInfo>& layout, uint64_t seed) {
    ParamTree tree;
    for (const auto& info : layout) {
        Tensor t = Tensor::zeros(info.shape);
        t.requires_grad = true;
        uint64_t key = rng::derive(seed, rng::fnv1a(info.path));
        if (info.path.ends_with(".gamma")) {
            for (double& v : t.data) v = 1.0;
        } else if (info.path.ends_with(".beta") || info.path.ends_with(".b")) {
            // zeros
        } else if (info.path == "decoder.embed" || info.path == "pred.embed") {
            double sigma = 1.0 / std::sqrt(static_cast<double>(info.shape[0]));
            for (size_t i = 0; i < t.data.size(); ++i)
                t.data[i] = quantize(sigma * rng::normal(key, i));
        } else {
            int64_t fan_in = 1;
            for (size_t k = 1; k < info.shape.size(); ++k) fan_in *= info.shape[k];
            double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (size_t i = 0; i < t.data.size(); ++i)
                t.data[i] = quantize(a * (2.0 * rng::uniform(key, i) - 1.0));
        }
        tree.add(info.path, std::move(t));
    }
    return tree;
}

Tensor positional_encoding(int64_t dim, int64_t length) {
    Tensor pe = Tensor::zeros({dim, length});
    for (int64_t t = 0; t < length; ++t)
        for (int64_t i = 0; i < dim; i += 2) {
            double angle = static_cast<double>(t) /
                           std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            pe.at2(i, t) = quantize(std::sin(angle));
            if (i + 1 < dim) pe.at2(i + 1, t) = quantize(std::cos(angle));
        }
    return pe;
}

ModelLeaves insert_leaves(Graph& g, const ParamTree& params, bool requires_grad) {
    ModelLeaves out;
    out.tree = &params;
    out.ids.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i)
        out.ids.push_back(g.leaf_ref(params.entry(i).tensor, requires_grad));
    return out;
}

// --- shared blocks ------------------------------------------------------------

namespace {

NodeId linear(Graph& g, const ModelLeaves& L, const std::string& path, NodeId x) {
    return g.add_col_broadcast(g.matmul(L.at(path), x), L.at(path + ".b"));
}

NodeId norm(Graph& g, const ModelLeaves& L, const std::string& path, NodeId x) {
    return g.layer_norm(x, L.at(path + ".gamma"), L.at(path + ".beta"));
}

NodeId ffn(Graph& g, const ModelLeaves& L, const std::string& prefix, NodeId x) {
    return linear(g, L, prefix + ".w2", g.relu(linear(g, L, prefix + ".w1", x)));
}

Tensor causal_mask(int64_t n) {
    Tensor m = Tensor::zeros({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) m.at2(i, j) = -1e9;
    return m;
}

// Multi-head attention. xq: D x Lq, xkv: D x Lkv. `mask` (Lq x Lkv additive)
// and `pos_keys` (D x Lkv, added to the keys) are optional.
NodeId attention(Graph& g, const ModelLeaves& L, const std::string& prefix, int64_t heads,
                 NodeId xq, NodeId xkv, NodeId mask, NodeId pos_keys, AttentionProbe* probe) {
    int64_t d = g.value(L.at(prefix + ".wq")).rows();
    int64_t dk = d / heads;
    NodeId qn = linear(g, L, prefix + ".wq", xq);
    NodeId kn = linear(g, L, prefix + ".wk", xkv);
    NodeId vn = linear(g, L, prefix + ".wv", xkv);
    if (pos_keys >= 0) kn = g.add(kn, pos_keys);
    std::vector<NodeId> head_out;
    for (int64_t h = 0; h < heads; ++h) {
        NodeId qh = g.slice_rows(qn, h * dk, (h + 1) * dk);
        NodeId kh = g.slice_rows(kn, h * dk, (h + 1) * dk);
        NodeId vh = g.slice_rows(vn, h * dk, (h + 1) * dk);
        NodeId scores = g.scale(g.matmul(g.transpose(qh), kh), 1.0 / std::sqrt(static_cast<double>(dk)));
        if (mask >= 0) scores = g.add(scores, mask);
        NodeId att = g.softmax_rows(scores);
        if (probe) probe->row_softmax.push_back(att);
        head_out.push_back(g.matmul(vh, g.transpose(att)));
    }
    return linear(g, L, prefix + ".wo", heads == 1 ? head_out[0] : g.concat_rows(head_out));
}

NodeId subsample_impl(Graph& g, const ModelLeaves& L, const Tensor& feats,
                      const std::vector<int64_t>& channels, const std::vector<int>& strides,
                      int64_t dim) {
    if (feats.ndim() != 2)
        throw ShapeError("subsample: features must be F x T0, got " + feats.shape_str());
    int64_t f = feats.rows(), t0 = feats.cols();
    if (t0 < 4)
        throw ContractError("subsample: input length " + std::to_string(t0) +
                            " is shorter than the subsampling factor 4");
    NodeId x = g.reshape(g.constant(feats), {1, f, t0});
    for (size_t i = 0; i < channels.size(); ++i) {
        std::string path = "encoder.sub.conv" + std::to_string(i + 1);
        x = g.relu(g.add_chan_broadcast(g.conv2d(x, L.at(path), strides[i], 1), L.at(path + ".b")));
    }
    const Tensor& shape = g.value(x);
    NodeId flat = g.reshape(x, {shape.dim(0) * shape.dim(1), shape.dim(2)});
    NodeId y = linear(g, L, "encoder.sub.w0", flat);
    return g.add(y, g.constant(positional_encoding(dim, shape.dim(2))));
}

}  // namespace

// --- transformer ----------------------------------------------------------------

TransformerModel::TransformerModel(TransformerConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    params_ = init_params(transformer_layout(cfg_), seed);
}

TransformerModel::TransformerModel(TransformerConfig cfg, ParamTree params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
}

NodeId TransformerModel::subsample(Graph& g, const ModelLeaves& L, const Tensor& feats) const {
    return subsample_impl(g, L, feats, cfg_.channels(), kTransformerSubStrides, cfg_.model_dim);
}

NodeId TransformerModel::encode(Graph& g, const ModelLeaves& L, NodeId x, AttentionProbe* probe,
                                uint64_t dropout_key) const {
    uint64_t site = 0;
    for (int64_t i = 0; i < cfg_.enc_blocks; ++i) {
        std::string p = "encoder.block" + std::to_string(i);
        NodeId n1 = norm(g, L, p + ".ln1", x);
        NodeId att = attention(g, L, p + ".self_attn", cfg_.heads, n1, n1, -1, -1, probe);
        x = g.add(x, g.dropout(att, cfg_.dropout, rng::derive(dropout_key, site++)));
        NodeId f = ffn(g, L, p + ".ffn", norm(g, L, p + ".ln2", x));
        x = g.add(x, g.dropout(f, cfg_.dropout, rng::derive(dropout_key, site++)));
    }
    return norm(g, L, "encoder.ln_final", x);
}

NodeId TransformerModel::encode_features(Graph& g, const ModelLeaves& L, const Tensor& feats,
                                         uint64_t dropout_key) const {
    return encode(g, L, subsample(g, L, feats), nullptr, dropout_key);
}

NodeId TransformerModel::ctc_head(Graph& g, const ModelLeaves& L, NodeId enc) const {
    return g.log_softmax(linear(g, L, "ctc.w", enc));
}

NodeId TransformerModel::decode(Graph& g, const ModelLeaves& L, const std::vector<int>& targets,
                                NodeId enc, uint64_t dropout_key) const {
    std::vector<int> input_tokens;
    input_tokens.reserve(targets.size() + 1);
    input_tokens.push_back(kSosId);
    for (int y : targets) {
        if (y < 0 || y >= cfg_.vocab)
            throw VocabularyError("decode: target id " + std::to_string(y) +
                                  " outside vocabulary of size " + std::to_string(cfg_.vocab));
        input_tokens.push_back(y);
    }
    int64_t l = static_cast<int64_t>(input_tokens.size());
    NodeId x = g.add(g.gather_cols(L.at("decoder.embed"), input_tokens),
                     g.constant(positional_encoding(cfg_.model_dim, l)));
    NodeId mask = g.constant(causal_mask(l));
    uint64_t site = 1000;
    for (int64_t i = 0; i < cfg_.dec_blocks; ++i) {
        std::string p = "decoder.block" + std::to_string(i);
        NodeId n1 = norm(g, L, p + ".ln1", x);
        NodeId self = attention(g, L, p + ".self_attn", cfg_.heads, n1, n1, mask, -1, nullptr);
        x = g.add(x, g.dropout(self, cfg_.dropout, rng::derive(dropout_key, site++)));
        NodeId src = attention(g, L, p + ".src_attn", cfg_.heads, norm(g, L, p + ".ln2", x), enc,
                               -1, -1, nullptr);
        x = g.add(x, g.dropout(src, cfg_.dropout, rng::derive(dropout_key, site++)));
        NodeId f = ffn(g, L, p + ".ffn", norm(g, L, p + ".ln3", x));
        x = g.add(x, g.dropout(f, cfg_.dropout, rng::derive(dropout_key, site++)));
    }
    return g.log_softmax(linear(g, L, "out.w", norm(g, L, "decoder.ln_final", x)));
}

// --- transducer -----------------------------------------------------------------

RnntModel::RnntModel(RnntConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    params_ = init_params(rnnt_layout(cfg_), seed);
}

RnntModel::RnntModel(RnntConfig cfg, ParamTree params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
}

NodeId RnntModel::subsample(Graph& g, const ModelLeaves& L, const Tensor& feats) const {
    return subsample_impl(g, L, feats, cfg_.channels(), kRnntSubStrides, cfg_.model_dim);
}

NodeId RnntModel::encode(Graph& g, const ModelLeaves& L, NodeId x, AttentionProbe* probe,
                         uint64_t dropout_key) const {
    int64_t t = g.value(x).cols();
    NodeId pe = g.constant(positional_encoding(cfg_.model_dim, t));
    uint64_t site = 0;
    for (int64_t i = 0; i < cfg_.enc_blocks; ++i) {
        std::string p = "conformer.block" + std::to_string(i);
        NodeId f1 = ffn(g, L, p + ".ffn_pre", norm(g, L, p + ".ln1", x));
        x = g.add(x, g.dropout(g.scale(f1, 0.5), cfg_.dropout, rng::derive(dropout_key, site++)));
        // Position-aware keys: a projection of the absolute sinusoidal
        // encodings added to the content keys.
        NodeId pos_keys = linear(g, L, p + ".self_attn.wpos", pe);
        NodeId n2 = norm(g, L, p + ".ln2", x);
        NodeId att = attention(g, L, p + ".self_attn", cfg_.heads, n2, n2, -1, pos_keys, probe);
        x = g.add(x, g.dropout(att, cfg_.dropout, rng::derive(dropout_key, site++)));
        // Conv module: pointwise -> gated unit -> depthwise -> norm -> pointwise.
        NodeId h = norm(g, L, p + ".ln3", x);
        NodeId pw1 = linear(g, L, p + ".conv.pw1", h);
        NodeId glu = g.mul(g.slice_rows(pw1, 0, cfg_.model_dim),
                           g.sigmoid(g.slice_rows(pw1, cfg_.model_dim, 2 * cfg_.model_dim)));
        NodeId dw = g.add_col_broadcast(g.depthwise_conv1d(glu, L.at(p + ".conv.dw")),
                                        L.at(p + ".conv.dw.b"));
        NodeId cv = linear(g, L, p + ".conv.pw2", norm(g, L, p + ".ln4", dw));
        x = g.add(x, g.dropout(cv, cfg_.dropout, rng::derive(dropout_key, site++)));
        NodeId f2 = ffn(g, L, p + ".ffn_post", norm(g, L, p + ".ln5", x));
        x = g.add(x, g.dropout(g.scale(f2, 0.5), cfg_.dropout, rng::derive(dropout_key, site++)));
        x = norm(g, L, p + ".ln6", x);
    }
    return x;
}

NodeId RnntModel::encode_features(Graph& g, const ModelLeaves& L, const Tensor& feats,
                                  uint64_t dropout_key) const {
    return encode(g, L, subsample(g, L, feats), nullptr, dropout_key);
}

NodeId RnntModel::predict(Graph& g, const ModelLeaves& L, const std::vector<int>& tokens) const {
    std::vector<int> input_tokens;
    input_tokens.reserve(tokens.size() + 1);
    input_tokens.push_back(kSosId);
    for (int y : tokens) {
        if (y < 0 || y >= cfg_.vocab)
            throw VocabularyError("predict: token id " + std::to_string(y) +
                                  " outside vocabulary of size " + std::to_string(cfg_.vocab));
        input_tokens.push_back(y);
    }
    int64_t hd = cfg_.hidden_dim();
    NodeId emb = g.gather_cols(L.at("pred.embed"), input_tokens);
    NodeId h = g.constant(Tensor::zeros({hd, 1}));
    NodeId c = g.constant(Tensor::zeros({hd, 1}));
    std::vector<NodeId> states;
    for (size_t step = 0; step < input_tokens.size(); ++step) {
        NodeId xt = g.slice_cols(emb, static_cast<int64_t>(step), static_cast<int64_t>(step) + 1);
        NodeId z = g.add(linear(g, L, "pred.lstm.wx", xt), linear(g, L, "pred.lstm.wh", h));
        NodeId gi = g.sigmoid(g.slice_rows(z, 0, hd));
        NodeId gf = g.sigmoid(g.slice_rows(z, hd, 2 * hd));
        NodeId gg = g.tanh(g.slice_rows(z, 2 * hd, 3 * hd));
        NodeId go = g.sigmoid(g.slice_rows(z, 3 * hd, 4 * hd));
        c = g.add(g.mul(gf, c), g.mul(gi, gg));
        h = g.mul(go, g.tanh(c));
        states.push_back(h);
    }
    return states.size() == 1 ? states[0] : g.concat_cols(states);
}

NodeId RnntModel::joint_single(Graph& g, const ModelLeaves& L, NodeId enc_col,
                               NodeId pred_col) const {
    NodeId z = g.tanh(g.add(linear(g, L, "joint.w_enc", enc_col), linear(g, L, "joint.w_pred", pred_col)));
    return g.log_softmax(linear(g, L, "joint.w_out", z));
}

NodeId RnntModel::joint_lattice(Graph& g, const ModelLeaves& L, NodeId enc, NodeId pred) const {
    int64_t t_len = g.value(enc).cols();
    int64_t contexts = g.value(pred).cols();
    NodeId a = linear(g, L, "joint.w_enc", enc);    // J x T
    NodeId b = linear(g, L, "joint.w_pred", pred);  // J x (L+1)
    std::vector<NodeId> frames;
    frames.reserve(static_cast<size_t>(t_len));
    for (int64_t t = 0; t < t_len; ++t) {
        NodeId at = g.reshape(g.slice_cols(a, t, t + 1), {g.value(a).rows()});
        NodeId z = g.tanh(g.add_col_broadcast(b, at));
        frames.push_back(g.log_softmax(linear(g, L, "joint.w_out", z)));
    }
    NodeId flat = t_len == 1 ? frames[0] : g.concat_cols(frames);
    return g.reshape(flat, {cfg_.vocab, t_len, contexts});
}

// --- training objectives ---------------------------------------------------------

HybridLossNodes transformer_loss(Graph& g, const TransformerModel& model, const ModelLeaves& L,
                                 const Tensor& feats, const std::vector<int>& tokens,
                                 double ctc_weight, double label_smoothing,
                                 uint64_t dropout_key) {
    NodeId enc = model.encode_features(g, L, feats, dropout_key);
    std::vector<int> with_eos = tokens;
    with_eos.push_back(kEosId);
    NodeId nll = nll_loss(g, model.decode(g, L, tokens, enc, dropout_key), with_eos, label_smoothing);
    NodeId ctc = ctc_loss(g, model.ctc_head(g, L, enc), tokens);
    return HybridLossNodes{hybrid_loss(g, nll, ctc, ctc_weight), nll, ctc};
}

NodeId rnnt_training_loss(Graph& g, const RnntModel& model, const ModelLeaves& L,
                          const Tensor& feats, const std::vector<int>& tokens,
                          uint64_t dropout_key) {
    NodeId enc = model.encode_features(g, L, feats, dropout_key);
    NodeId pred = model.predict(g, L, tokens);
    return transducer_loss(g, model.joint_lattice(g, L, enc, pred), tokens);
}

}  // namespace sft
