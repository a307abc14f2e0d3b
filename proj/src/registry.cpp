#include "sft/registry.hpp"

#include <cstdio>

#include "sft/error.hpp"

namespace sft {

std::string model_kind_name(ModelKind k) {
    return k == ModelKind::transformer ? "transformer" : "rnnt";
}

ModelKind model_kind_from_name(const std::string& s) {
    if (s == "transformer") return ModelKind::transformer;
    if (s == "rnnt") return ModelKind::rnnt;
    throw ConfigError("unknown model kind '" + s + "'");
}

std::string tag_name(ModuleTag t) {
    switch (t) {
        case ModuleTag::Embeddings: return "embeddings";
        case ModuleTag::LayerNorm: return "layer_norm";
        case ModuleTag::EncoderMhaFfn: return "enc_mha_ffn";
        case ModuleTag::DecoderMhaFfn: return "dec_mha_ffn";
        case ModuleTag::EncoderMhaConvFfn: return "enc_mha_conv_ffn";
        case ModuleTag::Prediction: return "prediction";
        case ModuleTag::Ctc: return "ctc";
        case ModuleTag::Output: return "output";
    }
    throw ClassifyError("bad tag value");
}

ModuleTag tag_from_name(const std::string& s) {
    for (int i = 0; i < kNumTags; ++i)
        if (tag_name(static_cast<ModuleTag>(i)) == s) return static_cast<ModuleTag>(i);
    throw ConfigError("unknown module tag '" + s + "'");
}

const std::set<ModuleTag>& tags_for_kind(ModelKind k) {
    static const std::set<ModuleTag> transformer_tags = {
        ModuleTag::Embeddings,    ModuleTag::LayerNorm, ModuleTag::EncoderMhaFfn,
        ModuleTag::DecoderMhaFfn, ModuleTag::Ctc,       ModuleTag::Output};
    static const std::set<ModuleTag> rnnt_tags = {
        ModuleTag::Embeddings, ModuleTag::LayerNorm, ModuleTag::EncoderMhaConvFfn,
        ModuleTag::Prediction, ModuleTag::Output};
    return k == ModelKind::transformer ? transformer_tags : rnnt_tags;
}

namespace {
bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }
bool ends_with(const std::string& s, const char* suffix) {
    size_t n = std::char_traits<char>::length(suffix);
    return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}
}  // namespace

bool is_bias_path(const std::string& path) { return ends_with(path, ".b"); }

ModuleTag classify_param(const std::string& path) {
    // All layer-norm affine parameters, wherever they sit.
    if (ends_with(path, ".gamma") || ends_with(path, ".beta")) return ModuleTag::LayerNorm;
    // The convolutional front end feeds the encoder's input embeddings.
    if (starts_with(path, "encoder.sub.")) return ModuleTag::Embeddings;
    if (path == "decoder.embed" || path == "pred.embed") return ModuleTag::Embeddings;
    if (starts_with(path, "encoder.block")) return ModuleTag::EncoderMhaFfn;
    if (starts_with(path, "decoder.block")) return ModuleTag::DecoderMhaFfn;
    if (starts_with(path, "conformer.block")) return ModuleTag::EncoderMhaConvFfn;
    if (starts_with(path, "pred.lstm")) return ModuleTag::Prediction;
    if (path == "ctc.w" || path == "ctc.w.b") return ModuleTag::Ctc;
    if (path == "out.w" || path == "out.w.b" || starts_with(path, "joint.")) return ModuleTag::Output;
    throw ClassifyError("no taxonomy rule covers parameter path '" + path + "'");
}

int64_t ParamInfo::numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::vector<ParamInfo> param_infos(const ParamTree& tree) {
    std::vector<ParamInfo> out;
    out.reserve(tree.size());
    for (const auto& e : tree) out.push_back(ParamInfo{e.path, e.tensor.shape});
    return out;
}

Census census(const std::vector<ParamInfo>& infos) {
    Census c;
    for (const auto& info : infos) {
        TagCount& tc = c.of(classify_param(info.path));
        int64_t n = info.numel();
        if (is_bias_path(info.path)) {
            tc.biases += n;
            c.grand.biases += n;
        } else {
            tc.weights += n;
            c.grand.weights += n;
        }
    }
    return c;
}

int64_t count_params(const std::vector<ParamInfo>& infos, const std::set<ModuleTag>& tags,
                     bool include_bias) {
    int64_t n = 0;
    for (const auto& info : infos) {
        if (!tags.count(classify_param(info.path))) continue;
        if (!include_bias && is_bias_path(info.path)) continue;
        n += info.numel();
    }
    return n;
}

std::string human_millions(int64_t n) {
    // round-half-up at one decimal of millions
    int64_t tenths = (n * 10 + 500000) / 1000000;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld.%lldM", static_cast<long long>(tenths / 10),
                  static_cast<long long>(tenths % 10));
    return buf;
}

}  // namespace sft
