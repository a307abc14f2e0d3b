#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sft/param_tree.hpp"

namespace sft {

enum class ModelKind { transformer, rnnt };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& s);

// Functional parameter groups. Every parameter path classifies into exactly
// one tag; the transformer uses six of them and the transducer five.
enum class ModuleTag {
    Embeddings,
    LayerNorm,
    EncoderMhaFfn,
    DecoderMhaFfn,
    EncoderMhaConvFfn,
    Prediction,
    Ctc,
    Output,
};

constexpr int kNumTags = 8;

std::string tag_name(ModuleTag t);
ModuleTag tag_from_name(const std::string& s);
const std::set<ModuleTag>& tags_for_kind(ModelKind k);

// Pure function of the path string; throws ClassifyError on anything the
// canonical grammar does not cover.
ModuleTag classify_param(const std::string& path);

// Paths ending in ".b" are bias vectors; layer-norm gamma/beta are not.
bool is_bias_path(const std::string& path);

// (path, shape) pair; censuses run on these so they work equally from a
// live tree, a config-derived layout, or a checkpoint header.
struct ParamInfo {
    std::string path;
    std::vector<int64_t> shape;
    int64_t numel() const;
};

std::vector<ParamInfo> param_infos(const ParamTree& tree);

struct TagCount {
    int64_t weights = 0;
    int64_t biases = 0;
    int64_t total() const { return weights + biases; }
};

struct Census {
    TagCount per_tag[kNumTags];
    TagCount grand;

    TagCount& of(ModuleTag t) { return per_tag[static_cast<int>(t)]; }
    const TagCount& of(ModuleTag t) const { return per_tag[static_cast<int>(t)]; }
};

Census census(const std::vector<ParamInfo>& infos);

int64_t count_params(const std::vector<ParamInfo>& infos, const std::set<ModuleTag>& tags,
                     bool include_bias);

// Display convention: one decimal of millions, round-half-up ("62.9M").
std::string human_millions(int64_t n);

}  // namespace sft
