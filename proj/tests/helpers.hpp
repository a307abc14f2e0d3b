#pragma once

#include <vector>

#include "sft/param_tree.hpp"
#include "sft/rng.hpp"
#include "sft/tensor.hpp"

namespace sfttest {

inline sft::Tensor random_tensor(std::vector<int64_t> shape, uint64_t key, double scale = 1.0) {
    sft::Tensor t = sft::Tensor::zeros(std::move(shape));
    for (size_t i = 0; i < t.data.size(); ++i)
        t.data[i] = sft::quantize(scale * sft::rng::normal(key, i));
    return t;
}

inline std::vector<int> random_tokens(int len, int lo, int hi, uint64_t key) {
    std::vector<int> out(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i)
        out[static_cast<size_t>(i)] =
            lo + static_cast<int>(sft::rng::below(key, static_cast<uint64_t>(i),
                                                  static_cast<uint64_t>(hi - lo)));
    return out;
}

}  // namespace sfttest
