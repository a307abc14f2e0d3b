#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sft/tensor.hpp"

namespace sft {

// Name-addressable parameter tree. Entries keep registration order, which is
// the canonical enumeration order for censuses, masks, optimizer state and
// checkpoints.
class ParamTree {
public:
    struct Entry {
        std::string path;
        Tensor tensor;
    };

    Tensor& add(const std::string& path, Tensor t);
    bool has(const std::string& path) const { return index_.count(path) > 0; }
    Tensor& at(const std::string& path);
    const Tensor& at(const std::string& path) const;
    size_t index_of(const std::string& path) const;

    size_t size() const { return entries_.size(); }
    Entry& entry(size_t i) { return entries_[i]; }
    const Entry& entry(size_t i) const { return entries_[i]; }
    int64_t total_elements() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    // True when both trees have identical paths, order and shapes.
    bool same_layout(const ParamTree& o) const;
    // Zero-filled tree with this tree's layout (gradient / moment buffers).
    ParamTree zeros_like() const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace sft
