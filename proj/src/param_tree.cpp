#include "sft/param_tree.hpp"

namespace sft {

Tensor& ParamTree::add(const std::string& path, Tensor t) {
    if (index_.count(path)) throw ContractError("param tree: duplicate path " + path);
    index_.emplace(path, entries_.size());
    entries_.push_back(Entry{path, std::move(t)});
    return entries_.back().tensor;
}

Tensor& ParamTree::at(const std::string& path) {
    auto it = index_.find(path);
    if (it == index_.end()) throw ContractError("param tree: unknown path " + path);
    return entries_[it->second].tensor;
}

const Tensor& ParamTree::at(const std::string& path) const {
    auto it = index_.find(path);
    if (it == index_.end()) throw ContractError("param tree: unknown path " + path);
    return entries_[it->second].tensor;
}

size_t ParamTree::index_of(const std::string& path) const {
    auto it = index_.find(path);
    if (it == index_.end()) throw ContractError("param tree: unknown path " + path);
    return it->second;
}

int64_t ParamTree::total_elements() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

bool ParamTree::same_layout(const ParamTree& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].path != o.entries_[i].path ||
            entries_[i].tensor.shape != o.entries_[i].tensor.shape)
            return false;
    return true;
}

ParamTree ParamTree::zeros_like() const {
    ParamTree t;
    for (const auto& e : entries_) t.add(e.path, Tensor::zeros(e.tensor.shape));
    return t;
}

}  // namespace sft
