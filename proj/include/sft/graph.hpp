#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "sft/tensor.hpp"

namespace sft {

using NodeId = int32_t;

// Reverse-mode tape over dense tensors. Each primitive appends one tape
// entry; backward() walks the tape once in reverse. Construction and
// backward are single-threaded; a finished graph may be read concurrently.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- leaves -----------------------------------------------------------
    NodeId leaf(Tensor value);  // owning copy; grad tracked iff value.requires_grad
    // Non-owning leaf; caller keeps `value` alive for the graph's lifetime.
    NodeId leaf_ref(const Tensor& value, bool requires_grad);
    NodeId constant(Tensor value);  // owning, never differentiated

    // --- primitives ---------------------------------------------------------
    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    // m: R x C, v: length-R vector added to every column (bias add).
    NodeId add_col_broadcast(NodeId m, NodeId v);
    // x: C x H x W, v: length-C vector added to every (h, w) position.
    NodeId add_chan_broadcast(NodeId x, NodeId v);
    NodeId relu(NodeId a);
    NodeId tanh(NodeId a);
    NodeId sigmoid(NodeId a);
    // x: D x T, gamma/beta: D. Normalizes each column to zero mean and unit
    // (population) variance, then applies the element-wise affine map.
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    // Per-column log-probabilities, logsumexp-stabilized.
    NodeId log_softmax(NodeId x);
    // Per-row softmax (attention weights).
    NodeId softmax_rows(NodeId x);
    // x: C_in x H x W, k: C_out x C_in x kh x kw. Cross-correlation.
    NodeId conv2d(NodeId x, NodeId k, int stride, int pad);
    // x: D x T, k: D x kw. Per-channel 1-D conv over time, same-length output.
    NodeId depthwise_conv1d(NodeId x, NodeId k);
    NodeId reshape(NodeId a, std::vector<int64_t> shape);
    NodeId transpose(NodeId a);
    NodeId slice_rows(NodeId a, int64_t r0, int64_t r1);
    NodeId slice_cols(NodeId a, int64_t c0, int64_t c1);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    // a: D x V, idx: column ids -> D x |idx| (embedding lookup).
    NodeId gather_cols(NodeId a, const std::vector<int>& idx);
    NodeId sum(NodeId a);  // -> scalar
    // Seeded inverted dropout; p = 0 is the identity.
    NodeId dropout(NodeId a, double p, uint64_t key);

    // Extension point for ops with hand-written backward rules (the DP
    // losses live outside this module and hook in here).
    using BackwardFn = std::function<void(Graph&, const std::vector<NodeId>&, NodeId)>;
    NodeId custom(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

    // --- backward -----------------------------------------------------------
    // root must be scalar. Gradients accumulate on every requires-grad leaf;
    // leaves unreachable from root keep a zero gradient.
    void backward(NodeId root);

    const Tensor& value(NodeId id) const;
    // Zero tensor of the node's shape if nothing was accumulated.
    const Tensor& grad(NodeId id);
    bool has_grad(NodeId id) const;

    size_t tape_length() const { return entries_.size(); }
    // Entries visited by the last backward() call (instrumentation).
    size_t backward_visits() const { return backward_visits_; }

    // Internal accessors used by backward closures.
    Tensor& grad_buf(NodeId id);           // allocates zeros on first use
    const Tensor* grad_if(NodeId id) const;  // nullptr if untouched
    bool needs_grad(NodeId id) const;

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;  // set for leaf_ref nodes
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;  // some requires-grad node feeds it
    };
    struct Entry {
        NodeId out;
        std::vector<NodeId> inputs;
        BackwardFn fn;
    };

    NodeId push(Tensor value, std::vector<NodeId> inputs, BackwardFn fn);
    bool any_requires(const std::vector<NodeId>& ids) const;

    std::deque<Node> nodes_;  // deque: node references stay valid as the graph grows
    std::vector<Entry> entries_;
    size_t backward_visits_ = 0;
};

}  // namespace sft
