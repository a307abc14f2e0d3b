#include "sft/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sft/rng.hpp"

namespace sft {

namespace {
inline double q(double x) { return quantize(x); }
}

// --- node plumbing ----------------------------------------------------------

NodeId Graph::leaf(Tensor value) {
    Node n;
    n.requires_grad = value.requires_grad;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf_ref(const Tensor& value, bool requires_grad) {
    Node n;
    n.external = &value;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Graph::value(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.external ? *n.external : n.owned;
}

bool Graph::needs_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

bool Graph::has_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].has_grad; }

Tensor& Graph::grad_buf(NodeId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) {
        n.grad = Tensor::zeros(value(id).shape);
        n.has_grad = true;
    }
    return n.grad;
}

const Tensor* Graph::grad_if(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.has_grad ? &n.grad : nullptr;
}

const Tensor& Graph::grad(NodeId id) {
    return grad_buf(id);
}

bool Graph::any_requires(const std::vector<NodeId>& ids) const {
    return std::any_of(ids.begin(), ids.end(), [&](NodeId i) { return needs_grad(i); });
}

NodeId Graph::push(Tensor value, std::vector<NodeId> inputs, BackwardFn fn) {
    bool rg = any_requires(inputs);
    Node n;
    n.owned = std::move(value);
    n.requires_grad = rg;
    nodes_.push_back(std::move(n));
    NodeId out = static_cast<NodeId>(nodes_.size() - 1);
    if (rg) entries_.push_back(Entry{out, std::move(inputs), std::move(fn)});
    return out;
}

NodeId Graph::custom(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
    return push(std::move(value), std::move(inputs), std::move(backward));
}

void Graph::backward(NodeId root) {
    if (value(root).numel() != 1)
        throw ContractError("backward: root must be scalar, got " + value(root).shape_str());
    grad_buf(root).data[0] = 1.0;
    backward_visits_ = 0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        ++backward_visits_;
        if (!nodes_[static_cast<size_t>(it->out)].has_grad) continue;  // not on a path to root
        it->fn(*this, it->inputs, it->out);
    }
}

// --- primitives ---------------------------------------------------------------

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows())
        throw ShapeError("matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
    int64_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C = Tensor::zeros({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            double av = A.data[static_cast<size_t>(i * k + p)];
            if (av == 0.0) continue;
            const double* brow = &B.data[static_cast<size_t>(p * n)];
            double* crow = &C.data[static_cast<size_t>(i * n)];
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
        double* crow = &C.data[static_cast<size_t>(i * n)];
        for (int64_t j = 0; j < n; ++j) crow[j] = q(crow[j]);
    }
    return push(std::move(C), {a, b}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& A = g.value(in[0]);
        const Tensor& B = g.value(in[1]);
        const Tensor& dC = *g.grad_if(out);
        int64_t m = A.rows(), k = A.cols(), n = B.cols();
        if (g.needs_grad(in[0])) {
            Tensor& dA = g.grad_buf(in[0]);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int64_t j = 0; j < n; ++j)
                        acc += dC.data[static_cast<size_t>(i * n + j)] *
                               B.data[static_cast<size_t>(p * n + j)];
                    double& slot = dA.data[static_cast<size_t>(i * k + p)];
                    slot = q(slot + acc);
                }
        }
        if (g.needs_grad(in[1])) {
            Tensor& dB = g.grad_buf(in[1]);
            for (int64_t p = 0; p < k; ++p)
                for (int64_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < m; ++i)
                        acc += A.data[static_cast<size_t>(i * k + p)] *
                               dC.data[static_cast<size_t>(i * n + j)];
                    double& slot = dB.data[static_cast<size_t>(p * n + j)];
                    slot = q(slot + acc);
                }
        }
    });
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    check_same_shape(A, B, "add");
    Tensor C = Tensor::zeros(A.shape);
    for (size_t i = 0; i < C.data.size(); ++i) C.data[i] = q(A.data[i] + B.data[i]);
    return push(std::move(C), {a, b}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dC = *g.grad_if(out);
        for (NodeId id : in) {
            if (!g.needs_grad(id)) continue;
            Tensor& d = g.grad_buf(id);
            for (size_t i = 0; i < d.data.size(); ++i) d.data[i] = q(d.data[i] + dC.data[i]);
        }
    });
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    check_same_shape(A, B, "mul");
    Tensor C = Tensor::zeros(A.shape);
    for (size_t i = 0; i < C.data.size(); ++i) C.data[i] = q(A.data[i] * B.data[i]);
    return push(std::move(C), {a, b}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dC = *g.grad_if(out);
        const Tensor& A = g.value(in[0]);
        const Tensor& B = g.value(in[1]);
        if (g.needs_grad(in[0])) {
            Tensor& dA = g.grad_buf(in[0]);
            for (size_t i = 0; i < dA.data.size(); ++i)
                dA.data[i] = q(dA.data[i] + dC.data[i] * B.data[i]);
        }
        if (g.needs_grad(in[1])) {
            Tensor& dB = g.grad_buf(in[1]);
            for (size_t i = 0; i < dB.data.size(); ++i)
                dB.data[i] = q(dB.data[i] + dC.data[i] * A.data[i]);
        }
    });
}

NodeId Graph::scale(NodeId a, double c) {
    const Tensor& A = value(a);
    Tensor C = Tensor::zeros(A.shape);
    for (size_t i = 0; i < C.data.size(); ++i) C.data[i] = q(A.data[i] * c);
    return push(std::move(C), {a}, [c](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dC = *g.grad_if(out);
        Tensor& dA = g.grad_buf(in[0]);
        for (size_t i = 0; i < dA.data.size(); ++i) dA.data[i] = q(dA.data[i] + dC.data[i] * c);
    });
}

NodeId Graph::add_col_broadcast(NodeId m, NodeId v) {
    const Tensor& M = value(m);
    const Tensor& V = value(v);
    if (M.ndim() != 2 || V.numel() != M.rows())
        throw ShapeError("add_col_broadcast: " + M.shape_str() + " vs " + V.shape_str());
    Tensor C = Tensor::zeros(M.shape);
    int64_t R = M.rows(), Cn = M.cols();
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < Cn; ++c)
            C.at2(r, c) = q(M.at2(r, c) + V.data[static_cast<size_t>(r)]);
    return push(std::move(C), {m, v}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dC = *g.grad_if(out);
        int64_t R = dC.rows(), Cn = dC.cols();
        if (g.needs_grad(in[0])) {
            Tensor& dM = g.grad_buf(in[0]);
            for (size_t i = 0; i < dM.data.size(); ++i) dM.data[i] = q(dM.data[i] + dC.data[i]);
        }
        if (g.needs_grad(in[1])) {
            Tensor& dV = g.grad_buf(in[1]);
            for (int64_t r = 0; r < R; ++r) {
                double acc = 0.0;
                for (int64_t c = 0; c < Cn; ++c) acc += dC.at2(r, c);
                dV.data[static_cast<size_t>(r)] = q(dV.data[static_cast<size_t>(r)] + acc);
            }
        }
    });
}

NodeId Graph::add_chan_broadcast(NodeId x, NodeId v) {
    const Tensor& X = value(x);
    const Tensor& V = value(v);
    if (X.ndim() != 3 || V.numel() != X.dim(0))
        throw ShapeError("add_chan_broadcast: " + X.shape_str() + " vs " + V.shape_str());
    Tensor C = Tensor::zeros(X.shape);
    int64_t ch = X.dim(0), hw = X.dim(1) * X.dim(2);
    for (int64_t c = 0; c < ch; ++c)
        for (int64_t i = 0; i < hw; ++i)
            C.data[static_cast<size_t>(c * hw + i)] =
                q(X.data[static_cast<size_t>(c * hw + i)] + V.data[static_cast<size_t>(c)]);
    return push(std::move(C), {x, v}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dC = *g.grad_if(out);
        int64_t ch = dC.dim(0), hw = dC.dim(1) * dC.dim(2);
        if (g.needs_grad(in[0])) {
            Tensor& dX = g.grad_buf(in[0]);
            for (size_t i = 0; i < dX.data.size(); ++i) dX.data[i] = q(dX.data[i] + dC.data[i]);
        }
        if (g.needs_grad(in[1])) {
            Tensor& dV = g.grad_buf(in[1]);
            for (int64_t c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int64_t i = 0; i < hw; ++i) acc += dC.data[static_cast<size_t>(c * hw + i)];
                dV.data[static_cast<size_t>(c)] = q(dV.data[static_cast<size_t>(c)] + acc);
            }
        }
    });
}

NodeId Graph::relu(NodeId a) {
    const Tensor& A = value(a);
    Tensor C = Tensor::zeros(A.shape);
    for (size_t i = 0; i < C.data.size(); ++i) C.data[i] = A.data[i] > 0.0 ? A.data[i] : 0.0;
    return push(std::move(C), {a}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dC = *g.grad_if(out);
        const Tensor& A = g.value(in[0]);
        Tensor& dA = g.grad_buf(in[0]);
        for (size_t i = 0; i < dA.data.size(); ++i)
            if (A.data[i] > 0.0) dA.data[i] = q(dA.data[i] + dC.data[i]);
    });
}

NodeId Graph::tanh(NodeId a) {
    const Tensor& A = value(a);
    Tensor C = Tensor::zeros(A.shape);
    for (size_t i = 0; i < C.data.size(); ++i) C.data[i] = q(std::tanh(A.data[i]));
    return push(std::move(C), {a}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dC = *g.grad_if(out);
        const Tensor& Y = g.value(out);
        Tensor& dA = g.grad_buf(in[0]);
        for (size_t i = 0; i < dA.data.size(); ++i)
            dA.data[i] = q(dA.data[i] + dC.data[i] * (1.0 - Y.data[i] * Y.data[i]));
    });
}

NodeId Graph::sigmoid(NodeId a) {
    const Tensor& A = value(a);
    Tensor C = Tensor::zeros(A.shape);
    for (size_t i = 0; i < C.data.size(); ++i) {
        double x = A.data[i];
        C.data[i] = q(x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x)));
    }
    return push(std::move(C), {a}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dC = *g.grad_if(out);
        const Tensor& Y = g.value(out);
        Tensor& dA = g.grad_buf(in[0]);
        for (size_t i = 0; i < dA.data.size(); ++i)
            dA.data[i] = q(dA.data[i] + dC.data[i] * Y.data[i] * (1.0 - Y.data[i]));
    });
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& X = value(x);
    const Tensor& G = value(gamma);
    const Tensor& B = value(beta);
    if (X.ndim() != 2) throw ShapeError("layer_norm: expected 2-D input, got " + X.shape_str());
    int64_t D = X.rows(), T = X.cols();
    if (D < 1) throw ShapeError("layer_norm: empty normalization axis");
    if (G.numel() != D || B.numel() != D)
        throw ShapeError("layer_norm: gamma/beta must have length " + std::to_string(D));
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");

    Tensor Y = Tensor::zeros(X.shape);
    // Saved per column for backward: 1/sqrt(var + eps) and mean.
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(T));
    auto means = std::make_shared<std::vector<double>>(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        double mean = 0.0;
        for (int64_t d = 0; d < D; ++d) mean += X.at2(d, t);
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (int64_t d = 0; d < D; ++d) {
            double c = X.at2(d, t) - mean;
            var += c * c;
        }
        var /= static_cast<double>(D);
        double s = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(t)] = s;
        (*means)[static_cast<size_t>(t)] = mean;
        for (int64_t d = 0; d < D; ++d)
            Y.at2(d, t) = q(G.data[static_cast<size_t>(d)] * ((X.at2(d, t) - mean) * s) +
                            B.data[static_cast<size_t>(d)]);
    }
    return push(std::move(Y), {x, gamma, beta},
                [inv_std, means](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dY = *g.grad_if(out);
        const Tensor& X = g.value(in[0]);
        const Tensor& G = g.value(in[1]);
        int64_t D = X.rows(), T = X.cols();
        for (int64_t t = 0; t < T; ++t) {
            double s = (*inv_std)[static_cast<size_t>(t)];
            double mean = (*means)[static_cast<size_t>(t)];
            // xhat and dXhat for this column.
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            std::vector<double> xhat(static_cast<size_t>(D)), dxhat(static_cast<size_t>(D));
            for (int64_t d = 0; d < D; ++d) {
                xhat[static_cast<size_t>(d)] = (X.at2(d, t) - mean) * s;
                dxhat[static_cast<size_t>(d)] = dY.at2(d, t) * G.data[static_cast<size_t>(d)];
                mean_dxhat += dxhat[static_cast<size_t>(d)];
                mean_dxhat_xhat += dxhat[static_cast<size_t>(d)] * xhat[static_cast<size_t>(d)];
            }
            mean_dxhat /= static_cast<double>(D);
            mean_dxhat_xhat /= static_cast<double>(D);
            if (g.needs_grad(in[0])) {
                Tensor& dX = g.grad_buf(in[0]);
                for (int64_t d = 0; d < D; ++d)
                    dX.at2(d, t) = q(dX.at2(d, t) +
                                     s * (dxhat[static_cast<size_t>(d)] - mean_dxhat -
                                          xhat[static_cast<size_t>(d)] * mean_dxhat_xhat));
            }
            if (g.needs_grad(in[1])) {
                Tensor& dG = g.grad_buf(in[1]);
                for (int64_t d = 0; d < D; ++d)
                    dG.data[static_cast<size_t>(d)] = q(dG.data[static_cast<size_t>(d)] +
                                                        dY.at2(d, t) * xhat[static_cast<size_t>(d)]);
            }
            if (g.needs_grad(in[2])) {
                Tensor& dB = g.grad_buf(in[2]);
                for (int64_t d = 0; d < D; ++d)
                    dB.data[static_cast<size_t>(d)] =
                        q(dB.data[static_cast<size_t>(d)] + dY.at2(d, t));
            }
        }
    });
}

NodeId Graph::log_softmax(NodeId x) {
    const Tensor& X = value(x);
    if (X.ndim() != 2) throw ShapeError("log_softmax: expected 2-D input, got " + X.shape_str());
    int64_t V = X.rows(), T = X.cols();
    Tensor Y = Tensor::zeros(X.shape);
    for (int64_t t = 0; t < T; ++t) {
        double mx = -HUGE_VAL;
        for (int64_t v = 0; v < V; ++v) mx = std::max(mx, X.at2(v, t));
        double acc = 0.0;
        for (int64_t v = 0; v < V; ++v) acc += std::exp(X.at2(v, t) - mx);
        double lse = mx + std::log(acc);
        for (int64_t v = 0; v < V; ++v) Y.at2(v, t) = q(X.at2(v, t) - lse);
    }
    return push(std::move(Y), {x}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dY = *g.grad_if(out);
        const Tensor& Y = g.value(out);
        Tensor& dX = g.grad_buf(in[0]);
        int64_t V = Y.rows(), T = Y.cols();
        for (int64_t t = 0; t < T; ++t) {
            double sum_dy = 0.0;
            for (int64_t v = 0; v < V; ++v) sum_dy += dY.at2(v, t);
            for (int64_t v = 0; v < V; ++v)
                dX.at2(v, t) = q(dX.at2(v, t) + dY.at2(v, t) - std::exp(Y.at2(v, t)) * sum_dy);
        }
    });
}

NodeId Graph::softmax_rows(NodeId x) {
    const Tensor& X = value(x);
    if (X.ndim() != 2) throw ShapeError("softmax_rows: expected 2-D input, got " + X.shape_str());
    int64_t R = X.rows(), C = X.cols();
    Tensor Y = Tensor::zeros(X.shape);
    for (int64_t r = 0; r < R; ++r) {
        double mx = -HUGE_VAL;
        for (int64_t c = 0; c < C; ++c) mx = std::max(mx, X.at2(r, c));
        double acc = 0.0;
        for (int64_t c = 0; c < C; ++c) acc += std::exp(X.at2(r, c) - mx);
        for (int64_t c = 0; c < C; ++c) Y.at2(r, c) = q(std::exp(X.at2(r, c) - mx) / acc);
    }
    return push(std::move(Y), {x}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dY = *g.grad_if(out);
        const Tensor& Y = g.value(out);
        Tensor& dX = g.grad_buf(in[0]);
        int64_t R = Y.rows(), C = Y.cols();
        for (int64_t r = 0; r < R; ++r) {
            double dot = 0.0;
            for (int64_t c = 0; c < C; ++c) dot += dY.at2(r, c) * Y.at2(r, c);
            for (int64_t c = 0; c < C; ++c)
                dX.at2(r, c) = q(dX.at2(r, c) + Y.at2(r, c) * (dY.at2(r, c) - dot));
        }
    });
}

NodeId Graph::conv2d(NodeId x, NodeId k, int stride, int pad) {
    const Tensor& X = value(x);
    const Tensor& K = value(k);
    if (X.ndim() != 3 || K.ndim() != 4 || K.dim(1) != X.dim(0))
        throw ShapeError("conv2d: input " + X.shape_str() + " vs kernels " + K.shape_str());
    if (stride != 1 && stride != 2) throw ContractError("conv2d: stride must be 1 or 2");
    if (pad != 0 && pad != 1) throw ContractError("conv2d: pad must be 0 or 1");
    int64_t Ci = X.dim(0), H = X.dim(1), W = X.dim(2);
    int64_t Co = K.dim(0), kh = K.dim(2), kw = K.dim(3);
    int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho < 1 || Wo < 1)
        throw ShapeError("conv2d: output would be empty for input " + X.shape_str());

    Tensor Y = Tensor::zeros({Co, Ho, Wo});
    auto xi = [&](int64_t c, int64_t h, int64_t w) {
        return X.data[static_cast<size_t>((c * H + h) * W + w)];
    };
    for (int64_t co = 0; co < Co; ++co)
        for (int64_t ho = 0; ho < Ho; ++ho)
            for (int64_t wo = 0; wo < Wo; ++wo) {
                double acc = 0.0;
                for (int64_t ci = 0; ci < Ci; ++ci)
                    for (int64_t i = 0; i < kh; ++i)
                        for (int64_t j = 0; j < kw; ++j) {
                            int64_t h = ho * stride + i - pad;
                            int64_t w = wo * stride + j - pad;
                            if (h < 0 || h >= H || w < 0 || w >= W) continue;
                            acc += xi(ci, h, w) *
                                   K.data[static_cast<size_t>(((co * Ci + ci) * kh + i) * kw + j)];
                        }
                Y.data[static_cast<size_t>((co * Ho + ho) * Wo + wo)] = q(acc);
            }
    return push(std::move(Y), {x, k},
                [stride, pad](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dY = *g.grad_if(out);
        const Tensor& X = g.value(in[0]);
        const Tensor& K = g.value(in[1]);
        int64_t Ci = X.dim(0), H = X.dim(1), W = X.dim(2);
        int64_t Co = K.dim(0), kh = K.dim(2), kw = K.dim(3);
        int64_t Ho = dY.dim(1), Wo = dY.dim(2);
        bool gx = g.needs_grad(in[0]), gk = g.needs_grad(in[1]);
        Tensor* dX = gx ? &g.grad_buf(in[0]) : nullptr;
        Tensor* dK = gk ? &g.grad_buf(in[1]) : nullptr;
        // Scatter along the same index walk as the forward pass.
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t ho = 0; ho < Ho; ++ho)
                for (int64_t wo = 0; wo < Wo; ++wo) {
                    double gy = dY.data[static_cast<size_t>((co * Ho + ho) * Wo + wo)];
                    if (gy == 0.0) continue;
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t i = 0; i < kh; ++i)
                            for (int64_t j = 0; j < kw; ++j) {
                                int64_t h = ho * stride + i - pad;
                                int64_t w = wo * stride + j - pad;
                                if (h < 0 || h >= H || w < 0 || w >= W) continue;
                                size_t xio = static_cast<size_t>((ci * H + h) * W + w);
                                size_t kio =
                                    static_cast<size_t>(((co * Ci + ci) * kh + i) * kw + j);
                                if (gx) dX->data[xio] = q(dX->data[xio] + gy * K.data[kio]);
                                if (gk) dK->data[kio] = q(dK->data[kio] + gy * X.data[xio]);
                            }
                }
    });
}

NodeId Graph::depthwise_conv1d(NodeId x, NodeId k) {
    const Tensor& X = value(x);
    const Tensor& K = value(k);
    if (X.ndim() != 2 || K.ndim() != 2 || K.rows() != X.rows() || K.cols() % 2 == 0)
        throw ShapeError("depthwise_conv1d: input " + X.shape_str() + " vs kernel " +
                         K.shape_str() + " (kernel width must be odd)");
    int64_t D = X.rows(), T = X.cols(), kw = K.cols(), half = kw / 2;
    Tensor Y = Tensor::zeros(X.shape);
    for (int64_t d = 0; d < D; ++d)
        for (int64_t t = 0; t < T; ++t) {
            double acc = 0.0;
            for (int64_t j = 0; j < kw; ++j) {
                int64_t s = t + j - half;
                if (s < 0 || s >= T) continue;
                acc += X.at2(d, s) * K.at2(d, j);
            }
            Y.at2(d, t) = q(acc);
        }
    return push(std::move(Y), {x, k}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dY = *g.grad_if(out);
        const Tensor& X = g.value(in[0]);
        const Tensor& K = g.value(in[1]);
        int64_t D = X.rows(), T = X.cols(), kw = K.cols(), half = kw / 2;
        bool gx = g.needs_grad(in[0]), gk = g.needs_grad(in[1]);
        Tensor* dX = gx ? &g.grad_buf(in[0]) : nullptr;
        Tensor* dK = gk ? &g.grad_buf(in[1]) : nullptr;
        for (int64_t d = 0; d < D; ++d)
            for (int64_t t = 0; t < T; ++t) {
                double gy = dY.at2(d, t);
                if (gy == 0.0) continue;
                for (int64_t j = 0; j < kw; ++j) {
                    int64_t s = t + j - half;
                    if (s < 0 || s >= T) continue;
                    if (gx) dX->at2(d, s) = q(dX->at2(d, s) + gy * K.at2(d, j));
                    if (gk) dK->at2(d, j) = q(dK->at2(d, j) + gy * X.at2(d, s));
                }
            }
    });
}

NodeId Graph::reshape(NodeId a, std::vector<int64_t> shape) {
    const Tensor& A = value(a);
    Tensor C = Tensor::zeros(std::move(shape));
    if (C.numel() != A.numel())
        throw ShapeError("reshape: " + A.shape_str() + " -> " + C.shape_str());
    C.data = A.data;
    return push(std::move(C), {a}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dC = *g.grad_if(out);
        Tensor& dA = g.grad_buf(in[0]);
        for (size_t i = 0; i < dA.data.size(); ++i) dA.data[i] = q(dA.data[i] + dC.data[i]);
    });
}

NodeId Graph::transpose(NodeId a) {
    const Tensor& A = value(a);
    if (A.ndim() != 2) throw ShapeError("transpose: expected 2-D input, got " + A.shape_str());
    int64_t R = A.rows(), C = A.cols();
    Tensor Y = Tensor::zeros({C, R});
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) Y.at2(c, r) = A.at2(r, c);
    return push(std::move(Y), {a}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dY = *g.grad_if(out);
        Tensor& dA = g.grad_buf(in[0]);
        int64_t R = dA.rows(), C = dA.cols();
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) dA.at2(r, c) = q(dA.at2(r, c) + dY.at2(c, r));
    });
}

NodeId Graph::slice_rows(NodeId a, int64_t r0, int64_t r1) {
    const Tensor& A = value(a);
    if (A.ndim() != 2 || r0 < 0 || r1 > A.rows() || r0 >= r1)
        throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") of " + A.shape_str());
    int64_t C = A.cols();
    Tensor Y = Tensor::zeros({r1 - r0, C});
    for (int64_t r = r0; r < r1; ++r)
        for (int64_t c = 0; c < C; ++c) Y.at2(r - r0, c) = A.at2(r, c);
    return push(std::move(Y), {a}, [r0](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dY = *g.grad_if(out);
        Tensor& dA = g.grad_buf(in[0]);
        for (int64_t r = 0; r < dY.rows(); ++r)
            for (int64_t c = 0; c < dY.cols(); ++c)
                dA.at2(r + r0, c) = q(dA.at2(r + r0, c) + dY.at2(r, c));
    });
}

NodeId Graph::slice_cols(NodeId a, int64_t c0, int64_t c1) {
    const Tensor& A = value(a);
    if (A.ndim() != 2 || c0 < 0 || c1 > A.cols() || c0 >= c1)
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") of " + A.shape_str());
    int64_t R = A.rows();
    Tensor Y = Tensor::zeros({R, c1 - c0});
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = c0; c < c1; ++c) Y.at2(r, c - c0) = A.at2(r, c);
    return push(std::move(Y), {a}, [c0](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dY = *g.grad_if(out);
        Tensor& dA = g.grad_buf(in[0]);
        for (int64_t r = 0; r < dY.rows(); ++r)
            for (int64_t c = 0; c < dY.cols(); ++c)
                dA.at2(r, c + c0) = q(dA.at2(r, c + c0) + dY.at2(r, c));
    });
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    int64_t C = value(parts[0]).cols(), R = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.ndim() != 2 || t.cols() != C)
            throw ShapeError("concat_rows: column mismatch at " + t.shape_str());
        R += t.rows();
    }
    Tensor Y = Tensor::zeros({R, C});
    int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        for (int64_t r = 0; r < t.rows(); ++r)
            for (int64_t c = 0; c < C; ++c) Y.at2(off + r, c) = t.at2(r, c);
        off += t.rows();
    }
    return push(std::move(Y), parts, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dY = *g.grad_if(out);
        int64_t off = 0;
        for (NodeId p : in) {
            int64_t R = g.value(p).rows(), C = g.value(p).cols();
            if (g.needs_grad(p)) {
                Tensor& dP = g.grad_buf(p);
                for (int64_t r = 0; r < R; ++r)
                    for (int64_t c = 0; c < C; ++c)
                        dP.at2(r, c) = q(dP.at2(r, c) + dY.at2(off + r, c));
            }
            off += R;
        }
    });
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    int64_t R = value(parts[0]).rows(), C = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.ndim() != 2 || t.rows() != R)
            throw ShapeError("concat_cols: row mismatch at " + t.shape_str());
        C += t.cols();
    }
    Tensor Y = Tensor::zeros({R, C});
    int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < t.cols(); ++c) Y.at2(r, off + c) = t.at2(r, c);
        off += t.cols();
    }
    return push(std::move(Y), parts, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        const Tensor& dY = *g.grad_if(out);
        int64_t off = 0;
        for (NodeId p : in) {
            int64_t R = g.value(p).rows(), C = g.value(p).cols();
            if (g.needs_grad(p)) {
                Tensor& dP = g.grad_buf(p);
                for (int64_t r = 0; r < R; ++r)
                    for (int64_t c = 0; c < C; ++c)
                        dP.at2(r, c) = q(dP.at2(r, c) + dY.at2(r, off + c));
            }
            off += C;
        }
    });
}

NodeId Graph::gather_cols(NodeId a, const std::vector<int>& idx) {
    const Tensor& A = value(a);
    if (A.ndim() != 2) throw ShapeError("gather_cols: expected 2-D input, got " + A.shape_str());
    for (int i : idx)
        if (i < 0 || i >= A.cols())
            throw ShapeError("gather_cols: column " + std::to_string(i) + " out of " +
                             A.shape_str());
    int64_t R = A.rows();
    Tensor Y = Tensor::zeros({R, static_cast<int64_t>(idx.size())});
    for (size_t j = 0; j < idx.size(); ++j)
        for (int64_t r = 0; r < R; ++r) Y.at2(r, static_cast<int64_t>(j)) = A.at2(r, idx[j]);
    return push(std::move(Y), {a}, [idx](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dY = *g.grad_if(out);
        Tensor& dA = g.grad_buf(in[0]);
        for (size_t j = 0; j < idx.size(); ++j)
            for (int64_t r = 0; r < dY.rows(); ++r)
                dA.at2(r, idx[j]) = q(dA.at2(r, idx[j]) + dY.at2(r, static_cast<int64_t>(j)));
    });
}

NodeId Graph::sum(NodeId a) {
    const Tensor& A = value(a);
    double acc = 0.0;
    for (double v : A.data) acc += v;
    return push(Tensor::scalar(acc), {a}, [](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        double gy = g.grad_if(out)->data[0];
        Tensor& dA = g.grad_buf(in[0]);
        for (double& v : dA.data) v = q(v + gy);
    });
}

NodeId Graph::dropout(NodeId a, double p, uint64_t key) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
    if (p == 0.0) return a;
    const Tensor& A = value(a);
    Tensor Y = Tensor::zeros(A.shape);
    double keep = 1.0 - p;
    for (size_t i = 0; i < Y.data.size(); ++i)
        Y.data[i] = rng::uniform(key, i) < p ? 0.0 : q(A.data[i] / keep);
    return push(std::move(Y), {a}, [p, key](Graph& g, const std::vector<NodeId>& in, NodeId out) {
        if (!g.needs_grad(in[0])) return;
        const Tensor& dY = *g.grad_if(out);
        Tensor& dA = g.grad_buf(in[0]);
        double keep = 1.0 - p;
        for (size_t i = 0; i < dA.data.size(); ++i)
            if (rng::uniform(key, i) >= p) dA.data[i] = q(dA.data[i] + dY.data[i] / keep);
    });
}

}  // namespace sft
