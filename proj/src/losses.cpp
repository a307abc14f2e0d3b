#include "sft/losses.hpp"

#include <cmath>

#include "sft/error.hpp"

namespace sft {

namespace {
constexpr double kLogZero = -HUGE_VAL;
constexpr int kBlank = 0;

void check_target(const std::vector<int>& target, int64_t vocab, const char* op) {
    for (int y : target) {
        if (y <= 0 || y >= vocab)
            throw VocabularyError(std::string(op) + ": target id " + std::to_string(y) +
                                  " outside vocabulary of size " + std::to_string(vocab) +
                                  " (blank id 0 cannot appear in targets)");
    }
}
}  // namespace

double log_add(double a, double b) {
    if (a == kLogZero) return b;
    if (b == kLogZero) return a;
    double hi = a > b ? a : b;
    return hi + std::log1p(std::exp((a < b ? a : b) - hi));
}

int64_t ctc_min_frames(const std::vector<int>& target) {
    int64_t n = static_cast<int64_t>(target.size());
    for (size_t i = 1; i < target.size(); ++i)
        if (target[i] == target[i - 1]) ++n;
    return n;
}

NodeId ctc_loss(Graph& g, NodeId log_probs, const std::vector<int>& target) {
    const Tensor& lp = g.value(log_probs);
    if (lp.ndim() != 2) throw ShapeError("ctc_loss: log_probs must be V x T, got " + lp.shape_str());
    int64_t V = lp.rows(), T = lp.cols();
    check_target(target, V, "ctc_loss");
    if (T < ctc_min_frames(target))
        throw InfeasibleAlignmentError(
            "ctc_loss: target of length " + std::to_string(target.size()) + " needs at least " +
            std::to_string(ctc_min_frames(target)) + " frames, got " + std::to_string(T));

    // Extended label sequence: blank, y1, blank, y2, ..., yL, blank.
    int64_t L = static_cast<int64_t>(target.size());
    int64_t S = 2 * L + 1;
    auto ext = [&](int64_t s) { return s % 2 == 1 ? target[static_cast<size_t>(s / 2)] : kBlank; };
    auto can_skip = [&](int64_t s) {
        return s >= 2 && ext(s) != kBlank && ext(s) != ext(s - 2);
    };
    auto lpv = [&](int64_t s, int64_t t) { return lp.at2(ext(s), t); };

    // alpha[t][s]: log-prob of all prefixes ending in state s at frame t,
    // emission at t included.
    std::vector<double> alpha(static_cast<size_t>(T * S), kLogZero);
    auto a = [&](int64_t t, int64_t s) -> double& {
        return alpha[static_cast<size_t>(t * S + s)];
    };
    a(0, 0) = lpv(0, 0);
    if (S > 1) a(0, 1) = lpv(1, 0);
    for (int64_t t = 1; t < T; ++t)
        for (int64_t s = 0; s < S; ++s) {
            double acc = a(t - 1, s);
            if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
            if (can_skip(s)) acc = log_add(acc, a(t - 1, s - 2));
            if (acc != kLogZero) a(t, s) = acc + lpv(s, t);
        }
    double log_z = a(T - 1, S - 1);
    if (S > 1) log_z = log_add(log_z, a(T - 1, S - 2));
    if (log_z == kLogZero)
        throw InfeasibleAlignmentError("ctc_loss: no feasible alignment");

    // beta, symmetric from the end (emission at t included as well).
    std::vector<double> beta(static_cast<size_t>(T * S), kLogZero);
    auto b = [&](int64_t t, int64_t s) -> double& {
        return beta[static_cast<size_t>(t * S + s)];
    };
    b(T - 1, S - 1) = lpv(S - 1, T - 1);
    if (S > 1) b(T - 1, S - 2) = lpv(S - 2, T - 1);
    for (int64_t t = T - 2; t >= 0; --t)
        for (int64_t s = S - 1; s >= 0; --s) {
            double acc = b(t + 1, s);
            if (s + 1 < S) acc = log_add(acc, b(t + 1, s + 1));
            if (s + 2 < S && can_skip(s + 2)) acc = log_add(acc, b(t + 1, s + 2));
            if (acc != kLogZero) b(t, s) = acc + lpv(s, t);
        }

    Tensor out = Tensor::scalar(-log_z);
    auto backward = [alpha = std::move(alpha), beta = std::move(beta), ext, log_z, S, T,
                     V](Graph& gg, const std::vector<NodeId>& in, NodeId self) {
        if (!gg.needs_grad(in[0])) return;
        double gy = gg.grad_if(self)->data[0];
        const Tensor& lp = gg.value(in[0]);
        Tensor& d = gg.grad_buf(in[0]);
        for (int64_t t = 0; t < T; ++t) {
            // occupation log-mass per vocabulary entry at frame t
            std::vector<double> occ(static_cast<size_t>(V), kLogZero);
            for (int64_t s = 0; s < S; ++s) {
                double as = alpha[static_cast<size_t>(t * S + s)];
                double bs = beta[static_cast<size_t>(t * S + s)];
                if (as == kLogZero || bs == kLogZero) continue;
                // alpha and beta both include the emission at t; remove one copy.
                double m = as + bs - lp.at2(ext(s), t);
                double& slot = occ[static_cast<size_t>(ext(s))];
                slot = log_add(slot, m);
            }
            for (int64_t v = 0; v < V; ++v) {
                if (occ[static_cast<size_t>(v)] == kLogZero) continue;
                double gradval = -std::exp(occ[static_cast<size_t>(v)] - log_z);
                d.at2(v, t) = quantize(d.at2(v, t) + gy * gradval);
            }
        }
    };
    return g.custom(std::move(out), {log_probs}, std::move(backward));
}

NodeId transducer_loss(Graph& g, NodeId lattice, const std::vector<int>& target) {
    const Tensor& lp = g.value(lattice);
    int64_t L = static_cast<int64_t>(target.size());
    if (lp.ndim() != 3 || lp.dim(2) != L + 1)
        throw ShapeError("transducer_loss: lattice must be V x T x " + std::to_string(L + 1) +
                         ", got " + lp.shape_str());
    int64_t V = lp.dim(0), T = lp.dim(1);
    check_target(target, V, "transducer_loss");

    auto lpv = [&](int64_t v, int64_t t, int64_t l) {
        return lp.data[static_cast<size_t>((v * T + t) * (L + 1) + l)];
    };

    // alpha[t][l]: log-prob of reaching node (t, l); emissions on the path in,
    // not out. The path must end with the blank out of (T-1, L).
    std::vector<double> alpha(static_cast<size_t>(T * (L + 1)), kLogZero);
    auto a = [&](int64_t t, int64_t l) -> double& {
        return alpha[static_cast<size_t>(t * (L + 1) + l)];
    };
    a(0, 0) = 0.0;
    for (int64_t t = 0; t < T; ++t)
        for (int64_t l = 0; l <= L; ++l) {
            if (t == 0 && l == 0) continue;
            double acc = kLogZero;
            if (t > 0 && a(t - 1, l) != kLogZero)
                acc = log_add(acc, a(t - 1, l) + lpv(kBlank, t - 1, l));
            if (l > 0 && a(t, l - 1) != kLogZero)
                acc = log_add(acc, a(t, l - 1) + lpv(target[static_cast<size_t>(l - 1)], t, l - 1));
            a(t, l) = acc;
        }
    double log_z = a(T - 1, L) + lpv(kBlank, T - 1, L);

    // beta[t][l]: log-prob of completing the alignment from node (t, l).
    std::vector<double> beta(static_cast<size_t>(T * (L + 1)), kLogZero);
    auto b = [&](int64_t t, int64_t l) -> double& {
        return beta[static_cast<size_t>(t * (L + 1) + l)];
    };
    b(T - 1, L) = lpv(kBlank, T - 1, L);
    for (int64_t t = T - 1; t >= 0; --t)
        for (int64_t l = L; l >= 0; --l) {
            if (t == T - 1 && l == L) continue;
            double acc = kLogZero;
            if (t < T - 1 && b(t + 1, l) != kLogZero)
                acc = log_add(acc, lpv(kBlank, t, l) + b(t + 1, l));
            if (l < L && b(t, l + 1) != kLogZero)
                acc = log_add(acc, lpv(target[static_cast<size_t>(l)], t, l) + b(t, l + 1));
            b(t, l) = acc;
        }

    Tensor out = Tensor::scalar(-log_z);
    auto backward = [alpha = std::move(alpha), beta = std::move(beta), target, log_z, T,
                     L](Graph& gg, const std::vector<NodeId>& in, NodeId self) {
        if (!gg.needs_grad(in[0])) return;
        double gy = gg.grad_if(self)->data[0];
        const Tensor& lp = gg.value(in[0]);
        Tensor& d = gg.grad_buf(in[0]);
        auto idx = [&](int64_t v, int64_t t, int64_t l) {
            return static_cast<size_t>((v * T + t) * (L + 1) + l);
        };
        auto av = [&](int64_t t, int64_t l) { return alpha[static_cast<size_t>(t * (L + 1) + l)]; };
        auto bv = [&](int64_t t, int64_t l) { return beta[static_cast<size_t>(t * (L + 1) + l)]; };
        for (int64_t t = 0; t < T; ++t)
            for (int64_t l = 0; l <= L; ++l) {
                if (av(t, l) == kLogZero) continue;
                // blank transition out of (t, l)
                double blank_mass = kLogZero;
                if (t < T - 1 && bv(t + 1, l) != kLogZero)
                    blank_mass = av(t, l) + lp.data[idx(kBlank, t, l)] + bv(t + 1, l);
                else if (t == T - 1 && l == L)
                    blank_mass = av(t, l) + lp.data[idx(kBlank, t, l)];
                if (blank_mass != kLogZero) {
                    size_t i = idx(kBlank, t, l);
                    d.data[i] = quantize(d.data[i] - gy * std::exp(blank_mass - log_z));
                }
                // label transition out of (t, l)
                if (l < L && bv(t, l + 1) != kLogZero) {
                    int y = target[static_cast<size_t>(l)];
                    size_t i = idx(y, t, l);
                    double mass = av(t, l) + lp.data[i] + bv(t, l + 1);
                    d.data[i] = quantize(d.data[i] - gy * std::exp(mass - log_z));
                }
            }
    };
    return g.custom(std::move(out), {lattice}, std::move(backward));
}

NodeId nll_loss(Graph& g, NodeId log_probs, const std::vector<int>& target,
                double label_smoothing) {
    const Tensor& lp = g.value(log_probs);
    if (lp.ndim() != 2 || lp.cols() != static_cast<int64_t>(target.size()))
        throw ShapeError("nll_loss: log_probs " + lp.shape_str() + " vs target length " +
                         std::to_string(target.size()));
    int64_t V = lp.rows(), L = lp.cols();
    for (int y : target)
        if (y < 0 || y >= V)
            throw VocabularyError("nll_loss: target id " + std::to_string(y) +
                                  " outside vocabulary of size " + std::to_string(V));
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw ConfigError("nll_loss: label smoothing must be in [0, 1)");

    double eps = label_smoothing;
    double acc = 0.0;
    for (int64_t l = 0; l < L; ++l) {
        acc -= (1.0 - eps) * lp.at2(target[static_cast<size_t>(l)], l);
        if (eps > 0.0) {
            double colsum = 0.0;
            for (int64_t v = 0; v < V; ++v) colsum += lp.at2(v, l);
            acc -= eps / static_cast<double>(V) * colsum;
        }
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(L));
    auto backward = [target, eps, V, L](Graph& gg, const std::vector<NodeId>& in, NodeId self) {
        if (!gg.needs_grad(in[0])) return;
        double gy = gg.grad_if(self)->data[0];
        Tensor& d = gg.grad_buf(in[0]);
        double inv_l = 1.0 / static_cast<double>(L);
        for (int64_t l = 0; l < L; ++l) {
            d.at2(target[static_cast<size_t>(l)], l) =
                quantize(d.at2(target[static_cast<size_t>(l)], l) - gy * (1.0 - eps) * inv_l);
            if (eps > 0.0)
                for (int64_t v = 0; v < V; ++v)
                    d.at2(v, l) =
                        quantize(d.at2(v, l) - gy * eps / static_cast<double>(V) * inv_l);
        }
    };
    return g.custom(std::move(out), {log_probs}, std::move(backward));
}

NodeId hybrid_loss(Graph& g, NodeId nll, NodeId ctc, double w) {
    if (w < 0.0 || w > 1.0)
        throw ConfigError("hybrid_loss: interpolation weight must be in [0, 1], got " +
                          std::to_string(w));
    return g.add(g.scale(nll, 1.0 - w), g.scale(ctc, w));
}

}  // namespace sft
