#pragma once

// Independent brute-force oracles for the dynamic-programming losses and the
// edit distance. These deliberately share no code with the library
// implementations they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sft/tensor.hpp"

namespace sfttest {

inline double oracle_log_add(double a, double b) {
    if (a == -HUGE_VAL) return b;
    if (b == -HUGE_VAL) return a;
    double hi = std::max(a, b);
    return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

// CTC by enumerating every V^T frame labeling, collapsing repeats and
// dropping blanks, and summing the probability of labelings that match.
inline double brute_force_ctc(const sft::Tensor& log_probs, const std::vector<int>& target) {
    int64_t v_size = log_probs.rows(), t_len = log_probs.cols();
    double total = -HUGE_VAL;
    std::vector<int> labeling(static_cast<size_t>(t_len), 0);
    while (true) {
        // collapse: drop consecutive repeats, then blanks (id 0)
        std::vector<int> collapsed;
        for (int64_t t = 0; t < t_len; ++t) {
            int tok = labeling[static_cast<size_t>(t)];
            if (t > 0 && tok == labeling[static_cast<size_t>(t - 1)]) continue;
            if (tok != 0) collapsed.push_back(tok);
        }
        if (collapsed == target) {
            double lp = 0.0;
            for (int64_t t = 0; t < t_len; ++t) lp += log_probs.at2(labeling[static_cast<size_t>(t)], t);
            total = oracle_log_add(total, lp);
        }
        // next labeling (odometer)
        int64_t pos = 0;
        while (pos < t_len) {
            if (++labeling[static_cast<size_t>(pos)] < v_size) break;
            labeling[static_cast<size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == t_len) break;
    }
    return -total;
}

// Transducer by recursive enumeration of all monotonic emit/blank paths.
// lattice: V x T x (L+1).
inline double brute_force_transducer(const sft::Tensor& lattice, const std::vector<int>& target) {
    int64_t t_len = lattice.dim(1);
    int64_t l_len = static_cast<int64_t>(target.size());
    auto lp = [&](int64_t v, int64_t t, int64_t l) {
        return lattice.data[static_cast<size_t>((v * t_len + t) * (l_len + 1) + l)];
    };
    double total = -HUGE_VAL;
    std::function<void(int64_t, int64_t, double)> walk = [&](int64_t t, int64_t l, double acc) {
        if (t == t_len - 1 && l == l_len) total = oracle_log_add(total, acc + lp(0, t, l));
        if (t < t_len - 1) walk(t + 1, l, acc + lp(0, t, l));
        if (l < l_len) walk(t, l + 1, acc + lp(target[static_cast<size_t>(l)], t, l));
    };
    walk(0, 0, 0.0);
    return -total;
}

// Minimum edit cost by enumerating every edit script over the two sequences.
inline int brute_force_edit_cost(const std::vector<int>& ref, const std::vector<int>& hyp) {
    std::function<int(size_t, size_t)> walk = [&](size_t i, size_t j) -> int {
        if (i == ref.size()) return static_cast<int>(hyp.size() - j);  // insertions
        if (j == hyp.size()) return static_cast<int>(ref.size() - i);  // deletions
        int best = walk(i + 1, j + 1) + (ref[i] == hyp[j] ? 0 : 1);    // match / substitution
        best = std::min(best, walk(i + 1, j) + 1);                     // deletion
        best = std::min(best, walk(i, j + 1) + 1);                     // insertion
        return best;
    };
    return walk(0, 0);
}

}  // namespace sfttest
