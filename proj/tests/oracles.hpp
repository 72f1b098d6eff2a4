#pragma once
// Independent oracles the tests check the library against. These mirror the
// definitions, not the implementations: AP is recomputed from scratch at
// every prefix, gradients come from central finite differences, and the
// split hash is a literal re-statement of FNV-1a.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace oracles {

// Average precision by brute force: rank by (score desc, index asc), then
// for every prefix recount TP from the start and accumulate
// (R_n - R_{n-1}) * P_n at positive ranks. O(M^2) on purpose.
inline double brute_force_ap(const std::vector<double>& scores,
                             const std::vector<uint8_t>& labels) {
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    int total_positives = 0;
    for (auto l : labels) total_positives += l ? 1 : 0;

    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t n = 1; n <= order.size(); ++n) {
        int tp = 0;
        for (size_t k = 0; k < n; ++k) tp += labels[order[k]] ? 1 : 0;
        const double precision = static_cast<double>(tp) / static_cast<double>(n);
        const double recall = static_cast<double>(tp) / total_positives;
        if (labels[order[n - 1]]) ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// Exhaustively minimizes |P(t) - R(t)| over the distinct observed scores,
// ties toward larger t; P undefined counts as gap 1.
inline double brute_force_eq_pr_threshold(const std::vector<double>& scores,
                                          const std::vector<uint8_t>& labels) {
    std::vector<double> candidates = scores;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    int positives = 0;
    for (auto l : labels) positives += l ? 1 : 0;

    double best_t = 0.0, best_gap = 3.0;
    for (double t : candidates) {
        int predicted = 0, tp = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                ++predicted;
                if (labels[i]) ++tp;
            }
        }
        const double recall = static_cast<double>(tp) / positives;
        const double gap =
            predicted == 0 ? 1.0 : std::abs(static_cast<double>(tp) / predicted - recall);
        if (gap < best_gap || (gap == best_gap && t > best_t)) {
            best_gap = gap;
            best_t = t;
        }
    }
    return best_t;
}

inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor); guards the zero-gradient case.
inline double relative_error(double a, double b, double floor = 1e-8) {
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

// Literal FNV-1a 64, restated independently for checking the split rule.
inline uint64_t fnv1a64_reference(const std::string& s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace oracles
