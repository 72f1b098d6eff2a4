#pragma once
// Evaluation: per-category average precision, mAP, the equal-precision-
// recall inference threshold, and per-dimension MAE.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emofuse/domain.hpp"

namespace emofuse {

// One category's scores and binary labels across M people.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<uint8_t> labels;
};

// AP = sum over positive ranks of (R_n - R_{n-1}) * P_n, walking the ranking
// sorted by score descending (ties by original index, ascending). Returns
// nullopt when the set has no positive labels (AP undefined).
std::optional<double> average_precision(const ScoredSet& s);

// Arithmetic mean over the defined APs. Throws when every AP is undefined.
double mean_ap(std::span<const std::optional<double>> per_category_ap);

// Over candidate thresholds drawn from the distinct observed scores
// (predict positive when score >= t), the t minimizing |P(t) - R(t)|; ties
// break toward the larger t. P with no predictions counts as gap 1.
// Requires at least one positive label.
double eq_pr_threshold(const ScoredSet& s);

struct MaeResult {
    std::array<double, 3> per_dim{};
    double mean = 0.0;
};

// Per-dimension mean absolute error plus the mean of the three values.
MaeResult mae(std::span<const std::array<double, 3>> pred,
              std::span<const std::array<double, 3>> truth);

// --- evaluation report ---

struct CategoryEval {
    std::string name;
    std::optional<double> ap;         // nullopt when the split has no positives
    std::optional<double> threshold;  // nullopt when val had no positives
    int support = 0;                  // positives in the evaluated split
    bool degenerate_threshold = false;  // equal-PR gap could not reach 0
};

struct EvalReport {
    std::vector<CategoryEval> per_category;   // canonical category order
    double map = 0.0;
    MaeResult mae;                            // raw 0-10 scale
    std::vector<std::string> excluded_categories;  // undefined AP, not in mAP
    std::vector<std::string> branch_names;    // body, context, face order; "-" when absent

    std::string to_json() const;              // schema documented in README
    static EvalReport from_json(const std::string& text);

    // One-row table in the backbones / mAP / MAE layout.
    std::string to_text_table() const;
    static std::string table_header();
    std::string table_row() const;
};

}  // namespace emofuse
