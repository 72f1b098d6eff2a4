#pragma once
// Training criteria: class-weighted Euclidean loss for the 26 discrete
// categories, margin-masked L2 for the continuous dimensions, and their
// weighted combination.

#include <span>
#include <vector>

#include "emofuse/dataset.hpp"
#include "emofuse/domain.hpp"

namespace emofuse {

// w_i = 1 / ln(c + p_i). Requires c > 1 so the weight stays positive and
// finite even for categories that never occur (p_i = 0).
struct DiscreteLossWeights {
    std::array<double, kNumCategories> w{};
    double c = 0.0;
};

DiscreteLossWeights class_weights(const CategoryFrequencies& freq, double c);

struct ContinuousLossConfig {
    double theta = 0.1;  // margin, in normalized [0,1] VAD units
};

struct WeightedL2 {
    double loss = 0.0;
    std::vector<double> grad;
};

// loss = sum_i w_i (pred_i - target_i)^2; grad_i = 2 w_i (pred_i - target_i).
// Generic-length core; the 26-category wrapper below is the production path.
WeightedL2 weighted_euclidean(std::span<const double> pred, std::span<const double> target,
                              std::span<const double> weights);

struct DiscLossResult {
    double loss = 0.0;
    std::array<double, kNumCategories> grad{};
};
DiscLossResult disc_loss(std::span<const double> pred, const DiscreteLabel& target,
                         const DiscreteLossWeights& weights);

// v_i = 0 when |pred_i - target_i| < theta, else 1;
// loss = sum_i v_i (pred_i - target_i)^2, mask treated as constant.
struct ContLossResult {
    double loss = 0.0;
    std::array<double, 3> grad{};
};
ContLossResult cont_loss(std::span<const double> pred, std::span<const double> target,
                         const ContinuousLossConfig& config);

// L = lambda_disc * L_disc + lambda_cont * L_cont. A zero lambda disables
// that head; both zero is rejected.
struct CombinedLossResult {
    double loss = 0.0;
    std::array<double, kNumCategories> grad_disc{};
    std::array<double, 3> grad_cont{};
};
CombinedLossResult combined_loss(const DiscLossResult& disc, const ContLossResult& cont,
                                 double lambda_disc, double lambda_cont);

}  // namespace emofuse
