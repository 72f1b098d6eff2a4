#include "emofuse/losses.hpp"

#include <cmath>

namespace emofuse {

namespace {

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values)
        if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite input");
}

}  // namespace

DiscreteLossWeights class_weights(const CategoryFrequencies& freq, double c) {
    if (!(c > 1.0))
        throw Error("class_weights: c must be > 1 (ln(c + p) would be <= 0 at p = 0)");
    DiscreteLossWeights out;
    out.c = c;
    for (int i = 0; i < kNumCategories; ++i) out.w[i] = 1.0 / std::log(c + freq.p[i]);
    return out;
}

WeightedL2 weighted_euclidean(std::span<const double> pred, std::span<const double> target,
                              std::span<const double> weights) {
    if (pred.size() != target.size() || pred.size() != weights.size())
        throw Error("weighted_euclidean: length mismatch");
    require_finite(pred, "weighted_euclidean");
    require_finite(target, "weighted_euclidean");
    WeightedL2 out;
    out.grad.resize(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        out.loss += weights[i] * d * d;
        out.grad[i] = 2.0 * weights[i] * d;
    }
    return out;
}

DiscLossResult disc_loss(std::span<const double> pred, const DiscreteLabel& target,
                         const DiscreteLossWeights& weights) {
    if (pred.size() != kNumCategories) throw Error("disc_loss: expected 26 predictions");
    std::array<double, kNumCategories> t;
    for (int i = 0; i < kNumCategories; ++i) t[i] = target.bits[i] ? 1.0 : 0.0;
    const WeightedL2 core = weighted_euclidean(pred, t, weights.w);
    DiscLossResult out;
    out.loss = core.loss;
    std::copy(core.grad.begin(), core.grad.end(), out.grad.begin());
    return out;
}

ContLossResult cont_loss(std::span<const double> pred, std::span<const double> target,
                         const ContinuousLossConfig& config) {
    if (pred.size() != 3 || target.size() != 3)
        throw Error("cont_loss: expected 3 dimensions");
    if (!(config.theta > 0.0)) throw Error("cont_loss: theta must be > 0");
    require_finite(pred, "cont_loss");
    require_finite(target, "cont_loss");
    ContLossResult out;
    for (int i = 0; i < 3; ++i) {
        const double d = pred[i] - target[i];
        const double mask = std::abs(d) < config.theta ? 0.0 : 1.0;
        out.loss += mask * d * d;
        out.grad[i] = 2.0 * mask * d;
    }
    return out;
}

CombinedLossResult combined_loss(const DiscLossResult& disc, const ContLossResult& cont,
                                 double lambda_disc, double lambda_cont) {
    if (lambda_disc < 0.0 || lambda_cont < 0.0)
        throw Error("combined_loss: lambdas must be >= 0");
    if (lambda_disc == 0.0 && lambda_cont == 0.0)
        throw Error("combined_loss: both lambdas are zero");
    CombinedLossResult out;
    out.loss = lambda_disc * disc.loss + lambda_cont * cont.loss;
    for (int i = 0; i < kNumCategories; ++i) out.grad_disc[i] = lambda_disc * disc.grad[i];
    for (int i = 0; i < 3; ++i) out.grad_cont[i] = lambda_cont * cont.grad[i];
    return out;
}

}  // namespace emofuse
