#pragma once
// Trainable fusion head: concatenated branch features -> 256-unit hidden
// layer (relu + dropout) -> 26 discrete scores and 3 continuous values.

#include <cstdint>
#include <span>

#include "emofuse/domain.hpp"
#include "emofuse/tensor.hpp"

namespace emofuse {

inline constexpr int kContDims = 3;

struct FusionConfig {
    int input_dim = 0;       // sum of the active branches' output dims
    int hidden_dim = 256;
    double dropout_rate = 0.5;
    uint64_t seed = 0;
    bool operator==(const FusionConfig&) const = default;
};

struct FusionParams {
    FusionConfig config;
    Tensor w1;      // hidden_dim x input_dim
    Tensor b1;      // hidden_dim x 1
    Tensor w_disc;  // 26 x hidden_dim
    Tensor b_disc;  // 26 x 1
    Tensor w_cont;  // 3 x hidden_dim
    Tensor b_cont;  // 3 x 1

    uint64_t digest() const;
    uint64_t cont_head_digest() const;
    uint64_t disc_head_digest() const;
};

struct Prediction {
    std::array<double, kNumCategories> disc_scores{};
    std::array<double, kContDims> cont_values{};  // normalized [0,1] scale
};

enum class FusionMode { train, infer };

// Activations backward() needs, captured by forward() in train mode.
struct ForwardCache {
    std::vector<double> input;
    std::vector<double> pre_hidden;      // W1 x + b1
    std::vector<double> hidden;          // after relu and (train mode) mask
    std::vector<double> mask;            // scaled dropout mask; empty in infer mode
};

struct FusionGrads {
    Tensor w1, b1, w_disc, b_disc, w_cont, b_cont;
    static FusionGrads zeros_like(const FusionParams& p);
    void add_scaled(const FusionGrads& other, double scale);
    void scale(double s);
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the seeded
// generator; biases zero. Deterministic per seed.
FusionParams init_fusion(const FusionConfig& config);

// h = relu(W1 x + b1); train mode multiplies h by a seeded
// Bernoulli(1-dropout_rate)/(1-dropout_rate) mask; outputs are affine in h.
// Throws on input length mismatch.
Prediction fusion_forward(const FusionParams& params, std::span<const double> x,
                          FusionMode mode, uint64_t dropout_seed,
                          ForwardCache* cache = nullptr);

// Exact gradients of the affine-relu-dropout-affine composition, dropout
// mask treated as constant. Requires the cache of the matching forward call.
FusionGrads fusion_backward(const FusionParams& params, const ForwardCache& cache,
                            std::span<const double> grad_disc,
                            std::span<const double> grad_cont);

}  // namespace emofuse
