#include "emofuse/fusion.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace emofuse {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

double unit_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void fill_uniform(Tensor& t, std::mt19937_64& rng, double bound) {
    for (double& w : t.v) w = (2.0 * unit_double(rng) - 1.0) * bound;
}

}  // namespace

uint64_t FusionParams::digest() const {
    uint64_t h = kFnvOffsetBasis;
    for (const Tensor* t : {&w1, &b1, &w_disc, &b_disc, &w_cont, &b_cont}) h = t->digest(h);
    return h;
}

uint64_t FusionParams::disc_head_digest() const {
    return b_disc.digest(w_disc.digest());
}

uint64_t FusionParams::cont_head_digest() const {
    return b_cont.digest(w_cont.digest());
}

FusionGrads FusionGrads::zeros_like(const FusionParams& p) {
    FusionGrads g;
    g.w1 = Tensor::zeros_like(p.w1);
    g.b1 = Tensor::zeros_like(p.b1);
    g.w_disc = Tensor::zeros_like(p.w_disc);
    g.b_disc = Tensor::zeros_like(p.b_disc);
    g.w_cont = Tensor::zeros_like(p.w_cont);
    g.b_cont = Tensor::zeros_like(p.b_cont);
    return g;
}

void FusionGrads::add_scaled(const FusionGrads& other, double scale) {
    auto axpy = [scale](Tensor& dst, const Tensor& src) {
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += scale * src.v[i];
    };
    axpy(w1, other.w1);
    axpy(b1, other.b1);
    axpy(w_disc, other.w_disc);
    axpy(b_disc, other.b_disc);
    axpy(w_cont, other.w_cont);
    axpy(b_cont, other.b_cont);
}

void FusionGrads::scale(double s) {
    for (Tensor* t : {&w1, &b1, &w_disc, &b_disc, &w_cont, &b_cont})
        for (double& x : t->v) x *= s;
}

FusionParams init_fusion(const FusionConfig& config) {
    if (config.input_dim < 1) throw Error("init_fusion: input_dim must be >= 1");
    if (config.hidden_dim < 1) throw Error("init_fusion: hidden_dim must be >= 1");
    if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0)
        throw Error("init_fusion: dropout_rate must be in [0,1)");

    FusionParams p;
    p.config = config;
    p.w1 = Tensor(config.hidden_dim, config.input_dim);
    p.b1 = Tensor(config.hidden_dim, 1);
    p.w_disc = Tensor(kNumCategories, config.hidden_dim);
    p.b_disc = Tensor(kNumCategories, 1);
    p.w_cont = Tensor(kContDims, config.hidden_dim);
    p.b_cont = Tensor(kContDims, 1);

    std::mt19937_64 rng(config.seed);
    fill_uniform(p.w1, rng, 1.0 / std::sqrt(static_cast<double>(config.input_dim)));
    fill_uniform(p.w_disc, rng, 1.0 / std::sqrt(static_cast<double>(config.hidden_dim)));
    fill_uniform(p.w_cont, rng, 1.0 / std::sqrt(static_cast<double>(config.hidden_dim)));
    return p;
}

Prediction fusion_forward(const FusionParams& params, std::span<const double> x,
                          FusionMode mode, uint64_t dropout_seed, ForwardCache* cache) {
    const auto& cfg = params.config;
    if (static_cast<int>(x.size()) != cfg.input_dim)
        throw Error("fusion_forward: input length " + std::to_string(x.size()) +
                    " does not match input_dim " + std::to_string(cfg.input_dim));

    ConstMatrixMap w1(params.w1.v.data(), params.w1.rows, params.w1.cols);
    ConstVectorMap xin(x.data(), static_cast<Eigen::Index>(x.size()));
    ConstVectorMap b1(params.b1.v.data(), cfg.hidden_dim);

    Eigen::VectorXd pre = w1 * xin + b1;
    Eigen::VectorXd h = pre.cwiseMax(0.0);

    std::vector<double> mask;
    if (mode == FusionMode::train && cfg.dropout_rate > 0.0) {
        mask.resize(cfg.hidden_dim);
        std::mt19937_64 rng(dropout_seed);
        const double keep = 1.0 - cfg.dropout_rate;
        for (int i = 0; i < cfg.hidden_dim; ++i) {
            const bool kept = unit_double(rng) < keep;
            mask[i] = kept ? 1.0 / keep : 0.0;
            h[i] *= mask[i];
        }
    }

    ConstMatrixMap wd(params.w_disc.v.data(), params.w_disc.rows, params.w_disc.cols);
    ConstMatrixMap wc(params.w_cont.v.data(), params.w_cont.rows, params.w_cont.cols);
    ConstVectorMap bd(params.b_disc.v.data(), kNumCategories);
    ConstVectorMap bc(params.b_cont.v.data(), kContDims);

    Prediction out;
    VectorMap(out.disc_scores.data(), kNumCategories) = wd * h + bd;
    VectorMap(out.cont_values.data(), kContDims) = wc * h + bc;

    if (cache) {
        cache->input.assign(x.begin(), x.end());
        cache->pre_hidden.assign(pre.data(), pre.data() + pre.size());
        cache->hidden.assign(h.data(), h.data() + h.size());
        cache->mask = std::move(mask);
    }
    return out;
}

FusionGrads fusion_backward(const FusionParams& params, const ForwardCache& cache,
                            std::span<const double> grad_disc,
                            std::span<const double> grad_cont) {
    const auto& cfg = params.config;
    if (static_cast<int>(cache.input.size()) != cfg.input_dim ||
        static_cast<int>(cache.hidden.size()) != cfg.hidden_dim)
        throw Error("fusion_backward: cache does not match params");
    if (grad_disc.size() != kNumCategories || grad_cont.size() != kContDims)
        throw Error("fusion_backward: upstream gradient size mismatch");

    FusionGrads g = FusionGrads::zeros_like(params);

    ConstVectorMap gd(grad_disc.data(), kNumCategories);
    ConstVectorMap gc(grad_cont.data(), kContDims);
    ConstVectorMap h(cache.hidden.data(), cfg.hidden_dim);
    ConstVectorMap xin(cache.input.data(), cfg.input_dim);

    MatrixMap(g.w_disc.v.data(), g.w_disc.rows, g.w_disc.cols) = gd * h.transpose();
    VectorMap(g.b_disc.v.data(), kNumCategories) = gd;
    MatrixMap(g.w_cont.v.data(), g.w_cont.rows, g.w_cont.cols) = gc * h.transpose();
    VectorMap(g.b_cont.v.data(), kContDims) = gc;

    ConstMatrixMap wd(params.w_disc.v.data(), params.w_disc.rows, params.w_disc.cols);
    ConstMatrixMap wc(params.w_cont.v.data(), params.w_cont.rows, params.w_cont.cols);
    Eigen::VectorXd gh = wd.transpose() * gd + wc.transpose() * gc;

    // back through dropout (mask constant) and relu
    for (int i = 0; i < cfg.hidden_dim; ++i) {
        if (!cache.mask.empty()) gh[i] *= cache.mask[i];
        if (cache.pre_hidden[i] <= 0.0) gh[i] = 0.0;
    }

    MatrixMap(g.w1.v.data(), g.w1.rows, g.w1.cols) = gh * xin.transpose();
    VectorMap(g.b1.v.data(), cfg.hidden_dim) = gh;
    return g;
}

}  // namespace emofuse
