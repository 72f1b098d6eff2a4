#pragma once
// Minimal dense row-major matrix. Keeps the public API free of third-party
// linear-algebra types; the math lives in the implementation files.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "emofuse/digest.hpp"
#include "emofuse/domain.hpp"

namespace emofuse {

struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;  // rows * cols, row-major

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.rows, t.cols); }

    size_t size() const { return v.size(); }
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    uint64_t digest(uint64_t h = kFnvOffsetBasis) const {
        h = fnv1a64(&rows, sizeof(rows), h);
        h = fnv1a64(&cols, sizeof(cols), h);
        return fnv1a64(std::span<const double>(v), h);
    }
    bool operator==(const Tensor&) const = default;
};

}  // namespace emofuse
