#pragma once
// Report figure rendering: AP bar chart, VAD error histogram and the
// annotated sample grid.

#include <filesystem>
#include <vector>

#include "emofuse/dataset.hpp"
#include "emofuse/engine.hpp"
#include "emofuse/metrics.hpp"

namespace emofuse::report {

void render_ap_chart(const EvalReport& report, const std::filesystem::path& out_png);

// abs_errors: per evaluated person, per VAD dimension, raw 0-10 scale.
void render_vad_error_hist(const std::vector<std::array<double, 3>>& abs_errors,
                           const std::filesystem::path& out_png);

struct GridSample {
    int row_index = 0;
    PredictionRecord prediction;
};

void render_sample_grid(const AnnotationTable& table, const ImageStore& store,
                        const std::vector<GridSample>& samples,
                        const std::filesystem::path& out_png);

}  // namespace emofuse::report
