#include "report.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace emofuse::report {

namespace {

const cv::Scalar kWhite(255, 255, 255);
const cv::Scalar kBlack(30, 30, 30);
const cv::Scalar kBar(180, 120, 40);      // BGR
const cv::Scalar kBarMuted(200, 200, 200);
const cv::Scalar kTruth(60, 160, 60);
const cv::Scalar kPred(40, 80, 220);

cv::Mat to_bgr(const Image& img) {
    cv::Mat m;
    if (img.channels == 3) {
        const cv::Mat rgb(img.height, img.width, CV_8UC3,
                          const_cast<uint8_t*>(img.pixels.data()));
        cv::cvtColor(rgb, m, cv::COLOR_RGB2BGR);
    } else {
        const cv::Mat gray(img.height, img.width, CV_8UC1,
                           const_cast<uint8_t*>(img.pixels.data()));
        cv::cvtColor(gray, m, cv::COLOR_GRAY2BGR);
    }
    return m;
}

void put_small_text(cv::Mat& canvas, const std::string& text, cv::Point at,
                    const cv::Scalar& color, double scale = 0.38) {
    cv::putText(canvas, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

void write_png(const cv::Mat& canvas, const std::filesystem::path& path) {
    if (!cv::imwrite(path.string(), canvas))
        throw Error("cannot write figure: " + path.string());
}

std::string join_names(const DiscreteLabel& label, size_t max_names) {
    std::string out;
    size_t shown = 0;
    for (int i = 0; i < kNumCategories && shown < max_names; ++i) {
        if (!label.bits[i]) continue;
        if (!out.empty()) out += ",";
        out += category_names()[i];
        ++shown;
    }
    if (label.count() > static_cast<int>(max_names)) out += ",..";
    return out.empty() ? "(none)" : out;
}

}  // namespace

void render_ap_chart(const EvalReport& report, const std::filesystem::path& out_png) {
    const int w = 1040, h = 560, left = 50, bottom = 150, top = 30;
    cv::Mat canvas(h, w, CV_8UC3, kWhite);
    const int plot_h = h - top - bottom;
    const double bar_w = (w - left - 20) / 26.0;

    for (int g = 0; g <= 10; g += 2) {  // horizontal grid at 0, .2, .4, ...
        const int y = h - bottom - static_cast<int>(plot_h * g / 10.0);
        cv::line(canvas, {left, y}, {w - 20, y}, cv::Scalar(230, 230, 230), 1);
        char label[8];
        std::snprintf(label, sizeof(label), "%.1f", g / 10.0);
        put_small_text(canvas, label, {8, y + 4}, kBlack);
    }

    for (size_t i = 0; i < report.per_category.size(); ++i) {
        const auto& c = report.per_category[i];
        const int x0 = left + static_cast<int>(i * bar_w) + 2;
        const int x1 = left + static_cast<int>((i + 1) * bar_w) - 2;
        if (c.ap.has_value()) {
            const int bh = static_cast<int>(plot_h * std::clamp(*c.ap, 0.0, 1.0));
            cv::rectangle(canvas, {x0, h - bottom - bh}, {x1, h - bottom}, kBar, cv::FILLED);
        } else {
            cv::rectangle(canvas, {x0, h - bottom - 4}, {x1, h - bottom}, kBarMuted,
                          cv::FILLED);
        }
        // slanted-ish label: print vertically offset to fit 26 names
        const cv::Point at(x0 - 6, h - bottom + 14 + static_cast<int>(i % 3) * 14);
        put_small_text(canvas, c.name.substr(0, 14), at, kBlack, 0.34);
    }

    char title[64];
    std::snprintf(title, sizeof(title), "Average precision per category (mAP %.4f)",
                  report.map);
    put_small_text(canvas, title, {left, 18}, kBlack, 0.5);
    write_png(canvas, out_png);
}

void render_vad_error_hist(const std::vector<std::array<double, 3>>& abs_errors,
                           const std::filesystem::path& out_png) {
    const char* dims[3] = {"valence", "arousal", "dominance"};
    const int panel_w = 340, panel_h = 240, pad = 20;
    cv::Mat canvas(panel_h + 2 * pad, 3 * panel_w + 4 * pad, CV_8UC3, kWhite);
    const int bins = 20;

    for (int d = 0; d < 3; ++d) {
        std::vector<int> hist(bins, 0);
        int peak = 1;
        for (const auto& e : abs_errors) {
            const int b = std::min(bins - 1, static_cast<int>(e[d] / 10.0 * bins));
            peak = std::max(peak, ++hist[b]);
        }
        const int ox = pad + d * (panel_w + pad);
        const int oy = pad;
        cv::rectangle(canvas, {ox, oy}, {ox + panel_w, oy + panel_h}, kBlack, 1);
        const double bw = static_cast<double>(panel_w - 2) / bins;
        for (int b = 0; b < bins; ++b) {
            const int bh = static_cast<int>((panel_h - 24) * hist[b] / double(peak));
            const int x0 = ox + 1 + static_cast<int>(b * bw);
            const int x1 = ox + 1 + static_cast<int>((b + 1) * bw) - 1;
            cv::rectangle(canvas, {x0, oy + panel_h - 1 - bh}, {x1, oy + panel_h - 1}, kBar,
                          cv::FILLED);
        }
        put_small_text(canvas, std::string("|error| ") + dims[d] + " (0..10)",
                       {ox + 6, oy + 14}, kBlack);
    }
    write_png(canvas, out_png);
}

void render_sample_grid(const AnnotationTable& table, const ImageStore& store,
                        const std::vector<GridSample>& samples,
                        const std::filesystem::path& out_png) {
    if (samples.empty()) throw Error("sample grid: no samples");
    const int cols = static_cast<int>(std::ceil(std::sqrt(double(samples.size()))));
    const int rows = static_cast<int>(std::ceil(double(samples.size()) / cols));
    const int tile_img = 128, text_h = 72, pad = 8;
    const int tile_w = tile_img + 2 * pad, tile_h = tile_img + text_h + 2 * pad;
    cv::Mat canvas(rows * tile_h, cols * tile_w, CV_8UC3, kWhite);

    for (size_t k = 0; k < samples.size(); ++k) {
        const auto& sample = samples[k];
        const auto& row = table.rows.at(sample.row_index);
        const int ox = static_cast<int>(k % cols) * tile_w + pad;
        const int oy = static_cast<int>(k / cols) * tile_h + pad;

        cv::Mat img = to_bgr(store.load(row.image_id));
        const double sx = double(tile_img) / img.cols, sy = double(tile_img) / img.rows;
        cv::resize(img, img, {tile_img, tile_img}, 0, 0, cv::INTER_NEAREST);
        cv::rectangle(img,
                      {int(row.body_box.x1 * sx), int(row.body_box.y1 * sy)},
                      {int(row.body_box.x2 * sx) - 1, int(row.body_box.y2 * sy) - 1},
                      kPred, 1);
        img.copyTo(canvas(cv::Rect(ox, oy, tile_img, tile_img)));

        DiscreteLabel predicted;
        if (sample.prediction.disc_decisions)
            for (int i = 0; i < kNumCategories; ++i)
                predicted.bits[i] = (*sample.prediction.disc_decisions)[i];

        char vad_line[96];
        const auto& vp = sample.prediction.vad_pred;
        int ty = oy + tile_img + 14;
        put_small_text(canvas, "T: " + join_names(row.discrete, 2), {ox, ty}, kTruth);
        ty += 14;
        put_small_text(canvas, "P: " + join_names(predicted, 2), {ox, ty}, kPred);
        ty += 14;
        std::snprintf(vad_line, sizeof(vad_line), "T vad %.1f/%.1f/%.1f", row.vad.valence,
                      row.vad.arousal, row.vad.dominance);
        put_small_text(canvas, vad_line, {ox, ty}, kTruth);
        ty += 14;
        std::snprintf(vad_line, sizeof(vad_line), "P vad %.1f/%.1f/%.1f", vp[0], vp[1], vp[2]);
        put_small_text(canvas, vad_line, {ox, ty}, kPred);
    }
    write_png(canvas, out_png);
}

}  // namespace emofuse::report
