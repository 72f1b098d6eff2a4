#include "emofuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace emofuse {

namespace {

// score descending, ties by original index ascending
std::vector<size_t> ranking(const ScoredSet& s) {
    std::vector<size_t> order(s.scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (s.scores[a] != s.scores[b]) return s.scores[a] > s.scores[b];
        return a < b;
    });
    return order;
}

int count_positives(const ScoredSet& s) {
    int n = 0;
    for (auto l : s.labels) n += l ? 1 : 0;
    return n;
}

}  // namespace

std::optional<double> average_precision(const ScoredSet& s) {
    if (s.scores.size() != s.labels.size())
        throw Error("average_precision: scores/labels length mismatch");
    const int total_positives = count_positives(s);
    if (total_positives == 0) return std::nullopt;

    const auto order = ranking(s);
    double ap = 0.0;
    int tp = 0;
    for (size_t n = 0; n < order.size(); ++n) {
        if (!s.labels[order[n]]) continue;
        ++tp;
        const double precision = static_cast<double>(tp) / static_cast<double>(n + 1);
        const double recall_step = 1.0 / total_positives;  // R_n - R_{n-1}
        ap += recall_step * precision;
    }
    return ap;
}

double mean_ap(std::span<const std::optional<double>> per_category_ap) {
    double sum = 0.0;
    int defined = 0;
    for (const auto& ap : per_category_ap) {
        if (!ap.has_value()) continue;
        sum += *ap;
        ++defined;
    }
    if (defined == 0) throw Error("mean_ap: no category has a defined AP");
    return sum / defined;
}

double eq_pr_threshold(const ScoredSet& s) {
    if (s.scores.empty()) throw Error("eq_pr_threshold: empty set");
    if (s.scores.size() != s.labels.size())
        throw Error("eq_pr_threshold: scores/labels length mismatch");
    const int total_positives = count_positives(s);
    if (total_positives == 0) throw Error("eq_pr_threshold: no positive labels");

    std::vector<double> candidates = s.scores;
    std::sort(candidates.begin(), candidates.end(), std::greater<>());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double best_t = candidates.front();
    double best_gap = 2.0;
    for (const double t : candidates) {  // descending: first win keeps the larger t
        int predicted = 0, tp = 0;
        for (size_t i = 0; i < s.scores.size(); ++i) {
            if (s.scores[i] < t) continue;
            ++predicted;
            if (s.labels[i]) ++tp;
        }
        const double recall = static_cast<double>(tp) / total_positives;
        const double gap = predicted == 0
                               ? 1.0
                               : std::abs(static_cast<double>(tp) / predicted - recall);
        if (gap < best_gap) {
            best_gap = gap;
            best_t = t;
        }
    }
    return best_t;
}

MaeResult mae(std::span<const std::array<double, 3>> pred,
              std::span<const std::array<double, 3>> truth) {
    if (pred.size() != truth.size()) throw Error("mae: prediction/truth count mismatch");
    if (pred.empty()) throw Error("mae: empty input");
    MaeResult out;
    for (size_t i = 0; i < pred.size(); ++i)
        for (int d = 0; d < 3; ++d) out.per_dim[d] += std::abs(pred[i][d] - truth[i][d]);
    for (int d = 0; d < 3; ++d) out.per_dim[d] /= static_cast<double>(pred.size());
    out.mean = (out.per_dim[0] + out.per_dim[1] + out.per_dim[2]) / 3.0;
    return out;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["per_category"] = nlohmann::json::array();
    for (const auto& c : per_category) {
        nlohmann::json e;
        e["name"] = c.name;
        e["ap"] = c.ap.has_value() ? nlohmann::json(*c.ap) : nlohmann::json(nullptr);
        e["threshold"] =
            c.threshold.has_value() ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr);
        e["support"] = c.support;
        e["degenerate_threshold"] = c.degenerate_threshold;
        j["per_category"].push_back(std::move(e));
    }
    j["map"] = map;
    j["mae"] = {{"valence", mae.per_dim[0]},
                {"arousal", mae.per_dim[1]},
                {"dominance", mae.per_dim[2]},
                {"mean", mae.mean}};
    j["excluded_categories"] = excluded_categories;
    j["branches"] = branch_names;
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    EvalReport r;
    for (const auto& e : j.at("per_category")) {
        CategoryEval c;
        c.name = e.at("name").get<std::string>();
        if (!e.at("ap").is_null()) c.ap = e.at("ap").get<double>();
        if (!e.at("threshold").is_null()) c.threshold = e.at("threshold").get<double>();
        c.support = e.at("support").get<int>();
        c.degenerate_threshold = e.value("degenerate_threshold", false);
        r.per_category.push_back(std::move(c));
    }
    r.map = j.at("map").get<double>();
    r.mae.per_dim[0] = j.at("mae").at("valence").get<double>();
    r.mae.per_dim[1] = j.at("mae").at("arousal").get<double>();
    r.mae.per_dim[2] = j.at("mae").at("dominance").get<double>();
    r.mae.mean = j.at("mae").at("mean").get<double>();
    r.excluded_categories = j.at("excluded_categories").get<std::vector<std::string>>();
    r.branch_names = j.at("branches").get<std::vector<std::string>>();
    return r;
}

namespace {

std::string pad(const std::string& s, size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

constexpr size_t kColWidth = 22;

}  // namespace

std::string EvalReport::table_header() {
    std::string line = pad("Body Branch", kColWidth) + pad("Context Branch", kColWidth) +
                       pad("Face Branch", kColWidth) + pad("mAP", 10) + pad("MAE", 10);
    return line + "\n" + std::string(line.size(), '-');
}

std::string EvalReport::table_row() const {
    std::ostringstream row;
    for (int i = 0; i < 3; ++i) {
        const std::string name =
            i < static_cast<int>(branch_names.size()) && !branch_names[i].empty()
                ? branch_names[i]
                : "-";
        row << pad(name, kColWidth);
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", map);
    row << pad(buf, 10);
    std::snprintf(buf, sizeof(buf), "%.4f", mae.mean);
    row << pad(buf, 10);
    return row.str();
}

std::string EvalReport::to_text_table() const {
    return table_header() + "\n" + table_row() + "\n";
}

}  // namespace emofuse
