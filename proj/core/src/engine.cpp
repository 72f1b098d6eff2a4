#include "emofuse/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "emofuse/params_io.hpp"
#include "emofuse/util.hpp"

namespace emofuse {

namespace {

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) {
    uint64_t h = kFnvOffsetBasis;
    h = fnv1a64(&base, sizeof(base), h);
    h = fnv1a64(&a, sizeof(a), h);
    h = fnv1a64(&b, sizeof(b), h);
    return h;
}

struct ThresholdFit {
    double t = std::numeric_limits<double>::infinity();
    double gap = 0.0;
    bool defined = false;
};

// eq_pr_threshold plus the achieved gap, so degenerate fits (gap cannot
// reach zero) can be surfaced in the report.
ThresholdFit fit_threshold(const ScoredSet& s) {
    ThresholdFit fit;
    bool has_positive = false;
    for (auto l : s.labels)
        if (l) has_positive = true;
    if (s.scores.empty() || !has_positive) return fit;
    fit.defined = true;
    fit.t = eq_pr_threshold(s);
    int predicted = 0, tp = 0, positives = 0;
    for (size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i]) ++positives;
        if (s.scores[i] < fit.t) continue;
        ++predicted;
        if (s.labels[i]) ++tp;
    }
    const double recall = static_cast<double>(tp) / positives;
    fit.gap = predicted == 0 ? 1.0 : std::abs(static_cast<double>(tp) / predicted - recall);
    return fit;
}

nlohmann::json input_spec_to_json(const InputSpec& in) {
    return {{"height", in.height},
            {"width", in.width},
            {"channels", in.channels},
            {"mean", in.mean},
            {"stddev", in.stddev}};
}

InputSpec input_spec_from_json(const nlohmann::json& j) {
    InputSpec in;
    in.height = j.at("height").get<int>();
    in.width = j.at("width").get<int>();
    in.channels = j.at("channels").get<int>();
    in.mean = j.at("mean").get<std::array<double, 3>>();
    in.stddev = j.at("stddev").get<std::array<double, 3>>();
    return in;
}

WeightSource parse_weight_source(const std::string& s) {
    if (s == "imagenet") return WeightSource::imagenet;
    if (s == "places365") return WeightSource::places365;
    if (s == "fer_pretrained") return WeightSource::fer_pretrained;
    if (s == "finetuned_checkpoint") return WeightSource::finetuned_checkpoint;
    if (s == "random_seeded") return WeightSource::random_seeded;
    throw Error("unknown weight source: '" + s + "'");
}

}  // namespace

std::string to_string(Task t) {
    switch (t) {
        case Task::discrete: return "discrete";
        case Task::continuous: return "continuous";
        default: return "joint";
    }
}

Task parse_task(const std::string& s) {
    if (s == "discrete") return Task::discrete;
    if (s == "continuous") return Task::continuous;
    if (s == "joint") return Task::joint;
    throw Error("unknown task: '" + s + "'");
}

std::vector<std::pair<BranchKind, std::string>> BranchSelection::active() const {
    std::vector<std::pair<BranchKind, std::string>> out;
    if (!body.empty()) out.emplace_back(BranchKind::body, body);
    if (!context.empty()) out.emplace_back(BranchKind::context, context);
    if (!face.empty()) out.emplace_back(BranchKind::face, face);
    return out;
}

std::vector<std::string> BranchSelection::display_names() const {
    return {body.empty() ? "-" : body, context.empty() ? "-" : context,
            face.empty() ? "-" : face};
}

void TrainConfig::validate() const {
    if (branches.empty()) throw Error("config: no branches selected");
    if (batch_size < 1) throw Error("config: batch_size must be >= 1");
    if (!(lr0 > 0.0)) throw Error("config: lr0 must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw Error("config: momentum must be in [0,1)");
    if (epochs < 1) throw Error("config: epochs must be >= 1");
    if (decay_every < 1) throw Error("config: decay_every must be >= 1");
    if (!(decay_factor > 0.0)) throw Error("config: decay_factor must be > 0");
    if (!(c > 1.0)) throw Error("config: c must be > 1");
    if (!(theta > 0.0)) throw Error("config: theta must be > 0");
    if (lambda_disc < 0.0 || lambda_cont < 0.0) throw Error("config: lambdas must be >= 0");
    if (task == Task::joint && lambda_disc == 0.0 && lambda_cont == 0.0)
        throw Error("config: joint task with both lambdas zero");
    if (hidden_dim < 1) throw Error("config: hidden_dim must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw Error("config: dropout_rate must be in [0,1)");
}

double lr_at(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw Error("lr_at: negative epoch");
    const int decays = epoch / config.decay_every;
    return config.lr0 * std::pow(config.decay_factor, decays);
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
              double momentum) {
    if (!param.same_shape(grad) || !param.same_shape(velocity))
        throw Error("sgd_step: shape mismatch");
    if (!grad.all_finite()) throw Error("sgd_step: non-finite gradient");
    for (size_t i = 0; i < param.v.size(); ++i) {
        velocity.v[i] = momentum * velocity.v[i] + grad.v[i];
        param.v[i] -= lr * velocity.v[i];
    }
}

std::string TrainLog::to_csv(bool include_seconds) const {
    std::string out = include_seconds ? "epoch,lr,train_loss,val_map,val_mae,seconds"
                                      : "epoch,lr,train_loss,val_map,val_mae";
    out += "\n";
    for (const auto& e : epochs) {
        out += std::to_string(e.epoch) + "," + format_double(e.lr) + "," +
               format_double(e.train_loss) + ",";
        if (e.val_map) out += format_double(*e.val_map);
        out += ",";
        if (e.val_mae) out += format_double(*e.val_mae);
        if (include_seconds) out += "," + format_double(e.seconds);
        out += "\n";
    }
    return out;
}

void TrainLog::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write train log: " + path.string());
    out << to_csv(true);
}

// --- checkpoint serialization ---

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    ParamMap params;
    params["fusion.w1"] = ckpt.params.w1;
    params["fusion.b1"] = ckpt.params.b1;
    params["fusion.w_disc"] = ckpt.params.w_disc;
    params["fusion.b_disc"] = ckpt.params.b_disc;
    params["fusion.w_cont"] = ckpt.params.w_cont;
    params["fusion.b_cont"] = ckpt.params.b_cont;
    save_params(params, path);

    nlohmann::json j;
    j["format_version"] = 1;
    const TrainConfig& c = ckpt.config;
    j["config"] = {{"task", to_string(c.task)},
                   {"batch_size", c.batch_size},
                   {"lr0", c.lr0},
                   {"momentum", c.momentum},
                   {"decay_factor", c.decay_factor},
                   {"decay_every", c.decay_every},
                   {"epochs", c.epochs},
                   {"seed", c.seed},
                   {"c", c.c},
                   {"theta", c.theta},
                   {"lambda_disc", c.lambda_disc},
                   {"lambda_cont", c.lambda_cont},
                   {"hidden_dim", c.hidden_dim},
                   {"dropout_rate", c.dropout_rate},
                   {"branches",
                    {{"body", c.branches.body},
                     {"context", c.branches.context},
                     {"face", c.branches.face}}}};
    j["fusion"] = {{"input_dim", ckpt.params.config.input_dim},
                   {"hidden_dim", ckpt.params.config.hidden_dim},
                   {"dropout_rate", ckpt.params.config.dropout_rate},
                   {"seed", ckpt.params.config.seed}};
    j["branch_specs"] = nlohmann::json::array();
    for (const auto& spec : ckpt.bound_branches) {
        j["branch_specs"].push_back({{"name", spec.name},
                                     {"kind", to_string(spec.kind)},
                                     {"output_dim", spec.output_dim},
                                     {"frozen", spec.frozen},
                                     {"weight_source", to_string(spec.weight_source)},
                                     {"input", input_spec_to_json(spec.input)}});
    }
    j["epoch"] = ckpt.epoch;
    j["metrics"] = {{"val_map", ckpt.val_map ? nlohmann::json(*ckpt.val_map)
                                             : nlohmann::json(nullptr)},
                    {"val_mae", ckpt.val_mae ? nlohmann::json(*ckpt.val_mae)
                                             : nlohmann::json(nullptr)}};
    if (ckpt.thresholds) {
        nlohmann::json t = nlohmann::json::array();
        for (double v : *ckpt.thresholds)
            t.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
        j["thresholds"] = std::move(t);
    } else {
        j["thresholds"] = nullptr;
    }
    j["content_digest"] = digest_hex(params_digest(params));

    std::ofstream out(path.string() + ".json", std::ios::binary);
    if (!out) throw Error("cannot write checkpoint sidecar for " + path.string());
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw Error("checkpoint not found: " + path.string());
    const ParamMap params = load_params(path);

    std::ifstream in(path.string() + ".json");
    if (!in) throw Error("missing checkpoint sidecar: " + path.string() + ".json");
    const nlohmann::json j = nlohmann::json::parse(in);

    Checkpoint ckpt;
    const auto& jc = j.at("config");
    TrainConfig& c = ckpt.config;
    c.task = parse_task(jc.at("task").get<std::string>());
    c.batch_size = jc.at("batch_size").get<int>();
    c.lr0 = jc.at("lr0").get<double>();
    c.momentum = jc.at("momentum").get<double>();
    c.decay_factor = jc.at("decay_factor").get<double>();
    c.decay_every = jc.at("decay_every").get<int>();
    c.epochs = jc.at("epochs").get<int>();
    c.seed = jc.at("seed").get<uint64_t>();
    c.c = jc.at("c").get<double>();
    c.theta = jc.at("theta").get<double>();
    c.lambda_disc = jc.at("lambda_disc").get<double>();
    c.lambda_cont = jc.at("lambda_cont").get<double>();
    c.hidden_dim = jc.at("hidden_dim").get<int>();
    c.dropout_rate = jc.at("dropout_rate").get<double>();
    c.branches.body = jc.at("branches").at("body").get<std::string>();
    c.branches.context = jc.at("branches").at("context").get<std::string>();
    c.branches.face = jc.at("branches").at("face").get<std::string>();

    FusionConfig fc;
    fc.input_dim = j.at("fusion").at("input_dim").get<int>();
    fc.hidden_dim = j.at("fusion").at("hidden_dim").get<int>();
    fc.dropout_rate = j.at("fusion").at("dropout_rate").get<double>();
    fc.seed = j.at("fusion").at("seed").get<uint64_t>();
    ckpt.params.config = fc;
    auto take = [&](const char* key) {
        auto it = params.find(key);
        if (it == params.end())
            throw Error("checkpoint missing tensor '" + std::string(key) + "'");
        return it->second;
    };
    ckpt.params.w1 = take("fusion.w1");
    ckpt.params.b1 = take("fusion.b1");
    ckpt.params.w_disc = take("fusion.w_disc");
    ckpt.params.b_disc = take("fusion.b_disc");
    ckpt.params.w_cont = take("fusion.w_cont");
    ckpt.params.b_cont = take("fusion.b_cont");

    for (const auto& js : j.at("branch_specs")) {
        BranchSpec spec;
        spec.name = js.at("name").get<std::string>();
        spec.kind = parse_branch_kind(js.at("kind").get<std::string>());
        spec.output_dim = js.at("output_dim").get<int>();
        spec.frozen = js.at("frozen").get<bool>();
        spec.weight_source = parse_weight_source(js.at("weight_source").get<std::string>());
        spec.input = input_spec_from_json(js.at("input"));
        ckpt.bound_branches.push_back(std::move(spec));
    }

    ckpt.epoch = j.at("epoch").get<int>();
    if (!j.at("metrics").at("val_map").is_null())
        ckpt.val_map = j.at("metrics").at("val_map").get<double>();
    if (!j.at("metrics").at("val_mae").is_null())
        ckpt.val_mae = j.at("metrics").at("val_mae").get<double>();
    if (!j.at("thresholds").is_null()) {
        std::array<double, kNumCategories> t{};
        const auto& jt = j.at("thresholds");
        if (jt.size() != kNumCategories) throw Error("checkpoint thresholds malformed");
        for (int i = 0; i < kNumCategories; ++i)
            t[i] = jt[i].is_null() ? std::numeric_limits<double>::infinity()
                                   : jt[i].get<double>();
        ckpt.thresholds = t;
    }
    return ckpt;
}

// --- feature pipeline ---

FeaturePipeline::FeaturePipeline(const BranchSelection& selection,
                                 const BranchRegistry& registry) {
    if (selection.empty()) throw Error("feature pipeline: no branches selected");
    for (const auto& [role, name] : selection.active()) {
        auto extractor = registry.make(name, role);
        specs_.push_back(extractor->spec());
        extractors_.emplace_back(role, std::move(extractor));
    }
}

int FeaturePipeline::input_dim() const {
    int dim = 0;
    for (const auto& spec : specs_) dim += spec.output_dim;
    return dim;
}

uint64_t FeaturePipeline::branch_digest() const {
    uint64_t h = kFnvOffsetBasis;
    for (const auto& [role, extractor] : extractors_) {
        h = fnv1a64(to_string(role), h);
        const uint64_t d = extractor->param_digest();
        h = fnv1a64(&d, sizeof(d), h);
    }
    return h;
}

std::vector<double> FeaturePipeline::features_for_row(const AnnotationTable& table,
                                                      int row_index, const ImageStore& store,
                                                      const FaceCache* faces) const {
    const auto& row = table.rows.at(row_index);
    const Image image = store.load(row.image_id);
    std::vector<double> out;
    out.reserve(input_dim());
    for (const auto& [role, extractor] : extractors_) {
        Image input;
        switch (role) {
            case BranchKind::body: input = crop_body(image, row.body_box); break;
            case BranchKind::context: input = image; break;
            case BranchKind::face:
                if (!faces)
                    throw Error("face branch is active but no face cache was provided");
                input = faces->load(row_index);
                break;
        }
        const FeatureVector f = extractor->extract_one(input);
        out.insert(out.end(), f.values.begin(), f.values.end());
    }
    return out;
}

std::vector<double> FeaturePipeline::features_for_person(const Image& image,
                                                         const BoundingBox& body_box,
                                                         const FaceDetector& detector) const {
    const Image body = crop_body(image, body_box);
    std::vector<double> out;
    out.reserve(input_dim());
    for (const auto& [role, extractor] : extractors_) {
        Image input;
        switch (role) {
            case BranchKind::body: input = body; break;
            case BranchKind::context: input = image; break;
            case BranchKind::face: input = extract_face(body, detector).pixels; break;
        }
        const FeatureVector f = extractor->extract_one(input);
        out.insert(out.end(), f.values.begin(), f.values.end());
    }
    return out;
}

// --- training ---

namespace {

struct SplitScores {
    std::vector<std::array<double, kNumCategories>> disc;
    std::vector<std::array<double, 3>> vad_raw;  // de-normalized (x10)
};

SplitScores score_rows(const FusionParams& params, const std::vector<int>& rows,
                       const std::unordered_map<int, std::vector<double>>& features) {
    SplitScores out;
    out.disc.reserve(rows.size());
    out.vad_raw.reserve(rows.size());
    for (int r : rows) {
        const Prediction p = fusion_forward(params, features.at(r), FusionMode::infer, 0);
        out.disc.push_back(p.disc_scores);
        out.vad_raw.push_back({p.cont_values[0] * 10.0, p.cont_values[1] * 10.0,
                               p.cont_values[2] * 10.0});
    }
    return out;
}

std::optional<double> val_map_from_scores(const AnnotationTable& table,
                                          const std::vector<int>& rows,
                                          const SplitScores& scores) {
    std::vector<std::optional<double>> aps;
    for (int cat = 0; cat < kNumCategories; ++cat) {
        ScoredSet set;
        set.scores.reserve(rows.size());
        set.labels.reserve(rows.size());
        for (size_t i = 0; i < rows.size(); ++i) {
            set.scores.push_back(scores.disc[i][cat]);
            set.labels.push_back(table.rows[rows[i]].discrete.bits[cat]);
        }
        aps.push_back(average_precision(set));
    }
    for (const auto& ap : aps)
        if (ap.has_value()) return mean_ap(aps);
    return std::nullopt;
}

std::optional<double> val_mae_from_scores(const AnnotationTable& table,
                                          const std::vector<int>& rows,
                                          const SplitScores& scores) {
    if (rows.empty()) return std::nullopt;
    std::vector<std::array<double, 3>> truth;
    truth.reserve(rows.size());
    for (int r : rows) truth.push_back(table.rows[r].vad.as_array());
    return mae(scores.vad_raw, truth).mean;
}

std::array<double, kNumCategories> fit_all_thresholds(const AnnotationTable& table,
                                                      const std::vector<int>& rows,
                                                      const SplitScores& scores) {
    std::array<double, kNumCategories> thresholds;
    for (int cat = 0; cat < kNumCategories; ++cat) {
        ScoredSet set;
        for (size_t i = 0; i < rows.size(); ++i) {
            set.scores.push_back(scores.disc[i][cat]);
            set.labels.push_back(table.rows[rows[i]].discrete.bits[cat]);
        }
        thresholds[cat] = fit_threshold(set).t;  // +inf when undefined
    }
    return thresholds;
}

}  // namespace

TrainResult train(const AnnotationTable& table, const ImageStore& store,
                  const FaceCache* faces, const TrainConfig& config,
                  const BranchRegistry& registry, const std::filesystem::path& out_dir) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw Error("train: cannot create output directory " + out_dir.string());

    const std::vector<int> train_rows_all = table.row_indices(Split::train);
    if (train_rows_all.empty()) throw Error("train: empty train split");

    std::vector<int> pool = train_rows_all;
    if (config.task == Task::discrete) {
        std::erase_if(pool, [&](int r) { return !table.rows[r].discrete.any(); });
        if (pool.empty()) throw Error("train: no train rows carry a discrete label");
    }
    const std::vector<int> val_rows = table.row_indices(Split::val);

    FeaturePipeline pipeline(config.branches, registry);
    const uint64_t branch_digest_before = pipeline.branch_digest();

    // Branches are frozen, so per-row features are constants of the run.
    std::unordered_map<int, std::vector<double>> features;
    auto cache_rows = [&](const std::vector<int>& rows) {
        for (int r : rows)
            if (!features.count(r))
                features.emplace(r, pipeline.features_for_row(table, r, store, faces));
    };
    cache_rows(pool);
    cache_rows(val_rows);

    DiscreteLossWeights weights{};
    if (config.task != Task::continuous)
        weights = class_weights(compute_frequencies(table), config.c);
    const ContinuousLossConfig cont_config{config.theta};

    FusionConfig fusion_config{pipeline.input_dim(), config.hidden_dim, config.dropout_rate,
                               config.seed};
    FusionParams params = init_fusion(fusion_config);
    FusionGrads velocity = FusionGrads::zeros_like(params);

    std::mt19937_64 shuffle_rng(config.seed);
    TrainLog log;
    FusionParams best_params = params;
    std::optional<double> best_metric;
    int best_epoch = 0;
    std::optional<double> best_val_map, best_val_mae;
    uint64_t sample_counter = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at(epoch, config);
        std::shuffle(pool.begin(), pool.end(), shuffle_rng);

        double loss_sum = 0.0;
        size_t loss_count = 0;
        for (size_t start = 0; start < pool.size(); start += config.batch_size) {
            const size_t end = std::min(pool.size(), start + config.batch_size);
            FusionGrads batch_grads = FusionGrads::zeros_like(params);
            size_t batch_count = 0;
            for (size_t k = start; k < end; ++k) {
                const int row = pool[k];
                const auto& annotation = table.rows[row];

                double ld = 0.0, lc = 0.0;
                if (config.task != Task::continuous && annotation.discrete.any())
                    ld = config.task == Task::joint ? config.lambda_disc : 1.0;
                if (config.task != Task::discrete)
                    lc = config.task == Task::joint ? config.lambda_cont : 1.0;
                if (ld == 0.0 && lc == 0.0) continue;

                ForwardCache cache;
                const Prediction pred = fusion_forward(
                    params, features.at(row), FusionMode::train,
                    derive_seed(config.seed, static_cast<uint64_t>(epoch), sample_counter++),
                    &cache);

                DiscLossResult disc{};
                if (ld > 0.0) disc = disc_loss(pred.disc_scores, annotation.discrete, weights);
                ContLossResult cont{};
                if (lc > 0.0) {
                    const std::array<double, 3> target = {annotation.vad.valence / 10.0,
                                                          annotation.vad.arousal / 10.0,
                                                          annotation.vad.dominance / 10.0};
                    cont = cont_loss(pred.cont_values, target, cont_config);
                }
                const CombinedLossResult combined = combined_loss(disc, cont, ld, lc);
                if (!std::isfinite(combined.loss))
                    throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(start / config.batch_size));
                loss_sum += combined.loss;
                ++loss_count;

                batch_grads.add_scaled(
                    fusion_backward(params, cache, combined.grad_disc, combined.grad_cont),
                    1.0);
                ++batch_count;
            }
            if (batch_count == 0) continue;
            batch_grads.scale(1.0 / static_cast<double>(batch_count));
            sgd_step(params.w1, batch_grads.w1, velocity.w1, lr, config.momentum);
            sgd_step(params.b1, batch_grads.b1, velocity.b1, lr, config.momentum);
            sgd_step(params.w_disc, batch_grads.w_disc, velocity.w_disc, lr, config.momentum);
            sgd_step(params.b_disc, batch_grads.b_disc, velocity.b_disc, lr, config.momentum);
            sgd_step(params.w_cont, batch_grads.w_cont, velocity.w_cont, lr, config.momentum);
            sgd_step(params.b_cont, batch_grads.b_cont, velocity.b_cont, lr, config.momentum);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;

        if (!val_rows.empty()) {
            const SplitScores val_scores = score_rows(params, val_rows, features);
            if (config.task != Task::continuous)
                entry.val_map = val_map_from_scores(table, val_rows, val_scores);
            if (config.task != Task::discrete)
                entry.val_mae = val_mae_from_scores(table, val_rows, val_scores);
        }

        // best = highest val mAP (discrete/joint) or lowest val MAE (continuous)
        const std::optional<double> metric =
            config.task == Task::continuous ? entry.val_mae : entry.val_map;
        const bool improved =
            !metric.has_value() || !best_metric.has_value() ||
            (config.task == Task::continuous ? *metric < *best_metric
                                             : *metric > *best_metric);
        if (improved) {
            best_params = params;
            best_metric = metric;
            best_epoch = epoch;
            best_val_map = entry.val_map;
            best_val_mae = entry.val_mae;
        }

        entry.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(entry);
    }

    auto finish = [&](FusionParams p, int epoch, std::optional<double> vmap,
                      std::optional<double> vmae) {
        Checkpoint ckpt;
        ckpt.config = config;
        ckpt.params = std::move(p);
        ckpt.bound_branches = pipeline.bound_specs();
        ckpt.epoch = epoch;
        ckpt.val_map = vmap;
        ckpt.val_mae = vmae;
        if (!val_rows.empty()) {
            const SplitScores val_scores = score_rows(ckpt.params, val_rows, features);
            ckpt.thresholds = fit_all_thresholds(table, val_rows, val_scores);
        }
        return ckpt;
    };

    TrainResult result;
    result.log = std::move(log);
    const auto& last_entry = result.log.epochs.back();
    result.best = finish(std::move(best_params), best_epoch, best_val_map, best_val_mae);
    result.last = finish(std::move(params), config.epochs - 1, last_entry.val_map,
                         last_entry.val_mae);
    result.best_path = out_dir / "checkpoint_best.emf";
    result.last_path = out_dir / "checkpoint_last.emf";
    save_checkpoint(result.best, result.best_path);
    save_checkpoint(result.last, result.last_path);
    result.log.save_csv(out_dir / "trainlog.csv");
    result.branch_digest_before = branch_digest_before;
    result.branch_digest_after = pipeline.branch_digest();
    return result;
}

// --- evaluation ---

EvalReport evaluate_scored(const AnnotationTable& table, Split eval_split,
                           std::span<const std::array<double, kNumCategories>> eval_disc,
                           std::span<const std::array<double, 3>> eval_vad_raw,
                           Split threshold_split,
                           std::span<const std::array<double, kNumCategories>> threshold_disc,
                           const std::vector<std::string>& branch_names) {
    const std::vector<int> eval_rows = table.row_indices(eval_split);
    if (eval_rows.empty())
        throw Error("evaluate: missing split '" + to_string(eval_split) + "'");
    if (eval_disc.size() != eval_rows.size() || eval_vad_raw.size() != eval_rows.size())
        throw Error("evaluate: prediction count does not match split size");
    const std::vector<int> threshold_rows = table.row_indices(threshold_split);
    if (threshold_disc.size() != threshold_rows.size())
        throw Error("evaluate: threshold prediction count does not match split size");

    EvalReport report;
    report.branch_names = branch_names;
    std::vector<std::optional<double>> aps;
    const auto& names = category_names();
    for (int cat = 0; cat < kNumCategories; ++cat) {
        CategoryEval ce;
        ce.name = names[cat];

        ScoredSet eval_set;
        for (size_t i = 0; i < eval_rows.size(); ++i) {
            eval_set.scores.push_back(eval_disc[i][cat]);
            eval_set.labels.push_back(table.rows[eval_rows[i]].discrete.bits[cat]);
            ce.support += eval_set.labels.back() ? 1 : 0;
        }
        ce.ap = average_precision(eval_set);
        aps.push_back(ce.ap);
        if (!ce.ap.has_value()) report.excluded_categories.push_back(ce.name);

        ScoredSet threshold_set;
        for (size_t i = 0; i < threshold_rows.size(); ++i) {
            threshold_set.scores.push_back(threshold_disc[i][cat]);
            threshold_set.labels.push_back(table.rows[threshold_rows[i]].discrete.bits[cat]);
        }
        const ThresholdFit fit = fit_threshold(threshold_set);
        if (fit.defined) {
            ce.threshold = fit.t;
            ce.degenerate_threshold = fit.gap > 1e-12;
        }
        report.per_category.push_back(std::move(ce));
    }
    report.map = mean_ap(aps);

    std::vector<std::array<double, 3>> truth;
    truth.reserve(eval_rows.size());
    for (int r : eval_rows) truth.push_back(table.rows[r].vad.as_array());
    report.mae = mae(eval_vad_raw, truth);
    return report;
}

EvalReport evaluate(const Checkpoint& ckpt, const AnnotationTable& table,
                    const ImageStore& store, const FaceCache* faces, Split split,
                    const BranchRegistry& registry) {
    const std::vector<int> eval_rows = table.row_indices(split);
    if (eval_rows.empty()) throw Error("evaluate: missing split '" + to_string(split) + "'");
    const std::vector<int> val_rows = table.row_indices(Split::val);

    FeaturePipeline pipeline(ckpt.config.branches, registry);
    if (pipeline.input_dim() != ckpt.params.config.input_dim)
        throw Error("evaluate: branch dims do not match the checkpoint's input_dim");

    std::unordered_map<int, std::vector<double>> features;
    for (int r : eval_rows)
        features.emplace(r, pipeline.features_for_row(table, r, store, faces));
    for (int r : val_rows)
        if (!features.count(r))
            features.emplace(r, pipeline.features_for_row(table, r, store, faces));

    const SplitScores eval_scores = score_rows(ckpt.params, eval_rows, features);
    const SplitScores val_scores = score_rows(ckpt.params, val_rows, features);
    return evaluate_scored(table, split, eval_scores.disc, eval_scores.vad_raw, Split::val,
                           val_scores.disc, ckpt.config.branches.display_names());
}

// --- prediction ---

std::string PredictionRecord::to_json() const {
    nlohmann::json j;
    j["image_id"] = image_id;
    j["row_index"] = row_index;
    j["disc_scores"] = disc_scores;
    if (disc_decisions) {
        nlohmann::json d = nlohmann::json::array();
        for (auto b : *disc_decisions) d.push_back(static_cast<int>(b));
        j["disc_decisions"] = std::move(d);
        nlohmann::json names = nlohmann::json::array();
        for (int i = 0; i < kNumCategories; ++i)
            if ((*disc_decisions)[i]) names.push_back(category_names()[i]);
        j["predicted_categories"] = std::move(names);
    } else {
        j["disc_decisions"] = nullptr;
    }
    j["vad_pred"] = {{"valence", vad_pred[0]},
                     {"arousal", vad_pred[1]},
                     {"dominance", vad_pred[2]}};
    if (disc_truth) {
        nlohmann::json names = nlohmann::json::array();
        for (int i = 0; i < kNumCategories; ++i)
            if (disc_truth->bits[i]) names.push_back(category_names()[i]);
        j["disc_truth"] = std::move(names);
    }
    if (vad_truth)
        j["vad_truth"] = {{"valence", vad_truth->valence},
                          {"arousal", vad_truth->arousal},
                          {"dominance", vad_truth->dominance}};
    return j.dump(2);
}

PredictionRecord predict(const Checkpoint& ckpt, const Image& image,
                         const BoundingBox& body_box, const FaceDetector& detector,
                         const BranchRegistry& registry) {
    FeaturePipeline pipeline(ckpt.config.branches, registry);
    if (pipeline.input_dim() != ckpt.params.config.input_dim)
        throw Error("predict: branch dims do not match the checkpoint's input_dim");
    const std::vector<double> x = pipeline.features_for_person(image, body_box, detector);
    const Prediction pred = fusion_forward(ckpt.params, x, FusionMode::infer, 0);

    PredictionRecord record;
    record.disc_scores = pred.disc_scores;
    for (int d = 0; d < 3; ++d)
        record.vad_pred[d] = std::clamp(pred.cont_values[d] * 10.0, 0.0, 10.0);
    if (ckpt.thresholds) {
        std::array<uint8_t, kNumCategories> decisions{};
        for (int i = 0; i < kNumCategories; ++i)
            decisions[i] = pred.disc_scores[i] >= (*ckpt.thresholds)[i] ? 1 : 0;
        record.disc_decisions = decisions;
    }
    return record;
}

// --- run configuration files ---

std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config file line " + std::to_string(line_no) +
                        ": expected key = value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

void apply_config_entry(TrainConfig& config, const std::string& key,
                        const std::string& value) {
    auto to_int = [&](const std::string& v) {
        try {
            return std::stoi(v);
        } catch (...) {
            throw Error("config key '" + key + "': not an integer: '" + v + "'");
        }
    };
    auto to_double = [&](const std::string& v) {
        try {
            return std::stod(v);
        } catch (...) {
            throw Error("config key '" + key + "': not a number: '" + v + "'");
        }
    };

    if (key == "task") config.task = parse_task(value);
    else if (key == "batch_size") config.batch_size = to_int(value);
    else if (key == "lr0") config.lr0 = to_double(value);
    else if (key == "momentum") config.momentum = to_double(value);
    else if (key == "decay_factor") config.decay_factor = to_double(value);
    else if (key == "decay_every") config.decay_every = to_int(value);
    else if (key == "epochs") config.epochs = to_int(value);
    else if (key == "seed") config.seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "c") config.c = to_double(value);
    else if (key == "theta") config.theta = to_double(value);
    else if (key == "lambda_disc") config.lambda_disc = to_double(value);
    else if (key == "lambda_cont") config.lambda_cont = to_double(value);
    else if (key == "hidden_dim") config.hidden_dim = to_int(value);
    else if (key == "dropout_rate") config.dropout_rate = to_double(value);
    else if (key == "body_backbone") config.branches.body = value;
    else if (key == "context_backbone") config.branches.context = value;
    else if (key == "face_backbone") config.branches.face = value;
    else if (key == "branches") {
        // comma-separated subset of body,context,face; unlisted roles are
        // disabled, listed ones keep (or default) their backbone name
        BranchSelection next;
        std::stringstream ss(value);
        std::string role;
        while (std::getline(ss, role, ',')) {
            role = trim(role);
            if (role.empty()) continue;
            const BranchKind kind = parse_branch_kind(role);
            const char* fallback = "toy_rand_16";
            if (kind == BranchKind::body)
                next.body = config.branches.body.empty() ? fallback : config.branches.body;
            else if (kind == BranchKind::context)
                next.context =
                    config.branches.context.empty() ? fallback : config.branches.context;
            else
                next.face = config.branches.face.empty() ? fallback : config.branches.face;
        }
        config.branches = next;
    } else {
        throw Error("unknown config key: '" + key + "'");
    }
}

}  // namespace emofuse
