// emofuse CLI: fixture, prepare-faces, train, eval, predict, report.
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Diagnostics go
// to stderr; machine-readable output goes to files or stdout.

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "emofuse/engine.hpp"
#include "emofuse/fixture.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using namespace emofuse;

namespace {

BoundingBox parse_box(const std::string& text) {
    BoundingBox box;
    int values[4];
    size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        const size_t comma = i < 3 ? text.find(',', pos) : text.size();
        if (comma == std::string::npos) throw Error("--box expects x1,y1,x2,y2");
        const std::string part = text.substr(pos, comma - pos);
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), values[i]);
        if (ec != std::errc{} || p != part.data() + part.size())
            throw Error("--box expects integers: got '" + part + "'");
        pos = comma + 1;
    }
    box = {values[0], values[1], values[2], values[3]};
    if (!box.valid()) throw Error("--box is degenerate");
    return box;
}

void register_branch_checkpoints(BranchRegistry& registry,
                                 const std::vector<std::string>& entries) {
    for (const auto& entry : entries) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw Error("--branch-checkpoint expects name=path, got '" + entry + "'");
        registry.register_checkpoint(entry.substr(0, eq), entry.substr(eq + 1));
    }
}

AnnotationTable load_table(const fs::path& annotations) {
    const LoadResult r = load_annotations(annotations);
    if (!r.rejected_rows.empty())
        std::cerr << "warning: rejected " << r.rejected_rows.size()
                  << " invalid annotation rows (first at line " << r.rejected_rows[0].line
                  << ": " << r.rejected_rows[0].message << ")\n";
    if (!r.unparseable_rows.empty())
        std::cerr << "warning: skipped " << r.unparseable_rows.size()
                  << " unparseable rows\n";
    if (r.zero_label_rows > 0)
        std::cerr << "warning: " << r.zero_label_rows
                  << " rows carry no discrete category (kept for the continuous task)\n";
    return r.table;
}

struct TrainFlags {
    std::string config_path;
    std::string annotations, data_root, faces_cache, out;
    std::vector<std::string> branch_checkpoints;
    std::string branches, body_backbone, context_backbone, face_backbone, task;
    int batch_size = 0, epochs = 0, decay_every = 0, hidden_dim = 0;
    double lr0 = 0, momentum = 0, decay_factor = 0, c = 0, theta = 0;
    double lambda_disc = 0, lambda_cont = 0, dropout_rate = 0;
    uint64_t seed = 0;
};

// defaults -> config file -> explicit flags; --branches applies last so it
// can trim roles whose backbones were set earlier.
TrainConfig resolve_config(const CLI::App* cmd, const TrainFlags& f) {
    TrainConfig config;
    config.branches = {"toy_rand_16", "toy_rand_16", "toy_rand_16"};
    if (!f.config_path.empty())
        for (const auto& [k, v] : parse_kv_file(f.config_path))
            apply_config_entry(config, k, v);

    auto passed = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    if (passed("--task")) apply_config_entry(config, "task", f.task);
    if (passed("--batch-size")) config.batch_size = f.batch_size;
    if (passed("--lr0")) config.lr0 = f.lr0;
    if (passed("--momentum")) config.momentum = f.momentum;
    if (passed("--decay-factor")) config.decay_factor = f.decay_factor;
    if (passed("--decay-every")) config.decay_every = f.decay_every;
    if (passed("--epochs")) config.epochs = f.epochs;
    if (passed("--seed")) config.seed = f.seed;
    if (passed("--c")) config.c = f.c;
    if (passed("--theta")) config.theta = f.theta;
    if (passed("--lambda-disc")) config.lambda_disc = f.lambda_disc;
    if (passed("--lambda-cont")) config.lambda_cont = f.lambda_cont;
    if (passed("--hidden-dim")) config.hidden_dim = f.hidden_dim;
    if (passed("--dropout-rate")) config.dropout_rate = f.dropout_rate;
    if (passed("--body-backbone")) config.branches.body = f.body_backbone;
    if (passed("--context-backbone")) config.branches.context = f.context_backbone;
    if (passed("--face-backbone")) config.branches.face = f.face_backbone;
    if (passed("--branches")) apply_config_entry(config, "branches", f.branches);
    return config;
}

void add_train_config_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--config", f.config_path, "Run config file (key = value lines)");
    cmd->add_option("--branches", f.branches,
                    "Comma-separated subset of body,context,face (default all)");
    cmd->add_option("--body-backbone", f.body_backbone, "Backbone for the body branch")
        ->default_str("toy_rand_16");
    cmd->add_option("--context-backbone", f.context_backbone,
                    "Backbone for the context branch")
        ->default_str("toy_rand_16");
    cmd->add_option("--face-backbone", f.face_backbone, "Backbone for the face branch")
        ->default_str("toy_rand_16");
    cmd->add_option("--task", f.task, "Training task: discrete, continuous or joint")
        ->default_str("discrete");
    cmd->add_option("--batch-size", f.batch_size, "Mini-batch size")->default_str("26");
    cmd->add_option("--lr0", f.lr0, "Initial learning rate")->default_str("0.005");
    cmd->add_option("--momentum", f.momentum, "SGD momentum")->default_str("0.9");
    cmd->add_option("--decay-factor", f.decay_factor, "LR decay multiplier")
        ->default_str("0.9");
    cmd->add_option("--decay-every", f.decay_every, "Epochs between LR decays")
        ->default_str("7");
    cmd->add_option("--epochs", f.epochs, "Training epochs")->default_str("15");
    cmd->add_option("--seed", f.seed, "Run seed")->default_str("0");
    cmd->add_option("--c", f.c, "Class-weight parameter (w = 1/ln(c+p))")
        ->default_str("1.2");
    cmd->add_option("--theta", f.theta, "Continuous-loss margin, normalized units")
        ->default_str("0.1");
    cmd->add_option("--lambda-disc", f.lambda_disc, "Joint-task discrete weight")
        ->default_str("1");
    cmd->add_option("--lambda-cont", f.lambda_cont, "Joint-task continuous weight")
        ->default_str("1");
    cmd->add_option("--hidden-dim", f.hidden_dim, "Fusion hidden width")
        ->default_str("256");
    cmd->add_option("--dropout-rate", f.dropout_rate, "Fusion dropout rate")
        ->default_str("0.5");
    cmd->add_option("--branch-checkpoint", f.branch_checkpoints,
                    "Register a backbone export: name=path (repeatable)");
}

struct RowScores {
    std::array<double, kNumCategories> disc{};
    std::array<double, 3> vad_raw{};
};

RowScores score_row(const Checkpoint& ckpt, const FeaturePipeline& pipeline,
                    const AnnotationTable& table, int row, const ImageStore& store,
                    const FaceCache* faces) {
    const auto x = pipeline.features_for_row(table, row, store, faces);
    const Prediction pred = fusion_forward(ckpt.params, x, FusionMode::infer, 0);
    RowScores out;
    out.disc = pred.disc_scores;
    for (int d = 0; d < 3; ++d) out.vad_raw[d] = pred.cont_values[d] * 10.0;
    return out;
}

int run_fixture(int n, uint64_t seed, const std::string& out) {
    const FixtureResult r = generate_fixture(n, seed, out);
    const auto counts = r.table.split_counts();
    std::cerr << "fixture: " << r.table.rows.size() << " annotations under " << out << " (";
    bool first = true;
    for (const auto& [split, count] : counts) {
        if (!first) std::cerr << ", ";
        std::cerr << to_string(split) << ": " << count;
        first = false;
    }
    std::cerr << ")\n";
    return 0;
}

int run_prepare_faces(const std::string& annotations, const std::string& data_root,
                      const std::string& out, const std::string& detector_name) {
    const AnnotationTable table = load_table(annotations);
    const ImageStore store(data_root);
    const StubDetector detector = StubDetector::from_name(detector_name);
    const auto entries = build_face_cache(table, store, detector, out);
    int fallbacks = 0;
    for (const auto& e : entries) fallbacks += e.fallback_used ? 1 : 0;
    std::cerr << "prepare-faces: wrote " << entries.size() << " faces to " << out << " ("
              << fallbacks << " via fallback)\n";
    return 0;
}

int run_train(const CLI::App* cmd, const TrainFlags& f) {
    const TrainConfig config = resolve_config(cmd, f);
    BranchRegistry registry;
    register_branch_checkpoints(registry, f.branch_checkpoints);

    const AnnotationTable table = load_table(f.annotations);
    const ImageStore store(f.data_root);
    std::unique_ptr<FaceCache> faces;
    if (!config.branches.face.empty()) {
        if (f.faces_cache.empty())
            throw Error("the face branch is active; pass --faces-cache (see prepare-faces)");
        faces = std::make_unique<FaceCache>(f.faces_cache);
    }

    const TrainResult r = train(table, store, faces.get(), config, registry, f.out);
    for (const auto& e : r.log.epochs) {
        std::cerr << "epoch " << e.epoch << ": lr " << e.lr << ", train loss "
                  << e.train_loss;
        if (e.val_map) std::cerr << ", val mAP " << *e.val_map;
        if (e.val_mae) std::cerr << ", val MAE " << *e.val_mae;
        std::cerr << "\n";
    }
    std::cerr << "train: wrote " << r.best_path.string() << " (best, epoch "
              << r.best.epoch << ") and " << r.last_path.string() << "\n";
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& annotations,
             const std::string& data_root, const std::string& faces_cache,
             const std::string& split_name, const std::string& out,
             const std::vector<std::string>& branch_checkpoints) {
    BranchRegistry registry;
    register_branch_checkpoints(registry, branch_checkpoints);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const AnnotationTable table = load_table(annotations);
    const ImageStore store(data_root);
    std::unique_ptr<FaceCache> faces;
    if (!ckpt.config.branches.face.empty()) {
        if (faces_cache.empty())
            throw Error("checkpoint uses the face branch; pass --faces-cache");
        faces = std::make_unique<FaceCache>(faces_cache);
    }

    const EvalReport report =
        evaluate(ckpt, table, store, faces.get(), parse_split(split_name), registry);
    std::cout << report.to_text_table();
    if (!report.excluded_categories.empty()) {
        std::cerr << "excluded from mAP (no positives in split):";
        for (const auto& name : report.excluded_categories) std::cerr << " " << name;
        std::cerr << "\n";
    }
    for (const auto& c : report.per_category)
        if (c.degenerate_threshold)
            std::cerr << "note: equal-PR gap cannot reach zero for " << c.name
                      << " (threshold kept at the minimizing score)\n";
    if (!out.empty()) {
        fs::create_directories(out);
        std::ofstream json(fs::path(out) / "eval_report.json", std::ios::binary);
        json << report.to_json() << "\n";
        std::ofstream txt(fs::path(out) / "eval_report.txt", std::ios::binary);
        txt << report.to_text_table();
        std::cerr << "eval: wrote " << (fs::path(out) / "eval_report.json").string() << "\n";
    }
    return 0;
}

int run_predict(const std::string& checkpoint, const std::string& image_path,
                const std::string& box_text, const std::string& detector_name,
                const std::string& out,
                const std::vector<std::string>& branch_checkpoints) {
    BranchRegistry registry;
    register_branch_checkpoints(registry, branch_checkpoints);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Image image = load_image(image_path);
    const BoundingBox box = parse_box(box_text);
    const StubDetector detector = StubDetector::from_name(detector_name);

    PredictionRecord record = predict(ckpt, image, box, detector, registry);
    record.image_id = fs::path(image_path).filename().string();
    const std::string json = record.to_json();
    if (out.empty()) {
        std::cout << json << "\n";
    } else {
        std::ofstream file(out, std::ios::binary);
        file << json << "\n";
        std::cerr << "predict: wrote " << out << "\n";
    }
    return 0;
}

int run_report(const std::string& checkpoint, const std::string& annotations,
               const std::string& data_root, const std::string& faces_cache,
               const std::string& split_name, const std::string& out, uint64_t seed,
               int grid_k, const std::vector<std::string>& branch_checkpoints) {
    BranchRegistry registry;
    register_branch_checkpoints(registry, branch_checkpoints);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const AnnotationTable table = load_table(annotations);
    const ImageStore store(data_root);
    const Split split = parse_split(split_name);
    std::unique_ptr<FaceCache> faces;
    if (!ckpt.config.branches.face.empty()) {
        if (faces_cache.empty())
            throw Error("checkpoint uses the face branch; pass --faces-cache");
        faces = std::make_unique<FaceCache>(faces_cache);
    }
    fs::create_directories(out);

    const EvalReport eval_report =
        evaluate(ckpt, table, store, faces.get(), split, registry);
    {
        std::ofstream json(fs::path(out) / "eval_report.json", std::ios::binary);
        json << eval_report.to_json() << "\n";
    }
    report::render_ap_chart(eval_report, fs::path(out) / "ap_per_category.png");

    const FeaturePipeline pipeline(ckpt.config.branches, registry);
    const auto rows = table.row_indices(split);
    if (rows.empty()) throw Error("report: missing split '" + split_name + "'");

    std::vector<std::array<double, 3>> abs_errors;
    std::vector<RowScores> scores(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        scores[i] = score_row(ckpt, pipeline, table, rows[i], store, faces.get());
        const auto truth = table.rows[rows[i]].vad.as_array();
        std::array<double, 3> err{};
        for (int d = 0; d < 3; ++d) err[d] = std::abs(scores[i].vad_raw[d] - truth[d]);
        abs_errors.push_back(err);
    }
    report::render_vad_error_hist(abs_errors, fs::path(out) / "vad_error_hist.png");

    // seeded sample of K rows for the qualitative grid
    std::vector<size_t> sample_order(rows.size());
    for (size_t i = 0; i < sample_order.size(); ++i) sample_order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(sample_order.begin(), sample_order.end(), rng);
    const size_t k = std::min<size_t>(grid_k, rows.size());

    std::vector<report::GridSample> samples;
    for (size_t i = 0; i < k; ++i) {
        const size_t pos = sample_order[i];
        const int row = rows[pos];
        report::GridSample sample;
        sample.row_index = row;
        sample.prediction.image_id = table.rows[row].image_id;
        sample.prediction.row_index = row;
        sample.prediction.disc_scores = scores[pos].disc;
        for (int d = 0; d < 3; ++d)
            sample.prediction.vad_pred[d] = std::clamp(scores[pos].vad_raw[d], 0.0, 10.0);
        if (ckpt.thresholds) {
            std::array<uint8_t, kNumCategories> decisions{};
            for (int c = 0; c < kNumCategories; ++c)
                decisions[c] = scores[pos].disc[c] >= (*ckpt.thresholds)[c] ? 1 : 0;
            sample.prediction.disc_decisions = decisions;
        }
        sample.prediction.disc_truth = table.rows[row].discrete;
        sample.prediction.vad_truth = table.rows[row].vad;
        samples.push_back(std::move(sample));
    }
    report::render_sample_grid(table, store, samples, fs::path(out) / "samples_grid.png");

    std::cerr << "report: wrote ap_per_category.png, vad_error_hist.png, samples_grid.png"
              << " and eval_report.json under " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emofuse: multi-branch discrete + VAD emotion prediction pipeline"};
    app.require_subcommand(1);

    // fixture
    auto* fixture_cmd =
        app.add_subcommand("fixture", "Generate the deterministic synthetic dataset");
    int fx_n = 50;
    uint64_t fx_seed = 0;
    std::string fx_out;
    fixture_cmd->add_option("--n", fx_n, "Number of images")->default_str("50");
    fixture_cmd->add_option("--seed", fx_seed, "Generator seed")->default_str("0");
    fixture_cmd->add_option("--out", fx_out, "Output directory")->required();

    // prepare-faces
    auto* faces_cmd =
        app.add_subcommand("prepare-faces", "Extract and cache 48x48 face images");
    std::string pf_annotations, pf_root, pf_out, pf_detector = "none";
    faces_cmd->add_option("--annotations", pf_annotations, "Annotation CSV")->required();
    faces_cmd->add_option("--data-root", pf_root, "Image root directory")->required();
    faces_cmd->add_option("--out", pf_out, "Face cache directory")->required();
    faces_cmd->add_option("--detector", pf_detector,
                          "Stub detector mode: none, full or center")
        ->default_str("none");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the fusion head");
    TrainFlags tf;
    train_cmd->add_option("--annotations", tf.annotations, "Annotation CSV")->required();
    train_cmd->add_option("--data-root", tf.data_root, "Image root directory")->required();
    train_cmd->add_option("--faces-cache", tf.faces_cache,
                          "Face cache directory (required when the face branch is active)");
    train_cmd->add_option("--out", tf.out, "Output directory for checkpoints and the log")
        ->required();
    add_train_config_flags(train_cmd, tf);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    std::string ev_checkpoint, ev_annotations, ev_root, ev_faces, ev_split = "test", ev_out;
    std::vector<std::string> ev_branch_ckpts;
    eval_cmd->add_option("--checkpoint", ev_checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--annotations", ev_annotations, "Annotation CSV")->required();
    eval_cmd->add_option("--data-root", ev_root, "Image root directory")->required();
    eval_cmd->add_option("--faces-cache", ev_faces, "Face cache directory");
    eval_cmd->add_option("--split", ev_split, "Split to evaluate: train, val or test")
        ->default_str("test");
    eval_cmd->add_option("--out", ev_out, "Directory for eval_report.json / .txt");
    eval_cmd->add_option("--branch-checkpoint", ev_branch_ckpts,
                         "Register a backbone export: name=path (repeatable)");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Predict one person in one image");
    std::string pr_checkpoint, pr_image, pr_box, pr_detector = "none", pr_out;
    std::vector<std::string> pr_branch_ckpts;
    predict_cmd->add_option("--checkpoint", pr_checkpoint, "Checkpoint file")->required();
    predict_cmd->add_option("--image", pr_image, "Image file")->required();
    predict_cmd->add_option("--box", pr_box, "Body box as x1,y1,x2,y2")->required();
    predict_cmd->add_option("--detector", pr_detector,
                            "Stub detector mode: none, full or center")
        ->default_str("none");
    predict_cmd->add_option("--out", pr_out, "Write the JSON record here (default stdout)");
    predict_cmd->add_option("--branch-checkpoint", pr_branch_ckpts,
                            "Register a backbone export: name=path (repeatable)");

    // report
    auto* report_cmd =
        app.add_subcommand("report", "Render evaluation figures for a checkpoint");
    std::string rp_checkpoint, rp_annotations, rp_root, rp_faces, rp_split = "test", rp_out;
    uint64_t rp_seed = 0;
    int rp_grid_k = 9;
    std::vector<std::string> rp_branch_ckpts;
    report_cmd->add_option("--checkpoint", rp_checkpoint, "Checkpoint file")->required();
    report_cmd->add_option("--annotations", rp_annotations, "Annotation CSV")->required();
    report_cmd->add_option("--data-root", rp_root, "Image root directory")->required();
    report_cmd->add_option("--faces-cache", rp_faces, "Face cache directory");
    report_cmd->add_option("--split", rp_split, "Split to report on")->default_str("test");
    report_cmd->add_option("--out", rp_out, "Output directory for figures")->required();
    report_cmd->add_option("--seed", rp_seed, "Sample-grid seed")->default_str("0");
    report_cmd->add_option("--grid-k", rp_grid_k, "Number of sampled images in the grid")
        ->default_str("9");
    report_cmd->add_option("--branch-checkpoint", rp_branch_ckpts,
                           "Register a backbone export: name=path (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fixture_cmd->parsed()) return run_fixture(fx_n, fx_seed, fx_out);
        if (faces_cmd->parsed())
            return run_prepare_faces(pf_annotations, pf_root, pf_out, pf_detector);
        if (train_cmd->parsed()) return run_train(train_cmd, tf);
        if (eval_cmd->parsed())
            return run_eval(ev_checkpoint, ev_annotations, ev_root, ev_faces, ev_split,
                            ev_out, ev_branch_ckpts);
        if (predict_cmd->parsed())
            return run_predict(pr_checkpoint, pr_image, pr_box, pr_detector, pr_out,
                               pr_branch_ckpts);
        if (report_cmd->parsed())
            return run_report(rp_checkpoint, rp_annotations, rp_root, rp_faces, rp_split,
                              rp_out, rp_seed, rp_grid_k, rp_branch_ckpts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
