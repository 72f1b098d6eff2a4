#pragma once
// Training loop (SGD with momentum, stepped LR decay), evaluation across
// branch combinations, single-person prediction and checkpointing.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emofuse/branches.hpp"
#include "emofuse/dataset.hpp"
#include "emofuse/face.hpp"
#include "emofuse/fusion.hpp"
#include "emofuse/losses.hpp"
#include "emofuse/metrics.hpp"

namespace emofuse {

enum class Task { discrete, continuous, joint };
std::string to_string(Task t);
Task parse_task(const std::string& s);

// Backbone name per role; an empty name disables the role.
struct BranchSelection {
    std::string body;
    std::string context;
    std::string face;

    bool empty() const { return body.empty() && context.empty() && face.empty(); }
    std::vector<std::pair<BranchKind, std::string>> active() const;
    std::vector<std::string> display_names() const;  // {body|-, context|-, face|-}
    bool operator==(const BranchSelection&) const = default;
};

struct TrainConfig {
    BranchSelection branches;
    Task task = Task::discrete;
    int batch_size = 26;
    double lr0 = 0.005;
    double momentum = 0.9;
    double decay_factor = 0.9;  // multiplied in every decay_every epochs
    int decay_every = 7;
    int epochs = 15;
    uint64_t seed = 0;
    double c = 1.2;      // class-weight parameter
    double theta = 0.1;  // continuous-loss margin, normalized units
    double lambda_disc = 1.0;
    double lambda_cont = 1.0;
    int hidden_dim = 256;
    double dropout_rate = 0.5;

    void validate() const;  // throws on out-of-range fields
    bool operator==(const TrainConfig&) const = default;
};

// lr0 * decay_factor^floor(epoch / decay_every)
double lr_at(int epoch, const TrainConfig& config);

// Classic momentum: v <- momentum * v + grad; param <- param - lr * v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<double> val_map;
    std::optional<double> val_mae;  // raw 0-10 scale
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;

    // CSV: epoch,lr,train_loss,val_map,val_mae,seconds (blank when absent).
    // Dropping the seconds column gives the run's deterministic content.
    std::string to_csv(bool include_seconds = true) const;
    void save_csv(const std::filesystem::path& path) const;
};

// A trained fusion head plus everything needed to run it.
struct Checkpoint {
    TrainConfig config;
    FusionParams params;
    std::vector<BranchSpec> bound_branches;  // role-bound, concatenation order
    int epoch = 0;
    std::optional<double> val_map;
    std::optional<double> val_mae;
    std::optional<std::array<double, kNumCategories>> thresholds;  // fitted on val
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Builds extractors for a selection and assembles per-person concatenated
// features (body crop -> body branch, full image -> context branch, cached
// face -> face branch).
class FeaturePipeline {
public:
    FeaturePipeline(const BranchSelection& selection, const BranchRegistry& registry);

    int input_dim() const;
    const std::vector<BranchSpec>& bound_specs() const { return specs_; }
    uint64_t branch_digest() const;

    std::vector<double> features_for_row(const AnnotationTable& table, int row_index,
                                         const ImageStore& store,
                                         const FaceCache* faces) const;
    std::vector<double> features_for_person(const Image& image, const BoundingBox& body_box,
                                            const FaceDetector& detector) const;

private:
    std::vector<std::pair<BranchKind, std::unique_ptr<FeatureExtractor>>> extractors_;
    std::vector<BranchSpec> specs_;
};

struct TrainResult {
    Checkpoint best;
    Checkpoint last;
    TrainLog log;
    std::filesystem::path best_path;
    std::filesystem::path last_path;
    uint64_t branch_digest_before = 0;
    uint64_t branch_digest_after = 0;  // equal to before: branches are frozen
};

// Full training run; writes checkpoint_best/checkpoint_last (+ sidecars)
// and trainlog.csv under out_dir. `faces` may be null when the face role
// is inactive. VAD targets are normalized to [0,1] inside the loss.
TrainResult train(const AnnotationTable& table, const ImageStore& store,
                  const FaceCache* faces, const TrainConfig& config,
                  const BranchRegistry& registry, const std::filesystem::path& out_dir);

// Thresholds fitted on the val split, metrics computed on `split`.
// Continuous predictions are de-normalized (x10) before MAE.
EvalReport evaluate(const Checkpoint& ckpt, const AnnotationTable& table,
                    const ImageStore& store, const FaceCache* faces, Split split,
                    const BranchRegistry& registry);

// Test seam: the same report computed from externally supplied scores.
// Score vectors align with table.row_indices(<split>) order; vad values are
// on the raw 0-10 scale.
EvalReport evaluate_scored(const AnnotationTable& table, Split eval_split,
                           std::span<const std::array<double, kNumCategories>> eval_disc,
                           std::span<const std::array<double, 3>> eval_vad_raw,
                           Split threshold_split,
                           std::span<const std::array<double, kNumCategories>> threshold_disc,
                           const std::vector<std::string>& branch_names);

struct PredictionRecord {
    std::string image_id;
    int row_index = -1;
    std::array<double, kNumCategories> disc_scores{};
    std::optional<std::array<uint8_t, kNumCategories>> disc_decisions;  // scores >= thresholds
    std::array<double, 3> vad_pred{};  // raw 0-10, clamped
    std::optional<DiscreteLabel> disc_truth;
    std::optional<VadLabel> vad_truth;

    std::string to_json() const;
};

// One person through the full pipeline. Decisions come from the stored
// thresholds; without thresholds, scores are still returned.
PredictionRecord predict(const Checkpoint& ckpt, const Image& image,
                         const BoundingBox& body_box, const FaceDetector& detector,
                         const BranchRegistry& registry);

// --- run configuration files ---

// Flat key-value text document: `key = value` lines, '#' comments.
std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path);

// Applies one key (TrainConfig field name) to the config. Unknown keys throw.
void apply_config_entry(TrainConfig& config, const std::string& key, const std::string& value);

}  // namespace emofuse
