#pragma once
// Frozen feature-extraction branches behind one interface. The registry
// maps backbone names to specs; extractors never change parameters after
// load and are safe to call from concurrent workers.

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "emofuse/image.hpp"
#include "emofuse/tensor.hpp"

namespace emofuse {

enum class BranchKind { body, context, face };

enum class WeightSource { imagenet, places365, fer_pretrained, finetuned_checkpoint, random_seeded };

std::string to_string(BranchKind k);
std::string to_string(WeightSource w);
BranchKind parse_branch_kind(const std::string& s);

struct InputSpec {
    int height = 0;
    int width = 0;
    int channels = 0;                     // 1 or 3
    std::array<double, 3> mean{};         // per channel, on the [0,1] scale
    std::array<double, 3> stddev{1, 1, 1};
    bool operator==(const InputSpec&) const = default;
};

struct BranchSpec {
    std::string name;
    BranchKind kind = BranchKind::body;
    int output_dim = 0;
    bool frozen = true;
    InputSpec input;
    WeightSource weight_source = WeightSource::random_seeded;
    bool operator==(const BranchSpec&) const = default;
};

struct FeatureVector {
    std::vector<double> values;
    std::string branch;
};

// Resize to the spec's input size (bilinear), scale to [0,1], then subtract
// mean and divide by std per channel. Gray input feeding a 3-channel spec is
// replicated; RGB feeding a 1-channel spec goes through Rec.601 luminance.
struct ImageTensor {
    int height = 0, width = 0, channels = 0;
    std::vector<double> values;  // interleaved row-major, like Image
};
ImageTensor preprocess(const BranchSpec& spec, const Image& image);

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;

    const BranchSpec& spec() const { return spec_; }
    virtual FeatureVector extract_one(const Image& image) const = 0;
    std::vector<FeatureVector> extract(std::span<const Image> batch) const;

    // Fingerprint of every parameter; unchanged across a training run when
    // the branch is frozen.
    virtual uint64_t param_digest() const = 0;

protected:
    explicit FeatureExtractor(BranchSpec spec) : spec_(std::move(spec)) {}
    BranchSpec spec_;
};

// Name -> spec resolution plus extractor construction. A default-constructed
// registry ships:
//   resnet18 -> 512, resnet50 -> 2048, swint -> 768   (3x224x224, imagenet)
//   sfer, bfer -> dims probed from a registered checkpoint (1x48x48)
//   toy_rand_<D> -> D  (seeded random projection; needs no files)
// Backbones other than toy_rand_* run only once a checkpoint export has
// been registered for their name.
class BranchRegistry {
public:
    BranchRegistry();

    // Prototype spec for a registered name. Throws for unknown names, and
    // for sfer/bfer until a checkpoint is registered (dims are probed).
    BranchSpec lookup(const std::string& name) const;

    // Associates a parameter-map export (plus its JSON sidecar) with a
    // backbone name; output_dim is probed from the last layer.
    void register_checkpoint(const std::string& name, const std::filesystem::path& file);

    // Builds the extractor with the spec bound to a role. Toy branches adapt
    // their input to the role (face -> 48x48x1, body/context -> 32x32x3);
    // fixed-input backbones reject roles their input cannot serve.
    std::unique_ptr<FeatureExtractor> make(const std::string& name, BranchKind role) const;

    bool has(const std::string& name) const;

private:
    struct Entry {
        BranchSpec proto;
        bool needs_probe = false;                 // sfer/bfer before registration
        std::filesystem::path checkpoint;         // empty until registered
    };
    std::map<std::string, Entry> entries_;
};

// Specializes a prototype spec for the role it will serve. Throws when a
// fixed-input backbone cannot serve the role (face requires 48x48x1 input).
BranchSpec bind_role(const BranchSpec& proto, BranchKind role);

}  // namespace emofuse
