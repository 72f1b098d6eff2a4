#include "emofuse/branches.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <string_view>

#include <nlohmann/json.hpp>

#include "emofuse/params_io.hpp"

namespace emofuse {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

constexpr std::array<double, 3> kImagenetMean = {0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImagenetStd = {0.229, 0.224, 0.225};

InputSpec rgb224_imagenet() { return {224, 224, 3, kImagenetMean, kImagenetStd}; }
InputSpec gray48() { return {48, 48, 1, {0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}; }

// toy extractors center on a representable pixel value (128/255) so a
// solid-128 image maps to the exactly-zero tensor
constexpr double kToyMean = 128.0 / 255.0;
InputSpec toy_rgb32() { return {32, 32, 3, {kToyMean, kToyMean, kToyMean}, {0.5, 0.5, 0.5}}; }
InputSpec toy_gray48() { return {48, 48, 1, {kToyMean, kToyMean, kToyMean}, {0.5, 0.5, 0.5}}; }

// toy_rand_<D>: D parsed from the name, 0 when the name does not match.
int toy_rand_dim(const std::string& name) {
    constexpr std::string_view prefix = "toy_rand_";
    if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return 0;
    int dim = 0;
    const char* begin = name.data() + prefix.size();
    const char* end = name.data() + name.size();
    auto [p, ec] = std::from_chars(begin, end, dim);
    if (ec != std::errc{} || p != end || dim < 1) return 0;
    return dim;
}

Image match_channels(const Image& image, int channels) {
    if (image.channels == channels) return image;
    if (channels == 1) return to_luminance(image);
    Image out;
    out.width = image.width;
    out.height = image.height;
    out.channels = 3;
    out.pixels.resize(static_cast<size_t>(image.width) * image.height * 3);
    for (size_t i = 0, j = 0; i < image.pixels.size(); ++i, j += 3)
        out.pixels[j] = out.pixels[j + 1] = out.pixels[j + 2] = image.pixels[i];
    return out;
}

// [0,1) with 53 random bits; independent of distribution internals so the
// frozen projections are reproducible everywhere.
double unit_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class ToyRandomExtractor final : public FeatureExtractor {
public:
    explicit ToyRandomExtractor(BranchSpec spec) : FeatureExtractor(std::move(spec)) {
        const size_t input_size = static_cast<size_t>(spec_.input.height) *
                                  spec_.input.width * spec_.input.channels;
        projection_ = Tensor(spec_.output_dim, static_cast<int>(input_size));
        const uint64_t seed = fnv1a64(spec_.name) ^ fnv1a64(to_string(spec_.kind));
        std::mt19937_64 rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(input_size));
        for (double& w : projection_.v) w = (2.0 * unit_double(rng) - 1.0) * bound;
    }

    FeatureVector extract_one(const Image& image) const override {
        const ImageTensor t = preprocess(spec_, image);
        if (static_cast<int>(t.values.size()) != projection_.cols)
            throw Error("branch " + spec_.name + ": input shape mismatch");
        FeatureVector out;
        out.branch = spec_.name;
        out.values.resize(spec_.output_dim);
        ConstMatrixMap a(projection_.v.data(), projection_.rows, projection_.cols);
        ConstVectorMap x(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
        Eigen::Map<Eigen::VectorXd>(out.values.data(), spec_.output_dim) = a * x;
        return out;
    }

    uint64_t param_digest() const override { return projection_.digest(); }

private:
    Tensor projection_;
};

// Runs an exported stack of dense layers ("<i>.weight" / "<i>.bias", relu
// between layers) over the flattened preprocessed input.
class CheckpointExtractor final : public FeatureExtractor {
public:
    CheckpointExtractor(BranchSpec spec, ParamMap params)
        : FeatureExtractor(std::move(spec)), params_(std::move(params)) {
        layers_ = collect_layers(params_);
        if (layers_.empty()) throw Error("branch " + spec_.name + ": empty parameter map");
        for (size_t i = 1; i < layers_.size(); ++i) {
            if (layers_[i].weight->cols != layers_[i - 1].weight->rows)
                throw Error("branch " + spec_.name + ": layer shape chain mismatch");
        }
    }

    static int probe_output_dim(const ParamMap& params) {
        const auto layers = collect_layers(params);
        if (layers.empty()) throw Error("cannot probe output_dim: empty parameter map");
        return layers.back().weight->rows;
    }

    FeatureVector extract_one(const Image& image) const override {
        const ImageTensor t = preprocess(spec_, image);
        if (static_cast<int>(t.values.size()) != layers_.front().weight->cols)
            throw Error("branch " + spec_.name + ": input shape mismatch");
        Eigen::VectorXd x =
            ConstVectorMap(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
        for (size_t i = 0; i < layers_.size(); ++i) {
            const Tensor& w = *layers_[i].weight;
            ConstMatrixMap a(w.v.data(), w.rows, w.cols);
            Eigen::VectorXd y = a * x;
            if (layers_[i].bias)
                y += ConstVectorMap(layers_[i].bias->v.data(), layers_[i].bias->v.size());
            if (i + 1 < layers_.size()) y = y.cwiseMax(0.0);
            x = std::move(y);
        }
        FeatureVector out;
        out.branch = spec_.name;
        out.values.assign(x.data(), x.data() + x.size());
        return out;
    }

    uint64_t param_digest() const override { return params_digest(params_); }

private:
    struct Layer {
        const Tensor* weight = nullptr;
        const Tensor* bias = nullptr;
    };

    static std::vector<Layer> collect_layers(const ParamMap& params) {
        std::map<int, Layer> by_index;
        for (const auto& [key, tensor] : params) {
            const auto dot = key.find('.');
            if (dot == std::string::npos) continue;
            int index = 0;
            const std::string head = key.substr(0, dot);
            auto [p, ec] = std::from_chars(head.data(), head.data() + head.size(), index);
            if (ec != std::errc{} || p != head.data() + head.size()) continue;
            const std::string tail = key.substr(dot + 1);
            if (tail == "weight") by_index[index].weight = &tensor;
            else if (tail == "bias") by_index[index].bias = &tensor;
        }
        std::vector<Layer> layers;
        for (const auto& [index, layer] : by_index) {
            if (!layer.weight) throw Error("layer " + std::to_string(index) + " has no weight");
            if (layer.bias && (layer.bias->rows != layer.weight->rows || layer.bias->cols != 1))
                throw Error("layer " + std::to_string(index) + " bias shape mismatch");
            layers.push_back(layer);
        }
        return layers;
    }

    ParamMap params_;
    std::vector<Layer> layers_;
};

}  // namespace

std::string to_string(BranchKind k) {
    switch (k) {
        case BranchKind::body: return "body";
        case BranchKind::context: return "context";
        default: return "face";
    }
}

std::string to_string(WeightSource w) {
    switch (w) {
        case WeightSource::imagenet: return "imagenet";
        case WeightSource::places365: return "places365";
        case WeightSource::fer_pretrained: return "fer_pretrained";
        case WeightSource::finetuned_checkpoint: return "finetuned_checkpoint";
        default: return "random_seeded";
    }
}

BranchKind parse_branch_kind(const std::string& s) {
    if (s == "body") return BranchKind::body;
    if (s == "context") return BranchKind::context;
    if (s == "face") return BranchKind::face;
    throw Error("unknown branch kind: '" + s + "'");
}

ImageTensor preprocess(const BranchSpec& spec, const Image& image) {
    const Image sized =
        resize_bilinear(match_channels(image, spec.input.channels), spec.input.width,
                        spec.input.height);
    ImageTensor t;
    t.height = sized.height;
    t.width = sized.width;
    t.channels = sized.channels;
    t.values.resize(sized.pixels.size());
    for (size_t i = 0; i < sized.pixels.size(); ++i) {
        const int c = static_cast<int>(i % sized.channels);
        t.values[i] =
            (sized.pixels[i] / 255.0 - spec.input.mean[c]) / spec.input.stddev[c];
    }
    return t;
}

std::vector<FeatureVector> FeatureExtractor::extract(std::span<const Image> batch) const {
    std::vector<FeatureVector> out;
    out.reserve(batch.size());
    for (const Image& img : batch) {
        FeatureVector f = extract_one(img);
        for (double v : f.values)
            if (!std::isfinite(v))
                throw Error("branch " + spec_.name + ": non-finite feature output");
        out.push_back(std::move(f));
    }
    return out;
}

BranchRegistry::BranchRegistry() {
    auto add = [&](const std::string& name, BranchKind kind, int dim, InputSpec input,
                   WeightSource source, bool needs_probe) {
        Entry e;
        e.proto = BranchSpec{name, kind, dim, true, input, source};
        e.needs_probe = needs_probe;
        entries_.emplace(name, std::move(e));
    };
    add("resnet18", BranchKind::body, 512, rgb224_imagenet(), WeightSource::imagenet, false);
    add("resnet50", BranchKind::body, 2048, rgb224_imagenet(), WeightSource::imagenet, false);
    add("swint", BranchKind::body, 768, rgb224_imagenet(), WeightSource::imagenet, false);
    add("sfer", BranchKind::face, 0, gray48(), WeightSource::fer_pretrained, true);
    add("bfer", BranchKind::face, 0, gray48(), WeightSource::fer_pretrained, true);
}

bool BranchRegistry::has(const std::string& name) const {
    return toy_rand_dim(name) > 0 || entries_.count(name) > 0;
}

BranchSpec BranchRegistry::lookup(const std::string& name) const {
    if (const int dim = toy_rand_dim(name); dim > 0)
        return BranchSpec{name, BranchKind::body, dim, true, toy_rgb32(),
                          WeightSource::random_seeded};
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown branch: '" + name + "'");
    if (it->second.needs_probe)
        throw Error("branch '" + name +
                    "' requires a registered checkpoint to probe output_dim");
    return it->second.proto;
}

void BranchRegistry::register_checkpoint(const std::string& name,
                                         const std::filesystem::path& file) {
    const ParamMap params = load_params(file);

    const std::filesystem::path sidecar_path = file.string() + ".json";
    std::ifstream sidecar_in(sidecar_path);
    if (!sidecar_in) throw Error("missing checkpoint sidecar: " + sidecar_path.string());
    nlohmann::json sidecar = nlohmann::json::parse(sidecar_in);
    if (sidecar.at("name").get<std::string>() != name)
        throw Error("checkpoint sidecar names '" + sidecar.at("name").get<std::string>() +
                    "', expected '" + name + "'");
    const std::string digest = digest_hex(params_digest(params));
    if (sidecar.at("content_digest").get<std::string>() != digest)
        throw Error("checkpoint content digest mismatch for " + file.string());

    const int probed = CheckpointExtractor::probe_output_dim(params);
    if (sidecar.contains("output_dim") && sidecar.at("output_dim").get<int>() != probed)
        throw Error("checkpoint sidecar output_dim disagrees with probed dim for " + name);

    auto it = entries_.find(name);
    if (it != entries_.end()) {
        if (it->second.proto.output_dim != 0 && it->second.proto.output_dim != probed)
            throw Error("checkpoint output_dim " + std::to_string(probed) +
                        " disagrees with registry dim for " + name);
        it->second.proto.output_dim = probed;
        it->second.needs_probe = false;
        it->second.checkpoint = file;
        return;
    }

    Entry e;
    const BranchKind kind = parse_branch_kind(sidecar.at("kind").get<std::string>());
    e.proto = BranchSpec{name, kind, probed, true,
                         kind == BranchKind::face ? gray48() : rgb224_imagenet(),
                         WeightSource::finetuned_checkpoint};
    e.checkpoint = file;
    entries_.emplace(name, std::move(e));
}

BranchSpec bind_role(const BranchSpec& proto, BranchKind role) {
    BranchSpec bound = proto;
    bound.kind = role;
    if (proto.weight_source == WeightSource::random_seeded) {
        bound.input = role == BranchKind::face ? toy_gray48() : toy_rgb32();
        return bound;
    }
    if (role == BranchKind::face &&
        !(proto.input.height == 48 && proto.input.width == 48 && proto.input.channels == 1))
        throw Error("branch '" + proto.name + "' cannot serve the face role (needs 48x48x1 input)");
    return bound;
}

std::unique_ptr<FeatureExtractor> BranchRegistry::make(const std::string& name,
                                                       BranchKind role) const {
    const BranchSpec bound = bind_role(lookup(name), role);
    if (bound.weight_source == WeightSource::random_seeded)
        return std::make_unique<ToyRandomExtractor>(bound);
    const auto& entry = entries_.at(name);
    if (entry.checkpoint.empty())
        throw Error("branch '" + name + "' has no weights bundled; register a checkpoint export");
    return std::make_unique<CheckpointExtractor>(bound, load_params(entry.checkpoint));
}

}  // namespace emofuse
