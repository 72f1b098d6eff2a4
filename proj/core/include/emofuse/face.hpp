#pragma once
// Face preparation: detect -> square the box -> crop with padding ->
// 48x48 grayscale -> denoise + sharpen.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "emofuse/dataset.hpp"
#include "emofuse/image.hpp"

namespace emofuse {

inline constexpr int kFaceSize = 48;

// Highest-confidence face box in body-crop coordinates, or nothing.
// Implementations must return a valid box clipped to the input image, and
// must declare whether concurrent detect() calls are safe.
class FaceDetector {
public:
    virtual ~FaceDetector() = default;
    virtual std::optional<BoundingBox> detect(const Image& body) const = 0;
    virtual bool reentrant() const { return false; }
};

// Deterministic detector for tests and fixture pipelines. Modes:
//   none   - never finds a face (exercises the fallback path)
//   full   - the whole input frame
//   center - centered square, half the shorter side
//   fixed  - a configured box, clipped to the input (none if degenerate)
class StubDetector : public FaceDetector {
public:
    static StubDetector none() { return StubDetector(Mode::none, {}); }
    static StubDetector full_frame() { return StubDetector(Mode::full, {}); }
    static StubDetector center() { return StubDetector(Mode::center, {}); }
    static StubDetector fixed(const BoundingBox& box) { return StubDetector(Mode::fixed, box); }
    static StubDetector from_name(const std::string& name);  // "none"|"full"|"center"

    std::optional<BoundingBox> detect(const Image& body) const override;
    bool reentrant() const override { return true; }

private:
    enum class Mode { none, full, center, fixed };
    StubDetector(Mode m, BoundingBox b) : mode_(m), box_(b) {}
    Mode mode_;
    BoundingBox box_;
};

// Pixels missing on each edge after the ideal square was clipped to the
// image. clipped-size + left + right == side (same for the y axis).
struct PadSpec {
    int left = 0, top = 0, right = 0, bottom = 0;
    bool any() const { return left || top || right || bottom; }
    bool operator==(const PadSpec&) const = default;
};

// Expands `box` to side max(width, height) symmetrically about its center
// (odd deficits put the extra pixel on the far edge), then clips to the
// image. Returns the clipped box and the per-edge deficits.
std::pair<BoundingBox, PadSpec> square_box(const BoundingBox& box, int image_w, int image_h);

// Crop the square region, zero-pad the clipped edges back to a full square,
// convert to Rec.601 luminance and resize to 48x48 (bilinear).
Image crop_pad_resize(const Image& image, const BoundingBox& square, const PadSpec& pads);

// 3x3 median (border replication) followed by the 5-center sharpening
// kernel [[0,-1,0],[-1,5,-1],[0,-1,0]] (border replication), clamped to
// [0,255]. Constant images are fixed points.
Image enhance(const Image& face48);

struct FaceImage {
    Image pixels;           // exactly 48x48, single channel
    BoundingBox source_box; // square region in body-crop coordinates
    bool padded = false;    // true iff zero padding was applied
    bool fallback = false;  // true iff the detector found nothing
};

// Full composition; on detector failure falls back to the top-center square
// of the body crop (side = body width, anchored at y=0). Requires the body
// raster to be at least 8x8.
FaceImage extract_face(const Image& body, const FaceDetector& detector);

// --- face cache (the `prepare-faces` surface) ---

struct FaceCacheEntry {
    std::string face_id;  // file name inside the cache directory
    std::string source_image_id;
    int row_index = 0;
    bool fallback_used = false;
};

// Runs extract_face over every annotation (body crop taken from the image
// store) and writes one 48x48 PNG per row plus manifest.csv.
std::vector<FaceCacheEntry> build_face_cache(const AnnotationTable& table,
                                             const ImageStore& store,
                                             const FaceDetector& detector,
                                             const std::filesystem::path& cache_dir);

// Read side of the cache. Lookup is keyed by row index into the table the
// cache was built from.
class FaceCache {
public:
    explicit FaceCache(std::filesystem::path cache_dir);

    Image load(int row_index) const;  // 48x48 grayscale
    const FaceCacheEntry& entry(int row_index) const;
    size_t size() const { return entries_.size(); }

private:
    std::filesystem::path dir_;
    std::map<int, FaceCacheEntry> entries_;
};

}  // namespace emofuse
