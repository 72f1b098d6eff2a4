#pragma once
// Annotation CSV ingest/serialize, training-split category frequencies,
// body cropping and the image store.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "emofuse/domain.hpp"
#include "emofuse/image.hpp"

namespace emofuse {

// Exact interchange header, comma-separated. `categories` is a
// semicolon-joined list of canonical names, double-quoted.
inline constexpr const char* kAnnotationCsvHeader =
    "image_id,x1,y1,x2,y2,gender,age,categories,valence,arousal,dominance,split";

struct AnnotationTable {
    std::vector<PersonAnnotation> rows;

    std::map<Split, int> split_counts() const;
    std::vector<int> row_indices(Split s) const;
    bool operator==(const AnnotationTable&) const = default;
};

// Fraction of *train* annotations carrying each category. Computed on the
// train split only; weights derived from these are a training-time artifact.
struct CategoryFrequencies {
    std::array<double, kNumCategories> p{};
};

struct RowIssue {
    int line = 0;  // 1-based line number in the file
    std::string message;
};

struct LoadResult {
    AnnotationTable table;
    std::vector<RowIssue> rejected_rows;     // parsed but violating a hard invariant
    std::vector<RowIssue> unparseable_rows;  // malformed CSV rows that were skipped
    int zero_label_rows = 0;                 // kept, but carry no discrete category
};

// Throws on: missing file, malformed header, or when more than 1% of the
// data rows are unparseable (summary error listing the first offenders).
// Hard-invariant violations reject the row but are reported as data.
LoadResult load_annotations(const std::filesystem::path& csv_path);

void save_annotations(const AnnotationTable& table, const std::filesystem::path& csv_path);

// p_i = (# train rows with bit i) / (# train rows). Throws if no train rows.
CategoryFrequencies compute_frequencies(const AnnotationTable& table);

// Clips `box` to the image, then copies pixels. Throws a degenerate-crop
// error when nothing of the box lies inside the image.
Image crop_body(const Image& image, const BoundingBox& box);

// Read-only lookup of 8-bit RGB rasters addressed by image_id (a relative
// path under root). Safe to call from concurrent workers.
class ImageStore {
public:
    explicit ImageStore(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }
    Image load(const std::string& image_id) const;

private:
    std::filesystem::path root_;
};

}  // namespace emofuse
