#pragma once
// Canonical domain types shared by every module: the 26 emotion categories,
// discrete/continuous labels, boxes and person annotations.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace emofuse {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kNumCategories = 26;
inline constexpr double kVadMin = 0.0;
inline constexpr double kVadMax = 10.0;

// Canonical category order. Index positions are stable across the codebase;
// CSV files, loss weights, scores and reports all use this order.
const std::array<std::string, kNumCategories>& category_names();

// Case-sensitive lookup into the canonical order. Throws Error for any
// string that is not an exact category name.
int category_index(const std::string& name);

enum class Gender { male, female };
enum class AgeGroup { kid, teenager, adult };
enum class Split { train, val, test };

std::string to_string(Gender g);
std::string to_string(AgeGroup a);
std::string to_string(Split s);
Gender parse_gender(const std::string& s);
AgeGroup parse_age(const std::string& s);
Split parse_split(const std::string& s);

// Multi-hot vector over the 26 categories.
struct DiscreteLabel {
    std::array<uint8_t, kNumCategories> bits{};

    bool any() const {
        for (auto b : bits)
            if (b) return true;
        return false;
    }
    int count() const {
        int n = 0;
        for (auto b : bits) n += b ? 1 : 0;
        return n;
    }
    bool operator==(const DiscreteLabel&) const = default;
};

// Valence / arousal / dominance on the raw annotation scale 0-10.
// Normalization to [0,1] happens only inside the training engine.
struct VadLabel {
    double valence = 0.0;
    double arousal = 0.0;
    double dominance = 0.0;

    std::array<double, 3> as_array() const { return {valence, arousal, dominance}; }
    bool operator==(const VadLabel&) const = default;
};

// Integer pixel rectangle, half-open: [x1,x2) x [y1,y2).
struct BoundingBox {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    int width() const { return x2 - x1; }
    int height() const { return y2 - y1; }
    bool valid() const { return x1 < x2 && y1 < y2; }
    bool inside(int image_w, int image_h) const {
        return x1 >= 0 && y1 >= 0 && x2 <= image_w && y2 <= image_h;
    }
    // Intersection with [0,w) x [0,h). May produce a degenerate box.
    BoundingBox clipped(int image_w, int image_h) const;
    bool operator==(const BoundingBox&) const = default;
};

struct PersonAnnotation {
    std::string image_id;  // relative path under the image root
    BoundingBox body_box;
    Gender gender = Gender::male;
    AgeGroup age = AgeGroup::adult;
    DiscreteLabel discrete;
    VadLabel vad;
    Split split = Split::train;

    bool operator==(const PersonAnnotation&) const = default;
};

// A named invariant violation. Hard violations make a row unusable;
// soft ones (currently only "no discrete category set") are warnings.
struct Violation {
    std::string message;
    bool hard = true;
};

// Returns every violated invariant; an empty list means the annotation
// is fully valid. Violations are data, not exceptions.
std::vector<Violation> validate_annotation(const PersonAnnotation& a);

inline bool has_hard_violation(const std::vector<Violation>& vs) {
    for (const auto& v : vs)
        if (v.hard) return true;
    return false;
}

}  // namespace emofuse
