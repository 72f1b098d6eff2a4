#include "emofuse/domain.hpp"

#include <algorithm>
#include <unordered_map>

namespace emofuse {

const std::array<std::string, kNumCategories>& category_names() {
    static const std::array<std::string, kNumCategories> names = {
        "Peace",        "Affection",      "Esteem",        "Anticipation",
        "Engagement",   "Confidence",     "Happiness",     "Pleasure",
        "Excitement",   "Surprise",       "Sympathy",      "Doubt/Confusion",
        "Disconnection","Fatigue",        "Embarrassment", "Yearning",
        "Disapproval",  "Aversion",       "Annoyance",     "Anger",
        "Sensitivity",  "Sadness",        "Disquietment",  "Fear",
        "Pain",         "Suffering"};
    return names;
}

int category_index(const std::string& name) {
    static const std::unordered_map<std::string, int> index = [] {
        std::unordered_map<std::string, int> m;
        const auto& names = category_names();
        for (int i = 0; i < kNumCategories; ++i) m.emplace(names[i], i);
        return m;
    }();
    auto it = index.find(name);
    if (it == index.end()) throw Error("unknown category: '" + name + "'");
    return it->second;
}

std::string to_string(Gender g) { return g == Gender::male ? "male" : "female"; }

std::string to_string(AgeGroup a) {
    switch (a) {
        case AgeGroup::kid: return "kid";
        case AgeGroup::teenager: return "teenager";
        default: return "adult";
    }
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

Gender parse_gender(const std::string& s) {
    if (s == "male") return Gender::male;
    if (s == "female") return Gender::female;
    throw Error("unknown gender: '" + s + "'");
}

AgeGroup parse_age(const std::string& s) {
    if (s == "kid") return AgeGroup::kid;
    if (s == "teenager") return AgeGroup::teenager;
    if (s == "adult") return AgeGroup::adult;
    throw Error("unknown age group: '" + s + "'");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error("unknown split: '" + s + "'");
}

BoundingBox BoundingBox::clipped(int image_w, int image_h) const {
    BoundingBox b;
    b.x1 = std::max(0, x1);
    b.y1 = std::max(0, y1);
    b.x2 = std::min(image_w, x2);
    b.y2 = std::min(image_h, y2);
    return b;
}

std::vector<Violation> validate_annotation(const PersonAnnotation& a) {
    std::vector<Violation> out;
    if (a.image_id.empty()) out.push_back({"empty image_id", true});
    if (!a.body_box.valid()) out.push_back({"degenerate bounding box", true});
    auto check_dim = [&](double v, const char* name) {
        if (!(v >= kVadMin && v <= kVadMax))
            out.push_back({std::string(name) + " out of [0,10]", true});
    };
    check_dim(a.vad.valence, "valence");
    check_dim(a.vad.arousal, "arousal");
    check_dim(a.vad.dominance, "dominance");
    if (!a.discrete.any()) out.push_back({"no discrete category set", false});
    return out;
}

}  // namespace emofuse
