#include "emofuse/fixture.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include "emofuse/digest.hpp"

namespace emofuse {

namespace {

constexpr int kImageSide = 64;

// Draws from the raw engine output so the byte stream (and therefore every
// generated file) is reproducible independent of distribution internals.
int draw_int(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

std::array<uint8_t, 3> draw_color(std::mt19937_64& rng) {
    return {static_cast<uint8_t>(rng() & 0xFF), static_cast<uint8_t>(rng() & 0xFF),
            static_cast<uint8_t>(rng() & 0xFF)};
}

int max_channel_diff(std::array<uint8_t, 3> a, std::array<uint8_t, 3> b) {
    int d = 0;
    for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(int(a[c]) - int(b[c])));
    return d;
}

double mean3(std::array<uint8_t, 3> c) { return (c[0] + c[1] + c[2]) / 3.0; }

// Signed sum over the six color channels with the category's +-1 pattern
// (bit c of the category index selects the sign of channel c).
double category_score(int category, std::array<uint8_t, 3> person,
                      std::array<uint8_t, 3> background) {
    const double v[6] = {person[0] / 255.0 - 0.5,     person[1] / 255.0 - 0.5,
                         person[2] / 255.0 - 0.5,     background[0] / 255.0 - 0.5,
                         background[1] / 255.0 - 0.5, background[2] / 255.0 - 0.5};
    double s = 0.0;
    for (int c = 0; c < 6; ++c) s += ((category >> c) & 1) ? v[c] : -v[c];
    return s;
}

DiscreteLabel labels_for_colors(std::array<uint8_t, 3> person,
                                std::array<uint8_t, 3> background) {
    DiscreteLabel label;
    int best = 0;
    double best_score = category_score(0, person, background);
    for (int i = 0; i < kNumCategories; ++i) {
        const double s = category_score(i, person, background);
        if (s > 0) label.bits[i] = 1;
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    if (!label.any()) label.bits[best] = 1;  // keep every row usable for training
    return label;
}

VadLabel vad_for_colors(std::array<uint8_t, 3> person, std::array<uint8_t, 3> background) {
    VadLabel vad;
    vad.valence = 10.0 * mean3(person) / 255.0;
    vad.arousal = 10.0 * mean3(background) / 255.0;
    vad.dominance = 10.0 * (mean3(person) + 255.0 - mean3(background)) / 510.0;
    return vad;
}

const char* kFixtureSpecText = R"(# Fixture rules

Images: 64x64 8-bit RGB PNGs named img_<5-digit index>.png. Each image is a
solid background color with one solid "person" rectangle drawn on top. The
annotated body box is exactly the rectangle.

Per-image draws, in order, from one mt19937_64 stream seeded with the
fixture seed (values taken as `engine() % range`):
  1. background color: 3 bytes (each `engine() & 0xFF`)
  2. person color: 3 bytes, redrawn until max per-channel distance from the
     background is >= 32 (keeps the rectangle visible)
  3. rectangle width, height: integers in [24, 40]
  4. rectangle x1: integer in [2, 62 - width]; y1: integer in [2, 62 - height]

Derived annotation fields (person color P, background color B, both scaled
to [0,1] per channel and centered: v = channel - 0.5; the six channels are
ordered P.r, P.g, P.b, B.r, B.g, B.b):
  - discrete category i (0-based canonical order) is set iff
    sum_c s(i,c) * v_c > 0, where s(i,c) = +1 if bit c of i is set else -1.
    If no category comes out positive, the single highest-scoring category
    is set instead.
  - valence   = 10 * mean(P) / 255
  - arousal   = 10 * mean(B) / 255
  - dominance = 10 * (mean(P) + 255 - mean(B)) / 510
  - gender    = male if (P.r + P.g + P.b) is even, else female
  - age       = [kid, teenager, adult][(B.r + B.g + B.b) % 3]

Split assignment: FNV-1a 64-bit hash of image_id (offset basis
14695981039346656037, prime 1099511628211), bucket = hash % 100;
bucket < 70 -> train, bucket < 85 -> val, otherwise test.
)";

}  // namespace

Split fixture_split_for_id(const std::string& image_id) {
    const uint64_t bucket = fnv1a64(image_id) % 100;
    if (bucket < 70) return Split::train;
    if (bucket < 85) return Split::val;
    return Split::test;
}

FixtureResult generate_fixture(int n_images, uint64_t seed,
                               const std::filesystem::path& out_dir) {
    if (n_images < 1) throw Error("generate_fixture: n_images must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw Error("generate_fixture: cannot create directory " + out_dir.string());

    std::mt19937_64 rng(seed);
    FixtureResult result;
    for (int i = 0; i < n_images; ++i) {
        const auto background = draw_color(rng);
        auto person = draw_color(rng);
        while (max_channel_diff(person, background) < 32) person = draw_color(rng);
        const int w = draw_int(rng, 24, 40);
        const int h = draw_int(rng, 24, 40);
        const int x1 = draw_int(rng, 2, kImageSide - 2 - w);
        const int y1 = draw_int(rng, 2, kImageSide - 2 - h);

        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);

        PersonAnnotation a;
        a.image_id = name;
        a.body_box = {x1, y1, x1 + w, y1 + h};
        a.gender = ((person[0] + person[1] + person[2]) % 2 == 0) ? Gender::male
                                                                  : Gender::female;
        const int age_bucket = (background[0] + background[1] + background[2]) % 3;
        a.age = age_bucket == 0 ? AgeGroup::kid
                                : (age_bucket == 1 ? AgeGroup::teenager : AgeGroup::adult);
        a.discrete = labels_for_colors(person, background);
        a.vad = vad_for_colors(person, background);
        a.split = fixture_split_for_id(a.image_id);

        Image img = Image::solid(kImageSide, kImageSide, background);
        for (int y = y1; y < y1 + h; ++y)
            for (int x = x1; x < x1 + w; ++x)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = person[c];
        save_png(img, out_dir / name);

        result.table.rows.push_back(std::move(a));
    }

    result.csv_path = out_dir / "annotations.csv";
    save_annotations(result.table, result.csv_path);

    std::ofstream spec(out_dir / "FIXTURE_SPEC.md", std::ios::binary);
    if (!spec) throw Error("generate_fixture: cannot write fixture spec");
    spec << kFixtureSpecText;
    return result;
}

}  // namespace emofuse
