#pragma once
// Deterministic synthetic dataset for desk-scale runs: tiny images with a
// known, learnable relation between pixel colors and labels.

#include <cstdint>
#include <filesystem>

#include "emofuse/dataset.hpp"

namespace emofuse {

struct FixtureResult {
    AnnotationTable table;
    std::filesystem::path csv_path;
};

// Writes n_images 64x64 PNGs, annotations.csv and FIXTURE_SPEC.md (the
// label rules) under out_dir. Byte-identical output for a fixed seed.
//
// Each image is one solid "person" rectangle on a distinct solid
// background. Discrete labels and VAD are deterministic functions of the
// two colors; splits are assigned 70/15/15 by FNV-1a hash of image_id.
FixtureResult generate_fixture(int n_images, uint64_t seed,
                               const std::filesystem::path& out_dir);

// The split rule used by the generator, exposed for reuse.
Split fixture_split_for_id(const std::string& image_id);

}  // namespace emofuse
