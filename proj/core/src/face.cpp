#include "emofuse/face.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace emofuse {

StubDetector StubDetector::from_name(const std::string& name) {
    if (name == "none") return none();
    if (name == "full") return full_frame();
    if (name == "center") return center();
    throw Error("unknown stub detector mode: '" + name + "'");
}

std::optional<BoundingBox> StubDetector::detect(const Image& body) const {
    switch (mode_) {
        case Mode::none:
            return std::nullopt;
        case Mode::full:
            return BoundingBox{0, 0, body.width, body.height};
        case Mode::center: {
            const int side = std::max(1, std::min(body.width, body.height) / 2);
            const int x1 = (body.width - side) / 2;
            const int y1 = (body.height - side) / 2;
            return BoundingBox{x1, y1, x1 + side, y1 + side};
        }
        case Mode::fixed: {
            const BoundingBox clipped = box_.clipped(body.width, body.height);
            if (!clipped.valid()) return std::nullopt;
            return clipped;
        }
    }
    return std::nullopt;
}

std::pair<BoundingBox, PadSpec> square_box(const BoundingBox& box, int image_w, int image_h) {
    if (!box.valid()) throw Error("square_box: degenerate box");
    const int side = std::max(box.width(), box.height());

    // widen the shorter axis about its center; extra pixel goes to the far edge
    const int ex = side - box.width();
    const int ey = side - box.height();
    const int ix1 = box.x1 - ex / 2;
    const int ix2 = box.x2 + (ex - ex / 2);
    const int iy1 = box.y1 - ey / 2;
    const int iy2 = box.y2 + (ey - ey / 2);

    BoundingBox clipped{std::max(0, ix1), std::max(0, iy1), std::min(image_w, ix2),
                        std::min(image_h, iy2)};
    PadSpec pads;
    pads.left = clipped.x1 - ix1;
    pads.top = clipped.y1 - iy1;
    pads.right = ix2 - clipped.x2;
    pads.bottom = iy2 - clipped.y2;
    return {clipped, pads};
}

Image crop_pad_resize(const Image& image, const BoundingBox& square, const PadSpec& pads) {
    if (!square.valid() || !square.inside(image.width, image.height))
        throw Error("crop_pad_resize: square not clipped to image");
    const int side_x = pads.left + square.width() + pads.right;
    const int side_y = pads.top + square.height() + pads.bottom;
    if (side_x != side_y)
        throw Error("crop_pad_resize: inconsistent pad_spec (crop + pads is not square)");

    const Image cropped = crop(image, square);
    Image padded;
    if (pads.any()) {
        padded.width = side_x;
        padded.height = side_y;
        padded.channels = cropped.channels;
        padded.pixels.assign(
            static_cast<size_t>(side_x) * side_y * cropped.channels, 0);
        for (int y = 0; y < cropped.height; ++y)
            for (int x = 0; x < cropped.width; ++x)
                for (int c = 0; c < cropped.channels; ++c)
                    padded.at(x + pads.left, y + pads.top, c) = cropped.at(x, y, c);
    } else {
        padded = cropped;
    }
    return resize_bilinear(to_luminance(padded), kFaceSize, kFaceSize);
}

namespace {

uint8_t median9(std::array<uint8_t, 9>& v) {
    std::nth_element(v.begin(), v.begin() + 4, v.end());
    return v[4];
}

int clamp_coord(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

Image enhance(const Image& face48) {
    if (face48.channels != 1 || face48.width != kFaceSize || face48.height != kFaceSize)
        throw Error("enhance: expected a 48x48 single-channel raster");
    const int w = face48.width, h = face48.height;

    Image median = face48;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::array<uint8_t, 9> window;
            int k = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    window[k++] = face48.at(clamp_coord(x + dx, 0, w - 1),
                                            clamp_coord(y + dy, 0, h - 1));
            median.at(x, y) = median9(window);
        }
    }

    Image out = median;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int center = median.at(x, y);
            const int left = median.at(clamp_coord(x - 1, 0, w - 1), y);
            const int right = median.at(clamp_coord(x + 1, 0, w - 1), y);
            const int up = median.at(x, clamp_coord(y - 1, 0, h - 1));
            const int down = median.at(x, clamp_coord(y + 1, 0, h - 1));
            const int v = 5 * center - left - right - up - down;
            out.at(x, y) = static_cast<uint8_t>(std::clamp(v, 0, 255));
        }
    }
    return out;
}

FaceImage extract_face(const Image& body, const FaceDetector& detector) {
    if (body.width < 8 || body.height < 8)
        throw Error("extract_face: body raster smaller than 8x8");

    FaceImage face;
    BoundingBox square;
    PadSpec pads;
    const auto detected = detector.detect(body);
    if (detected.has_value()) {
        const BoundingBox box = detected->clipped(body.width, body.height);
        if (!box.valid()) throw Error("extract_face: detector returned an invalid box");
        std::tie(square, pads) = square_box(box, body.width, body.height);
    } else {
        // top-center square of the body crop, side = body width, anchored at y=0
        face.fallback = true;
        const int side = body.width;
        square = BoundingBox{0, 0, side, std::min(side, body.height)};
        pads.bottom = side - square.height();
    }
    face.source_box = square;
    face.padded = pads.any();
    face.pixels = enhance(crop_pad_resize(body, square, pads));
    return face;
}

namespace {

std::string sanitize_face_id(const std::string& image_id, int row_index) {
    std::string flat = image_id;
    for (char& c : flat)
        if (c == '/' || c == '\\') c = '_';
    return flat + "__" + std::to_string(row_index) + ".png";
}

}  // namespace

std::vector<FaceCacheEntry> build_face_cache(const AnnotationTable& table,
                                             const ImageStore& store,
                                             const FaceDetector& detector,
                                             const std::filesystem::path& cache_dir) {
    std::error_code ec;
    std::filesystem::create_directories(cache_dir, ec);
    if (ec || !std::filesystem::is_directory(cache_dir))
        throw Error("build_face_cache: cannot create directory " + cache_dir.string());

    std::vector<FaceCacheEntry> entries;
    std::ofstream manifest(cache_dir / "manifest.csv", std::ios::binary);
    if (!manifest) throw Error("build_face_cache: cannot write manifest");
    manifest << "face_id,source_image_id,row_index,fallback_used\n";

    for (int row = 0; row < static_cast<int>(table.rows.size()); ++row) {
        const auto& a = table.rows[row];
        const Image image = store.load(a.image_id);
        const Image body = crop_body(image, a.body_box);
        const FaceImage face = extract_face(body, detector);

        FaceCacheEntry entry;
        entry.face_id = sanitize_face_id(a.image_id, row);
        entry.source_image_id = a.image_id;
        entry.row_index = row;
        entry.fallback_used = face.fallback;
        save_png(face.pixels, cache_dir / entry.face_id);
        manifest << entry.face_id << ',' << entry.source_image_id << ',' << row << ','
                 << (entry.fallback_used ? 1 : 0) << "\n";
        entries.push_back(std::move(entry));
    }
    return entries;
}

FaceCache::FaceCache(std::filesystem::path cache_dir) : dir_(std::move(cache_dir)) {
    std::ifstream manifest(dir_ / "manifest.csv");
    if (!manifest)
        throw Error("face cache: missing manifest in " + dir_.string());
    std::string line;
    std::getline(manifest, line);  // header
    while (std::getline(manifest, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        FaceCacheEntry e;
        std::string field;
        std::getline(ss, e.face_id, ',');
        std::getline(ss, e.source_image_id, ',');
        std::getline(ss, field, ',');
        e.row_index = std::stoi(field);
        std::getline(ss, field, ',');
        e.fallback_used = field == "1";
        entries_.emplace(e.row_index, std::move(e));
    }
}

const FaceCacheEntry& FaceCache::entry(int row_index) const {
    auto it = entries_.find(row_index);
    if (it == entries_.end())
        throw Error("face cache: no entry for row " + std::to_string(row_index));
    return it->second;
}

Image FaceCache::load(int row_index) const {
    const Image img = load_image_gray(dir_ / entry(row_index).face_id);
    if (img.width != kFaceSize || img.height != kFaceSize)
        throw Error("face cache: raster is not 48x48 for row " + std::to_string(row_index));
    return img;
}

}  // namespace emofuse
