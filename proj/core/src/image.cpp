#include "emofuse/image.hpp"

#include <algorithm>
#include <cmath>

namespace emofuse {

Image Image::solid(int w, int h, std::array<uint8_t, 3> rgb) {
    Image img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = rgb[0];
        img.pixels[i + 1] = rgb[1];
        img.pixels[i + 2] = rgb[2];
    }
    return img;
}

Image Image::solid_gray(int w, int h, uint8_t v) {
    Image img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.pixels.assign(static_cast<size_t>(w) * h, v);
    return img;
}

Image crop(const Image& img, const BoundingBox& box) {
    if (!box.valid()) throw Error("crop: degenerate box");
    if (!box.inside(img.width, img.height)) throw Error("crop: box outside image");
    Image out;
    out.width = box.width();
    out.height = box.height();
    out.channels = img.channels;
    out.pixels.resize(static_cast<size_t>(out.width) * out.height * out.channels);
    const size_t row_bytes = static_cast<size_t>(out.width) * img.channels;
    for (int y = 0; y < out.height; ++y) {
        const uint8_t* src =
            &img.pixels[((static_cast<size_t>(box.y1) + y) * img.width + box.x1) * img.channels];
        std::copy(src, src + row_bytes, &out.pixels[static_cast<size_t>(y) * row_bytes]);
    }
    return out;
}

Image to_luminance(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) throw Error("to_luminance: expected 1 or 3 channels");
    Image out;
    out.width = img.width;
    out.height = img.height;
    out.channels = 1;
    out.pixels.resize(static_cast<size_t>(img.width) * img.height);
    for (size_t i = 0, j = 0; j < out.pixels.size(); i += 3, ++j) {
        const double y = 0.299 * img.pixels[i] + 0.587 * img.pixels[i + 1] +
                         0.114 * img.pixels[i + 2];
        out.pixels[j] = static_cast<uint8_t>(std::lround(y));
    }
    return out;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
    if (img.empty()) throw Error("resize: empty image");
    if (out_w <= 0 || out_h <= 0) throw Error("resize: non-positive output size");
    if (out_w == img.width && out_h == img.height) return img;

    Image out;
    out.width = out_w;
    out.height = out_h;
    out.channels = img.channels;
    out.pixels.resize(static_cast<size_t>(out_w) * out_h * img.channels);

    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1.0 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
                const double bot = (1.0 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
                const double v = (1.0 - wy) * top + wy * bot;
                out.at(ox, oy, c) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

}  // namespace emofuse
