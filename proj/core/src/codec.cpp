// File decode/encode via OpenCV imgcodecs. Everything else in the pipeline
// operates on emofuse::Image, so OpenCV types never escape this file.

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "emofuse/image.hpp"

namespace emofuse {

namespace {

Image from_mat(const cv::Mat& m) {
    Image img;
    img.width = m.cols;
    img.height = m.rows;
    img.channels = m.channels();
    img.pixels.resize(static_cast<size_t>(m.cols) * m.rows * m.channels());
    if (m.isContinuous()) {
        std::copy(m.data, m.data + img.pixels.size(), img.pixels.begin());
    } else {
        for (int y = 0; y < m.rows; ++y) {
            const uint8_t* row = m.ptr<uint8_t>(y);
            std::copy(row, row + static_cast<size_t>(m.cols) * m.channels(),
                      img.pixels.begin() + static_cast<size_t>(y) * m.cols * m.channels());
        }
    }
    return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error("cannot decode image: " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return from_mat(rgb);
}

Image load_image_gray(const std::filesystem::path& path) {
    cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw Error("cannot decode image: " + path.string());
    return from_mat(gray);
}

void save_png(const Image& img, const std::filesystem::path& path) {
    if (img.empty()) throw Error("save_png: empty image");
    cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1,
              const_cast<uint8_t*>(img.pixels.data()));
    cv::Mat to_write = m;
    if (img.channels == 3) cv::cvtColor(m, to_write, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), to_write))
        throw Error("cannot write image: " + path.string());
}

}  // namespace emofuse
