#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "entroseg/error.hpp"
#include "entroseg/io.hpp"

namespace entroseg {

namespace {

RasterImage from_mat(const cv::Mat& decoded, const std::string& source) {
    if (decoded.empty()) {
        throw InputError("cannot decode image: " + source);
    }
    cv::Mat m = decoded;
    switch (m.channels()) {
        case 1:
            break;
        case 2:
            cv::extractChannel(decoded, m, 0);
            break;
        case 3:
            cv::cvtColor(decoded, m, cv::COLOR_BGR2RGB);
            break;
        case 4:
            cv::cvtColor(decoded, m, cv::COLOR_BGRA2RGB);
            break;
        default:
            throw InputError("unsupported channel count in " + source);
    }
    double full_scale = 0.0;
    switch (m.depth()) {
        case CV_8U:
            full_scale = 255.0;
            break;
        case CV_16U:
            full_scale = 65535.0;
            break;
        default:
            throw InputError("unsupported sample depth in " + source);
    }
    cv::Mat f;
    m.convertTo(f, CV_64F);
    const int channels = f.channels();
    std::vector<double> data(static_cast<std::size_t>(f.rows) * f.cols * channels);
    for (int y = 0; y < f.rows; ++y) {
        const double* row = f.ptr<double>(y);
        std::transform(row, row + static_cast<std::size_t>(f.cols) * channels,
                       data.begin() + static_cast<std::ptrdiff_t>(y) * f.cols * channels,
                       [full_scale](double v) { return v / full_scale; });
    }
    return RasterImage(f.cols, f.rows, channels, std::move(data));
}

// 8-bit BGR or gray Mat for OpenCV's encoders.
cv::Mat to_mat(const RasterImage& img) {
    const auto bytes = img.to_bytes();
    const int type = img.channels() == 3 ? CV_8UC3 : CV_8UC1;
    cv::Mat m(img.height(), img.width(), type);
    std::copy(bytes.begin(), bytes.end(), m.data);
    if (img.channels() == 3) {
        cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
    }
    return m;
}

cv::Mat to_rgb8(const RasterImage& img) {
    cv::Mat m = to_mat(img);
    if (img.channels() == 1) {
        cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
    }
    return m;
}

RasterImage from_bgr8(const cv::Mat& m) {
    cv::Mat rgb;
    cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB);
    return RasterImage::from_bytes(rgb.cols, rgb.rows, 3,
                                   std::span<const unsigned char>(rgb.data, rgb.total() * 3));
}

cv::Rect to_rect(double x1, double y1, double x2, double y2) {
    const int l = static_cast<int>(std::floor(x1));
    const int t = static_cast<int>(std::floor(y1));
    const int r = static_cast<int>(std::ceil(x2));
    const int b = static_cast<int>(std::ceil(y2));
    return {l, t, std::max(1, r - l), std::max(1, b - t)};
}

}  // namespace

RasterImage load_image(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw InputError("image not found: " + path.string());
    }
    return from_mat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), path.string());
}

RasterImage decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) {
        throw InputError("cannot decode image: empty buffer");
    }
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    return from_mat(cv::imdecode(buf, cv::IMREAD_UNCHANGED), "<buffer>");
}

void save_image(const std::filesystem::path& path, const RasterImage& img) {
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), to_mat(img));
    } catch (const cv::Exception& e) {
        throw PipelineError("cannot write image " + path.string() + ": " + e.what());
    }
    if (!ok) {
        throw PipelineError("cannot write image " + path.string());
    }
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", to_mat(img), out)) {
        throw PipelineError("PNG encoding failed");
    }
    return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw InputError("base64: length is not a multiple of 4");
    }
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) {
        throw InputError("base64: invalid characters");
    }
    std::size_t size = static_cast<std::size_t>(n);
    // EVP_DecodeBlock keeps the zero bytes that padding stands for.
    for (std::size_t i = text.size(); i > 0 && text[i - 1] == '='; --i) {
        --size;
    }
    out.resize(size);
    return out;
}

RasterImage draw_overlay(const RasterImage& img, std::span<const DetBox> predictions,
                         std::span<const GroundTruthBox> truths) {
    cv::Mat m = to_rgb8(img);
    const cv::Scalar red(0, 0, 255);
    const cv::Scalar blue(255, 0, 0);
    for (const auto& t : truths) {
        cv::rectangle(m, to_rect(t.x1, t.y1, t.x2, t.y2), red, 2);
    }
    for (const auto& b : predictions) {
        cv::rectangle(m, to_rect(b.x1, b.y1, b.x2, b.y2), blue, 2);
    }
    return from_bgr8(m);
}

RasterImage label_map(std::span<const int> labels, const SuperPixelGrid& grid) {
    if (static_cast<int>(labels.size()) != grid.cell_count()) {
        throw InvalidArgument("label_map: label count does not match the grid");
    }
    static constexpr std::array<std::array<double, 3>, 10> kPalette{{
        {0.12, 0.47, 0.71}, {1.00, 0.50, 0.05}, {0.17, 0.63, 0.17}, {0.84, 0.15, 0.16}, {0.58, 0.40, 0.74},
        {0.55, 0.34, 0.29}, {0.89, 0.47, 0.76}, {0.50, 0.50, 0.50}, {0.74, 0.74, 0.13}, {0.09, 0.75, 0.81},
    }};
    RasterImage out(grid.width(), grid.height(), 3);
    for (int y = 0; y < grid.height(); ++y) {
        for (int x = 0; x < grid.width(); ++x) {
            const int label = labels[static_cast<std::size_t>(grid.cell_at(x, y))];
            const auto& colour = kPalette[static_cast<std::size_t>(label) % kPalette.size()];
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = colour[static_cast<std::size_t>(c)];
            }
        }
    }
    return out;
}

}  // namespace entroseg
