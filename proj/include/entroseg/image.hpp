#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace entroseg {

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    int area() const { return width() * height(); }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Single-plane row-major image. Holds luminance in [0,1] when produced by
// to_grayscale, but is also used for signed filter responses, so the range is
// not enforced.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0);
    GrayImage(int width, int height, std::vector<double> data);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }

    double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

// Interleaved row-major image with 1 or 3 channels, values in [0,1].
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, int channels, double fill = 0.0);
    // Throws InvalidArgument if the size does not match or a value is outside [0,1].
    RasterImage(int width, int height, int channels, std::vector<double> data);

    static RasterImage from_gray(const GrayImage& gray);
    // 8-bit interleaved samples, each divided by 255.
    static RasterImage from_bytes(int width, int height, int channels, std::span<const unsigned char> bytes);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    double at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    GrayImage channel(int c) const;
    RasterImage crop(const PixelRect& rect) const;
    std::vector<unsigned char> to_bytes() const;

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

struct Offset {
    int dx = 0;
    int dy = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

// Structuring element for max dilation, anchored at its centre.
class DilationKernel {
public:
    // Offsets within `radius` where the Gaussian exceeds 1% of its peak.
    static DilationKernel gaussian(double sigma = 2.0, int radius = 5);
    // Full (2r+1)x(2r+1) square.
    static DilationKernel square(int radius);
    // Arbitrary footprint; must contain the anchor and be point-symmetric.
    static DilationKernel from_offsets(int radius, std::vector<Offset> offsets, double sigma = 0.0);

    int radius() const { return radius_; }
    double sigma() const { return sigma_; }
    const std::vector<Offset>& support() const { return support_; }
    bool contains(int dx, int dy) const;

private:
    DilationKernel(int radius, double sigma, std::vector<Offset> support);

    int radius_ = 1;
    double sigma_ = 0.0;
    std::vector<Offset> support_;
};

enum class EntropyClass { SceneLike, ProductLike };

std::string_view to_string(EntropyClass c);

inline constexpr double kDefaultEntropyThreshold = 6.5;

// 0.299 R + 0.587 G + 0.114 B for 3 channels; copy for 1 channel.
GrayImage to_grayscale(const RasterImage& img);

// Grayscale morphological dilation, each channel independently, support
// clipped at the image border. Requires kernel radius < min(width, height).
RasterImage dilate(const RasterImage& img, const DilationKernel& kernel);

// Shannon entropy in bits of the 256-bin intensity histogram.
double shannon_entropy(const GrayImage& img);

// e >= threshold is SceneLike, otherwise ProductLike.
EntropyClass classify_entropy(double entropy_bits, double threshold = kDefaultEntropyThreshold);

}  // namespace entroseg
