#include "entroseg/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "entroseg/error.hpp"

namespace entroseg {

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("GrayImage: width and height must be >= 1");
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("GrayImage: width and height must be >= 1");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height) {
        throw InvalidArgument("GrayImage: data length does not match width*height");
    }
}

RasterImage::RasterImage(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("RasterImage: width and height must be >= 1");
    }
    if (channels != 1 && channels != 3) {
        throw InvalidArgument("RasterImage: channels must be 1 or 3");
    }
    if (!(fill >= 0.0 && fill <= 1.0)) {
        throw InvalidArgument("RasterImage: fill value outside [0,1]");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("RasterImage: width and height must be >= 1");
    }
    if (channels != 1 && channels != 3) {
        throw InvalidArgument("RasterImage: channels must be 1 or 3");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw InvalidArgument("RasterImage: data length does not match width*height*channels");
    }
    for (double v : data_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InvalidArgument("RasterImage: pixel value outside [0,1]");
        }
    }
}

RasterImage RasterImage::from_gray(const GrayImage& gray) {
    std::vector<double> data(gray.data().begin(), gray.data().end());
    return RasterImage(gray.width(), gray.height(), 1, std::move(data));
}

RasterImage RasterImage::from_bytes(int width, int height, int channels,
                                    std::span<const unsigned char> bytes) {
    std::vector<double> data(bytes.size());
    std::transform(bytes.begin(), bytes.end(), data.begin(),
                   [](unsigned char b) { return b / 255.0; });
    return RasterImage(width, height, channels, std::move(data));
}

GrayImage RasterImage::channel(int c) const {
    if (c < 0 || c >= channels_) {
        throw InvalidArgument("RasterImage::channel: index out of range");
    }
    GrayImage out(width_, height_);
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = data_[i * channels_ + c];
    }
    return out;
}

RasterImage RasterImage::crop(const PixelRect& rect) const {
    if (rect.empty() || rect.x0 < 0 || rect.y0 < 0 || rect.x1 > width_ || rect.y1 > height_) {
        throw InvalidArgument("RasterImage::crop: rectangle empty or outside image");
    }
    RasterImage out(rect.width(), rect.height(), channels_);
    const std::size_t row = static_cast<std::size_t>(rect.width()) * channels_;
    for (int y = rect.y0; y < rect.y1; ++y) {
        const auto src = data_.begin() + (static_cast<std::size_t>(y) * width_ + rect.x0) * channels_;
        std::copy(src, src + row, out.data_.begin() + static_cast<std::size_t>(y - rect.y0) * row);
    }
    return out;
}

std::vector<unsigned char> RasterImage::to_bytes() const {
    std::vector<unsigned char> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](double v) {
        return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    return out;
}

DilationKernel::DilationKernel(int radius, double sigma, std::vector<Offset> support)
    : radius_(radius), sigma_(sigma), support_(std::move(support)) {}

DilationKernel DilationKernel::gaussian(double sigma, int radius) {
    if (!(sigma > 0.0)) {
        throw InvalidArgument("DilationKernel: sigma must be positive");
    }
    std::vector<Offset> offsets;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            if (g > 0.01) {
                offsets.push_back({dx, dy});
            }
        }
    }
    return from_offsets(radius, std::move(offsets), sigma);
}

DilationKernel DilationKernel::square(int radius) {
    std::vector<Offset> offsets;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            offsets.push_back({dx, dy});
        }
    }
    return from_offsets(radius, std::move(offsets));
}

DilationKernel DilationKernel::from_offsets(int radius, std::vector<Offset> offsets, double sigma) {
    if (radius < 1) {
        throw InvalidArgument("DilationKernel: radius must be >= 1");
    }
    std::sort(offsets.begin(), offsets.end(), [](const Offset& a, const Offset& b) {
        return std::pair(a.dy, a.dx) < std::pair(b.dy, b.dx);
    });
    offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
    const auto has = [&](int dx, int dy) {
        return std::binary_search(offsets.begin(), offsets.end(), Offset{dx, dy},
                                  [](const Offset& a, const Offset& b) {
                                      return std::pair(a.dy, a.dx) < std::pair(b.dy, b.dx);
                                  });
    };
    if (!has(0, 0)) {
        throw InvalidArgument("DilationKernel: support must contain the anchor");
    }
    for (const auto& o : offsets) {
        if (std::abs(o.dx) > radius || std::abs(o.dy) > radius) {
            throw InvalidArgument("DilationKernel: offset outside radius");
        }
        if (!has(-o.dx, -o.dy)) {
            throw InvalidArgument("DilationKernel: support must be symmetric about the anchor");
        }
    }
    return DilationKernel(radius, sigma, std::move(offsets));
}

bool DilationKernel::contains(int dx, int dy) const {
    return std::find(support_.begin(), support_.end(), Offset{dx, dy}) != support_.end();
}

std::string_view to_string(EntropyClass c) {
    return c == EntropyClass::SceneLike ? "SceneLike" : "ProductLike";
}

GrayImage to_grayscale(const RasterImage& img) {
    if (img.channels() == 1) {
        return img.channel(0);
    }
    if (img.channels() != 3) {
        throw InvalidArgument("to_grayscale: unsupported channel count");
    }
    GrayImage out(img.width(), img.height());
    auto dst = out.data();
    const auto src = img.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
        dst[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

namespace {

struct Run {
    int dy;
    int left;
    int right;
};

// Splits the footprint into maximal horizontal runs, one or more per row.
std::vector<Run> horizontal_runs(const DilationKernel& kernel) {
    std::vector<Run> runs;
    const auto& offs = kernel.support();  // sorted by (dy, dx)
    for (std::size_t i = 0; i < offs.size();) {
        std::size_t j = i;
        while (j + 1 < offs.size() && offs[j + 1].dy == offs[i].dy && offs[j + 1].dx == offs[j].dx + 1) {
            ++j;
        }
        runs.push_back({offs[i].dy, offs[i].dx, offs[j].dx});
        i = j + 1;
    }
    return runs;
}

}  // namespace

RasterImage dilate(const RasterImage& img, const DilationKernel& kernel) {
    const int w = img.width();
    const int h = img.height();
    if (kernel.radius() >= std::min(w, h)) {
        throw InvalidArgument("dilate: kernel radius must be smaller than the image");
    }
    constexpr double kNone = -std::numeric_limits<double>::infinity();
    const auto runs = horizontal_runs(kernel);

    std::map<std::pair<int, int>, std::vector<double>> row_max;
    for (const auto& r : runs) {
        row_max.try_emplace({r.left, r.right});
    }

    RasterImage out(w, h, img.channels());
    std::vector<double> plane(static_cast<std::size_t>(w) * h);
    std::vector<double> acc(plane.size());
    for (int c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                plane[static_cast<std::size_t>(y) * w + x] = img.at(x, y, c);
            }
        }
        for (auto& [span, hmax] : row_max) {
            const auto [left, right] = span;
            hmax.assign(plane.size(), kNone);
            for (int y = 0; y < h; ++y) {
                const double* row = plane.data() + static_cast<std::size_t>(y) * w;
                double* dst = hmax.data() + static_cast<std::size_t>(y) * w;
                for (int x = 0; x < w; ++x) {
                    const int lo = std::max(0, x + left);
                    const int hi = std::min(w - 1, x + right);
                    double m = kNone;
                    for (int xx = lo; xx <= hi; ++xx) {
                        m = std::max(m, row[xx]);
                    }
                    dst[x] = m;
                }
            }
        }
        std::fill(acc.begin(), acc.end(), kNone);
        for (const auto& r : runs) {
            const auto& hmax = row_max.at({r.left, r.right});
            const int y_lo = std::max(0, -r.dy);
            const int y_hi = std::min(h, h - r.dy);
            for (int y = y_lo; y < y_hi; ++y) {
                const double* src = hmax.data() + static_cast<std::size_t>(y + r.dy) * w;
                double* dst = acc.data() + static_cast<std::size_t>(y) * w;
                for (int x = 0; x < w; ++x) {
                    dst[x] = std::max(dst[x], src[x]);
                }
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out.at(x, y, c) = acc[static_cast<std::size_t>(y) * w + x];
            }
        }
    }
    return out;
}

double shannon_entropy(const GrayImage& img) {
    if (img.size() == 0) {
        throw InvalidArgument("shannon_entropy: empty image");
    }
    std::array<std::size_t, 256> hist{};
    for (double v : img.data()) {
        // The epsilon keeps k/255 in bin k despite rounding in v*255.
        const double scaled = std::floor(v * 255.0 + 1e-9);
        const int bin = static_cast<int>(std::clamp(scaled, 0.0, 255.0));
        ++hist[bin];
    }
    const double n = static_cast<double>(img.size());
    double e = 0.0;
    for (std::size_t count : hist) {
        if (count > 0) {
            const double p = count / n;
            e -= p * std::log2(p);
        }
    }
    return std::clamp(e, 0.0, 8.0);
}

EntropyClass classify_entropy(double entropy_bits, double threshold) {
    if (!(entropy_bits >= 0.0)) {
        throw InvalidArgument("classify_entropy: entropy must be >= 0");
    }
    return entropy_bits >= threshold ? EntropyClass::SceneLike : EntropyClass::ProductLike;
}

}  // namespace entroseg
