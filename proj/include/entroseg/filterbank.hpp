#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "entroseg/image.hpp"

namespace entroseg {

// Dense 2-D kernel with odd width and height, anchored at its centre.
class Kernel2D {
public:
    Kernel2D() = default;
    Kernel2D(int width, int height, std::vector<double> values);

    int width() const { return width_; }
    int height() const { return height_; }
    double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    std::span<const double> values() const { return values_; }

    double sum() const;
    double abs_sum() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

enum class FilterFamily { FirstDerivative, SecondDerivative, LaplacianOfGaussian, Gaussian };

std::string_view to_string(FilterFamily f);

struct FilterSpec {
    FilterFamily family = FilterFamily::Gaussian;
    int scale = 0;                      // index into the family's scale list
    double sigma = 0.0;                 // short-axis sigma for derivatives
    std::optional<double> orientation;  // radians, derivatives only
};

struct Filter {
    FilterSpec spec;
    Kernel2D kernel;
};

// One output map of the pooled stack: a derivative (family, scale) pooled
// over its orientations, or a single isotropic filter.
struct FilterGroup {
    FilterFamily family = FilterFamily::Gaussian;
    int scale = 0;
    double sigma = 0.0;
    std::vector<std::size_t> members;  // indices into FilterBank::filters()
};

class FilterBank {
public:
    FilterBank(int support, std::vector<Filter> filters);

    int support() const { return support_; }
    std::size_t size() const { return filters_.size(); }
    const std::vector<Filter>& filters() const { return filters_; }
    const Filter& operator[](std::size_t i) const { return filters_[i]; }

    // Ordered: first-derivative scales, second-derivative scales, then each
    // isotropic filter in bank order. Defines the index j of the pooled maps.
    const std::vector<FilterGroup>& groups() const { return groups_; }

private:
    int support_;
    std::vector<Filter> filters_;
    std::vector<FilterGroup> groups_;
};

inline constexpr int kLmOrientations = 6;
inline constexpr int kDefaultFilterSupport = 49;
inline constexpr int kDefaultDerivativeScales = 3;

// Leung-Malik bank: 6 orientations x 2 derivative orders x deriv_scales
// elongated (3:1) Gaussian derivatives at sigma = sqrt(2)^i, 8 LoG at
// sigma and 3 sigma, 4 Gaussians, over the base scales 1, sqrt2, 2, 2sqrt2.
// Derivative and LoG kernels are zero-mean; every kernel has L1 norm 1.
FilterBank build_lm_filterbank(int support = kDefaultFilterSupport,
                               int deriv_scales = kDefaultDerivativeScales);

// Same-size true convolution with edge replication. Direct evaluation.
GrayImage convolve(const GrayImage& channel, const Kernel2D& kernel);

struct ResponseStack {
    int channel = 0;
    std::vector<FilterGroup> groups;
    std::vector<GrayImage> maps;  // maps[j] belongs to groups[j]
};

// Pools |response| over the orientations of each derivative group; isotropic
// responses pass through unchanged. `responses` is indexed like the bank.
ResponseStack max_over_orientations(const FilterBank& bank, std::span<const GrayImage> responses,
                                    int channel = 0);

// FFT convolution of every filter in a bank against images of one fixed size.
// Kernel spectra are computed once at construction. An instance is not safe
// for concurrent use; create one per worker.
class BankConvolver {
public:
    BankConvolver(const FilterBank& bank, int width, int height);
    ~BankConvolver();
    BankConvolver(const BankConvolver&) = delete;
    BankConvolver& operator=(const BankConvolver&) = delete;

    const FilterBank& bank() const { return bank_; }

    // Response of every filter, indexed like the bank.
    std::vector<GrayImage> responses(const GrayImage& channel);

    // Equivalent to max_over_orientations(bank, responses(channel), c) but
    // never holds more than one unpooled map.
    ResponseStack pooled(const GrayImage& channel, int c = 0);

private:
    struct Impl;

    FilterBank bank_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace entroseg
