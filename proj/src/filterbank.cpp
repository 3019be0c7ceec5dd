#include "entroseg/filterbank.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

#include "entroseg/error.hpp"

namespace entroseg {

Kernel2D::Kernel2D(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1 || width % 2 == 0 || height % 2 == 0) {
        throw InvalidArgument("Kernel2D: dimensions must be odd and positive");
    }
    if (values_.size() != static_cast<std::size_t>(width) * height) {
        throw InvalidArgument("Kernel2D: value count does not match dimensions");
    }
}

double Kernel2D::sum() const {
    return std::accumulate(values_.begin(), values_.end(), 0.0);
}

double Kernel2D::abs_sum() const {
    return std::accumulate(values_.begin(), values_.end(), 0.0,
                           [](double a, double v) { return a + std::abs(v); });
}

std::string_view to_string(FilterFamily f) {
    switch (f) {
        case FilterFamily::FirstDerivative: return "first_derivative";
        case FilterFamily::SecondDerivative: return "second_derivative";
        case FilterFamily::LaplacianOfGaussian: return "log";
        case FilterFamily::Gaussian: return "gaussian";
    }
    return "unknown";
}

namespace {

bool is_oriented(FilterFamily f) {
    return f == FilterFamily::FirstDerivative || f == FilterFamily::SecondDerivative;
}

}  // namespace

FilterBank::FilterBank(int support, std::vector<Filter> filters)
    : support_(support), filters_(std::move(filters)) {
    for (std::size_t i = 0; i < filters_.size(); ++i) {
        const auto& spec = filters_[i].spec;
        if (is_oriented(spec.family)) {
            auto it = std::find_if(groups_.begin(), groups_.end(), [&](const FilterGroup& g) {
                return g.family == spec.family && g.scale == spec.scale;
            });
            if (it == groups_.end()) {
                groups_.push_back({spec.family, spec.scale, spec.sigma, {i}});
            } else {
                it->members.push_back(i);
            }
        }
    }
    for (std::size_t i = 0; i < filters_.size(); ++i) {
        const auto& spec = filters_[i].spec;
        if (!is_oriented(spec.family)) {
            groups_.push_back({spec.family, spec.scale, spec.sigma, {i}});
        }
    }
}

namespace {

std::vector<double> normalise(std::vector<double> v, bool zero_mean) {
    if (zero_mean) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        for (double& x : v) {
            x -= mean;
        }
    }
    const double l1 = std::accumulate(v.begin(), v.end(), 0.0,
                                      [](double a, double x) { return a + std::abs(x); });
    for (double& x : v) {
        x /= l1;
    }
    return v;
}

// Gaussian derivative of the given order along the short axis, elongated by
// 3x along the orthogonal axis, rotated by `angle`.
Kernel2D oriented_kernel(int support, double sigma, int order, double angle) {
    const int half = support / 2;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double long_sigma = 3.0 * sigma;
    const double var = sigma * sigma;
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(support) * support);
    for (int y = -half; y <= half; ++y) {
        for (int x = -half; x <= half; ++x) {
            const double u = c * x - s * y;
            const double v = s * x + c * y;
            const double gu = std::exp(-u * u / (2.0 * long_sigma * long_sigma));
            double gv = std::exp(-v * v / (2.0 * var));
            gv = order == 1 ? -gv * v / var : gv * (v * v - var) / (var * var);
            values.push_back(gu * gv);
        }
    }
    return Kernel2D(support, support, normalise(std::move(values), true));
}

Kernel2D isotropic_kernel(int support, double sigma, bool laplacian) {
    const int half = support / 2;
    const double var = sigma * sigma;
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(support) * support);
    for (int y = -half; y <= half; ++y) {
        for (int x = -half; x <= half; ++x) {
            const double r2 = static_cast<double>(x * x + y * y);
            const double g = std::exp(-r2 / (2.0 * var));
            values.push_back(laplacian ? g * (r2 - 2.0 * var) / (var * var) : g);
        }
    }
    return Kernel2D(support, support, normalise(std::move(values), laplacian));
}

}  // namespace

FilterBank build_lm_filterbank(int support, int deriv_scales) {
    if (support < 7 || support % 2 == 0) {
        throw InvalidArgument("build_lm_filterbank: support must be odd and >= 7");
    }
    if (deriv_scales < 1 || deriv_scales > 4) {
        throw InvalidArgument("build_lm_filterbank: deriv_scales must be in [1, 4]");
    }
    std::array<double, 4> base{};
    for (int i = 0; i < 4; ++i) {
        base[i] = std::pow(std::numbers::sqrt2, i);
    }

    std::vector<Filter> filters;
    for (int order = 1; order <= 2; ++order) {
        const auto family = order == 1 ? FilterFamily::FirstDerivative : FilterFamily::SecondDerivative;
        for (int s = 0; s < deriv_scales; ++s) {
            for (int o = 0; o < kLmOrientations; ++o) {
                const double angle = std::numbers::pi * o / kLmOrientations;
                filters.push_back({{family, s, base[s], angle}, oriented_kernel(support, base[s], order, angle)});
            }
        }
    }
    for (int s = 0; s < 4; ++s) {
        filters.push_back({{FilterFamily::LaplacianOfGaussian, s, base[s], std::nullopt},
                           isotropic_kernel(support, base[s], true)});
    }
    for (int s = 0; s < 4; ++s) {
        filters.push_back({{FilterFamily::LaplacianOfGaussian, 4 + s, 3.0 * base[s], std::nullopt},
                           isotropic_kernel(support, 3.0 * base[s], true)});
    }
    for (int s = 0; s < 4; ++s) {
        filters.push_back({{FilterFamily::Gaussian, s, base[s], std::nullopt},
                           isotropic_kernel(support, base[s], false)});
    }
    return FilterBank(support, std::move(filters));
}

GrayImage convolve(const GrayImage& channel, const Kernel2D& kernel) {
    const int w = channel.width();
    const int h = channel.height();
    if (kernel.width() > w || kernel.height() > h) {
        throw InvalidArgument("convolve: kernel larger than image");
    }
    const int cx = kernel.width() / 2;
    const int cy = kernel.height() / 2;
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int j = 0; j < kernel.height(); ++j) {
                const int sy = std::clamp(y - (j - cy), 0, h - 1);
                for (int i = 0; i < kernel.width(); ++i) {
                    const int sx = std::clamp(x - (i - cx), 0, w - 1);
                    acc += kernel.at(i, j) * channel.at(sx, sy);
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

ResponseStack max_over_orientations(const FilterBank& bank, std::span<const GrayImage> responses,
                                    int channel) {
    if (responses.size() != bank.size()) {
        throw InvalidArgument("max_over_orientations: responses do not cover every filter");
    }
    ResponseStack stack;
    stack.channel = channel;
    stack.groups = bank.groups();
    for (const auto& group : bank.groups()) {
        const GrayImage& first = responses[group.members.front()];
        if (first.size() == 0) {
            throw InvalidArgument("max_over_orientations: missing response map");
        }
        if (!is_oriented(group.family)) {
            stack.maps.push_back(first);
            continue;
        }
        GrayImage pooled(first.width(), first.height(), 0.0);
        auto dst = pooled.data();
        for (std::size_t m : group.members) {
            const auto src = responses[m].data();
            if (src.size() != dst.size()) {
                throw InvalidArgument("max_over_orientations: response size mismatch");
            }
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] = std::max(dst[i], std::abs(src[i]));
            }
        }
        stack.maps.push_back(std::move(pooled));
    }
    return stack;
}

namespace {

// FFTW's planner is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

int fft_friendly_size(int n) {
    for (int m = n;; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7}) {
            while (r % p == 0) {
                r /= p;
            }
        }
        if (r == 1) {
            return m;
        }
    }
}

struct FftwDeleter {
    void operator()(void* p) const { fftwf_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter>;

template <class T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
    auto* p = static_cast<T*>(fftwf_malloc(sizeof(T) * n));
    if (p == nullptr) {
        throw std::bad_alloc();
    }
    return FftwBuffer<T>(p);
}

// Kernel spectra for one bank at one transform size. Read-only once built.
struct KernelSpectra {
    int nw = 0;
    int nh = 0;
    std::vector<std::vector<double>> kernels;
    std::vector<FftwBuffer<fftwf_complex>> specs;

    bool matches(const FilterBank& bank, int w, int h) const {
        if (w != nw || h != nh || bank.size() != kernels.size()) {
            return false;
        }
        for (std::size_t f = 0; f < kernels.size(); ++f) {
            const auto v = bank.filters()[f].kernel.values();
            if (!std::equal(v.begin(), v.end(), kernels[f].begin(), kernels[f].end())) {
                return false;
            }
        }
        return true;
    }
};

// Recently built spectra, shared by convolvers of the same bank and size.
class SpectraCache {
public:
    std::shared_ptr<const KernelSpectra> find(const FilterBank& bank, int nw, int nh) {
        std::lock_guard lock(mutex_);
        for (const auto& e : entries_) {
            if (e->matches(bank, nw, nh)) {
                return e;
            }
        }
        return nullptr;
    }

    void insert(std::shared_ptr<const KernelSpectra> e) {
        std::lock_guard lock(mutex_);
        entries_.insert(entries_.begin(), std::move(e));
        if (entries_.size() > kCapacity) {
            entries_.pop_back();
        }
    }

private:
    static constexpr std::size_t kCapacity = 2;
    std::mutex mutex_;
    std::vector<std::shared_ptr<const KernelSpectra>> entries_;
};

SpectraCache& spectra_cache() {
    static SpectraCache cache;
    return cache;
}

}  // namespace

struct BankConvolver::Impl {
    int width = 0;
    int height = 0;
    int pad = 0;
    int nw = 0;
    int nh = 0;
    std::size_t real_size = 0;
    std::size_t spec_size = 0;
    FftwBuffer<float> real;
    FftwBuffer<fftwf_complex> image_spec;
    FftwBuffer<fftwf_complex> work;
    std::shared_ptr<const KernelSpectra> spectra;
    fftwf_plan forward = nullptr;
    fftwf_plan inverse = nullptr;

    ~Impl() {
        std::lock_guard lock(planner_mutex());
        if (forward != nullptr) {
            fftwf_destroy_plan(forward);
        }
        if (inverse != nullptr) {
            fftwf_destroy_plan(inverse);
        }
    }

    void load_padded(const GrayImage& img) {
        std::fill(real.get(), real.get() + real_size, 0.0f);
        for (int y = 0; y < height + 2 * pad; ++y) {
            const int sy = std::clamp(y - pad, 0, height - 1);
            float* row = real.get() + static_cast<std::size_t>(y) * nw;
            for (int x = 0; x < width + 2 * pad; ++x) {
                row[x] = static_cast<float>(img.at(std::clamp(x - pad, 0, width - 1), sy));
            }
        }
    }

    // Places the kernel with its anchor at the origin, wrapping negative offsets.
    void load_kernel(const Kernel2D& k) {
        std::fill(real.get(), real.get() + real_size, 0.0f);
        const int cx = k.width() / 2;
        const int cy = k.height() / 2;
        for (int j = 0; j < k.height(); ++j) {
            const int y = ((j - cy) % nh + nh) % nh;
            for (int i = 0; i < k.width(); ++i) {
                const int x = ((i - cx) % nw + nw) % nw;
                real[static_cast<std::size_t>(y) * nw + x] = static_cast<float>(k.at(i, j));
            }
        }
    }

    void copy_spectrum(fftwf_complex* dst) const {
        std::memcpy(dst, work.get(), sizeof(fftwf_complex) * spec_size);
    }

    void build_spectra(const FilterBank& bank) {
        auto s = std::make_shared<KernelSpectra>();
        s->nw = nw;
        s->nh = nh;
        for (const auto& f : bank.filters()) {
            const auto v = f.kernel.values();
            s->kernels.emplace_back(v.begin(), v.end());
            load_kernel(f.kernel);
            fftwf_execute(forward);
            auto spec = fftw_alloc<fftwf_complex>(spec_size);
            copy_spectrum(spec.get());
            s->specs.push_back(std::move(spec));
        }
        spectra = s;
        spectra_cache().insert(std::move(s));
    }

    void set_image(const GrayImage& img) {
        if (img.width() != width || img.height() != height) {
            throw InvalidArgument("BankConvolver: image size differs from the planned size");
        }
        load_padded(img);
        fftwf_execute(forward);
        copy_spectrum(image_spec.get());
    }

    // Filters the current image; sink(i, v) receives each cropped output value
    // with its row-major index.
    template <class Sink>
    void apply(std::size_t filter, Sink&& sink) {
        const fftwf_complex* ks = spectra->specs[filter].get();
        const fftwf_complex* is = image_spec.get();
        fftwf_complex* w = work.get();
        for (std::size_t i = 0; i < spec_size; ++i) {
            const float re = is[i][0] * ks[i][0] - is[i][1] * ks[i][1];
            const float im = is[i][0] * ks[i][1] + is[i][1] * ks[i][0];
            w[i][0] = re;
            w[i][1] = im;
        }
        fftwf_execute(inverse);
        const double scale = 1.0 / (static_cast<double>(nw) * nh);
        for (int y = 0; y < height; ++y) {
            const float* row = real.get() + static_cast<std::size_t>(y + pad) * nw + pad;
            const std::size_t base = static_cast<std::size_t>(y) * width;
            for (int x = 0; x < width; ++x) {
                sink(base + x, row[x] * scale);
            }
        }
    }
};

BankConvolver::BankConvolver(const FilterBank& bank, int width, int height)
    : bank_(bank), impl_(std::make_unique<Impl>()) {
    if (bank.support() > width || bank.support() > height) {
        throw InvalidArgument("BankConvolver: kernel larger than image");
    }
    auto& im = *impl_;
    im.width = width;
    im.height = height;
    im.pad = bank.support() / 2;
    im.nw = fft_friendly_size(width + 2 * im.pad);
    im.nh = fft_friendly_size(height + 2 * im.pad);
    im.real_size = static_cast<std::size_t>(im.nw) * im.nh;
    im.spec_size = static_cast<std::size_t>(im.nh) * (im.nw / 2 + 1);
    im.real = fftw_alloc<float>(im.real_size);
    im.image_spec = fftw_alloc<fftwf_complex>(im.spec_size);
    im.work = fftw_alloc<fftwf_complex>(im.spec_size);
    {
        // FFTW_ESTIMATE keeps plan selection, and therefore results, reproducible.
        std::lock_guard lock(planner_mutex());
        im.forward = fftwf_plan_dft_r2c_2d(im.nh, im.nw, im.real.get(), im.work.get(), FFTW_ESTIMATE);
        im.inverse = fftwf_plan_dft_c2r_2d(im.nh, im.nw, im.work.get(), im.real.get(), FFTW_ESTIMATE);
    }
    im.spectra = spectra_cache().find(bank, im.nw, im.nh);
    if (!im.spectra) {
        im.build_spectra(bank);
    }
}

BankConvolver::~BankConvolver() = default;

std::vector<GrayImage> BankConvolver::responses(const GrayImage& channel) {
    auto& im = *impl_;
    im.set_image(channel);
    std::vector<GrayImage> out;
    out.reserve(bank_.size());
    for (std::size_t f = 0; f < bank_.size(); ++f) {
        GrayImage r(im.width, im.height);
        auto dst = r.data();
        im.apply(f, [&](std::size_t i, double v) { dst[i] = v; });
        out.push_back(std::move(r));
    }
    return out;
}

ResponseStack BankConvolver::pooled(const GrayImage& channel, int c) {
    auto& im = *impl_;
    im.set_image(channel);
    ResponseStack stack;
    stack.channel = c;
    stack.groups = bank_.groups();
    for (const auto& group : bank_.groups()) {
        GrayImage map(im.width, im.height, 0.0);
        auto dst = map.data();
        if (!is_oriented(group.family)) {
            im.apply(group.members.front(), [&](std::size_t i, double v) { dst[i] = v; });
        } else {
            for (std::size_t m : group.members) {
                im.apply(m, [&](std::size_t i, double v) { dst[i] = std::max(dst[i], std::abs(v)); });
            }
        }
        stack.maps.push_back(std::move(map));
    }
    return stack;
}

}  // namespace entroseg
