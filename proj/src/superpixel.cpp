#include "entroseg/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "entroseg/error.hpp"

namespace entroseg {

SuperPixelGrid::SuperPixelGrid(int width, int height, int cell_size)
    : width_(width), height_(height), cell_size_(cell_size) {
    if (cell_size < 2 || width < 1 || height < 1 || cell_size > std::min(width, height)) {
        throw InvalidArgument("partition: need 2 <= cell_size <= min(width, height)");
    }
    cols_ = (width + cell_size - 1) / cell_size;
    rows_ = (height + cell_size - 1) / cell_size;
}

PixelRect SuperPixelGrid::cell_rect(int id) const {
    const int r = row_of(id);
    const int c = col_of(id);
    return {c * cell_size_, r * cell_size_, std::min((c + 1) * cell_size_, width_),
            std::min((r + 1) * cell_size_, height_)};
}

CellCentroid SuperPixelGrid::centroid(int id) const {
    const PixelRect r = cell_rect(id);
    return {(r.y0 + r.y1 - 1) / 2.0, (r.x0 + r.x1 - 1) / 2.0};
}

std::vector<int> SuperPixelGrid::membership() const {
    std::vector<int> m(static_cast<std::size_t>(width_) * height_);
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            m[static_cast<std::size_t>(y) * width_ + x] = cell_at(x, y);
        }
    }
    return m;
}

SuperPixelGrid partition(int width, int height, int cell_size) {
    return SuperPixelGrid(width, height, cell_size);
}

namespace {

// Accumulates (mean, population std, mean square) of one plane per cell into
// three consecutive feature columns.
template <class Sample>
void cell_stats(const SuperPixelGrid& grid, Sample&& sample, Eigen::MatrixXd& out, int column) {
    const int n = grid.cell_count();
    for (int s = 0; s < n; ++s) {
        const PixelRect r = grid.cell_rect(s);
        const double count = static_cast<double>(r.width()) * r.height();
        double sum = 0.0;
        double sq = 0.0;
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                const double v = sample(x, y);
                sum += v;
                sq += v * v;
            }
        }
        const double mean = sum / count;
        double dev = 0.0;
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                const double d = sample(x, y) - mean;
                dev += d * d;
            }
        }
        out(s, column) = mean;
        out(s, column + 1) = std::sqrt(dev / count);
        out(s, column + 2) = sq / count;
    }
}

}  // namespace

SuperPixelFeatures compute_features(const RasterImage& img, std::span<const ResponseStack> stacks,
                                    const SuperPixelGrid& grid) {
    if (grid.width() != img.width() || grid.height() != img.height()) {
        throw InvalidArgument("compute_features: grid does not cover the image");
    }
    if (!stacks.empty() && static_cast<int>(stacks.size()) != img.channels()) {
        throw InvalidArgument("compute_features: need one response stack per channel");
    }
    const int groups = stacks.empty() ? 0 : static_cast<int>(stacks.front().maps.size());
    for (const auto& st : stacks) {
        if (static_cast<int>(st.maps.size()) != groups) {
            throw InvalidArgument("compute_features: stacks differ in group count");
        }
        for (const auto& m : st.maps) {
            if (m.width() != img.width() || m.height() != img.height()) {
                throw InvalidArgument("compute_features: response map size differs from image");
            }
        }
    }

    SuperPixelFeatures f;
    f.channels = img.channels();
    f.groups = groups;
    const int dim = f.channels * 3 + f.channels * groups * 3;
    f.values.resize(grid.cell_count(), dim);
    for (int c = 0; c < f.channels; ++c) {
        cell_stats(grid, [&](int x, int y) { return img.at(x, y, c); }, f.values,
                   SuperPixelFeatures::color_index(c, Stat::Mean));
    }
    for (int c = 0; c < static_cast<int>(stacks.size()); ++c) {
        for (int j = 0; j < groups; ++j) {
            const GrayImage& map = stacks[c].maps[j];
            cell_stats(grid, [&](int x, int y) { return map.at(x, y); }, f.values,
                       f.texture_index(c, j, Stat::Mean));
        }
    }
    f.centroids.reserve(grid.cell_count());
    for (int s = 0; s < grid.cell_count(); ++s) {
        f.centroids.push_back(grid.centroid(s));
    }
    return f;
}

StandardizedFeatures standardize(const SuperPixelFeatures& features) {
    const auto n = features.values.rows();
    if (n < 2) {
        throw InvalidArgument("standardize: need at least 2 cells");
    }
    StandardizedFeatures out{features, Eigen::VectorXd::Zero(features.values.cols()),
                             Eigen::VectorXd::Ones(features.values.cols())};
    for (Eigen::Index d = 0; d < features.values.cols(); ++d) {
        const auto col = features.values.col(d);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n));
        out.mean(d) = mean;
        if (sd < 1e-12) {
            out.features.values.col(d).setZero();
        } else {
            out.stddev(d) = sd;
            out.features.values.col(d) = (col.array() - mean) / sd;
        }
    }
    return out;
}

std::vector<std::vector<Neighbor>> AdjacencyGraph::neighbor_lists() const {
    std::vector<std::vector<Neighbor>> lists(cell_count);
    for (const auto& e : edges) {
        lists[e.a].push_back({e.b, e.weight});
        lists[e.b].push_back({e.a, e.weight});
    }
    return lists;
}

std::vector<int> AdjacencyGraph::degrees() const {
    std::vector<int> deg(cell_count, 0);
    for (const auto& e : edges) {
        ++deg[e.a];
        ++deg[e.b];
    }
    return deg;
}

double similarity_weight(double feature_distance, double spatial_distance, double sigma_x,
                         double mean_distance) {
    return std::exp(-feature_distance / (2.0 * sigma_x * sigma_x)) * (mean_distance / spatial_distance);
}

namespace {

double centroid_distance(const CellCentroid& a, const CellCentroid& b) {
    return std::hypot(a.row - b.row, a.col - b.col);
}

}  // namespace

AdjacencyGraph build_adjacency(const SuperPixelGrid& grid, const SuperPixelFeatures& standardized,
                               const AdjacencyOptions& options) {
    const int n = grid.cell_count();
    if (n < 2) {
        throw InvalidArgument("build_adjacency: need at least 2 cells");
    }
    if (standardized.cell_count() != n) {
        throw InvalidArgument("build_adjacency: feature rows do not match the grid");
    }
    AdjacencyGraph g;
    g.cell_count = n;
    const auto add = [&](int a, int b) {
        Edge e;
        e.a = std::min(a, b);
        e.b = std::max(a, b);
        e.feature_distance = (standardized.values.row(a) - standardized.values.row(b)).norm();
        e.spatial_distance = centroid_distance(grid.centroid(a), grid.centroid(b));
        g.edges.push_back(e);
    };
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) {
            const int s = grid.cell_id(r, c);
            if (c + 1 < grid.cols()) {
                add(s, grid.cell_id(r, c + 1));
            }
            if (r + 1 < grid.rows()) {
                add(s, grid.cell_id(r + 1, c));
                if (options.connectivity == Connectivity::Eight) {
                    if (c + 1 < grid.cols()) {
                        add(s, grid.cell_id(r + 1, c + 1));
                    }
                    if (c > 0) {
                        add(s, grid.cell_id(r + 1, c - 1));
                    }
                }
            }
        }
    }

    double mean_fd = 0.0;
    for (const auto& e : g.edges) {
        mean_fd += e.feature_distance;
    }
    mean_fd /= static_cast<double>(g.edges.size());
    double var_fd = 0.0;
    for (const auto& e : g.edges) {
        var_fd += (e.feature_distance - mean_fd) * (e.feature_distance - mean_fd);
    }
    var_fd /= static_cast<double>(g.edges.size());
    // A single edge, or all distances equal, leaves no spread to normalise by.
    g.sigma_x = var_fd > 1e-24 ? std::sqrt(var_fd) : 1.0;

    if (options.distance_average == DistanceAverage::NeighborPairs) {
        double sum = 0.0;
        for (const auto& e : g.edges) {
            sum += e.spatial_distance;
        }
        g.mean_distance = sum / static_cast<double>(g.edges.size());
    } else {
        double sum = 0.0;
        for (int a = 0; a < n; ++a) {
            for (int b = a + 1; b < n; ++b) {
                sum += centroid_distance(grid.centroid(a), grid.centroid(b));
            }
        }
        g.mean_distance = sum / (0.5 * n * (n - 1.0));
    }
    for (auto& e : g.edges) {
        e.weight = similarity_weight(e.feature_distance, e.spatial_distance, g.sigma_x, g.mean_distance);
    }
    return g;
}

void write_features_tsv(std::ostream& out, const SuperPixelFeatures& features) {
    out << "cell\trow\tcol";
    for (int d = 0; d < features.dimension(); ++d) {
        out << "\tx" << d;
    }
    out << '\n';
    for (int s = 0; s < features.cell_count(); ++s) {
        out << s << '\t' << features.centroids[s].row << '\t' << features.centroids[s].col;
        for (int d = 0; d < features.dimension(); ++d) {
            out << '\t' << features.values(s, d);
        }
        out << '\n';
    }
}

void write_edges_tsv(std::ostream& out, const AdjacencyGraph& graph) {
    out << "a\tb\tfeature_distance\tspatial_distance\tweight\n";
    for (const auto& e : graph.edges) {
        out << e.a << '\t' << e.b << '\t' << e.feature_distance << '\t' << e.spatial_distance << '\t'
            << e.weight << '\n';
    }
}

}  // namespace entroseg
