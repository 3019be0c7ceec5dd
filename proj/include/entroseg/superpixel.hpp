#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <vector>

#include "entroseg/filterbank.hpp"
#include "entroseg/image.hpp"

namespace entroseg {

struct CellCentroid {
    double row = 0.0;
    double col = 0.0;
};

// Fixed-size square cells tiling the image in raster order. The last row and
// column of cells may be narrower than cell_size but are never empty.
class SuperPixelGrid {
public:
    SuperPixelGrid() = default;
    SuperPixelGrid(int width, int height, int cell_size);

    int width() const { return width_; }
    int height() const { return height_; }
    int cell_size() const { return cell_size_; }
    int cols() const { return cols_; }
    int rows() const { return rows_; }
    int cell_count() const { return cols_ * rows_; }

    int cell_id(int row, int col) const { return row * cols_ + col; }
    int row_of(int id) const { return id / cols_; }
    int col_of(int id) const { return id % cols_; }
    int cell_at(int x, int y) const { return cell_id(y / cell_size_, x / cell_size_); }

    PixelRect cell_rect(int id) const;
    CellCentroid centroid(int id) const;
    // pixel -> cell id, row-major
    std::vector<int> membership() const;

private:
    int width_ = 0;
    int height_ = 0;
    int cell_size_ = 0;
    int cols_ = 0;
    int rows_ = 0;
};

inline constexpr int kDefaultCellSize = 16;

// Requires 2 <= cell_size <= min(width, height).
SuperPixelGrid partition(int width, int height, int cell_size = kDefaultCellSize);

enum class Stat { Mean = 0, StdDev = 1, Energy = 2 };

// Row s holds x_s. Column layout: colour stats for channel 0..C-1 as
// (mean, std, energy), then texture stats channel-major, group-minor, each
// (mean, std, energy).
struct SuperPixelFeatures {
    int channels = 0;
    int groups = 0;
    Eigen::MatrixXd values;
    std::vector<CellCentroid> centroids;

    int cell_count() const { return static_cast<int>(values.rows()); }
    int dimension() const { return static_cast<int>(values.cols()); }

    static int color_index(int channel, Stat stat) { return channel * 3 + static_cast<int>(stat); }
    int texture_index(int channel, int group, Stat stat) const {
        return channels * 3 + (channel * groups + group) * 3 + static_cast<int>(stat);
    }
};

// Mean, population standard deviation and mean square per cell for every
// channel of `img` and every map of `stacks` (one stack per channel, or none).
SuperPixelFeatures compute_features(const RasterImage& img, std::span<const ResponseStack> stacks,
                                    const SuperPixelGrid& grid);

struct StandardizedFeatures {
    SuperPixelFeatures features;
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;  // 1 where a dimension was constant
};

// Column-wise z-scoring. Constant columns (std < 1e-12) become 0.
StandardizedFeatures standardize(const SuperPixelFeatures& features);

enum class Connectivity { Four = 4, Eight = 8 };
enum class DistanceAverage { NeighborPairs, AllPairs };

struct AdjacencyOptions {
    Connectivity connectivity = Connectivity::Four;
    DistanceAverage distance_average = DistanceAverage::NeighborPairs;
};

struct Edge {
    int a = 0;  // a < b
    int b = 0;
    double feature_distance = 0.0;
    double spatial_distance = 0.0;
    double weight = 0.0;
};

struct Neighbor {
    int cell = 0;
    double weight = 0.0;
};

struct AdjacencyGraph {
    int cell_count = 0;
    std::vector<Edge> edges;
    double sigma_x = 1.0;        // std of neighbour feature distances
    double mean_distance = 1.0;  // mean spatial distance

    std::vector<std::vector<Neighbor>> neighbor_lists() const;
    std::vector<int> degrees() const;
};

// exp(-feature_distance / (2 sigma_x^2)) * (spatial_distance / mean_distance)^-1
double similarity_weight(double feature_distance, double spatial_distance, double sigma_x,
                         double mean_distance);

AdjacencyGraph build_adjacency(const SuperPixelGrid& grid, const SuperPixelFeatures& standardized,
                               const AdjacencyOptions& options = {});

// Debug dumps as tab-separated text.
void write_features_tsv(std::ostream& out, const SuperPixelFeatures& features);
void write_edges_tsv(std::ostream& out, const AdjacencyGraph& graph);

}  // namespace entroseg
