#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "entroseg/image.hpp"
#include "entroseg/superpixel.hpp"

namespace entroseg {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kDefaultBeta = 1.0;
inline constexpr int kDefaultClasses = 4;
inline constexpr int kDefaultPadding = 8;

// Diagonal-covariance Gaussian mixture. Rows of means/variances are classes.
struct MixtureParams {
    Eigen::VectorXd priors;
    Eigen::MatrixXd means;
    Eigen::MatrixXd variances;

    int classes() const { return static_cast<int>(priors.size()); }
    int dimension() const { return static_cast<int>(means.cols()); }
    int parameter_count() const { return (classes() - 1) + 2 * classes() * dimension(); }
};

// Labels are 0-based class indices.
struct LabelField {
    std::vector<int> labels;
    Eigen::MatrixXd posteriors;  // cells x classes, rows sum to 1
};

// Potts reading of the pairwise term: beta * w(s,s') when the labels agree,
// 0 otherwise.
struct PairwisePotential {
    double beta = kDefaultBeta;

    double coupling(double weight, int label_a, int label_b) const {
        return label_a == label_b ? beta * weight : 0.0;
    }
};

// k-means++ seeding of the means from a seeded 64-bit Mersenne Twister;
// variances are the global per-dimension variances, priors uniform.
MixtureParams init_params(const Eigen::MatrixXd& features, int classes, std::uint64_t seed);

// log pi_k + log N(x_s | mu_k, Sigma_k), cells x classes.
Eigen::MatrixXd log_joint(const MixtureParams& params, const Eigen::MatrixXd& features);

// sum_s log sum_k pi_k N(x_s | mu_k, Sigma_k)
double log_likelihood(const MixtureParams& params, const Eigen::MatrixXd& features);

struct EmOptions {
    int max_iter = 100;
    double tol = 1e-6;
};

struct EmResult {
    MixtureParams params;
    LabelField field;  // labels are argmax of the posteriors
    std::vector<double> log_likelihood;  // mixture log-likelihood before each M-step
    std::vector<double> objective;       // mean-field free energy after each E-step
    int iterations = 0;
    bool converged = false;
};

// Mean-field EM: neighbour posteriors from the previous sweep enter the
// E-step as exp(beta * sum_t w(s,t) gamma_t,k). beta = 0 is plain GMM-EM.
EmResult em_fit(const Eigen::MatrixXd& features, const AdjacencyGraph& graph, int classes, double beta,
                std::uint64_t seed, const EmOptions& options = {});

// sum_s [log pi_y + log N(x_s | y)] + beta * sum_edges w 1(y_a = y_b)
double labeling_objective(const MixtureParams& params, const Eigen::MatrixXd& features,
                          const AdjacencyGraph& graph, double beta, std::span<const int> labels);

// Iterated conditional modes on labeling_objective, raster order, lowest class
// index wins ties. Starts from `init` when given, else from the Bayes labels.
LabelField map_labels(const MixtureParams& params, const Eigen::MatrixXd& features,
                      const AdjacencyGraph& graph, double beta, int max_sweeps = 20,
                      const std::vector<int>* init = nullptr);

struct Segment {
    int label = 0;
    std::vector<int> cells;  // ascending cell ids
    PixelRect bbox;          // padded, clipped
};

struct SegmentSet {
    int width = 0;
    int height = 0;
    int padding = 0;
    std::vector<Segment> segments;
};

// Connected components of equal labels over the cell grid, discovered in
// raster order. Components with fewer than min_cells cells are dropped.
SegmentSet merge_segments(std::span<const int> labels, const SuperPixelGrid& grid,
                          int padding = kDefaultPadding, int min_cells = 1,
                          Connectivity connectivity = Connectivity::Four);

struct KSelection {
    int classes = 0;
    std::vector<int> candidates;
    std::vector<double> bic;
};

// Fits every K in `candidates` at beta = 0 and keeps the smallest BIC
// (-2 loglik + #params ln #cells); ties go to the smaller K.
KSelection select_k(const Eigen::MatrixXd& features, const AdjacencyGraph& graph,
                    std::span<const int> candidates, std::uint64_t seed, const EmOptions& options = {});

}  // namespace entroseg
