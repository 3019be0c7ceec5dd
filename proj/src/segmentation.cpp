#include "entroseg/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <random>

#include "entroseg/error.hpp"

namespace entroseg {

namespace {

void check_features(const Eigen::MatrixXd& features, int classes) {
    if (classes < 1) {
        throw InvalidArgument("segmentation: class count must be >= 1");
    }
    if (features.rows() < classes) {
        throw InvalidArgument("segmentation: more classes than cells");
    }
    if (!features.allFinite()) {
        throw InvalidArgument("segmentation: non-finite feature values");
    }
}

// Uniform double in [0,1) from the top 53 bits; stable across standard libraries.
double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    const double m = row.maxCoeff();
    if (!std::isfinite(m)) {
        return m;
    }
    return m + std::log((row.array() - m).exp().sum());
}

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    int best = 0;
    for (int k = 1; k < row.size(); ++k) {
        if (row(k) > row(best)) {
            best = k;
        }
    }
    return best;
}

}  // namespace

MixtureParams init_params(const Eigen::MatrixXd& features, int classes, std::uint64_t seed) {
    check_features(features, classes);
    const auto n = features.rows();
    const auto dim = features.cols();

    MixtureParams p;
    p.priors = Eigen::VectorXd::Constant(classes, 1.0 / classes);
    p.means.resize(classes, dim);
    const Eigen::RowVectorXd global_mean = features.colwise().mean();
    const Eigen::RowVectorXd global_var =
        ((features.rowwise() - global_mean).array().square().colwise().sum() / static_cast<double>(n))
            .max(kVarianceFloor);
    p.variances = global_var.replicate(classes, 1);

    if (classes == 1) {
        p.means.row(0) = global_mean;
        return p;
    }

    std::mt19937_64 rng(seed);
    Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    Eigen::Index pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
    for (int k = 0; k < classes; ++k) {
        p.means.row(k) = features.row(pick);
        nearest = nearest.cwiseMin((features.rowwise() - features.row(pick)).rowwise().squaredNorm());
        if (k + 1 == classes) {
            break;
        }
        const double total = nearest.sum();
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
            continue;
        }
        const double target = unit_draw(rng) * total;
        double acc = 0.0;
        pick = n - 1;
        for (Eigen::Index s = 0; s < n; ++s) {
            acc += nearest(s);
            if (acc > target && nearest(s) > 0.0) {
                pick = s;
                break;
            }
        }
    }
    return p;
}

Eigen::MatrixXd log_joint(const MixtureParams& params, const Eigen::MatrixXd& features) {
    const int classes = params.classes();
    const auto dim = features.cols();
    Eigen::MatrixXd out(features.rows(), classes);
    constexpr double kLog2Pi = 1.8378770664093453;
    for (int k = 0; k < classes; ++k) {
        const double norm =
            -0.5 * (params.variances.row(k).array().log().sum() + kLog2Pi * static_cast<double>(dim));
        auto col = out.col(k);
        col.setConstant(std::log(params.priors(k)) + norm);
        for (Eigen::Index d = 0; d < dim; ++d) {
            const double mu = params.means(k, d);
            const double half_inv = 0.5 / params.variances(k, d);
            col.array() -= (features.col(d).array() - mu).square() * half_inv;
        }
    }
    return out;
}

double log_likelihood(const MixtureParams& params, const Eigen::MatrixXd& features) {
    const Eigen::MatrixXd lj = log_joint(params, features);
    double total = 0.0;
    for (Eigen::Index s = 0; s < lj.rows(); ++s) {
        total += log_sum_exp(lj.row(s));
    }
    return total;
}

namespace {

void m_step(const Eigen::MatrixXd& features, const Eigen::MatrixXd& gamma, MixtureParams& p) {
    const auto n = static_cast<double>(features.rows());
    const int classes = p.classes();
    for (int k = 0; k < classes; ++k) {
        const double nk = gamma.col(k).sum();
        p.priors(k) = std::max(nk / n, 1e-12);
        if (nk < 1e-10) {
            continue;  // empty class keeps its previous Gaussian
        }
        const auto g = gamma.col(k);
        for (Eigen::Index d = 0; d < features.cols(); ++d) {
            const double mean = g.dot(features.col(d)) / nk;
            const double var = g.dot((features.col(d).array() - mean).square().matrix()) / nk;
            p.means(k, d) = mean;
            p.variances(k, d) = std::max(var, kVarianceFloor);
        }
    }
    p.priors /= p.priors.sum();
}

}  // namespace

EmResult em_fit(const Eigen::MatrixXd& features, const AdjacencyGraph& graph, int classes, double beta,
                std::uint64_t seed, const EmOptions& options) {
    check_features(features, classes);
    if (beta < 0.0) {
        throw InvalidArgument("em_fit: beta must be >= 0");
    }
    if (graph.cell_count != features.rows()) {
        throw InvalidArgument("em_fit: graph and features disagree on cell count");
    }
    const auto n = features.rows();
    const auto neighbors = graph.neighbor_lists();

    EmResult r;
    r.params = init_params(features, classes, seed);
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Constant(n, classes, 1.0 / classes);
    Eigen::MatrixXd next(n, classes);
    double previous = 0.0;

    for (int it = 0; it < options.max_iter; ++it) {
        const Eigen::MatrixXd lj = log_joint(r.params, features);
        double loglik = 0.0;
        Eigen::RowVectorXd a(classes);
        for (Eigen::Index s = 0; s < n; ++s) {
            loglik += log_sum_exp(lj.row(s));
            a = lj.row(s);
            if (beta > 0.0) {
                for (const auto& nb : neighbors[s]) {
                    a += beta * nb.weight * gamma.row(nb.cell);
                }
            }
            const double z = log_sum_exp(a);
            next.row(s) = (a.array() - z).exp();
        }
        gamma.swap(next);

        // Mean-field free energy; equals loglik when beta = 0.
        double objective = 0.0;
        for (Eigen::Index s = 0; s < n; ++s) {
            for (int k = 0; k < classes; ++k) {
                const double g = gamma(s, k);
                if (g > 0.0) {
                    objective += g * (lj(s, k) - std::log(g));
                }
            }
        }
        if (beta > 0.0) {
            for (const auto& e : graph.edges) {
                objective += beta * e.weight * gamma.row(e.a).dot(gamma.row(e.b));
            }
        }
        r.log_likelihood.push_back(loglik);
        r.objective.push_back(objective);
        r.iterations = it + 1;

        if (it > 0 && std::abs(objective - previous) <= options.tol * std::abs(previous)) {
            r.converged = true;
            break;
        }
        previous = objective;
        m_step(features, gamma, r.params);
    }

    r.field.posteriors = gamma;
    r.field.labels.resize(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        r.field.labels[s] = argmax_lowest(gamma.row(s));
    }
    return r;
}

double labeling_objective(const MixtureParams& params, const Eigen::MatrixXd& features,
                          const AdjacencyGraph& graph, double beta, std::span<const int> labels) {
    if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
        throw InvalidArgument("labeling_objective: label count does not match cells");
    }
    const Eigen::MatrixXd lj = log_joint(params, features);
    double total = 0.0;
    for (Eigen::Index s = 0; s < lj.rows(); ++s) {
        total += lj(s, labels[s]);
    }
    const PairwisePotential potts{beta};
    for (const auto& e : graph.edges) {
        total += potts.coupling(e.weight, labels[e.a], labels[e.b]);
    }
    return total;
}

LabelField map_labels(const MixtureParams& params, const Eigen::MatrixXd& features,
                      const AdjacencyGraph& graph, double beta, int max_sweeps,
                      const std::vector<int>* init) {
    if (params.classes() < 1 || params.means.rows() != params.classes() ||
        params.dimension() != features.cols()) {
        throw InvalidArgument("map_labels: parameters are not fitted to these features");
    }
    if (graph.cell_count != features.rows()) {
        throw InvalidArgument("map_labels: graph and features disagree on cell count");
    }
    const auto n = features.rows();
    const int classes = params.classes();
    const Eigen::MatrixXd lj = log_joint(params, features);
    const auto neighbors = graph.neighbor_lists();

    LabelField f;
    if (init != nullptr) {
        if (static_cast<Eigen::Index>(init->size()) != n) {
            throw InvalidArgument("map_labels: initial labels do not cover the cells");
        }
        f.labels = *init;
    } else {
        f.labels.resize(n);
        for (Eigen::Index s = 0; s < n; ++s) {
            f.labels[s] = argmax_lowest(lj.row(s));
        }
    }

    Eigen::RowVectorXd score(classes);
    const auto local = [&](Eigen::Index s) {
        score = lj.row(s);
        for (const auto& nb : neighbors[s]) {
            score(f.labels[nb.cell]) += beta * nb.weight;
        }
    };
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        int changes = 0;
        for (Eigen::Index s = 0; s < n; ++s) {
            local(s);
            const int best = argmax_lowest(score);
            if (best != f.labels[s]) {
                f.labels[s] = best;
                ++changes;
            }
        }
        if (changes == 0) {
            break;
        }
    }

    f.posteriors.resize(n, classes);
    for (Eigen::Index s = 0; s < n; ++s) {
        local(s);
        f.posteriors.row(s) = (score.array() - log_sum_exp(score)).exp();
    }
    return f;
}

SegmentSet merge_segments(std::span<const int> labels, const SuperPixelGrid& grid, int padding,
                          int min_cells, Connectivity connectivity) {
    const int n = grid.cell_count();
    if (static_cast<int>(labels.size()) != n) {
        throw InvalidArgument("merge_segments: labels do not cover the grid");
    }
    if (padding < 0) {
        throw InvalidArgument("merge_segments: padding must be >= 0");
    }
    SegmentSet set;
    set.width = grid.width();
    set.height = grid.height();
    set.padding = padding;

    std::vector<bool> seen(n, false);
    std::vector<std::pair<int, int>> steps = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}};
    if (connectivity == Connectivity::Eight) {
        steps.insert(steps.end(), {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}});
    }
    for (int start = 0; start < n; ++start) {
        if (seen[start]) {
            continue;
        }
        Segment seg;
        seg.label = labels[start];
        std::queue<int> frontier;
        frontier.push(start);
        seen[start] = true;
        while (!frontier.empty()) {
            const int s = frontier.front();
            frontier.pop();
            seg.cells.push_back(s);
            const int r = grid.row_of(s);
            const int c = grid.col_of(s);
            for (const auto& [dr, dc] : steps) {
                const int rr = r + dr;
                const int cc = c + dc;
                if (rr < 0 || cc < 0 || rr >= grid.rows() || cc >= grid.cols()) {
                    continue;
                }
                const int t = grid.cell_id(rr, cc);
                if (!seen[t] && labels[t] == seg.label) {
                    seen[t] = true;
                    frontier.push(t);
                }
            }
        }
        if (static_cast<int>(seg.cells.size()) < min_cells) {
            continue;
        }
        std::sort(seg.cells.begin(), seg.cells.end());
        PixelRect box = grid.cell_rect(seg.cells.front());
        for (int s : seg.cells) {
            const PixelRect r = grid.cell_rect(s);
            box = {std::min(box.x0, r.x0), std::min(box.y0, r.y0), std::max(box.x1, r.x1),
                   std::max(box.y1, r.y1)};
        }
        seg.bbox = {std::max(0, box.x0 - padding), std::max(0, box.y0 - padding),
                    std::min(grid.width(), box.x1 + padding), std::min(grid.height(), box.y1 + padding)};
        set.segments.push_back(std::move(seg));
    }
    return set;
}

KSelection select_k(const Eigen::MatrixXd& features, const AdjacencyGraph& graph,
                    std::span<const int> candidates, std::uint64_t seed, const EmOptions& options) {
    if (candidates.empty()) {
        throw InvalidArgument("select_k: empty candidate range");
    }
    KSelection sel;
    double best = std::numeric_limits<double>::infinity();
    const double log_n = std::log(static_cast<double>(features.rows()));
    for (int k : candidates) {
        check_features(features, k);
        const EmResult fit = em_fit(features, graph, k, 0.0, seed, options);
        const double bic = -2.0 * log_likelihood(fit.params, features) + fit.params.parameter_count() * log_n;
        sel.candidates.push_back(k);
        sel.bic.push_back(bic);
        if (bic < best || (bic == best && k < sel.classes)) {
            best = bic;
            sel.classes = k;
        }
    }
    return sel;
}

}  // namespace entroseg
