#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "entroseg/error.hpp"
#include "entroseg/superpixel.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace entroseg;

namespace {

SuperPixelFeatures random_features(gen::Rng& rng, int cells, int dims) {
    SuperPixelFeatures f;
    f.channels = 1;
    f.values = Eigen::MatrixXd(cells, dims);
    for (int s = 0; s < cells; ++s) {
        for (int d = 0; d < dims; ++d) {
            f.values(s, d) = rng.normal(d * 3.0, 1.0 + d);
        }
    }
    return f;
}

}  // namespace

TEST(Partition, ExactDivision) {
    const auto g = partition(64, 64, 16);
    EXPECT_EQ(g.cols(), 4);
    EXPECT_EQ(g.rows(), 4);
    EXPECT_EQ(g.cell_count(), 16);
    for (int s = 0; s < g.cell_count(); ++s) {
        EXPECT_EQ(g.cell_rect(s).area(), 256);
    }
}

TEST(Partition, RaggedLastColumn) {
    const auto g = partition(65, 64, 16);
    EXPECT_EQ(g.cols(), 5);
    EXPECT_EQ(g.rows(), 4);
    EXPECT_EQ(g.cell_count(), 20);
    for (int r = 0; r < 4; ++r) {
        EXPECT_EQ(g.cell_rect(g.cell_id(r, 4)).width(), 1);
    }
}

TEST(Partition, MembershipCoversEveryPixelOnce) {
    gen::Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int w = rng.integer(4, 90);
        const int h = rng.integer(4, 90);
        const int cell = rng.integer(2, std::min(w, h));
        const auto g = partition(w, h, cell);
        const auto m = g.membership();
        std::map<int, int> counts;
        for (int id : m) {
            counts[id]++;
        }
        ASSERT_EQ(static_cast<int>(counts.size()), g.cell_count());
        int total = 0;
        for (const auto& [id, n] : counts) {
            EXPECT_EQ(n, g.cell_rect(id).area());
            EXPECT_GT(n, 0);
            total += n;
        }
        EXPECT_EQ(total, w * h);
    }
}

TEST(Partition, RejectsDegenerateSizes) {
    EXPECT_THROW(partition(10, 10, 1), InvalidArgument);
    EXPECT_THROW(partition(10, 8, 9), InvalidArgument);
    EXPECT_THROW(partition(0, 8, 2), InvalidArgument);
}

TEST(Features, ConstantChannel) {
    const RasterImage img(48, 32, 1, 0.5);
    const auto g = partition(48, 32, 16);
    const auto f = compute_features(img, {}, g);
    ASSERT_EQ(f.dimension(), 3);
    for (int s = 0; s < f.cell_count(); ++s) {
        EXPECT_DOUBLE_EQ(f.values(s, 0), 0.5);
        EXPECT_DOUBLE_EQ(f.values(s, 1), 0.0);
        EXPECT_DOUBLE_EQ(f.values(s, 2), 0.25);
    }
}

TEST(Features, TwoPointCell) {
    RasterImage img(4, 4, 1, 0.0);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            img.at(x, y) = (x + y) % 2 == 0 ? 0.0 : 1.0;
        }
    }
    const auto f = compute_features(img, {}, partition(4, 4, 2));
    for (int s = 0; s < 4; ++s) {
        EXPECT_DOUBLE_EQ(f.values(s, 0), 0.5);
        EXPECT_DOUBLE_EQ(f.values(s, 1), 0.5);
        EXPECT_DOUBLE_EQ(f.values(s, 2), 0.5);
    }
}

TEST(Features, MatchesPerCellOracle) {
    gen::Rng rng(17);
    const auto bank = build_lm_filterbank(9, 1);
    for (int trial = 0; trial < 5; ++trial) {
        const int w = rng.integer(20, 50);
        const int h = rng.integer(20, 50);
        const int cell = rng.integer(3, 12);
        const auto img = gen::raster(rng, w, h, 3);
        std::vector<ResponseStack> stacks;
        for (int c = 0; c < 3; ++c) {
            std::vector<GrayImage> responses;
            for (const auto& flt : bank.filters()) {
                responses.push_back(convolve(img.channel(c), flt.kernel));
            }
            stacks.push_back(max_over_orientations(bank, responses, c));
        }
        const auto g = partition(w, h, cell);
        const auto f = compute_features(img, stacks, g);
        const int groups = static_cast<int>(bank.groups().size());
        ASSERT_EQ(f.dimension(), 3 * 3 + 3 * groups * 3);
        ASSERT_EQ(f.groups, groups);
        for (int s = 0; s < g.cell_count(); ++s) {
            const auto r = g.cell_rect(s);
            for (int c = 0; c < 3; ++c) {
                const auto want = oracle::cell_stats(r.x0, r.y0, r.x1, r.y1, [&](int x, int y) { return img.at(x, y, c); });
                EXPECT_NEAR(f.values(s, SuperPixelFeatures::color_index(c, Stat::Mean)), want.mean, 1e-12);
                EXPECT_NEAR(f.values(s, SuperPixelFeatures::color_index(c, Stat::StdDev)), want.stddev, 1e-12);
                EXPECT_NEAR(f.values(s, SuperPixelFeatures::color_index(c, Stat::Energy)), want.energy, 1e-12);
                for (int j = 0; j < groups; ++j) {
                    const auto& map = stacks[c].maps[j];
                    const auto t = oracle::cell_stats(r.x0, r.y0, r.x1, r.y1, [&](int x, int y) { return map.at(x, y); });
                    EXPECT_NEAR(f.values(s, f.texture_index(c, j, Stat::Mean)), t.mean, 1e-12);
                    EXPECT_NEAR(f.values(s, f.texture_index(c, j, Stat::StdDev)), t.stddev, 1e-12);
                    EXPECT_NEAR(f.values(s, f.texture_index(c, j, Stat::Energy)), t.energy, 1e-12);
                }
            }
            EXPECT_DOUBLE_EQ(f.centroids[s].row, (r.y0 + r.y1 - 1) / 2.0);
            EXPECT_DOUBLE_EQ(f.centroids[s].col, (r.x0 + r.x1 - 1) / 2.0);
        }
    }
}

TEST(Features, BitIdenticalAcrossRuns) {
    gen::Rng rng(5);
    const auto img = gen::raster(rng, 40, 40, 3);
    const auto g = partition(40, 40, 8);
    EXPECT_EQ(compute_features(img, {}, g).values, compute_features(img, {}, g).values);
}

TEST(Standardize, ZeroMeanUnitStd) {
    gen::Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = rng.integer(2, 60);
        const auto f = random_features(rng, n, rng.integer(1, 6));
        const auto z = standardize(f);
        for (int d = 0; d < f.dimension(); ++d) {
            const auto col = z.features.values.col(d);
            const double mean = col.mean();
            const double var = (col.array() - mean).square().mean();
            EXPECT_LT(std::abs(mean), 1e-10);
            EXPECT_NEAR(var, 1.0, 1e-10);
            for (int s = 0; s < n; ++s) {
                EXPECT_NEAR(z.features.values(s, d) * z.stddev[d] + z.mean[d], f.values(s, d), 1e-10);
            }
        }
    }
}

TEST(Standardize, Idempotent) {
    gen::Rng rng(9);
    const auto once = standardize(random_features(rng, 30, 4));
    const auto twice = standardize(once.features);
    EXPECT_LT((twice.features.values - once.features.values).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Standardize, ConstantDimensionBecomesZero) {
    gen::Rng rng(10);
    auto f = random_features(rng, 12, 3);
    f.values.col(1).setConstant(4.2);
    const auto z = standardize(f);
    EXPECT_TRUE(z.features.values.col(1).isZero(0.0));
    EXPECT_DOUBLE_EQ(z.stddev[1], 1.0);
}

TEST(Standardize, RejectsSingleCell) {
    gen::Rng rng(11);
    EXPECT_THROW(standardize(random_features(rng, 1, 3)), InvalidArgument);
}

TEST(Similarity, IdenticalFeaturesAtMeanDistanceIsOne) {
    EXPECT_DOUBLE_EQ(similarity_weight(0.0, 16.0, 0.7, 16.0), 1.0);
    EXPECT_DOUBLE_EQ(similarity_weight(0.0, 8.0, 0.7, 16.0), 2.0);
}

TEST(Similarity, TwoCellGraphWithIdenticalFeatures) {
    const RasterImage img(32, 16, 1, 0.3);
    const auto g = partition(32, 16, 16);
    const auto z = standardize(compute_features(img, {}, g));
    const auto graph = build_adjacency(g, z.features);
    ASSERT_EQ(graph.edges.size(), 1u);
    EXPECT_DOUBLE_EQ(graph.edges[0].spatial_distance, 16.0);
    EXPECT_DOUBLE_EQ(graph.mean_distance, 16.0);
    EXPECT_DOUBLE_EQ(graph.edges[0].weight, 1.0);
}

TEST(Similarity, StrictlyDecreasingInBothDistances) {
    gen::Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const double sx = rng.uniform(0.1, 3.0);
        const double md = rng.uniform(1.0, 30.0);
        const double f = rng.uniform(0.0, 10.0);
        const double d = rng.uniform(0.5, 40.0);
        const double w = similarity_weight(f, d, sx, md);
        EXPECT_GT(w, 0.0);
        EXPECT_LT(similarity_weight(f + rng.uniform(0.01, 1.0), d, sx, md), w);
        EXPECT_LT(similarity_weight(f, d + rng.uniform(0.01, 1.0), sx, md), w);
    }
}

TEST(Adjacency, MatchesRecomputationOracle) {
    gen::Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const int cell = rng.integer(3, 8);
        const int w = cell * 4 - rng.integer(0, cell - 1);
        const int h = cell * 4 - rng.integer(0, cell - 1);
        const auto g = partition(w, h, cell);
        ASSERT_EQ(g.cell_count(), 16);
        const auto z = standardize(compute_features(gen::raster(rng, w, h, 3), {}, g));
        const auto graph = build_adjacency(g, z.features);
        const auto want = oracle::weights_4(z.features.values, w, h, cell);
        ASSERT_EQ(graph.edges.size(), want.size());
        std::map<std::pair<int, int>, double> by_pair;
        for (const auto& e : want) {
            by_pair[{e.a, e.b}] = e.weight;
        }
        for (const auto& e : graph.edges) {
            const auto it = by_pair.find({e.a, e.b});
            ASSERT_NE(it, by_pair.end());
            EXPECT_NEAR(e.weight, it->second, 1e-12);
        }
        // Symmetry: each neighbour list entry has its exact mirror.
        const auto lists = graph.neighbor_lists();
        for (int s = 0; s < graph.cell_count; ++s) {
            for (const auto& nb : lists[s]) {
                const auto& back = lists[nb.cell];
                const auto it = std::find_if(back.begin(), back.end(), [&](const Neighbor& b) { return b.cell == s; });
                ASSERT_NE(it, back.end());
                EXPECT_EQ(it->weight, nb.weight);
            }
        }
    }
}

TEST(Adjacency, DegreesAreAtMostFourAndInteriorExactlyFour) {
    gen::Rng rng(14);
    const auto g = partition(70, 50, 10);
    const auto z = standardize(compute_features(gen::raster(rng, 70, 50, 1), {}, g));
    const auto deg = build_adjacency(g, z.features).degrees();
    for (int s = 0; s < g.cell_count(); ++s) {
        const int r = g.row_of(s);
        const int c = g.col_of(s);
        const bool interior = r > 0 && c > 0 && r + 1 < g.rows() && c + 1 < g.cols();
        EXPECT_LE(deg[s], 4);
        if (interior) {
            EXPECT_EQ(deg[s], 4);
        }
    }
}

TEST(Adjacency, EightConnectivityAddsDiagonals) {
    gen::Rng rng(15);
    const auto g = partition(30, 30, 10);
    const auto z = standardize(compute_features(gen::raster(rng, 30, 30, 1), {}, g));
    AdjacencyOptions opts;
    opts.connectivity = Connectivity::Eight;
    const auto graph = build_adjacency(g, z.features, opts);
    EXPECT_EQ(graph.edges.size(), 12u + 8u);
    EXPECT_EQ(graph.degrees()[4], 8);
}

TEST(Adjacency, AllPairsMeanDistance) {
    gen::Rng rng(16);
    const auto g = partition(20, 20, 10);
    const auto z = standardize(compute_features(gen::raster(rng, 20, 20, 1), {}, g));
    AdjacencyOptions opts;
    opts.distance_average = DistanceAverage::AllPairs;
    const auto graph = build_adjacency(g, z.features, opts);
    const double want = (4 * 10.0 + 2 * 10.0 * std::sqrt(2.0)) / 6.0;
    EXPECT_NEAR(graph.mean_distance, want, 1e-12);
}

TEST(Adjacency, RejectsSingleCellOrMismatchedRows) {
    gen::Rng rng(17);
    SuperPixelFeatures one = random_features(rng, 1, 2);
    EXPECT_THROW(build_adjacency(partition(8, 8, 8), one), InvalidArgument);
    EXPECT_THROW(build_adjacency(partition(16, 8, 8), random_features(rng, 3, 2)), InvalidArgument);
}

TEST(Dumps, TabSeparatedWithHeaders) {
    gen::Rng rng(18);
    const auto g = partition(16, 8, 8);
    const auto z = standardize(compute_features(gen::raster(rng, 16, 8, 1), {}, g));
    std::ostringstream fs;
    write_features_tsv(fs, z.features);
    const std::string features_text = fs.str();
    EXPECT_EQ(features_text.substr(0, features_text.find('\n')), "cell\trow\tcol\tx0\tx1\tx2");
    EXPECT_EQ(std::count(features_text.begin(), features_text.end(), '\n'), 3);
    std::ostringstream es;
    write_edges_tsv(es, build_adjacency(g, z.features));
    const std::string edges_text = es.str();
    EXPECT_EQ(edges_text.substr(0, edges_text.find('\n')), "a\tb\tfeature_distance\tspatial_distance\tweight");
    EXPECT_EQ(std::count(edges_text.begin(), edges_text.end(), '\n'), 2);
}
