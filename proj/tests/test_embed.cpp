#include <gtest/gtest.h>

#include <random>
#include <cstring>
#include <sstream>

#include "oracles.hpp"
#include "tinyblock/embed.hpp"

using namespace tinyblock;

namespace {

struct RandomSparse {
    CsrMatrix<double> csr;
    Eigen::MatrixXd dense;
};

RandomSparse random_sparse(std::uint64_t seed, std::size_t r, std::size_t c, double density) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0), val(-1.0, 1.0);
    std::vector<Triplet<double>> t;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            if (u(g) < density) {
                const double v = val(g);
                t.push_back({static_cast<Index>(i), static_cast<Index>(j), v});
                d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            }
    return {CsrMatrix<double>::from_triplets(r, c, std::move(t)), d};
}

std::vector<std::vector<int>> random_graph(std::uint64_t seed, std::size_t n, double p, bool loops = false) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if ((loops || i != j) && u(g) < p) a[i][j] = 1;
    return a;
}

SparseAdjacency to_adjacency(const std::vector<std::vector<int>>& a) {
    std::vector<std::pair<Index, Index>> e;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if (a[i][j]) e.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
    return SparseAdjacency::from_edges(a.size(), e);
}

/// Max over columns of ||x_c - s_c y_c|| / ||y_c|| with the best sign s_c.
double column_error_up_to_sign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    double worst = 0.0;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
        const double norm = y.col(c).norm();
        const double e = std::min((x.col(c) - y.col(c)).norm(), (x.col(c) + y.col(c)).norm());
        worst = std::max(worst, norm > 0 ? e / norm : e);
    }
    return worst;
}

}  // namespace

class SvdOracle : public ::testing::TestWithParam<SvdBackend> {};

TEST_P(SvdOracle, MatchesDenseSvdOn50x40) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto m = random_sparse(seed, 50, 40, 0.2);
        const DenseMatrix z = project_truncated_svd(m.csr, 10, 42, GetParam());
        const Eigen::MatrixXd ref = oracle::svd_scores(m.dense, 10);
        EXPECT_LE(column_error_up_to_sign(z, ref), 1e-6) << "seed " << seed;
    }
}

TEST_P(SvdOracle, SingularValuesNonincreasingAndColumnNormsMatch) {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const auto m = random_sparse(seed, 60, 45, 0.15);
        SvdOptions opt;
        opt.rank = 8;
        opt.seed = seed;
        opt.backend = GetParam();
        const auto s = truncated_svd(m.csr, opt);
        ASSERT_EQ(s.sigma.size(), 8);
        for (Eigen::Index k = 1; k < s.sigma.size(); ++k) EXPECT_LE(s.sigma(k), s.sigma(k - 1));
        const auto z = s.scores();
        for (Eigen::Index k = 0; k < z.cols(); ++k)
            EXPECT_NEAR(z.col(k).squaredNorm(), s.sigma(k) * s.sigma(k), 1e-9 * (1 + s.sigma(0) * s.sigma(0)));
        const Eigen::MatrixXd vtv = s.v.transpose() * s.v;
        EXPECT_LE((vtv - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
        const auto ref = oracle::singular_values(m.dense);
        for (Eigen::Index k = 0; k < 8; ++k) EXPECT_NEAR(s.sigma(k), ref(k), 1e-8 * ref(0));
    }
}

TEST_P(SvdOracle, RankOneReconstructsExactly) {
    Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(30, 1.0, 3.0);
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(20, -1.0, 2.0);
    std::vector<Triplet<double>> t;
    Eigen::MatrixXd dense = u * v.transpose();
    for (Eigen::Index i = 0; i < dense.rows(); ++i)
        for (Eigen::Index j = 0; j < dense.cols(); ++j)
            if (dense(i, j) != 0.0) t.push_back({static_cast<Index>(i), static_cast<Index>(j), dense(i, j)});
    const auto m = CsrMatrix<double>::from_triplets(30, 20, std::move(t));
    SvdOptions opt;
    opt.rank = 1;
    opt.backend = GetParam();
    const auto s = truncated_svd(m, opt);
    const Eigen::MatrixXd rec = s.u * s.sigma.asDiagonal() * s.v.transpose();
    EXPECT_LE((rec - dense).norm() / dense.norm(), 1e-10);
}

TEST_P(SvdOracle, RankDeficientIsZeroPaddedWithWarning) {
    // Two nonzero columns only: rank 2.
    std::vector<Triplet<double>> t;
    for (Index i = 0; i < 12; ++i) {
        t.push_back({i, 0, 1.0 + i});
        t.push_back({i, 3, (i % 3) - 1.0});
    }
    const auto m = CsrMatrix<double>::from_triplets(12, 6, std::move(t));
    SvdOptions opt;
    opt.rank = 4;
    opt.backend = GetParam();
    const auto s = truncated_svd(m, opt);
    EXPECT_EQ(s.numerical_rank, 2u);
    ASSERT_EQ(s.u.cols(), 4);
    EXPECT_FALSE(s.warnings.empty());
    EXPECT_EQ(s.u.col(2).norm(), 0.0);
    EXPECT_EQ(s.u.col(3).norm(), 0.0);
    EXPECT_EQ(s.sigma(3), 0.0);
}

TEST_P(SvdOracle, DeterministicGivenSeed) {
    const auto m = random_sparse(77, 80, 50, 0.1);
    const auto a = project_truncated_svd(m.csr, 6, 3, GetParam());
    const auto b = project_truncated_svd(m.csr, 6, 3, GetParam());
    EXPECT_TRUE(a == b);
}

TEST_P(SvdOracle, SignConventionLargestEntryPositive) {
    const auto m = random_sparse(8, 40, 30, 0.2);
    SvdOptions opt;
    opt.rank = 5;
    opt.backend = GetParam();
    const auto s = truncated_svd(m.csr, opt);
    for (Eigen::Index c = 0; c < s.u.cols(); ++c) {
        Eigen::Index at = 0;
        s.u.col(c).cwiseAbs().maxCoeff(&at);
        EXPECT_GT(s.u(at, c), 0.0);
    }
}

TEST_P(SvdOracle, WideAndTallShapes) {
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{15, 70}, {70, 15}, {12, 12}}) {
        const auto m = random_sparse(r * 31 + c, r, c, 0.3);
        const auto z = project_truncated_svd(m.csr, 5, 1, GetParam());
        EXPECT_LE(column_error_up_to_sign(z, oracle::svd_scores(m.dense, 5)), 1e-6) << r << "x" << c;
    }
}

INSTANTIATE_TEST_SUITE_P(Backends, SvdOracle, ::testing::Values(SvdBackend::lanczos, SvdBackend::randomized),
                         [](const auto& info) { return info.param == SvdBackend::lanczos ? "lanczos" : "randomized"; });

TEST(Svd, BackendsAgree) {
    const auto m = random_sparse(21, 90, 60, 0.1);
    const auto a = project_truncated_svd(m.csr, 7, 5, SvdBackend::lanczos);
    const auto b = project_truncated_svd(m.csr, 7, 5, SvdBackend::randomized);
    EXPECT_LE((a - b).norm() / a.norm(), 1e-6);
}

TEST(Svd, EmptyMatrixRejected) {
    const CsrMatrix<double> m(5, 5, std::vector<std::size_t>(6, 0), {}, {});
    EXPECT_THROW(project_truncated_svd(m, 2, 0), ContractError);
}

TEST(MessagePass, IdentityGraphLeavesInputUnchanged) {
    const auto a = augment_self_loops(SparseAdjacency::from_edges(4, {}));
    DenseMatrix h(4, 3);
    h << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    EXPECT_TRUE(message_pass(h, a) == h);
}

TEST(MessagePass, SingleEdge) {
    const auto a = SparseAdjacency::from_edges(2, {{0, 1}});
    DenseMatrix h(2, 2);
    h << 0, 0, 1, 2;
    const auto out = message_pass(h, a);
    EXPECT_EQ(out(0, 0), 1.0);
    EXPECT_EQ(out(0, 1), 2.0);
    EXPECT_EQ(out(1, 0), 0.0);
    EXPECT_EQ(out(1, 1), 0.0);
}

TEST(MessagePass, MatchesTripleLoopOracle) {
    std::mt19937_64 g(3);
    std::uniform_int_distribution<int> small(-8, 8);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t n = 5 + seed * 2;
        const auto dense = random_graph(seed, n, 0.2);
        DenseMatrix h(static_cast<Eigen::Index>(n), 4);
        for (Eigen::Index i = 0; i < h.rows(); ++i)
            for (Eigen::Index c = 0; c < 4; ++c) h(i, c) = small(g) * 0.25;
        const Eigen::MatrixXd ref = oracle::message_pass(dense, h);
        EXPECT_TRUE(Eigen::MatrixXd(message_pass(h, to_adjacency(dense))) == ref);
    }
}

TEST(MessagePass, LinearForRepresentableScalars) {
    const auto a = to_adjacency(random_graph(4, 30, 0.2));
    std::mt19937_64 g(1);
    std::uniform_int_distribution<int> small(-16, 16);
    DenseMatrix h1(30, 3), h2(30, 3);
    for (Eigen::Index i = 0; i < 30; ++i)
        for (Eigen::Index c = 0; c < 3; ++c) {
            h1(i, c) = small(g);
            h2(i, c) = small(g);
        }
    const double alpha = 0.5, beta = -2.0;
    const DenseMatrix lhs = message_pass(DenseMatrix(alpha * h1 + beta * h2), a);
    const DenseMatrix rhs = alpha * message_pass(h1, a) + beta * message_pass(h2, a);
    EXPECT_TRUE(lhs == rhs);
}

TEST(MessagePass, DimensionMismatchIsContractError) {
    const auto a = SparseAdjacency::from_edges(3, {{0, 1}});
    EXPECT_THROW(message_pass(DenseMatrix::Zero(4, 2), a), ContractError);
}

TEST(Augment, EmptyGraphGetsLoops) {
    const auto t = augment_self_loops(SparseAdjacency::from_edges(3, {}));
    EXPECT_EQ(t.edges(), 3u);
    for (Index i = 0; i < 3; ++i) EXPECT_TRUE(t.has_edge(i, i));
}

TEST(Augment, Idempotent) {
    const auto a = to_adjacency(random_graph(6, 20, 0.2, true));
    const auto once = augment_self_loops(a);
    EXPECT_EQ(augment_self_loops(once).matrix, once.matrix);
}

TEST(Augment, TnemguaOperatorIsAXPlusX) {
    const auto dense = random_graph(12, 25, 0.15);
    const auto a = to_adjacency(dense);
    const auto x = random_sparse(13, 25, 10, 0.3);
    const DenseMatrix xd = x.dense;
    const DenseMatrix lhs = message_pass(xd, augment_self_loops(a));
    const DenseMatrix rhs = message_pass(xd, a) + xd;
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

namespace {

struct TinyInstance {
    std::vector<std::vector<int>> dense;
    SparseAdjacency a;
    RandomSparse x;
};

TinyInstance tiny_instance(std::uint64_t seed) {
    TinyInstance t;
    t.dense = random_graph(seed, 40, 0.12);
    t.a = to_adjacency(t.dense);
    t.x = random_sparse(seed + 1, 40, 25, 0.25);
    return t;
}

}  // namespace

TEST(Embed, OriginalEqualsMessagePassOfProjection) {
    const auto t = tiny_instance(1);
    const auto e = embed(t.a, t.x.csr, {Variant::original, 6}, 9);
    const Eigen::MatrixXd ref = oracle::message_pass(t.dense, oracle::svd_scores(t.x.dense, 6));
    // Column signs follow the projection, so compare against both signs per column.
    EXPECT_LE(column_error_up_to_sign(e.z, ref), 1e-6);
    EXPECT_EQ(e.width(), 6u);
}

TEST(Embed, AugmentWithLoopsOnlyGraphIsProjection) {
    const auto t = tiny_instance(2);
    const auto loops = augment_self_loops(SparseAdjacency::from_edges(40, {}));
    const auto e = embed(loops, t.x.csr, {Variant::original, 5}, 1);
    EXPECT_LE(column_error_up_to_sign(e.z, oracle::svd_scores(t.x.dense, 5)), 1e-6);
}

TEST(Embed, LanigiroMatchesProjectionOfProduct) {
    const auto t = tiny_instance(3);
    const auto e = embed(t.a, t.x.csr, {Variant::lanigiro, 5}, 4);
    Eigen::MatrixXd ax = oracle::message_pass(t.dense, t.x.dense);
    EXPECT_LE(column_error_up_to_sign(e.z, oracle::svd_scores(ax, 5)), 1e-6);
}

TEST(Embed, TnemguaMatchesProjectionOfAugmentedProduct) {
    const auto t = tiny_instance(4);
    const auto e = embed(t.a, t.x.csr, {Variant::tnemgua, 5}, 4);
    Eigen::MatrixXd axx = oracle::message_pass(t.dense, t.x.dense) + t.x.dense;
    EXPECT_LE(column_error_up_to_sign(e.z, oracle::svd_scores(axx, 5)), 1e-6);
}

TEST(Embed, AugmentMatchesOracle) {
    const auto t = tiny_instance(5);
    auto looped = t.dense;
    for (std::size_t i = 0; i < looped.size(); ++i) looped[i][i] = 1;
    const auto e = embed(t.a, t.x.csr, {Variant::augment, 4}, 4);
    EXPECT_LE(column_error_up_to_sign(e.z, oracle::message_pass(looped, oracle::svd_scores(t.x.dense, 4))), 1e-6);
}

TEST(Embed, DeterministicBitIdentical) {
    const auto t = tiny_instance(6);
    for (Variant v : {Variant::original, Variant::augment, Variant::lanigiro, Variant::tnemgua, Variant::directed_concat}) {
        const auto a = embed(t.a, t.x.csr, {v, 4}, 17);
        const auto b = embed(t.a, t.x.csr, {v, 4}, 17);
        EXPECT_TRUE(a.z == b.z) << to_string(v);
        EXPECT_TRUE(a.z.allFinite());
        EXPECT_EQ(a.n(), 40u);
    }
}

TEST(Embed, KLargerThanDimensionsRejected) {
    const auto t = tiny_instance(7);
    EXPECT_THROW(embed(t.a, t.x.csr, {Variant::original, 26}, 0), ConfigError);
    EXPECT_THROW(embed(t.a, t.x.csr, {Variant::original, 0}, 0), ConfigError);
}

TEST(Embed, VariantNamesRoundTrip) {
    for (Variant v : {Variant::original, Variant::augment, Variant::lanigiro, Variant::tnemgua, Variant::directed_concat})
        EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_THROW(parse_variant("sideways"), ConfigError);
}

TEST(DirectedConcat, SymmetricGraphHalvesIdentical) {
    auto dense = random_graph(8, 30, 0.1);
    for (std::size_t i = 0; i < dense.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) dense[i][j] = dense[j][i];
    const auto x = random_sparse(9, 30, 12, 0.3);
    const auto e = embed_directed_concat(to_adjacency(dense), x.csr, 4, 2);
    ASSERT_EQ(e.width(), 8u);
    EXPECT_TRUE(e.z.leftCols(4) == e.z.rightCols(4));
}

TEST(DirectedConcat, PathRowsDifferExactlyWhereNeighbourhoodsAreAsymmetric) {
    // 0 -> 1 -> 2 -> 3 plus a reciprocal 3 -> 2 edge.
    const auto a = SparseAdjacency::from_edges(4, {{0, 1}, {1, 2}, {2, 3}, {3, 2}});
    std::vector<Triplet<double>> t{{0, 0, 1.0}, {1, 1, 2.0}, {2, 0, 3.0}, {3, 1, 5.0}, {2, 1, 1.0}};
    const auto x = CsrMatrix<double>::from_triplets(4, 2, std::move(t));
    const auto e = embed_directed_concat(a, x, 2, 0);
    for (Index i = 0; i < 4; ++i) {
        const auto out = a.matrix.row_indices(i);
        std::vector<Index> in;
        for (Index r = 0; r < 4; ++r)
            if (a.has_edge(r, i)) in.push_back(r);
        const bool same = std::vector<Index>(out.begin(), out.end()) == in;
        const bool rows_equal = e.z.row(i).head(2) == e.z.row(i).tail(2);
        EXPECT_EQ(same, rows_equal) << "node " << i;
    }
}

TEST(DirectedConcat, WidthIsTwoK) {
    const auto t = tiny_instance(10);
    const auto e = embed(t.a, t.x.csr, {Variant::directed_concat, 10}, 0);
    EXPECT_EQ(e.width(), 20u);
    EXPECT_EQ(e.k, 10u);
}

TEST(EmbeddingIo, BinaryRoundTripAndHeader) {
    DenseMatrix z(3, 2);
    z << 1.5, -2, 0.25, 1e-300, 7, 8;
    std::stringstream s;
    write_embedding_binary(z, s);
    const std::string bytes = s.str();
    ASSERT_EQ(bytes.size(), 8u + 6u * 8u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 3u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2u);
    // Column-major: second double is z(1, 0).
    double second = 0;
    std::memcpy(&second, bytes.data() + 16, 8);
    EXPECT_EQ(second, 0.25);
    std::stringstream in(bytes);
    EXPECT_TRUE(read_embedding_binary(in) == z);
}

TEST(EmbeddingIo, CsvHeader) {
    DenseMatrix z(2, 2);
    z << 1, 2, 3, 4;
    IdMap ids;
    ids.intern("u");
    ids.intern("v");
    std::ostringstream os;
    write_embedding_csv(z, ids, os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "node,z0,z1");
}
