#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tinyblock/graphio.hpp"

using namespace tinyblock;

namespace {

AttributeMatrix dense_attributes(const std::vector<std::vector<unsigned>>& rows) {
    std::vector<Triplet<std::uint32_t>> t;
    IdMap attrs;
    const std::size_t d = rows.empty() ? 0 : rows[0].size();
    for (std::size_t j = 0; j < d; ++j) attrs.intern("a" + std::to_string(j));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (rows[i][j]) t.push_back({static_cast<Index>(i), static_cast<Index>(j), rows[i][j]});
    return {CsrMatrix<std::uint32_t>::from_triplets(rows.size(), d, std::move(t)), attrs};
}

std::vector<std::vector<unsigned>> random_counts(std::mt19937_64& g, std::size_t n, std::size_t d, double density) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<unsigned>> x(n, std::vector<unsigned>(d, 0));
    for (auto& row : x)
        for (auto& v : row)
            if (u(g) < density) v = 1 + static_cast<unsigned>(g() % 5);
    return x;
}

}  // namespace

TEST(EdgeList, TwoNodeCycle) {
    const auto r = load_edge_list("a b\nb a\n");
    EXPECT_EQ(r.graph.n(), 2u);
    EXPECT_EQ(r.graph.edges(), 2u);
    EXPECT_TRUE(r.graph.has_edge(0, 1));
    EXPECT_TRUE(r.graph.has_edge(1, 0));
}

TEST(EdgeList, DuplicateEdgesFold) {
    const auto r = load_edge_list("a b\na b\n");
    EXPECT_EQ(r.graph.edges(), 1u);
    EXPECT_EQ(r.report.deduped, 1u);
}

TEST(EdgeList, SelfLoopsDroppedAndCounted) {
    const auto r = load_edge_list("a a\na b\n");
    EXPECT_EQ(r.graph.edges(), 1u);
    EXPECT_EQ(r.report.dropped_self_loops, 1u);
    EXPECT_FALSE(r.graph.has_edge(0, 0));
}

TEST(EdgeList, CommentsAndBlankLinesSkipped) {
    const auto r = load_edge_list("# header\n\na b\n  b c  \n");
    EXPECT_EQ(r.graph.n(), 3u);
    EXPECT_EQ(r.graph.edges(), 2u);
}

TEST(EdgeList, MalformedLineReportsLineNumber) {
    try {
        load_edge_list("a b\nc\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(EdgeList, EmptyInputIsAnError) {
    EXPECT_THROW(load_edge_list("# nothing\n"), ParseError);
}

TEST(EdgeList, UndirectedInsertsBothDirections) {
    const auto r = load_edge_list("a b\n", false);
    EXPECT_EQ(r.graph.edges(), 2u);
}

TEST(EdgeList, RoundTripIsCanonical) {
    const auto r = load_edge_list("c a\na b\nb c\na b\nc a\n");
    std::ostringstream once;
    write_edge_list(r.graph, once);
    const auto again = load_edge_list(once.str());
    std::ostringstream twice;
    write_edge_list(again.graph, twice);
    EXPECT_EQ(once.str(), twice.str());
    EXPECT_EQ(once.str(), "c a\na b\nb c\n");
}

TEST(Attributes, SingleEntry) {
    const auto g = load_edge_list("a b\n");
    const auto x = load_attributes("a #x 2\n", g.graph.ids).matrix;
    EXPECT_EQ(x.d(), 1u);
    EXPECT_EQ(x.counts.at(0, 0), 2u);
}

TEST(Attributes, RepeatedPairsSum) {
    const auto g = load_edge_list("a b\n");
    const auto x = load_attributes("a #x 1\na #x 1\n", g.graph.ids).matrix;
    EXPECT_EQ(x.counts.at(0, 0), 2u);
}

TEST(Attributes, NonPositiveOrNonIntegerCountRejected) {
    const auto g = load_edge_list("a b\n");
    EXPECT_THROW(load_attributes("a #x 0\n", g.graph.ids), ParseError);
    EXPECT_THROW(load_attributes("a #x -2\n", g.graph.ids), ParseError);
    EXPECT_THROW(load_attributes("a #x 1.5\n", g.graph.ids), ParseError);
}

TEST(Attributes, UnknownNodePolicy) {
    const auto g = load_edge_list("a b\n");
    const auto r = load_attributes("z #x 1\na #y 1\n", g.graph.ids, UnknownNodePolicy::skip);
    EXPECT_EQ(r.skipped_unknown_nodes, 1u);
    EXPECT_EQ(r.matrix.counts.nnz(), 1u);
    EXPECT_THROW(load_attributes("z #x 1\n", g.graph.ids, UnknownNodePolicy::fail), ParseError);
}

TEST(Filter, IsolatedNodeRemoved) {
    auto a = SparseAdjacency::from_edges(3, {{0, 1}});
    const auto x = dense_attributes({{1, 0}, {0, 1}, {1, 1}});
    const auto f = filter_isolated(a, x);
    ASSERT_EQ(f.removed.size(), 1u);
    EXPECT_EQ(f.removed[0], "2");
    EXPECT_EQ(f.graph.n(), 2u);
    EXPECT_EQ(f.attributes.n(), 2u);
    EXPECT_EQ(f.attributes.counts.at(1, 1), 1u);
}

TEST(Filter, TriangleUnchanged) {
    auto a = SparseAdjacency::from_edges(3, {{0, 1}, {1, 2}, {2, 0}});
    const auto x = dense_attributes({{1}, {1}, {1}});
    const auto f = filter_isolated(a, x);
    EXPECT_TRUE(f.removed.empty());
    EXPECT_EQ(f.graph.matrix, a.matrix);
}

TEST(Filter, Idempotent) {
    auto a = SparseAdjacency::from_edges(5, {{0, 1}, {3, 1}});
    const auto x = dense_attributes({{1, 0}, {0, 1}, {1, 1}, {0, 0}, {0, 1}});
    const auto once = filter_isolated(a, x);
    const auto twice = filter_isolated(once.graph, once.attributes);
    EXPECT_TRUE(twice.removed.empty());
    EXPECT_EQ(twice.graph.matrix, once.graph.matrix);
    EXPECT_EQ(twice.attributes.counts, once.attributes.counts);
    EXPECT_EQ(twice.graph.ids, once.graph.ids);
}

TEST(Binarize, Example) {
    const auto b = binarize(dense_attributes({{2, 0}, {1, 3}}));
    EXPECT_EQ(b.counts.at(0, 0), 1u);
    EXPECT_EQ(b.counts.at(0, 1), 0u);
    EXPECT_EQ(b.counts.at(1, 0), 1u);
    EXPECT_EQ(b.counts.at(1, 1), 1u);
}

TEST(Binarize, AllZeroStaysZero) {
    const auto b = binarize(dense_attributes({{0, 0}, {0, 0}}));
    EXPECT_EQ(b.counts.nnz(), 0u);
}

TEST(Binarize, IdempotentOnRandomMatrices) {
    std::mt19937_64 g(11);
    for (int rep = 0; rep < 100; ++rep) {
        const auto x = dense_attributes(random_counts(g, 8, 6, 0.3));
        const auto b = binarize(x);
        EXPECT_EQ(binarize(b).counts, b.counts);
    }
}

TEST(Tfidf, HandExample) {
    const auto t = tfidf_transform(dense_attributes({{2, 0}, {1, 1}}));
    EXPECT_NEAR(t.values.at(0, 0), 1.0, 1e-12);
    EXPECT_EQ(t.values.at(0, 1), 0.0);
    EXPECT_NEAR(t.values.at(1, 0), 1.0, 1e-12);
    EXPECT_NEAR(t.values.at(1, 1), 2.0, 1e-12);
}

TEST(Tfidf, SingleEntry) {
    const auto t = tfidf_transform(dense_attributes({{1}}));
    EXPECT_NEAR(t.values.at(0, 0), 1.0, 1e-12);
}

TEST(Tfidf, MatchesScalarOracleAndKeepsPattern) {
    std::mt19937_64 g(5);
    for (int rep = 0; rep < 30; ++rep) {
        const auto raw = random_counts(g, 12, 9, 0.35);
        const auto x = dense_attributes(raw);
        const auto t = tfidf_transform(x);
        EXPECT_EQ(t.values.row_ptr(), x.counts.row_ptr());
        EXPECT_EQ(t.values.col_idx(), x.counts.col_idx());
        for (std::size_t i = 0; i < raw.size(); ++i)
            for (std::size_t j = 0; j < raw[i].size(); ++j) {
                const double v = t.values.at(i, j);
                EXPECT_NEAR(v, oracle::tfidf_entry(raw, i, j), 1e-12);
                if (raw[i][j]) {
                    EXPECT_GT(v, 0.0);
                    EXPECT_TRUE(std::isfinite(v));
                }
            }
    }
}

TEST(Tfidf, RarerColumnGetsLargerWeight) {
    // Ten users; column 0 used by one user, column 1 by all.
    std::vector<std::vector<unsigned>> raw(10, std::vector<unsigned>{0, 1});
    raw[0][0] = 1;
    const auto t = tfidf_transform(dense_attributes(raw));
    EXPECT_NEAR(t.values.at(0, 0), 10.0, 1e-12);
    EXPECT_NEAR(t.values.at(0, 1), 1.0, 1e-12);
}

TEST(Tfidf, MonotoneInSupportAndCount) {
    std::mt19937_64 g(9);
    for (int rep = 0; rep < 50; ++rep) {
        const auto raw = random_counts(g, 10, 6, 0.4);
        const auto t = tfidf_transform(dense_attributes(raw));
        std::vector<std::size_t> support(6, 0);
        for (const auto& r : raw)
            for (std::size_t j = 0; j < 6; ++j) support[j] += r[j] > 0;
        for (std::size_t i = 0; i < raw.size(); ++i)
            for (std::size_t j = 0; j < 6; ++j)
                for (std::size_t l = 0; l < 6; ++l) {
                    if (!raw[i][j] || !raw[i][l] || raw[i][j] != raw[i][l]) continue;
                    if (support[j] < support[l]) {
                        EXPECT_GT(t.values.at(i, j), t.values.at(i, l));
                    }
                }
    }
}

TEST(Tfidf, EmptyRowsAndColumnsReported) {
    const auto t = tfidf_transform(dense_attributes({{1, 0, 0}, {0, 0, 0}}));
    EXPECT_EQ(t.empty_rows, std::vector<Index>{1});
    EXPECT_EQ(t.empty_columns, (std::vector<Index>{1, 2}));
}

TEST(MatrixMarket, RoundTrip) {
    const auto x = dense_attributes({{2, 0, 1}, {0, 7, 0}});
    std::stringstream s;
    write_matrix_market(x.counts, s);
    EXPECT_EQ(read_matrix_market<std::uint32_t>(s), x.counts);
}

TEST(IngestReport, JsonKeysInOrder) {
    IngestReport r;
    r.nodes = 3;
    const auto j = to_json(r);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    ASSERT_GE(keys.size(), 6u);
    EXPECT_EQ(keys[0], "nodes");
    EXPECT_EQ(keys[1], "edges");
    EXPECT_EQ(keys[2], "dropped_self_loops");
    EXPECT_EQ(keys[3], "deduped");
    EXPECT_EQ(keys[4], "removed_isolated");
    EXPECT_EQ(keys[5], "d");
}
