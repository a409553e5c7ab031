#pragma once

// Ingestion of edge lists and attribute triplets into sparse matrices,
// isolated-node filtering, binarization and doubly-normalized TF-IDF.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinyblock/error.hpp"
#include "tinyblock/sparse.hpp"

namespace tinyblock {

/// Bidirectional external-id <-> dense-index dictionary. Indices are handed
/// out in first-seen order.
class IdMap {
public:
    Index intern(std::string_view name) {
        auto it = index_.find(std::string(name));
        if (it != index_.end()) return it->second;
        const auto id = static_cast<Index>(names_.size());
        names_.emplace_back(name);
        index_.emplace(names_.back(), id);
        return id;
    }

    std::optional<Index> find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& name(Index i) const { return names_.at(i); }
    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// Keeps the listed old indices, in the given order.
    IdMap subset(std::span<const Index> keep) const {
        IdMap out;
        for (Index i : keep) out.intern(names_[i]);
        return out;
    }

    static IdMap from_names(const std::vector<std::string>& names) {
        IdMap out;
        for (const auto& n : names) out.intern(n);
        detail::require(out.size() == names.size(), "IdMap: duplicate names");
        return out;
    }

    friend bool operator==(const IdMap& a, const IdMap& b) { return a.names_ == b.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Index> index_;
};

/// Directed binary adjacency in CSR layout. Entry values are exactly 1.
struct SparseAdjacency {
    CsrMatrix<std::uint8_t> matrix;
    IdMap ids;

    std::size_t n() const noexcept { return matrix.rows(); }
    std::size_t edges() const noexcept { return matrix.nnz(); }
    bool has_edge(Index src, Index dst) const { return matrix.at(src, dst) != 0; }

    /// Builds from (src, dst) index pairs. Duplicates fold to one edge.
    static SparseAdjacency from_edges(std::size_t n, const std::vector<std::pair<Index, Index>>& edges,
                                      IdMap ids = {}) {
        std::vector<Triplet<std::uint8_t>> t;
        t.reserve(edges.size());
        for (auto [s, d] : edges) t.push_back({s, d, 1});
        if (ids.size() == 0)
            for (std::size_t i = 0; i < n; ++i) ids.intern(std::to_string(i));
        detail::require(ids.size() == n, "SparseAdjacency: id map size differs from n");
        return {CsrMatrix<std::uint8_t>::from_triplets(n, n, std::move(t), Duplicates::keep_one), std::move(ids)};
    }

    SparseAdjacency transpose() const { return {matrix.transpose(), ids}; }
};

/// Nonnegative user x attribute counts. Rows share the node index space of
/// the paired SparseAdjacency.
struct AttributeMatrix {
    CsrMatrix<std::uint32_t> counts;
    IdMap attributes;

    std::size_t n() const noexcept { return counts.rows(); }
    std::size_t d() const noexcept { return counts.cols(); }
};

/// Real-valued TF-IDF weights on the sparsity pattern of an AttributeMatrix.
struct TfidfMatrix {
    CsrMatrix<double> values;
    std::vector<Index> empty_rows;     ///< nodes without attributes (left all-zero)
    std::vector<Index> empty_columns;  ///< attributes with zero support
};

struct IngestReport {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    std::size_t dropped_self_loops = 0;
    std::size_t deduped = 0;
    std::size_t removed_isolated = 0;
    std::size_t d = 0;
    std::size_t attribute_lines = 0;
    std::size_t skipped_unknown_nodes = 0;
    std::size_t removed_attributes = 0;
};

inline nlohmann::ordered_json to_json(const IngestReport& r) {
    nlohmann::ordered_json j;
    j["nodes"] = r.nodes;
    j["edges"] = r.edges;
    j["dropped_self_loops"] = r.dropped_self_loops;
    j["deduped"] = r.deduped;
    j["removed_isolated"] = r.removed_isolated;
    j["d"] = r.d;
    j["attribute_lines"] = r.attribute_lines;
    j["skipped_unknown_nodes"] = r.skipped_unknown_nodes;
    j["removed_attributes"] = r.removed_attributes;
    return j;
}

namespace detail {

/// Splits on ASCII whitespace. Returns false for blank or '#'-comment lines.
inline bool tokenize(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        if (out.empty() && line[i] == '#') return false;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return !out.empty();
}

template <typename I>
std::optional<I> parse_integer(std::string_view s) {
    I v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

struct EdgeListResult {
    SparseAdjacency graph;
    IngestReport report;
};

/// Reads `src dst` lines. Undirected input inserts both directions.
inline EdgeListResult load_edge_list(std::istream& in, bool directed = true) {
    IdMap ids;
    std::vector<std::pair<Index, Index>> edges;
    IngestReport rep;
    std::string line;
    std::vector<std::string_view> tok;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::tokenize(line, tok)) continue;
        if (tok.size() != 2) throw ParseError("expected `src dst`, got " + std::to_string(tok.size()) + " fields", lineno);
        const Index s = ids.intern(tok[0]);
        const Index d = ids.intern(tok[1]);
        if (s == d) {
            ++rep.dropped_self_loops;
            continue;
        }
        edges.emplace_back(s, d);
        if (!directed) edges.emplace_back(d, s);
    }
    if (ids.size() == 0) throw ParseError("edge list is empty", 0);
    const std::size_t raw = edges.size();
    const std::size_t n = ids.size();
    auto g = SparseAdjacency::from_edges(n, edges, std::move(ids));
    rep.nodes = g.n();
    rep.edges = g.edges();
    rep.deduped = raw - g.edges();
    return {std::move(g), rep};
}

inline EdgeListResult load_edge_list(std::string_view text, bool directed = true) {
    std::istringstream in{std::string(text)};
    return load_edge_list(in, directed);
}

/// Writes the canonical form: rows in index order, destinations ascending.
inline void write_edge_list(const SparseAdjacency& a, std::ostream& out) {
    for (std::size_t r = 0; r < a.n(); ++r)
        for (Index c : a.matrix.row_indices(r))
            out << a.ids.name(static_cast<Index>(r)) << ' ' << a.ids.name(c) << '\n';
}

enum class UnknownNodePolicy { skip, fail };

struct AttributeLoadResult {
    AttributeMatrix matrix;
    std::size_t lines = 0;
    std::size_t skipped_unknown_nodes = 0;
};

/// Reads `node attribute count` lines against the node dictionary of the
/// adjacency. Repeated pairs are summed.
inline AttributeLoadResult load_attributes(std::istream& in, const IdMap& nodes,
                                           UnknownNodePolicy policy = UnknownNodePolicy::skip) {
    IdMap attrs;
    std::vector<Triplet<std::uint32_t>> entries;
    AttributeLoadResult res;
    std::unordered_set<std::string> missing;
    std::string line;
    std::vector<std::string_view> tok;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::tokenize(line, tok)) continue;
        if (tok.size() != 3) throw ParseError("expected `node attribute count`", lineno);
        const auto count = detail::parse_integer<std::int64_t>(tok[2]);
        if (!count || *count <= 0) throw ParseError("count must be a positive integer, got `" + std::string(tok[2]) + "`", lineno);
        if (*count > std::numeric_limits<std::uint32_t>::max()) throw ParseError("count overflows 32 bits", lineno);
        ++res.lines;
        const auto node = nodes.find(tok[0]);
        if (!node) {
            if (policy == UnknownNodePolicy::fail)
                throw ParseError("node `" + std::string(tok[0]) + "` is not in the edge list", lineno);
            ++res.skipped_unknown_nodes;
            continue;
        }
        entries.push_back({*node, attrs.intern(tok[1]), static_cast<std::uint32_t>(*count)});
    }
    const std::size_t d = attrs.size();
    res.matrix = {CsrMatrix<std::uint32_t>::from_triplets(nodes.size(), d, std::move(entries)), std::move(attrs)};
    return res;
}

inline AttributeLoadResult load_attributes(std::string_view text, const IdMap& nodes,
                                           UnknownNodePolicy policy = UnknownNodePolicy::skip) {
    std::istringstream in{std::string(text)};
    return load_attributes(in, nodes, policy);
}

inline void write_attributes(const AttributeMatrix& x, const IdMap& nodes, std::ostream& out) {
    for (std::size_t r = 0; r < x.n(); ++r) {
        const auto idx = x.counts.row_indices(r);
        const auto val = x.counts.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k)
            out << nodes.name(static_cast<Index>(r)) << ' ' << x.attributes.name(idx[k]) << ' ' << val[k] << '\n';
    }
}

struct FilterResult {
    SparseAdjacency graph;
    AttributeMatrix attributes;
    std::vector<std::string> removed;             ///< external ids of dropped nodes
    std::vector<std::string> removed_attributes;  ///< attributes left without support
};

namespace detail {

template <typename T>
CsrMatrix<T> select(const CsrMatrix<T>& m, std::span<const Index> rows_keep,
                    const std::vector<std::int64_t>& col_remap, std::size_t new_cols) {
    std::vector<std::size_t> ptr(rows_keep.size() + 1, 0);
    std::vector<Index> idx;
    std::vector<T> val;
    for (std::size_t r = 0; r < rows_keep.size(); ++r) {
        const auto ci = m.row_indices(rows_keep[r]);
        const auto cv = m.row_values(rows_keep[r]);
        for (std::size_t k = 0; k < ci.size(); ++k) {
            const auto nc = col_remap[ci[k]];
            if (nc < 0) continue;
            idx.push_back(static_cast<Index>(nc));
            val.push_back(cv[k]);
        }
        ptr[r + 1] = idx.size();
    }
    return CsrMatrix<T>(rows_keep.size(), new_cols, std::move(ptr), std::move(idx), std::move(val));
}

}  // namespace detail

/// Drops nodes with in-degree + out-degree == 0, reindexing both matrices,
/// then drops attribute columns left without any user.
inline FilterResult filter_isolated(const SparseAdjacency& a, const AttributeMatrix& x) {
    detail::require(x.n() == a.n(), "filter_isolated: attribute rows differ from node count");
    const std::size_t n = a.n();
    std::vector<std::uint8_t> touched(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        if (a.matrix.row_nnz(r) > 0) touched[r] = 1;
        for (Index c : a.matrix.row_indices(r)) touched[c] = 1;
    }
    std::vector<Index> keep;
    std::vector<std::int64_t> node_remap(n, -1);
    FilterResult out;
    for (std::size_t i = 0; i < n; ++i) {
        if (touched[i]) {
            node_remap[i] = static_cast<std::int64_t>(keep.size());
            keep.push_back(static_cast<Index>(i));
        } else {
            out.removed.push_back(a.ids.name(static_cast<Index>(i)));
        }
    }
    out.graph = {detail::select(a.matrix, keep, node_remap, keep.size()), a.ids.subset(keep)};

    std::vector<std::size_t> support(x.d(), 0);
    for (Index r : keep)
        for (Index c : x.counts.row_indices(r)) ++support[c];
    std::vector<Index> attr_keep;
    std::vector<std::int64_t> attr_remap(x.d(), -1);
    for (std::size_t j = 0; j < x.d(); ++j) {
        if (support[j] > 0) {
            attr_remap[j] = static_cast<std::int64_t>(attr_keep.size());
            attr_keep.push_back(static_cast<Index>(j));
        } else {
            out.removed_attributes.push_back(x.attributes.name(static_cast<Index>(j)));
        }
    }
    out.attributes = {detail::select(x.counts, keep, attr_remap, attr_keep.size()), x.attributes.subset(attr_keep)};
    return out;
}

/// X^b: 1 where the count is positive.
inline AttributeMatrix binarize(const AttributeMatrix& x) {
    return {x.counts.map<std::uint32_t>([](std::uint32_t v) { return v > 0 ? 1u : 0u; }), x.attributes};
}

/// X*_ij = (n / support_j) * (0.5 + 0.5 * X_ij / max_j' X_ij'), evaluated only
/// where X_ij > 0 so the sparsity pattern is preserved.
inline TfidfMatrix tfidf_transform(const AttributeMatrix& x) {
    const std::size_t n = x.n();
    std::vector<std::size_t> support(x.d(), 0);
    for (Index c : x.counts.col_idx()) ++support[c];
    TfidfMatrix out;
    for (std::size_t j = 0; j < x.d(); ++j)
        if (support[j] == 0) out.empty_columns.push_back(static_cast<Index>(j));

    std::vector<double> vals(x.counts.nnz());
    const auto& ptr = x.counts.row_ptr();
    const auto& idx = x.counts.col_idx();
    const auto& cnt = x.counts.values();
    for (std::size_t r = 0; r < n; ++r) {
        if (ptr[r] == ptr[r + 1]) {
            out.empty_rows.push_back(static_cast<Index>(r));
            continue;
        }
        const std::uint32_t row_max = *std::max_element(cnt.begin() + static_cast<std::ptrdiff_t>(ptr[r]),
                                                        cnt.begin() + static_cast<std::ptrdiff_t>(ptr[r + 1]));
        for (std::size_t k = ptr[r]; k < ptr[r + 1]; ++k) {
            const double idf = static_cast<double>(n) / static_cast<double>(support[idx[k]]);
            const double tf = 0.5 + 0.5 * static_cast<double>(cnt[k]) / static_cast<double>(row_max);
            vals[k] = idf * tf;
        }
    }
    out.values = CsrMatrix<double>(n, x.d(), ptr, idx, std::move(vals));
    return out;
}

/// Raw counts as doubles (synthetic mode feeds these to the embedding).
inline CsrMatrix<double> as_real(const AttributeMatrix& x) {
    return x.counts.map<double>([](std::uint32_t v) { return static_cast<double>(v); });
}

// Matrix Market coordinate format, 1-based indices.

template <typename T>
void write_matrix_market(const CsrMatrix<T>& m, std::ostream& out, bool pattern = false) {
    const char* field = pattern ? "pattern" : (std::is_integral_v<T> ? "integer" : "real");
    out << "%%MatrixMarket matrix coordinate " << field << " general\n";
    out << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
    out.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto idx = m.row_indices(r);
        const auto val = m.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out << r + 1 << ' ' << idx[k] + 1;
            if (!pattern) out << ' ' << +val[k];
            out << '\n';
        }
    }
}

template <typename T>
CsrMatrix<T> read_matrix_market(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty Matrix Market stream", 0);
    ++lineno;
    std::istringstream banner(line);
    std::string tag, object, format, field, symmetry;
    banner >> tag >> object >> format >> field >> symmetry;
    if (tag != "%%MatrixMarket" || object != "matrix" || format != "coordinate")
        throw ParseError("only `%%MatrixMarket matrix coordinate` is supported", lineno);
    if (symmetry != "general") throw ParseError("only general symmetry is supported", lineno);
    const bool pattern = field == "pattern";
    std::size_t rows = 0, cols = 0, nnz = 0;
    bool have_size = false;
    std::vector<Triplet<T>> t;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream ls(line);
        if (!have_size) {
            if (!(ls >> rows >> cols >> nnz)) throw ParseError("bad size line", lineno);
            have_size = true;
            t.reserve(nnz);
            continue;
        }
        std::size_t r = 0, c = 0;
        double v = 1.0;
        if (!(ls >> r >> c) || (!pattern && !(ls >> v))) throw ParseError("bad entry", lineno);
        if (r == 0 || c == 0 || r > rows || c > cols) throw ParseError("entry index out of range", lineno);
        t.push_back({static_cast<Index>(r - 1), static_cast<Index>(c - 1), static_cast<T>(v)});
    }
    if (!have_size) throw ParseError("missing size line", lineno);
    if (t.size() != nnz) throw ParseError("entry count differs from header", lineno);
    return CsrMatrix<T>::from_triplets(rows, cols, std::move(t));
}

}  // namespace tinyblock
