#pragma once

// Node embeddings composed from low-rank projection, summation message
// passing and self-loop augmentation.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "tinyblock/graphio.hpp"
#include "tinyblock/svd.hpp"

namespace tinyblock {

/// Order in which projection (P), message passing (M) and augmentation (T)
/// are composed.
enum class Variant {
    original,         ///< M(P(X); A)
    augment,          ///< M(P(X); T(A))
    lanigiro,         ///< P(M(X; A))
    tnemgua,          ///< P(M(X; T(A)))
    directed_concat,  ///< [M(P(X); A), M(P(X); A^T)]
};

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::original: return "original";
        case Variant::augment: return "augment";
        case Variant::lanigiro: return "lanigiro";
        case Variant::tnemgua: return "tnemgua";
        case Variant::directed_concat: return "directed_concat";
    }
    return "?";
}

inline Variant parse_variant(std::string_view s) {
    for (Variant v : {Variant::original, Variant::augment, Variant::lanigiro, Variant::tnemgua, Variant::directed_concat})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown variant `" + std::string(s) + "`");
}

struct VariantSpec {
    Variant variant = Variant::original;
    std::size_t k = 10;
    SvdBackend backend = SvdBackend::lanczos;

    void validate(std::size_t n, std::size_t d) const {
        if (k == 0) throw ConfigError("projection dimension K must be positive");
        if (k > std::min(n, d))
            throw ConfigError("projection dimension K=" + std::to_string(k) + " exceeds min(n, d)=" +
                              std::to_string(std::min(n, d)));
    }
};

struct Embedding {
    DenseMatrix z;
    Variant variant = Variant::original;
    std::size_t k = 0;
    std::size_t svd_iterations = 0;
    bool svd_converged = true;
    std::vector<std::string> warnings;

    std::size_t n() const noexcept { return static_cast<std::size_t>(z.rows()); }
    std::size_t width() const noexcept { return static_cast<std::size_t>(z.cols()); }
};

/// Rank-K projection: rows of U_K * Sigma_K.
template <LinearOperator Op>
TruncatedSvd project(const Op& op, std::size_t k, std::uint64_t seed, SvdBackend backend = SvdBackend::lanczos) {
    SvdOptions opt;
    opt.rank = k;
    opt.seed = seed;
    opt.backend = backend;
    return truncated_svd(op, opt);
}

template <typename T>
DenseMatrix project_truncated_svd(const CsrMatrix<T>& m, std::size_t k, std::uint64_t seed,
                                  SvdBackend backend = SvdBackend::lanczos) {
    detail::require(m.nnz() > 0, "project_truncated_svd: matrix has no nonzero entries");
    return project(SparseOperator<T>(m), k, seed, backend).scores();
}

/// Summation aggregator: row i of the result is the sum of h over the
/// out-neighbours of i.
inline DenseMatrix message_pass(const DenseMatrix& h, const SparseAdjacency& a) {
    if (static_cast<std::size_t>(h.rows()) != a.n())
        throw ContractError("message_pass: embedding has " + std::to_string(h.rows()) + " rows, graph has " +
                            std::to_string(a.n()) + " nodes");
    return multiply(a.matrix, h);
}

/// T(A): sets every diagonal entry to 1. Idempotent.
inline SparseAdjacency augment_self_loops(const SparseAdjacency& a) {
    const std::size_t n = a.n();
    std::vector<std::size_t> ptr(n + 1, 0);
    std::vector<Index> idx;
    idx.reserve(a.edges() + n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = a.matrix.row_indices(r);
        const auto self = static_cast<Index>(r);
        auto it = std::lower_bound(row.begin(), row.end(), self);
        idx.insert(idx.end(), row.begin(), it);
        idx.push_back(self);
        if (it != row.end() && *it == self) ++it;
        idx.insert(idx.end(), it, row.end());
        ptr[r + 1] = idx.size();
    }
    std::vector<std::uint8_t> val(idx.size(), 1);
    return {CsrMatrix<std::uint8_t>(n, n, std::move(ptr), std::move(idx), std::move(val)), a.ids};
}

namespace detail {

inline Embedding from_svd(DenseMatrix z, const TruncatedSvd& s, Variant v, std::size_t k) {
    Embedding e;
    e.z = std::move(z);
    e.variant = v;
    e.k = k;
    e.svd_iterations = s.iterations;
    e.svd_converged = s.converged;
    e.warnings = s.warnings;
    return e;
}

}  // namespace detail

/// Left half from A, right half from A^T, sharing one projection of X.
inline Embedding embed_directed_concat(const SparseAdjacency& a, const CsrMatrix<double>& x, std::size_t k,
                                       std::uint64_t seed, SvdBackend backend = SvdBackend::lanczos) {
    detail::require(x.rows() == a.n(), "embed: attribute rows differ from node count");
    VariantSpec{Variant::directed_concat, k, backend}.validate(a.n(), x.cols());
    detail::require(x.nnz() > 0, "embed: attribute matrix has no nonzero entries");
    const auto s = project(SparseOperator<double>(x), k, seed, backend);
    const DenseMatrix p = s.scores();
    DenseMatrix z(p.rows(), 2 * p.cols());
    z.leftCols(p.cols()) = message_pass(p, a);
    z.rightCols(p.cols()) = message_pass(p, a.transpose());
    return detail::from_svd(std::move(z), s, Variant::directed_concat, k);
}

inline Embedding embed(const SparseAdjacency& a, const CsrMatrix<double>& x, const VariantSpec& spec,
                       std::uint64_t seed) {
    detail::require(x.rows() == a.n(), "embed: attribute rows differ from node count");
    spec.validate(a.n(), x.cols());
    detail::require(x.nnz() > 0, "embed: attribute matrix has no nonzero entries");
    const std::uint64_t svd_seed = derive_seed(seed, "embed.svd");
    switch (spec.variant) {
        case Variant::original:
        case Variant::augment: {
            const auto s = project(SparseOperator<double>(x), spec.k, svd_seed, spec.backend);
            const DenseMatrix p = s.scores();
            DenseMatrix z = spec.variant == Variant::original ? message_pass(p, a)
                                                              : message_pass(p, augment_self_loops(a));
            return detail::from_svd(std::move(z), s, spec.variant, spec.k);
        }
        case Variant::lanigiro:
        case Variant::tnemgua: {
            const SparseAdjacency g = spec.variant == Variant::lanigiro ? a : augment_self_loops(a);
            const ProductOperator<std::uint8_t, double> op(g.matrix, x);
            const auto s = project(op, spec.k, svd_seed, spec.backend);
            return detail::from_svd(s.scores(), s, spec.variant, spec.k);
        }
        case Variant::directed_concat:
            return embed_directed_concat(a, x, spec.k, svd_seed, spec.backend);
    }
    throw ContractError("embed: unhandled variant");
}

inline Embedding embed(const SparseAdjacency& a, const TfidfMatrix& x, const VariantSpec& spec, std::uint64_t seed) {
    return embed(a, x.values, spec, seed);
}

// Binary export: u32 rows, u32 cols (little-endian), then column-major
// little-endian doubles.

namespace detail {

template <typename U>
U byteswap(U v) {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof v; ++i) dst[i] = src[sizeof v - 1 - i];
    return out;
}

template <typename U>
void put_le(std::ostream& out, U v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get_le(std::istream& in) {
    U v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated embedding file");
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    return v;
}

}  // namespace detail

inline void write_embedding_binary(const DenseMatrix& z, std::ostream& out) {
    detail::put_le(out, static_cast<std::uint32_t>(z.rows()));
    detail::put_le(out, static_cast<std::uint32_t>(z.cols()));
    for (Eigen::Index c = 0; c < z.cols(); ++c)
        for (Eigen::Index r = 0; r < z.rows(); ++r) detail::put_le(out, std::bit_cast<std::uint64_t>(z(r, c)));
}

inline DenseMatrix read_embedding_binary(std::istream& in) {
    const auto rows = detail::get_le<std::uint32_t>(in);
    const auto cols = detail::get_le<std::uint32_t>(in);
    DenseMatrix z(rows, cols);
    for (Eigen::Index c = 0; c < z.cols(); ++c)
        for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, c) = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
    return z;
}

/// CSV with header `node,z0,z1,...`.
inline void write_embedding_csv(const DenseMatrix& z, const IdMap& ids, std::ostream& out) {
    out << "node";
    for (Eigen::Index c = 0; c < z.cols(); ++c) out << ",z" << c;
    out << '\n';
    out.precision(17);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        out << ids.name(static_cast<Index>(r));
        for (Eigen::Index c = 0; c < z.cols(); ++c) out << ',' << z(r, c);
        out << '\n';
    }
}

}  // namespace tinyblock
