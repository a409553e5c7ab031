#pragma once

// Truncated SVD of sparse (or implicitly composed) operators.
//
// The default backend is a thick-restarted Lanczos bidiagonalization with
// full reorthogonalization (the augmented scheme of Baglama & Reichel). A
// randomized subspace iteration backend satisfies the same accuracy
// contract and is selected through SvdOptions.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "tinyblock/error.hpp"
#include "tinyblock/random.hpp"
#include "tinyblock/sparse.hpp"

namespace tinyblock {

/// Anything exposing y = Op x and y = Op^T x.
template <typename Op>
concept LinearOperator = requires(const Op& op, const Vector& x, Vector& y) {
    { op.rows() } -> std::convertible_to<std::size_t>;
    { op.cols() } -> std::convertible_to<std::size_t>;
    op.apply(x, y);
    op.apply_transpose(x, y);
};

/// Wraps a CSR matrix. The transpose is materialized once so both products
/// are row-parallel and bit-reproducible.
template <typename T>
class SparseOperator {
public:
    explicit SparseOperator(const CsrMatrix<T>& m) : m_(&m), mt_(m.transpose()) {}

    std::size_t rows() const noexcept { return m_->rows(); }
    std::size_t cols() const noexcept { return m_->cols(); }
    std::size_t nnz() const noexcept { return m_->nnz(); }
    void apply(const Vector& x, Vector& y) const { multiply(*m_, x, y); }
    void apply_transpose(const Vector& x, Vector& y) const { multiply(mt_, x, y); }

private:
    const CsrMatrix<T>* m_;
    CsrMatrix<T> mt_;
};

/// Implicit product L * R, never formed explicitly.
template <typename TL, typename TR>
class ProductOperator {
public:
    ProductOperator(const CsrMatrix<TL>& left, const CsrMatrix<TR>& right) : left_(left), right_(right) {
        detail::require(left.cols() == right.rows(), "ProductOperator: inner dimensions differ");
    }

    std::size_t rows() const noexcept { return left_.rows(); }
    std::size_t cols() const noexcept { return right_.cols(); }
    void apply(const Vector& x, Vector& y) const {
        right_.apply(x, tmp_);
        left_.apply(tmp_, y);
    }
    void apply_transpose(const Vector& x, Vector& y) const {
        left_.apply_transpose(x, tmp_);
        right_.apply_transpose(tmp_, y);
    }

private:
    SparseOperator<TL> left_;
    SparseOperator<TR> right_;
    mutable Vector tmp_;
};

enum class SvdBackend { lanczos, randomized };

struct SvdOptions {
    std::size_t rank = 10;
    std::uint64_t seed = 0;
    SvdBackend backend = SvdBackend::lanczos;
    double tolerance = 1e-8;
    std::size_t max_iterations = 1000;
    std::size_t extra_dimensions = 7;  ///< Lanczos work size is rank + extra
    std::size_t oversampling = 10;     ///< randomized block size is rank + oversampling
};

struct TruncatedSvd {
    Eigen::MatrixXd u;      ///< rows x rank, orthonormal columns
    Eigen::VectorXd sigma;  ///< nonincreasing
    Eigen::MatrixXd v;      ///< cols x rank, orthonormal columns
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t numerical_rank = 0;
    std::vector<std::string> warnings;

    /// U_K * Sigma_K: coordinates of the input rows in the singular basis.
    DenseMatrix scores() const { return DenseMatrix(u * sigma.asDiagonal()); }
};

namespace detail {

/// Two passes of classical Gram-Schmidt against the first `count` columns.
inline void orthogonalize(Eigen::Ref<Eigen::VectorXd> x, const Eigen::MatrixXd& basis, Eigen::Index count) {
    if (count <= 0) return;
    const auto q = basis.leftCols(count);
    for (int pass = 0; pass < 2; ++pass) x.noalias() -= q * (q.transpose() * x);
}

/// Replaces x by a random unit vector orthogonal to the first `count` basis
/// columns. Used when the Krylov space hits an invariant subspace.
inline void random_orthogonal(Eigen::Ref<Eigen::VectorXd> x, const Eigen::MatrixXd& basis, Eigen::Index count,
                              Rng& rng) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
        orthogonalize(x, basis, count);
        const double nrm = x.norm();
        if (nrm > 1e-8) {
            x /= nrm;
            return;
        }
    }
    x.setZero();
}

/// Fixes signs so each left vector's largest-magnitude entry is positive.
inline void normalize_signs(TruncatedSvd& s) {
    for (Eigen::Index c = 0; c < s.u.cols(); ++c) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < s.u.rows(); ++r) {
            const double a = std::abs(s.u(r, c));
            if (a > best) {
                best = a;
                arg = r;
            }
        }
        if (s.u(arg, c) < 0.0) {
            s.u.col(c) *= -1.0;
            s.v.col(c) *= -1.0;
        }
    }
}

/// Zeroes columns whose singular value is numerically zero.
inline void truncate_rank(TruncatedSvd& s, std::size_t rows, std::size_t cols) {
    const double s0 = s.sigma.size() > 0 ? s.sigma[0] : 0.0;
    const double cutoff = s0 * static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * 8.0;
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < s.sigma.size(); ++i) {
        if (s.sigma[i] > cutoff && s0 > 0.0) {
            ++rank;
        } else {
            s.sigma[i] = 0.0;
            s.u.col(i).setZero();
            s.v.col(i).setZero();
        }
    }
    s.numerical_rank = rank;
    if (rank < static_cast<std::size_t>(s.sigma.size()))
        s.warnings.push_back("requested rank " + std::to_string(s.sigma.size()) + " exceeds numerical rank " +
                             std::to_string(rank) + "; trailing columns are zero");
}

inline void post_process(TruncatedSvd& s, std::size_t rows, std::size_t cols) {
    truncate_rank(s, rows, cols);
    normalize_signs(s);
}

/// Every wanted triplet satisfies ||A v_i - sigma_i u_i|| <= tol * sigma_1.
/// Singular values then also agree to tol between iterations, since their
/// error is quadratic in the residual.
inline bool converged_test(const Eigen::VectorXd& sv, const Eigen::VectorXd& res, std::size_t k, double tol) {
    const double s0 = std::max(sv[0], std::numeric_limits<double>::min());
    for (std::size_t i = 0; i < k; ++i)
        if (res[static_cast<Eigen::Index>(i)] > tol * s0) return false;
    return true;
}

}  // namespace detail

/// Thick-restarted Lanczos bidiagonalization.
template <LinearOperator Op>
TruncatedSvd lanczos_svd(const Op& op, const SvdOptions& opt) {
    const std::size_t rows = op.rows();
    const std::size_t cols = op.cols();
    const std::size_t k = opt.rank;
    detail::require(k >= 1, "truncated SVD: rank must be >= 1");
    detail::require(k <= std::min(rows, cols), "truncated SVD: rank exceeds min(rows, cols)");

    const auto work = static_cast<Eigen::Index>(std::min(k + opt.extra_dimensions, std::min(rows, cols)));
    const auto ki = static_cast<Eigen::Index>(k);
    Rng rng(derive_seed(opt.seed, "lanczos"));

    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cols), work);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), work);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(work, work);
    Vector F(static_cast<Eigen::Index>(cols)), wtmp(static_cast<Eigen::Index>(rows));

    for (Eigen::Index i = 0; i < V.rows(); ++i) V(i, 0) = rng.normal();
    V.col(0).normalize();

    TruncatedSvd out;
    Eigen::Index start = 0;  // number of retained Ritz vectors after a restart
    double anorm = 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> bsvd;

    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
        out.iterations = iter + 1;
        Eigen::Index j = start;

        op.apply(Vector(V.col(j)), wtmp);
        W.col(j) = wtmp;
        detail::orthogonalize(W.col(j), W, j);
        double s = W.col(j).norm();
        anorm = std::max(anorm, s);
        if (s <= 1e-12 * std::max(anorm, 1.0)) {
            detail::random_orthogonal(W.col(j), W, j, rng);
            s = 0.0;
        } else {
            W.col(j) /= s;
        }

        double r_f = 0.0;
        for (; j < work; ++j) {
            op.apply_transpose(Vector(W.col(j)), F);
            F -= s * V.col(j);
            detail::orthogonalize(F, V, j + 1);
            B(j, j) = s;
            if (j + 1 < work) {
                double r = F.norm();
                anorm = std::max(anorm, r);
                if (r <= 1e-12 * std::max(anorm, 1.0)) {
                    detail::random_orthogonal(V.col(j + 1), V, j + 1, rng);
                    r = 0.0;
                } else {
                    V.col(j + 1) = F / r;
                }
                B(j, j + 1) = r;
                op.apply(Vector(V.col(j + 1)), wtmp);
                W.col(j + 1) = wtmp - r * W.col(j);
                detail::orthogonalize(W.col(j + 1), W, j + 1);
                s = W.col(j + 1).norm();
                anorm = std::max(anorm, s);
                if (s <= 1e-12 * std::max(anorm, 1.0)) {
                    detail::random_orthogonal(W.col(j + 1), W, j + 1, rng);
                    s = 0.0;
                } else {
                    W.col(j + 1) /= s;
                }
            } else {
                r_f = F.norm();
            }
        }

        bsvd.compute(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Eigen::VectorXd sv = bsvd.singularValues();
        const Eigen::MatrixXd& ub = bsvd.matrixU();
        const Eigen::MatrixXd& vb = bsvd.matrixV();
        anorm = std::max(anorm, sv[0]);
        Eigen::VectorXd res = (r_f * ub.row(work - 1).transpose()).cwiseAbs();

        if (detail::converged_test(sv, res, k, opt.tolerance)) {
            out.converged = true;
            out.u = W * ub.leftCols(ki);
            out.v = V * vb.leftCols(ki);
            out.sigma = sv.head(ki);
            break;
        }

        if (iter + 1 == opt.max_iterations) {
            out.u = W * ub.leftCols(ki);
            out.v = V * vb.leftCols(ki);
            out.sigma = sv.head(ki);
            out.warnings.push_back("Lanczos did not converge in " + std::to_string(opt.max_iterations) +
                                   " iterations");
            break;
        }

        // Thick restart: keep `start` Ritz vectors, continue from the residual.
        start = std::min<Eigen::Index>(ki + (work - ki) / 2, work - 1);
        Eigen::MatrixXd v_keep = V * vb.leftCols(start);
        Eigen::MatrixXd w_keep = W * ub.leftCols(start);
        V.leftCols(start) = v_keep;
        W.leftCols(start) = w_keep;
        if (r_f <= 1e-12 * std::max(anorm, 1.0)) {
            detail::random_orthogonal(V.col(start), V, start, rng);
            r_f = 0.0;
        } else {
            V.col(start) = F / r_f;
        }
        B.setZero();
        for (Eigen::Index i = 0; i < start; ++i) {
            B(i, i) = sv[i];
            B(i, start) = r_f * ub(work - 1, i);
        }
    }
    detail::post_process(out, rows, cols);
    return out;
}

/// Randomized subspace iteration with oversampling, iterated until the
/// same residual test as the Lanczos backend passes.
template <LinearOperator Op>
TruncatedSvd randomized_svd(const Op& op, const SvdOptions& opt) {
    const std::size_t rows = op.rows();
    const std::size_t cols = op.cols();
    const std::size_t k = opt.rank;
    detail::require(k >= 1, "truncated SVD: rank must be >= 1");
    detail::require(k <= std::min(rows, cols), "truncated SVD: rank exceeds min(rows, cols)");
    const auto l = static_cast<Eigen::Index>(std::min(k + opt.oversampling, std::min(rows, cols)));
    const auto ki = static_cast<Eigen::Index>(k);
    Rng rng(derive_seed(opt.seed, "randomized"));

    auto apply_block = [&](const Eigen::MatrixXd& in, bool transpose) {
        Eigen::MatrixXd outm(static_cast<Eigen::Index>(transpose ? cols : rows), in.cols());
        Vector y;
        for (Eigen::Index c = 0; c < in.cols(); ++c) {
            if (transpose)
                op.apply_transpose(Vector(in.col(c)), y);
            else
                op.apply(Vector(in.col(c)), y);
            outm.col(c) = y;
        }
        return outm;
    };
    auto orthonormal = [](const Eigen::MatrixXd& m) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    };

    Eigen::MatrixXd omega(static_cast<Eigen::Index>(cols), l);
    for (Eigen::Index c = 0; c < l; ++c)
        for (Eigen::Index r = 0; r < omega.rows(); ++r) omega(r, c) = rng.normal();
    Eigen::MatrixXd q = orthonormal(apply_block(omega, false));

    TruncatedSvd out;
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
        out.iterations = iter + 1;
        // Bt = A^T Q (cols x l); A ~ Q Bt^T.
        Eigen::MatrixXd bt = apply_block(q, true);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(bt, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd sv = svd.singularValues();
        Eigen::MatrixXd u = q * svd.matrixV();
        Eigen::MatrixXd v = svd.matrixU();
        // Residual of the left relation: ||A v_i - sigma_i u_i||.
        Eigen::MatrixXd av = apply_block(v.leftCols(ki), false);
        Eigen::VectorXd res(ki);
        for (Eigen::Index i = 0; i < ki; ++i) res[i] = (av.col(i) - sv[i] * u.col(i)).norm();
        const bool exhausted = l == static_cast<Eigen::Index>(std::min(rows, cols));
        if (exhausted || detail::converged_test(sv, res, k, opt.tolerance) ||
            iter + 1 == opt.max_iterations) {
            out.converged = exhausted || detail::converged_test(sv, res, k, opt.tolerance);
            if (!out.converged)
                out.warnings.push_back("randomized SVD did not converge in " + std::to_string(opt.max_iterations) +
                                       " iterations");
            out.u = u.leftCols(ki);
            out.v = v.leftCols(ki);
            out.sigma = sv.head(ki);
            break;
        }
        q = orthonormal(apply_block(orthonormal(bt), false));
    }
    detail::post_process(out, rows, cols);
    return out;
}

template <LinearOperator Op>
TruncatedSvd truncated_svd(const Op& op, const SvdOptions& opt) {
    return opt.backend == SvdBackend::lanczos ? lanczos_svd(op, opt) : randomized_svd(op, opt);
}

template <typename T>
TruncatedSvd truncated_svd(const CsrMatrix<T>& m, const SvdOptions& opt) {
    detail::require(m.nnz() > 0, "truncated SVD: matrix has no nonzero entries");
    return truncated_svd(SparseOperator<T>(m), opt);
}

}  // namespace tinyblock
