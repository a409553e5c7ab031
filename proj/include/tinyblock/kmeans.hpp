#pragma once

// Minibatch k-means (Sculley's per-center learning-rate update) with
// k-means++ seeding, optional full-batch Lloyd refinement and several
// restarts.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tinyblock/error.hpp"
#include "tinyblock/parallel.hpp"
#include "tinyblock/random.hpp"
#include "tinyblock/sparse.hpp"

namespace tinyblock {

struct KMeansOptions {
    std::size_t clusters = 9;
    std::size_t batch = 1024;
    std::size_t epochs = 100;  ///< minibatch steps = epochs * ceil(n / batch)
    std::size_t restarts = 3;
    std::size_t refine_epochs = 0;
    std::size_t max_no_improvement = 10;  ///< 0 disables early stopping
    std::uint64_t seed = 0;
};

struct KMeansResult {
    std::vector<Index> labels;
    DenseMatrix centers;
    double inertia = 0.0;
    std::size_t steps = 0;
    std::size_t reseeded = 0;
    /// Objective after each full assignment pass: index 0 follows the
    /// minibatch phase, one more entry per refinement epoch.
    std::vector<double> objective;
};

namespace detail {

inline double sq_dist(const DenseMatrix& a, Eigen::Index i, const DenseMatrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

inline Index nearest(const DenseMatrix& z, Eigen::Index i, const DenseMatrix& c, double* dist = nullptr) {
    Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
        const double d = sq_dist(z, i, c, k);
        if (d < bd) {
            bd = d;
            best = static_cast<Index>(k);
        }
    }
    if (dist) *dist = bd;
    return best;
}

inline DenseMatrix kmeanspp_seed(const DenseMatrix& z, std::size_t m, Rng& rng) {
    const auto n = z.rows();
    DenseMatrix centers(static_cast<Eigen::Index>(m), z.cols());
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    Eigen::Index pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    for (std::size_t c = 0; c < m; ++c) {
        centers.row(static_cast<Eigen::Index>(c)) = z.row(pick);
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = sq_dist(z, i, centers, static_cast<Eigen::Index>(c));
            auto& slot = d2[static_cast<std::size_t>(i)];
            slot = std::min(slot, d);
            total += slot;
        }
        if (c + 1 == m) break;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            continue;
        }
        double target = rng.uniform() * total;
        pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            target -= d2[static_cast<std::size_t>(i)];
            if (target < 0.0) {
                pick = i;
                break;
            }
        }
    }
    return centers;
}

/// Assigns every row; returns the objective. Empty clusters are re-seeded
/// to the point farthest from its assigned center until none remain.
inline double assign_all(const DenseMatrix& z, DenseMatrix& centers, std::vector<Index>& labels,
                         std::size_t& reseeded) {
    const auto n = static_cast<std::size_t>(z.rows());
    std::vector<double> dist(n);
    labels.resize(n);
    parallel_rows(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) labels[i] = nearest(z, static_cast<Eigen::Index>(i), centers, &dist[i]);
    }, 512);
    const auto m = static_cast<std::size_t>(centers.rows());
    for (std::size_t guard = 0; guard < m; ++guard) {
        std::vector<std::size_t> size(m, 0);
        for (Index l : labels) ++size[l];
        const auto empty = std::find(size.begin(), size.end(), std::size_t{0});
        if (empty == size.end()) break;
        // Farthest point whose own cluster keeps at least one other member.
        std::size_t far = n;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i)
            if (size[labels[i]] > 1 && dist[i] > fd) {
                fd = dist[i];
                far = i;
            }
        if (far == n) break;
        const auto c = static_cast<Index>(empty - size.begin());
        centers.row(c) = z.row(static_cast<Eigen::Index>(far));
        labels[far] = c;
        dist[far] = 0.0;
        ++reseeded;
    }
    double total = 0.0;
    for (double d : dist) total += d;
    return total;
}

inline void recompute_centers(const DenseMatrix& z, const std::vector<Index>& labels, DenseMatrix& centers) {
    DenseMatrix sum = DenseMatrix::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> count(static_cast<std::size_t>(centers.rows()), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        sum.row(labels[i]) += z.row(static_cast<Eigen::Index>(i));
        ++count[labels[i]];
    }
    for (Eigen::Index c = 0; c < centers.rows(); ++c)
        if (count[static_cast<std::size_t>(c)] > 0)
            centers.row(c) = sum.row(c) / static_cast<double>(count[static_cast<std::size_t>(c)]);
}

inline KMeansResult minibatch_once(const DenseMatrix& z, const KMeansOptions& opt, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(z.rows());
    Rng rng(seed);
    KMeansResult res;
    res.centers = kmeanspp_seed(z, opt.clusters, rng);

    const std::size_t batch = std::min(opt.batch, n);
    const std::size_t steps = opt.epochs * ((n + batch - 1) / batch);
    std::vector<double> counts(opt.clusters, 0.0);
    std::vector<Eigen::Index> members(batch);
    std::vector<Index> nearest_of(batch);
    const double alpha = std::min(1.0, 2.0 * static_cast<double>(batch) / static_cast<double>(n + 1));
    double ewa = -1.0, ewa_min = std::numeric_limits<double>::infinity();
    std::size_t no_improvement = 0;

    for (std::size_t step = 0; step < steps; ++step) {
        res.steps = step + 1;
        for (auto& idx : members) idx = static_cast<Eigen::Index>(rng.below(n));
        double batch_inertia = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            double d = 0.0;
            nearest_of[b] = nearest(z, members[b], res.centers, &d);
            batch_inertia += d;
        }
        for (std::size_t b = 0; b < batch; ++b) {
            const Index c = nearest_of[b];
            counts[c] += 1.0;
            const double eta = 1.0 / counts[c];
            res.centers.row(c) = (1.0 - eta) * res.centers.row(c) + eta * z.row(members[b]);
        }
        if (opt.max_no_improvement == 0) continue;
        batch_inertia /= static_cast<double>(batch);
        ewa = ewa < 0.0 ? batch_inertia : ewa * (1.0 - alpha) + batch_inertia * alpha;
        if (ewa < ewa_min) {
            ewa_min = ewa;
            no_improvement = 0;
        } else if (++no_improvement >= opt.max_no_improvement) {
            break;
        }
    }

    res.inertia = assign_all(z, res.centers, res.labels, res.reseeded);
    res.objective.push_back(res.inertia);
    for (std::size_t e = 0; e < opt.refine_epochs; ++e) {
        recompute_centers(z, res.labels, res.centers);
        res.inertia = assign_all(z, res.centers, res.labels, res.reseeded);
        res.objective.push_back(res.inertia);
    }
    return res;
}

}  // namespace detail

/// Deterministic given opt.seed. The restart with the lowest objective wins.
inline KMeansResult minibatch_kmeans(const DenseMatrix& z, const KMeansOptions& opt) {
    const auto n = static_cast<std::size_t>(z.rows());
    if (opt.clusters < 2) throw ContractError("minibatch_kmeans: need at least 2 clusters");
    if (opt.clusters > n)
        throw ContractError("minibatch_kmeans: " + std::to_string(opt.clusters) + " clusters requested for " +
                            std::to_string(n) + " points");
    if (opt.batch == 0) throw ContractError("minibatch_kmeans: batch size must be positive");
    KMeansResult best;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, opt.restarts); ++r) {
        auto res = detail::minibatch_once(z, opt, derive_seed(opt.seed, "kmeans.restart", r));
        if (r == 0 || res.inertia < best.inertia) best = std::move(res);
    }
    return best;
}

}  // namespace tinyblock
