#pragma once

// Cluster-level edge probabilities, coordinated-group flagging, elbow-based
// threshold selection and external label import.

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinyblock/graphio.hpp"
#include "tinyblock/kmeans.hpp"

namespace tinyblock {

struct GroupThresholds {
    double p_star = 0.01;
    double q_star = 0.01;
    std::size_t s_low = 10;
    std::size_t s_high = 80;
    std::size_t t_low = 10;
    std::size_t t_high = 80;

    void validate() const {
        if (!(p_star >= 0.0 && p_star <= 1.0) || !(q_star >= 0.0 && q_star <= 1.0))
            throw ConfigError("edge probability thresholds must lie in [0, 1]");
        if (s_low > s_high || t_low > t_high) throw ConfigError("size bounds must satisfy low <= high");
    }
};

struct EdgeProbability {
    double value = 0.0;
    bool defined = false;  ///< false for fewer than two members
    std::size_t internal_edges = 0;
};

/// Ordered-pair density: internal directed edges / (s * (s - 1)).
inline EdgeProbability induced_edge_probability(const SparseAdjacency& a, std::span<const Index> members) {
    std::vector<std::uint8_t> in(a.n(), 0);
    for (Index v : members) {
        detail::require(v < a.n(), "induced_edge_probability: member out of range");
        in[v] = 1;
    }
    std::size_t s = 0;
    for (auto f : in) s += f;
    EdgeProbability out;
    for (std::size_t v = 0; v < a.n(); ++v) {
        if (!in[v]) continue;
        for (Index c : a.matrix.row_indices(v)) out.internal_edges += in[c];
    }
    if (s < 2) return out;
    out.defined = true;
    out.value = static_cast<double>(out.internal_edges) / (static_cast<double>(s) * static_cast<double>(s - 1));
    return out;
}

/// Shared-attribute diagnostics for one cluster: attributes used by at least
/// two members more often than globally, and the mean in-cluster usage rate
/// over that set.
struct AttributeBlock {
    std::size_t shared_attributes = 0;
    double probability = 0.0;
};

struct ClusterStats {
    Index id = 0;
    std::size_t size = 0;
    std::size_t internal_edges = 0;
    double edge_probability = 0.0;
    bool probability_defined = false;
    bool flagged = false;
    std::size_t rank = 0;  ///< 1-based position by edge probability
    AttributeBlock attributes;
};

struct ClusterResult {
    std::vector<Index> labels;
    std::vector<ClusterStats> clusters;  ///< indexed by cluster id
    std::vector<Index> ranking;          ///< ids by edge probability desc, id asc

    std::size_t m() const noexcept { return clusters.size(); }

    std::vector<std::uint8_t> flagged_mask() const {
        std::vector<std::uint8_t> mask(labels.size(), 0);
        for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = clusters[labels[i]].flagged ? 1 : 0;
        return mask;
    }

    std::vector<std::vector<Index>> members() const {
        std::vector<std::vector<Index>> out(clusters.size());
        for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(static_cast<Index>(i));
        return out;
    }
};

inline std::size_t cluster_count(std::span<const Index> labels) {
    Index mx = 0;
    for (Index l : labels) mx = std::max(mx, l);
    return labels.empty() ? 0 : static_cast<std::size_t>(mx) + 1;
}

/// Edge probability of every cluster in one pass over the edges.
inline std::vector<EdgeProbability> cluster_edge_probabilities(const SparseAdjacency& a, std::span<const Index> labels,
                                                               std::size_t m) {
    detail::require(labels.size() == a.n(), "cluster_edge_probabilities: label count differs from node count");
    std::vector<std::size_t> size(m, 0), internal(m, 0);
    for (Index l : labels) {
        detail::require(l < m, "cluster_edge_probabilities: label out of range");
        ++size[l];
    }
    for (std::size_t r = 0; r < a.n(); ++r)
        for (Index c : a.matrix.row_indices(r))
            if (labels[r] == labels[c]) ++internal[labels[r]];
    std::vector<EdgeProbability> out(m);
    for (std::size_t c = 0; c < m; ++c) {
        out[c].internal_edges = internal[c];
        if (size[c] >= 2) {
            out[c].defined = true;
            out[c].value = static_cast<double>(internal[c]) /
                           (static_cast<double>(size[c]) * static_cast<double>(size[c] - 1));
        }
    }
    return out;
}

/// Per-cluster attribute block diagnostics from the binarized usage matrix.
inline std::vector<AttributeBlock> attribute_blocks(const AttributeMatrix& x, std::span<const Index> labels,
                                                    std::size_t m) {
    detail::require(labels.size() == x.n(), "attribute_blocks: label count differs from node count");
    std::vector<std::size_t> size(m, 0);
    for (Index l : labels) ++size[l];
    std::vector<std::size_t> global(x.d(), 0);
    std::vector<std::pair<Index, Index>> hits;  // (cluster, attribute)
    hits.reserve(x.counts.nnz());
    for (std::size_t r = 0; r < x.n(); ++r)
        for (Index j : x.counts.row_indices(r)) {
            hits.emplace_back(labels[r], j);
            ++global[j];
        }
    std::sort(hits.begin(), hits.end());
    const double n = static_cast<double>(x.n());
    std::vector<AttributeBlock> out(m);
    std::vector<double> rate_sum(m, 0.0);
    for (std::size_t k = 0; k < hits.size();) {
        std::size_t e = k;
        while (e < hits.size() && hits[e] == hits[k]) ++e;
        const auto [c, j] = hits[k];
        const double used = static_cast<double>(e - k);
        const double local = used / static_cast<double>(size[c]);
        if (e - k >= 2 && local > static_cast<double>(global[j]) / n) {
            ++out[c].shared_attributes;
            rate_sum[c] += local;
        }
        k = e;
    }
    for (std::size_t c = 0; c < m; ++c)
        if (out[c].shared_attributes > 0) out[c].probability = rate_sum[c] / static_cast<double>(out[c].shared_attributes);
    return out;
}

/// Flags a cluster iff its edge probability reaches p_star and, when
/// check_sizes is set, its size lies within [s_low, s_high]. Attribute-side
/// conditions are reported (when an attribute matrix is given) but never gate.
inline ClusterResult flag_groups(std::vector<Index> labels, const SparseAdjacency& a, const GroupThresholds& t,
                                 bool check_sizes, const AttributeMatrix* x = nullptr, std::size_t m = 0) {
    t.validate();
    if (m == 0) m = cluster_count(labels);
    const auto probs = cluster_edge_probabilities(a, labels, m);
    std::vector<AttributeBlock> blocks;
    if (x) blocks = attribute_blocks(binarize(*x), labels, m);
    ClusterResult res;
    res.clusters.resize(m);
    for (Index l : labels) ++res.clusters[l].size;
    for (std::size_t c = 0; c < m; ++c) {
        auto& s = res.clusters[c];
        s.id = static_cast<Index>(c);
        s.internal_edges = probs[c].internal_edges;
        s.edge_probability = probs[c].value;
        s.probability_defined = probs[c].defined;
        s.flagged = s.size > 0 && s.edge_probability >= t.p_star &&
                    (!check_sizes || (s.size >= t.s_low && s.size <= t.s_high));
        if (x) s.attributes = blocks[c];
    }
    res.ranking.resize(m);
    for (std::size_t c = 0; c < m; ++c) res.ranking[c] = static_cast<Index>(c);
    std::stable_sort(res.ranking.begin(), res.ranking.end(), [&](Index l, Index r) {
        return res.clusters[l].edge_probability > res.clusters[r].edge_probability;
    });
    for (std::size_t pos = 0; pos < m; ++pos) res.clusters[res.ranking[pos]].rank = pos + 1;
    res.labels = std::move(labels);
    return res;
}

struct ElbowResult {
    double p_star = 0.0;
    std::size_t index = 0;
    bool clear = true;
    std::string warning;
};

/// Kneedle-style elbow on a descending density curve: the point of maximum
/// perpendicular distance from the chord joining the first and last points.
/// Ties go to the earlier (larger-density) point.
inline ElbowResult elbow_select(std::span<const double> densities) {
    if (densities.size() < 3)
        throw ContractError("elbow_select: need at least 3 clusters; set p_star manually");
    for (std::size_t i = 1; i < densities.size(); ++i)
        if (densities[i] > densities[i - 1]) throw ContractError("elbow_select: densities must be sorted descending");
    const double x1 = static_cast<double>(densities.size() - 1);
    const double y0 = densities.front(), y1 = densities.back();
    const double norm = std::hypot(x1, y1 - y0);
    std::vector<double> dist(densities.size());
    double best = -1.0;
    for (std::size_t i = 0; i < densities.size(); ++i) {
        const double x = static_cast<double>(i);
        dist[i] = std::abs((y1 - y0) * x - x1 * (densities[i] - y0)) / norm;
        best = std::max(best, dist[i]);
    }
    const double scale = std::max({std::abs(y0), std::abs(y1), 1e-300});
    const double tie = 1e-9 * scale;
    ElbowResult out;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (dist[i] >= best - tie) {
            out.index = i;
            break;
        }
    out.p_star = densities[out.index];
    if (best <= tie) {
        out.clear = false;
        out.warning = "no clear elbow: density curve is linear";
    }
    return out;
}

struct ExternalLabels {
    std::vector<Index> labels;
    std::size_t m = 0;
    std::size_t noise = 0;
    std::optional<std::int64_t> background_label;  ///< original label noise was merged into
};

/// Reads `node label` lines. Labels are arbitrary integers; -1 marks noise,
/// which joins the largest non-noise cluster (the background). Original
/// labels are renumbered densely in ascending order.
inline ExternalLabels import_external_labels(std::istream& in, const IdMap& ids) {
    std::vector<std::optional<std::int64_t>> raw(ids.size());
    std::string line;
    std::vector<std::string_view> tok;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::tokenize(line, tok)) continue;
        if (tok.size() != 2) throw ParseError("expected `node label`", lineno);
        const auto lab = detail::parse_integer<std::int64_t>(tok[1]);
        if (!lab || *lab < -1) throw ParseError("label must be an integer >= -1", lineno);
        const auto node = ids.find(tok[0]);
        if (!node) continue;
        raw[*node] = *lab;
    }
    std::vector<std::string> absent;
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (!raw[i]) absent.push_back(ids.name(static_cast<Index>(i)));
    if (!absent.empty()) {
        std::string msg = "external labels missing for " + std::to_string(absent.size()) + " node(s):";
        for (std::size_t i = 0; i < std::min<std::size_t>(absent.size(), 20); ++i) msg += " " + absent[i];
        if (absent.size() > 20) msg += " ...";
        throw ContractError(msg);
    }
    std::map<std::int64_t, std::size_t> sizes;
    ExternalLabels out;
    for (const auto& r : raw) {
        if (*r == -1)
            ++out.noise;
        else
            ++sizes[*r];
    }
    std::map<std::int64_t, Index> dense;
    for (const auto& [lab, sz] : sizes) dense.emplace(lab, static_cast<Index>(dense.size()));
    Index background = 0;
    if (!sizes.empty()) {
        auto big = sizes.begin();
        for (auto it = sizes.begin(); it != sizes.end(); ++it)
            if (it->second > big->second) big = it;
        background = dense.at(big->first);
        out.background_label = big->first;
    }
    out.m = std::max<std::size_t>(1, dense.size());
    out.labels.reserve(raw.size());
    for (const auto& r : raw) out.labels.push_back(*r == -1 ? background : dense.at(*r));
    return out;
}

inline nlohmann::ordered_json to_json(const ClusterResult& r) {
    auto arr = nlohmann::ordered_json::array();
    for (Index id : r.ranking) {
        const auto& c = r.clusters[id];
        nlohmann::ordered_json j;
        j["cluster_id"] = c.id;
        j["size"] = c.size;
        j["edge_probability"] = c.edge_probability;
        j["flagged"] = c.flagged;
        j["rank"] = c.rank;
        j["internal_edges"] = c.internal_edges;
        j["shared_attributes"] = c.attributes.shared_attributes;
        j["attribute_probability"] = c.attributes.probability;
        arr.push_back(std::move(j));
    }
    return arr;
}

}  // namespace tinyblock
