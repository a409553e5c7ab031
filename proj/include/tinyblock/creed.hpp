#pragma once

// Group creeds (local-vs-global attribute usage discrepancy), attribute
// significance, and individual/cluster engagement scores.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinyblock/graphio.hpp"

namespace tinyblock {

/// Mean TF-IDF weight of each attribute over all users.
inline std::vector<double> attribute_significance(const TfidfMatrix& xs) {
    const auto& m = xs.values;
    detail::require(m.rows() > 0, "attribute_significance: empty matrix");
    std::vector<double> score(m.cols(), 0.0);
    const auto& idx = m.col_idx();
    const auto& val = m.values();
    for (std::size_t k = 0; k < idx.size(); ++k) score[idx[k]] += val[k];
    for (auto& s : score) s /= static_cast<double>(m.rows());
    return score;
}

struct SignificantSets {
    std::vector<Index> top;      ///< top-k attributes by score (J_S), best first
    std::vector<Index> matched;  ///< members of `top` matching a seed name case-insensitively (J_C)
};

namespace detail {

inline std::string fold_case(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace detail

/// Ties in score are broken by attribute name.
inline SignificantSets significant_set(std::span<const double> scores, const IdMap& attributes, std::size_t top_k,
                                       const std::vector<std::string>& seed_names = {}) {
    detail::require(scores.size() == attributes.size(), "significant_set: score count differs from attribute count");
    detail::require(top_k <= scores.size(), "significant_set: top_k exceeds attribute count");
    std::vector<Index> order(scores.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<Index>(j);
    auto better = [&](Index a, Index b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return attributes.name(a) < attributes.name(b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k), order.end(), better);
    SignificantSets out;
    out.top.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k));
    std::unordered_set<std::string> seeds;
    for (const auto& s : seed_names) seeds.insert(detail::fold_case(s));
    for (Index j : out.top)
        if (seeds.contains(detail::fold_case(attributes.name(j)))) out.matched.push_back(j);
    return out;
}

struct CreedEntry {
    Index attribute = 0;
    double phi = 0.0;
};

struct CreedRanking {
    Index cluster = 0;
    std::vector<CreedEntry> ranking;  ///< phi descending, ties by name
    std::optional<Index> creed;
    bool restricted = false;
    std::string warning;
};

/// Global usage totals over an attribute restriction, computed once and
/// shared by every cluster.
class CreedContext {
public:
    /// An empty `restrict` means all attributes.
    CreedContext(const AttributeMatrix& x, std::vector<Index> restrict = {}, bool binary = false)
        : x_(&x), binary_(binary), restricted_(!restrict.empty()), position_(x.d(), -1) {
        if (restrict.empty()) {
            restrict.resize(x.d());
            for (std::size_t j = 0; j < x.d(); ++j) restrict[j] = static_cast<Index>(j);
        }
        attrs_ = std::move(restrict);
        for (std::size_t p = 0; p < attrs_.size(); ++p) {
            detail::require(attrs_[p] < x.d(), "CreedContext: restricted attribute out of range");
            position_[attrs_[p]] = static_cast<std::int64_t>(p);
        }
        global_.assign(attrs_.size(), 0.0);
        for (std::size_t r = 0; r < x.n(); ++r) accumulate(static_cast<Index>(r), global_);
        global_total_ = 0.0;
        for (double g : global_) global_total_ += g;
    }

    /// phi(j) = local share of j within members - global share of j.
    CreedRanking rank(std::span<const Index> members, Index cluster = 0,
                      std::size_t keep = std::numeric_limits<std::size_t>::max()) const {
        detail::require(!members.empty(), "group_creed: empty member set");
        CreedRanking out;
        out.cluster = cluster;
        out.restricted = restricted_;
        std::vector<double> local(attrs_.size(), 0.0);
        for (Index r : members) {
            detail::require(r < x_->n(), "group_creed: member out of range");
            accumulate(r, local);
        }
        double local_total = 0.0;
        for (double l : local) local_total += l;
        if (local_total <= 0.0 || global_total_ <= 0.0) {
            out.warning = "cluster has no usage of the restricted attributes";
            return out;
        }
        out.ranking.resize(attrs_.size());
        for (std::size_t p = 0; p < attrs_.size(); ++p)
            out.ranking[p] = {attrs_[p], local[p] / local_total - global_[p] / global_total_};
        const auto& names = x_->attributes;
        auto better = [&](const CreedEntry& a, const CreedEntry& b) {
            if (a.phi != b.phi) return a.phi > b.phi;
            return names.name(a.attribute) < names.name(b.attribute);
        };
        if (keep < out.ranking.size()) {
            std::partial_sort(out.ranking.begin(), out.ranking.begin() + static_cast<std::ptrdiff_t>(keep),
                              out.ranking.end(), better);
            out.ranking.resize(keep);
        } else {
            std::sort(out.ranking.begin(), out.ranking.end(), better);
        }
        if (!out.ranking.empty()) out.creed = out.ranking.front().attribute;
        return out;
    }

    const std::vector<Index>& attributes() const noexcept { return attrs_; }

private:
    void accumulate(Index r, std::vector<double>& into) const {
        const auto idx = x_->counts.row_indices(r);
        const auto val = x_->counts.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto p = position_[idx[k]];
            if (p >= 0) into[static_cast<std::size_t>(p)] += binary_ ? 1.0 : static_cast<double>(val[k]);
        }
    }

    const AttributeMatrix* x_;
    bool binary_;
    bool restricted_;
    std::vector<std::int64_t> position_;
    std::vector<Index> attrs_;
    std::vector<double> global_;
    double global_total_ = 0.0;
};

inline CreedRanking group_creed(const AttributeMatrix& x, std::span<const Index> members,
                                std::vector<Index> restrict = {}, bool binary = false) {
    return CreedContext(x, std::move(restrict), binary).rank(members);
}

/// f_e(i) = |{j in jc : X^b_ij = 1}| / |jc|.
inline std::vector<double> individual_engagement(const AttributeMatrix& x, std::span<const Index> jc) {
    if (jc.empty()) throw ContractError("individual_engagement: attribute set is empty");
    std::vector<std::uint8_t> in(x.d(), 0);
    for (Index j : jc) {
        detail::require(j < x.d(), "individual_engagement: attribute out of range");
        in[j] = 1;
    }
    std::size_t size = 0;
    for (auto f : in) size += f;
    std::vector<double> fe(x.n(), 0.0);
    for (std::size_t r = 0; r < x.n(); ++r) {
        std::size_t used = 0;
        const auto idx = x.counts.row_indices(r);
        const auto val = x.counts.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) used += (in[idx[k]] && val[k] > 0) ? 1 : 0;
        fe[r] = static_cast<double>(used) / static_cast<double>(size);
    }
    return fe;
}

/// f_E = ln|members| * mean(f_e over members).
inline double cluster_engagement(std::span<const double> fe, std::span<const Index> members) {
    if (members.empty()) throw ContractError("cluster_engagement: empty member set");
    double sum = 0.0;
    for (Index i : members) {
        detail::require(i < fe.size(), "cluster_engagement: member out of range");
        sum += fe[i];
    }
    const double s = static_cast<double>(members.size());
    return std::log(s) * (sum / s);
}

inline nlohmann::ordered_json to_json(const CreedRanking& c, const IdMap& attributes, std::size_t top_k,
                                      std::optional<double> engagement) {
    nlohmann::ordered_json j;
    j["cluster_id"] = c.cluster;
    j["creed"] = c.creed ? nlohmann::ordered_json(attributes.name(*c.creed)) : nlohmann::ordered_json(nullptr);
    auto top = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < std::min(top_k, c.ranking.size()); ++i) {
        nlohmann::ordered_json e;
        e["name"] = attributes.name(c.ranking[i].attribute);
        e["phi"] = c.ranking[i].phi;
        top.push_back(std::move(e));
    }
    j["top_k_attributes"] = std::move(top);
    j["engagement"] = engagement ? nlohmann::ordered_json(*engagement) : nlohmann::ordered_json(nullptr);
    return j;
}

}  // namespace tinyblock
