#pragma once

// Detection scoring: partition Quality, coordinated-node F1 under the
// cumulative condition protocol, and the suspension / bot-influence indices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinyblock/flag.hpp"
#include "tinyblock/graphio.hpp"

namespace tinyblock {

struct QualityScore {
    double fraction = 0.0;
    double percent = 0.0;
};

namespace detail {

inline std::vector<Index> compact_labels(std::span<const std::int64_t> raw, std::size_t& count) {
    std::unordered_map<std::int64_t, Index> dense;
    std::vector<Index> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto [it, fresh] = dense.emplace(raw[i], static_cast<Index>(dense.size()));
        out[i] = it->second;
    }
    count = dense.size();
    return out;
}

template <class L>
std::vector<std::int64_t> widen(std::span<const L> v) {
    return {v.begin(), v.end()};
}

}  // namespace detail

/// Q = (1/k) sum_i max_j J(U_i, V_j) over truth clusters U_i and inferred
/// clusters V_j, both given as per-node label vectors.
template <class LT, class LI>
QualityScore quality_score(std::span<const LT> truth, std::span<const LI> inferred) {
    if (truth.empty()) throw ContractError("quality_score: empty partition");
    detail::require(truth.size() == inferred.size(), "quality_score: partitions cover different node counts");
    std::size_t k = 0, s = 0;
    const auto wt = detail::widen(truth);
    const auto wi = detail::widen(inferred);
    const auto t = detail::compact_labels(wt, k);
    const auto p = detail::compact_labels(wi, s);
    std::vector<std::size_t> tsize(k, 0), psize(s, 0);
    for (Index l : t) ++tsize[l];
    for (Index l : p) ++psize[l];
    std::unordered_map<std::uint64_t, std::size_t> inter;
    for (std::size_t i = 0; i < t.size(); ++i) ++inter[(static_cast<std::uint64_t>(t[i]) << 32) | p[i]];
    std::vector<double> best(k, 0.0);
    for (const auto& [key, c] : inter) {
        const auto ti = static_cast<std::size_t>(key >> 32);
        const auto pj = static_cast<std::size_t>(key & 0xffffffffULL);
        const double jac = static_cast<double>(c) / static_cast<double>(tsize[ti] + psize[pj] - c);
        best[ti] = std::max(best[ti], jac);
    }
    double sum = 0.0;
    for (double b : best) sum += b;
    QualityScore q;
    q.fraction = sum / static_cast<double>(k);
    q.percent = 100.0 * q.fraction;
    return q;
}

inline QualityScore quality_score(const std::vector<Index>& truth, const std::vector<Index>& inferred) {
    return quality_score<Index, Index>(truth, inferred);
}

/// Binary F1 in percent; positives are nonzero entries.
inline double binary_f1(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred) {
    detail::require(truth.size() == pred.size(), "binary_f1: length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] != 0, p = pred[i] != 0;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
    }
    if (tp == 0) return 0.0;
    return 100.0 * 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

struct F1Report {
    double f1 = 0.0;                ///< best over the stages, percent
    std::vector<double> per_stage;  ///< edge probability; + size; + attribute conditions (when evaluated)
    std::size_t best_stage = 0;     ///< 1-based
    std::string warning;
};

/// Stage 3 attribute test on one cluster.
inline bool attribute_conditions(const AttributeBlock& b, const GroupThresholds& t) {
    return b.shared_attributes >= t.t_low && b.shared_attributes <= t.t_high && b.probability >= t.q_star;
}

/// Cumulative labelings: (1) p-hat >= p*, (2) and s_l <= size <= s_h,
/// (3) and the attribute conditions. Stage 3 is skipped when x is null.
inline F1Report coordinated_f1(std::span<const std::uint8_t> truth, std::span<const Index> labels,
                               const SparseAdjacency& a, const AttributeMatrix* x, const GroupThresholds& t) {
    detail::require(truth.size() == labels.size(), "coordinated_f1: truth and labels differ in length");
    t.validate();
    F1Report rep;
    if (std::none_of(truth.begin(), truth.end(), [](std::uint8_t v) { return v != 0; })) {
        rep.warning = "truth has no coordinated nodes; F1 is 0";
        rep.per_stage.assign(x ? 3 : 2, 0.0);
        rep.best_stage = 1;
        return rep;
    }
    const std::size_t m = cluster_count(labels);
    const auto probs = cluster_edge_probabilities(a, labels, m);
    std::vector<std::size_t> size(m, 0);
    for (Index l : labels) ++size[l];
    std::vector<std::uint8_t> pass(m);
    for (std::size_t c = 0; c < m; ++c) pass[c] = size[c] > 0 && probs[c].value >= t.p_star;

    auto score = [&] {
        std::vector<std::uint8_t> pred(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) pred[i] = pass[labels[i]];
        return binary_f1(truth, pred);
    };
    rep.per_stage.push_back(score());
    for (std::size_t c = 0; c < m; ++c) pass[c] = pass[c] && size[c] >= t.s_low && size[c] <= t.s_high;
    rep.per_stage.push_back(score());
    if (x) {
        const auto blocks = attribute_blocks(binarize(*x), labels, m);
        for (std::size_t c = 0; c < m; ++c) pass[c] = pass[c] && attribute_conditions(blocks[c], t);
        rep.per_stage.push_back(score());
    }
    const auto best = std::max_element(rep.per_stage.begin(), rep.per_stage.end());
    rep.f1 = *best;
    rep.best_stage = static_cast<std::size_t>(best - rep.per_stage.begin()) + 1;
    return rep;
}

/// (suspension rate within members) / (global suspension rate).
inline double suspension_index(std::span<const std::uint8_t> s, std::span<const Index> members) {
    if (members.empty()) throw ContractError("suspension_index: empty member set");
    std::size_t total = 0;
    for (auto v : s) total += v != 0;
    if (total == 0) throw ContractError("suspension_index: undefined, global suspension rate is zero");
    std::size_t in = 0;
    for (Index i : members) {
        detail::require(i < s.size(), "suspension_index: member out of range");
        in += s[i] != 0;
    }
    const double local = static_cast<double>(in) / static_cast<double>(members.size());
    const double global = static_cast<double>(total) / static_cast<double>(s.size());
    return local / global;
}

/// mean over members of b_i * ln(1 + f_i).
template <class F>
double bot_influence_index(std::span<const double> bot, std::span<const F> followers, std::span<const Index> members) {
    if (members.empty()) throw ContractError("bot_influence_index: empty member set");
    detail::require(bot.size() == followers.size(), "bot_influence_index: score and follower vectors differ in length");
    double sum = 0.0;
    for (Index i : members) {
        detail::require(i < bot.size(), "bot_influence_index: member out of range");
        if (!(followers[i] >= 0)) throw ContractError("bot_influence_index: negative follower count");
        sum += bot[i] * std::log1p(static_cast<double>(followers[i]));
    }
    return sum / static_cast<double>(members.size());
}

inline double bot_influence_index(std::span<const double> bot, const std::vector<std::int64_t>& followers,
                                  std::span<const Index> members) {
    return bot_influence_index<std::int64_t>(bot, followers, members);
}

inline double bot_influence_index(std::span<const double> bot, const std::vector<double>& followers,
                                  std::span<const Index> members) {
    return bot_influence_index<double>(bot, followers, members);
}

// ---------------------------------------------------------------------------
// Side-data ingestion.

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Calls row(node index, fields, line number) for each data row whose node
/// is in `ids`; returns the number of rows naming unknown nodes.
template <class F>
std::size_t for_each_csv_row(std::istream& in, const IdMap& ids, std::size_t fields, F&& row) {
    std::string line;
    std::size_t lineno = 0, unknown = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r" || line.front() == '#') continue;
        const auto f = split_csv(line);
        if (first) {
            first = false;
            if (!f.empty() && f[0] == "node") continue;
        }
        if (f.size() != fields) throw ParseError("expected " + std::to_string(fields) + " comma-separated fields", lineno);
        const auto node = ids.find(f[0]);
        if (!node) {
            ++unknown;
            continue;
        }
        row(*node, f, lineno);
    }
    return unknown;
}

}  // namespace detail

struct SuspensionData {
    std::vector<std::uint8_t> suspended;  ///< nodes absent from the file count as not suspended
    std::size_t missing = 0;
    std::size_t unknown = 0;
};

/// CSV `node,suspended` with 0/1 values; a leading header row is optional.
inline SuspensionData read_suspensions(std::istream& in, const IdMap& ids) {
    SuspensionData d;
    d.suspended.assign(ids.size(), 0);
    std::vector<std::uint8_t> seen(ids.size(), 0);
    d.unknown = detail::for_each_csv_row(in, ids, 2, [&](Index i, const auto& f, std::size_t lineno) {
        if (f[1] != "0" && f[1] != "1") throw ParseError("suspended must be 0 or 1", lineno);
        d.suspended[i] = f[1] == "1";
        seen[i] = 1;
    });
    for (auto s : seen) d.missing += !s;
    return d;
}

struct BotData {
    std::vector<double> bot_score;
    std::vector<std::int64_t> followers;
    std::size_t missing = 0;
    std::size_t unknown = 0;
};

/// CSV `node,bot_score,followers`. Missing nodes get score 0 and 0 followers.
inline BotData read_bot_scores(std::istream& in, const IdMap& ids) {
    BotData d;
    d.bot_score.assign(ids.size(), 0.0);
    d.followers.assign(ids.size(), 0);
    std::vector<std::uint8_t> seen(ids.size(), 0);
    d.unknown = detail::for_each_csv_row(in, ids, 3, [&](Index i, const auto& f, std::size_t lineno) {
        double b = 0.0;
        try {
            std::size_t used = 0;
            b = std::stod(std::string(f[1]), &used);
            if (used != f[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError("bot_score is not a number", lineno);
        }
        if (!std::isfinite(b)) throw ParseError("bot_score must be finite", lineno);
        const auto fol = detail::parse_integer<std::int64_t>(f[2]);
        if (!fol) throw ParseError("followers is not an integer", lineno);
        if (*fol < 0) throw ParseError("negative follower count", lineno);
        d.bot_score[i] = b;
        d.followers[i] = *fol;
        seen[i] = 1;
    });
    for (auto s : seen) d.missing += !s;
    return d;
}

struct TruthLabels {
    std::vector<std::int64_t> group;          ///< per node of `ids`
    std::vector<std::uint8_t> coordinated;    ///< group != 0
};

/// `node group` lines; group 0 is the background. Every node of `ids` must
/// appear.
inline TruthLabels read_truth_labels(std::istream& in, const IdMap& ids) {
    std::vector<std::optional<std::int64_t>> raw(ids.size());
    std::string line;
    std::vector<std::string_view> tok;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::tokenize(line, tok)) continue;
        if (tok.size() != 2) throw ParseError("expected `node group`", lineno);
        const auto g = detail::parse_integer<std::int64_t>(tok[1]);
        if (!g || *g < 0) throw ParseError("group must be a nonnegative integer", lineno);
        if (auto node = ids.find(tok[0])) raw[*node] = *g;
    }
    TruthLabels out;
    out.group.reserve(raw.size());
    std::size_t absent = 0;
    for (const auto& r : raw) {
        absent += !r;
        out.group.push_back(r.value_or(0));
    }
    if (absent) throw ContractError("truth labels missing for " + std::to_string(absent) + " node(s)");
    out.coordinated.reserve(raw.size());
    for (auto g : out.group) out.coordinated.push_back(g != 0);
    return out;
}

struct MetricReport {
    std::optional<QualityScore> quality;
    std::optional<F1Report> f1;
    std::optional<double> suspension_index;
    std::optional<double> bot_influence_index;
};

/// Percent scale for quality and F1; absent metrics are null.
inline nlohmann::ordered_json to_json(const MetricReport& m) {
    using J = nlohmann::ordered_json;
    J j;
    j["quality"] = m.quality ? J(m.quality->percent) : J(nullptr);
    j["f1"] = m.f1 ? J(m.f1->f1) : J(nullptr);
    j["per_stage_f1"] = m.f1 ? J(m.f1->per_stage) : J::array();
    j["suspension_index"] = m.suspension_index ? J(*m.suspension_index) : J(nullptr);
    j["bot_influence_index"] = m.bot_influence_index ? J(*m.bot_influence_index) : J(nullptr);
    return j;
}

}  // namespace tinyblock
