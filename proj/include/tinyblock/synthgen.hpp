#pragma once

// Coupled Bernoulli block model: an adjacency SBM and a user-attribute SBM
// sharing node-group affiliations, with planted tiny coordinated groups.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tinyblock/graphio.hpp"
#include "tinyblock/random.hpp"

namespace tinyblock {

struct GeneratorConfig {
    std::size_t n = 2000;
    std::size_t d = 2000;
    /// Sizes of the planted groups; the background group takes the remaining
    /// n - sum nodes and comes last.
    std::vector<std::size_t> planted_sizes = std::vector<std::size_t>(8, 20);
    Eigen::MatrixXd p;  ///< g x g edge probabilities (g = planted groups + 1)
    Eigen::MatrixXd q;  ///< g x m attribute probabilities; the last column is the global attribute group
    std::size_t attribute_group_size = 40;
    bool symmetric = false;
    std::uint64_t seed = 0;

    std::size_t groups() const noexcept { return planted_sizes.size() + 1; }
    std::size_t attribute_groups() const noexcept { return static_cast<std::size_t>(q.cols()); }

    std::vector<std::size_t> group_sizes() const {
        auto s = planted_sizes;
        std::size_t planted = 0;
        for (auto v : planted_sizes) planted += v;
        s.push_back(n >= planted ? n - planted : 0);
        return s;
    }

    /// Eight planted groups of 20 nodes, P_kk = 0.025, P_kk' = 0.015,
    /// P_k9 = P_9k = 0.01, P_99 = 0.005; Q_ll = 0.025, otherwise 0.005.
    static GeneratorConfig planted_default(std::size_t n, std::size_t d, std::uint64_t seed = 0) {
        GeneratorConfig c;
        c.n = n;
        c.d = d;
        c.seed = seed;
        constexpr Eigen::Index g = 9;
        c.p = Eigen::MatrixXd::Constant(g, g, 0.015);
        for (Eigen::Index k = 0; k < g - 1; ++k) {
            c.p(k, k) = 0.025;
            c.p(k, g - 1) = 0.01;
            c.p(g - 1, k) = 0.01;
        }
        c.p(g - 1, g - 1) = 0.005;
        c.q = Eigen::MatrixXd::Constant(g, g, 0.005);
        for (Eigen::Index l = 0; l < g - 1; ++l) c.q(l, l) = 0.025;
        return c;
    }

    void validate() const {
        const auto g = static_cast<Eigen::Index>(groups());
        if (p.rows() != g || p.cols() != g) throw ConfigError("P must be g x g with g = planted groups + 1");
        if (q.rows() != g || q.cols() < 1) throw ConfigError("Q must have one row per node group");
        if ((p.array() < 0.0).any() || (p.array() > 1.0).any() || (q.array() < 0.0).any() || (q.array() > 1.0).any())
            throw ConfigError("P and Q entries must lie in [0, 1]");
        std::size_t planted = 0;
        for (auto v : planted_sizes) planted += v;
        if (planted > n) throw ConfigError("planted group sizes exceed n");
        if (attribute_group_size > d && q.cols() > 1) throw ConfigError("attribute group size exceeds d");
        if (symmetric && !p.isApprox(p.transpose(), 0.0)) throw ConfigError("symmetric mode requires symmetric P");
    }
};

struct GroundTruth {
    std::vector<Index> node_group;          ///< 0 = background, 1..g-1 = planted group
    std::vector<std::uint8_t> coordinated;  ///< 1 iff in a planted group
    std::vector<std::vector<Index>> attribute_groups;  ///< J_1..J_{m-1}, sorted
};

struct SyntheticGraph {
    SparseAdjacency graph;
    AttributeMatrix attributes;
    GroundTruth truth;
};

namespace detail {

/// Appends to `out` the positions in [lo, hi) hit by Bernoulli(prob) trials,
/// skipping `exclude`.
inline void bernoulli_segment(Rng& rng, double prob, std::size_t lo, std::size_t hi, std::size_t exclude,
                              std::vector<Index>& out) {
    if (prob <= 0.0 || lo >= hi) return;
    if (prob >= 1.0) {
        for (std::size_t j = lo; j < hi; ++j)
            if (j != exclude) out.push_back(static_cast<Index>(j));
        return;
    }
    const double log1mp = std::log1p(-prob);
    // Trials run over [lo, hi) minus the excluded slot.
    const bool skip_one = exclude >= lo && exclude < hi;
    const std::size_t trials = hi - lo - (skip_one ? 1 : 0);
    std::size_t t = 0;
    while (true) {
        const std::uint64_t gap = rng.geometric_skip(log1mp);
        if (gap >= trials - t) break;
        t += static_cast<std::size_t>(gap);
        std::size_t j = lo + t;
        if (skip_one && j >= exclude) ++j;
        out.push_back(static_cast<Index>(j));
        ++t;
        if (t >= trials) break;
    }
}

}  // namespace detail

/// Draws A and X. Every ordered pair i != i' is an edge with probability
/// P[group(i), group(i')]; every (node, attribute) entry is present with the
/// largest Q over the attribute groups containing the attribute.
inline SyntheticGraph generate(const GeneratorConfig& cfg) {
    cfg.validate();
    const auto sizes = cfg.group_sizes();
    const std::size_t g = sizes.size();
    std::vector<std::size_t> start(g + 1, 0);
    for (std::size_t k = 0; k < g; ++k) start[k + 1] = start[k] + sizes[k];

    SyntheticGraph out;
    auto& truth = out.truth;
    truth.node_group.resize(cfg.n);
    truth.coordinated.resize(cfg.n);
    std::vector<std::size_t> group_of(cfg.n);
    for (std::size_t k = 0; k < g; ++k)
        for (std::size_t i = start[k]; i < start[k + 1]; ++i) {
            group_of[i] = k;
            const bool planted = k + 1 < g;
            truth.node_group[i] = planted ? static_cast<Index>(k + 1) : 0;
            truth.coordinated[i] = planted ? 1 : 0;
        }

    // Attribute groups J_1..J_{m-1}: uniform samples without replacement.
    const std::size_t m = cfg.attribute_groups();
    {
        Rng rng(derive_seed(cfg.seed, "synth.attribute_groups"));
        for (std::size_t l = 0; l + 1 < m; ++l) {
            std::vector<Index> pool(cfg.d);
            for (std::size_t j = 0; j < cfg.d; ++j) pool[j] = static_cast<Index>(j);
            for (std::size_t s = 0; s < cfg.attribute_group_size; ++s) {
                const auto pick = s + static_cast<std::size_t>(rng.below(cfg.d - s));
                std::swap(pool[s], pool[pick]);
            }
            std::vector<Index> group(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cfg.attribute_group_size));
            std::sort(group.begin(), group.end());
            truth.attribute_groups.push_back(std::move(group));
        }
    }

    // Adjacency, row by row with per-row streams.
    std::vector<std::size_t> ptr(cfg.n + 1, 0);
    std::vector<Index> idx;
    {
        std::vector<std::vector<Index>> upper;  // symmetric mode mirrors i<j into rows j
        if (cfg.symmetric) upper.resize(cfg.n);
        std::vector<Index> row;
        for (std::size_t i = 0; i < cfg.n; ++i) {
            Rng rng(derive_seed(cfg.seed, "synth.adjacency", i));
            row.clear();
            const auto gi = static_cast<Eigen::Index>(group_of[i]);
            for (std::size_t k = 0; k < g; ++k) {
                std::size_t lo = start[k];
                if (cfg.symmetric) lo = std::max(lo, i + 1);
                detail::bernoulli_segment(rng, cfg.p(gi, static_cast<Eigen::Index>(k)), lo, start[k + 1], i, row);
            }
            if (cfg.symmetric) {
                for (Index j : row) upper[j].push_back(static_cast<Index>(i));
                // Lower part (j < i) arrived in upper[i] in ascending order.
                std::vector<Index> merged = upper[i];
                merged.insert(merged.end(), row.begin(), row.end());
                upper[i].clear();
                upper[i].shrink_to_fit();
                idx.insert(idx.end(), merged.begin(), merged.end());
            } else {
                idx.insert(idx.end(), row.begin(), row.end());
            }
            ptr[i + 1] = idx.size();
        }
    }
    std::vector<std::uint8_t> ones(idx.size(), 1);
    IdMap nodes;
    for (std::size_t i = 0; i < cfg.n; ++i) nodes.intern(std::to_string(i));
    out.graph = {CsrMatrix<std::uint8_t>(cfg.n, cfg.n, std::move(ptr), std::move(idx), std::move(ones)), nodes};

    // Attributes: base rate from the global group, then elevated entries.
    std::vector<std::vector<std::pair<Index, double>>> elevated(g);
    const auto global = static_cast<Eigen::Index>(m - 1);
    for (std::size_t k = 0; k < g; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        const double base = cfg.q(ki, global);
        std::vector<double> best(cfg.d, base);
        for (std::size_t l = 0; l + 1 < m; ++l)
            for (Index j : truth.attribute_groups[l]) best[j] = std::max(best[j], cfg.q(ki, static_cast<Eigen::Index>(l)));
        for (std::size_t j = 0; j < cfg.d; ++j)
            if (best[j] > base) elevated[k].emplace_back(static_cast<Index>(j), best[j]);
    }
    std::vector<std::size_t> xptr(cfg.n + 1, 0);
    std::vector<Index> xidx;
    {
        std::vector<Index> row, extra;
        for (std::size_t i = 0; i < cfg.n; ++i) {
            Rng rng(derive_seed(cfg.seed, "synth.attributes", i));
            const std::size_t k = group_of[i];
            const double base = cfg.q(static_cast<Eigen::Index>(k), global);
            row.clear();
            extra.clear();
            detail::bernoulli_segment(rng, base, 0, cfg.d, cfg.d, row);
            // Present with total probability p_j: base hit OR an independent
            // hit with probability (p_j - base) / (1 - base).
            for (auto [j, pj] : elevated[k]) {
                const double r = base >= 1.0 ? 0.0 : (pj - base) / (1.0 - base);
                if (rng.uniform() < r) extra.push_back(j);
            }
            std::vector<Index> merged;
            merged.reserve(row.size() + extra.size());
            std::set_union(row.begin(), row.end(), extra.begin(), extra.end(), std::back_inserter(merged));
            xidx.insert(xidx.end(), merged.begin(), merged.end());
            xptr[i + 1] = xidx.size();
        }
    }
    std::vector<std::uint32_t> xval(xidx.size(), 1);
    IdMap attrs;
    for (std::size_t j = 0; j < cfg.d; ++j) attrs.intern("a" + std::to_string(j));
    out.attributes = {CsrMatrix<std::uint32_t>(cfg.n, cfg.d, std::move(xptr), std::move(xidx), std::move(xval)),
                      std::move(attrs)};
    return out;
}

/// Suspension labels with rate `base_rate` in the background and
/// `base_rate * lift` inside planted groups.
inline std::vector<std::uint8_t> plant_suspensions(const GroundTruth& truth, double base_rate, double lift,
                                                   std::uint64_t seed) {
    if (base_rate < 0.0 || base_rate * lift > 1.0) throw ConfigError("suspension rates must lie in [0, 1]");
    Rng rng(derive_seed(seed, "synth.suspensions"));
    std::vector<std::uint8_t> s(truth.coordinated.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = rng.uniform() < (truth.coordinated[i] ? base_rate * lift : base_rate) ? 1 : 0;
    return s;
}

// ---------------------------------------------------------------------------
// On-disk instances.

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << bytes;
    if (!out) throw IoError("short write to " + p.string());
}

inline nlohmann::ordered_json to_json(const GeneratorConfig& c) {
    nlohmann::ordered_json j;
    j["n"] = c.n;
    j["d"] = c.d;
    j["planted_sizes"] = c.planted_sizes;
    auto mat = [](const Eigen::MatrixXd& m) {
        auto rows = nlohmann::ordered_json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            auto row = nlohmann::ordered_json::array();
            for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(r, k));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["P"] = mat(c.p);
    j["Q"] = mat(c.q);
    j["attribute_group_size"] = c.attribute_group_size;
    j["symmetric"] = c.symmetric;
    j["seed"] = c.seed;
    return j;
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.n = j.at("n").get<std::size_t>();
    c.d = j.at("d").get<std::size_t>();
    c.planted_sizes = j.at("planted_sizes").get<std::vector<std::size_t>>();
    auto mat = [](const nlohmann::json& rows) {
        const auto r = static_cast<Eigen::Index>(rows.size());
        const auto k = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
        Eigen::MatrixXd m(r, k);
        for (Eigen::Index i = 0; i < r; ++i) {
            if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != k)
                throw ConfigError("ragged matrix in generator config");
            for (Eigen::Index l = 0; l < k; ++l)
                m(i, l) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)].get<double>();
        }
        return m;
    };
    c.p = mat(j.at("P"));
    c.q = mat(j.at("Q"));
    c.attribute_group_size = j.at("attribute_group_size").get<std::size_t>();
    c.symmetric = j.value("symmetric", false);
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

struct InstanceFiles {
    std::string edges, attributes, labels, suspended;
};

/// Serializes an instance in the edge-list / attribute / label text formats.
inline InstanceFiles render_instance(const SyntheticGraph& s, const std::vector<std::uint8_t>* suspended = nullptr) {
    InstanceFiles f;
    std::ostringstream e, a, l;
    write_edge_list(s.graph, e);
    write_attributes(s.attributes, s.graph.ids, a);
    for (std::size_t i = 0; i < s.truth.node_group.size(); ++i)
        l << s.graph.ids.name(static_cast<Index>(i)) << ' ' << s.truth.node_group[i] << '\n';
    f.edges = e.str();
    f.attributes = a.str();
    f.labels = l.str();
    if (suspended) {
        std::ostringstream sp;
        sp << "node,suspended\n";
        for (std::size_t i = 0; i < suspended->size(); ++i)
            sp << s.graph.ids.name(static_cast<Index>(i)) << ',' << +(*suspended)[i] << '\n';
        f.suspended = sp.str();
    }
    return f;
}

struct SuspensionPlan {
    double base_rate = 0.0;
    double lift = 1.0;
};

/// Writes edges.txt, attributes.txt, labels.txt (and suspended.csv) plus a
/// manifest.json holding the config and FNV-1a checksums.
inline nlohmann::ordered_json write_instance(const GeneratorConfig& cfg, const std::filesystem::path& dir,
                                             const SuspensionPlan* plan = nullptr) {
    std::filesystem::create_directories(dir);
    const auto s = generate(cfg);
    std::vector<std::uint8_t> susp;
    if (plan) susp = plant_suspensions(s.truth, plan->base_rate, plan->lift, cfg.seed);
    const auto files = render_instance(s, plan ? &susp : nullptr);
    nlohmann::ordered_json manifest;
    manifest["generator"] = "coupled-bernoulli-block-model";
    manifest["config"] = to_json(cfg);
    if (plan) manifest["suspensions"] = {{"base_rate", plan->base_rate}, {"lift", plan->lift}};
    nlohmann::ordered_json listing;
    auto put = [&](const char* key, const char* name, const std::string& bytes) {
        write_file(dir / name, bytes);
        listing[key] = {{"path", name}, {"fnv1a64", hex64(fnv1a64(bytes))}, {"bytes", bytes.size()}};
    };
    put("edges", "edges.txt", files.edges);
    put("attributes", "attributes.txt", files.attributes);
    put("labels", "labels.txt", files.labels);
    if (plan) put("suspended", "suspended.csv", files.suspended);
    manifest["files"] = std::move(listing);
    manifest["stats"] = {{"nodes", s.graph.n()}, {"edges", s.graph.edges()}, {"attribute_nnz", s.attributes.counts.nnz()}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

/// One directory per (size, instance): `n<size>_i<instance>`. The seed of
/// each instance is derived from base_seed, size and instance index.
inline std::vector<nlohmann::ordered_json> sweep(const std::vector<std::size_t>& sizes, std::size_t instances,
                                                 std::uint64_t base_seed, const std::filesystem::path& root,
                                                 const SuspensionPlan* plan = nullptr) {
    if (sizes.empty()) throw ConfigError("sweep: no sizes given");
    std::vector<nlohmann::ordered_json> out;
    for (std::size_t n : sizes)
        for (std::size_t inst = 0; inst < instances; ++inst) {
            auto cfg = GeneratorConfig::planted_default(n, n, derive_seed(base_seed, "sweep", n * 1000003 + inst));
            auto dir = root / ("n" + std::to_string(n) + "_i" + std::to_string(inst));
            auto m = write_instance(cfg, dir, plan);
            m["directory"] = dir.string();
            out.push_back(std::move(m));
        }
    return out;
}

}  // namespace tinyblock
