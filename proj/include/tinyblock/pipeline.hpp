#pragma once

// End-to-end orchestration: config schema, ingestion, map -> flag -> sig ->
// meso (-> metrics), report assembly with atomic writes, and the scaling
// benchmark.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinyblock/creed.hpp"
#include "tinyblock/embed.hpp"
#include "tinyblock/evalkit.hpp"
#include "tinyblock/flag.hpp"
#include "tinyblock/graphio.hpp"
#include "tinyblock/kmeans.hpp"
#include "tinyblock/meso.hpp"
#include "tinyblock/parallel.hpp"
#include "tinyblock/synthgen.hpp"
#include "tinyblock/version.hpp"

namespace tinyblock {

enum class Mode { synthetic, real };
enum class Weighting { raw, binary, tfidf };
enum class OutputPolicy { overwrite, fail, suffix };
enum class CreedRestriction { all, significant };

struct PipelineConfig {
    // inputs
    std::string manifest;  ///< synthetic instance manifest; supplies edges/attributes/truth when those are empty
    std::string edges;
    std::string attributes;
    std::string truth;
    std::string external_labels;
    std::string suspensions;
    std::string bot_scores;
    std::string seed_attributes;
    bool directed = true;

    Mode mode = Mode::synthetic;
    Variant variant = Variant::original;
    std::optional<std::size_t> k;  ///< default 10 synthetic, 100 real
    SvdBackend backend = SvdBackend::lanczos;
    std::optional<Weighting> weighting;  ///< default raw synthetic, tfidf real

    std::size_t clusters = 9;
    std::size_t batch = 1024;
    std::size_t epochs = 100;
    std::size_t restarts = 3;
    std::size_t refine_epochs = 0;

    GroupThresholds thresholds;
    bool auto_p_star = false;
    bool check_sizes = true;

    std::size_t top_k = 1000;
    std::optional<CreedRestriction> creed_restriction;  ///< default all synthetic, significant real
    bool creed_binary = false;
    std::size_t creed_report_top = 10;

    std::uint64_t seed = 0;
    std::string out = "tinyblock-out";
    OutputPolicy policy = OutputPolicy::overwrite;

    std::size_t effective_k() const { return k.value_or(mode == Mode::synthetic ? 10 : 100); }
    Weighting effective_weighting() const {
        return weighting.value_or(mode == Mode::synthetic ? Weighting::raw : Weighting::tfidf);
    }
    CreedRestriction effective_restriction() const {
        return creed_restriction.value_or(mode == Mode::synthetic ? CreedRestriction::all
                                                                  : CreedRestriction::significant);
    }

    void validate() const {
        thresholds.validate();
        if (manifest.empty() && (edges.empty() || attributes.empty()))
            throw ConfigError("config: either inputs.manifest or both inputs.edges and inputs.attributes are required");
        if (effective_k() == 0) throw ConfigError("config: k must be positive");
        if (external_labels.empty() && clusters < 2) throw ConfigError("config: clusters must be at least 2");
        if (auto_p_star && external_labels.empty() && clusters < 3)
            throw ConfigError("config: p_star = auto requires at least 3 clusters");
        if (batch == 0) throw ConfigError("config: kmeans.batch must be positive");
        if (top_k == 0) throw ConfigError("config: creed.top_k must be positive");
    }
};

namespace detail {

template <class E>
struct EnumName {
    E value;
    const char* name;
};

inline constexpr EnumName<Mode> mode_names[] = {{Mode::synthetic, "synthetic"}, {Mode::real, "real"}};
inline constexpr EnumName<Weighting> weighting_names[] = {
    {Weighting::raw, "raw"}, {Weighting::binary, "binary"}, {Weighting::tfidf, "tfidf"}};
inline constexpr EnumName<OutputPolicy> policy_names[] = {
    {OutputPolicy::overwrite, "overwrite"}, {OutputPolicy::fail, "fail"}, {OutputPolicy::suffix, "suffix"}};
inline constexpr EnumName<CreedRestriction> restriction_names[] = {{CreedRestriction::all, "all"},
                                                                   {CreedRestriction::significant, "significant"}};
inline constexpr EnumName<SvdBackend> backend_names[] = {{SvdBackend::lanczos, "lanczos"},
                                                         {SvdBackend::randomized, "randomized"}};

template <class E, std::size_t N>
std::string enum_name(const EnumName<E> (&table)[N], E v) {
    for (const auto& e : table)
        if (e.value == v) return e.name;
    throw ContractError("unnamed enum value");
}

template <class E, std::size_t N>
E enum_parse(const EnumName<E> (&table)[N], const std::string& s, const char* what) {
    std::string listed;
    for (const auto& e : table) {
        if (s == e.name) return e.value;
        listed += listed.empty() ? e.name : std::string(", ") + e.name;
    }
    throw ConfigError(std::string("config: unknown ") + what + " `" + s + "` (expected one of: " + listed + ")");
}

/// Rejects keys outside `allowed`.
inline void check_keys(const nlohmann::json& j, const char* where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string("config: `") + where + "` must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(std::string("config: unknown key `") + it.key() + "` in `" + where + "`");
    }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& into) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    try {
        into = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config: `") + key + "` has the wrong type");
    }
}

}  // namespace detail

/// Full echo with every default resolved, so a report reproduces its run.
inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
    using J = nlohmann::ordered_json;
    J j;
    j["mode"] = detail::enum_name(detail::mode_names, c.mode);
    J in;
    in["manifest"] = c.manifest;
    in["edges"] = c.edges;
    in["attributes"] = c.attributes;
    in["truth"] = c.truth;
    in["external_labels"] = c.external_labels;
    in["suspensions"] = c.suspensions;
    in["bot_scores"] = c.bot_scores;
    in["seed_attributes"] = c.seed_attributes;
    in["directed"] = c.directed;
    j["inputs"] = std::move(in);
    J em;
    em["variant"] = std::string(to_string(c.variant));
    em["k"] = c.effective_k();
    em["svd_backend"] = detail::enum_name(detail::backend_names, c.backend);
    em["weighting"] = detail::enum_name(detail::weighting_names, c.effective_weighting());
    j["embedding"] = std::move(em);
    J km;
    km["clusters"] = c.clusters;
    km["batch"] = c.batch;
    km["epochs"] = c.epochs;
    km["restarts"] = c.restarts;
    km["refine_epochs"] = c.refine_epochs;
    j["kmeans"] = std::move(km);
    J th;
    th["p_star"] = c.auto_p_star ? J("auto") : J(c.thresholds.p_star);
    th["q_star"] = c.thresholds.q_star;
    th["s_low"] = c.thresholds.s_low;
    th["s_high"] = c.thresholds.s_high;
    th["t_low"] = c.thresholds.t_low;
    th["t_high"] = c.thresholds.t_high;
    th["check_sizes"] = c.check_sizes;
    j["thresholds"] = std::move(th);
    J cr;
    cr["top_k"] = c.top_k;
    cr["restrict"] = detail::enum_name(detail::restriction_names, c.effective_restriction());
    cr["binary"] = c.creed_binary;
    cr["report_top"] = c.creed_report_top;
    j["creed"] = std::move(cr);
    j["seed"] = c.seed;
    J out;
    out["directory"] = c.out;
    out["policy"] = detail::enum_name(detail::policy_names, c.policy);
    j["output"] = std::move(out);
    return j;
}

/// Parses and validates a config document. Relative input paths are
/// resolved against `base` when given.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    using detail::read_opt;
    detail::check_keys(j, "<root>", {"mode", "inputs", "embedding", "kmeans", "thresholds", "creed", "seed", "output"});
    PipelineConfig c;
    if (j.contains("mode")) c.mode = detail::enum_parse(detail::mode_names, j.at("mode").get<std::string>(), "mode");
    if (j.contains("inputs")) {
        const auto& in = j.at("inputs");
        detail::check_keys(in, "inputs", {"manifest", "edges", "attributes", "truth", "external_labels", "suspensions",
                                          "bot_scores", "seed_attributes", "directed"});
        auto path = [&](const char* key, std::string& into) {
            read_opt(in, key, into);
            if (!into.empty() && !base.empty() && std::filesystem::path(into).is_relative())
                into = (base / into).lexically_normal().string();
        };
        path("manifest", c.manifest);
        path("edges", c.edges);
        path("attributes", c.attributes);
        path("truth", c.truth);
        path("external_labels", c.external_labels);
        path("suspensions", c.suspensions);
        path("bot_scores", c.bot_scores);
        path("seed_attributes", c.seed_attributes);
        read_opt(in, "directed", c.directed);
    }
    if (j.contains("embedding")) {
        const auto& em = j.at("embedding");
        detail::check_keys(em, "embedding", {"variant", "k", "svd_backend", "weighting"});
        if (em.contains("variant")) {
            try {
                c.variant = parse_variant(em.at("variant").get<std::string>());
            } catch (const ContractError& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
        }
        if (em.contains("k")) c.k = em.at("k").get<std::size_t>();
        if (em.contains("svd_backend"))
            c.backend = detail::enum_parse(detail::backend_names, em.at("svd_backend").get<std::string>(), "svd_backend");
        if (em.contains("weighting"))
            c.weighting = detail::enum_parse(detail::weighting_names, em.at("weighting").get<std::string>(), "weighting");
    }
    if (j.contains("kmeans")) {
        const auto& km = j.at("kmeans");
        detail::check_keys(km, "kmeans", {"clusters", "batch", "epochs", "restarts", "refine_epochs"});
        read_opt(km, "clusters", c.clusters);
        read_opt(km, "batch", c.batch);
        read_opt(km, "epochs", c.epochs);
        read_opt(km, "restarts", c.restarts);
        read_opt(km, "refine_epochs", c.refine_epochs);
    }
    if (j.contains("thresholds")) {
        const auto& th = j.at("thresholds");
        detail::check_keys(th, "thresholds", {"p_star", "q_star", "s_low", "s_high", "t_low", "t_high", "check_sizes"});
        if (th.contains("p_star")) {
            const auto& p = th.at("p_star");
            if (p.is_string()) {
                if (p.get<std::string>() != "auto") throw ConfigError("config: p_star must be a number or \"auto\"");
                c.auto_p_star = true;
            } else {
                read_opt(th, "p_star", c.thresholds.p_star);
            }
        }
        read_opt(th, "q_star", c.thresholds.q_star);
        read_opt(th, "s_low", c.thresholds.s_low);
        read_opt(th, "s_high", c.thresholds.s_high);
        read_opt(th, "t_low", c.thresholds.t_low);
        read_opt(th, "t_high", c.thresholds.t_high);
        read_opt(th, "check_sizes", c.check_sizes);
    }
    if (j.contains("creed")) {
        const auto& cr = j.at("creed");
        detail::check_keys(cr, "creed", {"top_k", "restrict", "binary", "report_top"});
        read_opt(cr, "top_k", c.top_k);
        if (cr.contains("restrict"))
            c.creed_restriction =
                detail::enum_parse(detail::restriction_names, cr.at("restrict").get<std::string>(), "creed.restrict");
        read_opt(cr, "binary", c.creed_binary);
        read_opt(cr, "report_top", c.creed_report_top);
    }
    read_opt(j, "seed", c.seed);
    if (j.contains("output")) {
        const auto& out = j.at("output");
        detail::check_keys(out, "output", {"directory", "policy"});
        read_opt(out, "directory", c.out);
        if (out.contains("policy"))
            c.policy = detail::enum_parse(detail::policy_names, out.at("policy").get<std::string>(), "output.policy");
    }
    c.validate();
    return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    const auto text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return pipeline_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Inputs.

struct PipelineInputs {
    SparseAdjacency graph;
    AttributeMatrix attributes;
    IngestReport ingest;
    std::optional<TruthLabels> truth;
    std::optional<ExternalLabels> external;
    std::optional<SuspensionData> suspensions;
    std::optional<BotData> bots;
    std::vector<std::string> seed_attributes;
    nlohmann::ordered_json checksums = nlohmann::ordered_json::object();
    std::vector<std::string> warnings;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input " + path);
    return in;
}

inline void note_checksum(nlohmann::ordered_json& into, const char* key, const std::string& path) {
    into[key] = hex64(fnv1a64(read_file(path)));
}

}  // namespace detail

/// Resolves manifest-provided paths into cfg in place.
inline void resolve_manifest(PipelineConfig& cfg) {
    if (cfg.manifest.empty()) return;
    const std::filesystem::path mpath(cfg.manifest);
    const auto manifest = nlohmann::json::parse(read_file(mpath));
    const auto dir = mpath.parent_path();
    auto pick = [&](const char* key, std::string& into) {
        if (!into.empty() || !manifest.contains("files") || !manifest["files"].contains(key)) return;
        into = (dir / manifest["files"][key]["path"].get<std::string>()).lexically_normal().string();
    };
    pick("edges", cfg.edges);
    pick("attributes", cfg.attributes);
    pick("labels", cfg.truth);
    pick("suspended", cfg.suspensions);
}

/// Reads every configured input and drops isolated nodes.
inline PipelineInputs load_inputs(const PipelineConfig& cfg_in) {
    PipelineConfig cfg = cfg_in;
    resolve_manifest(cfg);
    PipelineInputs in;
    {
        auto es = detail::open_input(cfg.edges);
        auto er = load_edge_list(es, cfg.directed);
        auto xs = detail::open_input(cfg.attributes);
        auto xr = load_attributes(xs, er.graph.ids, UnknownNodePolicy::skip);
        in.ingest = er.report;
        in.ingest.attribute_lines = xr.lines;
        in.ingest.skipped_unknown_nodes = xr.skipped_unknown_nodes;
        auto f = filter_isolated(er.graph, xr.matrix);
        in.graph = std::move(f.graph);
        in.attributes = std::move(f.attributes);
        in.ingest.removed_isolated = f.removed.size();
        in.ingest.removed_attributes = f.removed_attributes.size();
        in.ingest.nodes = in.graph.n();
        in.ingest.edges = in.graph.edges();
        in.ingest.d = in.attributes.d();
        if (xr.skipped_unknown_nodes)
            in.warnings.push_back(std::to_string(xr.skipped_unknown_nodes) +
                                  " attribute line(s) name nodes absent from the edge list");
    }
    detail::note_checksum(in.checksums, "edges", cfg.edges);
    detail::note_checksum(in.checksums, "attributes", cfg.attributes);
    if (!cfg.truth.empty()) {
        auto s = detail::open_input(cfg.truth);
        in.truth = read_truth_labels(s, in.graph.ids);
        detail::note_checksum(in.checksums, "truth", cfg.truth);
    }
    if (!cfg.external_labels.empty()) {
        auto s = detail::open_input(cfg.external_labels);
        in.external = import_external_labels(s, in.graph.ids);
        detail::note_checksum(in.checksums, "external_labels", cfg.external_labels);
    }
    if (!cfg.suspensions.empty()) {
        auto s = detail::open_input(cfg.suspensions);
        in.suspensions = read_suspensions(s, in.graph.ids);
        detail::note_checksum(in.checksums, "suspensions", cfg.suspensions);
        if (in.suspensions->missing)
            in.warnings.push_back(std::to_string(in.suspensions->missing) + " node(s) without suspension status");
    }
    if (!cfg.bot_scores.empty()) {
        auto s = detail::open_input(cfg.bot_scores);
        in.bots = read_bot_scores(s, in.graph.ids);
        detail::note_checksum(in.checksums, "bot_scores", cfg.bot_scores);
        if (in.bots->missing) in.warnings.push_back(std::to_string(in.bots->missing) + " node(s) without bot score");
    }
    if (!cfg.seed_attributes.empty()) {
        auto s = detail::open_input(cfg.seed_attributes);
        // names are hashtags themselves, so no comment syntax here
        std::string name;
        while (s >> name) in.seed_attributes.push_back(name);
        detail::note_checksum(in.checksums, "seed_attributes", cfg.seed_attributes);
    }
    return in;
}

/// Wraps an in-memory synthetic instance as pipeline inputs.
inline PipelineInputs inputs_from_synthetic(const SyntheticGraph& s, const std::vector<std::uint8_t>* suspended = nullptr) {
    PipelineInputs in;
    auto f = filter_isolated(s.graph, s.attributes);
    std::vector<Index> keep;
    keep.reserve(f.graph.n());
    for (const auto& name : f.graph.ids.names()) keep.push_back(*s.graph.ids.find(name));
    in.graph = std::move(f.graph);
    in.attributes = std::move(f.attributes);
    in.ingest.nodes = in.graph.n();
    in.ingest.edges = in.graph.edges();
    in.ingest.d = in.attributes.d();
    in.ingest.removed_isolated = f.removed.size();
    in.ingest.removed_attributes = f.removed_attributes.size();
    TruthLabels t;
    for (Index i : keep) {
        t.group.push_back(s.truth.node_group[i]);
        t.coordinated.push_back(s.truth.coordinated[i]);
    }
    in.truth = std::move(t);
    if (suspended) {
        SuspensionData d;
        for (Index i : keep) d.suspended.push_back((*suspended)[i]);
        in.suspensions = std::move(d);
    }
    return in;
}

// ---------------------------------------------------------------------------
// Stages.

struct StageTimings {
    double ingest = 0.0, map = 0.0, flag = 0.0, sig = 0.0, meso = 0.0, metrics = 0.0;
};

struct PipelineResult {
    Embedding embedding;
    std::optional<KMeansResult> kmeans;
    ClusterResult clusters;
    double p_star = 0.0;
    std::optional<ElbowResult> elbow;
    std::vector<CreedRanking> creeds;
    std::vector<std::optional<double>> engagement;  ///< per cluster f_E
    std::vector<double> node_engagement;            ///< per node f_e (empty without J_C)
    SignificantSets significant;
    MesoMatrix meso;
    std::optional<MetricReport> metrics;
    std::vector<std::string> warnings;
    StageTimings timings;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - start_).count();
        start_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline CsrMatrix<double> weighted_attributes(const AttributeMatrix& x, Weighting w, std::vector<std::string>& warnings) {
    switch (w) {
        case Weighting::raw:
            return as_real(x);
        case Weighting::binary:
            return as_real(binarize(x));
        case Weighting::tfidf: {
            auto t = tfidf_transform(x);
            if (!t.empty_rows.empty())
                warnings.push_back(std::to_string(t.empty_rows.size()) + " node(s) have no attributes");
            return std::move(t.values);
        }
    }
    throw ContractError("unhandled weighting");
}

}  // namespace detail

/// Seeds: embedding derive_seed(seed, "embed"), k-means derive_seed(seed, "kmeans").
inline std::vector<Index> map_stage(const PipelineConfig& cfg, const PipelineInputs& in, PipelineResult& res) {
    const auto x = detail::weighted_attributes(in.attributes, cfg.effective_weighting(), res.warnings);
    VariantSpec spec{cfg.variant, cfg.effective_k(), cfg.backend};
    res.embedding = embed(in.graph, x, spec, derive_seed(cfg.seed, "embed"));
    for (const auto& w : res.embedding.warnings) res.warnings.push_back("embed: " + w);
    if (in.external) {
        detail::require(in.external->labels.size() == in.graph.n(), "external labels do not cover the graph");
        return in.external->labels;
    }
    KMeansOptions ko;
    ko.clusters = cfg.clusters;
    ko.batch = cfg.batch;
    ko.epochs = cfg.epochs;
    ko.restarts = cfg.restarts;
    ko.refine_epochs = cfg.refine_epochs;
    ko.seed = derive_seed(cfg.seed, "kmeans");
    res.kmeans = minibatch_kmeans(res.embedding.z, ko);
    if (res.kmeans->reseeded) res.warnings.push_back("kmeans: re-seeded " + std::to_string(res.kmeans->reseeded) + " empty cluster(s)");
    return res.kmeans->labels;
}

inline void flag_stage(const PipelineConfig& cfg, const PipelineInputs& in, std::vector<Index> labels,
                       PipelineResult& res) {
    const std::size_t m = in.external ? in.external->m : cfg.clusters;
    GroupThresholds t = cfg.thresholds;
    if (cfg.auto_p_star) {
        const auto probs = cluster_edge_probabilities(in.graph, labels, m);
        std::vector<double> curve;
        for (const auto& p : probs) curve.push_back(p.value);
        std::sort(curve.begin(), curve.end(), std::greater<>());
        res.elbow = elbow_select(curve);
        t.p_star = res.elbow->p_star;
        if (!res.elbow->clear) res.warnings.push_back("flag: " + res.elbow->warning);
    }
    res.p_star = t.p_star;
    res.clusters = flag_groups(std::move(labels), in.graph, t, cfg.check_sizes, &in.attributes, m);
}

inline void sig_stage(const PipelineConfig& cfg, const PipelineInputs& in, PipelineResult& res) {
    const auto& x = in.attributes;
    const auto members = res.clusters.members();
    std::vector<Index> restrict;
    const bool need_scores = cfg.effective_restriction() == CreedRestriction::significant || !in.seed_attributes.empty();
    if (need_scores && x.d() > 0) {
        const auto xs = tfidf_transform(x);
        const auto scores = attribute_significance(xs);
        res.significant = significant_set(scores, x.attributes, std::min(cfg.top_k, x.d()), in.seed_attributes);
        if (cfg.effective_restriction() == CreedRestriction::significant) {
            restrict = res.significant.top;
            std::sort(restrict.begin(), restrict.end());
        }
    }
    const CreedContext ctx(x, restrict, cfg.creed_binary);
    if (!res.significant.matched.empty()) {
        res.node_engagement = individual_engagement(x, res.significant.matched);
    } else if (!in.seed_attributes.empty()) {
        res.warnings.push_back("sig: no seed attribute appears among the significant attributes; engagement omitted");
    }
    res.creeds.clear();
    res.engagement.clear();
    for (Index c : res.clusters.ranking) {
        if (members[c].empty()) {
            CreedRanking empty;
            empty.cluster = c;
            empty.restricted = !restrict.empty();
            empty.warning = "cluster is empty";
            res.creeds.push_back(std::move(empty));
            res.engagement.emplace_back();
            continue;
        }
        res.creeds.push_back(ctx.rank(members[c], c, cfg.creed_report_top));
        if (!res.node_engagement.empty())
            res.engagement.emplace_back(cluster_engagement(res.node_engagement, members[c]));
        else
            res.engagement.emplace_back();
    }
}

inline void meso_stage(const PipelineInputs& in, PipelineResult& res) {
    const auto members = res.clusters.members();
    for (std::size_t c = 0; c < members.size(); ++c)
        if (members[c].empty()) {
            // Empty clusters (possible with external labels) are dropped from the meso view.
            res.warnings.push_back("meso: cluster " + std::to_string(c) + " is empty; excluded");
        }
    std::vector<Index> remap(res.clusters.m(), 0);
    Index next = 0;
    for (std::size_t c = 0; c < members.size(); ++c) remap[c] = members[c].empty() ? 0 : next++;
    if (next == res.clusters.m()) {
        res.meso = meso_interaction(in.graph, res.clusters);
        return;
    }
    std::vector<Index> labels(res.clusters.labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = remap[res.clusters.labels[i]];
    res.meso = meso_interaction(in.graph, labels, next);
}

inline void metrics_stage(const PipelineConfig& cfg, const PipelineInputs& in, PipelineResult& res) {
    const bool any = in.truth || in.suspensions || in.bots;
    if (!any) return;
    MetricReport m;
    const auto& labels = res.clusters.labels;
    if (in.truth) {
        m.quality = quality_score<std::int64_t, Index>(in.truth->group, labels);
        GroupThresholds t = cfg.thresholds;
        t.p_star = res.p_star;
        m.f1 = coordinated_f1(in.truth->coordinated, labels, in.graph, &in.attributes, t);
        if (!m.f1->warning.empty()) res.warnings.push_back("metrics: " + m.f1->warning);
    }
    std::vector<Index> flagged;
    const auto mask = res.clusters.flagged_mask();
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) flagged.push_back(static_cast<Index>(i));
    if ((in.suspensions || in.bots) && flagged.empty()) res.warnings.push_back("metrics: no flagged nodes; indices omitted");
    if (in.suspensions && !flagged.empty()) {
        try {
            m.suspension_index = suspension_index(in.suspensions->suspended, flagged);
        } catch (const ContractError& e) {
            res.warnings.push_back(std::string("metrics: ") + e.what());
        }
    }
    if (in.bots && !flagged.empty()) m.bot_influence_index = bot_influence_index(in.bots->bot_score, in.bots->followers, flagged);
    res.metrics = m;
}

/// Runs every stage on loaded inputs.
inline PipelineResult run_stages(const PipelineConfig& cfg, const PipelineInputs& in) {
    PipelineResult res;
    res.warnings = in.warnings;
    detail::Stopwatch sw;
    auto labels = map_stage(cfg, in, res);
    res.timings.map = sw.lap();
    flag_stage(cfg, in, std::move(labels), res);
    res.timings.flag = sw.lap();
    sig_stage(cfg, in, res);
    res.timings.sig = sw.lap();
    meso_stage(in, res);
    res.timings.meso = sw.lap();
    metrics_stage(cfg, in, res);
    res.timings.metrics = sw.lap();
    return res;
}

// ---------------------------------------------------------------------------
// Reports.

inline nlohmann::ordered_json creed_report(const PipelineResult& r, const IdMap& attributes, std::size_t top) {
    auto arr = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.creeds.size(); ++i) {
        auto j = to_json(r.creeds[i], attributes, top, r.engagement[i]);
        if (!r.creeds[i].warning.empty()) j["warning"] = r.creeds[i].warning;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline nlohmann::ordered_json timings_json(const StageTimings& t) {
    nlohmann::ordered_json j;
    j["ingest"] = t.ingest;
    j["map"] = t.map;
    j["flag"] = t.flag;
    j["sig"] = t.sig;
    j["meso"] = t.meso;
    j["metrics"] = t.metrics;
    return j;
}

/// The full run report. Everything except "timings" is deterministic.
inline nlohmann::ordered_json run_report(const PipelineConfig& cfg, const PipelineInputs& in, const PipelineResult& r) {
    using J = nlohmann::ordered_json;
    J j;
    j["software"] = {{"name", "tinyblock"}, {"version", std::string(version)}};
    j["seed"] = cfg.seed;
    j["config"] = to_json(cfg);
    j["input_checksums"] = in.checksums;
    j["ingest"] = to_json(in.ingest);
    J em;
    em["variant"] = std::string(to_string(r.embedding.variant));
    em["k"] = r.embedding.k;
    em["width"] = r.embedding.width();
    em["svd_iterations"] = r.embedding.svd_iterations;
    em["svd_converged"] = r.embedding.svd_converged;
    j["embedding"] = std::move(em);
    J fl;
    fl["p_star"] = r.p_star;
    fl["elbow"] = r.elbow ? J({{"index", r.elbow->index}, {"clear", r.elbow->clear}}) : J(nullptr);
    fl["flagged_clusters"] = std::count_if(r.clusters.clusters.begin(), r.clusters.clusters.end(),
                                           [](const ClusterStats& c) { return c.flagged; });
    if (r.kmeans) {
        fl["kmeans_inertia"] = r.kmeans->inertia;
        fl["kmeans_steps"] = r.kmeans->steps;
    }
    j["flag"] = std::move(fl);
    j["clusters"] = to_json(r.clusters);
    j["creeds"] = creed_report(r, in.attributes.attributes, cfg.creed_report_top);
    j["meso"] = to_json(r.meso);
    j["metrics"] = r.metrics ? to_json(*r.metrics) : J(nullptr);
    j["warnings"] = r.warnings;
    j["timings"] = timings_json(r.timings);
    return j;
}

/// Stages files as `<name>.partial`; commit() renames them all.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void put(const std::string& name, const std::string& bytes) {
        const auto p = dir_ / (name + ".partial");
        write_file(p, bytes);
        staged_.push_back(name);
    }

    void commit() {
        for (const auto& n : staged_) std::filesystem::rename(dir_ / (n + ".partial"), dir_ / n);
        staged_.clear();
    }

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> staged_;
};

inline std::filesystem::path prepare_output_dir(const std::filesystem::path& dir, OutputPolicy policy) {
    namespace fs = std::filesystem;
    auto target = dir;
    if (fs::exists(target) && !fs::is_empty(target)) {
        if (policy == OutputPolicy::fail) throw IoError("output directory " + target.string() + " exists and is not empty");
        if (policy == OutputPolicy::suffix) {
            for (std::size_t k = 1;; ++k) {
                target = dir.string() + "-" + std::to_string(k);
                if (!fs::exists(target)) break;
            }
        }
    }
    fs::create_directories(target);
    return target;
}

inline std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

/// node,cluster,f_e,suspended (empty fields where the value is unavailable).
inline std::string assignments_csv(const PipelineInputs& in, const PipelineResult& r) {
    std::ostringstream os;
    os.precision(17);
    os << "node,cluster,f_e,suspended\n";
    for (std::size_t i = 0; i < in.graph.n(); ++i) {
        os << in.graph.ids.name(static_cast<Index>(i)) << ',' << r.clusters.labels[i] << ',';
        if (!r.node_engagement.empty()) os << r.node_engagement[i];
        os << ',';
        if (in.suspensions) os << +in.suspensions->suspended[i];
        os << '\n';
    }
    return os.str();
}

struct RunOutcome {
    std::filesystem::path directory;
    nlohmann::ordered_json report;
};

/// Loads inputs, runs all stages and writes report.json, clusters.json,
/// creeds.json, meso.json, metrics.json (when available), assignments.csv
/// and embedding.bin. On failure the already staged files keep their
/// `.partial` suffix and report.json.partial records the error.
inline RunOutcome run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    RunOutcome out;
    out.directory = prepare_output_dir(cfg.out, cfg.policy);
    ArtifactWriter w(out.directory);
    PipelineInputs in;
    PipelineResult res;
    try {
        detail::Stopwatch sw;
        in = load_inputs(cfg);
        const double ingest = sw.lap();
        res = run_stages(cfg, in);
        res.timings.ingest = ingest;
        out.report = run_report(cfg, in, res);
        w.put("clusters.json", dump_json(out.report["clusters"]));
        w.put("creeds.json", dump_json(out.report["creeds"]));
        w.put("meso.json", dump_json(out.report["meso"]));
        if (res.metrics) w.put("metrics.json", dump_json(out.report["metrics"]));
        w.put("assignments.csv", assignments_csv(in, res));
        std::ostringstream bin;
        write_embedding_binary(res.embedding.z, bin);
        w.put("embedding.bin", bin.str());
        w.put("report.json", dump_json(out.report));
    } catch (const std::exception& e) {
        nlohmann::ordered_json err;
        err["software"] = {{"name", "tinyblock"}, {"version", std::string(version)}};
        err["config"] = to_json(cfg);
        err["error"] = e.what();
        write_file(out.directory / "report.json.partial", dump_json(err));
        throw;
    }
    w.commit();
    return out;
}

// ---------------------------------------------------------------------------
// Scaling benchmark.

struct BenchRow {
    std::size_t n = 0;
    std::size_t nnz = 0;  ///< nnz(A) + nnz(X)
    double seconds = 0.0;  ///< min over repeats of map + flag
};

struct LinearFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
    detail::require(x.size() == y.size() && x.size() >= 2, "least_squares: need matching samples");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LinearFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

struct BenchResult {
    std::vector<BenchRow> rows;
    LinearFit fit;
};

/// Times map + flag on one generated instance per size (n = d), keeping the
/// minimum over `repeats`.
inline BenchResult bench_scaling(const std::vector<std::size_t>& sizes, std::uint64_t seed, std::size_t repeats = 3,
                                 std::size_t k = 10) {
    if (sizes.size() < 3) throw ConfigError("bench: at least 3 sizes are required for a fit");
    BenchResult out;
    PipelineConfig cfg;
    cfg.k = k;
    cfg.seed = seed;
    for (std::size_t n : sizes) {
        const auto s = generate(GeneratorConfig::planted_default(n, n, derive_seed(seed, "bench", n)));
        const auto in = inputs_from_synthetic(s);
        BenchRow row;
        row.n = n;
        row.nnz = in.graph.edges() + in.attributes.counts.nnz();
        row.seconds = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
            PipelineResult res;
            detail::Stopwatch sw;
            auto labels = map_stage(cfg, in, res);
            flag_stage(cfg, in, std::move(labels), res);
            row.seconds = std::min(row.seconds, sw.lap());
        }
        out.rows.push_back(row);
    }
    std::vector<double> x, y;
    for (const auto& r : out.rows) {
        x.push_back(static_cast<double>(r.nnz));
        y.push_back(r.seconds);
    }
    out.fit = least_squares(x, y);
    return out;
}

inline nlohmann::ordered_json to_json(const BenchResult& b) {
    nlohmann::ordered_json j;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : b.rows) rows.push_back({{"n", r.n}, {"nnz", r.nnz}, {"seconds", r.seconds}});
    j["rows"] = std::move(rows);
    j["fit"] = {{"slope", b.fit.slope}, {"intercept", b.fit.intercept}, {"r2", b.fit.r2}};
    return j;
}

}  // namespace tinyblock
