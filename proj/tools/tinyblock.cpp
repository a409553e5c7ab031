// tinyblock command-line front end: synth, run, eval, bench, export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tinyblock/export.hpp"
#include "tinyblock/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tinyblock;

namespace {

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    write_file(path, text);
}

void apply_threads(const std::optional<std::size_t>& flag) {
    set_thread_count(flag ? *flag : threads_from_env(1));
}

struct SynthArgs {
    std::size_t n = 2000;
    std::optional<std::size_t> d;
    std::uint64_t seed = 0;
    std::string out;
    std::vector<std::size_t> sizes;
    std::size_t instances = 1;
    bool symmetric = false;
    std::optional<double> suspension_rate;
    double suspension_lift = 5.0;
    std::string config;
};

int cmd_synth(const SynthArgs& a) {
    std::optional<SuspensionPlan> plan;
    if (a.suspension_rate) plan = SuspensionPlan{*a.suspension_rate, a.suspension_lift};
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    if (!a.sizes.empty()) {
        for (auto& m : sweep(a.sizes, a.instances, a.seed, a.out, plan ? &*plan : nullptr))
            summary.push_back({{"directory", m["directory"]}, {"stats", m["stats"]}});
    } else {
        GeneratorConfig cfg = a.config.empty() ? GeneratorConfig::planted_default(a.n, a.d.value_or(a.n), a.seed)
                                               : generator_config_from_json(nlohmann::json::parse(read_file(a.config)));
        if (a.config.empty()) cfg.symmetric = a.symmetric;
        const auto m = write_instance(cfg, a.out, plan ? &*plan : nullptr);
        summary.push_back({{"directory", a.out}, {"stats", m["stats"]}});
    }
    std::cout << summary.dump(2) << '\n';
    return 0;
}

struct RunArgs {
    std::string config;
    std::optional<std::size_t> threads;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string variant;
    std::optional<std::size_t> k;
    std::optional<std::size_t> clusters;
    std::string p_star;
    std::string policy;
    std::string truth;
};

int cmd_run(const RunArgs& a) {
    apply_threads(a.threads);
    const fs::path cfg_path(a.config);
    const auto text = read_file(cfg_path);
    nlohmann::json j = nlohmann::json::parse(text);
    // Flags win over the config file.
    if (!a.out.empty()) j["output"]["directory"] = a.out;
    if (a.seed) j["seed"] = *a.seed;
    if (!a.variant.empty()) j["embedding"]["variant"] = a.variant;
    if (a.k) j["embedding"]["k"] = *a.k;
    if (a.clusters) j["kmeans"]["clusters"] = *a.clusters;
    if (!a.p_star.empty()) {
        if (a.p_star == "auto")
            j["thresholds"]["p_star"] = "auto";
        else
            j["thresholds"]["p_star"] = std::stod(a.p_star);
    }
    if (!a.policy.empty()) j["output"]["policy"] = a.policy;
    if (!a.truth.empty()) j["inputs"]["truth"] = fs::absolute(a.truth).string();
    const auto cfg = pipeline_config_from_json(j, fs::absolute(cfg_path).parent_path());
    const auto outcome = run_pipeline(cfg);
    const auto& r = outcome.report;
    nlohmann::ordered_json summary;
    summary["directory"] = outcome.directory.string();
    summary["nodes"] = r["ingest"]["nodes"];
    summary["edges"] = r["ingest"]["edges"];
    summary["flagged_clusters"] = r["flag"]["flagged_clusters"];
    summary["p_star"] = r["flag"]["p_star"];
    summary["metrics"] = r["metrics"];
    summary["warnings"] = r["warnings"];
    std::cout << summary.dump(2) << '\n';
    return 0;
}

struct EvalArgs {
    std::string truth;
    std::string pred;
    std::string edges;
    std::string attributes;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    MetricReport m;
    if (fs::path(a.pred).extension() == ".json") {
        const auto run = load_run(fs::path(a.pred).parent_path().empty() ? fs::path(".") : fs::path(a.pred).parent_path());
        auto cfg = pipeline_config_from_json(run.report.at("config"));
        cfg.truth = a.truth;
        cfg.external_labels.clear();
        const auto in = load_inputs(cfg);
        std::vector<Index> labels(in.graph.n());
        std::vector<std::uint8_t> seen(in.graph.n(), 0);
        for (std::size_t i = 0; i < run.nodes.size(); ++i)
            if (auto id = in.graph.ids.find(run.nodes[i])) {
                labels[*id] = run.cluster[i];
                seen[*id] = 1;
            }
        if (std::find(seen.begin(), seen.end(), 0) != seen.end())
            throw ContractError("eval: report assignments do not cover the reloaded graph");
        GroupThresholds t = cfg.thresholds;
        t.p_star = run.report.at("flag").at("p_star").get<double>();
        m.quality = quality_score<std::int64_t, Index>(in.truth->group, labels);
        m.f1 = coordinated_f1(in.truth->coordinated, labels, in.graph, &in.attributes, t);
    } else {
        // Plain `node label` prediction file, e.g. from an external method.
        if (a.edges.empty()) throw ConfigError("eval: --edges is required with a label-file prediction");
        std::ifstream es(a.edges);
        if (!es) throw IoError("cannot open " + a.edges);
        auto er = load_edge_list(es);
        SparseAdjacency g = std::move(er.graph);
        std::optional<AttributeMatrix> x;
        if (!a.attributes.empty()) {
            std::ifstream xs(a.attributes);
            if (!xs) throw IoError("cannot open " + a.attributes);
            x = load_attributes(xs, g.ids).matrix;
        }
        std::ifstream ts(a.truth), ps(a.pred);
        if (!ts) throw IoError("cannot open " + a.truth);
        if (!ps) throw IoError("cannot open " + a.pred);
        const auto truth = read_truth_labels(ts, g.ids);
        const auto pred = import_external_labels(ps, g.ids);
        m.quality = quality_score<std::int64_t, Index>(truth.group, pred.labels);
        m.f1 = coordinated_f1(truth.coordinated, pred.labels, g, x ? &*x : nullptr, GroupThresholds{});
    }
    emit(to_json(m).dump(2) + "\n", a.out);
    return 0;
}

struct BenchArgs {
    std::vector<std::size_t> sizes;
    std::uint64_t seed = 0;
    std::size_t repeats = 3;
    std::size_t k = 10;
    std::optional<std::size_t> threads;
    std::string out;
};

int cmd_bench(const BenchArgs& a) {
    apply_threads(a.threads);
    const auto b = bench_scaling(a.sizes, a.seed, a.repeats, a.k);
    emit(to_json(b).dump(2) + "\n", a.out);
    return 0;
}

struct ExportArgs {
    std::string run;
    std::string format;
    std::string out;
};

int cmd_export(const ExportArgs& a) {
    const auto run = load_run(a.run);
    std::ostringstream os;
    export_view(run, a.format, os);
    emit(os.str(), a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tinyblock: detect tiny coordinated groups in attributed graphs"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "generate planted coupled block-model instances");
    synth->add_option("--n", sa.n, "node count")->default_val(2000);
    synth->add_option("--d", sa.d, "attribute count (default: n)");
    synth->add_option("--seed", sa.seed, "generator seed")->default_val(0);
    synth->add_option("--out", sa.out, "output directory")->required();
    synth->add_option("--sizes", sa.sizes, "sweep over n = d sizes (comma separated)")->delimiter(',');
    synth->add_option("--instances", sa.instances, "instances per size in a sweep")->default_val(1);
    synth->add_flag("--symmetric", sa.symmetric, "mirror edges (undirected adjacency)");
    synth->add_option("--suspension-rate", sa.suspension_rate, "background suspension rate; writes suspended.csv");
    synth->add_option("--suspension-lift", sa.suspension_lift, "rate multiplier inside planted groups")->default_val(5.0);
    synth->add_option("--config", sa.config, "generator config JSON (overrides --n/--d/--seed)");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "run the detection pipeline");
    run->add_option("--config", ra.config, "pipeline config JSON")->required();
    run->add_option("--threads", ra.threads, "worker threads (default: TINYBLOCK_THREADS or 1)");
    run->add_option("--out", ra.out, "output directory");
    run->add_option("--seed", ra.seed, "master seed");
    run->add_option("--variant", ra.variant, "original, augment, lanigiro, tnemgua or directed_concat");
    run->add_option("--k", ra.k, "projection dimension");
    run->add_option("--clusters", ra.clusters, "k-means cluster count");
    run->add_option("--p-star", ra.p_star, "edge probability threshold or `auto`");
    run->add_option("--policy", ra.policy, "existing output directory: overwrite, fail or suffix");
    run->add_option("--truth", ra.truth, "ground-truth `node group` labels");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "score a prediction against ground truth");
    ev->add_option("--truth", ea.truth, "ground-truth `node group` labels")->required();
    ev->add_option("--pred", ea.pred, "report.json of a run, or a `node label` file")->required();
    ev->add_option("--edges", ea.edges, "edge list (label-file predictions)");
    ev->add_option("--attributes", ea.attributes, "attributes (label-file predictions, enables stage 3)");
    ev->add_option("--out", ea.out, "metric JSON path (default: stdout)");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "time map + flag against nnz(A) + nnz(X)");
    bench->add_option("--sizes", ba.sizes, "n = d sizes (comma separated, at least 3)")->delimiter(',')->required();
    bench->add_option("--seed", ba.seed, "generator seed")->default_val(0);
    bench->add_option("--repeats", ba.repeats, "repeats per size (minimum is kept)")->default_val(3);
    bench->add_option("--k", ba.k, "projection dimension")->default_val(10);
    bench->add_option("--threads", ba.threads, "worker threads (default: TINYBLOCK_THREADS or 1)");
    bench->add_option("--out", ba.out, "timing table JSON path (default: stdout)");

    ExportArgs xa;
    auto* exp = app.add_subcommand("export", "export views of a completed run");
    exp->add_option("--run", xa.run, "run output directory")->required();
    exp->add_option("--format", xa.format, "graphml, csv or nodes")->required();
    exp->add_option("--out", xa.out, "output file (default: stdout)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*synth) return cmd_synth(sa);
        if (*run) return cmd_run(ra);
        if (*ev) return cmd_eval(ea);
        if (*bench) return cmd_bench(ba);
        if (*exp) return cmd_export(xa);
    } catch (const ConfigError& e) {
        std::cerr << "tinyblock: configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "tinyblock: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
