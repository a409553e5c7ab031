#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <sstream>

#include "tinyblock/export.hpp"
#include "tinyblock/pipeline.hpp"

using namespace tinyblock;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("tinyblock_pipe_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

nlohmann::json synthetic_config(const fs::path& manifest, const fs::path& out) {
    return {{"mode", "synthetic"},
            {"inputs", {{"manifest", manifest.string()}}},
            {"seed", 3},
            {"output", {{"directory", out.string()}, {"policy", "overwrite"}}}};
}

// A small hashtag graph: users 0..14 form a clique that
// shares #Coord / #Campaign; the other 45 users connect sparsely and use
// generic tags.
void write_real_inputs(const fs::path& dir) {
    std::ofstream e(dir / "edges.txt"), x(dir / "attributes.txt"), s(dir / "seeds.txt"), su(dir / "susp.csv"),
        b(dir / "bots.csv");
    for (int i = 0; i < 15; ++i)
        for (int j = 0; j < 15; ++j)
            if (i != j) e << "u" << i << " u" << j << '\n';
    for (int i = 15; i < 60; ++i) {
        e << "u" << i << " u" << (15 + (i - 15 + 1) % 45) << '\n';
        if (i % 9 == 0) e << "u" << i << " u" << (i % 15) << '\n';
    }
    for (int i = 0; i < 15; ++i) x << "u" << i << " #Coord 3\nu" << i << " #Campaign 1\nu" << i << " #news 1\n";
    for (int i = 15; i < 60; ++i) x << "u" << i << " #news " << 1 + i % 3 << "\nu" << i << " #sports 1\n";
    x << "u20 #coord 1\n";
    s << "#coord\n#campaign\n";
    su << "node,suspended\n";
    for (int i = 0; i < 60; ++i) su << 'u' << i << ',' << (i < 5 || i == 40 ? 1 : 0) << '\n';
    b << "node,bot_score,followers\n";
    for (int i = 0; i < 60; ++i) b << 'u' << i << ',' << (i < 15 ? 0.8 : 0.1) << ',' << 10 * i << '\n';
}

nlohmann::json real_config(const fs::path& dir, const fs::path& out) {
    return {{"mode", "real"},
            {"inputs",
             {{"edges", (dir / "edges.txt").string()},
              {"attributes", (dir / "attributes.txt").string()},
              {"seed_attributes", (dir / "seeds.txt").string()},
              {"suspensions", (dir / "susp.csv").string()},
              {"bot_scores", (dir / "bots.csv").string()}}},
            {"embedding", {{"variant", "directed_concat"}, {"k", 4}}},
            {"kmeans", {{"clusters", 4}}},
            {"thresholds", {{"p_star", "auto"}, {"check_sizes", false}}},
            {"creed", {{"top_k", 3}}},
            {"seed", 11},
            {"output", {{"directory", out.string()}}}};
}

class SyntheticRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = scratch("synthetic");
        write_instance(GeneratorConfig::planted_default(2000, 2000, 5), root_ / "data");
    }
    static fs::path root_;
};
fs::path SyntheticRun::root_;

}  // namespace

TEST(Config, DefaultsAndEcho) {
    nlohmann::json j = {{"inputs", {{"edges", "e.txt"}, {"attributes", "x.txt"}}}};
    auto c = pipeline_config_from_json(j, "/data");
    EXPECT_EQ(c.edges, "/data/e.txt");
    EXPECT_EQ(c.effective_k(), 10u);
    EXPECT_EQ(c.effective_weighting(), Weighting::raw);
    EXPECT_EQ(c.clusters, 9u);
    EXPECT_DOUBLE_EQ(c.thresholds.p_star, 0.01);
    const auto echo = to_json(c);
    const auto again = to_json(pipeline_config_from_json(nlohmann::json::parse(echo.dump())));
    EXPECT_EQ(echo.dump(), again.dump());

    j["mode"] = "real";
    c = pipeline_config_from_json(j);
    EXPECT_EQ(c.effective_k(), 100u);
    EXPECT_EQ(c.effective_weighting(), Weighting::tfidf);
    EXPECT_EQ(c.effective_restriction(), CreedRestriction::significant);
}

TEST(Config, RejectsBadDocuments) {
    const nlohmann::json in = {{"edges", "e"}, {"attributes", "x"}};
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"bogus", 1}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"kmeans", {{"clustrs", 3}}}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"kmeans", {{"clusters", 3}}}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"mode", "live"}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"embedding", {{"variant", "nope"}}}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"thresholds", {{"p_star", "knee"}}}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"thresholds", {{"p_star", 2.0}}}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"thresholds", {{"s_low", 90}}}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"kmeans", {{"clusters", 2}}}, {"thresholds", {{"p_star", "auto"}}}}),
                 ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"seed", "seven"}}), ConfigError);
    EXPECT_THROW(pipeline_config_from_json({{"inputs", in}, {"output", {{"policy", "append"}}}}), ConfigError);
}

TEST(Config, LoadFromFileResolvesRelativePaths) {
    const auto dir = scratch("cfgfile");
    write_file(dir / "run.json", R"({"inputs": {"edges": "e.txt", "attributes": "sub/x.txt"}})");
    const auto c = load_pipeline_config(dir / "run.json");
    EXPECT_EQ(fs::path(c.attributes), (dir / "sub/x.txt").lexically_normal());
    write_file(dir / "broken.json", "{ not json");
    EXPECT_THROW(load_pipeline_config(dir / "broken.json"), ConfigError);
}

TEST_F(SyntheticRun, EndToEndWritesEveryArtifact) {
    const auto out = root_ / "run1";
    const auto cfg = pipeline_config_from_json(synthetic_config(root_ / "data/manifest.json", out));
    const auto r = run_pipeline(cfg);
    for (const char* f : {"report.json", "clusters.json", "creeds.json", "meso.json", "metrics.json", "assignments.csv",
                          "embedding.bin"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    for (const auto& e : fs::directory_iterator(out)) EXPECT_NE(e.path().extension(), ".partial");

    const auto& rep = r.report;
    std::vector<std::string> keys;
    for (auto it = rep.begin(); it != rep.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"software", "seed", "config", "input_checksums", "ingest", "embedding", "flag",
                                              "clusters", "creeds", "meso", "metrics", "warnings", "timings"}));
    EXPECT_EQ(rep["clusters"].size(), 9u);
    EXPECT_GE(rep["flag"]["flagged_clusters"].get<int>(), 1);
    EXPECT_FALSE(rep["metrics"]["f1"].is_null());
    EXPECT_FALSE(rep["metrics"]["quality"].is_null());
    for (auto it = rep["timings"].begin(); it != rep["timings"].end(); ++it) EXPECT_GE(it->get<double>(), 0.0);
    EXPECT_EQ(rep["software"]["version"], std::string(version));
    EXPECT_TRUE(rep["input_checksums"].contains("edges"));
    EXPECT_TRUE(rep["input_checksums"].contains("truth"));
}

TEST_F(SyntheticRun, RerunIsByteIdentical) {
    const auto a = root_ / "det_a", b = root_ / "det_b";
    run_pipeline(pipeline_config_from_json(synthetic_config(root_ / "data/manifest.json", a)));
    run_pipeline(pipeline_config_from_json(synthetic_config(root_ / "data/manifest.json", b)));
    for (const char* f : {"clusters.json", "creeds.json", "meso.json", "metrics.json", "assignments.csv", "embedding.bin"})
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    auto ra = nlohmann::json::parse(read_file(a / "report.json"));
    auto rb = nlohmann::json::parse(read_file(b / "report.json"));
    ra.erase("timings");
    rb.erase("timings");
    ra["config"]["output"].erase("directory");
    rb["config"]["output"].erase("directory");
    EXPECT_EQ(ra, rb);
}

TEST_F(SyntheticRun, ConfigEchoReproducesTheRun) {
    const auto a = root_ / "echo_a";
    run_pipeline(pipeline_config_from_json(synthetic_config(root_ / "data/manifest.json", a)));
    const auto report = nlohmann::json::parse(read_file(a / "report.json"));
    auto echo = report.at("config");
    echo["output"]["directory"] = (root_ / "echo_b").string();
    run_pipeline(pipeline_config_from_json(echo));
    EXPECT_EQ(read_file(a / "clusters.json"), read_file(root_ / "echo_b" / "clusters.json"));
    EXPECT_EQ(report.at("input_checksums"),
              nlohmann::json::parse(read_file(root_ / "echo_b" / "report.json")).at("input_checksums"));
}

TEST_F(SyntheticRun, OutputPolicies) {
    const auto out = root_ / "policy";
    auto j = synthetic_config(root_ / "data/manifest.json", out);
    run_pipeline(pipeline_config_from_json(j));
    j["output"]["policy"] = "fail";
    EXPECT_THROW(run_pipeline(pipeline_config_from_json(j)), IoError);
    j["output"]["policy"] = "suffix";
    const auto r = run_pipeline(pipeline_config_from_json(j));
    EXPECT_EQ(r.directory, fs::path(out.string() + "-1"));
    EXPECT_TRUE(fs::exists(r.directory / "report.json"));
}

TEST_F(SyntheticRun, ExternalLabelsFollowTheSamePath) {
    // Feed the built-in k-means labels back as external labels.
    const auto a = root_ / "ext_a";
    const auto ra = run_pipeline(pipeline_config_from_json(synthetic_config(root_ / "data/manifest.json", a)));
    const auto run = load_run(a);
    std::ostringstream labels;
    for (std::size_t i = 0; i < run.nodes.size(); ++i) labels << run.nodes[i] << ' ' << run.cluster[i] << '\n';
    write_file(root_ / "ext_labels.txt", labels.str());
    auto j = synthetic_config(root_ / "data/manifest.json", root_ / "ext_b");
    j["inputs"]["external_labels"] = (root_ / "ext_labels.txt").string();
    const auto rb = run_pipeline(pipeline_config_from_json(j));
    EXPECT_EQ(ra.report["clusters"], rb.report["clusters"]);
    EXPECT_EQ(ra.report["metrics"], rb.report["metrics"]);
}

TEST_F(SyntheticRun, FailureLeavesPartialReport) {
    auto j = synthetic_config(root_ / "data/manifest.json", root_ / "broken");
    j["inputs"]["edges"] = (root_ / "missing_edges.txt").string();
    EXPECT_THROW(run_pipeline(pipeline_config_from_json(j)), IoError);
    ASSERT_TRUE(fs::exists(root_ / "broken" / "report.json.partial"));
    EXPECT_FALSE(fs::exists(root_ / "broken" / "report.json"));
    const auto err = nlohmann::json::parse(read_file(root_ / "broken" / "report.json.partial"));
    EXPECT_NE(err["error"].get<std::string>().find("missing_edges"), std::string::npos);
}

TEST_F(SyntheticRun, ExportViews) {
    const auto out = root_ / "export";
    run_pipeline(pipeline_config_from_json(synthetic_config(root_ / "data/manifest.json", out)));
    const auto run = load_run(out);

    std::ostringstream graphml;
    export_view(run, "graphml", graphml);
    std::istringstream gin(graphml.str());
    const auto psi = read_graphml_psi(gin);
    const auto [cr, mm] = clusters_from_report(run.report);
    EXPECT_EQ(mm.m(), 9u);
    for (const auto& [key, v] : psi)
        EXPECT_NEAR(v, mm.psi(static_cast<Eigen::Index>(key.first), static_cast<Eigen::Index>(key.second)), 1e-12);
    std::size_t nodes = 0;
    for (std::size_t pos = graphml.str().find("<node "); pos != std::string::npos;
         pos = graphml.str().find("<node ", pos + 1))
        ++nodes;
    EXPECT_EQ(nodes, 9u);

    std::ostringstream csv;
    export_view(run, "csv", csv);
    std::istringstream cin(csv.str());
    std::string line;
    std::getline(cin, line);
    EXPECT_EQ(line.rfind("node,z0,", 0), 0u);
    std::size_t rows = 0;
    while (std::getline(cin, line)) rows += !line.empty();
    EXPECT_EQ(rows, run.nodes.size());

    std::ostringstream table;
    export_view(run, "nodes", table);
    EXPECT_EQ(table.str().rfind("node,cluster,flagged,f_e,suspended\n", 0), 0u);

    std::ostringstream sink;
    try {
        export_view(run, "svg", sink);
        FAIL() << "expected a config error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("graphml, csv, nodes"), std::string::npos);
    }
}

TEST(RealMode, NoTruthOmitsMetricsButKeepsOtherReports) {
    const auto dir = scratch("real");
    write_real_inputs(dir);
    auto j = real_config(dir, dir / "out");
    j["inputs"].erase("suspensions");
    j["inputs"].erase("bot_scores");
    const auto r = run_pipeline(pipeline_config_from_json(j));
    EXPECT_TRUE(r.report["metrics"].is_null());
    EXPECT_FALSE(fs::exists(dir / "out" / "metrics.json"));
    EXPECT_TRUE(fs::exists(dir / "out" / "creeds.json"));
    EXPECT_TRUE(fs::exists(dir / "out" / "meso.json"));
    EXPECT_FALSE(r.report["flag"]["elbow"].is_null());
}

TEST(RealMode, SignificantCreedsEngagementAndIndices) {
    const auto dir = scratch("real_full");
    write_real_inputs(dir);
    const auto cfg = pipeline_config_from_json(real_config(dir, dir / "out"));
    const auto in = load_inputs(cfg);
    const auto res = run_stages(cfg, in);
    // J_S is the top 3 of {#Coord, #Campaign, #news, #sports, #coord}.
    EXPECT_EQ(res.significant.top.size(), 3u);
    for (Index j : res.significant.matched) {
        const auto name = detail::fold_case(in.attributes.attributes.name(j));
        EXPECT_TRUE(name == "#coord" || name == "#campaign");
    }
    ASSERT_FALSE(res.significant.matched.empty());
    EXPECT_EQ(res.node_engagement.size(), in.graph.n());
    for (const auto& c : res.creeds) EXPECT_TRUE(c.restricted);
    // The dense block 0..14 lands in one cluster whose creed is a coordination tag.
    const auto c0 = res.clusters.labels[*in.graph.ids.find("u0")];
    for (int i = 1; i < 15; ++i) EXPECT_EQ(res.clusters.labels[*in.graph.ids.find("u" + std::to_string(i))], c0);
    EXPECT_TRUE(res.clusters.clusters[c0].flagged);
    for (const auto& c : res.creeds)
        if (c.cluster == c0) {
            ASSERT_TRUE(c.creed);
            const auto name = in.attributes.attributes.name(*c.creed);
            EXPECT_TRUE(name == "#Coord" || name == "#Campaign") << name;
        }
    ASSERT_TRUE(res.metrics);
    EXPECT_FALSE(res.metrics->quality);
    ASSERT_TRUE(res.metrics->suspension_index);
    EXPECT_GT(*res.metrics->suspension_index, 1.0);
    ASSERT_TRUE(res.metrics->bot_influence_index);
    EXPECT_GT(*res.metrics->bot_influence_index, 0.0);
}

TEST(Bench, NeedsThreeSizes) {
    EXPECT_THROW(bench_scaling({2000, 4000}, 1), ConfigError);
}

TEST(Bench, LeastSquaresExactLine) {
    const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
    const auto f = least_squares(x, y);
    EXPECT_DOUBLE_EQ(f.slope, 2.0);
    EXPECT_DOUBLE_EQ(f.intercept, 1.0);
    EXPECT_DOUBLE_EQ(f.r2, 1.0);
}

TEST(Bench, SmallSweepProducesRowsAndFit) {
    const auto b = bench_scaling({500, 1000, 1500}, 2, 1, 5);
    ASSERT_EQ(b.rows.size(), 3u);
    for (const auto& r : b.rows) {
        EXPECT_GT(r.nnz, 0u);
        EXPECT_GT(r.seconds, 0.0);
    }
    EXPECT_LT(b.rows[0].nnz, b.rows[2].nnz);
    const auto j = to_json(b);
    EXPECT_EQ(j["rows"].size(), 3u);
    EXPECT_TRUE(j["fit"].contains("r2"));
}
