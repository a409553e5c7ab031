#pragma once

// Static views of a completed run directory: GraphML cluster graph, CSV
// embedding, CSV node table.

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinyblock/embed.hpp"
#include "tinyblock/evalkit.hpp"
#include "tinyblock/meso.hpp"
#include "tinyblock/synthgen.hpp"

namespace tinyblock {

struct RunArtifacts {
    std::filesystem::path directory;
    nlohmann::json report;
    std::vector<std::string> nodes;
    std::vector<Index> cluster;
    std::vector<std::optional<double>> engagement;
    std::vector<std::optional<int>> suspended;
};

/// Reads report.json and assignments.csv of a run.
inline RunArtifacts load_run(const std::filesystem::path& dir) {
    RunArtifacts r;
    r.directory = dir;
    r.report = nlohmann::json::parse(read_file(dir / "report.json"));
    std::istringstream in(read_file(dir / "assignments.csv"));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1) continue;
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 4) throw ParseError("assignments.csv: expected 4 fields", lineno);
        r.nodes.emplace_back(f[0]);
        const auto c = detail::parse_integer<Index>(f[1]);
        if (!c) throw ParseError("assignments.csv: bad cluster id", lineno);
        r.cluster.push_back(*c);
        r.engagement.push_back(f[2].empty() ? std::nullopt : std::optional<double>(std::stod(std::string(f[2]))));
        r.suspended.push_back(f[3].empty() ? std::nullopt : std::optional<int>(f[3] == "1" ? 1 : 0));
    }
    return r;
}

/// Rebuilds the cluster table and meso matrix stored in a report.
inline std::pair<ClusterResult, MesoMatrix> clusters_from_report(const nlohmann::json& report) {
    ClusterResult cr;
    std::size_t m = 0;
    for (const auto& c : report.at("clusters")) m = std::max<std::size_t>(m, c.at("cluster_id").get<std::size_t>() + 1);
    cr.clusters.resize(m);
    for (const auto& c : report.at("clusters")) {
        auto& s = cr.clusters[c.at("cluster_id").get<std::size_t>()];
        s.id = c.at("cluster_id").get<Index>();
        s.size = c.at("size").get<std::size_t>();
        s.edge_probability = c.at("edge_probability").get<double>();
        s.flagged = c.at("flagged").get<bool>();
        s.rank = c.at("rank").get<std::size_t>();
        cr.ranking.push_back(s.id);
    }
    MesoMatrix mm;
    std::size_t mp = 0;
    for (const auto& e : report.at("meso")) mp = std::max<std::size_t>(mp, e.at("p").get<std::size_t>() + 1);
    mm.psi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mp), static_cast<Eigen::Index>(mp));
    for (const auto& e : report.at("meso")) {
        const auto c = e.at("c").get<Eigen::Index>(), p = e.at("p").get<Eigen::Index>();
        mm.psi(c, p) = mm.psi(p, c) = e.at("psi").get<double>();
    }
    // Meso ids match cluster ids unless empty clusters were dropped.
    if (mp == m)
        for (const auto& s : cr.clusters) mm.sizes.push_back(s.size);
    else
        for (const auto& s : cr.clusters)
            if (s.size > 0) mm.sizes.push_back(s.size);
    return {std::move(cr), std::move(mm)};
}

inline constexpr const char* export_formats[] = {"graphml", "csv", "nodes"};

/// graphml: one node per cluster, psi-weighted edges.
/// csv: embedding rows, header `node,z0,...`.
/// nodes: `node,cluster,flagged,f_e,suspended`.
inline void export_view(const RunArtifacts& run, const std::string& format, std::ostream& out) {
    if (format == "graphml") {
        const auto [cr, mm] = clusters_from_report(run.report);
        write_graphml(mm, mm.m() == cr.m() ? &cr : nullptr, out);
    } else if (format == "csv") {
        std::istringstream bin(read_file(run.directory / "embedding.bin"), std::ios::binary);
        const auto z = read_embedding_binary(bin);
        if (static_cast<std::size_t>(z.rows()) != run.nodes.size())
            throw ContractError("export: embedding rows differ from assignment rows");
        write_embedding_csv(z, IdMap::from_names(run.nodes), out);
    } else if (format == "nodes") {
        const auto [cr, mm] = clusters_from_report(run.report);
        out.precision(17);
        out << "node,cluster,flagged,f_e,suspended\n";
        for (std::size_t i = 0; i < run.nodes.size(); ++i) {
            const auto c = run.cluster[i];
            out << run.nodes[i] << ',' << c << ',' << (c < cr.m() && cr.clusters[c].flagged ? 1 : 0) << ',';
            if (run.engagement[i]) out << *run.engagement[i];
            out << ',';
            if (run.suspended[i]) out << *run.suspended[i];
            out << '\n';
        }
    } else {
        std::string listed;
        for (const char* f : export_formats) listed += listed.empty() ? f : std::string(", ") + f;
        throw ConfigError("export: unknown format `" + format + "` (available: " + listed + ")");
    }
}

}  // namespace tinyblock
