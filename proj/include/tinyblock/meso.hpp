#pragma once

// Pairwise cluster interaction strengths and the cluster-graph export.

#include <istream>
#include <map>
#include <ostream>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tinyblock/flag.hpp"

namespace tinyblock {

/// Symmetric m x m interaction matrix. Off-diagonal entries count edges in
/// both directions over |I_c||I_p|; the diagonal is the ordered-pair
/// induced density.
struct MesoMatrix {
    Eigen::MatrixXd psi;
    std::vector<std::size_t> sizes;

    std::size_t m() const noexcept { return sizes.size(); }
};

inline MesoMatrix meso_interaction(const SparseAdjacency& a, std::span<const Index> labels, std::size_t m = 0) {
    detail::require(labels.size() == a.n(), "meso_interaction: label count differs from node count");
    if (m == 0) m = cluster_count(labels);
    MesoMatrix out;
    out.sizes.assign(m, 0);
    for (Index l : labels) {
        detail::require(l < m, "meso_interaction: label out of range");
        ++out.sizes[l];
    }
    for (std::size_t c = 0; c < m; ++c)
        if (out.sizes[c] == 0) throw ContractError("meso_interaction: cluster " + std::to_string(c) + " is empty");
    const auto mi = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(mi, mi);
    for (std::size_t r = 0; r < a.n(); ++r)
        for (Index c : a.matrix.row_indices(r)) counts(labels[r], labels[c]) += 1.0;
    out.psi.resize(mi, mi);
    for (Eigen::Index c = 0; c < mi; ++c) {
        const double sc = static_cast<double>(out.sizes[static_cast<std::size_t>(c)]);
        out.psi(c, c) = sc >= 2 ? counts(c, c) / (sc * (sc - 1.0)) : 0.0;
        for (Eigen::Index p = c + 1; p < mi; ++p) {
            const double sp = static_cast<double>(out.sizes[static_cast<std::size_t>(p)]);
            const double v = (counts(c, p) + counts(p, c)) / (sc * sp);
            out.psi(c, p) = v;
            out.psi(p, c) = v;
        }
    }
    return out;
}

inline MesoMatrix meso_interaction(const SparseAdjacency& a, const ClusterResult& clusters) {
    return meso_interaction(a, clusters.labels, clusters.m());
}

/// Upper-triangular list including the diagonal.
inline nlohmann::ordered_json to_json(const MesoMatrix& mm) {
    auto arr = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < mm.psi.rows(); ++c)
        for (Eigen::Index p = c; p < mm.psi.cols(); ++p) {
            nlohmann::ordered_json e;
            e["c"] = c;
            e["p"] = p;
            e["psi"] = mm.psi(c, p);
            arr.push_back(std::move(e));
        }
    return arr;
}

/// One node per cluster; an undirected edge wherever off-diagonal psi > 0.
inline void write_graphml(const MesoMatrix& mm, const ClusterResult* clusters, std::ostream& out) {
    out.precision(17);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
        << "  <key id=\"size\" for=\"node\" attr.name=\"size\" attr.type=\"long\"/>\n"
        << "  <key id=\"edge_probability\" for=\"node\" attr.name=\"edge_probability\" attr.type=\"double\"/>\n"
        << "  <key id=\"flagged\" for=\"node\" attr.name=\"flagged\" attr.type=\"boolean\"/>\n"
        << "  <key id=\"psi\" for=\"edge\" attr.name=\"psi\" attr.type=\"double\"/>\n"
        << "  <graph id=\"clusters\" edgedefault=\"undirected\">\n";
    for (std::size_t c = 0; c < mm.m(); ++c) {
        out << "    <node id=\"c" << c << "\">\n      <data key=\"size\">" << mm.sizes[c] << "</data>\n"
            << "      <data key=\"edge_probability\">" << mm.psi(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c))
            << "</data>\n";
        if (clusters) out << "      <data key=\"flagged\">" << (clusters->clusters[c].flagged ? "true" : "false") << "</data>\n";
        out << "    </node>\n";
    }
    for (Eigen::Index c = 0; c < mm.psi.rows(); ++c)
        for (Eigen::Index p = c + 1; p < mm.psi.cols(); ++p)
            if (mm.psi(c, p) > 0.0)
                out << "    <edge source=\"c" << c << "\" target=\"c" << p << "\">\n"
                    << "      <data key=\"psi\">" << mm.psi(c, p) << "</data>\n    </edge>\n";
    out << "  </graph>\n</graphml>\n";
}

/// Reads back the psi-weighted edges written by write_graphml.
inline std::map<std::pair<std::size_t, std::size_t>, double> read_graphml_psi(std::istream& in) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    static const std::regex edge_re(
        R"re(<edge source="c(\d+)" target="c(\d+)">\s*<data key="psi">([^<]+)</data>)re");
    std::map<std::pair<std::size_t, std::size_t>, double> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), edge_re); it != std::sregex_iterator(); ++it)
        out[{std::stoul((*it)[1]), std::stoul((*it)[2])}] = std::stod((*it)[3]);
    return out;
}

}  // namespace tinyblock
