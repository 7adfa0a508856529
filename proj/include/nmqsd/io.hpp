#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmqsd/core.hpp"
#include "nmqsd/ensemble.hpp"
#include "nmqsd/hilbert.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/oracle.hpp"

namespace nmqsd {

using Json = nlohmann::json;

// strtod without the out-of-range throw of std::stod (subnormals are fine)
inline double parse_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw std::runtime_error("not a number: " + s);
    return v;
}

// 17 significant digits: doubles survive a write/read round trip exactly.
inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// One observable-series row: t,obs_name,re_mean,im_mean,se
struct SeriesRow {
    double t;
    std::string obs_name;
    Complex mean;
    double se;
};

inline std::string series_csv(const std::vector<SeriesRow>& rows) {
    std::ostringstream out;
    out << "t,obs_name,re_mean,im_mean,se\n";
    for (const auto& r : rows)
        out << format_g17(r.t) << ',' << r.obs_name << ',' << format_g17(r.mean.real()) << ','
            << format_g17(r.mean.imag()) << ',' << format_g17(r.se) << '\n';
    return out.str();
}

inline std::vector<SeriesRow> parse_series_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "t,obs_name,re_mean,im_mean,se")
        throw std::runtime_error("series csv: bad header");
    std::vector<SeriesRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f[5];
        for (int i = 0; i < 5; ++i)
            if (!std::getline(ls, f[i], i < 4 ? ',' : '\n'))
                throw std::runtime_error("series csv: short row");
        rows.push_back({parse_double(f[0]), f[1],
                        Complex(parse_double(f[2]), parse_double(f[3])), parse_double(f[4])});
    }
    return rows;
}

inline std::vector<SeriesRow> ensemble_series_rows(const EnsembleResult& res,
                                                   const std::vector<std::string>& names) {
    std::vector<SeriesRow> rows;
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s)
        for (Eigen::Index o = 0; o < Eigen::Index(names.size()); ++o)
            rows.push_back({res.times(s), names[size_t(o)], res.observable_means(o, s),
                            res.observable_se(o, s)});
    return rows;
}

inline std::vector<SeriesRow> density_series_rows(const DensitySeries& series,
                                                  const std::vector<std::string>& names,
                                                  const std::vector<ComplexMatrix>& ops) {
    std::vector<SeriesRow> rows;
    for (Eigen::Index s = 0; s < series.times.size(); ++s)
        for (size_t o = 0; o < ops.size(); ++o)
            rows.push_back({series.times(s), names[o],
                            (series.rho[size_t(s)] * ops[o]).trace(), 0.0});
    return rows;
}

// densities as row-major [re, im] pairs
inline Json density_series_json(const RealVector& times, const std::vector<ComplexMatrix>& rho,
                                const std::string& source) {
    Json j;
    j["source"] = source;
    j["times"] = std::vector<double>(times.data(), times.data() + times.size());
    Json mats = Json::array();
    for (const auto& m : rho) {
        Json rows = Json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index k = 0; k < m.cols(); ++k)
                rows.push_back({m(i, k).real(), m(i, k).imag()});
        mats.push_back(std::move(rows));
    }
    j["dim"] = rho.empty() ? 0 : rho.front().rows();
    j["densities"] = std::move(mats);
    return j;
}

// Q-function field: header re_beta,im_beta,q, row-major over the grid.
inline std::string q_field_csv(const RealMatrix& q, const QGrid& grid) {
    std::ostringstream out;
    out << "re_beta,im_beta,q\n";
    for (int i = 0; i < grid.n_re; ++i)
        for (int j = 0; j < grid.n_im; ++j)
            out << format_g17(grid.re_at(i)) << ',' << format_g17(grid.im_at(j)) << ','
                << format_g17(q(i, j)) << '\n';
    return out.str();
}

inline RealMatrix parse_q_field_csv(const std::string& text, const QGrid& grid) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "re_beta,im_beta,q")
        throw std::runtime_error("q field csv: bad header");
    RealMatrix q(grid.n_re, grid.n_im);
    for (int i = 0; i < grid.n_re; ++i)
        for (int j = 0; j < grid.n_im; ++j) {
            if (!std::getline(in, line)) throw std::runtime_error("q field csv: short file");
            const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
            q(i, j) = parse_double(line.substr(c2 + 1));
        }
    return q;
}

// Debug export of a noise realization: t,re_z,im_z.
inline std::string noise_path_csv(const NoisePath& p) {
    std::ostringstream out;
    out << "t,re_z,im_z\n";
    for (Eigen::Index i = 0; i < p.times.size(); ++i)
        out << format_g17(p.times(i)) << ',' << format_g17(p.values(i).real()) << ','
            << format_g17(p.values(i).imag()) << '\n';
    return out.str();
}

}  // namespace nmqsd
