#pragma once

// Output files. Every file is written to a temporary sibling and renamed into
// place, so a reader sees either the complete file or none.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "identification.hpp"

namespace cascade_tune {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string trace_csv(const SimulationTrace& tr) {
    std::ostringstream o;
    o << "t,pos_ref,spd_ref,pos,spd,i_a,v_a\n";
    for (std::size_t k = 0; k < tr.size(); ++k) {
        o << fmt(static_cast<double>(k) * tr.dt) << ',' << fmt(tr.pos_ref[k]) << ',' << fmt(tr.spd_ref[k]) << ','
          << fmt(tr.pos[k]) << ',' << fmt(tr.spd[k]) << ',' << fmt(tr.i_a[k]) << ',' << fmt(tr.v_a[k]) << '\n';
    }
    return o.str();
}

struct GainsRow {
    std::string method;
    ControllerGains gains;
    double cost = 0.0;
    std::size_t evaluations = 0;
};

inline std::string gains_csv(const std::vector<GainsRow>& rows) {
    std::ostringstream o;
    o << "method,K_p,K_v,K_i,cost,evaluations\n";
    for (const auto& r : rows)
        o << r.method << ',' << fmt(r.gains.K_p) << ',' << fmt(r.gains.K_v) << ',' << fmt(r.gains.K_i) << ','
          << fmt(r.cost) << ',' << r.evaluations << '\n';
    return o.str();
}

// `k_v,k_i,cost` for the speed grid, `k_p,cost` for the position grid.
inline std::string surface_csv(const CostSurface& s) {
    std::ostringstream o;
    for (const auto& a : s.grid.axes()) {
        std::string name = a.name;
        for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        o << name << ',';
    }
    o << "cost\n";
    for (std::size_t i = 0; i < s.cost.size(); ++i) {
        for (double v : s.grid.point(i)) o << fmt(v) << ',';
        o << fmt(s.cost[i]) << '\n';
    }
    return o.str();
}

inline std::string bo_log_header() { return "stage,iteration,node,x0,x1,cost,acquisition,incumbent_cost"; }

inline std::string bo_log_line(const std::string& stage, const BoSample& s) {
    std::ostringstream o;
    o << stage << ',' << s.iteration << ',' << s.node << ',' << fmt(s.x.at(0)) << ','
      << (s.x.size() > 1 ? fmt(s.x[1]) : std::string()) << ',' << fmt(s.cost) << ','
      << (std::isnan(s.acquisition) ? std::string() : fmt(s.acquisition)) << ',' << fmt(s.incumbent_cost);
    return o.str();
}

// Reads t, v_a and pos columns (any order, header required) into a trace
// suitable for fit_axial_stiffness.
inline SimulationTrace read_identification_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty trace " + path);
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    const auto header = split(line);
    int it = -1, iv = -1, ip = -1;
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
        if (header[c] == "t") it = c;
        if (header[c] == "v_a") iv = c;
        if (header[c] == "pos") ip = c;
    }
    if (it < 0 || iv < 0 || ip < 0) throw std::runtime_error("trace " + path + " needs t, v_a and pos columns");
    SimulationTrace tr;
    std::vector<double> t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        const int need = std::max({it, iv, ip});
        if (static_cast<int>(cells.size()) <= need) throw std::runtime_error("short row in " + path);
        t.push_back(std::stod(cells[static_cast<std::size_t>(it)]));
        tr.v_a.push_back(std::stod(cells[static_cast<std::size_t>(iv)]));
        tr.pos.push_back(std::stod(cells[static_cast<std::size_t>(ip)]));
    }
    if (t.size() < 2) throw std::runtime_error("trace " + path + " has fewer than two samples");
    tr.dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    const auto n = t.size();
    tr.pos_ref.assign(n, 0.0);
    tr.spd_ref.assign(n, 0.0);
    tr.spd.assign(n, 0.0);
    tr.i_a.assign(n, 0.0);
    tr.motor_pos.assign(n, 0.0);
    tr.motor_spd.assign(n, 0.0);
    return tr;
}

}  // namespace cascade_tune
