// Sectioned key-value run configuration with line-anchored errors.

#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rgflow/solver.hpp"

namespace rgflow {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
    ToyModel model;
    int r_nodes = 65;
    int k_intervals = 8;
    int k_pts = 2;
    double k_grading_ratio = 2.0;
    double measure_const = 1.0;
    PipelineConfig pipeline;
    std::string out_dir = "out";
    // scan block
    std::string scan_kind;               // "beta", "g" or "rho"
    double beta_min = -1.0, beta_max = 1.0;
    int beta_points = 9;
    double beta_h = 0.2;
    int beta_order = 2;
    double g_contour_radius = 0.05;
    int g_points = 16;
    int g_n_max = 6;
    std::vector<double> rho_values{0.05, 0.1, 0.2};

    std::shared_ptr<const RadialGrid> make_run_grid() const {
        return make_grid(r_nodes, k_intervals, k_pts, k_grading_ratio, measure_const);
    }
};

namespace detail_cfg {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double num(const std::string& v, int line) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError("line " + std::to_string(line) + ": expected a number, got '" + v + "'");
    }
}

inline int integer(const std::string& v, int line) {
    double x = num(v, line);
    int i = int(std::lround(x));
    if (std::abs(x - i) > 1e-12)
        throw ConfigError("line " + std::to_string(line) + ": expected an integer, got '" + v + "'");
    return i;
}

}  // namespace detail_cfg

inline RunConfig parse_config(std::istream& in, const std::string& name = "<config>") {
    using detail_cfg::integer;
    using detail_cfg::num;
    using detail_cfg::trim;
    RunConfig cfg;
    std::string line, section;
    int ln = 0;
    bool g_im_set = false;
    double g_re = 0.05, g_im = 0.0;
    while (std::getline(in, line)) {
        ++ln;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError("line " + std::to_string(ln) + ": unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            static const std::map<std::string, int> known{{"model", 0},  {"grids", 0},
                                                          {"rg", 0},     {"oracle", 0},
                                                          {"z_samples", 0}, {"output", 0},
                                                          {"scan", 0}};
            if (!known.count(section))
                throw ConfigError("line " + std::to_string(ln) + ": unknown section [" + section +
                                  "]");
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(ln) + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (section.empty())
            throw ConfigError("line " + std::to_string(ln) + ": key outside any section");

        auto unknown = [&]() {
            throw ConfigError("line " + std::to_string(ln) + ": unknown key '" + key +
                              "' in section [" + section + "]");
        };
        if (section == "model") {
            if (key == "atom_dim") {
                int d = integer(val, ln);
                if (d < 1 || d > 16)
                    throw ConfigError("line " + std::to_string(ln) + ": atom_dim out of range");
                cfg.model.atom_dim = d;
                cfg.model.h_at = Eigen::MatrixXcd::Zero(d, d);
                for (int i = 1; i < d; ++i) cfg.model.h_at(i, i) = 1.0 + 0.25 * (i - 1);
            } else if (key == "g") {
                g_re = num(val, ln);
            } else if (key == "g_im") {
                g_im = num(val, ln);
                g_im_set = true;
            } else if (key == "beta") {
                cfg.model.beta = num(val, ln);
            } else if (key == "lambda_uv") {
                cfg.model.uv_cutoff = num(val, ln);
                if (cfg.model.uv_cutoff <= 0.0 || cfg.model.uv_cutoff > 1.0)
                    throw ConfigError("line " + std::to_string(ln) +
                                      ": lambda_uv must lie in (0, 1]");
            } else if (key == "coupling_amp") {
                cfg.model.coupling_amp = num(val, ln);
            } else if (key == "beta_coupled") {
                cfg.model.beta_coupled = integer(val, ln) != 0;
            } else {
                unknown();
            }
        } else if (section == "grids") {
            if (key == "r_nodes") cfg.r_nodes = integer(val, ln);
            else if (key == "k_intervals") cfg.k_intervals = integer(val, ln);
            else if (key == "k_pts") cfg.k_pts = integer(val, ln);
            else if (key == "k_grading_ratio") cfg.k_grading_ratio = num(val, ln);
            else if (key == "measure_const") cfg.measure_const = num(val, ln);
            else unknown();
        } else if (section == "rg") {
            if (key == "rho") cfg.pipeline.rg.rho = num(val, ln);
            else if (key == "xi") cfg.pipeline.rg.xi = num(val, ln);
            else if (key == "l_max") cfg.pipeline.rg.l_max = integer(val, ln);
            else if (key == "l_max_00") cfg.pipeline.rg.l_max_00 = integer(val, ln);
            else if (key == "m_cap") cfg.pipeline.rg.m_cap = integer(val, ln);
            else if (key == "m_max") cfg.pipeline.m_max = integer(val, ln);
            else if (key == "newton_tol") cfg.pipeline.rg.newton_tol = num(val, ln);
            else if (key == "newton_max_iter") cfg.pipeline.rg.newton_max_iter = integer(val, ln);
            else if (key == "fine_r") cfg.pipeline.rg.fine_r = integer(val, ln);
            else if (key == "l_max_initial") cfg.pipeline.init.l_max = integer(val, ln);
            else if (key == "l_max_initial_offdiag")
                cfg.pipeline.init.l_max_offdiag = integer(val, ln);
            else unknown();
        } else if (section == "oracle") {
            if (key == "n_ph_max") cfg.pipeline.oracle_n_ph = integer(val, ln);
            else if (key == "psi_n_ph") cfg.pipeline.psi_n_ph = integer(val, ln);
            else unknown();
        } else if (section == "z_samples") {
            if (key == "contour_radius")
                cfg.pipeline.init.zgrid.contour_radius = num(val, ln);
            else if (key == "n_contour") cfg.pipeline.init.zgrid.n_contour = integer(val, ln);
            else if (key == "n_interior") cfg.pipeline.init.zgrid.n_interior = integer(val, ln);
            else unknown();
        } else if (section == "output") {
            if (key == "dir") cfg.out_dir = val;
            else unknown();
        } else if (section == "scan") {
            if (key == "kind") {
                if (val != "beta" && val != "g" && val != "rho")
                    throw ConfigError("line " + std::to_string(ln) +
                                      ": scan kind must be beta, g or rho");
                cfg.scan_kind = val;
            } else if (key == "beta_min") cfg.beta_min = num(val, ln);
            else if (key == "beta_max") cfg.beta_max = num(val, ln);
            else if (key == "beta_points") cfg.beta_points = integer(val, ln);
            else if (key == "beta_h") cfg.beta_h = num(val, ln);
            else if (key == "g_contour_radius") cfg.g_contour_radius = num(val, ln);
            else if (key == "g_points") cfg.g_points = integer(val, ln);
            else if (key == "g_n_max") cfg.g_n_max = integer(val, ln);
            else if (key == "rho_values") {
                cfg.rho_values.clear();
                std::stringstream ss(val);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    cfg.rho_values.push_back(num(detail_cfg::trim(tok), ln));
            } else unknown();
        }
    }
    cfg.model.g = cplx(g_re, g_im_set ? g_im : 0.0);
    // validate hypothesis-level parameter ranges before any computation
    try {
        cfg.pipeline.rg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(name + ": " + e.what());
    }
    if (cfg.r_nodes < 9) throw ConfigError(name + ": r_nodes too small");
    if (cfg.pipeline.init.zgrid.contour_radius >= 0.5)
        throw ConfigError(name + ": z contour must stay inside D_1/2");
    cfg.pipeline.init.xi = cfg.pipeline.rg.xi;
    cfg.pipeline.init.fine_r = cfg.pipeline.rg.fine_r;
    cfg.pipeline.init.threads = cfg.pipeline.rg.threads;
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    return parse_config(f, path);
}

}  // namespace rgflow
