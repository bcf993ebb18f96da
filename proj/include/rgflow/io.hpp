// Result files: flow traces as JSON lines, tables as CSV, Fock vectors in a
// small self-describing binary format, operators as sparse triplet text.

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "rgflow/kernel_io.hpp"
#include "rgflow/solver.hpp"

namespace rgflow::io {

inline void ensure_dir(const std::string& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

inline std::string json_num(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

inline void write_flow_trace(const std::string& path, const FlowResult& fr) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    for (const auto& s : fr.steps) {
        f << "{\"step\":" << s.step << ",\"alpha\":" << json_num(s.ball.alpha)
          << ",\"beta\":" << json_num(s.ball.beta) << ",\"gamma\":" << json_num(s.ball.gamma)
          << ",\"tail\":" << json_num(s.tail)
          << ",\"tail_policy\":\"additive\""
          << ",\"gamma_ratio\":" << json_num(s.contraction.gamma_ratio)
          << ",\"beta_ratio\":" << json_num(s.contraction.beta_ratio)
          << ",\"schedule_ok\":" << (s.schedule_ok ? "true" : "false")
          << ",\"newton_iters\":" << s.newton_iters_max
          << ",\"fixed_point_residual\":" << json_num(s.fixed_point_residual)
          << ",\"e_deriv_dev\":" << json_num(s.e_deriv_dev)
          << ",\"e_rho_deriv_min\":" << json_num(s.e_rho_deriv_min)
          << ",\"q_ratio\":" << json_num(s.q_ratio) << ",\"c_theta\":" << json_num(s.c_theta)
          << "}\n";
    }
}

inline void write_eigenpair_json(const std::string& path, cplx energy, double norm,
                                 double residual) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << "{\"energy_re\":" << json_num(energy.real())
      << ",\"energy_im\":" << json_num(energy.imag()) << ",\"vector_norm\":" << json_num(norm)
      << ",\"residual\":" << json_num(residual) << "}\n";
}

// Fock vector: magic, basis descriptor, raw little-endian complex doubles.
inline void save_fock_vector(const std::string& path, const DiscreteFockSpace& sp, int atom_dim,
                             const VectorXcd& v) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write("FVEC", 4);
    detail::put_u32(f, 1);
    detail::put_u32(f, uint32_t(atom_dim));
    detail::put_u32(f, uint32_t(sp.n_modes));
    detail::put_u32(f, uint32_t(sp.n_ph_max));
    detail::put_u32(f, uint32_t(v.size()));
    for (int i = 0; i < v.size(); ++i) {
        detail::put_f64(f, v[i].real());
        detail::put_f64(f, v[i].imag());
    }
}

inline VectorXcd load_fock_vector(const std::string& path, int* atom_dim = nullptr,
                                  int* n_modes = nullptr, int* n_ph = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "FVEC", 4) != 0) throw std::runtime_error("not a Fock vector file");
    if (detail::get_u32(f) != 1) throw std::runtime_error("unsupported vector file version");
    uint32_t ad = detail::get_u32(f), nm = detail::get_u32(f), np = detail::get_u32(f);
    if (atom_dim) *atom_dim = int(ad);
    if (n_modes) *n_modes = int(nm);
    if (n_ph) *n_ph = int(np);
    VectorXcd v(detail::get_u32(f));
    for (int i = 0; i < v.size(); ++i) {
        double re = detail::get_f64(f), im = detail::get_f64(f);
        v[i] = cplx(re, im);
    }
    return v;
}

// Sparse triplet text export: "row col re im" per nonzero entry.
inline void export_operator_triplets(const std::string& path, const MatrixXcd& a,
                                     double drop_tol = 0.0) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << std::setprecision(17);
    f << "# rows " << a.rows() << " cols " << a.cols() << "\n";
    for (int j = 0; j < a.cols(); ++j)
        for (int i = 0; i < a.rows(); ++i)
            if (std::abs(a(i, j)) > drop_tol)
                f << i << " " << j << " " << a(i, j).real() << " " << a(i, j).imag() << "\n";
}

struct CsvWriter {
    std::ofstream f;
    explicit CsvWriter(const std::string& path, const std::string& header) : f(path) {
        if (!f) throw std::runtime_error("cannot open for write: " + path);
        f << std::setprecision(17) << header << "\n";
    }
    template <class... T>
    void row(T... xs) {
        bool first = true;
        ((f << (first ? "" : ","), first = false, f << xs), ...);
        f << "\n";
    }
};

}  // namespace rgflow::io
