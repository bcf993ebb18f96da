// Self-describing binary files for kernels and kernel sequences.
// Layout: magic, version, header ints/doubles, grids, then row-major complex
// arrays as raw little-endian doubles.  Round-trips are bit-exact.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "rgflow/kernel.hpp"
#include "rgflow/kernel_sequence.hpp"

namespace rgflow::io {

namespace detail {

inline void put_u32(std::ostream& o, uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_f64(std::ostream& o, double v) { o.write(reinterpret_cast<const char*>(&v), 8); }
inline uint32_t get_u32(std::istream& i) {
    uint32_t v;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline double get_f64(std::istream& i) {
    double v;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

inline void put_grid(std::ostream& o, const RadialGrid& g) {
    put_u32(o, uint32_t(g.nr()));
    put_u32(o, uint32_t(g.nk()));
    put_f64(o, g.measure_const);
    for (double x : g.r_nodes) put_f64(o, x);
    for (double x : g.k_nodes) put_f64(o, x);
    for (double x : g.k_weights) put_f64(o, x);
}

inline std::shared_ptr<const RadialGrid> get_grid(std::istream& i) {
    auto g = std::make_shared<RadialGrid>();
    uint32_t nr = get_u32(i), nk = get_u32(i);
    g->measure_const = get_f64(i);
    g->r_nodes.resize(nr);
    for (auto& x : g->r_nodes) x = get_f64(i);
    g->k_nodes.resize(nk);
    for (auto& x : g->k_nodes) x = get_f64(i);
    g->k_weights.resize(nk);
    for (auto& x : g->k_weights) x = get_f64(i);
    g->r_bary = cheb::lobatto_bary_weights(int(nr));
    g->r_diff = cheb::diff_matrix(g->r_nodes, g->r_bary);
    return g;
}

inline void put_array(std::ostream& o, const std::vector<cplx>& a) {
    put_u32(o, uint32_t(a.size()));
    for (const cplx& v : a) {
        put_f64(o, v.real());
        put_f64(o, v.imag());
    }
}

inline std::vector<cplx> get_array(std::istream& i) {
    std::vector<cplx> a(get_u32(i));
    for (auto& v : a) {
        double re = get_f64(i), im = get_f64(i);
        v = cplx(re, im);
    }
    return a;
}

}  // namespace detail

inline void save_kernel(std::ostream& o, const Kernel& w) {
    o.write("WKRN", 4);
    detail::put_u32(o, 1);
    detail::put_u32(o, uint32_t(w.m()));
    detail::put_u32(o, uint32_t(w.n()));
    detail::put_grid(o, w.grid());
    detail::put_array(o, w.values());
}

inline void save_kernel(const std::string& path, const Kernel& w) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    save_kernel(f, w);
}

inline Kernel load_kernel(std::istream& i) {
    char magic[4];
    i.read(magic, 4);
    if (std::memcmp(magic, "WKRN", 4) != 0) throw std::runtime_error("not a kernel file");
    if (detail::get_u32(i) != 1) throw std::runtime_error("unsupported kernel file version");
    int m = int(detail::get_u32(i)), n = int(detail::get_u32(i));
    auto g = detail::get_grid(i);
    Kernel w(m, n, g);
    auto vals = detail::get_array(i);
    if (vals.size() != w.values().size()) throw std::runtime_error("kernel file: bad array size");
    w.values() = std::move(vals);
    w.update_dr();
    return w;
}

inline Kernel load_kernel(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    return load_kernel(f);
}

inline void save_sequence(const std::string& path, const KernelSequence& s) {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw std::runtime_error("cannot open for write: " + path);
    o.write("WSEQ", 4);
    detail::put_u32(o, 1);
    detail::put_f64(o, s.z().real());
    detail::put_f64(o, s.z().imag());
    detail::put_f64(o, s.xi());
    detail::put_f64(o, s.tail_bound());
    detail::put_grid(o, s.grid());
    detail::put_array(o, s.u00());
    detail::put_u32(o, uint32_t(s.sectors().size()));
    for (const auto& [mn, k] : s.sectors()) {
        detail::put_u32(o, uint32_t(mn.first));
        detail::put_u32(o, uint32_t(mn.second));
        detail::put_array(o, k.values());
    }
}

inline KernelSequence load_sequence(const std::string& path) {
    std::ifstream i(path, std::ios::binary);
    if (!i) throw std::runtime_error("cannot open for read: " + path);
    char magic[4];
    i.read(magic, 4);
    if (std::memcmp(magic, "WSEQ", 4) != 0) throw std::runtime_error("not a sequence file");
    if (detail::get_u32(i) != 1) throw std::runtime_error("unsupported sequence file version");
    double zr = detail::get_f64(i), zi = detail::get_f64(i);
    double xi = detail::get_f64(i);
    double tail = detail::get_f64(i);
    auto g = detail::get_grid(i);
    KernelSequence s(g, cplx(zr, zi), xi);
    s.set_u00(detail::get_array(i));
    s.set_tail(tail);
    uint32_t nsec = detail::get_u32(i);
    for (uint32_t j = 0; j < nsec; ++j) {
        int m = int(detail::get_u32(i)), n = int(detail::get_u32(i));
        Kernel k(m, n, g);
        auto vals = detail::get_array(i);
        if (vals.size() != k.values().size()) throw std::runtime_error("sequence file: bad sector");
        k.values() = std::move(vals);
        k.update_dr();
        s.set_sector(std::move(k));
    }
    return s;
}

}  // namespace rgflow::io
