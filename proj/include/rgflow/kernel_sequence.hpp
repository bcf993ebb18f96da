// Sequences of Wick-ordered kernels w = (w_{m,n}) at one spectral parameter,
// the xi-weighted norm, polydisc-ball measurements, and the z-sampled family
// the flow iterates on.
//
// The (0,0) component is held in split form
//     w_{0,0}(z, r) = r - z + u(r),
// with only the correction u stored.  Everything the flow ultimately reports
// (ball parameter beta, the spectral map E, the energy iterates) lives at the
// scale of u, and keeping it separated avoids absolute round-off floors from
// the O(1) free part.

#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rgflow/kernel.hpp"

namespace rgflow {

struct BallParams {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

class KernelSequence {
  public:
    KernelSequence() = default;
    KernelSequence(std::shared_ptr<const RadialGrid> grid, cplx z, double xi)
        : grid_(std::move(grid)), z_(z), xi_(xi) {
        u00_.assign(grid_->nr(), cplx{});
        du00_.assign(grid_->nr(), cplx{});
    }

    const RadialGrid& grid() const { return *grid_; }
    std::shared_ptr<const RadialGrid> grid_ptr() const { return grid_; }
    cplx z() const { return z_; }
    void set_z(cplx z) { z_ = z; }
    double xi() const { return xi_; }
    double tail_bound() const { return tail_; }
    void add_tail(double t) { tail_ += t; }
    void set_tail(double t) { tail_ = t; }

    // --- (0,0) component -------------------------------------------------
    const std::vector<cplx>& u00() const { return u00_; }
    const std::vector<cplx>& du00() const { return du00_; }
    void set_u00(std::vector<cplx> u) {
        if (int(u.size()) != grid_->nr()) throw std::invalid_argument("u00 size");
        u00_ = std::move(u);
        du00_ = cheb::apply_diff(grid_->r_diff, u00_);
    }
    cplx w00(double r) const { return r - z_ + u00_at(r); }
    cplx u00_at(double r) const { return cheb::bary_eval(grid_->r_nodes, grid_->r_bary, u00_, r); }
    cplx du00_at(double r) const { return cheb::bary_eval(grid_->r_nodes, grid_->r_bary, du00_, r); }
    // w00 at r = 0 plus z; this is the polydisc beta-quantity, equal to u(0).
    cplx w00_at0_plus_z() const { return u00_.front(); }

    // --- interaction components (m+n >= 2; the m+n = 1 sector is zero) ----
    const std::map<std::pair<int, int>, Kernel>& sectors() const { return sectors_; }
    bool has(int m, int n) const { return sectors_.count({m, n}) != 0; }
    const Kernel& sector(int m, int n) const { return sectors_.at({m, n}); }
    void set_sector(Kernel k) {
        if (k.m() + k.n() == 1)
            throw std::invalid_argument("m+n = 1 sector must vanish identically");
        if (k.m() + k.n() == 0)
            throw std::invalid_argument("use set_u00 for the (0,0) component");
        sectors_[{k.m(), k.n()}] = std::move(k);
    }

    double sharp_norm_00() const {
        // full (0,0) kernel r - z + u: sup |w| + sup |1 + u'|
        const int nfine = 10 * (grid_->nr() - 1) + 1;
        double sv = 0.0, sd = 0.0;
        for (int i = 0; i < nfine; ++i) {
            double r = double(i) / double(nfine - 1);
            sv = std::max(sv, std::abs(r - z_ + u00_at(r)));
            sd = std::max(sd, std::abs(1.0 + du00_at(r)));
        }
        return sv + sd;
    }

    // xi-weighted norm of the interaction part (m+n >= 1) plus tail.
    double gamma_norm() const {
        double acc = tail_;
        for (const auto& [mn, k] : sectors_)
            acc += std::pow(xi_, -double(mn.first + mn.second)) * sharp_norm(k);
        return acc;
    }

    // Full xi-norm: all stored components plus the tail bound.
    double xi_norm() const { return sharp_norm_00() + gamma_norm(); }

    // alpha-quantity: sup_r |d/dr w00 - 1| = sup_r |u'|.
    double alpha_measure() const {
        const int nfine = 10 * (grid_->nr() - 1) + 1;
        double s = 0.0;
        for (int i = 0; i < nfine; ++i)
            s = std::max(s, std::abs(du00_at(double(i) / double(nfine - 1))));
        return s;
    }

  private:
    std::shared_ptr<const RadialGrid> grid_;
    cplx z_{};
    double xi_ = 0.2;
    double tail_ = 0.0;
    std::vector<cplx> u00_, du00_;
    std::map<std::pair<int, int>, Kernel> sectors_;
};

// Spectral-parameter sample set: n_contour equispaced points on |z| = radius
// followed by interior points (ring of half radius plus the origin).
struct ZGrid {
    double contour_radius = 0.3;
    int n_contour = 16;
    int n_interior = 9;

    int total() const { return n_contour + n_interior; }
    cplx point(int i) const {
        if (i < n_contour) {
            double th = 2.0 * M_PI * double(i) / double(n_contour);
            return contour_radius * cplx(std::cos(th), std::sin(th));
        }
        int j = i - n_contour;
        if (j == 0) return cplx{};
        double th = 2.0 * M_PI * double(j - 1) / double(n_interior - 1);
        return 0.5 * contour_radius * cplx(std::cos(th), std::sin(th));
    }
};

// A kernel sequence sampled over the z-grid; samples[i] is at zgrid.point(i).
struct SampledSequence {
    ZGrid zgrid;
    std::vector<KernelSequence> samples;

    const KernelSequence& contour(int j) const { return samples[j]; }
    int n_contour() const { return zgrid.n_contour; }
};

struct BallReport {
    BallParams measured;
    bool inside = false;
    BallParams requested;
};

// Measured polydisc parameters over the sampled z-set, and membership verdict.
inline BallReport ball_check(const SampledSequence& w, const BallParams& req) {
    if (w.samples.empty()) throw std::invalid_argument("ball_check: empty z sample set");
    BallReport rep;
    rep.requested = req;
    for (const auto& s : w.samples) {
        rep.measured.alpha = std::max(rep.measured.alpha, s.alpha_measure());
        rep.measured.beta = std::max(rep.measured.beta, std::abs(s.w00_at0_plus_z()));
        rep.measured.gamma = std::max(rep.measured.gamma, s.gamma_norm());
    }
    rep.inside = rep.measured.alpha <= req.alpha && rep.measured.beta <= req.beta &&
                 rep.measured.gamma <= req.gamma;
    return rep;
}

}  // namespace rgflow
