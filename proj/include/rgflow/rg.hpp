// The renormalization transformation: the spectral map E and its inverse, the
// Wick-ordered renormalized kernels, the discrete dilation, and contraction
// diagnostics.

#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "rgflow/fock.hpp"
#include "rgflow/series.hpp"

namespace rgflow {

struct NumericalFailure : std::runtime_error {
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

struct RGConfig {
    double rho = 0.1;
    double xi = 0.2;
    int l_max = 2;        // Neumann depth of the renormalized kernels
    int l_max_00 = 3;     // depth of the (0,0) correction series
    int m_cap = 2;        // highest stored sector total
    double newton_tol = 1e-13;
    int newton_max_iter = 50;
    int fine_r = 161;
    int threads = 1;

    void validate() const {
        if (!(rho > 0.0 && rho <= 0.25)) throw std::invalid_argument("rho must be in (0, 1/4]");
        if (!(xi > 0.0 && xi <= 0.25)) throw std::invalid_argument("xi must be in (0, 1/4]");
        if (l_max < 1 || l_max_00 < 2) throw std::invalid_argument("bad series depths");
    }
    double t_floor() const { return 3.0 * rho / 32.0; }
};

// E[w](z) = -<Omega, H(w(z)) Omega> = -w00(z, 0) = z - u(z, 0).
inline cplx E_of(const KernelSequence& w) { return w.z() - w.u00().front(); }

// The correction u(z, 0) as a polynomial read off the contour samples; E and
// its derivative follow without any O(1) cancellations.
struct SpectralContour {
    double radius = 0.3;
    std::vector<cplx> coef;  // u(z,0) = sum_j coef[j] (z/radius)^j

    cplx u0(cplx z) const {
        cplx t = z / radius, acc{};
        for (int j = int(coef.size()) - 1; j >= 0; --j) acc = acc * t + coef[j];
        return acc;
    }
    cplx du0(cplx z) const {
        cplx t = z / radius, acc{};
        for (int j = int(coef.size()) - 1; j >= 1; --j) acc = acc * t + double(j) * coef[j];
        return acc / radius;
    }
    cplx E(cplx z) const { return z - u0(z); }
    cplx dE(cplx z) const { return 1.0 - du0(z); }
    cplx E_rho(cplx z, double rho) const { return (z - u0(z)) / rho; }
};

inline SpectralContour make_spectral_contour(const SampledSequence& w) {
    const int n = w.zgrid.n_contour;
    SpectralContour sc;
    sc.radius = w.zgrid.contour_radius;
    sc.coef.assign(n, cplx{});
    for (int k = 0; k < n; ++k) {
        cplx acc{};
        for (int j = 0; j < n; ++j) {
            double th = -2.0 * M_PI * double(j) * double(k) / double(n);
            acc += w.samples[j].u00().front() * cplx(std::cos(th), std::sin(th));
        }
        sc.coef[k] = acc / double(n);
    }
    return sc;
}

// Newton solve of E_rho(I) = z_target in the deviation variable
// sigma = I - rho z_target, which stays at the scale of the correction u.
// Working in sigma avoids an O(1) cancellation when the caller needs the
// small offset z_target - I/rho = -sigma/rho.
inline cplx invert_E(const SpectralContour& sc, double rho, cplx z_target, const RGConfig& cfg,
                     int* iters_out = nullptr, cplx* sigma_out = nullptr) {
    if (std::abs(z_target) >= 0.5 + 1e-12)
        throw std::invalid_argument("invert_E: target outside D_1/2");
    const cplx base = rho * z_target;
    cplx sigma{};
    double best = 1e300;
    cplx best_sigma = sigma;
    int it = 0;
    for (; it < cfg.newton_max_iter; ++it) {
        cplx zeta = base + sigma;
        cplx res = (sigma - sc.u0(zeta)) / rho;  // = E_rho(zeta) - z_target
        double r = std::abs(res);
        if (r < best) {
            best = r;
            best_sigma = sigma;
        }
        if (r < 1e-15) break;
        cplx d = (1.0 - sc.du0(zeta)) / rho;
        sigma -= res / d;
    }
    if (iters_out) *iters_out = it;
    if (best > cfg.newton_tol)
        throw NumericalFailure("invert_E: Newton did not reach the residual tolerance");
    cplx zeta = base + best_sigma;
    if (std::abs(zeta) > 5.0 * rho / 8.0 + 1e-9)
        throw NumericalFailure("invert_E: inverse escaped D_{5 rho/8}");
    if (sigma_out) *sigma_out = best_sigma;
    return zeta;
}

// Lagrange interpolation of the sampled family at an interior point zeta,
// using the contour samples only (analyticity in z).
inline KernelSequence interpolate_at(const SampledSequence& w, cplx zeta) {
    const int n = w.zgrid.n_contour;
    std::vector<cplx> nodes(n), wts(n);
    for (int j = 0; j < n; ++j) nodes[j] = w.zgrid.point(j);
    for (int j = 0; j < n; ++j) {
        cplx p = 1.0;
        for (int i = 0; i < n; ++i)
            if (i != j) p *= nodes[j] - nodes[i];
        wts[j] = 1.0 / p;
    }
    std::vector<cplx> lag(n);
    cplx prod = 1.0;
    for (int j = 0; j < n; ++j) prod *= zeta - nodes[j];
    for (int j = 0; j < n; ++j) {
        cplx d = zeta - nodes[j];
        if (std::abs(d) < 1e-300) {
            for (int i = 0; i < n; ++i) lag[i] = (i == j) ? 1.0 : 0.0;
            break;
        }
        lag[j] = prod * wts[j] / d;
    }

    const KernelSequence& first = w.samples.front();
    KernelSequence out(first.grid_ptr(), zeta, first.xi());
    std::vector<cplx> u(first.grid().nr(), cplx{});
    for (int j = 0; j < n; ++j)
        for (size_t i = 0; i < u.size(); ++i) u[i] += lag[j] * w.samples[j].u00()[i];
    out.set_u00(std::move(u));
    double tail = 0.0;
    for (int j = 0; j < n; ++j) tail = std::max(tail, w.samples[j].tail_bound());
    out.set_tail(tail);
    for (const auto& [mn, k0] : first.sectors()) {
        Kernel k(mn.first, mn.second, first.grid_ptr());
        for (int j = 0; j < n; ++j) {
            const Kernel& kj = w.samples[j].sector(mn.first, mn.second);
            for (size_t i = 0; i < k.values().size(); ++i) k.values()[i] += lag[j] * kj.values()[i];
        }
        k.update_dr();
        out.set_sector(std::move(k));
    }
    return out;
}

struct SharpStepInfo {
    std::vector<double> layer_norms;
    double q_ratio = 0.0;
    double c_theta = 1.0;
    double f_sup = 0.0;
    double tail_added = 0.0;
};

// One application of the scaled map R^#_rho to a kernel sequence at a single
// spectral point: series assembly, rescaled (0,0) part, symmetrization,
// support projection, and tail bookkeeping.  delta0 = z_out - zeta/rho is the
// spectral-offset datum of the new (0,0) part.
inline KernelSequence renormalize_sharp(const KernelSequence& win, const RGConfig& cfg,
                                        cplx delta0, cplx z_out, SharpStepInfo* info = nullptr) {
    cfg.validate();
    const double rho = cfg.rho;
    wick::FineU ufine = wick::build_fine_u(win, cfg.fine_r);
    wick::FProvider f;
    f.kind = wick::FProvider::Flow;
    f.rho = rho;
    f.zeta = win.z();
    f.u00 = &ufine;
    f.t_floor = cfg.t_floor();

    series::Spec spec;
    spec.l_max = cfg.l_max;
    spec.l_max_00 = cfg.l_max_00;
    spec.m_cap = cfg.m_cap;
    spec.slope = rho;
    spec.p_red = true;
    spec.pref_base = rho;
    spec.fine_r = cfg.fine_r;
    auto so = series::run(win, f, spec);

    KernelSequence out(win.grid_ptr(), z_out, win.xi());
    const auto& g = win.grid();
    std::vector<cplx> u(g.nr());
    for (int ir = 0; ir < g.nr(); ++ir)
        u[ir] = delta0 + win.u00_at(rho * g.r_nodes[ir]) / rho + so.u_series[ir];
    out.set_u00(std::move(u));
    for (auto& [mn, k] : so.sectors) out.set_sector(std::move(k));

    // additive tail policy: inherited uncertainty contracts by 1/2, plus the
    // certified bounds on the truncated orders and sectors
    double tail = 0.5 * win.tail_bound() + so.tail_orders + so.tail_sectors;
    out.set_tail(tail);
    if (info) {
        info->layer_norms = so.layer_norms;
        info->q_ratio = so.q_ratio;
        info->c_theta = so.c_theta;
        info->f_sup = so.f_sup;
        info->tail_added = so.tail_orders + so.tail_sectors;
    }
    return out;
}

struct StepDiagnostics {
    BallParams ball_in, ball_out;
    double tail_in = 0.0, tail_out = 0.0;
    int newton_iters_max = 0;
    double fixed_point_residual_max = 0.0;  // |E_rho(I(z)) - z| over the samples
    double e_deriv_dev = 0.0;               // max |dE/dz - 1| on D_{5rho/8}
    double e_rho_deriv_min = 1e300;         // min |dE_rho/dz|
    double q_ratio = 0.0;
    double c_theta = 0.0;
    double tail_added = 0.0;
    std::vector<double> layer_norms;
};

// Full renormalization step: R_rho(w)(z) = R^#_rho(w(I_rho[w](z))) at every z
// sample, parallel over the output samples.
inline SampledSequence renormalize(const SampledSequence& w, const RGConfig& cfg,
                                   StepDiagnostics* diag = nullptr) {
    cfg.validate();
    SpectralContour sc = make_spectral_contour(w);
    SampledSequence out;
    out.zgrid = w.zgrid;
    out.samples.resize(w.samples.size());

    const int n_out = int(w.samples.size());
    std::vector<int> iters(n_out, 0);
    std::vector<SharpStepInfo> infos(n_out);
    std::vector<double> fp_resid(n_out, 0.0);
    std::exception_ptr err;
    std::mutex err_mu;

    auto work = [&](int i) {
        try {
            cplx zp = out.zgrid.point(i);
            cplx sigma{};
            cplx zeta = invert_E(sc, cfg.rho, zp, cfg, &iters[i], &sigma);
            fp_resid[i] = std::abs((sigma - sc.u0(zeta)) / cfg.rho);
            KernelSequence wz = interpolate_at(w, zeta);
            cplx delta0 = -sigma / cfg.rho;  // = zp - zeta/rho, small-scale exact
            out.samples[i] = renormalize_sharp(wz, cfg, delta0, zp, &infos[i]);
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
        }
    };
    if (cfg.threads > 1) {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < cfg.threads; ++t)
            pool.emplace_back([&] {
                for (int i = next++; i < n_out; i = next++) work(i);
            });
        for (auto& th : pool) th.join();
    } else {
        for (int i = 0; i < n_out; ++i) work(i);
    }
    if (err) std::rethrow_exception(err);

    if (diag) {
        BallParams big{1e300, 1e300, 1e300};
        diag->ball_in = ball_check(w, big).measured;
        diag->ball_out = ball_check(out, big).measured;
        diag->tail_in = w.samples.front().tail_bound();
        diag->tail_out = out.samples.front().tail_bound();
        for (int i = 0; i < n_out; ++i) {
            diag->newton_iters_max = std::max(diag->newton_iters_max, iters[i]);
            diag->fixed_point_residual_max = std::max(diag->fixed_point_residual_max, fp_resid[i]);
            diag->q_ratio = std::max(diag->q_ratio, infos[i].q_ratio);
            diag->c_theta = std::max(diag->c_theta, infos[i].c_theta);
            diag->tail_added = std::max(diag->tail_added, infos[i].tail_added);
        }
        diag->layer_norms = infos[0].layer_norms;
        // derivative bounds of the spectral map, sampled on |z| = 5 rho / 8
        for (int j = 0; j < 64; ++j) {
            double th = 2.0 * M_PI * j / 64.0;
            cplx z = 0.625 * cfg.rho * cplx(std::cos(th), std::sin(th));
            diag->e_deriv_dev = std::max(diag->e_deriv_dev, std::abs(sc.dE(z) - 1.0));
            diag->e_rho_deriv_min =
                std::min(diag->e_rho_deriv_min, std::abs(sc.dE(z)) / cfg.rho);
        }
    }
    return out;
}

struct ContractionReport {
    double gamma_ratio = 0.0;
    double beta_ratio = 0.0;
    double alpha_growth = 0.0;  // alpha_out - alpha_in
    bool degenerate = false;    // both gammas at the round-off floor
    bool gamma_ok = false;      // gamma_out <= gamma_in / 2 + tail slack
};

inline ContractionReport contraction_report(const BallParams& before, const BallParams& after,
                                            double tail_slack, double floor = 1e-250) {
    ContractionReport rep;
    rep.alpha_growth = after.alpha - before.alpha;
    if (before.gamma < floor && after.gamma < floor) {
        rep.degenerate = true;
        rep.gamma_ok = true;
        rep.gamma_ratio = 0.0;
    } else {
        rep.gamma_ratio = before.gamma > 0 ? after.gamma / before.gamma : 0.0;
        rep.gamma_ok = after.gamma <= 0.5 * before.gamma + tail_slack;
    }
    rep.beta_ratio = before.beta > floor ? after.beta / before.beta : 0.0;
    return rep;
}

// --- discrete dilation ------------------------------------------------------

// One-particle matrix of Gamma_rho^* on the normalized-mode basis:
// (Gamma^* f)(k) = rho^{-1/2} f(k/rho), clipped at k/rho > 1.
inline MatrixXcd dilation_one_particle(const RadialGrid& g, double rho) {
    const int nk = g.nk();
    MatrixXcd d = MatrixXcd::Zero(nk, nk);
    for (int j = 0; j < nk; ++j) {
        double kstar = g.k_nodes[j] / rho;
        if (kstar > 1.0 + 1e-12) continue;  // support clipping at k = 1
        auto win = wick::k_window(g.k_nodes, kstar);
        for (int t = 0; t < 4; ++t) {
            int i = win.i0 + t;
            // interpolate h = f/k and multiply back
            double c = win.w[t] * kstar / g.k_nodes[i];
            d(j, i) += std::sqrt(g.k_weights[j] / g.k_weights[i]) / std::sqrt(rho) * c;
        }
    }
    return d;
}

// Second-quantized application of a one-particle map to a Fock vector.
inline VectorXcd apply_second_quantized(const DiscreteFockSpace& sp, const MatrixXcd& d1,
                                        const VectorXcd& v) {
    VectorXcd out = VectorXcd::Zero(sp.dim());
    std::vector<int> photons;
    for (int s = 0; s < sp.dim(); ++s) {
        if (v[s] == cplx{}) continue;
        photons.clear();
        for (int m = 0; m < sp.n_modes; ++m)
            for (int c = 0; c < sp.basis[s][m]; ++c) photons.push_back(m);
        double innorm = 1.0;
        for (int m = 0; m < sp.n_modes; ++m)
            for (int c = 2; c <= sp.basis[s][m]; ++c) innorm *= double(c);
        // expand prod_t (sum_j d1(j, i_t) a*_j) Omega
        std::vector<std::pair<std::vector<uint8_t>, cplx>> terms;
        terms.push_back({std::vector<uint8_t>(size_t(sp.n_modes), 0), v[s] / std::sqrt(innorm)});
        for (int t = 0; t < int(photons.size()); ++t) {
            std::vector<std::pair<std::vector<uint8_t>, cplx>> nxt;
            for (auto& [occ, amp] : terms) {
                for (int j = 0; j < sp.n_modes; ++j) {
                    if (d1(j, photons[t]) == cplx{}) continue;
                    auto o2 = occ;
                    o2[j]++;
                    nxt.push_back({std::move(o2), amp * d1(j, photons[t])});
                }
            }
            terms = std::move(nxt);
        }
        for (auto& [occ, amp] : terms) {
            int idx = sp.lookup(occ);
            if (idx < 0) continue;
            double outnorm = 1.0;
            for (int m = 0; m < sp.n_modes; ++m)
                for (int c = 2; c <= occ[m]; ++c) outnorm *= double(c);
            out[idx] += amp * std::sqrt(outnorm);
        }
    }
    return out;
}

// --- single-purpose operators used by tests and the eigenvector assembly ----

// Matrix of W^{m,n}_{p,q}[w](r_ext; K_ext) on the Fock space: internal slots
// summed over modes, externals held at continuous values.
inline MatrixXcd w_op_matrix(const Kernel& w, int p, int q, double r_ext,
                             const std::vector<double>& k_ext_create,
                             const std::vector<double>& k_ext_annih, const DiscreteFockSpace& sp,
                             bool p_red = true) {
    const int m = int(k_ext_create.size()), n = int(k_ext_annih.size());
    if (w.m() != m + p || w.n() != n + q) throw std::invalid_argument("w_op_matrix: arity mismatch");
    const auto& g = *sp.grid;
    MatrixXcd h = MatrixXcd::Zero(sp.dim(), sp.dim());
    std::vector<double> ks(size_t(m + p + n + q));
    detail::ordered_tuples(sp.n_modes, q, [&](const std::vector<int>& js) {
        double wj = 1.0;
        for (int j : js) wj *= g.slot_weight(j);
        for (int s = 0; s < sp.dim(); ++s) {
            if (p_red && sp.energy[s] > 1.0 + 1e-12) continue;
            auto occ = sp.basis[s];
            double amp = wj;
            bool dead = false;
            for (int j : js) {
                if (occ[j] == 0) {
                    dead = true;
                    break;
                }
                amp *= std::sqrt(double(occ[j]));
                occ[j]--;
            }
            if (dead) continue;
            double e_mid = sp.energy[s];
            for (int j : js) e_mid -= g.k_nodes[j];
            detail::ordered_tuples(sp.n_modes, p, [&](const std::vector<int>& is) {
                auto occ2 = occ;
                double amp2 = amp;
                for (int i : is) {
                    occ2[i]++;
                    amp2 *= std::sqrt(double(occ2[i])) * g.slot_weight(i);
                }
                int t = sp.lookup(occ2);
                if (t < 0) return;
                if (p_red && sp.energy[t] > 1.0 + 1e-12) return;
                for (int a = 0; a < m; ++a) ks[a] = k_ext_create[a];
                for (int a = 0; a < p; ++a) ks[m + a] = g.k_nodes[is[a]];
                for (int a = 0; a < n; ++a) ks[m + p + a] = k_ext_annih[a];
                for (int a = 0; a < q; ++a) ks[m + p + n + a] = g.k_nodes[js[a]];
                h(t, s) += amp2 * wick::eval_kernel_at(w, e_mid + r_ext, ks);
            });
        }
    });
    return h;
}

// Single renormalized-series term v_{m,p,n,q}[w](r, K) at one grid point.
inline cplx v_term(const KernelSequence& win, const RGConfig& cfg, const wick::Tuple& tup,
                   const std::vector<int>& ext_create, const std::vector<int>& ext_annih,
                   double r_out) {
    const auto& g = win.grid();
    const int nk = g.nk();
    wick::FineU ufine = wick::build_fine_u(win, cfg.fine_r);
    wick::FProvider f;
    f.kind = wick::FProvider::Flow;
    f.rho = cfg.rho;
    f.zeta = win.z();
    f.u00 = &ufine;
    f.t_floor = cfg.t_floor();

    std::vector<double> klist = g.k_nodes;
    for (int i = 0; i < nk; ++i) klist.push_back(cfg.rho * g.k_nodes[i]);
    std::map<std::pair<int, int>, wick::KTable> tables;
    for (const auto& [mn, k] : win.sectors()) tables[mn] = wick::build_ktable(k, klist, cfg.fine_r);

    const int L = int(tup.size());
    std::vector<wick::BoundFactor> bfs(L);
    std::vector<double> fshift(size_t(L) + 1, 0.0);
    std::vector<double> cr_sum(L, 0.0), an_sum(L, 0.0);
    int ci = 0, ai = 0;
    for (int l = 0; l < L; ++l) {
        bfs[l].spec = tup[l];
        bfs[l].table = &tables.at({tup[l].sector_m(), tup[l].sector_n()});
        for (int a = 0; a < tup[l].m; ++a) {
            bfs[l].ext_create[a] = nk + ext_create[ci];
            cr_sum[l] += g.k_nodes[ext_create[ci]];
            ++ci;
        }
        for (int a = 0; a < tup[l].n; ++a) {
            bfs[l].ext_annih[a] = nk + ext_annih[ai];
            an_sum[l] += g.k_nodes[ext_annih[ai]];
            ++ai;
        }
    }
    for (int l = 0; l <= L; ++l) {
        double rl = 0.0;
        for (int lp = 0; lp < l; ++lp) rl += an_sum[lp];
        for (int lp = l; lp < L; ++lp) rl += cr_sum[lp];
        fshift[l] = cfg.rho * rl;
        if (l >= 1) bfs[l - 1].kshift = cfg.rho * (rl - an_sum[l - 1]);
    }

    wick::EngineConfig ecfg;
    ecfg.slope = cfg.rho;
    ecfg.p_red = true;
    ecfg.grid = &g;
    double r_hold = r_out;
    ecfg.r_out = &r_hold;
    ecfg.nr = 1;
    ecfg.f = &f;
    std::vector<cplx> val;
    wick::eval_tuple(ecfg, bfs, fshift, val);
    return val[0];
}

}  // namespace rgflow
