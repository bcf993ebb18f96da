// Flow iteration, ground-state energy and eigenvector assembly, and the
// smoothness / expansion diagnostics built on top of the renormalization map.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rgflow/initial.hpp"
#include "rgflow/rg.hpp"

namespace rgflow {

struct FlowStepRecord {
    int step = 0;
    BallParams ball;
    double tail = 0.0;
    ContractionReport contraction;   // vs previous step (step >= 1)
    bool schedule_ok = true;         // gamma_n <= eps0 / 2^n + tail slack
    int newton_iters_max = 0;
    double fixed_point_residual = 0.0;
    double e_deriv_dev = 0.0;
    double e_rho_deriv_min = 0.0;
    double q_ratio = 0.0;
    double c_theta = 0.0;
    double tail_added = 0.0;
    SpectralContour contour;
};

struct FlowResult {
    std::vector<FlowStepRecord> steps;      // [0..n_steps], 0 = input kernel
    std::vector<SampledSequence> kernels;   // full history if kept, else {w0, w_last}
    bool history = true;
    double eps0 = 0.0;
    RGConfig cfg;

    const SampledSequence& kernel_at(int n) const {
        if (history) return kernels.at(size_t(n));
        if (n == 0) return kernels.front();
        if (n == int(steps.size()) - 1) return kernels.back();
        throw std::logic_error("flow history was not kept");
    }
};

// Iterate w^(n) = R_rho^n(w0), recording ball parameters, contraction ratios,
// tails and spectral-map diagnostics per step.  Hypothesis thresholds are
// checked at the start; a ball violation aborts with the step index.
inline FlowResult flow(const SampledSequence& w0, const RGConfig& cfg, int n_steps,
                       bool keep_history = true) {
    cfg.validate();
    FlowResult out;
    out.cfg = cfg;
    out.history = keep_history;

    BallParams big{1e300, 1e300, 1e300};
    BallParams b0 = ball_check(w0, big).measured;
    double tail0 = w0.samples.front().tail_bound();
    out.eps0 = 2.0 * std::max({b0.alpha, b0.beta, b0.gamma});
    if (out.eps0 > cfg.rho / 32.0)
        throw BallViolation("flow start: measured eps0 = " + std::to_string(out.eps0) +
                            " exceeds rho/32 (step 0)");

    FlowStepRecord rec0;
    rec0.step = 0;
    rec0.ball = b0;
    rec0.tail = tail0;
    rec0.contour = make_spectral_contour(w0);
    out.steps.push_back(rec0);
    out.kernels.push_back(w0);

    SampledSequence cur = w0;
    for (int n = 1; n <= n_steps; ++n) {
        // membership required by the map itself
        BallParams bin = ball_check(cur, big).measured;
        double lim = cfg.rho / 8.0;
        if (bin.alpha > lim || bin.beta > lim || bin.gamma > lim)
            throw BallViolation("flow: kernel left B(rho/8) before step " + std::to_string(n));
        StepDiagnostics diag;
        SampledSequence nxt = renormalize(cur, cfg, &diag);

        FlowStepRecord rec;
        rec.step = n;
        rec.ball = diag.ball_out;
        rec.tail = nxt.samples.front().tail_bound();
        rec.contraction = contraction_report(diag.ball_in, diag.ball_out, diag.tail_added);
        rec.schedule_ok = diag.ball_out.gamma <=
                          out.eps0 / std::pow(2.0, double(n + 1)) + rec.tail + 1e-18;
        rec.newton_iters_max = diag.newton_iters_max;
        rec.fixed_point_residual = diag.fixed_point_residual_max;
        rec.e_deriv_dev = diag.e_deriv_dev;
        rec.e_rho_deriv_min = diag.e_rho_deriv_min;
        rec.q_ratio = diag.q_ratio;
        rec.c_theta = diag.c_theta;
        rec.tail_added = diag.tail_added;
        rec.contour = make_spectral_contour(nxt);
        out.steps.push_back(rec);

        if (keep_history)
            out.kernels.push_back(nxt);
        else if (n == n_steps)
            out.kernels.push_back(nxt);
        cur = std::move(nxt);
    }
    return out;
}

struct EnergyResult {
    cplx e{};                     // e_(0, m_max)
    std::vector<cplx> iterates;   // e_(0, m) for m = 0..m_max
    double schedule_bound = 0.0;  // 2^-(m_max+1)
    double measured_increment = 0.0;
    double tail_budget = 0.0;
};

// e_(n,m) by back-composition of the inverse spectral maps, innermost first.
inline cplx energy_iterate(const FlowResult& fr, int n, int m) {
    cplx zeta{};
    for (int j = m; j >= n; --j)
        zeta = invert_E(fr.steps.at(size_t(j)).contour, fr.cfg.rho, zeta, fr.cfg);
    return zeta;
}

inline EnergyResult energy(const FlowResult& fr, int m_max) {
    if (m_max >= int(fr.steps.size()))
        throw std::invalid_argument("energy: flow too short for requested depth");
    EnergyResult out;
    for (int m = 0; m <= m_max; ++m) out.iterates.push_back(energy_iterate(fr, 0, m));
    out.e = out.iterates.back();
    out.schedule_bound = std::pow(2.0, -double(m_max) - 1.0);
    if (m_max >= 1)
        out.measured_increment = std::abs(out.iterates[size_t(m_max)] -
                                          out.iterates[size_t(m_max) - 1]);
    for (const auto& s : fr.steps) out.tail_budget += s.tail;
    return out;
}

struct EigenvectorResult {
    VectorXcd psi;                 // psi_(0, m_max) on the backend space
    double residual = 0.0;         // ||H_0 psi|| / ||psi||
    std::vector<double> norms;     // ||psi_(0,m)|| for m = 1..m_max
    double a_inv_norm_max = 0.0;   // max over n of ||A_n^-1|| (must be <= 16/rho)
};

// psi_(0,m) = Q_0 Gamma* Q_1 Gamma* ... Q_{m-1} Omega on the capped backend.
inline EigenvectorResult eigenvector(const FlowResult& fr, const DiscreteFockSpace& sp,
                                     int m_max) {
    if (!fr.history) throw std::logic_error("eigenvector needs the flow history");
    const RGConfig& cfg = fr.cfg;
    const double rho = cfg.rho;
    EigenvectorResult out;

    // e_(n,infty) approximated at the full depth
    std::vector<cplx> e_n(size_t(m_max) + 1);
    for (int n = 0; n <= m_max; ++n) e_n[size_t(n)] = energy_iterate(fr, n, m_max);

    VectorXd chid = chi_rho_diag(sp, rho);
    VectorXd chibd = chibar_rho_diag(sp, rho);
    std::vector<int> ridx;  // Ran chibar within the reduced range
    for (int s = 0; s < sp.dim(); ++s)
        if (chibd[s] > 1e-14 && sp.energy[s] <= 1.0 + 1e-12) ridx.push_back(s);

    struct QOp {
        Eigen::PartialPivLU<MatrixXcd> lu;
        MatrixXcd wmat;
        double a_inv_norm = 0.0;
    };
    auto qops = std::vector<QOp>(size_t(m_max));
    for (int n = 0; n < m_max; ++n) {
        KernelSequence wn = interpolate_at(fr.kernel_at(n), e_n[size_t(n)]);
        MatrixXcd hn = assemble_H(wn, sp);
        MatrixXcd tn = MatrixXcd::Zero(sp.dim(), sp.dim());
        for (int s = 0; s < sp.dim(); ++s)
            if (sp.energy[s] <= 1.0 + 1e-12)
                tn(s, s) = sp.energy[s] - wn.z() + wn.u00_at(sp.energy[s]);
        MatrixXcd wmat = hn - tn;
        // A_n = (T_n + chibar W chibar) restricted to Ran chibar
        MatrixXcd a(ridx.size(), ridx.size());
        for (size_t i = 0; i < ridx.size(); ++i)
            for (size_t j = 0; j < ridx.size(); ++j)
                a(i, j) = tn(ridx[i], ridx[j]) +
                          chibd[ridx[i]] * wmat(ridx[i], ridx[j]) * chibd[ridx[j]];
        qops[size_t(n)].lu.compute(a);
        qops[size_t(n)].wmat = std::move(wmat);
        // ||A^-1|| estimated by inverse power iteration on the LU factors
        VectorXcd v = VectorXcd::Random(int(ridx.size()));
        v.normalize();
        double est = 0.0;
        for (int it = 0; it < 12; ++it) {
            VectorXcd u = qops[size_t(n)].lu.solve(v);
            est = u.norm();
            if (est == 0.0) break;
            v = u / est;
        }
        qops[size_t(n)].a_inv_norm = est;
        out.a_inv_norm_max = std::max(out.a_inv_norm_max, est);
        if (est > 16.0 / rho * (1.0 + 1e-9))
            throw NumericalFailure("eigenvector: ||A_n^-1|| exceeds 16/rho at step " +
                                   std::to_string(n));
    }
    auto apply_q = [&](int n, const VectorXcd& v) {
        VectorXcd cv = v;
        for (int s = 0; s < sp.dim(); ++s) cv[s] *= chid[s];
        VectorXcd wcv = qops[size_t(n)].wmat * cv;
        VectorXcd rhs(int(ridx.size()));
        for (size_t i = 0; i < ridx.size(); ++i) rhs[int(i)] = chibd[ridx[i]] * wcv[ridx[i]];
        VectorXcd sol = qops[size_t(n)].lu.solve(rhs);
        VectorXcd outv = cv;
        for (size_t i = 0; i < ridx.size(); ++i) outv[ridx[i]] -= chibd[ridx[i]] * sol[int(i)];
        return outv;
    };

    MatrixXcd d1 = dilation_one_particle(*sp.grid, rho);
    auto chain = [&](int m) {
        VectorXcd psi = VectorXcd::Zero(sp.dim());
        psi[0] = 1.0;
        for (int n = m - 1; n >= 0; --n) {
            psi = apply_q(n, psi);
            if (n > 0) psi = apply_second_quantized(sp, d1, psi);
        }
        return psi;
    };
    for (int m = 1; m <= m_max; ++m) {
        VectorXcd psi = chain(m);
        out.norms.push_back(psi.norm());
        if (m == m_max) out.psi = psi;
    }
    KernelSequence w0 = interpolate_at(fr.kernel_at(0), e_n[0]);
    MatrixXcd h0 = assemble_H(w0, sp);
    out.residual = (h0 * out.psi).norm() / std::max(1e-300, out.psi.norm());
    return out;
}

// ---------------------------------------------------------------------------

struct PipelineConfig {
    RGConfig rg;
    InitialSeriesConfig init;
    int m_max = 10;
    int psi_n_ph = 3;
    int oracle_n_ph = 3;
};

struct GroundState {
    cplx energy{};          // E = E_at + e_(0,infty); E_at = 0 by construction
    VectorXcd psi;          // on the atom (x) Fock backend
    double residual = 0.0;  // ||(H - E) psi|| / ||psi||
    EnergyResult energy_detail;
    EigenvectorResult eig_detail;
    FlowResult flow_detail;
    InitialDiagnostics init_detail;
};

// Full pipeline: initial kernel -> flow -> energy -> eigenvector -> transport
// back through the initial Feshbach auxiliary operator.
inline GroundState ground_state(const ToyModel& model, std::shared_ptr<const RadialGrid> grid,
                                const PipelineConfig& cfg, bool want_vector = true) {
    GroundState gs;
    auto w0 = initial_kernel(model, grid, cfg.init, &gs.init_detail);
    gs.flow_detail = flow(w0, cfg.rg, cfg.m_max, want_vector);
    gs.energy_detail = energy(gs.flow_detail, cfg.m_max);
    gs.energy = gs.energy_detail.e;  // E_at = 0
    if (!want_vector) return gs;

    auto sp = make_fock_space(grid, cfg.psi_n_ph);
    gs.eig_detail = eigenvector(gs.flow_detail, sp, cfg.m_max);

    // transport through Q of the initial pair on the atom (x) Fock space
    const int nf = sp.dim();
    MatrixXcd h = assemble_toy_hamiltonian(model, sp);
    MatrixXcd h0 = MatrixXcd::Zero(h.rows(), h.cols());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(model.h_at);
    for (int a = 0; a < model.atom_dim; ++a)
        for (int s = 0; s < nf; ++s)
            h0(a * nf + s, a * nf + s) = es.eigenvalues()(a) + sp.energy[s];
    MatrixXcd id = MatrixXcd::Identity(h.rows(), h.cols());
    cplx lam = gs.energy;
    FeshbachPair pair(h - lam * id, h0 - lam * id, chi_initial_diag(model, sp),
                      chibar_initial_diag(model, sp));
    VectorXcd embedded = VectorXcd::Zero(h.rows());
    embedded.segment(0, nf) = gs.eig_detail.psi;  // phi_at (x) psi on atom level 0
    MatrixXcd q = feshbach_Q(pair);
    gs.psi = q * embedded;
    gs.residual = ((h - lam * id) * gs.psi).norm() / std::max(1e-300, gs.psi.norm());
    return gs;
}

struct CompareResult {
    GroundState rg;
    EigenPair oracle;
    double energy_gap_abs = 0.0;
    double energy_gap_rel = 0.0;
    double overlap = 0.0;
    double cap_sensitivity = 0.0;  // |E(cap) - E(cap+1)| when requested
};

inline CompareResult compare_with_oracle(const ToyModel& model,
                                         std::shared_ptr<const RadialGrid> grid,
                                         const PipelineConfig& cfg,
                                         bool cap_sensitivity = false) {
    CompareResult out;
    out.rg = ground_state(model, grid, cfg, true);
    auto sp = make_fock_space(grid, cfg.oracle_n_ph);
    MatrixXcd h = assemble_toy_hamiltonian(model, sp);
    out.oracle = exact_ground_state(h, 1e-10, 1200, 1e-13);
    out.energy_gap_abs = std::abs(out.rg.energy - cplx(double(out.oracle.energy_refined), 0.0));
    out.energy_gap_rel = out.energy_gap_abs / std::max(1e-300, std::abs(out.oracle.energy));
    // overlap on the common backend (psi spaces coincide when caps match)
    if (cfg.psi_n_ph == cfg.oracle_n_ph && out.rg.psi.size() == out.oracle.vector.size()) {
        cplx ov = out.oracle.vector.dot(out.rg.psi);
        out.overlap = std::abs(ov) / std::max(1e-300, out.rg.psi.norm());
    }
    if (cap_sensitivity) {
        auto sp2 = make_fock_space(grid, cfg.oracle_n_ph + 1);
        SparseMat h2 = assemble_toy_hamiltonian_sparse(model, sp2);
        auto apply = [&](const VectorXcd& x) { return VectorXcd(h2 * x); };
        auto gs2 = lowest_eigenpair(apply, int(h2.rows()), 1500, 1e-12);
        out.cap_sensitivity = std::abs(double(gs2.energy_refined - out.oracle.energy_refined));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct BetaScanRow {
    double beta = 0.0;
    double e = 0.0;             // Re E(beta); Im asserted small for real g
    double d1_h = 0.0, d1_h2 = 0.0;
    double d2_h = 0.0, d2_h2 = 0.0;
    double stab1 = 0.0, stab2 = 0.0;  // |FD(h) - FD(h/2)|
};

// E(beta) on a grid with central differences at spacing h and h/2; the
// stencil-halving agreement is the smoothness diagnostic.
inline std::vector<BetaScanRow> beta_smoothness_scan(const ToyModel& model,
                                                     std::shared_ptr<const RadialGrid> grid,
                                                     const PipelineConfig& cfg, double beta_min,
                                                     double beta_max, int n_beta, double h) {
    auto eval = [&](double beta) {
        ToyModel m = model;
        m.beta = beta;
        GroundState gs = ground_state(m, grid, cfg, false);
        return gs.energy.real();
    };
    std::vector<BetaScanRow> rows;
    for (int i = 0; i < n_beta; ++i) {
        double b = n_beta == 1 ? beta_min
                               : beta_min + (beta_max - beta_min) * double(i) / double(n_beta - 1);
        double e0 = eval(b);
        double ep1 = eval(b + 0.5 * h), em1 = eval(b - 0.5 * h);
        double ep2 = eval(b + h), em2 = eval(b - h);
        BetaScanRow row;
        row.beta = b;
        row.e = e0;
        row.d1_h = (ep2 - em2) / (2.0 * h);
        row.d1_h2 = (ep1 - em1) / h;
        row.d2_h = (ep2 - 2.0 * e0 + em2) / (h * h);
        row.d2_h2 = (ep1 - 2.0 * e0 + em1) / (0.25 * h * h);
        row.stab1 = std::abs(row.d1_h - row.d1_h2);
        row.stab2 = std::abs(row.d2_h - row.d2_h2);
        rows.push_back(row);
    }
    return rows;
}

struct GExpansion {
    std::vector<cplx> coef;      // E^(n), n = 0..n_max
    double noise_floor = 0.0;    // contour-quadrature noise estimate
    std::vector<cplx> samples;   // E(g_j) on the circle
};

// Cauchy coefficients of E(g) from a trapezoidal g-contour; the pipeline runs
// verbatim at complex coupling.
inline GExpansion g_expansion(const ToyModel& model, std::shared_ptr<const RadialGrid> grid,
                              const PipelineConfig& cfg, int n_max, double radius,
                              int n_points = 16) {
    GExpansion out;
    out.samples.resize(n_points);
    for (int j = 0; j < n_points; ++j) {
        double th = 2.0 * M_PI * double(j) / double(n_points);
        ToyModel m = model;
        m.g = radius * cplx(std::cos(th), std::sin(th));
        GroundState gs = ground_state(m, grid, cfg, false);
        out.samples[size_t(j)] = gs.energy;
    }
    for (int n = 0; n <= n_max; ++n) {
        cplx acc{};
        for (int j = 0; j < n_points; ++j) {
            double th = -2.0 * M_PI * double(j) * double(n) / double(n_points);
            acc += out.samples[size_t(j)] * cplx(std::cos(th), std::sin(th));
        }
        out.coef.push_back(acc / (double(n_points) * std::pow(radius, double(n))));
    }
    double emax = 0.0;
    for (const auto& s : out.samples) emax = std::max(emax, std::abs(s));
    out.noise_floor = 1e-12 * emax / std::pow(radius, double(n_max));
    return out;
}

// Second-order Rayleigh-Schrodinger shift in the Wick-ordered interaction,
// computed on the oracle matrix: sum_s |<s|W|0>|^2 / (E_0 - E_s) with the
// coupling factored out (the g^4 coefficient of E).
inline double perturbation2_coefficient(const ToyModel& model,
                                        std::shared_ptr<const RadialGrid> grid, int n_ph) {
    ToyModel unit = model;
    unit.g = 1.0;  // W carries g^2; the energy shift is then the g^4 coefficient
    auto sp = make_fock_space(grid, n_ph);
    auto ik = interaction_kernels(unit, grid);
    MatrixXcd wf = assemble_sector(ik.w11, sp, false) + assemble_sector(ik.w20, sp, false) +
                   assemble_sector(ik.w02, sp, false);
    // ground state of H0 is phi_at x Omega; the coupling is atom-scalar, so
    // only the field factor matters
    long double acc = 0.0L;
    for (int s = 1; s < sp.dim(); ++s) {
        if (wf(s, 0) == cplx{}) continue;
        acc -= (long double)(std::norm(wf(s, 0))) / (long double)(sp.energy[s]);
    }
    return double(acc);
}

// Smallest singular value of H(w^(0)(z)) for real z below e: the invertibility
// diagnostic (recorded, not asserted).
inline std::vector<std::pair<double, double>> gap_scan(const FlowResult& fr,
                                                       const DiscreteFockSpace& sp,
                                                       double z_lo, double z_hi, int n) {
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < n; ++i) {
        double z = z_lo + (z_hi - z_lo) * double(i) / double(std::max(1, n - 1));
        KernelSequence w = interpolate_at(fr.kernel_at(0), cplx(z, 0.0));
        MatrixXcd h = assemble_H(w, sp);
        // restrict to the reduced range (complement rows are all zero)
        std::vector<int> idx;
        for (int s = 0; s < sp.dim(); ++s)
            if (sp.energy[s] <= 1.0 + 1e-12) idx.push_back(s);
        MatrixXcd hs(idx.size(), idx.size());
        for (size_t a = 0; a < idx.size(); ++a)
            for (size_t b = 0; b < idx.size(); ++b) hs(a, b) = h(idx[a], idx[b]);
        Eigen::JacobiSVD<MatrixXcd> svd(hs);
        out.push_back({z, svd.singularValues().minCoeff()});
    }
    return out;
}

}  // namespace rgflow
