#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rgflow/initial.hpp"
#include "rgflow/rg.hpp"

using namespace rgflow;

namespace {

std::shared_ptr<const RadialGrid> small_grid(int nr = 65) { return make_grid(nr, 3, 2); }

SampledSequence free_family(std::shared_ptr<const RadialGrid> g, double xi = 0.2) {
    SampledSequence fam;
    fam.zgrid = ZGrid{0.3, 8, 3};
    for (int i = 0; i < fam.zgrid.total(); ++i)
        fam.samples.emplace_back(g, fam.zgrid.point(i), xi);
    return fam;
}

// small-coupling starting kernel used as the "reference" flow input
SampledSequence small_initial(std::shared_ptr<const RadialGrid> g, double gval = 0.05,
                              double amp = 0.1) {
    ToyModel m;
    m.g = gval;
    m.beta = 0.3;
    m.coupling_amp = amp;
    InitialSeriesConfig cfg;
    cfg.zgrid = ZGrid{0.3, 8, 3};
    cfg.fine_r = 129;
    cfg.pair_check_samples = 0;
    return initial_kernel(m, g, cfg);
}

RGConfig test_cfg() {
    RGConfig c;
    c.rho = 0.1;
    c.xi = 0.2;
    c.fine_r = 129;
    return c;
}

}  // namespace

TEST_CASE("E_of: free kernel gives E(z) = z; matrix backend agrees") {
    auto g = small_grid(17);
    cplx z(0.21, -0.13);
    KernelSequence w(g, z, 0.2);
    REQUIRE(std::abs(E_of(w) - z) < 1e-15);
    auto sp = make_fock_space(g, 2);
    MatrixXcd h = assemble_H(w, sp);
    REQUIRE(std::abs(-h(0, 0) - E_of(w)) < 1e-12);
}

TEST_CASE("invert_E: free kernel needs one step, I(z) = rho z") {
    auto g = small_grid(17);
    auto fam = free_family(g);
    auto sc = make_spectral_contour(fam);
    RGConfig cfg = test_cfg();
    for (cplx z : {cplx(0.4, 0.0), cplx(-0.1, 0.3), cplx(0.05, -0.42)}) {
        int it = 0;
        cplx zeta = invert_E(sc, cfg.rho, z, cfg, &it);
        REQUIRE(std::abs(zeta - cfg.rho * z) < 1e-14);
        REQUIRE(it <= 2);
    }
    REQUIRE_THROWS(invert_E(sc, cfg.rho, cplx(0.7, 0.0), cfg));
}

TEST_CASE("fixed-point identity and inverse derivative bound on a small-g kernel") {
    auto g = small_grid();
    auto w0 = small_initial(g);
    auto sc = make_spectral_contour(w0);
    RGConfig cfg = test_cfg();
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        cplx z(u(rng) * 0.35, u(rng) * 0.35);
        cplx zeta = invert_E(sc, cfg.rho, z, cfg);
        worst = std::max(worst, std::abs(sc.E_rho(zeta, cfg.rho) - z));
        REQUIRE(std::abs(zeta) <= 5.0 * cfg.rho / 8.0 + 1e-9);
    }
    REQUIRE(worst < 1e-12);
    // |dI/dz| <= 16 rho / 15 by central differences
    for (cplx z : {cplx(0.0, 0.0), cplx(0.2, 0.1)}) {
        double h = 1e-5;
        cplx ip = invert_E(sc, cfg.rho, z + h, cfg);
        cplx im = invert_E(sc, cfg.rho, z - h, cfg);
        double di = std::abs((ip - im) / (2.0 * h));
        REQUIRE(di <= 16.0 * cfg.rho / 15.0 + 1e-9);
    }
}

TEST_CASE("spectral map derivative bounds hold for ball members") {
    auto g = small_grid();
    auto w0 = small_initial(g);
    auto sc = make_spectral_contour(w0);
    double rho = 0.1;
    // |dE/dz - 1| <= 4 rho / (4 - 5 rho)^2 on D_{5 rho / 8}
    double bound = 4.0 * rho / std::pow(4.0 - 5.0 * rho, 2.0);
    double dev = 0.0, dmin = 1e300;
    for (int j = 0; j < 128; ++j) {
        double th = 2.0 * M_PI * j / 128.0;
        cplx z = 0.625 * rho * cplx(std::cos(th), std::sin(th));
        dev = std::max(dev, std::abs(sc.dE(z) - 1.0));
        dmin = std::min(dmin, std::abs(sc.dE(z)) / rho);
    }
    REQUIRE(dev <= bound);
    REQUIRE(dmin >= 15.0 / (16.0 * rho));
}

TEST_CASE("w_op_matrix: diagonal multiplier, vacuum column, double-loop oracle") {
    auto g = small_grid(17);
    auto sp = make_fock_space(g, 2);
    Kernel w11(1, 1, g);
    w11.fill([](double r, const std::vector<double>& ks) {
        return cplx((1.0 - r) * std::cos(2.0 * ks[0]), std::sin(ks[1]) - 0.2);
    });
    SECTION("p = q = 0: diagonal multiplier w(H_f + r, K)") {
        double r = 0.2, kc = g->k_nodes[2], ka = g->k_nodes[4];
        MatrixXcd m = w_op_matrix(w11, 0, 0, r, {kc}, {ka}, sp);
        for (int s = 0; s < sp.dim(); ++s) {
            cplx want{};
            if (sp.energy[s] <= 1.0 + 1e-12)
                want = wick::eval_kernel_at(w11, sp.energy[s] + r, {kc, ka});
            REQUIRE(std::abs(m(s, s) - want) < 1e-10);
            for (int t = 0; t < sp.dim(); ++t)
                if (t != s) REQUIRE(std::abs(m(t, s)) == 0.0);
        }
    }
    SECTION("p = 1, q = 0 on the vacuum: single-photon column") {
        Kernel w20(2, 0, g);
        w20.fill([](double r, const std::vector<double>& ks) {
            return cplx(std::exp(-r) * ks[0] * ks[1], ks[0] - ks[1]);
        });
        double r = 0.1, kext = g->k_nodes[1];
        MatrixXcd m = w_op_matrix(w20, 1, 0, r, {kext}, {}, sp);
        VectorXcd om = VectorXcd::Zero(sp.dim());
        om[0] = 1.0;
        VectorXcd col = m * om;
        for (int mode = 0; mode < sp.n_modes; ++mode) {
            std::vector<uint8_t> occ(size_t(sp.n_modes), 0);
            occ[mode] = 1;
            int s = sp.lookup(occ);
            cplx want = g->slot_weight(mode) *
                        wick::eval_kernel_at(w20, 0.0 + r, {kext, g->k_nodes[mode]});
            REQUIRE(std::abs(col[s] - want) < 1e-10);
        }
    }
    SECTION("p = q = 1 equals an independent double loop") {
        double r = 0.15;
        MatrixXcd m = w_op_matrix(w11, 1, 1, r, {}, {}, sp);
        MatrixXcd oracle = MatrixXcd::Zero(sp.dim(), sp.dim());
        for (int i = 0; i < sp.n_modes; ++i)
            for (int j = 0; j < sp.n_modes; ++j) {
                MatrixXcd mid = MatrixXcd::Zero(sp.dim(), sp.dim());
                for (int s = 0; s < sp.dim(); ++s)
                    mid(s, s) = wick::eval_kernel_at(
                        w11, sp.energy[s] + r, {g->k_nodes[i], g->k_nodes[j]});
                oracle += g->slot_weight(i) * g->slot_weight(j) * creation(sp, i).mat * mid *
                          annihilation(sp, j).mat;
            }
        for (int s = 0; s < sp.dim(); ++s)
            for (int t = 0; t < sp.dim(); ++t)
                if (sp.energy[s] > 1.0 + 1e-12 || sp.energy[t] > 1.0 + 1e-12)
                    oracle(t, s) = 0.0;
        REQUIRE(operator_norm(MatrixXcd(m - oracle)) < 1e-10);
    }
}

TEST_CASE("v_term: L = 1 closed form and L = 2 pairing-enumerator oracle") {
    // handmade kernel sequence: polynomial r-dependence (interpolation-exact)
    // at a spectral point inside the valid disc D_{5 rho/8}
    auto g = small_grid(33);
    RGConfig cfg = test_cfg();
    cfg.fine_r = 129;
    double rho = cfg.rho;
    KernelSequence win(g, cplx(0.012, -0.008), 0.2);
    auto poly = [](double r) { return cplx(1.0 + 0.4 * r - 0.3 * r * r, 0.2 * r); };
    auto fmode = [](double k) { return cplx(k, 0.5 * k); };
    {
        Kernel k11(1, 1, g);
        k11.fill([&](double r, const std::vector<double>& ks) {
            return 1e-3 * poly(r) * fmode(ks[0]) * std::conj(fmode(ks[1]));
        });
        win.set_sector(k11);
    }
    auto w11_val = [&](double r, double k1, double k2) {
        return 1e-3 * poly(r) * fmode(k1) * std::conj(fmode(k2));
    };
    SECTION("all p = q = 0, L = 1: chi-weighted kernel value, no contractions") {
        wick::Tuple tup{wick::FactorSpec{1, 0, 1, 0}};
        for (int ic : {1, 4})
            for (int ja : {0, 5})
                for (double r : {0.0, 0.45}) {
                    cplx v = v_term(win, cfg, tup, {ic}, {ja}, r);
                    double ke = g->k_nodes[ic], ka = g->k_nodes[ja];
                    cplx want = chi1(r + ke) * w11_val(rho * r, rho * ke, rho * ka) *
                                chi1(r + ka);
                    REQUIRE(std::abs(v - want) <=
                            1e-10 * std::max(1e-30, std::abs(want)) + 1e-25);
                }
    }
    SECTION("L = 2 with one internal pair: hand-written pairing sum") {
        wick::Tuple tup{wick::FactorSpec{1, 0, 0, 1}, wick::FactorSpec{0, 1, 1, 0}};
        int ic = 2, ja = 3;
        double ke = g->k_nodes[ic], ka = g->k_nodes[ja];
        for (double r : {0.0, 0.3}) {
            cplx v = v_term(win, cfg, tup, {ic}, {ja}, r);
            cplx want{};
            for (int j = 0; j < g->nk(); ++j) {
                double kj = g->k_nodes[j];
                double lam2 = g->slot_weight(j) * g->slot_weight(j);
                cplx f0 = chi1(r + ke);  // vacuum edge, r~0 = ke
                cplx k1 = w11_val(0.0 + rho * (r + 0.0), rho * ke, kj);
                double u1 = kj + rho * (r + 0.0);  // r~1 = 0
                cplx den = u1 - win.z();
                cplx f1 = chibar1(u1 / rho) * chibar1(u1 / rho) / den;
                // factor 2 creates onto the vacuum: its kernel sees E_mid = 0
                cplx k2 = w11_val(0.0 + rho * (r + 0.0), kj, rho * ka);
                cplx f2 = chi1(r + ka);  // vacuum edge, r~2 = ka
                want += lam2 * f0 * k1 * f1 * k2 * f2;
            }
            REQUIRE(std::abs(v - want) <= 1e-8 * std::max(1e-30, std::abs(want)) + 1e-22);
        }
    }
    SECTION("measured envelope: |v| <= C_L t^{-(L-1)} prod ||w||/sqrt(p!q!)") {
        wick::Tuple tup{wick::FactorSpec{1, 0, 0, 1}, wick::FactorSpec{0, 1, 1, 0}};
        double t = 3.0 * cfg.rho / 32.0;
        double prod = sharp_norm(win.sector(1, 1));
        prod *= sharp_norm(win.sector(1, 1));
        double cl = 0.0;
        for (int ic : {0, 3})
            for (int ja : {2, 5})
                for (double r : {0.0, 0.2, 0.6})
                    cl = std::max(cl,
                                  std::abs(v_term(win, cfg, tup, {ic}, {ja}, r)) * t / prod);
        INFO("measured C_L = " << cl);
        REQUIRE(cl < 1e3);  // finite, logged; the inequality shape holds
    }
}

TEST_CASE("renormalize_sharp: free kernel rescale and single-term L = 1 formula") {
    auto g = small_grid(65);
    RGConfig cfg = test_cfg();
    SECTION("w00 = r + c maps to r + c/rho") {
        KernelSequence w(g, cplx{}, 0.2);
        cplx c(0.004, -0.002);
        std::vector<cplx> u(g->nr(), c);
        w.set_u00(u);
        KernelSequence out0 = renormalize_sharp(w, cfg, cplx{}, cplx{});
        for (int ir = 0; ir < g->nr(); ++ir)
            REQUIRE(std::abs(out0.u00()[ir] - c / cfg.rho) < 1e-12);
        REQUIRE(out0.sectors().empty());
        REQUIRE(out0.tail_bound() == 0.0);
    }
    SECTION("single (2,0) input at L = 1: explicit chi-sandwich formula") {
        KernelSequence w(g, cplx(0.01, 0.0), 0.2);
        auto f = [](double r) { return 1.0 + 0.5 * r; };
        auto hmode = [](double k) { return cplx(k, 0.5 * k); };
        Kernel k20(2, 0, g);
        k20.fill([&](double r, const std::vector<double>& ks) {
            return 1e-4 * f(r) * hmode(ks[0]) * hmode(ks[1]);
        });
        w.set_sector(project_support(k20));
        RGConfig c1 = cfg;
        c1.l_max = 1;
        c1.l_max_00 = 2;
        KernelSequence out = renormalize_sharp(w, c1, cplx{}, w.z());
        REQUIRE(out.has(2, 0));
        const Kernel& o = out.sector(2, 0);
        const Kernel& in = w.sector(2, 0);
        std::vector<int> idx;
        double rho = cfg.rho;
        for (size_t kc = 0; kc < o.k_combos(); ++kc) {
            o.decode_combo(kc, idx);
            double k1 = g->k_nodes[idx[0]], k2 = g->k_nodes[idx[1]];
            for (int ir = 0; ir < g->nr(); ir += 7) {
                double r = g->r_nodes[ir];
                cplx want = rho * chi1(r + k1 + k2) *
                            wick::eval_kernel_at(in, rho * r, {rho * k1, rho * k2}) * chi1(r);
                if (r > 1.0 - (k1 + k2) + 1e-12) want = 0.0;  // support projection
                REQUIRE(std::abs(o.at(ir, kc) - want) < 2e-6 * std::max(1.0, std::abs(want)));
            }
        }
    }
}

TEST_CASE("renormalize: the free kernel is a fixed point") {
    auto g = small_grid(33);
    auto fam = free_family(g);
    RGConfig cfg = test_cfg();
    cfg.fine_r = 65;
    auto out = renormalize(fam, cfg);
    for (size_t i = 0; i < out.samples.size(); ++i) {
        REQUIRE(out.samples[i].sectors().empty());
        for (const auto& u : out.samples[i].u00()) REQUIRE(std::abs(u) < 1e-10);
        REQUIRE(out.samples[i].tail_bound() == 0.0);
    }
}

TEST_CASE("renormalize: dual path, ball schedule, contraction report") {
    auto g = small_grid(129);
    auto w0 = small_initial(g, 0.05, 0.1);
    RGConfig cfg = test_cfg();
    cfg.fine_r = 129;
    StepDiagnostics diag;
    auto w1 = renormalize(w0, cfg, &diag);

    SECTION("fixed-point residuals and Newton iterations") {
        REQUIRE(diag.fixed_point_residual_max < 1e-12);
        REQUIRE(diag.newton_iters_max <= 6);
    }
    SECTION("interaction contracts and the report sees it") {
        auto rep = contraction_report(diag.ball_in, diag.ball_out, diag.tail_added);
        REQUIRE(rep.gamma_ok);
        REQUIRE(rep.gamma_ratio < 0.5);
    }
    SECTION("dual path: interpolated vs re-evaluated kernels at I(z)") {
        auto sc = make_spectral_contour(w0);
        int i = 3;
        cplx zp = w0.zgrid.point(i);
        cplx zeta = invert_E(sc, cfg.rho, zp, cfg);
        ToyModel m;
        m.g = 0.05;
        m.beta = 0.3;
        m.coupling_amp = 0.1;
        KernelSequence wz(g, zeta, 0.2);
        {
            wick::FProvider f = detail_init::initial_f_provider(m, zeta);
            KernelSequence win = interaction_sequence(m, g, zeta, 0.2);
            series::Spec spec;
            spec.l_max = 2;
            spec.l_max_00 = 3;
            spec.m_cap = 2;
            spec.slope = 1.0;
            spec.p_red = false;
            spec.fine_r = 129;
            auto so = series::run(win, f, spec);
            wz.set_u00(so.u_series);
            for (auto& [mn, k] : so.sectors) wz.set_sector(std::move(k));
        }
        cplx delta0 = zp - zeta / cfg.rho;
        KernelSequence direct = renormalize_sharp(wz, cfg, delta0, zp);
        const KernelSequence& interp = w1.samples[i];
        double dev = 0.0;
        for (const auto& [mn, k] : direct.sectors()) {
            const Kernel& ki = interp.sector(mn.first, mn.second);
            for (size_t t = 0; t < k.values().size(); ++t)
                dev = std::max(dev, std::abs(k.values()[t] - ki.values()[t]));
        }
        for (int ir = 0; ir < g->nr(); ++ir)
            dev = std::max(dev, std::abs(direct.u00()[ir] - interp.u00()[ir]));
        REQUIRE(dev < 1e-8);
    }
}

TEST_CASE("symmetric kernels stay symmetric through the map") {
    auto g = small_grid(65);
    auto w0 = small_initial(g, 0.05, 0.2);
    RGConfig cfg = test_cfg();
    cfg.fine_r = 65;
    auto w1 = renormalize(w0, cfg);
    auto sp = make_fock_space(g, 2);
    int n = w1.zgrid.n_contour;
    for (int j : {1, 3}) {
        MatrixXcd ha = assemble_H(w1.samples[j], sp);
        MatrixXcd hb = assemble_H(w1.samples[(n - j) % n], sp);
        REQUIRE(operator_norm(MatrixXcd(hb.adjoint() - ha)) <
                1e-8 * std::max(1.0, operator_norm(ha)));
    }
}

TEST_CASE("discrete dilation: vacuum invariance, energy covariance on smooth vectors") {
    auto g = make_grid(17, 8, 2);  // 16 modes for a usable dilation
    double rho = 0.1;
    MatrixXcd d1 = dilation_one_particle(*g, rho);
    auto sp = make_fock_space(g, 2);
    VectorXcd om = VectorXcd::Zero(sp.dim());
    om[0] = 1.0;
    VectorXcd gom = apply_second_quantized(sp, d1, om);
    REQUIRE(std::abs(gom[0] - 1.0) < 1e-14);
    REQUIRE((gom - om).norm() < 1e-14);

    // H_f Gamma* f = rho Gamma* H_f f on smooth one-particle vectors
    VectorXcd f(g->nk());
    for (int i = 0; i < g->nk(); ++i)
        f[i] = std::sqrt(g->k_weights[i]) * g->k_nodes[i] * std::exp(-g->k_nodes[i]);
    VectorXcd lhs = d1 * f;
    for (int i = 0; i < g->nk(); ++i) lhs[i] *= g->k_nodes[i];
    VectorXcd rhs = f;
    for (int i = 0; i < g->nk(); ++i) rhs[i] *= g->k_nodes[i];
    rhs = rho * (d1 * rhs);
    REQUIRE((lhs - rhs).norm() <= 2e-2 * std::max(1e-300, rhs.norm()));
    // near-isometry up to the one-particle interpolation error (reported)
    double iso = std::abs((d1 * f).norm() - f.norm()) / f.norm();
    INFO("dilation isometry defect " << iso);
    REQUIRE(iso < 8e-2);
}

TEST_CASE("contraction_report handles the degenerate zero-interaction case") {
    BallParams b0{0.0, 0.0, 0.0}, b1{0.0, 0.0, 0.0};
    auto rep = contraction_report(b0, b1, 0.0);
    REQUIRE(rep.degenerate);
    REQUIRE(rep.gamma_ok);
}
