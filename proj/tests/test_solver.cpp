#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rgflow/solver.hpp"

using namespace rgflow;

namespace {

std::shared_ptr<const RadialGrid> small_grid(int nr = 65) { return make_grid(nr, 3, 2); }

PipelineConfig small_pipeline(int nr_fine = 129) {
    PipelineConfig c;
    c.rg.rho = 0.1;
    c.rg.xi = 0.2;
    c.rg.fine_r = nr_fine;
    c.init.zgrid = ZGrid{0.3, 8, 3};
    c.init.fine_r = nr_fine;
    c.init.pair_check_samples = 0;
    c.m_max = 6;
    c.psi_n_ph = 2;
    c.oracle_n_ph = 2;
    return c;
}

ToyModel small_model(cplx g, double amp = 0.035) {
    ToyModel m;
    m.g = g;
    m.beta = 0.3;
    m.coupling_amp = amp;
    return m;
}

SampledSequence free_family(std::shared_ptr<const RadialGrid> g) {
    SampledSequence fam;
    fam.zgrid = ZGrid{0.3, 8, 3};
    for (int i = 0; i < fam.zgrid.total(); ++i)
        fam.samples.emplace_back(g, fam.zgrid.point(i), 0.2);
    return fam;
}

}  // namespace

TEST_CASE("flow: free kernel is a fixed sequence with zero ball data") {
    auto g = small_grid(33);
    RGConfig cfg;
    cfg.fine_r = 65;
    auto fam = free_family(g);
    auto fr = flow(fam, cfg, 4);
    REQUIRE(fr.eps0 == 0.0);
    for (const auto& s : fr.steps) {
        REQUIRE(s.ball.gamma < 1e-12);
        REQUIRE(s.ball.beta < 1e-12);
        REQUIRE(s.tail == 0.0);
        REQUIRE(s.schedule_ok);
    }
    // energy: e = 0 exactly, J^-1 chains preserve the origin
    auto er = energy(fr, 4);
    REQUIRE(std::abs(er.e) < 1e-13);
    for (const auto& it : er.iterates) REQUIRE(std::abs(it) < 1e-13);
}

TEST_CASE("flow: ball gate rejects an oversized interaction with the step index") {
    auto g = small_grid(33);
    RGConfig cfg;
    cfg.fine_r = 65;
    auto fam = free_family(g);
    // inject an interaction far above rho/32
    for (auto& s : fam.samples) {
        Kernel k(1, 1, g);
        k.fill([](double, const std::vector<double>&) { return cplx(0.05, 0.0); });
        s.set_sector(project_support(k));
    }
    try {
        flow(fam, cfg, 2);
        FAIL("expected a ball violation");
    } catch (const BallViolation& e) {
        REQUIRE(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("reference flow: schedule, Cauchy energies, eigenvector norms") {
    auto g = small_grid(65);
    auto cfg = small_pipeline();
    ToyModel m = small_model(0.05);
    auto w0 = initial_kernel(m, g, cfg.init);
    auto fr = flow(w0, cfg.rg, cfg.m_max);

    SECTION("gamma follows the halving schedule with tail slack") {
        for (size_t n = 1; n < fr.steps.size(); ++n) {
            REQUIRE(fr.steps[n].schedule_ok);
            REQUIRE(fr.steps[n].contraction.gamma_ok);
        }
    }
    SECTION("fixed point residuals stay below 1e-12 at every step") {
        for (size_t n = 1; n < fr.steps.size(); ++n)
            REQUIRE(fr.steps[n].fixed_point_residual < 1e-12);
    }
    SECTION("energy iterates are Cauchy on the 2^-m schedule") {
        auto er = energy(fr, cfg.m_max);
        for (int mm = 1; mm <= cfg.m_max; ++mm) {
            double diff = std::abs(er.iterates[size_t(mm)] - er.iterates[size_t(mm) - 1]);
            REQUIRE(diff <= std::pow(2.0, -double(mm)) + er.tail_budget + 1e-15);
        }
        REQUIRE(std::abs(er.e.imag()) < 1e-12);  // real coupling
        REQUIRE(er.e.real() < 0.0);              // ground-state shift is negative
    }
    SECTION("eigenvector norms and residual") {
        auto sp = make_fock_space(g, 2);
        auto ev = eigenvector(fr, sp, cfg.m_max);
        for (double nrm : ev.norms) {
            REQUIRE(nrm <= 4.0 * std::exp(4.0));
            REQUIRE(nrm >= 0.9);
        }
        REQUIRE(ev.a_inv_norm_max <= 16.0 / cfg.rg.rho + 1e-6);
        REQUIRE(ev.residual < 1e-3);
    }
}

TEST_CASE("H(w) = H_f - z input yields psi = Omega") {
    auto g = small_grid(33);
    RGConfig cfg;
    cfg.fine_r = 65;
    auto fam = free_family(g);
    auto fr = flow(fam, cfg, 4);
    auto sp = make_fock_space(g, 2);
    auto ev = eigenvector(fr, sp, 4);
    VectorXcd om = VectorXcd::Zero(sp.dim());
    om[0] = 1.0;
    REQUIRE((ev.psi - om).norm() < 1e-10);
    REQUIRE(ev.residual < 1e-12);
}

TEST_CASE("ground_state: g = 0 recovers E = E_at and psi = phi_at x Omega") {
    auto g = small_grid(33);
    auto cfg = small_pipeline(65);
    ToyModel m = small_model(0.0);
    auto gs = ground_state(m, g, cfg);
    REQUIRE(std::abs(gs.energy) < 1e-13);
    REQUIRE(gs.residual < 1e-12);
    auto sp = make_fock_space(g, cfg.psi_n_ph);
    REQUIRE(std::abs(std::abs(gs.psi[0]) - gs.psi.norm()) < 1e-10);
}

TEST_CASE("oracle comparison at the small reference model") {
    auto g = small_grid(65);
    auto cfg = small_pipeline();
    cfg.m_max = 8;
    ToyModel m = small_model(0.05);
    auto cr = compare_with_oracle(m, g, cfg);
    INFO("E_rg = " << cr.rg.energy.real() << "  E_oracle = " << double(cr.oracle.energy_refined)
                   << "  rel gap = " << cr.energy_gap_rel);
    REQUIRE(std::abs(cr.rg.energy.imag()) < 1e-12);
    REQUIRE(cr.energy_gap_rel < 5e-4);
    REQUIRE(cr.overlap > 0.999);
    // E is the spectral infimum for real g: no oracle Ritz value sits below
    REQUIRE(cr.rg.energy.real() <= double(cr.oracle.energy_refined) +
                                       5e-4 * std::abs(cr.oracle.energy));
}

TEST_CASE("g expansion: even series, PT2 match, zero-coupling degeneracy") {
    auto g = small_grid(65);
    auto cfg = small_pipeline();
    cfg.m_max = 5;
    SECTION("zero coupling amplitude: all coefficients vanish") {
        ToyModel m = small_model(0.05, 0.0);
        auto ge = g_expansion(m, g, cfg, 4, 0.05, 8);
        for (const auto& c : ge.coef) REQUIRE(std::abs(c) < 1e-14);
    }
    SECTION("odd coefficients at the noise floor; E^(4) matches PT2") {
        ToyModel m = small_model(0.05);
        auto ge = g_expansion(m, g, cfg, 5, 0.05, 8);
        double even_scale = std::max(std::abs(ge.coef[4]), 1e-300);
        REQUIRE(std::abs(ge.coef[1]) <= 1e-6 * even_scale);
        REQUIRE(std::abs(ge.coef[3]) <= 1e-6 * even_scale);
        REQUIRE(std::abs(ge.coef[5]) <= 1e-6 * even_scale);
        REQUIRE(std::abs(ge.coef[2]) <= 1e-6 * even_scale);  // interaction is quadratic in g
        double pt2 = perturbation2_coefficient(m, g, 4);
        INFO("E4 = " << ge.coef[4].real() << " PT2 = " << pt2);
        REQUIRE(std::abs(ge.coef[4].real() - pt2) <= 2e-4 * std::abs(pt2));
        REQUIRE(std::abs(ge.coef[4].imag()) <= 1e-6 * std::abs(pt2));
    }
}

TEST_CASE("beta smoothness scan: flat for uncoupled phase, stable under halving") {
    auto g = small_grid(33);
    auto cfg = small_pipeline(65);
    cfg.m_max = 4;
    SECTION("beta-independent coupling gives a flat table") {
        ToyModel m = small_model(0.04);
        m.beta_coupled = false;
        auto rows = beta_smoothness_scan(m, g, cfg, -0.5, 0.5, 3, 0.2);
        for (const auto& r : rows) {
            REQUIRE(std::abs(r.d1_h) < 1e-10);
            REQUIRE(std::abs(r.d2_h) < 1e-8);
        }
    }
    SECTION("derivatives bounded and stencil-stable") {
        ToyModel m = small_model(0.04);
        auto rows = beta_smoothness_scan(m, g, cfg, -0.4, 0.4, 3, 0.2);
        for (const auto& r : rows) {
            REQUIRE(std::abs(r.d1_h) < 1.0);
            REQUIRE(std::abs(r.d2_h) < 1.0);
            REQUIRE(r.stab1 < 1e-5);
            REQUIRE(r.stab2 < 1e-5);
        }
    }
}

TEST_CASE("grid refinement shifts the energy within the combined budgets") {
    auto cfg = small_pipeline();
    cfg.m_max = 6;
    ToyModel m = small_model(0.05);
    auto g1 = make_grid(65, 3, 2);
    auto g2 = make_grid(129, 3, 2);  // finer r-representation
    auto e1 = ground_state(m, g1, cfg, false);
    auto e2 = ground_state(m, g2, cfg, false);
    double shift = std::abs(e1.energy - e2.energy);
    double budget = e1.energy_detail.tail_budget + e2.energy_detail.tail_budget + 1e-10;
    INFO("shift " << shift << " budget " << budget);
    REQUIRE(shift <= budget + 2e-4 * std::abs(e1.energy));
}

TEST_CASE("gap scan: smallest singular value grows away from the eigenvalue") {
    auto g = small_grid(33);
    auto cfg = small_pipeline(65);
    cfg.m_max = 4;
    ToyModel m = small_model(0.03);
    auto w0 = initial_kernel(m, g, cfg.init);
    auto fr = flow(w0, cfg.rg, cfg.m_max);
    auto er = energy(fr, cfg.m_max);
    auto sp = make_fock_space(g, 2);
    auto scan = gap_scan(fr, sp, er.e.real() - 0.2, er.e.real() - 0.02, 4);
    for (size_t i = 1; i < scan.size(); ++i) REQUIRE(scan[i].second > 0.0);
}
