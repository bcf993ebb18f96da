#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rgflow/kernel.hpp"
#include "rgflow/kernel_io.hpp"
#include "rgflow/kernel_sequence.hpp"

using namespace rgflow;

namespace {

Kernel random_kernel(int m, int n, std::shared_ptr<const RadialGrid> g, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Kernel k(m, n, g);
    for (size_t kc = 0; kc < k.k_combos(); ++kc)
        for (int ir = 0; ir < g->nr(); ++ir) k.at(ir, kc) = cplx(u(rng), u(rng));
    k.update_dr();
    return k;
}

}  // namespace

TEST_CASE("symmetrize: symmetric input is a fixed point") {
    auto g = make_grid(9, 3, 1);
    Kernel w(2, 0, g);
    w.fill([](double r, const std::vector<double>& ks) {
        return cplx(ks[0] * ks[1] + r, 0.0);
    });
    Kernel s = symmetrize(w);
    for (size_t i = 0; i < w.values().size(); ++i)
        REQUIRE(std::abs(s.values()[i] - w.values()[i]) < 1e-15);
}

TEST_CASE("symmetrize: product kernel averages over the two-element orbit") {
    auto g = make_grid(5, 3, 1);
    auto f = [](double k) { return cplx(k, 0.5 * k * k); };
    auto h = [](double k) { return cplx(1.0 - k, k); };
    Kernel w(2, 0, g);
    w.fill([&](double, const std::vector<double>& ks) { return f(ks[0]) * h(ks[1]); });
    Kernel s = symmetrize(w);
    std::vector<int> idx;
    for (size_t kc = 0; kc < w.k_combos(); ++kc) {
        w.decode_combo(kc, idx);
        double k1 = g->k_nodes[idx[0]], k2 = g->k_nodes[idx[1]];
        cplx want = 0.5 * (f(k1) * h(k2) + f(k2) * h(k1));
        REQUIRE(std::abs(s.at(0, kc) - want) < 1e-14);
    }
}

TEST_CASE("symmetrize: random w_{2,1} on a 3-node grid matches explicit S2xS1 enumeration") {
    auto g = make_grid(4, 3, 1);
    REQUIRE(g->nk() == 3);
    Kernel w = random_kernel(2, 1, g, 42);
    Kernel s = symmetrize(w);
    // brute-force oracle: enumerate the 2 x 1 slot permutations by hand
    std::vector<int> idx;
    for (size_t kc = 0; kc < w.k_combos(); ++kc) {
        w.decode_combo(kc, idx);
        for (int ir = 0; ir < g->nr(); ++ir) {
            cplx a = w.at(ir, w.combo_index({idx[0], idx[1], idx[2]}));
            cplx b = w.at(ir, w.combo_index({idx[1], idx[0], idx[2]}));
            REQUIRE(std::abs(s.at(ir, kc) - 0.5 * (a + b)) < 1e-14);
        }
    }
    // idempotent
    Kernel s2 = symmetrize(s);
    for (size_t i = 0; i < s.values().size(); ++i)
        REQUIRE(std::abs(s2.values()[i] - s.values()[i]) < 1e-14);
}

TEST_CASE("sharp_norm: constant kernel") {
    auto g = make_grid(9, 3, 1);
    Kernel w(1, 1, g);
    w.fill([](double, const std::vector<double>&) { return cplx(0.5, -1.0); });
    REQUIRE(sharp_norm(w) == Catch::Approx(std::abs(cplx(0.5, -1.0))).margin(1e-12));
}

TEST_CASE("sharp_norm: w(r) = r gives 2") {
    auto g = make_grid(17, 3, 1);
    Kernel w(0, 0, g);
    w.fill([](double r, const std::vector<double>&) { return cplx(r, 0.0); });
    REQUIRE(sharp_norm(w) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("sharp_norm: degree-5 polynomial matches dense-grid oracle") {
    auto g = make_grid(17, 3, 1);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::array<double, 6> c;
    for (auto& x : c) x = u(rng);
    auto p = [&](double r) {
        double acc = 0.0;
        for (int j = 5; j >= 0; --j) acc = acc * r + c[j];
        return acc;
    };
    auto dp = [&](double r) {
        double acc = 0.0;
        for (int j = 5; j >= 1; --j) acc = acc * r + j * c[j];
        return acc;
    };
    Kernel w(0, 0, g);
    w.fill([&](double r, const std::vector<double>&) { return cplx(p(r), 0.0); });
    // dense 1e4-point oracle
    double sv = 0.0, sd = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double r = double(i) / 9999.0;
        sv = std::max(sv, std::abs(p(r)));
        sd = std::max(sd, std::abs(dp(r)));
    }
    REQUIRE(sharp_norm(w) == Catch::Approx(sv + sd).margin(1e-10));
}

TEST_CASE("norm axioms hold on sampled kernels") {
    auto g = make_grid(9, 4, 2);
    Kernel a = random_kernel(1, 1, g, 1);
    Kernel b = random_kernel(1, 1, g, 2);
    // absolute homogeneity
    Kernel a3 = a;
    a3 *= cplx(-2.5, 1.0);
    REQUIRE(sharp_norm(a3) ==
            Catch::Approx(std::abs(cplx(-2.5, 1.0)) * sharp_norm(a)).margin(1e-12));
    // triangle inequality
    Kernel s = a;
    s += b;
    REQUIRE(sharp_norm(s) <= sharp_norm(a) + sharp_norm(b) + 1e-12);
}

TEST_CASE("xi_norm: single components and manual sums") {
    auto g = make_grid(9, 3, 1);
    double xi = 0.5;

    KernelSequence w(g, cplx{}, xi);
    SECTION("only w00 present") {
        std::vector<cplx> u(g->nr());
        for (int i = 0; i < g->nr(); ++i) u[i] = 0.3;  // w00 = r - z + 0.3
        w.set_u00(u);
        // sharp norm of r + 0.3 is (1.3) + 1
        REQUIRE(w.xi_norm() == Catch::Approx(2.3).margin(1e-12));
    }
    SECTION("single w11 weighted by xi^-2") {
        Kernel k(1, 1, g);
        k.fill([](double, const std::vector<double>&) { return cplx(0.25, 0.0); });
        w.set_sector(k);
        double s = sharp_norm(w.sector(1, 1));
        REQUIRE(w.gamma_norm() == Catch::Approx(4.0 * s).margin(1e-12));
    }
    SECTION("three components sum term by term") {
        Kernel k11 = random_kernel(1, 1, g, 3);
        Kernel k20 = random_kernel(2, 0, g, 4);
        Kernel k02 = random_kernel(0, 2, g, 5);
        w.set_sector(k11);
        w.set_sector(k20);
        w.set_sector(k02);
        double want = std::pow(xi, -2.0) *
                      (sharp_norm(k11) + sharp_norm(k20) + sharp_norm(k02));
        REQUIRE(w.gamma_norm() == Catch::Approx(want).margin(1e-12));
        w.add_tail(0.125);
        REQUIRE(w.gamma_norm() == Catch::Approx(want + 0.125).margin(1e-12));
    }
}

TEST_CASE("m+n = 1 sectors are rejected structurally") {
    auto g = make_grid(5, 3, 1);
    KernelSequence w(g, cplx{}, 0.2);
    REQUIRE_THROWS(w.set_sector(Kernel(1, 0, g)));
    REQUIRE_THROWS(w.set_sector(Kernel(0, 1, g)));
}

TEST_CASE("ball_check: free kernel lies in B(0,0,0) up to grid tolerance") {
    auto g = make_grid(17, 4, 2);
    SampledSequence fam;
    fam.zgrid = ZGrid{};
    for (int i = 0; i < fam.zgrid.total(); ++i)
        fam.samples.emplace_back(g, fam.zgrid.point(i), 0.2);
    auto rep = ball_check(fam, BallParams{1e-13, 1e-13, 1e-13});
    REQUIRE(rep.inside);
    REQUIRE(rep.measured.alpha <= 1e-14);
    REQUIRE(rep.measured.beta <= 1e-14);
    REQUIRE(rep.measured.gamma <= 1e-14);
}

TEST_CASE("ball_check: constant offset is measured as beta") {
    auto g = make_grid(17, 4, 2);
    SampledSequence fam;
    fam.zgrid = ZGrid{};
    for (int i = 0; i < fam.zgrid.total(); ++i) {
        KernelSequence s(g, fam.zgrid.point(i), 0.2);
        std::vector<cplx> u(g->nr(), cplx(0.1, 0.0));
        s.set_u00(u);
        fam.samples.push_back(std::move(s));
    }
    auto rep = ball_check(fam, BallParams{1e-12, 0.2, 1e-12});
    REQUIRE(rep.measured.beta == Catch::Approx(0.1).margin(1e-13));
    REQUIRE(rep.measured.alpha <= 1e-12);
    REQUIRE(rep.inside);
}

TEST_CASE("ball_check gamma scales exactly with the interaction part") {
    auto g = make_grid(9, 3, 2);
    auto mk = [&](double t) {
        SampledSequence fam;
        fam.zgrid = ZGrid{0.3, 4, 1};
        for (int i = 0; i < fam.zgrid.total(); ++i) {
            KernelSequence s(g, fam.zgrid.point(i), 0.2);
            Kernel k = random_kernel(1, 1, g, 77);
            k *= cplx(t, 0.0);
            s.set_sector(k);
            fam.samples.push_back(std::move(s));
        }
        return ball_check(fam, BallParams{1, 1, 1e9}).measured.gamma;
    };
    double g1 = mk(1.0);
    for (double t : {0.5, 0.25, 0.125})
        REQUIRE(mk(t) == Catch::Approx(t * g1).epsilon(1e-12));
}

TEST_CASE("project_support: kernel already supported is unchanged; constants clip") {
    auto g = make_grid(17, 4, 2);
    SECTION("supported input unchanged") {
        Kernel w(1, 0, g);
        w.fill([](double r, const std::vector<double>& ks) {
            return r <= 1.0 - ks[0] ? cplx(0.7, 0.1) : cplx{};
        });
        Kernel p = project_support(w);
        for (size_t i = 0; i < w.values().size(); ++i)
            REQUIRE(std::abs(p.values()[i] - w.values()[i]) < 1e-15);
        // idempotent
        Kernel p2 = project_support(p);
        for (size_t i = 0; i < p.values().size(); ++i)
            REQUIRE(std::abs(p2.values()[i] - p.values()[i]) < 1e-15);
    }
    SECTION("constant w_{1,0} is zeroed for r > 1 - k, matching an independent indicator") {
        Kernel w(1, 0, g);
        w.fill([](double, const std::vector<double>&) { return cplx(1.0, 0.0); });
        Kernel p = project_support(w);
        std::vector<int> idx;
        for (size_t kc = 0; kc < w.k_combos(); ++kc) {
            w.decode_combo(kc, idx);
            for (int ir = 0; ir < g->nr(); ++ir) {
                bool inside = g->r_nodes[ir] <= 1.0 - g->k_nodes[idx[0]] + 1e-14;
                REQUIRE(std::abs(p.at(ir, kc) - (inside ? cplx(1, 0) : cplx{})) < 1e-15);
            }
        }
    }
    SECTION("random kernel: pointwise product with recomputed indicator; norm never grows") {
        Kernel w = random_kernel(1, 1, g, 11);
        Kernel p = project_support(w);
        std::vector<int> idx;
        for (size_t kc = 0; kc < w.k_combos(); ++kc) {
            w.decode_combo(kc, idx);
            double rmax = 1.0 - std::max(g->k_nodes[idx[0]], g->k_nodes[idx[1]]);
            for (int ir = 0; ir < g->nr(); ++ir) {
                cplx want = g->r_nodes[ir] <= rmax + 1e-14 ? w.at(ir, kc) : cplx{};
                REQUIRE(std::abs(p.at(ir, kc) - want) < 1e-15);
            }
        }
        REQUIRE(sharp_norm(p) <= sharp_norm(w) + 1e-12);
    }
}

TEST_CASE("kernel binary round-trip is bit-exact") {
    auto g = make_grid(9, 3, 2);
    Kernel w = random_kernel(1, 1, g, 99);
    std::string path = "kernel_roundtrip.bin";
    io::save_kernel(path, w);
    Kernel r = io::load_kernel(path);
    REQUIRE(r.m() == w.m());
    REQUIRE(r.n() == w.n());
    REQUIRE(r.grid().nr() == g->nr());
    for (size_t i = 0; i < w.values().size(); ++i) {
        REQUIRE(r.values()[i].real() == w.values()[i].real());
        REQUIRE(r.values()[i].imag() == w.values()[i].imag());
    }
    std::remove(path.c_str());
}

TEST_CASE("kernel sequence binary round-trip is bit-exact") {
    auto g = make_grid(9, 3, 2);
    KernelSequence s(g, cplx(0.1, -0.2), 0.2);
    std::vector<cplx> u(g->nr());
    for (int i = 0; i < g->nr(); ++i) u[i] = cplx(0.01 * i, -0.003 * i);
    s.set_u00(u);
    s.set_sector(random_kernel(1, 1, g, 5));
    s.set_sector(random_kernel(2, 0, g, 6));
    s.add_tail(1.25e-7);
    std::string path = "seq_roundtrip.bin";
    io::save_sequence(path, s);
    KernelSequence r = io::load_sequence(path);
    REQUIRE(r.z() == s.z());
    REQUIRE(r.xi() == s.xi());
    REQUIRE(r.tail_bound() == s.tail_bound());
    for (int i = 0; i < g->nr(); ++i) REQUIRE(r.u00()[i] == s.u00()[i]);
    for (auto& [mn, k] : s.sectors()) {
        REQUIRE(r.has(mn.first, mn.second));
        const Kernel& rk = r.sector(mn.first, mn.second);
        for (size_t i = 0; i < k.values().size(); ++i) REQUIRE(rk.values()[i] == k.values()[i]);
    }
    std::remove(path.c_str());
}
