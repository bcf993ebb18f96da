#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <sstream>

#include "rgflow/io.hpp"
#include "rgflow/runconfig.hpp"

using namespace rgflow;

TEST_CASE("config parser: sections, values, defaults") {
    std::stringstream ss(R"([model]
g = 0.03
beta = 0.7
coupling_amp = 0.02

[grids]
r_nodes = 49

[rg]
rho = 0.125
m_max = 7

[oracle]
n_ph_max = 2

[scan]
kind = rho
rho_values = 0.05, 0.1
)");
    RunConfig cfg = parse_config(ss);
    REQUIRE(cfg.model.g == cplx(0.03, 0.0));
    REQUIRE(cfg.model.beta == 0.7);
    REQUIRE(cfg.r_nodes == 49);
    REQUIRE(cfg.pipeline.rg.rho == 0.125);
    REQUIRE(cfg.pipeline.m_max == 7);
    REQUIRE(cfg.pipeline.oracle_n_ph == 2);
    REQUIRE(cfg.scan_kind == "rho");
    REQUIRE(cfg.rho_values == std::vector<double>{0.05, 0.1});
    // untouched defaults
    REQUIRE(cfg.pipeline.rg.xi == 0.2);
    REQUIRE(cfg.pipeline.init.zgrid.n_contour == 16);
}

TEST_CASE("config parser: line-anchored errors") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        std::stringstream ss(text);
        try {
            parse_config(ss);
            FAIL("expected a config error");
        } catch (const ConfigError& e) {
            INFO(e.what());
            REQUIRE(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error("[model]\ng == 0.05\n", "line 2");
    expect_error("[model]\nfrobnicate = 1\n", "unknown key");
    expect_error("[nonsense]\n", "unknown section");
    expect_error("g = 0.05\n", "outside any section");
    expect_error("[rg]\nrho = 0.3\n", "rho");            // hypothesis range
    expect_error("[model]\ng = zebra\n", "line 2");
    expect_error("[z_samples]\ncontour_radius = 0.6\n", "D_1/2");
}

TEST_CASE("shipped configs parse") {
    for (const char* p : {"../configs/reference.cfg", "../configs/free.cfg",
                          "../configs/beta_scan.cfg", "../configs/g_scan.cfg",
                          "../configs/rho_scan.cfg"}) {
        std::ifstream f(p);
        if (!f.is_open()) continue;  // running from another directory
        REQUIRE_NOTHROW(parse_config(f, p));
    }
}

TEST_CASE("fock vector round-trip is bit-exact") {
    auto g = make_grid(9, 3, 1);
    auto sp = make_fock_space(g, 2);
    VectorXcd v(sp.dim());
    for (int i = 0; i < sp.dim(); ++i) v[i] = cplx(std::sin(0.1 * i) * 1e-3, std::cos(i) / 7.0);
    std::string path = "roundtrip.fvec";
    io::save_fock_vector(path, sp, 2, v);
    int ad = 0, nm = 0, np = 0;
    VectorXcd r = io::load_fock_vector(path, &ad, &nm, &np);
    REQUIRE(ad == 2);
    REQUIRE(nm == sp.n_modes);
    REQUIRE(np == 2);
    REQUIRE(r.size() == v.size());
    for (int i = 0; i < v.size(); ++i) {
        REQUIRE(r[i].real() == v[i].real());
        REQUIRE(r[i].imag() == v[i].imag());
    }
    std::remove(path.c_str());
}

TEST_CASE("operator triplet export writes every nonzero") {
    auto g = make_grid(9, 3, 1);
    auto sp = make_fock_space(g, 1);
    auto hf = free_field(sp);
    std::string path = "op.triplets";
    io::export_operator_triplets(path, hf.mat, 0.0);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);  // header
    int count = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++count;
    REQUIRE(count == sp.dim() - 1);  // all diagonal entries except the vacuum zero
    std::remove(path.c_str());
}

TEST_CASE("flow trace JSONL has one record per step") {
    auto g = make_grid(17, 3, 1);
    SampledSequence fam;
    fam.zgrid = ZGrid{0.3, 4, 1};
    for (int i = 0; i < fam.zgrid.total(); ++i)
        fam.samples.emplace_back(g, fam.zgrid.point(i), 0.2);
    RGConfig cfg;
    cfg.fine_r = 33;
    auto fr = flow(fam, cfg, 3);
    std::string path = "trace.jsonl";
    io::write_flow_trace(path, fr);
    std::ifstream f(path);
    std::string line;
    int count = 0;
    while (std::getline(f, line)) {
        REQUIRE(line.find("\"step\":") != std::string::npos);
        REQUIRE(line.find("\"tail_policy\":\"additive\"") != std::string::npos);
        ++count;
    }
    REQUIRE(count == 4);
    std::remove(path.c_str());
}
