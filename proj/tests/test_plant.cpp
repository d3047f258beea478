#include <catch_amalgamated.hpp>

#include <random>

#include "dcgrid/plant.hpp"
#include "dcgrid/scenario.hpp"

using namespace dcgrid;
using Catch::Approx;

namespace {

MicrogridSpec single_bus(const ZipLoad& z) {
    MicrogridSpec g;
    BusSpec b;
    b.id = 1;
    b.dgu = DguParams{};
    b.load.initial = z;
    b.actuation.initial = true;
    g.buses.push_back(b);
    return g;
}

// Bus 1 actuated, bus 2 unactuated, one line 1-2.
MicrogridSpec two_bus() {
    MicrogridSpec g;
    for (int k = 1; k <= 2; ++k) {
        BusSpec b;
        b.id = k;
        b.dgu = DguParams{};
        b.load.initial = ZipLoad{0.08 + 0.02 * k, 5.0 * k, 1500.0 * k, 266.0};
        b.actuation.initial = k == 1;
        g.buses.push_back(b);
    }
    g.lines.push_back({1, 2, 0.119, 2.38e-6, 26.18e-9});
    return g;
}

}  // namespace

TEST_CASE("ZIP load current") {
    ZipLoad z{0.1, 21.0, 3000.0, 266.0};
    CHECK(load_current(z, 380.0) == Approx(38.0 + 21.0 + 3000.0 / 380.0));
    CHECK(load_current(z, 380.0) == Approx(66.8947).epsilon(1e-6));
    CHECK(load_current(ZipLoad{0.1, 0, 0, 266.0}, 100.0) == Approx(10.0));
    CHECK_THROWS(load_current(z, -1.0));
}

TEST_CASE("ZIP branches agree at the critical voltage") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> zi(0.0, 0.13), ii(-21, 21), pp(-5000, 5000);
    for (int k = 0; k < 1000; ++k) {
        ZipLoad z{zi(rng), ii(rng), pp(rng), 266.0};
        double zip = z.z_inv * z.v_crit + z.i_const + z.p_const / z.v_crit;
        CHECK(z.z_crit_inv() * z.v_crit == Approx(zip).margin(1e-12));
        CHECK(z.current(std::nextafter(z.v_crit, 0.0)) == Approx(z.current(z.v_crit)).margin(1e-9));
    }
}

TEST_CASE("DGU right-hand side at the origin") {
    DguParams p;
    double p_sp = 1234.0;
    auto d = dgu_rhs(p, 0, 0, 0, p_sp, 0, 0, p.c_bus);
    CHECK(d.di == Approx((p.kp_pwr * p_sp + 380.0) / p.l_filter));
    CHECK(d.de == Approx(p_sp));
    CHECK(d.dv == 0.0);
}

TEST_CASE("switched-off DGU freezes its regulator") {
    DguParams p;
    auto d = dgu_rhs(p, 3.0, 40.0, 380.0, 5000.0, 2.0, 1.0, 2.2e-3, false);
    CHECK(d.de == 0.0);
    CHECK(d.di == 0.0);
    CHECK(d.dv == Approx((2.0 - 1.0) / 2.2e-3));
}

TEST_CASE("unactuated bus") {
    ZipLoad r{0.1, 0, 0, 266};
    CHECK(unactuated_bus_rhs(r, 380.0, 0.0, 2.2e-3) == Approx(-0.1 * 380.0 / 2.2e-3));
    CHECK(unactuated_bus_rhs(ZipLoad{}, 380.0, 1.0, 2.2e-3) == Approx(454.545).epsilon(1e-5));
    CHECK(unactuated_bus_rhs(r, 380.0, 38.0, 2.2e-3) == Approx(0.0).margin(1e-9));
}

TEST_CASE("line right-hand side") {
    LineSpec l{1, 2, 0.119, 2.38e-6, 0};
    CHECK(line_rhs(l, 0.0, 380.0, 380.0) == 0.0);
    double i = 1.0 / 0.119;
    CHECK(i == Approx(8.403).epsilon(1e-4));
    CHECK(line_rhs(l, i, 0.0, 1.0) == Approx(0.0).margin(1e-9));
    CHECK(line_rhs(l, 0.0, 0.0, 1.0) == Approx(-line_rhs(l, 0.0, 1.0, 0.0)));
}

TEST_CASE("equivalent capacitance lumps half of each active line") {
    auto g = two_bus();
    auto c = configure(g, 0.0);
    CHECK(c.c_eq[0] == Approx(2.2e-3 + 13.09e-9));
    CHECK(c.c_eq[1] == Approx(2.2e-3 + 13.09e-9));
    g.buses[1].connected.initial = false;
    c = configure(g, 0.0);
    CHECK_FALSE(c.line_active[0]);
    CHECK(c.c_eq[0] == 2.2e-3);
}

TEST_CASE("two-bus grid matches a hand-written model") {
    auto g = two_bus();
    auto cfg = configure(g, 0.0);
    const DguParams p;
    const auto& ln = g.lines[0];
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> E(-5, 5), I(-100, 100), V(150, 450), IL(-50, 50), P(-5000, 5000);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        double e1 = E(rng), e2 = E(rng), i1 = I(rng), i2 = I(rng), v1 = V(rng), v2 = V(rng), il = IL(rng);
        double p1 = P(rng), p2 = P(rng);
        MicrogridState s{Eigen::Vector2d(e1, e2), Eigen::Vector2d(i1, i2), Eigen::Vector2d(v1, v2),
                         Eigen::VectorXd::Constant(1, il)};
        Eigen::VectorXd dx = assemble_rhs(g, s, Eigen::Vector2d(p1, p2), 0.0);

        const double c1 = p.c_bus + 0.5 * ln.c_line, c2 = p.c_bus + 0.5 * ln.c_line;
        const auto& z1 = g.buses[0].load.initial;
        const auto& z2 = g.buses[1].load.initial;
        double pe = p1 - v1 * i1;
        double vsc = p.kp_pwr * pe + p.ki_pwr * e1 + p.r_damp * i1 + p.v_ref;
        Eigen::VectorXd ref(7);
        ref << pe, 0.0,                                          // e
            (-p.r_filter * i1 - v1 + vsc) / p.l_filter, 0.0,     // i
            (i1 + il - z1.current(v1)) / c1,                     // v1: positive line current enters bus 1
            (-il - z2.current(v2)) / c2,                         // v2
            (-ln.r_line * il + v2 - v1) / ln.l_line;             // line
        double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
        worst = std::max(worst, (dx - ref).cwiseAbs().maxCoeff() / scale);
        (void)e2;
        (void)i2;
        (void)p2;
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("plant jacobian matches finite differences") {
    auto g = two_bus();
    auto cfg = configure(g, 0.0);
    PlantLayout L{2, 1};
    Eigen::VectorXd x(L.size()), p_sp(2);
    x << 0.3, 0.0, 50.0, 0.0, 377.0, 371.0, -20.0;
    p_sp << 19000.0, 0.0;
    Eigen::MatrixXd J(L.size(), L.size()), Jp(L.size(), 2);
    plant_jacobian(g, cfg, x, p_sp, J, Jp);
    Eigen::VectorXd f0(L.size()), f1(L.size());
    for (int c = 0; c < L.size(); ++c) {
        double h = 1e-6 * std::max(1.0, std::abs(x[c]));
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        plant_rhs(g, cfg, xp, p_sp, f1);
        plant_rhs(g, cfg, xm, p_sp, f0);
        Eigen::VectorXd col = (f1 - f0) / (2 * h);
        for (int r = 0; r < L.size(); ++r) CHECK(J(r, c) == Approx(col[r]).epsilon(1e-5).margin(1e-3));
    }
}

TEST_CASE("single-bus resistive equilibrium") {
    auto g = single_bus(ZipLoad{0.1, 0, 0, 266});
    auto eq = solve_equilibrium(g, Eigen::VectorXd::Constant(1, 14440.0), 0.0);
    CHECK(eq.residual < 1e-9);
    CHECK(eq.state.v[0] == Approx(380.0).epsilon(1e-10));
    CHECK(eq.state.i[0] == Approx(38.0).epsilon(1e-10));
    Eigen::VectorXd dx = assemble_rhs(g, eq.state, Eigen::VectorXd::Constant(1, 14440.0), 0.0);
    CHECK(dx.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("unloaded equilibrium sits at the reference") {
    auto g = single_bus(ZipLoad{});
    auto eq = solve_equilibrium(g, Eigen::VectorXd::Zero(1), 0.0);
    CHECK(eq.state.v[0] == Approx(380.0));
    CHECK(eq.state.i[0] == Approx(0.0).margin(1e-9));
}

TEST_CASE("10-bus State A equilibrium and power balance") {
    auto s = builtin_scenario_10bus(Variant::strict_passive);
    const auto& g = s.grid;
    auto cfg = configure(g, 0.0);
    double demand = 0.0;
    int actuated = 0;
    for (int k = 0; k < 10; ++k) {
        if (cfg.connected[k]) demand += 380.0 * cfg.loads[k].current(380.0);
        actuated += cfg.actuated[k];
    }
    Eigen::VectorXd p_sp = Eigen::VectorXd::Zero(10);
    for (int k = 0; k < 10; ++k)
        if (cfg.actuated[k]) p_sp[k] = demand / actuated;
    auto eq = solve_equilibrium(g, p_sp, 0.0);
    CHECK(eq.residual < 1e-9);
    double injected = 0.0, consumed = 0.0, losses = 0.0;
    for (int k = 0; k < 10; ++k) {
        if (!cfg.connected[k]) continue;
        double v = eq.state.v[k];
        CHECK(v >= 350.0);
        CHECK(v <= 400.0);
        if (cfg.actuated[k]) injected += v * eq.state.i[k];
        consumed += v * cfg.loads[k].current(v);
    }
    for (int l = 0; l < g.line_count(); ++l)
        if (cfg.line_active[l]) losses += g.lines[l].r_line * std::pow(eq.state.i_line[l], 2);
    CHECK(std::abs(injected - consumed - losses) / injected < 1e-6);
}

TEST_CASE("shifted DGU realisation") {
    DguParams p;
    auto a = shift_dgu(p, 250.0, 40.0, 0.05);
    auto b = shift_dgu(p, 450.0, 300.0, 0.05);
    auto mid = shift_dgu(p, 350.0, 170.0, 0.05);
    CHECK((a.A + b.A - 2.0 * mid.A).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(a.A(2, 2) == -0.05);
    CHECK(a.b1 == Eigen::Vector3d(1.0, p.kp_pwr, 0.0));
    CHECK(a.b2 == Eigen::Vector3d(0, 0, 1));
    CHECK(a.c == Eigen::Vector3d(0, 0, 1));
}

TEST_CASE("shifted DGU is zero-state observable") {
    // With v_e forced to zero, the (e, i) block decays on its own.
    DguParams p;
    for (double v : {200.0, 380.0, 550.0})
        for (double ieq : {10.0, 350.0}) {
            auto s = shift_dgu(p, v, ieq, 0.05);
            Eigen::Matrix2d A2;
            A2 << s.A(0, 0), s.A(0, 1), s.A(1, 0) / p.l_filter, s.A(1, 1) / p.l_filter;
            Eigen::Vector2d x(1.0, 1.0);
            // slowest mode is near ki/kp = 1/s; 30 s of implicit Euler
            const double dt = 1e-3;
            Eigen::Matrix2d step = (Eigen::Matrix2d::Identity() - dt * A2).inverse();
            for (int k = 0; k < 30000; ++k) x = step * x;
            CHECK(x.norm() < 1e-6);
        }
}

TEST_CASE("equilibrium disturbance term vanishes") {
    // At a solved equilibrium, the constant term of the shifted DGU model is zero:
    // p_sp - v i = 0, ki e + (Rd - R) i - v + kp (p_sp - v i) + v_ref = 0 and
    // i + inflow - I_L(v) = 0.
    auto g = single_bus(ZipLoad{0.1, 21, 3000, 266});
    double p_sp = 25000.0;
    auto eq = solve_equilibrium(g, Eigen::VectorXd::Constant(1, p_sp), 0.0);
    DguParams p;
    double e = eq.state.e[0], i = eq.state.i[0], v = eq.state.v[0];
    CHECK(std::abs(p_sp - v * i) < 1e-9 * p_sp);
    CHECK(std::abs(p.ki_pwr * e + (p.r_damp - p.r_filter) * i - v + p.v_ref) < 1e-9 * v);
    CHECK(std::abs(i - g.buses[0].load.initial.current(v)) < 1e-9 * i);
}
