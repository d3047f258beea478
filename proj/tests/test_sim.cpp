#include <catch_amalgamated.hpp>

#include "dcgrid/sim.hpp"

using namespace dcgrid;
using Catch::Approx;

namespace {

Scenario strict() { return builtin_scenario_10bus(Variant::strict_passive); }

// Worst column-relative mismatch between J and central differences of rhs.
double jacobian_mismatch(const ClosedLoop& cl, const Eigen::VectorXd& x) {
    const int n = cl.layout().size();
    Eigen::MatrixXd J(n, n);
    cl.jacobian(x, J);
    Eigen::VectorXd fp(n), fm(n);
    double worst = 0.0;
    for (int j = 0; j < n; ++j) {
        const double h = 1e-6 * (1.0 + std::abs(x[j]));
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        cl.rhs(xp, fp);
        cl.rhs(xm, fm);
        Eigen::VectorXd fd = (fp - fm) / (2 * h);
        const double scale = std::max(1.0, J.col(j).cwiseAbs().maxCoeff());
        worst = std::max(worst, (fd - J.col(j)).cwiseAbs().maxCoeff() / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("layout indices are disjoint and cover the state") {
    auto s = strict();
    auto lay = closed_loop_layout(s);
    CHECK(lay.size() == 3 * 10 + 13 + 5 * 10);
    std::vector<int> seen(lay.size(), 0);
    for (int k = 0; k < 10; ++k)
        for (int idx : {lay.plant.e(k), lay.plant.i(k), lay.plant.v(k), lay.x2(k), lay.z2(k), lay.x3(k), lay.x4(k),
                        lay.z4(k)})
            ++seen[idx];
    for (int l = 0; l < 13; ++l) ++seen[lay.plant.line(l)];
    for (int c : seen) CHECK(c == 1);
}

TEST_CASE("analytic Jacobian matches finite differences") {
    for (auto v : {Variant::strict_passive, Variant::passive_ideal}) {
        auto s = builtin_scenario_10bus(v);
        auto tr = run(s, {0.3, false});
        ClosedLoop cl(s, 0.29);
        CHECK(jacobian_mismatch(cl, tr.x.back()) < 1e-5);
        // a second configuration with a disconnected bus and bus 10 online
        ClosedLoop cl2(s, 12.0);
        Eigen::VectorXd x = tr.x.back();
        CHECK(jacobian_mismatch(cl2, x) < 1e-5);
    }
}

TEST_CASE("resistive bus settles near the reference") {
    auto s = single_bus_scenario(ZipLoad{0.1, 0.0, 0.0, 266}, 20.0);
    auto tr = run(s);
    const auto& lay = tr.layout;
    ClosedLoop cl(s, 19.0);
    Eigen::VectorXd dx(lay.size());
    cl.rhs(tr.x.back(), dx);
    const double v = tr.x.back()[lay.plant.v(0)];
    const double i = tr.x.back()[lay.plant.i(0)];
    CHECK(std::abs(dx[lay.plant.v(0)]) < 1e-2);
    // the converter supplies what the load draws
    CHECK(i == Approx(0.1 * v).epsilon(1e-4));
    // the leaky integrator leaves h(v_ref - v) = factor * p_sp with p_sp = v i
    const double offset = steady_state_factor(s.controller.pi) * v * i;
    CHECK(weighting(s.controller.weighting, 380.0 - v) == Approx(offset).epsilon(1e-3));
    CHECK(380.0 - v > s.controller.weighting.c);
}

TEST_CASE("single loaded bus reaches the predicted offset") {
    ZipLoad z{0.1, 0.0, 0.0, 266};
    auto s = single_bus_scenario(z, 20.0);
    auto tr = run(s);
    auto w = window_summaries(s, tr);
    REQUIRE(w.size() == 1);
    CHECK(w[0].quasi_steady);
    CHECK(w[0].avg_error == Approx(w[0].predicted).epsilon(2e-3));
}

TEST_CASE("runs are deterministic") {
    auto s = strict();
    auto a = run(s, {0.5}), b = run(s, {0.5});
    REQUIRE(a.samples() == b.samples());
    for (int k = 0; k < a.samples(); ++k) {
        CHECK(a.t[k] == b.t[k]);
        CHECK((a.x[k] - b.x[k]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("halving the step changes little") {
    auto s = strict();
    auto a = run(s, {1.0, false});
    s.solver.step *= 0.5;
    auto b = run(s, {1.0, false});
    double rel = (a.x.back() - b.x.back()).cwiseAbs().maxCoeff() / b.x.back().cwiseAbs().maxCoeff();
    CHECK(rel < 1e-6);
}

TEST_CASE("sampling follows the solver options") {
    auto s = strict();
    s.solver.sample = 0.01;
    auto tr = run(s, {0.2});
    CHECK(tr.t.front() == 0.0);
    CHECK(tr.t.back() == Approx(0.2));
    CHECK(tr.samples() == 21);
    auto m = objective_metrics(s, tr);
    CHECK(m.t.size() == tr.t.size());
}

TEST_CASE("structural kernel matches the numeric nullity") {
    for (auto v : {Variant::strict_passive, Variant::passive_ideal}) {
        auto s = builtin_scenario_10bus(v);
        auto lin = linearize(s, 2.0);
        CHECK(lin.residual < 1e-6);
        CHECK(lin.numeric_nullity == lin.kernel_dim);
        CHECK(lin.stable);
        CHECK(lin.max_real < 0.0);
    }
}

TEST_CASE("frozen plant states are inert in the closed loop") {
    auto s = strict();
    ClosedLoop cl(s, 0.0);
    auto lay = cl.layout();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.size()), dx(lay.size());
    for (int k = 0; k < 10; ++k) {
        x[lay.plant.v(k)] = 370 + k;
        x[lay.plant.e(k)] = 3.0;
        x[lay.plant.i(k)] = 20.0;
    }
    cl.rhs(x, dx);
    for (int k = 0; k < 10; ++k)
        if (!cl.config().actuated[k]) {
            CHECK(dx[lay.plant.e(k)] == 0.0);
            CHECK(dx[lay.plant.i(k)] == 0.0);
        }
}
