#include <catch_amalgamated.hpp>

#include <random>

#include "dcgrid/controller.hpp"
#include "dcgrid/dissipativity.hpp"
#include "dcgrid/lmi.hpp"
#include "dcgrid/plant.hpp"

using namespace dcgrid;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double a : v) x[k++] = a;
    return x;
}

double max_eig(const Eigen::MatrixXd& Q) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().maxCoeff();
}

// IFP(1) feeding OFP(1) exclusively; the third subsystem closes the loop.
InterconnectionSpec canonical_cascade() {
    InterconnectionSpec s;
    s.rates = {QuadraticSupplyRate::ifp(1.0), QuadraticSupplyRate::ofp(1.0), QuadraticSupplyRate::ifofp(1.0, 1.0)};
    s.H = Eigen::MatrixXd::Zero(3, 3);
    s.H(0, 2) = -1.0;
    s.H(1, 0) = 1.0;
    s.H(2, 1) = 1.0;
    return s;
}

}  // namespace

TEST_CASE("supply values") {
    CHECK(supply_value(QuadraticSupplyRate::passive(), vec({1}), vec({2})) == Approx(2.0));
    CHECK(supply_value(QuadraticSupplyRate::ofp(1.0), vec({1}), vec({1})) == Approx(0.0).margin(1e-15));
    CHECK_THROWS(supply_value(QuadraticSupplyRate::passive(), vec({1, 2}), vec({1})));
    // w = 2 sigma u y - nu u^2 - rho y^2 written out by hand
    auto r = QuadraticSupplyRate::ifofp(-4.686, 0.01);
    double u = 0.7, y = -1.3;
    CHECK(r.value(u, y) == Approx(2 * r.cross * u * y + 4.686 * u * u - 0.01 * y * y));
}

TEST_CASE("rate encodings") {
    auto r = QuadraticSupplyRate::ifofp(-4.686, 0.01);
    CHECK(r.cross == Approx(0.476570).epsilon(1e-9));
    CHECK(r.consistent());
    auto i = QuadraticSupplyRate::ifp(2.0);
    CHECK(i.rho == 0.0);
    CHECK(i.cross == 0.5);
    auto o = QuadraticSupplyRate::ofp(3.0);
    CHECK(o.nu == 0.0);
    CHECK(o.cross == 0.5);
    CHECK(o.consistent());
}

TEST_CASE("L2 rate of a symmetric sector") {
    CHECK(l2_gain_of_symmetric_sector(1.0).l2_gain() == Approx(1.0));
    auto r = l2_gain_of_symmetric_sector(0.5);
    CHECK(r.nu == Approx(0.25));
    CHECK(r.rho == 1.0);
    CHECK(r.cross == 0.0);
    // gamma^2 u^2 - y^2
    CHECK(r.value(2.0, 1.0) == Approx(0.25 * 4 - 1));
    CHECK(l2_gain_of_symmetric_sector(std::sqrt(1e-6 / 0.05)).l2_gain() == Approx(4.472136e-3).epsilon(1e-6));
    CHECK_THROWS(l2_gain_of_symmetric_sector(0.0));
}

TEST_CASE("sector of a linear map") {
    auto s = sector_of_static_map([](double u) { return 2 * u; }, {-1, 1});
    CHECK(s.c_lo == Approx(2.0));
    CHECK(s.c_hi == Approx(2.0));
    CHECK(s.rate.nu == Approx(2.0));
    CHECK(s.rate.rho == Approx(0.5));
    CHECK_THROWS(sector_of_static_map([](double u) { return -u; }, {-1, 1}));
    CHECK_THROWS(sector_of_static_map([](double u) { return u; }, {1, 1}));
}

TEST_CASE("sector of the weighting function") {
    WeightingParams w{0.1, 1.1, 7.5};
    auto s = sector_of_static_map([&](double u) { return weighting(w, u); }, {-2000, 2000},
                                  [&](double u) { return weighting_derivative(w, u); });
    CHECK(s.c_lo == Approx(0.1));
    CHECK(s.c_hi == Approx(1.2).epsilon(1e-9));
    auto r = weighting_indices(w);
    CHECK(r.nu == Approx(s.rate.nu));
    CHECK(r.rho == Approx(s.rate.rho).epsilon(1e-9));
}

TEST_CASE("sector of a ZIP load above 200 V") {
    ZipLoad z{0.1, 21.0, 3000.0, 266.0};
    auto s = sector_of_static_map([&](double v) { return z.current(v); }, {200, 2000},
                                  [&](double v) { return z.slope(v); });
    CHECK(s.c_lo == Approx(0.1 - 3000.0 / (266.0 * 266.0)).epsilon(1e-9));
    CHECK(s.c_lo == Approx(0.05760).epsilon(1e-3));
    CHECK(s.c_hi == Approx(z.z_crit_inv()));
}

TEST_CASE("sector bounds hold for random shifts") {
    WeightingParams w{0.1, 1.1, 7.5};
    auto h = [&](double u) { return weighting(w, u); };
    auto s = sector_of_static_map(h, {-60, 60});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-60, 60);
    for (int k = 0; k < 10000; ++k) {
        double u = d(rng), ub = d(rng);
        double du = u - ub, dh = h(u) - h(ub);
        CHECK(s.c_lo * du * du <= du * dh + 1e-9);
        CHECK(du * dh <= s.c_hi * du * du + 1e-9);
    }
}

TEST_CASE("negative feedback of a passive system") {
    InterconnectionSpec s;
    s.rates = {QuadraticSupplyRate::passive()};
    s.H = Eigen::MatrixXd::Constant(1, 1, -1.0);
    auto c = verify_interconnection(s);
    CHECK(c.feasible);
    REQUIRE(c.d.size() == 1);
    CHECK(c.Q(0, 0) == Approx(-c.d[0]));
}

TEST_CASE("zero interconnection of OFP subsystems") {
    InterconnectionSpec s;
    s.rates = {QuadraticSupplyRate::ofp(1.0), QuadraticSupplyRate::ofp(1.0)};
    s.H = Eigen::MatrixXd::Zero(2, 2);
    auto c = verify_interconnection(s);
    CHECK(c.feasible);
    CHECK(max_eig(interconnection_q(s, vec({0.3, 1.7}))) < 0.0);
}

TEST_CASE("exclusive IFP to OFP cascade is infeasible") {
    auto s = canonical_cascade();
    auto pairs = detect_ifp_ofp_cascade(s);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0] == std::pair{0, 1});
    auto c = verify_interconnection(s);
    CHECK_FALSE(c.feasible);
    // Q_11 is -nu_1 d_1 for every d, hence never negative definite
    for (double d1 : {0.1, 1.0, 10.0}) CHECK(interconnection_q(s, vec({d1, 1, 1}))(0, 0) >= -1e-12 - d1);
}

TEST_CASE("cascade detection negatives") {
    InterconnectionSpec s;
    s.rates = {QuadraticSupplyRate::ifp(1.0), QuadraticSupplyRate::ofp(1.0)};
    s.H = Eigen::MatrixXd(2, 2);
    s.H << 0, -1, 1, 0;
    CHECK(detect_ifp_ofp_cascade(s).empty());
    s.H = Eigen::MatrixXd::Identity(2, 2);
    CHECK(detect_ifp_ofp_cascade(s).empty());
}

TEST_CASE("Q is symmetric and feasible certificates re-verify") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.05, 2.0);
    int feasible = 0;
    for (int trial = 0; trial < 40; ++trial) {
        InterconnectionSpec s;
        const int n = 2 + trial % 3;
        for (int k = 0; k < n; ++k) s.rates.push_back(QuadraticSupplyRate::ifofp(u(rng) - 0.5, u(rng)));
        s.H = Eigen::MatrixXd(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) s.H(r, c) = g(rng);
        s.H = 0.5 * (s.H - s.H.transpose());  // lossless coupling
        Eigen::VectorXd d = Eigen::VectorXd::Constant(n, 1.0) + 0.5 * Eigen::VectorXd::Random(n).cwiseAbs();
        Eigen::MatrixXd Q = interconnection_q(s, d);
        CHECK((Q - Q.transpose()).norm() < 1e-12);
        auto cert = verify_interconnection(s);
        if (cert.feasible) {
            ++feasible;
            CHECK(cert.d.minCoeff() > 0.0);
            CHECK(max_eig(interconnection_q(s, cert.d)) <= -1e-8 * std::max(1.0, cert.Q.norm()) + 1e-9);
        }
    }
    CHECK(feasible > 0);
}

TEST_CASE("minimally restrictive controller indices") {
    InterconnectionSpec s;
    s.rates = {QuadraticSupplyRate::ifofp(-4.686, 0.01), QuadraticSupplyRate::passive()};
    s.H = Eigen::MatrixXd(2, 2);
    s.H << 0, -1, 1, 0;
    s.free = {1};
    auto c = optimize_restrictive_indices(s);
    REQUIRE(c.feasible);
    REQUIRE(c.solved_indices.size() == 1);
    auto [nu, rho] = c.solved_indices[0];
    InterconnectionSpec fixed = s;
    fixed.free.clear();
    fixed.rates[1] = QuadraticSupplyRate::ifofp(nu, rho);
    CHECK(max_eig(interconnection_q(fixed, c.d)) <= 1e-9);
}

TEST_CASE("free slot over a strictly passive subsystem admits nonpositive indices") {
    InterconnectionSpec s;
    s.rates = {QuadraticSupplyRate::ifofp(0.5, 0.5), QuadraticSupplyRate::passive()};
    s.H = Eigen::MatrixXd(2, 2);
    s.H << 0, -1, 1, 0;
    s.free = {1};
    auto c = optimize_restrictive_indices(s);
    REQUIRE(c.feasible);
    CHECK(c.solved_indices[0].first + c.solved_indices[0].second <= 1e-9);
}

TEST_CASE("barrier method on a scalar problem") {
    // minimise y subject to y - 1 > 0 and 3 - y > 0
    LmiProblem p;
    p.nvar = 1;
    p.add_linear(vec({1.0}), -1.0);
    p.add_linear(vec({-1.0}), 3.0);
    p.c = vec({1.0});
    auto r = barrier_minimize(p, vec({2.0}));
    CHECK(r.y[0] == Approx(1.0).margin(1e-8));
    auto f = find_feasible(p, vec({10.0}), 0.1);
    CHECK(f.shift < 0.0);
    CHECK(p.min_eigenvalue(f.y) > 0.0);
}

TEST_CASE("barrier method on a 2x2 matrix inequality") {
    // [[y0, 1],[1, y1]] > 0, minimise y0 + y1; optimum y0 = y1 = 1.
    LmiProblem p;
    p.nvar = 2;
    LmiBlock b;
    b.F0 = Eigen::MatrixXd(2, 2);
    b.F0 << 0, 1, 1, 0;
    Eigen::MatrixXd E0 = Eigen::MatrixXd::Zero(2, 2), E1 = E0;
    E0(0, 0) = 1;
    E1(1, 1) = 1;
    b.Fk = {E0, E1};
    p.add_block(b);
    p.c = vec({1.0, 1.0});
    auto r = barrier_minimize(p, vec({3.0, 3.0}));
    CHECK(r.y[0] == Approx(1.0).margin(1e-6));
    CHECK(r.y[1] == Approx(1.0).margin(1e-6));
}
