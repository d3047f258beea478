#include <catch_amalgamated.hpp>

#include "dcgrid/audit.hpp"

using namespace dcgrid;
using Catch::Approx;

TEST_CASE("load slope bound") {
    ZipLoad z{0.1, 21, 3000, 266};
    CHECK(max_load_slope(z, {300, 500}) == Approx(0.1 - 3000.0 / (500.0 * 500.0)).epsilon(1e-6));
    CHECK(max_load_slope(z, {200, 260}) == Approx(z.z_crit_inv()));
    // a chord across the kink stays below the largest tangent
    CHECK(max_load_slope(z, {200, 550}) <= z.z_crit_inv() + 1e-12);
}

TEST_CASE("audit DGU weight certifies the reference triple") {
    auto s = builtin_scenario_10bus(Variant::strict_passive);
    auto r = audit_dgu_weight(s, OperatingBox{}, 0.05);
    CHECK(r.feasible);
    CHECK(r.margin < 0.0);
}

TEST_CASE("dissipation audit over a short run") {
    auto s = builtin_scenario_10bus(Variant::strict_passive);
    auto tr = run(s, {1.0});
    auto rep = dissipation_audit(s, tr);
    REQUIRE(rep.dgu_available);
    CHECK(rep.passed(1e-6));
    CHECK(rep.find("load.bus1") != nullptr);
    CHECK(rep.find("line.1-2") != nullptr);
    CHECK(rep.find("pi.leaky") != nullptr);
    CHECK(rep.find("dda.stage2")->samples == tr.samples());
    CHECK(rep.composite_samples > 0);

    SECTION("doubled load indices are caught") {
        AuditOptions o;
        o.load_index_factor = 2.0;
        auto neg = dissipation_audit(s, tr, o);
        CHECK(neg.worst("load.") > 1e-6);
        CHECK(neg.worst("line.") <= 1e-6);
    }
}
