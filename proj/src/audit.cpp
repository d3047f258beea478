#include "dcgrid/audit.hpp"

#include <algorithm>
#include <cmath>

namespace dcgrid {

const AuditEntry* AuditReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

double AuditReport::worst(const std::string& prefix) const {
    double w = -kInf;
    for (const auto& e : entries)
        if (e.name.rfind(prefix, 0) == 0 && e.samples > 0) w = std::max(w, e.normalized());
    return w;
}

double max_load_slope(const ZipLoad& load, Interval dom) {
    double best = -kInf;
    const double vc = load.v_crit;
    if (dom.lo < vc) best = std::max(best, load.z_crit_inv());
    if (dom.hi >= vc) {
        double a = std::max(dom.lo, vc);
        best = std::max(best, load.z_inv - load.p_const / (a * a));
        double b = std::isfinite(dom.hi) ? load.z_inv - load.p_const / (dom.hi * dom.hi) : load.z_inv;
        best = std::max(best, b);
    }
    return best;
}

DguPointResult audit_dgu_weight(const Scenario& s, const OperatingBox& box, double slope_lo, double nu1, double nu2,
                                double rho) {
    double hi = slope_lo;
    const DguParams* p = nullptr;
    for (const auto& b : s.grid.buses) {
        if (!b.dgu) continue;
        p = &*b.dgu;
        hi = std::max(hi, max_load_slope(b.load.initial, box.v));
        for (const auto& [t, z] : b.load.changes) hi = std::max(hi, max_load_slope(z, box.v));
    }
    if (!p) throw std::invalid_argument("scenario has no DGU");
    DguSearchOptions opt;
    opt.form = StorageForm::mass_weighted;
    opt.load_slope_hi = hi;
    return certify_dgu_point(*p, box, slope_lo, nu1, nu2, rho, opt);
}

namespace {

struct Acc {
    AuditEntry e;
    void add(double sdot, double w, double mag) {
        e.max_excess = std::max(e.max_excess, sdot - w);
        e.scale = std::max({e.scale, std::abs(sdot), std::abs(w), mag});
        ++e.samples;
    }
};

double chord(const ZipLoad& z, double v, double vb) {
    double dv = v - vb;
    if (std::abs(dv) <= 1e-9 * std::max(1.0, std::abs(vb))) return z.slope(vb);
    return (z.current(v) - z.current(vb)) / dv;
}

}  // namespace

AuditReport dissipation_audit(const Scenario& s, const Trajectory& tr, const AuditOptions& opt) {
    AuditReport rep;
    const auto& l = tr.layout;
    const int n = l.n, m = l.m;
    const auto& ctl = s.controller;

    if (opt.dgu) {
        rep.dgu = *opt.dgu;
        rep.dgu_available = true;
    } else {
        auto r = audit_dgu_weight(s, opt.box, opt.dgu_slope_lo);
        rep.dgu = r.idx;
        rep.dgu_available = r.feasible;
        if (!r.feasible) rep.notes.push_back("no DGU storage weight found; DGU and composite entries skipped");
    }
    const auto& D = rep.dgu;
    const double sig = 0.5 * (1.0 + D.nu1 * D.rho);

    std::vector<Acc> load(n), line(m), dgu(n);
    Acc dda2, dda4, pi, mg34, mg38;
    for (int k = 0; k < n; ++k) {
        load[k].e.name = "load.bus" + std::to_string(k + 1);
        dgu[k].e.name = "dgu.bus" + std::to_string(k + 1);
    }
    for (int j = 0; j < m; ++j)
        line[j].e.name = "line." + std::to_string(s.grid.lines[j].k) + "-" + std::to_string(s.grid.lines[j].l);
    dda2.e.name = "dda.stage2";
    dda4.e.name = "dda.stage4";
    pi.e.name = ctl.pi.tau > 0 ? "pi.leaky" : "pi.ideal";
    mg34.e.name = "microgrid.actuation-dependent";
    mg38.e.name = "microgrid.actuation-independent";

    const int nseg = static_cast<int>(tr.segment_start.size());
    Eigen::VectorXd dx(l.size());
    for (int seg = 0; seg < nseg; ++seg) {
        int last = -1;
        for (int i = 0; i < tr.samples(); ++i)
            if (tr.segment[i] == seg) last = i;
        if (last < 0) continue;
        ClosedLoop cl(s, tr.segment_start[seg]);
        const auto& cfg = cl.config();
        auto eq = refine_equilibrium(cl, tr.x[last]);
        if (eq.residual > 1e-6)
            rep.notes.push_back("window " + std::to_string(seg) + ": equilibrium residual " +
                                std::to_string(eq.residual));
        // Lines out of service decay to exactly zero current.
        Eigen::VectorXd xb = eq.x;
        for (int j = 0; j < m; ++j)
            if (!cfg.line_active[j]) xb[l.plant.line(j)] = 0.0;
        auto sb = cl.signals(xb);
        std::vector<double> rho_l(n);
        for (int k = 0; k < n; ++k) rho_l[k] = opt.load_index_factor * load_passivity_index(cfg.loads[k]);

        for (int i = 0; i < tr.samples(); ++i) {
            if (tr.segment[i] != seg) continue;
            const auto& x = tr.x[i];
            cl.rhs(x, dx);
            auto sg = cl.signals(x);

            // Bus inflows and line port voltages, shifted.
            Eigen::VectorXd zeta = Eigen::VectorXd::Zero(n);
            double sdot_lines = 0.0, mag_lines = 0.0;
            for (int j = 0; j < m; ++j) {
                const auto& ln = s.grid.lines[j];
                int r = l.plant.line(j);
                double ie = x[r] - xb[r];
                double du = 0.0;
                if (cfg.line_active[j]) {
                    zeta[ln.k - 1] += ie;
                    zeta[ln.l - 1] -= ie;
                    du = (x[l.plant.v(ln.l - 1)] - xb[l.plant.v(ln.l - 1)]) -
                         (x[l.plant.v(ln.k - 1)] - xb[l.plant.v(ln.k - 1)]);
                }
                double sdot = ln.l_line * ie * dx[r];
                double w = ie * du - ln.r_line * ie * ie;
                line[j].add(sdot, w, std::max(std::abs(ie * du), ln.r_line * ie * ie));
                sdot_lines += sdot;
                mag_lines += std::abs(ie * du) + ln.r_line * ie * ie;
            }

            bool all_dgu_ok = rep.dgu_available;
            double sdot_mg = sdot_lines, w34 = 0.0, w38 = 0.0, mag_mg = mag_lines;
            for (int k = 0; k < n; ++k) {
                if (!cfg.connected[k]) continue;  // isolated buses are outside the interconnection
                const int rv = l.plant.v(k);
                const double v = x[rv], vb = xb[rv], ve = v - vb;
                const double pe = sg.p_sp[k] - sb.p_sp[k];
                const auto& z = cfg.loads[k];
                const double slope = chord(z, v, vb);
                if (!cfg.actuated[k]) {
                    double sdot = cfg.c_eq[k] * ve * dx[rv];
                    double w = zeta[k] * ve - rho_l[k] * ve * ve;
                    load[k].add(sdot, w, std::max(std::abs(zeta[k] * ve), rho_l[k] * ve * ve));
                    sdot_mg += sdot;
                    w34 += -rho_l[k] * ve * ve;
                    mag_mg += std::abs(zeta[k] * ve) + rho_l[k] * ve * ve;
                } else {
                    // Static sector of the collocated load.
                    double flow = ve * (z.current(v) - z.current(vb));
                    load[k].add(0.0, flow - rho_l[k] * ve * ve, std::max(std::abs(flow), rho_l[k] * ve * ve));
                    if (!rep.dgu_available) continue;
                    const auto& p = *s.grid.buses[k].dgu;
                    const double ib = xb[l.plant.i(k)];
                    Eigen::Vector3d xe(x[l.plant.e(k)] - xb[l.plant.e(k)], x[l.plant.i(k)] - ib, ve);
                    Eigen::Vector3d xd(dx[l.plant.e(k)], dx[l.plant.i(k)], dx[rv]);
                    bool in_box = v >= opt.box.v.lo && v <= opt.box.v.hi && ib >= opt.box.i_eq.lo &&
                                  ib <= opt.box.i_eq.hi;
                    bool ok = in_box;
                    if (ok) {
                        auto M = dgu_lmi_matrix(p, D, v, ib, slope, cfg.c_eq[k]);
                        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(M, Eigen::EigenvaluesOnly);
                        ok = es.eigenvalues()[4] <= 0.0;
                    }
                    if (!ok) {
                        all_dgu_ok = false;
                        continue;
                    }
                    double sdot = 2.0 * xe.dot(D.P * xd);
                    double w = 2.0 * sig * pe * ve + zeta[k] * ve - D.nu1 * pe * pe - D.nu2 * zeta[k] * zeta[k] -
                               D.rho * ve * ve;
                    dgu[k].add(sdot, w,
                               std::max({std::abs(2.0 * sig * pe * ve), std::abs(zeta[k] * ve),
                                         std::abs(D.nu1) * pe * pe, std::abs(D.nu2) * zeta[k] * zeta[k],
                                         std::abs(D.rho) * ve * ve}));
                    sdot_mg += sdot;
                    w34 += 2.0 * sig * pe * ve - D.nu1 * pe * pe - D.rho * ve * ve - D.nu2 * zeta[k] * zeta[k];
                    mag_mg += std::abs(2.0 * sig * pe * ve) + std::abs(D.nu1) * pe * pe + std::abs(D.rho) * ve * ve +
                              std::abs(zeta[k] * ve) + std::abs(D.nu2) * zeta[k] * zeta[k];
                }
                w38 += 2.0 * sig * pe * ve - D.nu1 * pe * pe - D.rho * ve * ve;
            }
            // Port products cancel across the interconnection; only the
            // line losses remain.
            for (int j = 0; j < m; ++j) {
                double ie = x[l.plant.line(j)] - xb[l.plant.line(j)];
                w34 -= s.grid.lines[j].r_line * ie * ie;
            }
            if (all_dgu_ok) {
                ++rep.composite_samples;
                mg34.add(sdot_mg, w34, mag_mg);
                mg38.add(sdot_mg, w38, mag_mg);
            } else {
                ++rep.composite_skipped;
            }

            // DDA stages, storage (|x_e|^2 + |z_e|^2) / (2 g).
            auto dda = [&](Acc& acc, int xo, int zo, const Eigen::VectorXd& u, const Eigen::VectorXd& ub) {
                Eigen::VectorXd xe = x.segment(xo, n) - xb.segment(xo, n);
                Eigen::VectorXd ze = x.segment(zo, n) - xb.segment(zo, n);
                double sdot = (xe.dot(dx.segment(xo, n)) + ze.dot(dx.segment(zo, n))) / ctl.dda.g;
                double cross = xe.dot(u - ub);
                double w = cross - xe.squaredNorm();
                acc.add(sdot, w, std::max(std::abs(cross), xe.squaredNorm()));
            };
            dda(dda2, l.x2(0), l.z2(0), sg.u2, sb.u2);
            dda(dda4, l.x4(0), l.z4(0), sg.u4, sb.u4);

            // PI, storage ki |x_e|^2 / 2.
            {
                Eigen::VectorXd xe = x.segment(l.x3(0), n) - xb.segment(l.x3(0), n);
                Eigen::VectorXd ue = sg.u3 - sb.u3, ye = sg.y3 - sb.y3;
                auto r = pi_supply_rate(ctl.pi);
                double sdot = ctl.pi.ki * xe.dot(dx.segment(l.x3(0), n));
                double w = 2.0 * r.cross * ue.dot(ye) - r.nu * ue.squaredNorm() - r.rho * ye.squaredNorm();
                pi.add(sdot, w,
                       std::max({std::abs(2.0 * r.cross * ue.dot(ye)), r.nu * ue.squaredNorm(),
                                 r.rho * ye.squaredNorm()}));
            }
        }
    }
    for (auto& a : load) rep.entries.push_back(a.e);
    for (auto& a : line) rep.entries.push_back(a.e);
    rep.entries.push_back(dda2.e);
    rep.entries.push_back(dda4.e);
    rep.entries.push_back(pi.e);
    if (rep.dgu_available) {
        for (int k = 0; k < n; ++k)
            if (dgu[k].e.samples > 0) rep.entries.push_back(dgu[k].e);
        rep.entries.push_back(mg34.e);
        rep.entries.push_back(mg38.e);
    }
    return rep;
}

}  // namespace dcgrid
