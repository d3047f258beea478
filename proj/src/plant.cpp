#include "dcgrid/plant.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dcgrid {

double load_current(const ZipLoad& load, double v) {
    if (v < 0.0) throw std::invalid_argument("load voltage must be nonnegative");
    return load.current(v);
}

void DguParams::validate() const {
    if (!(r_filter > 0 && l_filter > 0 && c_bus > 0)) throw std::invalid_argument("DGU filter parameters must be positive");
    if (!(kp_pwr > 0 && ki_pwr > 0)) throw std::invalid_argument("DGU regulator gains must be positive");
    if (!(v_ref > 0)) throw std::invalid_argument("DGU reference voltage must be positive");
}

Topology MicrogridSpec::electrical_topology(double t) const {
    Topology top(bus_count());
    const auto& in = line_in_service.at(t);
    for (int l = 0; l < line_count(); ++l)
        if (in.empty() || in[l]) top.add_edge(lines[l].k, lines[l].l, 1.0 / lines[l].r_line);
    return top;
}

std::vector<double> MicrogridSpec::switch_times() const {
    std::set<double> ts;
    for (const auto& [t, v] : line_in_service.changes) ts.insert(t);
    for (const auto& b : buses) {
        for (const auto& [t, v] : b.load.changes) ts.insert(t);
        for (const auto& [t, v] : b.actuation.changes) ts.insert(t);
        for (const auto& [t, v] : b.connected.changes) ts.insert(t);
    }
    return {ts.begin(), ts.end()};
}

void MicrogridSpec::validate() const {
    const int n = bus_count();
    if (n == 0) throw std::invalid_argument("microgrid has no buses");
    for (int k = 0; k < n; ++k) {
        const auto& b = buses[k];
        if (b.id != k + 1) throw std::invalid_argument("bus ids must be 1..N in order");
        if (b.dgu) b.dgu->validate();
        if (!(b.capacitance() > 0)) throw std::invalid_argument("bus capacitance must be positive");
        auto check_load = [&](const ZipLoad& z) {
            if (!(z.v_crit > 0)) throw std::invalid_argument("v_crit must be positive");
        };
        check_load(b.load.initial);
        for (const auto& [t, z] : b.load.changes) check_load(z);
        auto check_act = [&](bool a) {
            if (a && !b.dgu) throw std::invalid_argument("bus " + std::to_string(b.id) + " actuated without a DGU");
        };
        check_act(b.actuation.initial);
        for (const auto& [t, a] : b.actuation.changes) check_act(a);
    }
    Topology top(n);
    for (const auto& l : lines) {
        top.add_edge(l.k, l.l);  // rejects self loops, duplicates, unknown buses
        if (!(l.r_line > 0 && l.l_line > 0 && l.c_line >= 0)) throw std::invalid_argument("invalid line parameters");
    }
    auto check_mask = [&](const std::vector<bool>& m) {
        if (!m.empty() && static_cast<int>(m.size()) != line_count())
            throw std::invalid_argument("line service mask has wrong length");
    };
    check_mask(line_in_service.initial);
    for (const auto& [t, m] : line_in_service.changes) check_mask(m);
}

GridConfig configure(const MicrogridSpec& g, double t) {
    const int n = g.bus_count(), m = g.line_count();
    GridConfig c;
    c.actuated.resize(n);
    c.connected.resize(n);
    c.loads.resize(n);
    c.c_eq.resize(n);
    for (int k = 0; k < n; ++k) {
        const auto& b = g.buses[k];
        c.actuated[k] = b.dgu.has_value() && b.actuation.at(t);
        c.connected[k] = b.connected.at(t);
        c.loads[k] = b.load.at(t);
        c.c_eq[k] = b.capacitance();
    }
    const auto& in = g.line_in_service.at(t);
    c.line_active.resize(m);
    for (int l = 0; l < m; ++l) {
        const auto& ln = g.lines[l];
        bool on = (in.empty() || in[l]) && c.connected[ln.k - 1] && c.connected[ln.l - 1];
        c.line_active[l] = on;
        if (on) {
            c.c_eq[ln.k - 1] += 0.5 * ln.c_line;
            c.c_eq[ln.l - 1] += 0.5 * ln.c_line;
        }
    }
    return c;
}

Eigen::VectorXd MicrogridState::pack() const {
    const int n = static_cast<int>(v.size()), m = static_cast<int>(i_line.size());
    Eigen::VectorXd x(3 * n + m);
    x << e, i, v, i_line;
    return x;
}

MicrogridState MicrogridState::unpack(const Eigen::VectorXd& x, int n, int m) {
    return {x.segment(0, n), x.segment(n, n), x.segment(2 * n, n), x.segment(3 * n, m)};
}

DguDerivative dgu_rhs(const DguParams& p, double e, double i, double v, double p_sp, double line_inflow,
                      double load_i, double c_eq, bool alpha) {
    DguDerivative d;
    if (!alpha) {
        d.dv = (line_inflow - load_i) / c_eq;
        return d;
    }
    double perr = p_sp - v * i;
    double v_vsc = p.kp_pwr * perr + p.ki_pwr * e + p.r_damp * i + p.v_ref;
    d.de = perr;
    d.di = (-p.r_filter * i - v + v_vsc) / p.l_filter;
    d.dv = (i + line_inflow - load_i) / c_eq;
    return d;
}

double unactuated_bus_rhs(const ZipLoad& load, double v, double line_inflow, double c_eq) {
    return (line_inflow - load.current(v)) / c_eq;
}

double line_rhs(const LineSpec& line, double i, double v_source, double v_sink) {
    return (-line.r_line * i + (v_sink - v_source)) / line.l_line;
}

void plant_rhs(const MicrogridSpec& g, const GridConfig& c, const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& p_sp, Eigen::Ref<Eigen::VectorXd> dx) {
    const int n = g.bus_count(), m = g.line_count();
    PlantLayout L{n, m};
    Eigen::VectorXd inflow = Eigen::VectorXd::Zero(n);
    for (int l = 0; l < m; ++l) {
        const auto& ln = g.lines[l];
        double il = x[L.line(l)];
        if (c.line_active[l]) {
            inflow[ln.l - 1] -= il;
            inflow[ln.k - 1] += il;
            dx[L.line(l)] = line_rhs(ln, il, x[L.v(ln.k - 1)], x[L.v(ln.l - 1)]);
        } else {
            dx[L.line(l)] = -ln.r_line * il / ln.l_line;  // open breaker: freewheeling decay
        }
    }
    for (int k = 0; k < n; ++k) {
        double v = x[L.v(k)];
        double load = c.loads[k].current(v);
        if (c.actuated[k]) {
            auto d = dgu_rhs(*g.buses[k].dgu, x[L.e(k)], x[L.i(k)], v, p_sp[k], inflow[k], load, c.c_eq[k], true);
            dx[L.e(k)] = d.de;
            dx[L.i(k)] = d.di;
            dx[L.v(k)] = d.dv;
        } else {
            dx[L.e(k)] = 0.0;
            dx[L.i(k)] = 0.0;
            dx[L.v(k)] = unactuated_bus_rhs(c.loads[k], v, inflow[k], c.c_eq[k]);
        }
    }
}

void plant_jacobian(const MicrogridSpec& g, const GridConfig& c, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& /*p_sp*/, Eigen::Ref<Eigen::MatrixXd> Jx,
                    Eigen::Ref<Eigen::MatrixXd> Jp) {
    const int n = g.bus_count(), m = g.line_count();
    PlantLayout L{n, m};
    Jx.setZero();
    Jp.setZero();
    for (int l = 0; l < m; ++l) {
        const auto& ln = g.lines[l];
        int r = L.line(l);
        Jx(r, r) = -ln.r_line / ln.l_line;
        if (!c.line_active[l]) continue;
        Jx(r, L.v(ln.l - 1)) = 1.0 / ln.l_line;
        Jx(r, L.v(ln.k - 1)) = -1.0 / ln.l_line;
        Jx(L.v(ln.l - 1), r) = -1.0 / c.c_eq[ln.l - 1];
        Jx(L.v(ln.k - 1), r) = 1.0 / c.c_eq[ln.k - 1];
    }
    for (int k = 0; k < n; ++k) {
        double v = x[L.v(k)];
        int rv = L.v(k);
        Jx(rv, rv) = -c.loads[k].slope(v) / c.c_eq[k];
        if (!c.actuated[k]) continue;
        const auto& p = *g.buses[k].dgu;
        double i = x[L.i(k)];
        int re = L.e(k), ri = L.i(k);
        Jx(re, ri) = -v;
        Jx(re, rv) = -i;
        Jp(re, k) = 1.0;
        Jx(ri, re) = p.ki_pwr / p.l_filter;
        Jx(ri, ri) = (-p.r_filter - p.kp_pwr * v + p.r_damp) / p.l_filter;
        Jx(ri, rv) = (-1.0 - p.kp_pwr * i) / p.l_filter;
        Jp(ri, k) = p.kp_pwr / p.l_filter;
        Jx(rv, ri) = 1.0 / c.c_eq[k];
    }
}

std::vector<bool> plant_inert(const MicrogridSpec& g, const GridConfig& c) {
    const int n = g.bus_count();
    PlantLayout L{n, g.line_count()};
    std::vector<bool> inert(L.size(), false);
    for (int k = 0; k < n; ++k)
        if (!c.actuated[k]) inert[L.e(k)] = inert[L.i(k)] = true;
    return inert;
}

Eigen::VectorXd assemble_rhs(const MicrogridSpec& g, const MicrogridState& s, const Eigen::VectorXd& p_sp, double t) {
    auto c = configure(g, t);
    Eigen::VectorXd x = s.pack(), dx(x.size());
    plant_rhs(g, c, x, p_sp, dx);
    return dx;
}

EquilibriumResult solve_equilibrium(const MicrogridSpec& g, const Eigen::VectorXd& p_sp, double t) {
    const int n = g.bus_count(), m = g.line_count();
    if (p_sp.size() != n) throw std::invalid_argument("setpoint vector must cover all buses");
    PlantLayout L{n, m};
    auto c = configure(g, t);

    // Initial guess: v_ref at live buses, 0 V on isolated unactuated buses,
    // DGU currents from the setpoints, regulator integrators from the
    // steady-state filter equation, line currents from the voltage drops.
    Eigen::VectorXd x = Eigen::VectorXd::Zero(L.size());
    for (int k = 0; k < n; ++k) {
        bool isolated = true;
        for (int l = 0; l < m; ++l)
            if (c.line_active[l] && (g.lines[l].k == k + 1 || g.lines[l].l == k + 1)) isolated = false;
        x[L.v(k)] = (!c.actuated[k] && isolated) ? 0.0 : g.v_ref;
        if (c.actuated[k]) {
            const auto& p = *g.buses[k].dgu;
            double v = x[L.v(k)];
            double i = p_sp[k] / v;
            x[L.i(k)] = i;
            x[L.e(k)] = (v - p.v_ref + (p.r_filter - p.r_damp) * i) / p.ki_pwr;
        }
    }
    for (int l = 0; l < m; ++l)
        if (c.line_active[l]) {
            const auto& ln = g.lines[l];
            x[L.line(l)] = (x[L.v(ln.l - 1)] - x[L.v(ln.k - 1)]) / ln.r_line;
        }

    auto inert = plant_inert(g, c);
    std::vector<int> idx;
    for (int r = 0; r < L.size(); ++r)
        if (!inert[r]) idx.push_back(r);
    const int nu = static_cast<int>(idx.size());

    // Residuals are weighed by the state masses (1, L, C_eq, L_line) so every
    // row is in W, V or A; the 2-norm serves as the line-search merit.
    Eigen::VectorXd mass = Eigen::VectorXd::Ones(L.size());
    for (int k = 0; k < n; ++k) {
        if (g.buses[k].dgu) mass[L.i(k)] = g.buses[k].dgu->l_filter;
        mass[L.v(k)] = c.c_eq[k];
    }
    for (int l = 0; l < m; ++l) mass[L.line(l)] = g.lines[l].l_line;

    Eigen::VectorXd f(L.size()), fr(nu), xt(L.size()), ft(L.size());
    Eigen::MatrixXd Jx(L.size(), L.size()), Jp(L.size(), n), Jr(nu, nu);
    auto reduce = [&](const Eigen::VectorXd& full) {
        Eigen::VectorXd r(nu);
        for (int a = 0; a < nu; ++a) r[a] = full[idx[a]];
        return r;
    };
    plant_rhs(g, c, x, p_sp, f);
    double merit = mass.cwiseProduct(f).norm();
    double res = mass.cwiseProduct(f).lpNorm<Eigen::Infinity>();
    // The bilinear power term can make a converging Newton sequence raise the
    // merit for a step or two, so full steps are accepted under a watchdog and
    // the search falls back to backtracking from the best point otherwise.
    Eigen::VectorXd x_best = x;
    double merit_best = merit;
    int watchdog = 0;
    int it = 0;
    for (; it < 100 && res >= 1e-10; ++it) {
        plant_jacobian(g, c, x, p_sp, Jx, Jp);
        for (int a = 0; a < nu; ++a)
            for (int b = 0; b < nu; ++b) Jr(a, b) = mass[idx[a]] * Jx(idx[a], idx[b]);
        fr = reduce(mass.cwiseProduct(f));
        Eigen::FullPivLU<Eigen::MatrixXd> lu(Jr);
        Eigen::VectorXd dxr = lu.isInvertible() ? Eigen::VectorXd(lu.solve(-fr))
                                                : Eigen::VectorXd(Jr.completeOrthogonalDecomposition().solve(-fr));
        double s = 1.0, mt = merit;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, s *= 0.5) {
            xt = x;
            for (int a = 0; a < nu; ++a) xt[idx[a]] += s * dxr[a];
            plant_rhs(g, c, xt, p_sp, ft);
            mt = mass.cwiseProduct(ft).norm();
            if (!std::isfinite(mt)) continue;
            if (mt < merit || ls == 39) {
                accepted = true;
                break;
            }
            if (ls == 0 && watchdog < 3) {
                ++watchdog;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        bool stalled = (xt - x).lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, x.lpNorm<Eigen::Infinity>());
        x = xt;
        f = ft;
        merit = mt;
        if (merit < merit_best) {
            merit_best = merit;
            x_best = x;
            watchdog = 0;
        } else if (watchdog >= 3) {
            x = x_best;
            plant_rhs(g, c, x, p_sp, f);
            merit = merit_best;
            watchdog = 4;  // monotone from here on
        }
        res = mass.cwiseProduct(f).lpNorm<Eigen::Infinity>();
        if (stalled) break;
    }
    if (!(res < 1e-9))
        throw EquilibriumError("equilibrium Newton did not converge (residual " + std::to_string(res) + ")", res);
    return {MicrogridState::unpack(x, n, m), res, it};
}

ShiftedDgu shift_dgu(const DguParams& p, double v, double i_eq, double load_slope) {
    ShiftedDgu s;
    s.A << 0.0, -v, -i_eq,
        p.ki_pwr, p.r_damp - p.r_filter - p.kp_pwr * v, -1.0 - p.kp_pwr * i_eq,
        0.0, 1.0, -load_slope;
    s.b1 << 1.0, p.kp_pwr, 0.0;
    s.b2 << 0.0, 0.0, 1.0;
    s.c << 0.0, 0.0, 1.0;
    return s;
}

}  // namespace dcgrid
