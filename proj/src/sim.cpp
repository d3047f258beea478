#include "dcgrid/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <numeric>

namespace dcgrid {

ClosedLoopLayout closed_loop_layout(const Scenario& s) {
    ClosedLoopLayout l;
    l.n = s.bus_count();
    l.m = s.grid.line_count();
    l.plant = {l.n, l.m};
    return l;
}

ClosedLoop::ClosedLoop(const Scenario& s, double t) : s_(&s), lay_(closed_loop_layout(s)), cfg_(configure(s.grid, t)) {
    Topology ac = active_comm(s, t);
    lap_ = laplacian(ac);
    comp_ = components(ac, std::vector<bool>(lay_.n, true));
    masked_.assign(lay_.n, false);
    bypass_.assign(lay_.n, false);
    for (int k = 0; k < lay_.n; ++k)
        masked_[k] = s.controller.anti_windup && !cfg_.actuated[k] && lap_(k, k) == 0.0;
    for (int m : s.controller.bypass_pi) bypass_[m - 1] = true;
}

StageSignals ClosedLoop::signals(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const auto& c = s_->controller;
    const int n = lay_.n;
    StageSignals sg;
    sg.u2.resize(n);
    sg.u3.resize(n);
    sg.y3.resize(n);
    sg.u4.resize(n);
    sg.p_sp.resize(n);
    for (int k = 0; k < n; ++k) {
        sg.u2[k] = weighting(c.weighting, c.v_ref - x[lay_.plant.v(k)]);
        sg.u3[k] = masked_[k] ? 0.0 : x[lay_.x2(k)];
        sg.y3[k] = pi_output(c.pi, x[lay_.x3(k)], sg.u3[k]);
        sg.u4[k] = bypass_[k] ? x[lay_.x4(k)] : sg.y3[k];
        sg.p_sp[k] = x[lay_.x4(k)];
    }
    return sg;
}

void ClosedLoop::rhs(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> dx) const {
    const auto& c = s_->controller;
    const int n = lay_.n, P = lay_.p();
    auto sg = signals(x);
    plant_rhs(s_->grid, cfg_, x.head(P), sg.p_sp, dx.head(P));
    dda_rhs(c.dda, lap_, x.segment(lay_.x2(0), n), x.segment(lay_.z2(0), n), sg.u2, dx.segment(lay_.x2(0), n),
            dx.segment(lay_.z2(0), n));
    for (int k = 0; k < n; ++k) dx[lay_.x3(k)] = pi_rhs(c.pi, x[lay_.x3(k)], sg.u3[k]);
    dda_rhs(c.dda, lap_, x.segment(lay_.x4(0), n), x.segment(lay_.z4(0), n), sg.u4, dx.segment(lay_.x4(0), n),
            dx.segment(lay_.z4(0), n));
}

void ClosedLoop::jacobian(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::MatrixXd> J) const {
    const auto& c = s_->controller;
    const auto& d = c.dda;
    const int n = lay_.n, P = lay_.p();
    J.setZero();
    Eigen::MatrixXd Jp(P, n);
    Eigen::VectorXd p_sp = x.segment(lay_.x4(0), n);
    plant_jacobian(s_->grid, cfg_, x.head(P), p_sp, J.topLeftCorner(P, P), Jp);
    J.block(0, lay_.x4(0), P, n) = Jp;

    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    J.block(lay_.x2(0), lay_.x2(0), n, n) = -d.g * I - d.kp * lap_;
    J.block(lay_.x2(0), lay_.z2(0), n, n) = d.ki * lap_.transpose();
    J.block(lay_.z2(0), lay_.x2(0), n, n) = -d.ki * lap_;
    J.block(lay_.x4(0), lay_.x4(0), n, n) = -d.g * I - d.kp * lap_;
    J.block(lay_.x4(0), lay_.z4(0), n, n) = d.ki * lap_.transpose();
    J.block(lay_.z4(0), lay_.x4(0), n, n) = -d.ki * lap_;
    for (int k = 0; k < n; ++k) {
        // u2 = h(v_ref - v)
        double dh = weighting_derivative(c.weighting, c.v_ref - x[lay_.plant.v(k)]);
        J(lay_.x2(k), lay_.plant.v(k)) = -d.g * dh;
        double du3 = masked_[k] ? 0.0 : 1.0;
        J(lay_.x3(k), lay_.x3(k)) = -c.pi.tau;
        J(lay_.x3(k), lay_.x2(k)) = du3;
        if (bypass_[k]) {
            J(lay_.x4(k), lay_.x4(k)) += d.g;
        } else {
            J(lay_.x4(k), lay_.x3(k)) = d.g * c.pi.ki;
            J(lay_.x4(k), lay_.x2(k)) = d.g * c.pi.kp * du3;
        }
    }
}

int ClosedLoop::structural_kernel_dim() const {
    const int n = lay_.n;
    int dim = 0;
    for (int k = 0; k < n; ++k)
        if (!cfg_.actuated[k]) dim += 2;
    int ncomp = 0;
    for (int c : comp_) ncomp = std::max(ncomp, c + 1);
    dim += 2 * ncomp;
    if (s_->controller.pi.tau == 0.0) {
        std::vector<int> q(ncomp, 0);
        for (int k = 0; k < n; ++k) {
            if (!bypass_[k]) ++q[comp_[k]];
            if (bypass_[k] || masked_[k]) ++dim;
        }
        for (int v : q)
            if (v > 0) dim += v - 1;
    }
    return dim;
}

// ---------------------------------------------------------------- integrator

namespace {

class Stepper {
public:
    Stepper(const ClosedLoop& cl, const SolverOptions& so)
        : cl_(cl), so_(so), n_(cl.layout().size()), J_(n_, n_), f_(n_), g_(n_), y0_(n_) {}

    long newton = 0, jac = 0, splits = 0;

    void start(const Eigen::VectorXd& x) {
        cl_.rhs(x, f_);
        refresh(x);
    }

    // Advances x by h, splitting the step when Newton fails.
    bool step(Eigen::VectorXd& x, double h, int depth = 0) {
        Eigen::VectorXd y = x;
        if (try_step(x, h, y)) {
            x = y;
            fresh_ = false;
            return true;
        }
        if (depth >= 12) return false;
        ++splits;
        Eigen::VectorXd xm = x;
        cl_.rhs(xm, f_);
        if (!step(xm, 0.5 * h, depth + 1) || !step(xm, 0.5 * h, depth + 1)) return false;
        x = xm;
        return true;
    }

private:
    const ClosedLoop& cl_;
    const SolverOptions& so_;
    int n_;
    Eigen::MatrixXd J_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    double lu_coef_ = -1.0;
    bool fresh_ = false;
    Eigen::VectorXd f_, g_, y0_;

    void refresh(const Eigen::VectorXd& x) {
        cl_.jacobian(x, J_);
        ++jac;
        fresh_ = true;
        lu_coef_ = -1.0;
    }

    void factor(double ah) {
        if (ah == lu_coef_) return;
        lu_.compute(Eigen::MatrixXd::Identity(n_, n_) - ah * J_);
        lu_coef_ = ah;
    }

    // Solves y - ah f(y) = r, y holding the initial guess.
    bool solve(const Eigen::VectorXd& r, double ah, Eigen::VectorXd& y, const Eigen::VectorXd& x_start) {
        y0_ = y;
        for (int attempt = 0; attempt < 2; ++attempt) {
            factor(ah);
            double prev = kInf;
            for (int k = 0; k < 12; ++k) {
                cl_.rhs(y, g_);
                ++newton;
                g_ = y - ah * g_ - r;
                Eigen::VectorXd dy = lu_.solve(-g_);
                y += dy;
                double nrm = 0.0;
                for (int i = 0; i < n_; ++i) nrm = std::max(nrm, std::abs(dy[i]) / (1.0 + std::abs(y[i])));
                if (!std::isfinite(nrm)) break;
                if (nrm <= so_.tolerance) return true;
                if (k > 0 && nrm > 0.5 * prev) break;
                prev = nrm;
            }
            if (fresh_) return false;
            refresh(x_start);
            y = y0_;
        }
        return false;
    }

    bool try_step(const Eigen::VectorXd& x, double h, Eigen::VectorXd& y) {
        switch (so_.method) {
            case Integrator::backward_euler: {
                if (!solve(x, h, y, x)) return false;
                break;
            }
            case Integrator::trapezoidal: {
                Eigen::VectorXd r = x + 0.5 * h * f_;
                if (!solve(r, 0.5 * h, y, x)) return false;
                break;
            }
            case Integrator::trbdf2: {
                const double gam = 2.0 - std::sqrt(2.0), d = 0.5 * gam;
                Eigen::VectorXd r1 = x + d * h * f_;
                Eigen::VectorXd yg = x;
                if (!solve(r1, d * h, yg, x)) return false;
                const double den = gam * (2.0 - gam);
                Eigen::VectorXd r2 = yg / den - ((1.0 - gam) * (1.0 - gam) / den) * x;
                y = yg;
                if (!solve(r2, d * h, y, x)) return false;
                break;
            }
        }
        cl_.rhs(y, f_);
        return f_.allFinite();
    }
};

std::vector<double> boundaries(const Scenario& s, double t_end) {
    std::vector<double> b{0.0};
    for (double t : s.event_times())
        if (t < t_end) b.push_back(t);
    b.push_back(t_end);
    return b;
}

}  // namespace

Trajectory run(const Scenario& s, const RunOptions& opt) {
    s.validate();
    const double t_end = opt.t_end < 0 ? s.duration : std::min(opt.t_end, s.duration);
    auto bnd = boundaries(s, t_end);
    Trajectory tr;
    tr.layout = closed_loop_layout(s);
    tr.segment_start.assign(bnd.begin(), bnd.end() - 1);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(tr.layout.size());
    auto record = [&](double t, int seg) {
        tr.t.push_back(t);
        tr.segment.push_back(seg);
        tr.x.push_back(x);
    };
    if (opt.record) record(0.0, 0);

    for (int seg = 0; seg + 1 < static_cast<int>(bnd.size()); ++seg) {
        const double t0 = bnd[seg], t1 = bnd[seg + 1];
        ClosedLoop cl(s, t0);
        Stepper st(cl, s.solver);
        st.start(x);
        const long count = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / s.solver.step - 1e-9)));
        const double h = (t1 - t0) / count;
        const long every = s.solver.sample > 0 ? std::max(1L, std::lround(s.solver.sample / h)) : 1L;
        for (long i = 1; i <= count; ++i) {
            const double t = i == count ? t1 : t0 + i * h;
            if (!st.step(x, h)) throw IntegrationError("Newton failed to converge", t - h, x);
            if (opt.record && (i % every == 0 || i == count)) record(t, seg);
        }
        tr.steps += count;
        tr.newton_iterations += st.newton;
        tr.jacobian_updates += st.jac;
        tr.step_splits += st.splits;
    }
    if (!opt.record) record(t_end, static_cast<int>(bnd.size()) - 2);
    return tr;
}

// ---------------------------------------------------------------- equilibrium

namespace {

Eigen::VectorXd mass_scale(const ClosedLoop& cl) {
    const auto& l = cl.layout();
    const auto& g = cl.scenario().grid;
    Eigen::VectorXd m = Eigen::VectorXd::Ones(l.size());
    for (int k = 0; k < l.n; ++k) {
        if (g.buses[k].dgu) m[l.plant.i(k)] = g.buses[k].dgu->l_filter;
        m[l.plant.v(k)] = cl.config().c_eq[k];
    }
    for (int j = 0; j < l.m; ++j) m[l.plant.line(j)] = g.lines[j].l_line;
    return m;
}

}  // namespace

ClosedLoopEquilibrium refine_equilibrium(const ClosedLoop& cl, const Eigen::VectorXd& guess, double tol, int max_iter) {
    const int N = cl.layout().size();
    auto inert = plant_inert(cl.scenario().grid, cl.config());
    std::vector<int> idx;
    for (int i = 0; i < N; ++i)
        if (i >= cl.layout().p() || !inert[i]) idx.push_back(i);
    const int nu = static_cast<int>(idx.size());
    Eigen::VectorXd m = mass_scale(cl);

    Eigen::VectorXd x = guess, f(N), ft(N), xt(N);
    Eigen::MatrixXd J(N, N), Jr(nu, nu);
    auto resid = [&](const Eigen::VectorXd& y, Eigen::VectorXd& out) {
        cl.rhs(y, out);
        out = out.cwiseProduct(m);
        return out.lpNorm<Eigen::Infinity>();
    };
    double res = resid(x, f);
    int it = 0;
    for (; it < max_iter && res >= tol; ++it) {
        cl.jacobian(x, J);
        Eigen::VectorXd fr(nu);
        for (int a = 0; a < nu; ++a) {
            fr[a] = f[idx[a]];
            for (int b = 0; b < nu; ++b) Jr(a, b) = m[idx[a]] * J(idx[a], idx[b]);
        }
        // Row equilibration before the rank-revealing solve.
        Eigen::VectorXd rs(nu);
        for (int a = 0; a < nu; ++a) {
            double mx = Jr.row(a).lpNorm<Eigen::Infinity>();
            rs[a] = mx > 0 ? 1.0 / mx : 1.0;
        }
        Eigen::MatrixXd Js = rs.asDiagonal() * Jr;
        Eigen::VectorXd dx = Js.completeOrthogonalDecomposition().solve(-rs.cwiseProduct(fr));
        double step = 1.0;
        bool ok = false;
        for (int ls = 0; ls < 30; ++ls, step *= 0.5) {
            xt = x;
            for (int a = 0; a < nu; ++a) xt[idx[a]] += step * dx[a];
            double rt = resid(xt, ft);
            if (std::isfinite(rt) && rt < res) {
                ok = true;
                x = xt;
                f = ft;
                res = rt;
                break;
            }
        }
        if (!ok) break;
    }
    return {x, res, it};
}

// ---------------------------------------------------------------- linearization

namespace {

// Diagonal similarity balancing with powers of two.
Eigen::MatrixXd balance(Eigen::MatrixXd A) {
    const int n = static_cast<int>(A.rows());
    bool done = false;
    for (int sweep = 0; sweep < 100 && !done; ++sweep) {
        done = true;
        for (int i = 0; i < n; ++i) {
            double c = 0.0, r = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(A(j, i));
                r += std::abs(A(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double f = 1.0, s = c + r;
            while (c < r / 2.0) {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while (c >= r * 2.0) {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if ((c + r) < 0.95 * s) {
                done = false;
                A.row(i) /= f;
                A.col(i) *= f;
            }
        }
    }
    return A;
}

}  // namespace

Linearization linearize_at(const ClosedLoop& cl, const Eigen::VectorXd& guess) {
    Linearization L;
    auto eq = refine_equilibrium(cl, guess);
    L.x_eq = eq.x;
    L.residual = eq.residual;
    const int N = cl.layout().size();
    L.A.resize(N, N);
    cl.jacobian(L.x_eq, L.A);
    Eigen::MatrixXd B = balance(L.A);
    Eigen::EigenSolver<Eigen::MatrixXd> es(B, false);
    L.eigenvalues = es.eigenvalues();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
    const auto& sv = svd.singularValues();
    // usual rank tolerance; the spectrum spans too many decades for a fixed ratio
    const double tol = N * std::numeric_limits<double>::epsilon() * sv[0];
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] <= tol) ++L.numeric_nullity;

    L.kernel_dim = cl.structural_kernel_dim();
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(L.eigenvalues[a]) < std::abs(L.eigenvalues[b]); });
    L.max_real = -kInf;
    for (int r = 0; r < N; ++r) {
        auto lam = L.eigenvalues[order[r]];
        if (r < L.kernel_dim) {
            L.kernel.push_back(lam);
            L.max_kernel_abs = std::max(L.max_kernel_abs, std::abs(lam));
        } else {
            L.modes.push_back(lam);
            L.max_real = std::max(L.max_real, lam.real());
        }
    }
    L.stable = L.max_real < 0.0;
    return L;
}

Linearization linearize(const Scenario& s, double t) {
    auto bnd = boundaries(s, s.duration);
    double end = s.duration;
    for (size_t i = 0; i + 1 < bnd.size(); ++i)
        if (t >= bnd[i] && t < bnd[i + 1]) end = bnd[i + 1];
    RunOptions ro;
    ro.t_end = end;
    ro.record = false;
    auto tr = run(s, ro);
    ClosedLoop cl(s, t);
    return linearize_at(cl, tr.x.back());
}

// ---------------------------------------------------------------- metrics

ObjectiveMetrics objective_metrics(const Scenario& s, const Trajectory& tr) {
    ObjectiveMetrics om;
    const auto& l = tr.layout;
    std::map<int, std::vector<bool>> conn;
    for (int seg = 0; seg < static_cast<int>(tr.segment_start.size()); ++seg)
        conn[seg] = connected_buses(s, tr.segment_start[seg]);
    for (int i = 0; i < tr.samples(); ++i) {
        const auto& c = conn[tr.segment[i]];
        const auto& x = tr.x[i];
        double sum = 0.0, lo = kInf, hi = -kInf, sabs = 0.0, ssp = 0.0;
        int cnt = 0;
        for (int k = 0; k < l.n; ++k) {
            if (!c[k]) continue;
            ++cnt;
            sum += weighting(s.controller.weighting, s.controller.v_ref - x[l.plant.v(k)]);
            double p = x[l.x4(k)];
            lo = std::min(lo, p);
            hi = std::max(hi, p);
            sabs += std::abs(p);
            ssp += p;
        }
        om.t.push_back(tr.t[i]);
        om.avg_error.push_back(cnt ? sum / cnt : 0.0);
        om.spread.push_back(cnt ? hi - lo : 0.0);
        om.mean_abs_sp.push_back(cnt ? sabs / cnt : 0.0);
        om.mean_sp.push_back(cnt ? ssp / cnt : 0.0);
    }
    return om;
}

std::vector<WindowSummary> window_summaries(const Scenario& s, const Trajectory& tr) {
    auto om = objective_metrics(s, tr);
    const auto& l = tr.layout;
    std::vector<WindowSummary> out;
    const double t_last = tr.t.empty() ? 0.0 : tr.t.back();
    for (int seg = 0; seg < static_cast<int>(tr.segment_start.size()); ++seg) {
        WindowSummary w;
        w.t0 = tr.segment_start[seg];
        w.t1 = tr.segment_end(seg, t_last);
        int end = -1, back = -1;
        for (int i = 0; i < tr.samples(); ++i) {
            if (tr.segment[i] != seg) continue;
            end = i;
            if (tr.t[i] <= w.t1 - 0.5 + 1e-9) back = i;
        }
        if (end < 0) continue;
        if (back < 0) back = end;
        w.avg_error = om.avg_error[end];
        w.predicted = predict_steady_state_error(s.controller.pi, om.mean_sp[end]);
        w.drift = std::abs(om.avg_error[end] - om.avg_error[back]);
        w.spread = om.spread[end];
        w.mean_abs_sp = om.mean_abs_sp[end];
        auto conn = connected_buses(s, w.t0);
        double dv = 0.0;
        for (int k = 0; k < l.n; ++k)
            if (conn[k]) dv = std::max(dv, std::abs(tr.x[end][l.plant.v(k)] - tr.x[back][l.plant.v(k)]));
        double dsp = std::abs(om.mean_sp[end] - om.mean_sp[back]);
        w.quasi_steady = back != end && dv <= 0.01 && dsp <= 1e-3 * std::max(1.0, std::abs(om.mean_sp[end]));
        out.push_back(w);
    }
    return out;
}

}  // namespace dcgrid
