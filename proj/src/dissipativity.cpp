#include "dcgrid/dissipativity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dcgrid/lmi.hpp"

namespace dcgrid {

double QuadraticSupplyRate::l2_gain() const {
    if (kind != Kind::l2) throw std::logic_error("rate is not an L2-gain rate");
    return std::sqrt(nu);
}

bool QuadraticSupplyRate::consistent() const {
    switch (kind) {
        case Kind::ifofp: return std::abs(cross - 0.5 * (1.0 + nu * rho)) < 1e-12;
        case Kind::ifp: return rho == 0.0 && cross == 0.5;
        case Kind::ofp: return nu == 0.0 && cross == 0.5;
        case Kind::l2: return rho == 1.0 && cross == 0.0 && nu >= 0.0;
        default: return true;
    }
}

double QuadraticSupplyRate::value(const Eigen::VectorXd& u, const Eigen::VectorXd& y) const {
    if (u.size() != y.size()) throw std::invalid_argument("supply rate: dim(u) != dim(y)");
    return 2.0 * cross * u.dot(y) - effective_nu() * u.squaredNorm() - rho * y.squaredNorm();
}

double supply_value(const QuadraticSupplyRate& r, const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
    return r.value(u, y);
}

Sector sector_from_bounds(double c_lo, double c_hi) {
    if (!(c_hi > 0.0) || !std::isfinite(c_hi)) throw std::invalid_argument("sector upper slope must be finite and positive");
    if (c_lo > c_hi) throw std::invalid_argument("sector bounds out of order");
    return {c_lo, c_hi, QuadraticSupplyRate::ifofp(c_lo, 1.0 / c_hi)};
}

namespace {

// Golden-section search for the minimum of f on [a, b].
double golden_min(const std::function<double(double)>& f, double a, double b) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 80 && b - a > 1e-13 * std::max(1.0, std::abs(a)); ++it) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - g * (b - a); f1 = f(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + g * (b - a); f2 = f(x2);
        }
    }
    return std::min({f1, f2, f(a), f(b)});
}

}  // namespace

Sector sector_of_static_map(const std::function<double(double)>& h, std::pair<double, double> domain,
                            const std::function<double(double)>& derivative) {
    auto [lo, hi] = domain;
    if (!(hi > lo)) throw std::invalid_argument("sector domain must be a nonempty interval");
    std::function<double(double)> dh = derivative;
    if (!dh) {
        dh = [&h](double u) {
            double s = 1e-6 * std::max(1.0, std::abs(u));
            return (h(u + s) - h(u - s)) / (2.0 * s);
        };
    }
    const int n = 100000;
    double dx = (hi - lo) / n;
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    int imn = 0, imx = 0;
    for (int i = 0; i <= n; ++i) {
        double u = i == n ? hi : lo + i * dx;
        double s = dh(u);
        if (!std::isfinite(s)) throw std::invalid_argument("unbounded slope in sector domain");
        if (s < mn) { mn = s; imn = i; }
        if (s > mx) { mx = s; imx = i; }
    }
    auto bracket = [&](int i) {
        return std::pair{std::max(lo, lo + (i - 1) * dx), std::min(hi, lo + (i + 1) * dx)};
    };
    auto [a0, b0] = bracket(imn);
    mn = std::min(mn, golden_min(dh, a0, b0));
    auto [a1, b1] = bracket(imx);
    mx = std::max(mx, -golden_min([&](double u) { return -dh(u); }, a1, b1));
    return sector_from_bounds(mn, mx);
}

QuadraticSupplyRate l2_gain_of_symmetric_sector(double c) {
    if (!(c > 0.0)) throw std::invalid_argument("symmetric sector needs c > 0");
    return QuadraticSupplyRate::l2(c);
}

int InterconnectionSpec::ports() const {
    if (port_dims.empty()) return static_cast<int>(rates.size());
    int m = 0;
    for (int p : port_dims) m += p;
    return m;
}

void InterconnectionSpec::validate() const {
    if (rates.empty()) throw std::invalid_argument("interconnection needs at least one subsystem");
    if (!port_dims.empty() && port_dims.size() != rates.size())
        throw std::invalid_argument("port_dims must match the subsystem count");
    int m = ports();
    if (H.rows() != m || H.cols() != m) throw std::invalid_argument("H must be square with one row per port");
    for (int j : free)
        if (j < 0 || j >= static_cast<int>(rates.size())) throw std::invalid_argument("free index out of range");
}

namespace {

std::vector<int> port_offsets(const InterconnectionSpec& s) {
    std::vector<int> off(s.rates.size() + 1, 0);
    for (size_t i = 0; i < s.rates.size(); ++i)
        off[i + 1] = off[i] + (s.port_dims.empty() ? 1 : s.port_dims[i]);
    return off;
}

// Contribution of subsystem i to Q with d_i = 1 and the given coefficients.
Eigen::MatrixXd q_term(const InterconnectionSpec& s, const std::vector<int>& off, int i, double nu, double rho,
                       double cross) {
    const int m = s.ports();
    const int a = off[i], k = off[i + 1] - off[i];
    Eigen::MatrixXd Hi = s.H.middleRows(a, k);  // rows of H feeding subsystem i
    Eigen::MatrixXd Ei = Eigen::MatrixXd::Zero(k, m);
    Ei.middleCols(a, k).setIdentity();
    Eigen::MatrixXd Q = -nu * Hi.transpose() * Hi + cross * (Hi.transpose() * Ei + Ei.transpose() * Hi) -
                        rho * Ei.transpose() * Ei;
    return 0.5 * (Q + Q.transpose());
}

Eigen::MatrixXd q_term(const InterconnectionSpec& s, const std::vector<int>& off, int i) {
    const auto& r = s.rates[i];
    return q_term(s, off, i, r.effective_nu(), r.rho, r.cross);
}

double max_eig(const Eigen::MatrixXd& Q) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double threshold(double margin, const Eigen::MatrixXd& Q) {
    return margin * std::max(1.0, Q.norm());
}

}  // namespace

Eigen::MatrixXd interconnection_q(const InterconnectionSpec& s, const Eigen::VectorXd& d) {
    s.validate();
    auto off = port_offsets(s);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(s.ports(), s.ports());
    for (size_t i = 0; i < s.rates.size(); ++i) Q += d[i] * q_term(s, off, static_cast<int>(i));
    return Q;
}

StabilityCertificate verify_interconnection(const InterconnectionSpec& s, double margin) {
    s.validate();
    const int n = static_cast<int>(s.rates.size());
    const int m = s.ports();
    auto off = port_offsets(s);
    std::vector<Eigen::MatrixXd> Qi;
    for (int i = 0; i < n; ++i) Qi.push_back(q_term(s, off, i));

    // Variables: d_1..d_{n-1}, t. d_n = n - sum; minimise t with t I - Q(d) > 0.
    LmiProblem p;
    p.nvar = n;
    p.c = Eigen::VectorXd::Zero(n);
    p.c[n - 1] = 1.0;
    LmiBlock b;
    b.F0 = -static_cast<double>(n) * Qi[n - 1];
    for (int i = 0; i < n - 1; ++i) b.Fk.push_back(-(Qi[i] - Qi[n - 1]));
    b.Fk.push_back(Eigen::MatrixXd::Identity(m, m));
    p.add_block(b);
    const double lb = n * 1e-12;
    for (int i = 0; i < n - 1; ++i) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
        a[i] = 1.0;
        p.add_linear(a, -lb);
    }
    if (n > 1) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
        a.head(n - 1).setConstant(-1.0);
        p.add_linear(a, n - lb);
    }

    Eigen::VectorXd y0 = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd d0 = Eigen::VectorXd::Ones(n);
    y0[n - 1] = max_eig(interconnection_q(s, d0)) + 1.0;
    auto r = barrier_minimize(p, y0);

    StabilityCertificate c;
    c.d.resize(n);
    c.d.head(n - 1) = r.y.head(n - 1);
    c.d[n - 1] = n - r.y.head(n - 1).sum();
    c.Q = interconnection_q(s, c.d);
    c.max_eigenvalue = max_eig(c.Q);
    c.feasible = c.max_eigenvalue <= -threshold(margin, c.Q) && (c.d.array() > 0.0).all();
    return c;
}

namespace {

struct FixedRhoSolve {
    bool feasible = false;
    Eigen::VectorXd d;
    std::vector<double> nu;
};

// Minimise sum nu_j over the free set for a common fixed rho, with d_j = 1
// on free slots and d_i in [1e-6, 1e6] elsewhere.
FixedRhoSolve solve_fixed_rho(const InterconnectionSpec& s, const std::vector<int>& off, double rho,
                              const IndexSearchOptions& opt) {
    const int n = static_cast<int>(s.rates.size());
    const int m = s.ports();
    std::vector<bool> is_free(n, false);
    for (int j : s.free) is_free[j] = true;
    std::vector<int> dvar, fvar;
    for (int i = 0; i < n; ++i) (is_free[i] ? fvar : dvar).push_back(i);
    const int nd = static_cast<int>(dvar.size()), nf = static_cast<int>(fvar.size());
    const int nv = nd + nf;

    LmiProblem p;
    p.nvar = nv;
    p.c = Eigen::VectorXd::Zero(nv);
    p.c.tail(nf).setOnes();
    // -Q(d, nu) - margin I > 0
    LmiBlock b;
    b.F0 = -opt.margin * Eigen::MatrixXd::Identity(m, m);
    for (int j : fvar) b.F0 -= q_term(s, off, j, 0.0, rho, 0.5);
    for (int i : dvar) b.Fk.push_back(-q_term(s, off, i));
    for (int j : fvar) b.Fk.push_back(-q_term(s, off, j, 1.0, 0.0, 0.5 * rho));
    p.add_block(b);
    for (int k = 0; k < nd; ++k) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(nv);
        a[k] = 1.0;
        p.add_linear(a, -1e-6);
        p.add_linear(-a, 1e6);
    }
    for (int k = 0; k < nf; ++k) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(nv);
        a[nd + k] = 1.0;
        p.add_linear(a, -opt.nu_floor);
        p.add_linear(-a, -opt.nu_floor);
    }

    Eigen::VectorXd y0(nv);
    y0.head(nd).setOnes();
    y0.tail(nf).setZero();
    auto ph1 = find_feasible(p, y0, 1e-9);
    FixedRhoSolve out;
    if (!(ph1.shift < 0.0)) return out;
    auto r = barrier_minimize(p, ph1.y);
    out.feasible = p.min_eigenvalue(r.y) > 0.0;
    out.d = Eigen::VectorXd::Ones(n);
    for (int k = 0; k < nd; ++k) out.d[dvar[k]] = r.y[k];
    for (int k = 0; k < nf; ++k) out.nu.push_back(r.y[nd + k]);
    return out;
}

}  // namespace

StabilityCertificate optimize_restrictive_indices(const InterconnectionSpec& s, const IndexSearchOptions& opt) {
    s.validate();
    if (s.free.empty()) return verify_interconnection(s, opt.margin);
    auto off = port_offsets(s);

    std::vector<double> grid{0.0};
    for (int k = 0; k < opt.grid; ++k)
        grid.push_back(opt.rho_lo * std::pow(opt.rho_hi / opt.rho_lo, k / double(opt.grid - 1)));

    double best_obj = std::numeric_limits<double>::infinity();
    double best_rho = 0.0;
    FixedRhoSolve best;
    auto consider = [&](double rho) {
        auto r = solve_fixed_rho(s, off, rho, opt);
        if (!r.feasible) return;
        double obj = 0.0;
        for (double nu : r.nu) obj += nu + rho;
        if (obj < best_obj) {
            best_obj = obj;
            best_rho = rho;
            best = r;
        }
    };
    for (double rho : grid) consider(rho);

    double lo = opt.rho_lo, hi = opt.rho_hi;
    for (int pass = 0; pass < opt.refinements && std::isfinite(best_obj); ++pass) {
        if (best_rho <= 0.0) break;
        double ratio = std::pow(opt.rho_hi / opt.rho_lo, 1.0 / (opt.grid - 1));
        if (pass > 0) ratio = std::pow(hi / lo, 1.0 / 16.0);
        lo = std::max(opt.rho_lo, best_rho / ratio);
        hi = std::min(opt.rho_hi, best_rho * ratio);
        for (int k = 0; k <= 16; ++k) consider(lo * std::pow(hi / lo, k / 16.0));
    }

    StabilityCertificate c;
    if (!std::isfinite(best_obj)) {
        c.feasible = false;
        c.note = "no feasible indices on the search grid";
        c.d = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.rates.size()));
        c.Q = interconnection_q(s, c.d);
        c.max_eigenvalue = max_eig(c.Q);
        return c;
    }
    InterconnectionSpec solved = s;
    for (size_t k = 0; k < s.free.size(); ++k) {
        solved.rates[s.free[k]] = QuadraticSupplyRate::ifofp(best.nu[k], best_rho);
        c.solved_indices.emplace_back(best.nu[k], best_rho);
    }
    c.d = best.d;
    c.Q = interconnection_q(solved, c.d);
    c.max_eigenvalue = max_eig(c.Q);
    c.feasible = c.max_eigenvalue < 0.0;
    return c;
}

std::vector<std::pair<int, int>> detect_ifp_ofp_cascade(const InterconnectionSpec& s) {
    s.validate();
    std::vector<std::pair<int, int>> out;
    if (!s.port_dims.empty() && s.ports() != static_cast<int>(s.rates.size())) return out;  // scalar ports only
    const int n = static_cast<int>(s.rates.size());
    for (int i = 0; i < n; ++i) {
        if (s.rates[i].rho > 0.0) continue;
        for (int j = 0; j < n; ++j) {
            if (j == i || s.rates[j].effective_nu() > 0.0) continue;
            if (s.H(j, i) == 0.0 || s.H(i, i) != 0.0 || s.H(i, j) != 0.0) continue;
            bool exclusive = true;
            for (int k = 0; k < n; ++k)
                if (k != j && s.H(k, i) != 0.0) exclusive = false;
            if (exclusive) out.emplace_back(i, j);
        }
    }
    return out;
}

}  // namespace dcgrid
