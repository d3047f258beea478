#include "dcgrid/passivity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "dcgrid/lmi.hpp"
#include "dcgrid/parallel.hpp"

namespace dcgrid {

void OperatingBox::validate() const {
    if (!(v.lo > 0.0 && v.hi >= v.lo)) throw std::invalid_argument("voltage range must be positive and nonempty");
    if (!(i_eq.hi >= i_eq.lo)) throw std::invalid_argument("current range must be nonempty");
}

double load_passivity_index(const ZipLoad& load, Interval dom) {
    if (!(dom.lo >= 0.0 && dom.hi > dom.lo)) throw std::invalid_argument("load domain must lie in v >= 0");
    const double vc = load.v_crit;
    double best = kInf;
    if (dom.lo < vc) best = std::min(best, load.z_crit_inv());
    if (dom.hi >= vc) {
        // slope Z - P/v^2 is monotone in v on the ZIP branch
        double a = std::max(dom.lo, vc);
        best = std::min(best, load.z_inv - load.p_const / (a * a));
        double at_hi = std::isfinite(dom.hi) ? load.z_inv - load.p_const / (dom.hi * dom.hi) : load.z_inv;
        best = std::min(best, at_hi);
    }
    return best;
}

double line_passivity_index(const LineSpec& line) { return line.r_line; }

Eigen::Matrix<double, 5, 5> dgu_lmi_matrix(const DguParams& p, const DguIndices& idx, double v, double i_eq,
                                           double load_slope, double c_eq) {
    auto s = shift_dgu(p, v, i_eq, load_slope);
    Eigen::Matrix3d W = idx.P;
    if (idx.form == StorageForm::mass_weighted) {
        Eigen::Vector3d minv(1.0, 1.0 / p.l_filter, 1.0 / c_eq);
        W = idx.P * minv.asDiagonal();
    }
    Eigen::Matrix<double, 5, 5> M = Eigen::Matrix<double, 5, 5>::Zero();
    M.topLeftCorner<3, 3>() = W * s.A + s.A.transpose() * W.transpose() + idx.rho * s.c * s.c.transpose();
    Eigen::Vector3d xp = W * s.b1 - 0.5 * (1.0 + idx.nu1 * idx.rho) * s.c;
    Eigen::Vector3d xz = W * s.b2 - 0.5 * s.c;
    M.block<3, 1>(0, 3) = xp;
    M.block<1, 3>(3, 0) = xp.transpose();
    M.block<3, 1>(0, 4) = xz;
    M.block<1, 3>(4, 0) = xz.transpose();
    M(3, 3) = idx.nu1;
    M(4, 4) = idx.nu2;
    return M;
}

namespace {

bool positive_definite(const Eigen::Matrix3d& P) {
    if ((P - P.transpose()).norm() > 1e-12 * std::max(1.0, P.norm())) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(P, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0] > 0.0;
}

double max_eig5(const Eigen::Matrix<double, 5, 5>& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[4];
}

std::vector<double> slopes_of(double lo, std::optional<double> hi) {
    if (hi && *hi != lo) return {lo, *hi};
    return {lo};
}

}  // namespace

double check_dgu_lmi(const DguParams& p, const DguIndices& idx, const OperatingBox& box, double load_slope,
                     std::optional<double> load_slope_hi) {
    return check_dgu_lmi_grid(p, idx, box, load_slope, 2, load_slope_hi);
}

double check_dgu_lmi_grid(const DguParams& p, const DguIndices& idx, const OperatingBox& box, double load_slope,
                          int n, std::optional<double> load_slope_hi) {
    box.validate();
    if (!positive_definite(idx.P)) return kInf;
    double worst = -kInf;
    for (double c : slopes_of(load_slope, load_slope_hi))
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                double v = box.v.lo + (box.v.hi - box.v.lo) * a / (n - 1);
                double q = box.i_eq.lo + (box.i_eq.hi - box.i_eq.lo) * b / (n - 1);
                worst = std::max(worst, max_eig5(dgu_lmi_matrix(p, idx, v, q, c, p.c_bus)));
            }
    return worst;
}

namespace {

// Symmetric basis for the six free entries of P.
std::array<Eigen::Matrix3d, 6> sym_basis() {
    std::array<Eigen::Matrix3d, 6> E;
    const int ij[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
    for (int k = 0; k < 6; ++k) {
        E[k].setZero();
        E[k](ij[k][0], ij[k][1]) = E[k](ij[k][1], ij[k][0]) = 1.0;
    }
    return E;
}

Eigen::Matrix3d p_from(const Eigen::VectorXd& y) {
    auto E = sym_basis();
    Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
    for (int k = 0; k < 6; ++k) P += y[k] * E[k];
    return P;
}

Eigen::Matrix3d p_start(const DguParams& p, StorageForm form) {
    Eigen::Vector3d d(1.0, 1e-3, 0.5);
    if (form == StorageForm::mass_weighted) d = d.cwiseProduct(Eigen::Vector3d(1.0, p.l_filter, p.c_bus));
    return d.asDiagonal();
}

// Variables y = (6 entries of P[, nu1, nu2]); the block matrix must satisfy
// -M - margin I > 0 at each vertex. Blocks after the vertex blocks are
// bounds and are never shifted in phase one.
struct DguLmi {
    LmiProblem prob;
    std::vector<bool> shift_mask;
};

DguLmi build_dgu_lmi(const DguParams& p, const OperatingBox& box, double load_slope, double rho,
                     std::optional<std::pair<double, double>> fixed_nu, const DguSearchOptions& opt) {
    const bool free_nu = !fixed_nu;
    const int nv = free_nu ? 8 : 6;
    DguLmi out;
    auto& P = out.prob;
    P.nvar = nv;
    P.c = Eigen::VectorXd::Zero(nv);
    if (free_nu) P.c[6] = P.c[7] = -1.0;
    auto E = sym_basis();
    auto mat = [&](const Eigen::Matrix3d& Pm, double nu1, double nu2, double v, double q, double c) {
        DguIndices idx{nu1, nu2, rho, Pm, opt.form};
        return Eigen::MatrixXd(dgu_lmi_matrix(p, idx, v, q, c, p.c_bus));
    };
    for (double c : slopes_of(load_slope, opt.load_slope_hi))
        for (double v : {box.v.lo, box.v.hi})
            for (double q : {box.i_eq.lo, box.i_eq.hi}) {
                double n1 = free_nu ? 0.0 : fixed_nu->first, n2 = free_nu ? 0.0 : fixed_nu->second;
                Eigen::MatrixXd M0 = mat(Eigen::Matrix3d::Zero(), n1, n2, v, q, c);
                LmiBlock b;
                b.F0 = -M0 - opt.margin * Eigen::MatrixXd::Identity(5, 5);
                for (int k = 0; k < 6; ++k) b.Fk.push_back(-(mat(E[k], n1, n2, v, q, c) - M0));
                if (free_nu) {
                    b.Fk.push_back(-(mat(Eigen::Matrix3d::Zero(), 1.0, 0.0, v, q, c) - M0));
                    b.Fk.push_back(-(mat(Eigen::Matrix3d::Zero(), 0.0, 1.0, v, q, c) - M0));
                }
                P.add_block(b);
                out.shift_mask.push_back(true);
            }
    {
        LmiBlock b;
        b.F0 = Eigen::MatrixXd::Zero(3, 3);
        for (int k = 0; k < 6; ++k) b.Fk.push_back(E[k]);
        for (int k = 6; k < nv; ++k) b.Fk.push_back(Eigen::MatrixXd::Zero(3, 3));
        P.add_block(b);
        out.shift_mask.push_back(false);
    }
    // trace bound, scaled by the storage units so that both forms see the same box
    Eigen::Vector3d unit = p_start(p, opt.form).diagonal();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(nv);
    for (int k = 0; k < 3; ++k) a[k] = -1.0 / unit[k];
    P.add_linear(a, opt.trace_bound);
    out.shift_mask.push_back(false);
    if (free_nu) {
        Eigen::VectorXd b1 = Eigen::VectorXd::Zero(nv), b2 = Eigen::VectorXd::Zero(nv);
        b1[6] = 1.0;
        b2[7] = 1.0;
        P.add_linear(b1, -opt.nu_floor);
        P.add_linear(b2, -opt.nu2_lower);
        out.shift_mask.push_back(false);
        out.shift_mask.push_back(false);
    }
    return out;
}

Eigen::VectorXd start_point(const DguParams& p, const DguSearchOptions& opt, bool free_nu) {
    Eigen::Matrix3d P0 = p_start(p, opt.form);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(free_nu ? 8 : 6);
    y[0] = P0(0, 0);
    y[1] = P0(1, 1);
    y[2] = P0(2, 2);
    if (free_nu) {
        y[6] = std::max(opt.nu_floor + 1.0, -1.0);
        y[7] = opt.nu2_lower > -1.0 ? 0.5 * opt.nu2_lower : -1.0;
        if (opt.nu2_lower >= 0.0) y[7] = opt.nu2_lower + 1.0;
    }
    return y;
}

struct RhoSolve {
    bool feasible = false;
    DguIndices idx;
};

RhoSolve solve_at_rho(const DguParams& p, const OperatingBox& box, double load_slope, double rho,
                      const DguSearchOptions& opt) {
    auto lmi = build_dgu_lmi(p, box, load_slope, rho, std::nullopt, opt);
    auto y0 = start_point(p, opt, true);
    auto ph1 = find_feasible(lmi.prob, y0, 1e-9, {}, lmi.shift_mask);
    RhoSolve r;
    if (!(ph1.shift < 0.0)) return r;
    auto res = barrier_minimize(lmi.prob, ph1.y);
    r.idx = {res.y[6], res.y[7], rho, p_from(res.y), opt.form};
    r.feasible = lmi.prob.min_eigenvalue(res.y) > 0.0;
    return r;
}

}  // namespace

DguIndices dgu_passivity_indices(const DguParams& p, const OperatingBox& box, double load_slope,
                                 const DguSearchOptions& opt) {
    box.validate();
    double best = -kInf;
    DguIndices best_idx;
    auto sweep = [&](const std::vector<double>& rhos) {
        auto rs = parallel_map(static_cast<int>(rhos.size()),
                               [&](int k) { return solve_at_rho(p, box, load_slope, rhos[k], opt); });
        for (const auto& r : rs) {
            if (!r.feasible) continue;
            double obj = r.idx.nu1 + r.idx.nu2 + r.idx.rho;
            if (obj > best) {
                best = obj;
                best_idx = r.idx;
            }
        }
    };
    const double step = std::pow(opt.rho_hi / opt.rho_lo, 1.0 / (opt.grid - 1));
    std::vector<double> rhos;
    for (int k = 0; k < opt.grid; ++k) rhos.push_back(opt.rho_lo * std::pow(step, k));
    sweep(rhos);
    double width = step;
    for (int pass = 0; pass < opt.refinements && std::isfinite(best); ++pass) {
        double centre = best_idx.rho;
        double lo = std::max(opt.rho_lo, centre / width), hi = std::min(opt.rho_hi, centre * width);
        rhos.clear();
        for (int k = 0; k <= 8; ++k) rhos.push_back(lo * std::pow(hi / lo, k / 8.0));
        sweep(rhos);
        width = std::pow(hi / lo, 1.0 / 8.0);
    }
    if (!std::isfinite(best))
        throw DguInfeasible("no DGU indices certify the box; consider more regulator damping or a smaller box");
    double grid_margin = check_dgu_lmi_grid(p, best_idx, box, load_slope, 9, opt.load_slope_hi);
    if (!(grid_margin < 0.0)) {
        std::ostringstream os;
        os << "DGU indices failed grid re-verification (margin " << grid_margin << ")";
        throw DguInfeasible(os.str());
    }
    return best_idx;
}

DguPointResult certify_dgu_point(const DguParams& p, const OperatingBox& box, double load_slope, double nu1,
                                 double nu2, double rho, const DguSearchOptions& opt) {
    box.validate();
    DguSearchOptions o = opt;
    o.margin = 0.0;
    auto lmi = build_dgu_lmi(p, box, load_slope, rho, std::pair{nu1, nu2}, o);
    auto y0 = start_point(p, o, false);
    // No early exit: drive the shift to its optimum to report the best margin.
    auto ph1 = find_feasible(lmi.prob, y0, 1e6, {}, lmi.shift_mask);
    DguPointResult r;
    r.idx = {nu1, nu2, rho, p_from(ph1.y), o.form};
    r.margin = check_dgu_lmi(p, r.idx, box, load_slope, o.load_slope_hi);
    r.feasible = r.margin < 0.0;
    return r;
}

MicrogridIndices microgrid_supply(const std::vector<DguIndices>& dgus, const std::vector<double>& rho_loads,
                                  const std::vector<double>& rho_lines) {
    MicrogridIndices m;
    for (const auto& d : dgus) {
        m.nu1 = std::min(m.nu1, d.nu1);
        m.nu2 = std::min(m.nu2, d.nu2);
        m.rho_dgu = std::min(m.rho_dgu, d.rho);
    }
    for (double r : rho_loads) m.rho_load = std::min(m.rho_load, r);
    for (double r : rho_lines) m.rho_line = std::min(m.rho_line, r);
    if (std::isfinite(m.nu2) && std::isfinite(m.rho_line) && m.nu2 + m.rho_line < 0.0) {
        std::ostringstream os;
        os << "line/DGU coupling violated: nu2 + rho_line = " << m.nu2 << " + " << m.rho_line << " < 0";
        throw SupplyConditionError(os.str());
    }
    if (std::isfinite(m.nu1) && std::isfinite(m.rho_dgu)) m.rate = QuadraticSupplyRate::ifofp(m.nu1, m.rho_dgu);
    return m;
}

Certificate actuation_independent_certificate(const MicrogridIndices& m, double nu_load) {
    Certificate c;
    auto fail = [&](const std::string& s) { c.failures.push_back(s); };
    if (std::isfinite(m.nu2) && std::isfinite(m.rho_line) && !(m.nu2 + m.rho_line >= 0.0))
        fail("nu2 + rho_line >= 0 violated");
    if (std::isfinite(m.rho_load) && !(m.rho_load > 0.0 && m.rho_load < 1.0)) fail("0 < rho_load < 1 violated");
    if (!(m.nu1 < 0.0)) fail("nu1 < 0 violated");
    if (std::isfinite(m.rho_load) && m.rho_load > 0.0) {
        double r = std::sqrt(nu_load / m.rho_load);
        bool lower_ok = -r >= m.nu1;
        bool upper_ok = m.rho_dgu <= 0.0 || r <= 1.0 / m.rho_dgu;
        if (!(lower_ok && upper_ok)) fail("load sector not contained in the DGU sector");
    }
    c.issued = c.failures.empty();
    if (c.issued) c.rate = QuadraticSupplyRate::ifofp(m.nu1, m.rho_dgu);
    return c;
}

}  // namespace dcgrid
