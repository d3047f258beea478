#include "dcgrid/lmi.hpp"

#include <cmath>
#include <stdexcept>

namespace dcgrid {

Eigen::MatrixXd LmiBlock::eval(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd M = F0;
    for (size_t k = 0; k < Fk.size(); ++k)
        if (y[k] != 0.0) M += y[k] * Fk[k];
    return M;
}

void LmiProblem::add_block(LmiBlock b) {
    if (static_cast<int>(b.Fk.size()) != nvar) throw std::invalid_argument("lmi block has wrong variable count");
    blocks.push_back(std::move(b));
}

void LmiProblem::add_linear(const Eigen::VectorXd& a, double b0) {
    LmiBlock b;
    b.F0 = Eigen::MatrixXd::Constant(1, 1, b0);
    for (int k = 0; k < nvar; ++k) b.Fk.push_back(Eigen::MatrixXd::Constant(1, 1, a[k]));
    add_block(std::move(b));
}

double LmiProblem::min_eigenvalue(const Eigen::VectorXd& y) const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.eval(y), Eigen::EigenvaluesOnly);
        m = std::min(m, es.eigenvalues()[0]);
    }
    return m;
}

namespace {

// Barrier value mu*c'y - sum log det F_j; +inf outside the feasible set.
double barrier_value(const LmiProblem& p, const Eigen::VectorXd& y, double mu) {
    double v = mu * p.c.dot(y);
    for (const auto& b : p.blocks) {
        Eigen::LLT<Eigen::MatrixXd> llt(b.eval(y));
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        const auto& L = llt.matrixL();
        Eigen::MatrixXd Lm = L;
        for (int i = 0; i < Lm.rows(); ++i) {
            if (!(Lm(i, i) > 0.0)) return std::numeric_limits<double>::infinity();
            v -= 2.0 * std::log(Lm(i, i));
        }
    }
    return v;
}

}  // namespace

BarrierResult barrier_minimize(const LmiProblem& p, const Eigen::VectorXd& y0, const BarrierOptions& opt) {
    const int n = p.nvar;
    Eigen::VectorXd y = y0;
    if (!std::isfinite(barrier_value(p, y, 1.0)))
        throw std::invalid_argument("barrier start point is not strictly feasible");

    int m = 0;
    for (const auto& b : p.blocks) m += static_cast<int>(b.F0.rows());

    BarrierResult res;
    double mu = opt.mu0;
    std::vector<Eigen::MatrixXd> S(n);
    for (int outer = 0; outer < opt.max_outer; ++outer) {
        for (int it = 0; it < opt.max_newton; ++it) {
            Eigen::VectorXd g = mu * p.c;
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
            for (const auto& b : p.blocks) {
                Eigen::MatrixXd Fi = b.eval(y).ldlt().solve(Eigen::MatrixXd::Identity(b.F0.rows(), b.F0.cols()));
                for (int k = 0; k < n; ++k) {
                    S[k] = Fi * b.Fk[k];
                    g[k] -= S[k].trace();
                }
                for (int k = 0; k < n; ++k)
                    for (int l = k; l < n; ++l) {
                        double h = S[k].cwiseProduct(S[l].transpose()).sum();
                        H(k, l) += h;
                        if (l != k) H(l, k) += h;
                    }
            }
            Eigen::VectorXd D = H.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
            Eigen::MatrixXd Hs = D.asDiagonal() * H * D.asDiagonal();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs);
            Eigen::VectorXd w = es.eigenvalues().cwiseMax(es.eigenvalues().maxCoeff() * 1e-15);
            Eigen::VectorXd gs = D.cwiseProduct(g);
            Eigen::VectorXd dy = -D.cwiseProduct(es.eigenvectors() * (es.eigenvectors().transpose() * gs).cwiseQuotient(w));
            double lam2 = -g.dot(dy);
            ++res.newton_steps;
            if (lam2 / 2.0 < 1e-9) break;
            double f0 = barrier_value(p, y, mu);
            double slope = g.dot(dy);
            double s = 1.0;
            while (s > 1e-12 && !(barrier_value(p, y + s * dy, mu) <= f0 + 0.25 * s * slope)) s *= 0.5;
            if (s <= 1e-12) break;
            y += s * dy;
        }
        if (p.c.dot(y) < opt.stop_below) break;
        if (m / mu < opt.gap_tol) {
            res.converged = true;
            break;
        }
        mu *= opt.mu_factor;
    }
    res.y = y;
    res.objective = p.c.dot(y);
    return res;
}

PhaseOneResult find_feasible(const LmiProblem& p, const Eigen::VectorXd& y0, double target_margin,
                             const BarrierOptions& opt, const std::vector<bool>& shift_mask) {
    const int n = p.nvar;
    LmiProblem q;
    q.nvar = n + 1;
    q.c = Eigen::VectorXd::Zero(n + 1);
    q.c[n] = 1.0;
    double worst = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < p.blocks.size(); ++j) {
        const auto& b = p.blocks[j];
        bool shifted = shift_mask.empty() || shift_mask[j];
        LmiBlock e{b.F0, b.Fk};
        if (shifted) e.Fk.push_back(Eigen::MatrixXd::Identity(b.F0.rows(), b.F0.cols()));
        else e.Fk.push_back(Eigen::MatrixXd::Zero(b.F0.rows(), b.F0.cols()));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.eval(y0), Eigen::EigenvaluesOnly);
        if (shifted) worst = std::min(worst, es.eigenvalues()[0]);
        else if (!(es.eigenvalues()[0] > 0.0)) throw std::invalid_argument("phase one: unshifted block infeasible at start");
        q.blocks.push_back(std::move(e));
    }
    Eigen::VectorXd z(n + 1);
    z.head(n) = y0;
    z[n] = std::max(0.0, -worst) + 1.0;
    // Keep the shift bounded below so that the subproblem has a minimizer.
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n + 1);
    a[n] = 1.0;
    q.add_linear(a, 1.0 + target_margin);
    BarrierOptions o = opt;
    o.stop_below = -target_margin;
    auto r = barrier_minimize(q, z, o);
    return {r.y.head(n), r.y[n]};
}

}  // namespace dcgrid
