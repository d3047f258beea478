#include "dcgrid/controller.hpp"

#include <cmath>
#include <sstream>

#include "dcgrid/parallel.hpp"

namespace dcgrid {

void WeightingParams::validate() const {
    if (!(a > 0.0)) throw std::invalid_argument("weighting slope a must be positive");
    if (!(a + b > 0.0)) throw std::invalid_argument("weighting requires a + b > 0");
    if (!(c >= 0.0)) throw std::invalid_argument("dead-zone width must be nonnegative");
}

void DdaParams::validate() const {
    if (!(kp > 0 && ki > 0 && g > 0)) throw std::invalid_argument("DDA gains must be positive");
}

void PiParams::validate() const {
    if (!(kp > 0 && ki > 0)) throw std::invalid_argument("PI gains must be positive");
    if (!(tau >= 0)) throw std::invalid_argument("leak rate must be nonnegative");
}

double dead_zone(double c, double u) {
    if (u > c) return u - c;
    if (u < -c) return u + c;
    return 0.0;
}

double weighting(const WeightingParams& w, double u) {
    double g = dead_zone(w.c, u);
    return w.a * u + w.b * (g - std::tanh(g));
}

double weighting_derivative(const WeightingParams& w, double u) {
    double t = std::tanh(dead_zone(w.c, u));
    return w.a + w.b * t * t;
}

QuadraticSupplyRate weighting_indices(const WeightingParams& w) {
    if (!(w.b > -w.a)) throw std::invalid_argument("weighting requires b > -a");
    return QuadraticSupplyRate::ifofp(w.a, 1.0 / (w.a + w.b));
}

void dda_rhs(const DdaParams& d, const Eigen::MatrixXd& L, const Eigen::Ref<const Eigen::VectorXd>& x,
             const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& u,
             Eigen::Ref<Eigen::VectorXd> dx, Eigen::Ref<Eigen::VectorXd> dz) {
    const auto n = L.rows();
    if (x.size() != n || z.size() != n || u.size() != n) throw std::invalid_argument("DDA dimension mismatch");
    Eigen::VectorXd Lx = L * x;
    dx = -d.g * x - d.kp * Lx + d.ki * (L.transpose() * z) + d.g * u;
    dz = -d.ki * Lx;
}

void dda_rhs(const DdaParams& d, const Topology& comm, const Eigen::Ref<const Eigen::VectorXd>& x,
             const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& u,
             Eigen::Ref<Eigen::VectorXd> dx, Eigen::Ref<Eigen::VectorXd> dz) {
    dda_rhs(d, laplacian(comm), x, z, u, dx, dz);
}

QuadraticSupplyRate dda_supply_rate() { return QuadraticSupplyRate::ofp(1.0); }

double pi_rhs(const PiParams& p, double x, double u) { return -p.tau * x + u; }
double pi_output(const PiParams& p, double x, double u) { return p.ki * x + p.kp * u; }

QuadraticSupplyRate pi_supply_rate(const PiParams& p) {
    if (p.tau == 0.0) return QuadraticSupplyRate::ifp(p.kp);
    QuadraticSupplyRate r;
    r.cross = 0.5 * (1.0 + 2.0 * p.tau * p.kp / p.ki);
    r.nu = p.kp + p.tau * p.kp * p.kp / p.ki;
    r.rho = p.tau / p.ki;
    return r;
}

double steady_state_factor(const PiParams& p) { return p.tau / (p.ki + p.tau * p.kp); }

double predict_steady_state_error(const PiParams& p, double y_dda4) {
    if (p.tau < 0.0) throw std::invalid_argument("leak rate must be nonnegative");
    return steady_state_factor(p) * y_dda4;
}

double compensate_vref(const PiParams& p, const WeightingParams& w, double p_sp_observed, double u_op) {
    if (!(p.tau > 0.0)) throw std::invalid_argument("compensation needs a leaky integrator");
    return predict_steady_state_error(p, p_sp_observed) / weighting_derivative(w, u_op);
}

Eigen::MatrixXd stage_interconnection(double kp) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(5, 5);
    H(0, 4) = -1.0;
    H(1, 0) = 1.0;
    H(2, 1) = 1.0;
    H(3, 2) = kp;
    H(4, 3) = 1.0;
    return H;
}

InterconnectionSpec closed_loop_spec(const MicrogridIndices& mg, const QuadraticSupplyRate& dda,
                                     const QuadraticSupplyRate& pi_rate, double kp,
                                     const QuadraticSupplyRate& weighting_rate) {
    InterconnectionSpec s;
    s.rates = {weighting_rate, dda, pi_rate, dda, mg.rate};
    s.H = stage_interconnection(kp);
    return s;
}

StabilityCertificate certify_weighting(const MicrogridIndices& mg, const QuadraticSupplyRate& dda,
                                       const QuadraticSupplyRate& pi_rate, double kp, const WeightingParams& w,
                                       double margin) {
    return verify_interconnection(closed_loop_spec(mg, dda, pi_rate, kp, weighting_indices(w)), margin);
}

WeightingDesign design_weighting(const MicrogridIndices& mg, const QuadraticSupplyRate& dda,
                                 const QuadraticSupplyRate& pi_rate, double kp, double c, const DesignOptions& opt) {
    {
        auto probe = closed_loop_spec(mg, dda, pi_rate, kp, QuadraticSupplyRate::ifofp(1.0, 1.0));
        auto cascades = detect_ifp_ofp_cascade(probe);
        if (!cascades.empty()) {
            std::ostringstream os;
            os << "design refused: subsystem " << cascades.front().first + 1 << " (IFP) feeds subsystem "
               << cascades.front().second + 1 << " (OFP) in exclusive cascade; use a leaky integrator (tau > 0)";
            throw DesignRefused(os.str());
        }
    }

    WeightingDesign best;
    double best_obj = kInf;
    auto sweep = [&](const std::vector<double>& in, const std::vector<double>& out) {
        const int no = static_cast<int>(out.size());
        auto certs = parallel_map(static_cast<int>(in.size()) * no, [&](int k) {
            return verify_interconnection(
                closed_loop_spec(mg, dda, pi_rate, kp, QuadraticSupplyRate::ifofp(in[k / no], out[k % no])),
                opt.margin);
        });
        for (size_t k = 0; k < certs.size(); ++k) {
            double ein = in[k / no], eout = out[k % no];
            if (!certs[k].feasible || ein + eout >= best_obj) continue;
            best_obj = ein + eout;
            best.eps_in = ein;
            best.eps_out = eout;
            best.cert = certs[k];
            best.feasible = true;
        }
    };
    auto axis = [&](double lo, double hi, int n) {
        std::vector<double> v;
        for (int k = 0; k < n; ++k) v.push_back(lo * std::pow(hi / lo, k / double(n - 1)));
        return v;
    };
    auto in = axis(opt.lo, opt.hi, opt.grid), out = axis(opt.lo, opt.hi, opt.grid);
    sweep(in, out);
    double ratio = std::pow(opt.hi / opt.lo, 1.0 / (opt.grid - 1));
    for (int pass = 0; pass < opt.refinements && best.feasible; ++pass) {
        double ci = best.eps_in, co = best.eps_out;
        sweep(axis(ci / ratio, ci * ratio, 9), axis(co / ratio, co * ratio, 9));
        ratio = std::pow(ratio, 0.25);
    }
    if (!best.feasible) {
        // Report the row of Q that binds at the least infeasible grid point.
        double worst = kInf;
        StabilityCertificate cw;
        for (double a : in)
            for (double b : {out.front(), out.back()}) {
                auto cert = verify_interconnection(
                    closed_loop_spec(mg, dda, pi_rate, kp, QuadraticSupplyRate::ifofp(a, b)), opt.margin);
                if (cert.max_eigenvalue < worst) {
                    worst = cert.max_eigenvalue;
                    cw = cert;
                }
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cw.Q);
        Eigen::Index row = 0;
        es.eigenvectors().col(cw.Q.rows() - 1).cwiseAbs().maxCoeff(&row);
        std::ostringstream os;
        os << "no feasible weighting indices; smallest max eigenvalue " << worst << ", binding row " << row + 1;
        best.note = os.str();
        best.cert = cw;
        return best;
    }
    best.w = {best.eps_in, 1.0 / best.eps_out - best.eps_in, c};
    // independent re-check through the closed-form (a, b) parametrisation
    auto again = certify_weighting(mg, dda, pi_rate, kp, best.w, opt.margin);
    best.feasible = again.feasible;
    best.cert = again;
    return best;
}

}  // namespace dcgrid
