#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

namespace dcgrid {

// One linear matrix inequality F0 + sum_k y_k Fk > 0 (symmetric blocks).
struct LmiBlock {
    Eigen::MatrixXd F0;
    std::vector<Eigen::MatrixXd> Fk;

    Eigen::MatrixXd eval(const Eigen::VectorXd& y) const;
};

struct LmiProblem {
    int nvar = 0;
    std::vector<LmiBlock> blocks;
    Eigen::VectorXd c;  // minimize c'y

    void add_block(LmiBlock b);
    // Scalar constraint a'y + b0 > 0 as a 1x1 block.
    void add_linear(const Eigen::VectorXd& a, double b0);
    // Smallest eigenvalue over all blocks, +inf when there are none.
    double min_eigenvalue(const Eigen::VectorXd& y) const;
};

struct BarrierOptions {
    double mu0 = 1.0;
    double mu_factor = 8.0;
    double gap_tol = 1e-10;  // stop once (total block size)/mu < gap_tol
    int max_outer = 80;
    int max_newton = 200;
    // Optional early exit once c'y drops below this value.
    double stop_below = -std::numeric_limits<double>::infinity();
};

struct BarrierResult {
    Eigen::VectorXd y;
    double objective = 0.0;
    int newton_steps = 0;
    bool converged = false;
};

// Log-barrier path following with damped Newton steps. y0 must be strictly
// feasible. The Hessian is Jacobi scaled and solved through a symmetric
// eigendecomposition, which keeps badly scaled problems (P entries spanning
// many decades) from stalling.
BarrierResult barrier_minimize(const LmiProblem& p, const Eigen::VectorXd& y0,
                               const BarrierOptions& opt = {});

// Phase I: minimize s over (y, s) with F(y) + s*I > 0. Returns y and the
// optimal shift s; s < 0 means y is strictly feasible with margin -s.
struct PhaseOneResult {
    Eigen::VectorXd y;
    double shift = 0.0;
};
// Blocks with shift_mask[j] == false do not receive the shift and must be
// strictly feasible at y0 already (bounds, positivity of a weight matrix).
PhaseOneResult find_feasible(const LmiProblem& p, const Eigen::VectorXd& y0,
                             double target_margin, const BarrierOptions& opt = {},
                             const std::vector<bool>& shift_mask = {});

}  // namespace dcgrid
