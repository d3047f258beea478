#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcgrid/scenario.hpp"

namespace dcgrid {

// Closed-loop state: plant block followed by the controller stages
// [x2, z2, x3, x4, z4], one entry per bus each.
struct ClosedLoopLayout {
    int n = 0;
    int m = 0;
    PlantLayout plant;
    int p() const { return plant.size(); }
    int x2(int k) const { return p() + k; }
    int z2(int k) const { return p() + n + k; }
    int x3(int k) const { return p() + 2 * n + k; }
    int x4(int k) const { return p() + 3 * n + k; }
    int z4(int k) const { return p() + 4 * n + k; }
    int size() const { return p() + 5 * n; }
};
ClosedLoopLayout closed_loop_layout(const Scenario& s);

// Controller signals at a state.
struct StageSignals {
    Eigen::VectorXd u2;  // weighted voltage errors h(v_ref - v)
    Eigen::VectorXd u3;  // PI inputs after anti-windup
    Eigen::VectorXd y3;  // PI outputs
    Eigen::VectorXd u4;  // stage-4 inputs (PI output or bypass)
    Eigen::VectorXd p_sp;
};

// Plant plus controller for the configuration active at one instant.
class ClosedLoop {
public:
    ClosedLoop(const Scenario& s, double t);

    const ClosedLoopLayout& layout() const { return lay_; }
    const GridConfig& config() const { return cfg_; }
    const Eigen::MatrixXd& comm_laplacian() const { return lap_; }
    const std::vector<int>& comm_components() const { return comp_; }
    const std::vector<bool>& pi_masked() const { return masked_; }
    const std::vector<bool>& bypass() const { return bypass_; }
    const Scenario& scenario() const { return *s_; }

    StageSignals signals(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    void rhs(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> dx) const;
    void jacobian(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::MatrixXd> J) const;

    // Number of exact zero modes implied by the structure: frozen plant
    // states, one Laplacian kernel direction per communication component for
    // each of z2 and z4, and with ideal integrators the PI directions that
    // stage 4 absorbs.
    int structural_kernel_dim() const;

private:
    const Scenario* s_;
    ClosedLoopLayout lay_;
    GridConfig cfg_;
    Eigen::MatrixXd lap_;
    std::vector<int> comp_;
    std::vector<bool> masked_, bypass_;
};

struct Trajectory {
    ClosedLoopLayout layout;
    std::vector<double> segment_start;  // segment s covers [start[s], start[s+1])
    std::vector<double> t;
    std::vector<int> segment;
    std::vector<Eigen::VectorXd> x;
    long steps = 0;
    long newton_iterations = 0;
    long jacobian_updates = 0;
    long step_splits = 0;

    int samples() const { return static_cast<int>(t.size()); }
    double segment_end(int s, double duration) const {
        return s + 1 < static_cast<int>(segment_start.size()) ? segment_start[s + 1] : duration;
    }
};

struct RunOptions {
    double t_end = -1.0;  // < 0: scenario duration
    bool record = true;   // false keeps only the final state
};

struct IntegrationError : std::runtime_error {
    double t;
    Eigen::VectorXd x;
    IntegrationError(const std::string& w, double time, Eigen::VectorXd state)
        : std::runtime_error(w), t(time), x(std::move(state)) {}
};

Trajectory run(const Scenario& s, const RunOptions& opt = {});

struct ClosedLoopEquilibrium {
    Eigen::VectorXd x;
    double residual = 0.0;  // infinity norm of the mass-scaled derivative
    int iterations = 0;
};
// Minimum-norm Newton from a nearby state; converges to the equilibrium
// closest to the guess along the kernel directions.
ClosedLoopEquilibrium refine_equilibrium(const ClosedLoop& cl, const Eigen::VectorXd& guess, double tol = 1e-9,
                                         int max_iter = 50);

struct Linearization {
    Eigen::VectorXd x_eq;
    double residual = 0.0;
    Eigen::MatrixXd A;
    Eigen::VectorXcd eigenvalues;
    int kernel_dim = 0;              // structural count
    int numeric_nullity = 0;         // from the SVD of the balanced matrix
    std::vector<std::complex<double>> kernel, modes;
    double max_kernel_abs = 0.0;
    double max_real = 0.0;           // over the non-kernel modes
    bool stable = false;
};
// Equilibrium from simulating to the end of the window containing t, then
// Newton refinement under the configuration active at t.
Linearization linearize(const Scenario& s, double t);
Linearization linearize_at(const ClosedLoop& cl, const Eigen::VectorXd& guess);

// Per-sample objective metrics over the connected buses.
struct ObjectiveMetrics {
    std::vector<double> t;
    std::vector<double> avg_error;     // connected-average weighted error
    std::vector<double> spread;        // max - min setpoint over connected agents
    std::vector<double> mean_abs_sp;   // mean |p_sp| over connected agents
    std::vector<double> mean_sp;       // mean p_sp over connected agents
};
ObjectiveMetrics objective_metrics(const Scenario& s, const Trajectory& tr);

// End-of-window summary comparing the average error with the leaky-integrator
// steady-state prediction.
struct WindowSummary {
    double t0 = 0.0, t1 = 0.0;
    double avg_error = 0.0;
    double predicted = 0.0;
    double drift = 0.0;        // change of the average error over the last 0.5 s
    double spread = 0.0;
    double mean_abs_sp = 0.0;
    bool quasi_steady = false;
};
std::vector<WindowSummary> window_summaries(const Scenario& s, const Trajectory& tr);

}  // namespace dcgrid
