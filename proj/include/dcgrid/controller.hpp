#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dcgrid/dissipativity.hpp"
#include "dcgrid/netgraph.hpp"
#include "dcgrid/passivity.hpp"

namespace dcgrid {

struct WeightingParams {
    double a = 0.1;
    double b = 1.1;
    double c = 7.5;  // dead-zone half width (V)
    void validate() const;
};

double dead_zone(double c, double u);
double weighting(const WeightingParams& w, double u);
double weighting_derivative(const WeightingParams& w, double u);
QuadraticSupplyRate weighting_indices(const WeightingParams& w);

struct DdaParams {
    double kp = 50.0;
    double ki = 100.0;
    double g = 16.0;
    void validate() const;
};

struct PiParams {
    double kp = 160.0;
    double ki = 600.0;
    double tau = 0.08;
    void validate() const;
};

struct ControllerParams {
    WeightingParams weighting;
    DdaParams dda;
    PiParams pi;
    double v_ref = 380.0;
    std::vector<int> bypass_pi;  // 1-based agents that skip the PI stage
    bool anti_windup = true;
};

// x' = -g x - kp L x + ki L z + g u,  z' = -ki L x.
void dda_rhs(const DdaParams& d, const Eigen::MatrixXd& L, const Eigen::Ref<const Eigen::VectorXd>& x,
             const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& u,
             Eigen::Ref<Eigen::VectorXd> dx, Eigen::Ref<Eigen::VectorXd> dz);
void dda_rhs(const DdaParams& d, const Topology& comm, const Eigen::Ref<const Eigen::VectorXd>& x,
             const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& u,
             Eigen::Ref<Eigen::VectorXd> dx, Eigen::Ref<Eigen::VectorXd> dz);
QuadraticSupplyRate dda_supply_rate();

double pi_rhs(const PiParams& p, double x, double u);
double pi_output(const PiParams& p, double x, double u);
QuadraticSupplyRate pi_supply_rate(const PiParams& p);

// Stage-2 steady-state output for a given stage-4 output: tau/(ki + tau kp) y4.
double steady_state_factor(const PiParams& p);
double predict_steady_state_error(const PiParams& p, double y_dda4);

// Additive reference correction cancelling the predicted offset through the
// local slope of the weighting function at the operating error u_op.
double compensate_vref(const PiParams& p, const WeightingParams& w, double p_sp_observed, double u_op = 0.0);

// Closed-loop interconnection of the four stages with the microgrid as in
// u = H y, ports ordered (microgrid, weighting, DDA2, PI, DDA4).
Eigen::MatrixXd stage_interconnection(double kp);

struct WeightingDesign {
    WeightingParams w;
    double eps_in = 0.0;
    double eps_out = 0.0;
    StabilityCertificate cert;
    bool feasible = false;
    std::string note;
};

struct DesignOptions {
    double lo = 1e-4;
    double hi = 10.0;
    int grid = 48;
    int refinements = 2;
    double margin = 1e-8;
};

// Minimises eps_in + eps_out over the weighting rate IFOFP(eps_in, eps_out)
// such that the five-port interconnection certifies. The result is
// re-verified independently. Refuses tau = 0 (IFP/OFP cascade).
WeightingDesign design_weighting(const MicrogridIndices& mg, const QuadraticSupplyRate& dda,
                                 const QuadraticSupplyRate& pi_rate, double kp, double c = 7.5,
                                 const DesignOptions& opt = {});

// Certifies a given (a, b) pair: Q at the weighting rate IFOFP(a, 1/(a+b)).
StabilityCertificate certify_weighting(const MicrogridIndices& mg, const QuadraticSupplyRate& dda,
                                       const QuadraticSupplyRate& pi_rate, double kp, const WeightingParams& w,
                                       double margin = 1e-8);

InterconnectionSpec closed_loop_spec(const MicrogridIndices& mg, const QuadraticSupplyRate& dda,
                                     const QuadraticSupplyRate& pi_rate, double kp,
                                     const QuadraticSupplyRate& weighting_rate);

struct DesignRefused : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dcgrid
