#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcgrid/dissipativity.hpp"
#include "dcgrid/plant.hpp"

namespace dcgrid {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct OperatingBox {
    Interval v{200.0, 550.0};
    Interval i_eq{10.0, 350.0};
    void validate() const;
};

// How the 3x3 weight enters the storage. `literal` uses the weight P directly
// against the shifted dynamics written in balance form (P A + A'P), as the
// classical block matrix does. `mass_weighted` takes S = x'Kx for the state
// x = (e, i, v) and therefore uses K M^-1 with M = diag(1, L, C_eq); only this
// form turns the matrix inequality into a pointwise bound on dS/dt.
enum class StorageForm { literal, mass_weighted };

struct DguIndices {
    double nu1 = 0.0;
    double nu2 = 0.0;
    double rho = 0.0;
    Eigen::Matrix3d P = Eigen::Matrix3d::Identity();
    StorageForm form = StorageForm::literal;
};

double load_passivity_index(const ZipLoad& load, Interval v_domain = {0.0, kInf});
double line_passivity_index(const LineSpec& line);

// 5x5 block matrix whose quadratic form in (x_e, p_e, zeta_e) is dS/dt - w.
Eigen::Matrix<double, 5, 5> dgu_lmi_matrix(const DguParams& p, const DguIndices& idx, double v, double i_eq,
                                           double load_slope, double c_eq);

// Largest eigenvalue of the block matrix over the box vertices (and both ends
// of the load slope range). +inf when P is not positive definite.
double check_dgu_lmi(const DguParams& p, const DguIndices& idx, const OperatingBox& box, double load_slope,
                     std::optional<double> load_slope_hi = std::nullopt);
// Same check on an n x n grid over the box.
double check_dgu_lmi_grid(const DguParams& p, const DguIndices& idx, const OperatingBox& box, double load_slope,
                          int n, std::optional<double> load_slope_hi = std::nullopt);

struct DguSearchOptions {
    StorageForm form = StorageForm::literal;
    std::optional<double> load_slope_hi;
    double nu2_lower = -1e3;  // e.g. -rho_line
    double nu_floor = -1e3;
    double trace_bound = 1e4;
    double rho_lo = 1e-4;
    double rho_hi = 10.0;
    int grid = 32;
    int refinements = 2;
    double margin = 1e-9;
};

struct DguInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Maximises nu1 + nu2 + rho. For each rho on the grid the inequality is an
// LMI in (P, nu1, nu2) solved with a barrier method.
DguIndices dgu_passivity_indices(const DguParams& p, const OperatingBox& box, double load_slope,
                                 const DguSearchOptions& opt = {});

// Searches a weight P certifying fixed indices; returns the indices with that
// P and the attained margin.
struct DguPointResult {
    DguIndices idx;
    double margin = kInf;
    bool feasible = false;
};
DguPointResult certify_dgu_point(const DguParams& p, const OperatingBox& box, double load_slope, double nu1,
                                 double nu2, double rho, const DguSearchOptions& opt = {});

struct MicrogridIndices {
    double nu1 = kInf;
    double nu2 = kInf;
    double rho_dgu = kInf;
    double rho_load = kInf;  // +inf when no bus is unactuated
    double rho_line = kInf;
    QuadraticSupplyRate rate;  // IFOFP(nu1, rho_dgu)
};

struct SupplyConditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Worst-case indices over the subsystems; throws when nu2 + rho_line < 0.
MicrogridIndices microgrid_supply(const std::vector<DguIndices>& dgus, const std::vector<double>& rho_loads,
                                  const std::vector<double>& rho_lines);

struct Certificate {
    bool issued = false;
    std::vector<std::string> failures;
    QuadraticSupplyRate rate;
};

Certificate actuation_independent_certificate(const MicrogridIndices& m, double nu_load = 1e-6);

}  // namespace dcgrid
