#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dcgrid {

// w(u, y) = 2*cross*u'y - nu*u'u - rho*y'y.
// An L2-gain rate keeps nu = gamma^2 as a magnitude and flips its sign when
// evaluated (w = gamma^2 u'u - y'y).
struct QuadraticSupplyRate {
    enum class Kind { general, ifp, ofp, ifofp, l2 };

    double nu = 0.0;
    double rho = 0.0;
    double cross = 0.5;
    Kind kind = Kind::general;

    static QuadraticSupplyRate passive() { return {0.0, 0.0, 0.5, Kind::general}; }
    static QuadraticSupplyRate ifp(double nu) { return {nu, 0.0, 0.5, Kind::ifp}; }
    static QuadraticSupplyRate ofp(double rho) { return {0.0, rho, 0.5, Kind::ofp}; }
    static QuadraticSupplyRate ifofp(double nu, double rho) { return {nu, rho, 0.5 * (1.0 + nu * rho), Kind::ifofp}; }
    static QuadraticSupplyRate l2(double gamma) { return {gamma * gamma, 1.0, 0.0, Kind::l2}; }

    // Coefficient actually multiplying -u'u in w.
    double effective_nu() const { return kind == Kind::l2 ? -nu : nu; }
    double l2_gain() const;
    bool consistent() const;  // IFOFP relation for tagged rates

    double value(const Eigen::VectorXd& u, const Eigen::VectorXd& y) const;
    double value(double u, double y) const { return 2.0 * cross * u * y - effective_nu() * u * u - rho * y * y; }
};

double supply_value(const QuadraticSupplyRate& r, const Eigen::VectorXd& u, const Eigen::VectorXd& y);

struct Sector {
    double c_lo = 0.0;
    double c_hi = 0.0;
    QuadraticSupplyRate rate;
};

// Slope bounds of a static map over [lo, hi]. With `derivative` the bounds
// are sampled from it directly, otherwise from central differences of h.
// Samples: 1e5 uniform points plus endpoints, then golden-section refinement
// around the extreme samples.
Sector sector_of_static_map(const std::function<double(double)>& h, std::pair<double, double> domain,
                            const std::function<double(double)>& derivative = nullptr);
// Exact bounds supplied by the caller.
Sector sector_from_bounds(double c_lo, double c_hi);

QuadraticSupplyRate l2_gain_of_symmetric_sector(double c);

struct InterconnectionSpec {
    std::vector<QuadraticSupplyRate> rates;
    Eigen::MatrixXd H;               // u = H y
    std::vector<int> port_dims;      // per subsystem; empty means all scalar
    std::vector<int> free;           // 0-based subsystem ids whose (nu, rho) are free

    int ports() const;
    void validate() const;
};

// Q = [H; I]' D W D [H; I] for scalings d.
Eigen::MatrixXd interconnection_q(const InterconnectionSpec& s, const Eigen::VectorXd& d);

struct StabilityCertificate {
    Eigen::VectorXd d;
    Eigen::MatrixXd Q;
    double max_eigenvalue = 0.0;
    bool feasible = false;
    std::vector<std::pair<double, double>> solved_indices;  // (nu, rho) for the free set
    std::string note;
};

// Searches d > 0 (normalised to sum d = n) minimising the largest eigenvalue
// of Q. Feasible when that eigenvalue is below -margin * max(1, |Q|).
StabilityCertificate verify_interconnection(const InterconnectionSpec& s, double margin = 1e-8);

struct IndexSearchOptions {
    double rho_lo = 1e-6;
    double rho_hi = 1e3;
    int grid = 64;
    int refinements = 2;
    double nu_floor = -1e6;
    double margin = 1e-8;
};

// Minimally restrictive indices for the free subsystems: minimise
// sum (nu_j + rho_j) with cross_j = (1 + nu_j rho_j)/2 and Q < 0.
// rho_j comes from a log grid (plus 0); for fixed rho_j the problem is an LMI
// in (d, d_j nu_j). Several free slots are handled by block coordinate sweeps.
StabilityCertificate optimize_restrictive_indices(const InterconnectionSpec& s, const IndexSearchOptions& opt = {});

// Pairs (i, j), 0-based, where subsystem i feeds only subsystem j, neither
// loop closes back onto i, rho_i <= 0 and nu_j <= 0. For any such pair the
// diagonal entry Q_ii is nonnegative for every d, so the test cannot succeed.
std::vector<std::pair<int, int>> detect_ifp_ofp_cascade(const InterconnectionSpec& s);

}  // namespace dcgrid
