#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dcgrid/netgraph.hpp"

namespace dcgrid {

// Right-continuous piecewise-constant signal.
template <class T>
struct Piecewise {
    T initial{};
    std::vector<std::pair<double, T>> changes;  // sorted by time

    Piecewise() = default;
    Piecewise(T v) : initial(std::move(v)) {}

    const T& at(double t) const {
        const T* cur = &initial;
        for (const auto& [ts, v] : changes) {
            if (ts <= t) cur = &v;
            else break;
        }
        return *cur;
    }
    void set(double t, T v) {
        auto it = changes.begin();
        while (it != changes.end() && it->first < t) ++it;
        if (it != changes.end() && it->first == t) it->second = std::move(v);
        else changes.insert(it, {t, std::move(v)});
    }
};

struct ZipLoad {
    double z_inv = 0.0;
    double i_const = 0.0;
    double p_const = 0.0;
    double v_crit = 266.0;

    double z_crit_inv() const { return z_inv + i_const / v_crit + p_const / (v_crit * v_crit); }
    // Branch selection ties toward the ZIP branch at v = v_crit. Below v_crit
    // (including v < 0 during numerical transients) the resistive branch applies.
    double current(double v) const {
        return v >= v_crit ? z_inv * v + i_const + p_const / v : z_crit_inv() * v;
    }
    double slope(double v) const { return v >= v_crit ? z_inv - p_const / (v * v) : z_crit_inv(); }
};

// Checked evaluation; rejects v < 0.
double load_current(const ZipLoad& load, double v);

struct DguParams {
    double r_filter = 0.2;
    double l_filter = 1.8e-3;
    double c_bus = 2.2e-3;
    double kp_pwr = 90.0;
    double ki_pwr = 90.0;
    double r_damp = -8.0;
    double v_ref = 380.0;

    void validate() const;
};

struct BusSpec {
    int id = 0;
    std::optional<DguParams> dgu;
    double c_bus = 2.2e-3;  // used when no DGU is installed
    Piecewise<ZipLoad> load;
    Piecewise<bool> actuation{false};
    Piecewise<bool> connected{true};

    double capacitance() const { return dgu ? dgu->c_bus : c_bus; }
};

struct LineSpec {
    int k = 0;
    int l = 0;
    double r_line = 0.1;
    double l_line = 2e-6;
    double c_line = 0.0;
};

struct MicrogridSpec {
    std::vector<BusSpec> buses;
    std::vector<LineSpec> lines;
    Piecewise<std::vector<bool>> line_in_service;  // electrical topology; empty = all lines
    double v_ref = 380.0;

    int bus_count() const { return static_cast<int>(buses.size()); }
    int line_count() const { return static_cast<int>(lines.size()); }
    Topology electrical_topology(double t) const;
    std::vector<double> switch_times() const;
    void validate() const;
};

// Snapshot of everything piecewise constant at a given time.
struct GridConfig {
    std::vector<bool> actuated;
    std::vector<bool> connected;
    std::vector<bool> line_active;  // in service and both ends connected
    std::vector<ZipLoad> loads;
    Eigen::VectorXd c_eq;
};
GridConfig configure(const MicrogridSpec& g, double t);

// Flat plant state: [e (N), i (N), v (N), i_line (M)].
struct PlantLayout {
    int n = 0;
    int m = 0;
    int e(int k) const { return k; }
    int i(int k) const { return n + k; }
    int v(int k) const { return 2 * n + k; }
    int line(int l) const { return 3 * n + l; }
    int size() const { return 3 * n + m; }
};

struct MicrogridState {
    Eigen::VectorXd e, i, v, i_line;

    Eigen::VectorXd pack() const;
    static MicrogridState unpack(const Eigen::VectorXd& x, int n, int m);
};

struct DguDerivative {
    double de = 0.0, di = 0.0, dv = 0.0;
};

// Actuated (alpha = 1) or switched-off (alpha = 0) DGU bus. With alpha = 0 the
// regulator integrator and the filter current are frozen and the converter
// injects nothing, so the bus behaves as an unactuated load bus.
DguDerivative dgu_rhs(const DguParams& p, double e, double i, double v, double p_sp, double line_inflow,
                      double load_i, double c_eq, bool alpha = true);
double unactuated_bus_rhs(const ZipLoad& load, double v, double line_inflow, double c_eq);
double line_rhs(const LineSpec& line, double i, double v_source, double v_sink);

// Plant derivative for a fixed configuration. p_sp has one entry per bus.
void plant_rhs(const MicrogridSpec& g, const GridConfig& c, const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& p_sp, Eigen::Ref<Eigen::VectorXd> dx);
// Jacobians d(dx)/dx and d(dx)/dp_sp.
void plant_jacobian(const MicrogridSpec& g, const GridConfig& c, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& p_sp, Eigen::Ref<Eigen::MatrixXd> Jx,
                    Eigen::Ref<Eigen::MatrixXd> Jp);
// Plant states that do not evolve under c (frozen e and i of unactuated buses).
std::vector<bool> plant_inert(const MicrogridSpec& g, const GridConfig& c);

Eigen::VectorXd assemble_rhs(const MicrogridSpec& g, const MicrogridState& s, const Eigen::VectorXd& p_sp, double t);

struct EquilibriumResult {
    MicrogridState state;
    double residual = 0.0;  // infinity norm of the mass-weighted derivative (W, V, A)
    int iterations = 0;
};

struct EquilibriumError : std::runtime_error {
    double residual;
    EquilibriumError(const std::string& what, double r) : std::runtime_error(what), residual(r) {}
};

EquilibriumResult solve_equilibrium(const MicrogridSpec& g, const Eigen::VectorXd& p_sp, double t);

// Equilibrium-shifted DGU model M x_e' = A x_e + b1 p_e + b2 zeta_e,
// y = c' x_e with x_e = (e, i, v) shifted and M = diag(1, L, C_eq).
struct ShiftedDgu {
    Eigen::Matrix3d A;
    Eigen::Vector3d b1, b2, c;
};
ShiftedDgu shift_dgu(const DguParams& p, double v, double i_eq, double load_slope);

}  // namespace dcgrid
