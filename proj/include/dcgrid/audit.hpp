#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dcgrid/passivity.hpp"
#include "dcgrid/sim.hpp"

namespace dcgrid {

struct AuditEntry {
    std::string name;
    double max_excess = -kInf;  // max over samples of dS/dt - w
    double scale = 0.0;         // largest magnitude among dS/dt and the supply terms
    int samples = 0;
    double normalized() const { return scale > 0 ? max_excess / scale : (max_excess > 0 ? kInf : 0.0); }
};

struct AuditOptions {
    double tolerance = 1e-6;
    double load_index_factor = 1.0;  // 2.0 is the negative control
    OperatingBox box;
    // DGU storage weight and indices; computed when absent.
    std::optional<DguIndices> dgu;
    double dgu_slope_lo = 0.05;
};

struct AuditReport {
    std::vector<AuditEntry> entries;
    DguIndices dgu;
    bool dgu_available = false;
    int composite_samples = 0;   // samples where every actuated DGU was certified
    int composite_skipped = 0;
    std::vector<std::string> notes;

    const AuditEntry* find(const std::string& name) const;
    // Worst normalized excess over entries whose name starts with prefix.
    double worst(const std::string& prefix = "") const;
    bool passed(double tol, const std::string& prefix = "") const { return worst(prefix) <= tol; }
};

// Largest load slope (chord or tangent) over a voltage interval.
double max_load_slope(const ZipLoad& load, Interval dom);

// Weight for the storage-consistent DGU form certifying the given triple over
// the box and the load slopes of the scenario's actuated buses.
DguPointResult audit_dgu_weight(const Scenario& s, const OperatingBox& box, double slope_lo, double nu1 = -4.686,
                                double nu2 = -0.01, double rho = 0.01);

AuditReport dissipation_audit(const Scenario& s, const Trajectory& tr, const AuditOptions& opt = {});

}  // namespace dcgrid
