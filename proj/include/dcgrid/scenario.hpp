#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcgrid/controller.hpp"
#include "dcgrid/netgraph.hpp"
#include "dcgrid/plant.hpp"

namespace dcgrid {

enum class Integrator { trapezoidal, trbdf2, backward_euler };

struct SolverOptions {
    double step = 1e-4;
    double tolerance = 1e-10;  // Newton update tolerance relative to (1 + |x|)
    Integrator method = Integrator::trbdf2;
    double sample = 1e-3;      // output decimation; 0 keeps every step
};

struct Scenario {
    std::string name = "scenario";
    MicrogridSpec grid;
    ControllerParams controller;
    Piecewise<Topology> comm;
    double duration = 1.0;
    SolverOptions solver;
    std::uint64_t seed = 0;

    int bus_count() const { return grid.bus_count(); }
    // Sorted switch times strictly inside (0, duration).
    std::vector<double> event_times() const;
    // Structural checks plus the actuation and connectivity assumptions.
    void validate() const;
};

// Active communication graph at t: edges touching disconnected buses removed.
Topology active_comm(const Scenario& s, double t);
std::vector<bool> connected_buses(const Scenario& s, double t);

enum class Variant { strict_passive, passive_ideal };
Scenario builtin_scenario_10bus(Variant v);

// Minimal grids used by tests and examples.
Scenario single_bus_scenario(const ZipLoad& load, double duration = 2.0);

// JSON scenario files.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text);
std::string scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);

struct GeneratorOptions {
    int buses = 10;
    double duration = 10.0;
    double min_load_index = 0.05;
    int windows = 2;
};
// Random grid respecting the nominal parameter ranges (line length 0.2..10
// km, |Z| <= 0.1, |I| <= 21, |P| <= 3000) with load indices above the bound.
Scenario generate_scenario(std::uint64_t seed, const GeneratorOptions& opt = {});

}  // namespace dcgrid
