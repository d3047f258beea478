#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dcgrid/sim.hpp"

namespace dcgrid {

// Header: time, v.busK, err.busK, err.avg, yc.busK, psp.busK, psp.spread.
void write_csv(const Scenario& s, const Trajectory& tr, std::ostream& out);
void write_csv(const Scenario& s, const Trajectory& tr, const std::string& path);

struct Series {
    std::string label;
    std::vector<double> y;
};

// Minimal line chart; returns the SVG document.
std::string svg_line_chart(const std::string& title, const std::string& y_label, const std::vector<double>& t,
                           const std::vector<Series>& series, const std::vector<double>& markers = {});

// voltages.svg, errors.svg, agent_outputs.svg, setpoints.svg in dir.
std::vector<std::string> write_svg_figures(const Scenario& s, const Trajectory& tr, const std::string& dir);

}  // namespace dcgrid
