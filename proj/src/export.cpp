#include "dcgrid/export.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dcgrid {

namespace {

// Shortest round-trip representation, independent of locale.
void put(std::ostream& out, double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, r.ptr - buf);
}

struct Columns {
    std::vector<double> t;
    std::vector<std::vector<double>> v, err, yc, psp;
    std::vector<double> avg, spread;
};

Columns collect(const Scenario& s, const Trajectory& tr) {
    const auto& l = tr.layout;
    Columns c;
    c.v.assign(l.n, {});
    c.err.assign(l.n, {});
    c.yc.assign(l.n, {});
    c.psp.assign(l.n, {});
    auto om = objective_metrics(s, tr);
    c.t = om.t;
    c.avg = om.avg_error;
    c.spread = om.spread;
    std::vector<ClosedLoop> loops;
    for (double t0 : tr.segment_start) loops.emplace_back(s, t0);
    for (int i = 0; i < tr.samples(); ++i) {
        auto sg = loops[tr.segment[i]].signals(tr.x[i]);
        for (int k = 0; k < l.n; ++k) {
            c.v[k].push_back(tr.x[i][l.plant.v(k)]);
            c.err[k].push_back(sg.u2[k]);
            c.yc[k].push_back(sg.y3[k]);
            c.psp[k].push_back(sg.p_sp[k]);
        }
    }
    return c;
}

}  // namespace

void write_csv(const Scenario& s, const Trajectory& tr, std::ostream& out) {
    auto c = collect(s, tr);
    const int n = tr.layout.n;
    out << "time";
    for (int k = 1; k <= n; ++k) out << ",v.bus" << k;
    for (int k = 1; k <= n; ++k) out << ",err.bus" << k;
    out << ",err.avg";
    for (int k = 1; k <= n; ++k) out << ",yc.bus" << k;
    for (int k = 1; k <= n; ++k) out << ",psp.bus" << k;
    out << ",psp.spread\n";
    for (size_t i = 0; i < c.t.size(); ++i) {
        put(out, c.t[i]);
        auto row = [&](const std::vector<std::vector<double>>& col) {
            for (int k = 0; k < n; ++k) {
                out << ',';
                put(out, col[k][i]);
            }
        };
        row(c.v);
        row(c.err);
        out << ',';
        put(out, c.avg[i]);
        row(c.yc);
        row(c.psp);
        out << ',';
        put(out, c.spread[i]);
        out << '\n';
    }
}

void write_csv(const Scenario& s, const Trajectory& tr, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write " + path);
    write_csv(s, tr, out);
}

std::string svg_line_chart(const std::string& title, const std::string& y_label, const std::vector<double>& t,
                           const std::vector<Series>& series, const std::vector<double>& markers) {
    const double W = 900, H = 420, ml = 80, mr = 130, mt = 40, mb = 50;
    const double pw = W - ml - mr, ph = H - mt - mb;
    double t0 = t.empty() ? 0.0 : t.front(), t1 = t.empty() ? 1.0 : t.back();
    if (t1 <= t0) t1 = t0 + 1.0;
    double lo = kInf, hi = -kInf;
    for (const auto& s : series)
        for (double y : s.y)
            if (std::isfinite(y)) {
                lo = std::min(lo, y);
                hi = std::max(hi, y);
            }
    if (!(hi > lo)) {
        lo = (std::isfinite(lo) ? lo : 0.0) - 1.0;
        hi = lo + 2.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto X = [&](double x) { return ml + pw * (x - t0) / (t1 - t0); };
    auto Y = [&](double y) { return mt + ph * (1.0 - (y - lo) / (hi - lo)); };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                   "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};

    std::ostringstream o;
    o.precision(6);
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double y = lo + (hi - lo) * i / 5.0, ty = t0 + (t1 - t0) * i / 5.0;
        o << "<line x1=\"" << ml << "\" x2=\"" << ml + pw << "\" y1=\"" << Y(y) << "\" y2=\"" << Y(y)
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << ml - 6 << "\" y=\"" << Y(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
        o << "<text x=\"" << X(ty) << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\">" << ty << "</text>\n";
    }
    for (double mk : markers)
        o << "<line x1=\"" << X(mk) << "\" x2=\"" << X(mk) << "\" y1=\"" << mt << "\" y2=\"" << mt + ph
          << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">time (s)</text>\n";
    o << "<text x=\"16\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << mt + ph / 2 << ")\">" << y_label << "</text>\n";

    // Thin out to at most ~2000 points per series.
    const size_t stride = std::max<size_t>(1, t.size() / 2000);
    for (size_t k = 0; k < series.size(); ++k) {
        const char* col = colors[k % (sizeof colors / sizeof *colors)];
        o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.2\" points=\"";
        for (size_t i = 0; i < t.size(); i += stride) o << X(t[i]) << ',' << Y(series[k].y[i]) << ' ';
        if (!t.empty()) o << X(t.back()) << ',' << Y(series[k].y.back());
        o << "\"/>\n";
        double ly = mt + 14 + 16 * k;
        o << "<line x1=\"" << ml + pw + 10 << "\" x2=\"" << ml + pw + 30 << "\" y1=\"" << ly - 4 << "\" y2=\""
          << ly - 4 << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << ml + pw + 35 << "\" y=\"" << ly << "\">" << series[k].label << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::vector<std::string> write_svg_figures(const Scenario& s, const Trajectory& tr, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto c = collect(s, tr);
    const int n = tr.layout.n;
    auto events = s.event_times();
    auto per_bus = [&](const std::vector<std::vector<double>>& col) {
        std::vector<Series> out;
        for (int k = 0; k < n; ++k) out.push_back({"bus " + std::to_string(k + 1), col[k]});
        return out;
    };
    auto errs = per_bus(c.err);
    errs.push_back({"average", c.avg});
    struct Fig {
        std::string file, title, label;
        std::vector<Series> series;
    };
    std::vector<Fig> figs = {
        {"voltages.svg", "Bus voltages", "v (V)", per_bus(c.v)},
        {"errors.svg", "Weighted voltage errors", "h(v_ref - v)", errs},
        {"agent_outputs.svg", "Agent controller outputs", "y_C", per_bus(c.yc)},
        {"setpoints.svg", "Power setpoints", "p_sp (W)", per_bus(c.psp)},
    };
    std::vector<std::string> paths;
    for (const auto& f : figs) {
        auto path = (std::filesystem::path(dir) / f.file).string();
        std::ofstream out(path);
        if (!out) throw std::ios_base::failure("cannot write " + path);
        out << svg_line_chart(f.title, f.label, c.t, f.series, events);
        paths.push_back(path);
    }
    return paths;
}

}  // namespace dcgrid
