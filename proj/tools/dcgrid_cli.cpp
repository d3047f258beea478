// dcgrid: analyse, design, verify and simulate DC microgrid scenarios.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcgrid/audit.hpp"
#include "dcgrid/controller.hpp"
#include "dcgrid/export.hpp"
#include "dcgrid/passivity.hpp"
#include "dcgrid/scenario.hpp"
#include "dcgrid/sim.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace dcgrid;

namespace {

enum Exit { kOk = 0, kInfeasible = 1, kIo = 2, kNumerical = 3 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string scenario;
    std::vector<std::string> overrides;
    bool as_json = false;
    long long seed = -1;
    std::string out;
};

json matrix_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

// Non-finite numbers are not valid JSON; write them as strings.
json num(double x) {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

// key=value overrides address the scenario JSON with dotted paths, e.g.
// controller.pi.tau=0.1 or solver.method=trapezoidal.
void apply_override(json& j, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw IoError("override '" + kv + "' is not key=value");
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    json* node = &j;
    std::stringstream ks(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ks, part, '.')) parts.push_back(part);
    for (size_t k = 0; k + 1 < parts.size(); ++k) {
        if (!node->is_object() || !node->contains(parts[k])) throw IoError("unknown override key '" + key + "'");
        node = &(*node)[parts[k]];
    }
    if (!node->is_object() || !node->contains(parts.back())) throw IoError("unknown override key '" + key + "'");
    json parsed;
    try {
        parsed = json::parse(val);
    } catch (const json::parse_error&) {
        parsed = val;  // bare string
    }
    (*node)[parts.back()] = parsed;
}

Scenario load(const Common& c) {
    Scenario s;
    if (c.scenario == "builtin:strict") s = builtin_scenario_10bus(Variant::strict_passive);
    else if (c.scenario == "builtin:ideal") s = builtin_scenario_10bus(Variant::passive_ideal);
    else {
        if (!fs::exists(c.scenario)) throw IoError("cannot open scenario file '" + c.scenario + "'");
        s = load_scenario(c.scenario);
    }
    if (!c.overrides.empty()) {
        json j = json::parse(scenario_to_json(s));
        for (const auto& o : c.overrides) apply_override(j, o);
        s = parse_scenario(j.dump());
    }
    if (c.seed >= 0) s.seed = static_cast<std::uint64_t>(c.seed);
    s.validate();
    return s;
}

void write_text(const std::string& path, const std::string& text) {
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << text;
}

std::string fmt(double x, int prec = 6) {
    std::ostringstream os;
    os << std::setprecision(prec) << x;
    return os.str();
}

// ---- analysis pipeline shared by analyze, design, verify and report ----

struct AnalyzeOptions {
    OperatingBox box;
    double load_slope = 0.05;
    std::vector<double> dgu_triple{-4.686, -0.01, 0.01};
    bool optimize = false;
};

struct Analysis {
    json report;
    MicrogridIndices mg;
    bool dgu_ok = false;
    bool supply_ok = false;
    Certificate cert;
    std::string error;
};

// Every load a bus can carry over the scenario.
std::vector<ZipLoad> loads_of(const BusSpec& b) {
    std::vector<ZipLoad> v{b.load.initial};
    for (const auto& [t, z] : b.load.changes) v.push_back(z);
    return v;
}

Analysis analyze(const Scenario& s, const AnalyzeOptions& opt) {
    Analysis a;
    json& r = a.report;
    r["scenario"] = s.name;
    r["box"] = {{"v", {opt.box.v.lo, opt.box.v.hi}}, {"i_eq", {opt.box.i_eq.lo, opt.box.i_eq.hi}}};

    std::vector<double> rho_loads, rho_lines;
    json loads = json::array();
    double slope_hi = opt.load_slope;
    for (const auto& b : s.grid.buses) {
        double worst = kInf;
        json flagged = json::array();
        for (const auto& z : loads_of(b)) {
            worst = std::min(worst, load_passivity_index(z, opt.box.v));
            slope_hi = std::max(slope_hi, max_load_slope(z, opt.box.v));
            if (z.z_inv * z.v_crit * z.v_crit < z.p_const)
                flagged.push_back({{"z_inv", z.z_inv}, {"i", z.i_const}, {"p", z.p_const}});
        }
        rho_loads.push_back(worst);
        json e{{"bus", b.id}, {"rho", worst}, {"strictly_passive", flagged.empty()}};
        if (!flagged.empty()) e["non_strict_loads"] = flagged;
        loads.push_back(e);
    }
    r["loads"] = loads;

    json lines = json::array();
    for (const auto& l : s.grid.lines) {
        rho_lines.push_back(line_passivity_index(l));
        lines.push_back({{"k", l.k}, {"l", l.l}, {"rho", rho_lines.back()}});
    }
    r["lines"] = lines;

    const DguParams* p = nullptr;
    for (const auto& b : s.grid.buses)
        if (b.dgu) {
            p = &*b.dgu;
            break;
        }
    std::vector<DguIndices> dgus;
    json dj;
    if (p) {
        try {
            DguIndices idx;
            double margin;
            if (opt.optimize) {
                DguSearchOptions o;
                o.form = StorageForm::mass_weighted;
                o.load_slope_hi = slope_hi;
                o.nu2_lower = -*std::min_element(rho_lines.begin(), rho_lines.end());
                idx = dgu_passivity_indices(*p, opt.box, opt.load_slope, o);
                margin = check_dgu_lmi(*p, idx, opt.box, opt.load_slope, slope_hi);
            } else {
                auto res = audit_dgu_weight(s, opt.box, opt.load_slope, opt.dgu_triple[0], opt.dgu_triple[1],
                                            opt.dgu_triple[2]);
                idx = res.idx;
                margin = res.margin;
            }
            a.dgu_ok = margin < 0.0;
            dj = {{"nu1", idx.nu1}, {"nu2", idx.nu2}, {"rho", idx.rho}, {"margin", num(margin)},
                  {"load_slope", {opt.load_slope, slope_hi}}, {"certified", a.dgu_ok}, {"P", matrix_json(Eigen::MatrixXd(idx.P))}};
            if (a.dgu_ok)
                for (const auto& b : s.grid.buses)
                    if (b.dgu) dgus.push_back(idx);
        } catch (const DguInfeasible& e) {
            dj = {{"certified", false}, {"error", e.what()}};
        }
    } else {
        dj = {{"certified", false}, {"error", "scenario has no DGU"}};
    }
    r["dgu"] = dj;

    try {
        a.mg = microgrid_supply(dgus, rho_loads, rho_lines);
        a.supply_ok = a.dgu_ok;
    } catch (const SupplyConditionError& e) {
        a.error = e.what();
    }
    r["microgrid"] = {{"nu1", num(a.mg.nu1)},         {"nu2", num(a.mg.nu2)},
                      {"rho_dgu", num(a.mg.rho_dgu)}, {"rho_load", num(a.mg.rho_load)},
                      {"rho_line", num(a.mg.rho_line)}};
    if (a.supply_ok) {
        a.cert = actuation_independent_certificate(a.mg);
    } else {
        a.cert.failures.push_back(a.error.empty() ? "DGU indices not certified" : a.error);
    }
    r["certificate"] = {{"issued", a.cert.issued}, {"failures", a.cert.failures}};
    return a;
}

void print_analysis(const json& r, std::ostream& os) {
    os << "scenario " << r["scenario"].get<std::string>() << "\n";
    os << "loads (rho over the voltage box):\n";
    for (const auto& l : r["loads"]) {
        os << "  bus " << l["bus"] << "  rho " << fmt(l["rho"].get<double>());
        if (!l["strictly_passive"].get<bool>()) os << "  NON-STRICT (Z*vc^2 < P)";
        os << "\n";
    }
    os << "lines:\n";
    for (const auto& l : r["lines"])
        os << "  " << l["k"] << "-" << l["l"] << "  rho " << fmt(l["rho"].get<double>()) << "\n";
    const auto& d = r["dgu"];
    if (d.contains("nu1")) {
        os << "dgu: nu1 " << fmt(d["nu1"].get<double>()) << "  nu2 " << fmt(d["nu2"].get<double>()) << "  rho "
           << fmt(d["rho"].get<double>()) << "  margin " << (d["margin"].is_number() ? fmt(d["margin"].get<double>(), 4) : d["margin"].dump()) << "  "
           << (d["certified"].get<bool>() ? "certified" : "NOT certified") << "\n  P =";
        for (const auto& row : d["P"]) {
            os << "\n   ";
            for (const auto& x : row) os << " " << std::setw(12) << fmt(x.get<double>(), 4);
        }
        os << "\n";
    } else {
        os << "dgu: " << d["error"].get<std::string>() << "\n";
    }
    const auto& m = r["microgrid"];
    os << "worst case: nu1 " << m["nu1"] << "  nu2 " << m["nu2"] << "  rho_dgu " << m["rho_dgu"] << "  rho_load "
       << m["rho_load"] << "  rho_line " << m["rho_line"] << "\n";
    if (r["certificate"]["issued"].get<bool>()) os << "certificate: issued\n";
    else {
        os << "certificate: NOT issued\n";
        for (const auto& f : r["certificate"]["failures"]) os << "  " << f.get<std::string>() << "\n";
    }
}

json certificate_json(const StabilityCertificate& c) {
    return {{"feasible", c.feasible}, {"max_eigenvalue", num(c.max_eigenvalue)}, {"d", vector_json(c.d)}};
}

void print_certificate(const StabilityCertificate& c, std::ostream& os) {
    os << "d =";
    for (Eigen::Index k = 0; k < c.d.size(); ++k) os << " " << fmt(c.d[k]);
    os << "\nmax eigenvalue of Q: " << fmt(c.max_eigenvalue) << "\n";
    os << (c.feasible ? "interconnection certified\n" : "interconnection NOT certified\n");
}

json verify(const Scenario& s, const Analysis& a, StabilityCertificate& cert) {
    const auto& c = s.controller;
    cert = certify_weighting(a.mg, dda_supply_rate(), pi_supply_rate(c.pi), c.pi.kp, c.weighting);
    json r{{"a", c.weighting.a}, {"b", c.weighting.b}};
    r["certificate"] = certificate_json(cert);
    return r;
}

// ---- simulation ----

struct SimOptions {
    std::string csv, svg;
    bool audit = false;
    double t_end = -1.0;
};

struct SimResult {
    json summary;
    bool audit_ok = true;
};

SimResult simulate(const Scenario& s, const SimOptions& opt, std::ostream* text) {
    SimResult res;
    RunOptions ro;
    ro.t_end = opt.t_end;
    Trajectory tr = run(s, ro);
    json& j = res.summary;
    j["steps"] = tr.steps;
    j["newton_iterations"] = tr.newton_iterations;
    j["step_splits"] = tr.step_splits;
    json win = json::array();
    bool ideal = s.controller.pi.tau == 0.0;
    for (const auto& w : window_summaries(s, tr)) {
        json e{{"t0", w.t0},          {"t1", w.t1},     {"avg_error", w.avg_error},
               {"predicted", w.predicted}, {"spread", w.spread}, {"mean_abs_sp", w.mean_abs_sp},
               {"quasi_steady", w.quasi_steady}};
        if (ideal) e["regulated"] = std::abs(w.avg_error) < 1e-3;
        else if (std::abs(w.predicted) > 0)
            e["offset_rel_diff"] = std::abs(w.avg_error - w.predicted) / std::abs(w.predicted);
        win.push_back(e);
    }
    j["windows"] = win;
    if (text) {
        *text << "simulated " << tr.t.back() << " s in " << tr.steps << " steps (" << tr.step_splits
              << " step splits)\n";
        *text << "   window        avg error   predicted   spread      mean|p_sp|  steady\n";
        for (const auto& w : win) {
            *text << "  " << std::setw(5) << fmt(w["t0"].get<double>()) << "-" << std::setw(5) << std::left
                  << fmt(w["t1"].get<double>()) << std::right << std::setw(11) << fmt(w["avg_error"].get<double>(), 5)
                  << std::setw(12) << fmt(w["predicted"].get<double>(), 5) << std::setw(12)
                  << fmt(w["spread"].get<double>(), 3) << std::setw(12) << fmt(w["mean_abs_sp"].get<double>(), 5)
                  << "  " << (w["quasi_steady"].get<bool>() ? "yes" : "no") << "\n";
        }
    }
    if (!opt.csv.empty()) {
        if (auto dir = fs::path(opt.csv).parent_path(); !dir.empty()) fs::create_directories(dir);
        write_csv(s, tr, opt.csv);
        j["csv"] = opt.csv;
    }
    if (!opt.svg.empty()) {
        fs::create_directories(opt.svg);
        j["svg"] = write_svg_figures(s, tr, opt.svg);
    }
    if (opt.audit) {
        AuditOptions ao;
        auto rep = dissipation_audit(s, tr, ao);
        json entries = json::array();
        int violations = 0;
        for (const auto& e : rep.entries) {
            bool bad = e.normalized() > ao.tolerance;
            violations += bad;
            entries.push_back({{"name", e.name},
                               {"max_excess", num(e.max_excess)},
                               {"normalized", num(e.normalized())},
                               {"samples", e.samples},
                               {"violation", bad}});
        }
        res.audit_ok = violations == 0;
        j["audit"] = {{"violations", violations},
                      {"composite_samples", rep.composite_samples},
                      {"composite_skipped", rep.composite_skipped},
                      {"notes", rep.notes},
                      {"entries", entries}};
        if (text) {
            for (const char* g : {"load.", "line.", "dda.", "pi.", "dgu.", "microgrid."})
                *text << "  audit " << std::setw(11) << std::left << g << std::right << " worst normalized excess "
                      << fmt(rep.worst(g), 3) << "\n";
            for (const auto& e : rep.entries)
                if (e.normalized() > ao.tolerance) *text << "  VIOLATION " << e.name << " " << e.normalized() << "\n";
            for (const auto& n : rep.notes) *text << "  note: " << n << "\n";
            *text << "dissipation violations: " << violations << "\n";
        }
    }
    return res;
}

std::string write_snapshot(const Scenario& s, const IntegrationError& e, const std::string& out_dir) {
    std::string path = (fs::path(out_dir.empty() ? "." : out_dir) / "snapshot.json").string();
    json j{{"scenario", s.name}, {"t", e.t}, {"error", e.what()}, {"state", vector_json(e.x)}};
    write_text(path, j.dump(2) + "\n");
    return path;
}

// ---- subcommands ----

void add_common(CLI::App* c, Common& o, bool needs_scenario = true) {
    if (needs_scenario)
        c->add_option("scenario", o.scenario, "scenario JSON file, builtin:strict or builtin:ideal")->required();
    c->add_option("--set", o.overrides, "override a scenario field, key=value with dotted keys");
    c->add_option("-o,--out", o.out, "output path or directory");
}

void add_analyze_options(CLI::App* c, AnalyzeOptions& a) {
    c->add_option("--load-slope", a.load_slope, "lower load slope bound used for the DGU certificate");
    c->add_option("--dgu-indices", a.dgu_triple, "DGU triple nu1 nu2 rho to certify")->expected(3);
    c->add_flag("--optimize", a.optimize, "optimise the DGU indices instead of certifying a given triple");
}

int emit(const Common& c, const json& j, const std::string& text) {
    if (c.as_json) std::cout << j.dump(2) << "\n";
    else std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DC microgrid passivity workbench"};
    app.require_subcommand(1);
    app.fallthrough();
    Common com;
    app.add_flag("--json", com.as_json, "machine-readable output");
    app.add_option("--seed", com.seed, "seed for generated content");

    AnalyzeOptions aopt;
    SimOptions sopt;
    GeneratorOptions gopt;
    std::string builtin;

    auto* c_an = app.add_subcommand("analyze", "subsystem passivity indices and the microgrid certificate");
    add_common(c_an, com);
    add_analyze_options(c_an, aopt);

    auto* c_de = app.add_subcommand("design", "design the weighting function and write a patched scenario");
    add_common(c_de, com);
    add_analyze_options(c_de, aopt);

    auto* c_ve = app.add_subcommand("verify", "certify the closed loop with the scenario's weighting function");
    add_common(c_ve, com);
    add_analyze_options(c_ve, aopt);

    auto* c_si = app.add_subcommand("simulate", "run a scenario");
    add_common(c_si, com);
    c_si->add_option("--csv,--export-csv", sopt.csv, "trajectory CSV path");
    c_si->add_option("--svg,--export-svg", sopt.svg, "directory for SVG charts");
    c_si->add_flag("--audit", sopt.audit, "check the dissipation inequalities along the run");
    c_si->add_option("--t-end", sopt.t_end, "stop early");

    auto* c_ge = app.add_subcommand("scenario-gen", "write a random or builtin scenario");
    add_common(c_ge, com, false);
    c_ge->add_option("--buses", gopt.buses)->check(CLI::Range(2, 200));
    c_ge->add_option("--duration", gopt.duration)->check(CLI::PositiveNumber);
    c_ge->add_option("--windows", gopt.windows)->check(CLI::Range(1, 100));
    c_ge->add_option("--min-load-index", gopt.min_load_index);
    c_ge->add_option("--builtin", builtin, "export a builtin scenario instead")->check(CLI::IsMember({"strict", "ideal"}));

    auto* c_re = app.add_subcommand("report", "analysis, verification and an audited run written to a directory");
    add_common(c_re, com);
    add_analyze_options(c_re, aopt);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_ge->parsed()) {
            Scenario s;
            if (builtin == "strict") s = builtin_scenario_10bus(Variant::strict_passive);
            else if (builtin == "ideal") s = builtin_scenario_10bus(Variant::passive_ideal);
            else s = generate_scenario(com.seed >= 0 ? static_cast<std::uint64_t>(com.seed) : 0, gopt);
            for (const auto& o : com.overrides) {
                json j = json::parse(scenario_to_json(s));
                apply_override(j, o);
                s = parse_scenario(j.dump());
            }
            std::string text = scenario_to_json(s);
            if (com.out.empty()) std::cout << text;
            else {
                write_text(com.out, text);
                std::cerr << "wrote " << com.out << "\n";
            }
            return kOk;
        }

        Scenario s = load(com);

        if (c_an->parsed()) {
            auto a = analyze(s, aopt);
            std::ostringstream os;
            print_analysis(a.report, os);
            emit(com, a.report, os.str());
            return a.cert.issued ? kOk : kInfeasible;
        }

        if (c_de->parsed()) {
            if (s.controller.pi.tau == 0.0) {
                std::string msg =
                    "design refused: tau = 0 makes the PI stage an ideal integrator (input feedforward passive) that "
                    "feeds an output feedback passive stage in an exclusive cascade, which no weighting can "
                    "certify; use a leaky integrator (tau > 0)";
                if (com.as_json) std::cout << json{{"refused", true}, {"reason", msg}}.dump(2) << "\n";
                else std::cout << msg << "\n";
                return kInfeasible;
            }
            auto a = analyze(s, aopt);
            json j{{"analysis", a.report}};
            std::ostringstream os;
            if (!a.supply_ok) {
                os << "microgrid indices unavailable: " << a.cert.failures.front() << "\n";
                j["design"] = {{"feasible", false}};
                emit(com, j, os.str());
                return kInfeasible;
            }
            const auto& c = s.controller;
            auto d = design_weighting(a.mg, dda_supply_rate(), pi_supply_rate(c.pi), c.pi.kp, c.weighting.c);
            j["design"] = {{"feasible", d.feasible},
                           {"a", d.w.a},
                           {"b", d.w.b},
                           {"eps_in", d.eps_in},
                           {"eps_out", d.eps_out},
                           {"certificate", certificate_json(d.cert)}};
            if (!d.note.empty()) j["design"]["note"] = d.note;
            if (d.feasible) {
                os << "weighting: a = " << fmt(d.w.a, 8) << "  b = " << fmt(d.w.b, 8) << "\n";
                print_certificate(d.cert, os);
                Scenario patched = s;
                patched.controller.weighting = d.w;
                std::string out = com.out.empty() ? s.name + ".designed.json" : com.out;
                write_text(out, scenario_to_json(patched));
                j["patched_scenario"] = out;
                os << "wrote " << out << "\n";
            } else {
                os << "design infeasible: " << d.note << "\n";
            }
            emit(com, j, os.str());
            return d.feasible ? kOk : kInfeasible;
        }

        if (c_ve->parsed()) {
            auto a = analyze(s, aopt);
            json j{{"analysis", a.report}};
            std::ostringstream os;
            if (!a.supply_ok) {
                os << "microgrid indices unavailable: " << a.cert.failures.front() << "\n";
                emit(com, j, os.str());
                return kInfeasible;
            }
            StabilityCertificate cert;
            j["verify"] = verify(s, a, cert);
            os << "weighting a = " << s.controller.weighting.a << "  b = " << s.controller.weighting.b << "\n";
            print_certificate(cert, os);
            emit(com, j, os.str());
            return cert.feasible ? kOk : kInfeasible;
        }

        if (c_si->parsed()) {
            std::ostringstream os;
            SimResult r;
            try {
                r = simulate(s, sopt, com.as_json ? nullptr : &os);
            } catch (const IntegrationError& e) {
                std::string snap = write_snapshot(s, e, com.out);
                std::cerr << "integration failed at t = " << e.t << ": " << e.what() << "; snapshot " << snap << "\n";
                return kNumerical;
            }
            emit(com, r.summary, os.str());
            return r.audit_ok ? kOk : kInfeasible;
        }

        if (c_re->parsed()) {
            fs::path dir = com.out.empty() ? fs::path(s.name + "-report") : fs::path(com.out);
            fs::create_directories(dir);
            auto a = analyze(s, aopt);
            json j{{"analysis", a.report}};
            std::ostringstream os;
            print_analysis(a.report, os);
            bool ok = a.cert.issued;
            if (a.supply_ok) {
                StabilityCertificate cert;
                j["verify"] = verify(s, a, cert);
                print_certificate(cert, os);
                ok = ok && cert.feasible;
            }
            SimOptions so;
            so.csv = (dir / "trajectory.csv").string();
            so.svg = dir.string();
            so.audit = true;
            try {
                auto r = simulate(s, so, &os);
                j["simulation"] = r.summary;
                ok = ok && r.audit_ok;
            } catch (const IntegrationError& e) {
                std::string snap = write_snapshot(s, e, dir.string());
                std::cerr << "integration failed at t = " << e.t << "; snapshot " << snap << "\n";
                return kNumerical;
            }
            write_text((dir / "report.json").string(), j.dump(2) + "\n");
            write_text((dir / "report.txt").string(), os.str());
            emit(com, j, os.str());
            std::cerr << "wrote " << dir.string() << "\n";
            return ok ? kOk : kInfeasible;
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return kIo;
    } catch (const json::exception& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid scenario: " << e.what() << "\n";
        return kIo;
    } catch (const EquilibriumError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    }
    return kOk;
}
