#include "dcgrid/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dcgrid/passivity.hpp"

namespace dcgrid {

using nlohmann::json;

std::vector<double> Scenario::event_times() const {
    std::set<double> ts;
    for (double t : grid.switch_times()) ts.insert(t);
    for (const auto& [t, v] : comm.changes) ts.insert(t);
    std::vector<double> out;
    for (double t : ts)
        if (t > 0.0 && t < duration) out.push_back(t);
    return out;
}

std::vector<bool> connected_buses(const Scenario& s, double t) {
    std::vector<bool> c(s.bus_count());
    for (int k = 0; k < s.bus_count(); ++k) c[k] = s.grid.buses[k].connected.at(t);
    return c;
}

Topology active_comm(const Scenario& s, double t) { return s.comm.at(t).restricted(connected_buses(s, t)); }

void Scenario::validate() const {
    grid.validate();
    controller.weighting.validate();
    controller.dda.validate();
    controller.pi.validate();
    if (!(duration > 0)) throw std::invalid_argument("duration must be positive");
    if (!(solver.step > 0 && solver.step <= duration)) throw std::invalid_argument("solver step out of range");
    if (!(solver.tolerance > 0)) throw std::invalid_argument("solver tolerance must be positive");
    if (solver.sample < 0) throw std::invalid_argument("sample interval must be nonnegative");
    const int n = bus_count();
    auto check_topo = [&](const Topology& t) {
        if (t.vertex_count() != n) throw std::invalid_argument("communication topology must cover every bus");
    };
    check_topo(comm.initial);
    for (const auto& [t, g] : comm.changes) check_topo(g);
    for (int m : controller.bypass_pi)
        if (m < 1 || m > n) throw std::invalid_argument("bypass agent id out of range");

    auto check_times = [&](double t) {
        if (t < 0 || t > duration) throw std::invalid_argument("event time outside [0, duration]");
    };
    for (double t : grid.switch_times()) check_times(t);
    for (const auto& [t, g] : comm.changes) check_times(t);

    std::vector<double> starts{0.0};
    for (double t : event_times()) starts.push_back(t);
    for (double t : starts) {
        auto c = configure(grid, t);
        std::vector<int> live;
        bool any_actuated = false;
        for (int k = 0; k < n; ++k) {
            if (!c.connected[k]) continue;
            live.push_back(k + 1);
            any_actuated = any_actuated || c.actuated[k];
        }
        std::ostringstream at;
        at << " at t = " << t;
        if (!any_actuated) throw std::invalid_argument("no actuated connected bus" + at.str());
        if (!is_connected(active_comm(*this, t), live))
            throw std::invalid_argument("communication graph not connected on the connected buses" + at.str());
    }
}

namespace {

constexpr double kRPerKm = 0.1, kLPerKm = 2e-6, kCPerKm = 22e-9;

LineSpec line_from_length(int k, int l, double km) { return {k, l, kRPerKm * km, kLPerKm * km, kCPerKm * km}; }

struct LoadRow {
    double z[5], i[5], p[5];
};

// Per-bus ZIP parameters for the windows starting at 0, 5, 10, 15, 20 s.
const LoadRow kStrict[10] = {
    {{0.103, 0.103, 0.106, 0.106, 0.083}, {4.66, 2.15, -6.08, -6.08, 14.45}, {3599, -4055, 4133, 4133, -4927}},
    {{0.099, 0.099, 0.096, 0.096, 0.080}, {-16.09, -16.09, 19.68, 19.68, 2.49}, {3204, 3204, 2659, 2659, 1346}},
    {{0.128, 0.105, 0.105, 0.105, 0.096}, {10.27, -0.09, -0.09, -0.09, -11.09}, {-1479, -3659, -3659, -3659, 3031}},
    {{0.079, 0.079, 0.079, 0.079, 0.079}, {10.15, 10.15, 10.15, 10.15, 10.15}, {-2711, -2711, -2711, -2711, -2711}},
    {{0.095, 0.095, 0.095, 0.064, 0.107}, {-6.64, -6.64, -6.64, 16.68, 2.10}, {2768, 2768, 2768, -3798, 4242}},
    {{0.089, 0.089, 0.106, 0.103, 0.103}, {6.87, 6.87, 7.85, -5.17, -5.17}, {948, 948, 4321, 370, 370}},
    {{0.065, 0.092, 0.092, 0.118, 0.118}, {11.96, 6.51, 6.51, 2.77, 2.77}, {-3624, -3442, -3442, -3890, -3890}},
    {{0.102, 0.102, 0.086, 0.086, 0.124}, {-16.85, -16.85, 20.71, 20.71, -4.68}, {3529, 3529, -4773, -4773, -3832}},
    {{0.111, 0.103, 0.109, 0.077, 0.077}, {13.79, -19.74, 9.53, 1.26, 1.26}, {-2645, 1830, 4215, 1549, 1549}},
    {{0.072, 0.100, 0.100, 0.111, 0.111}, {7.77, 9.02, 9.02, 10.98, 10.98}, {-3538, -4143, -4143, -2795, -2795}},
};

// Passive variant: Z and I replaced, P shared with the strict table.
const double kPassiveZ[10][5] = {
    {0.091, 0.093, 0.087, 0.087, 0.063}, {0.069, 0.069, 0.071, 0.071, 0.046}, {0.095, 0.082, 0.082, 0.082, 0.059},
    {0.038, 0.038, 0.038, 0.038, 0.038}, {0.065, 0.065, 0.065, 0.027, 0.078}, {0.071, 0.071, 0.089, 0.102, 0.102},
    {0.029, 0.070, 0.070, 0.079, 0.079}, {0.075, 0.075, 0.057, 0.057, 0.111}, {0.105, 0.102, 0.061, 0.036, 0.036},
    {0.042, 0.091, 0.091, 0.088, 0.088},
};
const double kPassiveI[10][5] = {
    {4.66, -8.15, -6.08, -6.08, 9.71}, {-16.09, -16.09, 19.68, 19.68, 0.20}, {8.91, -7.12, -7.12, -7.12, -11.09},
    {8.82, 8.82, 8.82, 8.82, 8.82}, {-6.64, -6.64, -6.64, 15.25, 2.10}, {4.04, 4.04, 7.85, -9.19, -9.19},
    {9.04, 0.89, 0.89, 0.58, 0.58}, {-16.85, -16.85, 20.55, 20.55, -14.31}, {10.71, -19.75, 9.53, -0.05, -0.05},
    {2.53, 2.03, 2.03, 8.34, 8.34},
};

Topology topo(int n, std::initializer_list<std::pair<int, int>> edges) {
    Topology t(n);
    for (auto [k, l] : edges) t.add_edge(k, l);
    return t;
}

}  // namespace

Scenario builtin_scenario_10bus(Variant variant) {
    Scenario s;
    s.name = variant == Variant::strict_passive ? "10bus-strict" : "10bus-passive-ideal";
    s.duration = 25.0;
    const int n = 10;
    const double window[5] = {0, 5, 10, 15, 20};

    auto& g = s.grid;
    g.v_ref = 380.0;
    for (int k = 0; k < n; ++k) {
        BusSpec b;
        b.id = k + 1;
        b.dgu = DguParams{};
        for (int w = 0; w < 5; ++w) {
            ZipLoad z;
            z.p_const = kStrict[k].p[w];
            if (variant == Variant::strict_passive) {
                z.z_inv = kStrict[k].z[w];
                z.i_const = kStrict[k].i[w];
            } else {
                z.z_inv = kPassiveZ[k][w];
                z.i_const = kPassiveI[k][w];
            }
            if (w == 0) b.load.initial = z;
            else b.load.set(window[w], z);
        }
        g.buses.push_back(b);
    }

    // Line order follows the rounded length table.
    const std::vector<std::tuple<int, int, double>> lengths = {
        {1, 2, 1.19}, {1, 4, 7.74}, {2, 3, 2.23}, {2, 4, 7.20}, {3, 5, 3.14}, {3, 8, 2.82}, {4, 5, 3.72},
        {4, 6, 6.75}, {4, 7, 1.16}, {6, 7, 4.44}, {6, 9, 3.11}, {7, 8, 3.69}, {8, 10, 1.21}};
    for (auto [k, l, km] : lengths) g.lines.push_back(line_from_length(k, l, km));
    auto mask_without = [&](std::initializer_list<std::pair<int, int>> out) {
        std::vector<bool> m(g.lines.size(), true);
        for (size_t i = 0; i < g.lines.size(); ++i)
            for (auto [k, l] : out)
                if (g.lines[i].k == k && g.lines[i].l == l) m[i] = false;
        return m;
    };
    auto elec_a = mask_without({{2, 4}, {6, 7}});
    auto elec_b = mask_without({{1, 4}, {4, 5}});
    g.line_in_service.initial = elec_a;
    g.line_in_service.set(15.0, elec_b);
    g.line_in_service.set(20.0, elec_a);

    const std::set<int> act_a{1, 3, 4, 7, 9}, act_b{2, 5, 6, 8, 10};
    for (int k = 0; k < n; ++k) {
        auto& b = g.buses[k];
        b.actuation.initial = act_a.count(k + 1) > 0;
        b.actuation.set(5.0, act_b.count(k + 1) > 0);
        b.actuation.set(20.0, act_a.count(k + 1) > 0);
    }
    g.buses[8].connected.set(5.0, false);
    g.buses[8].connected.set(20.0, true);
    g.buses[9].connected.initial = false;
    g.buses[9].connected.set(10.0, true);
    g.buses[9].connected.set(20.0, false);

    Topology comm_a = topo(n, {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 8}, {8, 1}, {6, 9}});
    Topology comm_b = topo(n, {{1, 3}, {3, 5}, {5, 7}, {7, 1}, {2, 4}, {4, 6}, {6, 8}, {8, 2}, {1, 2}, {8, 10}, {9, 5}});
    s.comm.initial = comm_a;
    s.comm.set(10.0, comm_b);
    s.comm.set(20.0, comm_a);

    s.controller = ControllerParams{};
    if (variant == Variant::passive_ideal) s.controller.pi.tau = 0.0;
    return s;
}

Scenario single_bus_scenario(const ZipLoad& load, double duration) {
    Scenario s;
    s.name = "single-bus";
    s.duration = duration;
    BusSpec b;
    b.id = 1;
    b.dgu = DguParams{};
    b.load.initial = load;
    b.actuation.initial = true;
    s.grid.buses.push_back(b);
    s.comm.initial = Topology(1);
    return s;
}

// ---------------------------------------------------------------- JSON

namespace {

constexpr const char* kSchema = "dcgrid-scenario/1";

json load_json(const ZipLoad& z) {
    return {{"z_inv", z.z_inv}, {"i_const", z.i_const}, {"p_const", z.p_const}, {"v_crit", z.v_crit}};
}

ZipLoad load_from(const json& j) {
    ZipLoad z;
    z.z_inv = j.at("z_inv").get<double>();
    z.i_const = j.at("i_const").get<double>();
    z.p_const = j.at("p_const").get<double>();
    z.v_crit = j.value("v_crit", 266.0);
    return z;
}

template <class T, class F>
json schedule_json(const Piecewise<T>& p, F&& enc) {
    json a = json::array();
    a.push_back({{"t", 0.0}, {"value", enc(p.initial)}});
    for (const auto& [t, v] : p.changes) a.push_back({{"t", t}, {"value", enc(v)}});
    return a;
}

// Accepts either a bare value (constant) or a list of {t, value}.
template <class T, class F>
Piecewise<T> schedule_from(const json& j, F&& dec) {
    Piecewise<T> p;
    if (!j.is_array()) {
        p.initial = dec(j);
        return p;
    }
    bool first = true;
    double last = -1.0;
    for (const auto& e : j) {
        double t = e.at("t").get<double>();
        if (t <= last) throw ParseError("schedule times must be strictly increasing");
        last = t;
        if (first) {
            if (t != 0.0) throw ParseError("schedule must start at t = 0");
            p.initial = dec(e.at("value"));
            first = false;
        } else {
            p.set(t, dec(e.at("value")));
        }
    }
    if (first) throw ParseError("empty schedule");
    return p;
}

json edges_json(const Topology& t) {
    json a = json::array();
    for (const auto& e : t.edges()) {
        if (e.weight == 1.0) a.push_back({e.k, e.l});
        else a.push_back({e.k, e.l, e.weight});
    }
    return a;
}

Topology edges_from(const json& j, int n) {
    Topology t(n);
    for (const auto& e : j) t.add_edge(e.at(0).get<int>(), e.at(1).get<int>(), e.size() > 2 ? e.at(2).get<double>() : 1.0);
    return t;
}

const char* method_name(Integrator m) {
    switch (m) {
        case Integrator::trapezoidal: return "trapezoidal";
        case Integrator::backward_euler: return "backward-euler";
        default: return "tr-bdf2";
    }
}

Integrator method_from(const std::string& s) {
    if (s == "trapezoidal") return Integrator::trapezoidal;
    if (s == "tr-bdf2") return Integrator::trbdf2;
    if (s == "backward-euler") return Integrator::backward_euler;
    throw ParseError("unknown integrator '" + s + "'");
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["schema"] = kSchema;
    j["name"] = s.name;
    j["duration"] = s.duration;
    j["seed"] = s.seed;
    j["v_ref"] = s.grid.v_ref;
    json buses = json::array();
    for (const auto& b : s.grid.buses) {
        json jb{{"id", b.id}, {"c_bus", b.c_bus}};
        if (b.dgu) {
            const auto& d = *b.dgu;
            jb["dgu"] = {{"r_filter", d.r_filter}, {"l_filter", d.l_filter}, {"c_bus", d.c_bus},  {"kp_pwr", d.kp_pwr},
                         {"ki_pwr", d.ki_pwr},     {"r_damp", d.r_damp},     {"v_ref", d.v_ref}};
        } else {
            jb["dgu"] = nullptr;
        }
        jb["load"] = schedule_json(b.load, load_json);
        jb["actuation"] = schedule_json(b.actuation, [](bool v) { return json(v); });
        jb["connected"] = schedule_json(b.connected, [](bool v) { return json(v); });
        buses.push_back(jb);
    }
    j["buses"] = buses;
    json lines = json::array();
    for (const auto& l : s.grid.lines)
        lines.push_back({{"k", l.k}, {"l", l.l}, {"r_line", l.r_line}, {"l_line", l.l_line}, {"c_line", l.c_line}});
    j["lines"] = lines;
    j["topologies"]["electrical"] = schedule_json(s.grid.line_in_service, [](const std::vector<bool>& m) {
        json a = json::array();
        for (bool b : m) a.push_back(b);
        return a;
    });
    j["topologies"]["communication"] = schedule_json(s.comm, edges_json);
    const auto& c = s.controller;
    j["controller"] = {{"weighting", {{"a", c.weighting.a}, {"b", c.weighting.b}, {"c", c.weighting.c}}},
                       {"dda", {{"kp", c.dda.kp}, {"ki", c.dda.ki}, {"g", c.dda.g}}},
                       {"pi", {{"kp", c.pi.kp}, {"ki", c.pi.ki}, {"tau", c.pi.tau}}},
                       {"v_ref", c.v_ref},
                       {"bypass_pi", c.bypass_pi},
                       {"anti_windup", c.anti_windup}};
    j["solver"] = {{"step", s.solver.step},
                   {"tolerance", s.solver.tolerance},
                   {"method", method_name(s.solver.method)},
                   {"sample", s.solver.sample}};
    return j.dump(2);
}

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        std::ostringstream os;
        os << "parse error at line " << line << ", column " << col << ": " << e.what();
        throw ParseError(os.str());
    }
    Scenario s;
    try {
        if (j.value("schema", std::string(kSchema)) != kSchema)
            throw ParseError("unsupported schema '" + j["schema"].get<std::string>() + "'");
        s.name = j.value("name", std::string("scenario"));
        s.duration = j.at("duration").get<double>();
        s.seed = j.value("seed", std::uint64_t{0});
        s.grid.v_ref = j.value("v_ref", 380.0);
        for (const auto& jb : j.at("buses")) {
            BusSpec b;
            b.id = jb.at("id").get<int>();
            b.c_bus = jb.value("c_bus", 2.2e-3);
            if (jb.contains("dgu") && !jb["dgu"].is_null()) {
                const auto& d = jb["dgu"];
                DguParams p;
                p.r_filter = d.value("r_filter", p.r_filter);
                p.l_filter = d.value("l_filter", p.l_filter);
                p.c_bus = d.value("c_bus", p.c_bus);
                p.kp_pwr = d.value("kp_pwr", p.kp_pwr);
                p.ki_pwr = d.value("ki_pwr", p.ki_pwr);
                p.r_damp = d.value("r_damp", p.r_damp);
                p.v_ref = d.value("v_ref", s.grid.v_ref);
                b.dgu = p;
            }
            b.load = schedule_from<ZipLoad>(jb.at("load"), load_from);
            auto as_bool = [](const json& v) { return v.get<bool>(); };
            b.actuation = jb.contains("actuation") ? schedule_from<bool>(jb["actuation"], as_bool) : Piecewise<bool>(false);
            b.connected = jb.contains("connected") ? schedule_from<bool>(jb["connected"], as_bool) : Piecewise<bool>(true);
            s.grid.buses.push_back(std::move(b));
        }
        const int n = s.grid.bus_count();
        for (const auto& jl : j.value("lines", json::array()))
            s.grid.lines.push_back({jl.at("k").get<int>(), jl.at("l").get<int>(), jl.at("r_line").get<double>(),
                                    jl.at("l_line").get<double>(), jl.value("c_line", 0.0)});
        const auto& topo = j.at("topologies");
        if (topo.contains("electrical"))
            s.grid.line_in_service = schedule_from<std::vector<bool>>(
                topo["electrical"], [](const json& v) { return v.get<std::vector<bool>>(); });
        s.comm = schedule_from<Topology>(topo.at("communication"), [n](const json& v) { return edges_from(v, n); });
        if (j.contains("controller")) {
            const auto& c = j["controller"];
            auto& cp = s.controller;
            if (c.contains("weighting")) {
                cp.weighting.a = c["weighting"].value("a", cp.weighting.a);
                cp.weighting.b = c["weighting"].value("b", cp.weighting.b);
                cp.weighting.c = c["weighting"].value("c", cp.weighting.c);
            }
            if (c.contains("dda")) {
                cp.dda.kp = c["dda"].value("kp", cp.dda.kp);
                cp.dda.ki = c["dda"].value("ki", cp.dda.ki);
                cp.dda.g = c["dda"].value("g", cp.dda.g);
            }
            if (c.contains("pi")) {
                cp.pi.kp = c["pi"].value("kp", cp.pi.kp);
                cp.pi.ki = c["pi"].value("ki", cp.pi.ki);
                cp.pi.tau = c["pi"].value("tau", cp.pi.tau);
            }
            cp.v_ref = c.value("v_ref", s.grid.v_ref);
            cp.bypass_pi = c.value("bypass_pi", std::vector<int>{});
            cp.anti_windup = c.value("anti_windup", true);
        } else {
            s.controller.v_ref = s.grid.v_ref;
        }
        if (j.contains("solver")) {
            const auto& so = j["solver"];
            s.solver.step = so.value("step", s.solver.step);
            s.solver.tolerance = so.value("tolerance", s.solver.tolerance);
            s.solver.method = method_from(so.value("method", std::string("tr-bdf2")));
            s.solver.sample = so.value("sample", s.solver.sample);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid scenario: ") + e.what());
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid scenario: ") + e.what());
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write " + path);
    out << scenario_to_json(s) << '\n';
}

// ---------------------------------------------------------------- generator

Scenario generate_scenario(std::uint64_t seed, const GeneratorOptions& opt) {
    if (opt.buses < 2) throw std::invalid_argument("generator needs at least two buses");
    if (opt.windows < 1) throw std::invalid_argument("generator needs at least one window");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> km(0.2, 10.0), zd(0.0, 0.1), id(-21.0, 21.0), pd(-3000.0, 3000.0);
    const int n = opt.buses;

    auto draw_load = [&]() {
        for (;;) {
            ZipLoad z;
            z.z_inv = zd(rng);
            z.i_const = id(rng);
            z.p_const = pd(rng);
            if (load_passivity_index(z) >= opt.min_load_index) return z;
        }
    };

    Scenario s;
    s.name = "generated-" + std::to_string(seed);
    s.seed = seed;
    s.duration = opt.duration;
    for (int k = 0; k < n; ++k) {
        BusSpec b;
        b.id = k + 1;
        b.dgu = DguParams{};
        b.load.initial = draw_load();
        s.grid.buses.push_back(b);
    }
    // Random spanning tree plus a few chords.
    Topology elec(n);
    for (int k = 2; k <= n; ++k) {
        int parent = std::uniform_int_distribution<int>(1, k - 1)(rng);
        elec.add_edge(parent, k);
    }
    for (int extra = 0; extra < n / 3; ++extra) {
        int a = std::uniform_int_distribution<int>(1, n)(rng), b = std::uniform_int_distribution<int>(1, n)(rng);
        if (a != b && !elec.has_edge(a, b)) elec.add_edge(a, b);
    }
    for (const auto& e : elec.edges()) s.grid.lines.push_back(line_from_length(e.k, e.l, km(rng)));

    Topology ring(n);
    for (int k = 1; k <= n; ++k) {
        int l = k % n + 1;
        if (!ring.has_edge(k, l)) ring.add_edge(k, l);
    }
    s.comm.initial = ring;

    const double dt = opt.duration / opt.windows;
    std::vector<int> order(n);
    for (int w = 0; w < opt.windows; ++w) {
        for (int k = 0; k < n; ++k) order[k] = k;
        std::shuffle(order.begin(), order.end(), rng);
        const double t = w * dt;
        // Half the buses actuated, at least one.
        for (int r = 0; r < n; ++r) {
            bool on = r < std::max(1, n / 2);
            auto& b = s.grid.buses[order[r]];
            if (w == 0) b.actuation.initial = on;
            else b.actuation.set(t, on);
        }
        if (w > 0) {
            std::shuffle(order.begin(), order.end(), rng);
            for (int r = 0; r < n / 2; ++r) s.grid.buses[order[r]].load.set(t, draw_load());
        }
    }
    s.validate();
    return s;
}

}  // namespace dcgrid
