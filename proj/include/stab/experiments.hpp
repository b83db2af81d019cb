#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stab/convergence.hpp"
#include "stab/fem.hpp"
#include "stab/mesh.hpp"
#include "stab/riccati.hpp"
#include "stab/spectral.hpp"
#include "stab/timestepper.hpp"

namespace stab {

struct RegionSpec {
    bool full = true;
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

    ControlRegion realize(const Mesh& mesh) const {
        return full ? ControlRegion::full_domain(mesh) : ControlRegion::rectangle(mesh, x0, x1, y0, y1);
    }
};

/// How initial data enter the finite element space.
enum class InitialTransfer { interpolate, project };

struct ExperimentConfig {
    ModelParams params;
    MeshFamily family = MeshFamily::crisscross;
    std::vector<int> levels{2, 3, 4, 5, 6};
    double dt = 1e-3;
    double t_final = 2.0;
    double eval_time = 0.1;
    RegionSpec region;
    std::string y0 = "polynomial-bump";
    std::string z0 = "sine";
    InitialTransfer transfer = InitialTransfer::interpolate;
    std::string output_dir = "out";
    double unstable_tol = 1e-9;
    double hautus_tol = 1e-3;

    void validate() const {
        params.validate();
        require(!levels.empty(), "at least one level is required");
        for (std::size_t i = 0; i < levels.size(); ++i) {
            require(levels[i] >= 1, "levels must be >= 1");
            if (i > 0) require(levels[i] > levels[i - 1], "levels must be strictly ascending");
        }
        require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
        require(t_final >= dt && std::isfinite(t_final), "t_final must be at least dt");
        require(eval_time > 0.0 && eval_time <= t_final, "eval_time must lie in (0, t_final]");
        require(unstable_tol >= 0.0, "unstable_tol must be nonnegative");
        if (!region.full)
            require(region.x0 < region.x1 && region.y0 < region.y1, "control rectangle must have x0 < x1, y0 < y1");
    }
};

/// Built-in initial data registry.
inline ScalarField initial_field(const std::string& name) {
    using std::numbers::pi;
    if (name == "polynomial-bump") return [](double x, double y) { return x * (1 - x) * y * (1 - y); };
    if (name == "sine") return [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); };
    if (name == "zero") return [](double, double) { return 0.0; };
    throw InvalidInput("unknown initial data '" + name + "' (expected polynomial-bump, sine or zero)");
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw InvalidInput("'" + key + "': expected a number, got '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(x)) throw InvalidInput("'" + key + "': expected a number, got '" + v + "'");
    return x;
}

inline int parse_int(const std::string& key, const std::string& v) {
    const double x = parse_real(key, v);
    if (x != std::floor(x) || std::abs(x) > 1e6) throw InvalidInput("'" + key + "': expected an integer, got '" + v + "'");
    return static_cast<int>(x);
}

/// "2..7", "2 3 4" or "2, 3, 4".
inline std::vector<int> parse_levels(const std::string& v) {
    const auto dots = v.find("..");
    std::vector<int> out;
    if (dots != std::string::npos) {
        const int a = parse_int("levels", trim(v.substr(0, dots)));
        const int b = parse_int("levels", trim(v.substr(dots + 2)));
        require(a <= b, "levels range must ascend");
        for (int l = a; l <= b; ++l) out.push_back(l);
        return out;
    }
    std::string s = v;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(parse_int("levels", tok));
    return out;
}

}  // namespace detail

/// Sectioned `key = value` text; `#` starts a comment.
inline ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig c;
    std::string section, line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw InvalidInput("line " + std::to_string(lineno) + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidInput("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        const std::string where = section + "." + key;
        auto real = [&] { return detail::parse_real(where, val); };
        if (section == "model") {
            if (key == "eta0") c.params.eta0 = real();
            else if (key == "beta0") c.params.beta0 = real();
            else if (key == "kappa") c.params.kappa = real();
            else if (key == "nu0") c.params.nu0 = real();
            else if (key == "eta1") c.params.eta1 = real();
            else if (key == "omega") c.params.omega = real();
            else throw InvalidInput("unknown key '" + where + "'");
        } else if (section == "discretization") {
            if (key == "mesh") {
                if (val == "crisscross") c.family = MeshFamily::crisscross;
                else if (val == "diagonal") c.family = MeshFamily::diagonal;
                else throw InvalidInput("'" + where + "': expected crisscross or diagonal");
            } else if (key == "levels") c.levels = detail::parse_levels(val);
            else if (key == "dt") c.dt = real();
            else if (key == "t_final") c.t_final = real();
            else if (key == "eval_time") c.eval_time = real();
            else throw InvalidInput("unknown key '" + where + "'");
        } else if (section == "control") {
            if (key == "region") {
                std::istringstream rs(val);
                std::string kind;
                rs >> kind;
                if (kind == "full") {
                    c.region = RegionSpec{};
                } else if (kind == "rect") {
                    std::string a, b, d, e, extra;
                    if (!(rs >> a >> b >> d >> e) || (rs >> extra))
                        throw InvalidInput("'" + where + "': expected 'rect x0 x1 y0 y1'");
                    c.region.full = false;
                    c.region.x0 = detail::parse_real(where, a);
                    c.region.x1 = detail::parse_real(where, b);
                    c.region.y0 = detail::parse_real(where, d);
                    c.region.y1 = detail::parse_real(where, e);
                } else {
                    throw InvalidInput("'" + where + "': expected 'full' or 'rect x0 x1 y0 y1'");
                }
            } else if (key == "unstable_tol") c.unstable_tol = real();
            else if (key == "hautus_tol") c.hautus_tol = real();
            else throw InvalidInput("unknown key '" + where + "'");
        } else if (section == "initial") {
            auto named = [&] {
                initial_field(val);
                return val;
            };
            if (key == "y0") c.y0 = named();
            else if (key == "z0") c.z0 = named();
            else if (key == "transfer") {
                if (val == "interpolate") c.transfer = InitialTransfer::interpolate;
                else if (val == "project") c.transfer = InitialTransfer::project;
                else throw InvalidInput("'" + where + "': expected interpolate or project");
            }
            else throw InvalidInput("unknown key '" + where + "'");
        } else if (section == "output") {
            if (key == "dir") c.output_dir = val;
            else throw InvalidInput("unknown key '" + where + "'");
        } else {
            throw InvalidInput("line " + std::to_string(lineno) + ": key outside a known section");
        }
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open config file " + path);
    return parse_config(is);
}

struct Stabilization {
    std::vector<EigenPair> pairs;
    UnstableBasis basis;
    HautusReport hautus;
    ProjectedSystem projected;
    RiccatiSolution riccati;
    FeedbackGain gain;
};

/// Eigenpairs, unstable bases, Hautus test, projected Riccati solve and feedback gain.
inline Stabilization stabilize(const BlockSystem& sys, double unstable_tol = 1e-9, double hautus_tol = 1e-3,
                               std::ostream* log = &std::cerr) {
    Stabilization st;
    int count = std::min(2 * sys.n, 6);
    for (;;) {
        EigOptions opt;
        st.pairs = discrete_eigs(sys, count, opt);
        if (st.pairs.back().value.real() <= -unstable_tol || count == 2 * sys.n) break;
        count = std::min(2 * sys.n, 2 * count);
    }
    st.basis = unstable_basis(st.pairs, unstable_tol);
    if (st.basis.count == 0) {
        if (log) *log << "notice: no unstable eigenvalues, feedback is zero (open loop)\n";
        return st;
    }
    biorthonormalize(st.basis, sys.M);
    st.hautus = hautus_check(sys, st.basis, hautus_tol, log);
    if (!st.hautus.ok) {
        std::ostringstream msg;
        msg << "Hautus test failed: control does not reach every unstable mode (ratios";
        for (double r : st.hautus.ratios) msg << ' ' << r;
        msg << ", threshold " << hautus_tol << ")";
        throw NumericalError(msg.str());
    }
    st.projected = project_system(sys, st.basis);
    st.riccati = solve_projected_are(st.projected);
    st.gain = feedback_gain(st.riccati, st.projected, st.basis, sys.M);
    return st;
}

struct ConvergenceRow {
    double h = 0.0;
    std::vector<double> errors;
    std::vector<Order> orders;
};

struct ConvergenceTable {
    std::vector<std::string> names;
    std::vector<ConvergenceRow> rows;

    void fill_orders() {
        std::vector<double> hs;
        for (const auto& r : rows) hs.push_back(r.h);
        for (auto& r : rows) r.orders.assign(names.size(), std::nullopt);
        if (rows.empty()) return;
        for (std::size_t q = 0; q < names.size(); ++q) {
            std::vector<double> e;
            for (const auto& r : rows) e.push_back(r.errors[q]);
            const auto o = compute_order(e, hs, nullptr);
            for (std::size_t i = 0; i < rows.size(); ++i) rows[i].orders[q] = o[i];
        }
    }
};

struct OutputOptions {
    int precision = 8;
    std::string dump_riccati;
    std::ostream* out = &std::cout;
    std::ostream* log = &std::cerr;
};

namespace detail {

inline std::string fmt(double x, int precision) {
    x += 0.0;  // no "-0"
    std::ostringstream os;
    os << std::setprecision(precision) << x;
    return os.str();
}

inline std::string fmt(const Order& o, int precision) { return o ? fmt(*o, precision) : std::string(); }

inline std::filesystem::path prepare_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InvalidInput("cannot create output directory " + dir + ": " + ec.message());
    return std::filesystem::path(dir);
}

inline void write_table_csv(const ConvergenceTable& t, const std::string& path, int precision) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path + " for writing");
    os << "h";
    for (const auto& n : t.names) os << ",err_" << n << ",order_" << n;
    os << '\n';
    for (const auto& r : t.rows) {
        os << fmt(r.h, precision);
        for (std::size_t q = 0; q < t.names.size(); ++q)
            os << ',' << fmt(r.errors[q], precision) << ',' << fmt(r.orders[q], precision);
        os << '\n';
    }
}

inline void dump_riccati(const std::string& dir, int level, const Stabilization& st) {
    if (dir.empty() || st.basis.count == 0) return;
    const auto d = prepare_dir(dir);
    const std::string sfx = "_L" + std::to_string(level) + ".mtx";
    write_matrix_market((d / ("Au" + sfx)).string(), st.projected.Au);
    write_matrix_market((d / ("Bu" + sfx)).string(), st.projected.Bu);
    write_matrix_market((d / ("Qu" + sfx)).string(), st.projected.Qu);
    write_matrix_market((d / ("P" + sfx)).string(), st.riccati.P);
}

}  // namespace detail

inline std::vector<EigTarget> table_targets() { return {{1, 1, true}, {1, 1, false}, {1, 2, true}}; }

inline std::vector<EigStudyRow> cmd_eigs(const ExperimentConfig& cfg, const OutputOptions& io = {}) {
    const auto rows = eig_convergence_study(cfg.params, cfg.levels, table_targets(), cfg.family);
    const auto dir = detail::prepare_dir(cfg.output_dir);
    const std::string path = (dir / "eigs.csv").string();
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path + " for writing");
    const int p = io.precision;
    os << "j,k,branch,level,h,Re(eig),Im(eig),abs_error,order\n";
    for (const auto& r : rows)
        os << r.target.m << ',' << r.target.n << ',' << (r.target.plus ? '+' : '-') << ',' << r.level << ',' << detail::fmt(r.h, p) << ',' << detail::fmt(r.discrete.real(), p)
           << ',' << detail::fmt(r.discrete.imag(), p) << ',' << detail::fmt(r.error, p) << ','
           << detail::fmt(r.order, p) << '\n';
    if (io.out) {
        auto& o = *io.out;
        o << std::left << std::setw(10) << "target" << std::setw(12) << "h" << std::setw(24) << "eigenvalue"
          << std::setw(14) << "error" << "order\n";
        for (const auto& r : rows) {
            std::ostringstream ev;
            ev << std::fixed << std::setprecision(5) << r.discrete.real() << (r.discrete.imag() < 0 ? " - " : " + ")
               << std::abs(r.discrete.imag()) << "i";
            o << std::setw(10) << r.target.label() << std::setw(12) << ("1/2^" + std::to_string(r.level))
              << std::setw(24) << ev.str() << std::setw(14) << detail::fmt(r.error, 6) << detail::fmt(r.order, 6)
              << '\n';
        }
    }
    return rows;
}

struct LevelRun {
    Mesh mesh;
    BlockSystem sys;
    Stabilization stab;
    TimeSeries series;
};

inline LevelRun run_level(const ExperimentConfig& cfg, int level, bool controlled, double t_final,
                          const std::vector<double>& checkpoints, const OutputOptions& io) {
    LevelRun r;
    r.mesh = build_mesh(cfg.family, level);
    r.sys = assemble_block_system(r.mesh, cfg.params, cfg.region.realize(r.mesh));
    if (controlled) {
        r.stab = stabilize(r.sys, cfg.unstable_tol, cfg.hautus_tol, io.log);
        detail::dump_riccati(io.dump_riccati, level, r.stab);
    }
    const ScalarField f = initial_field(cfg.y0), g = initial_field(cfg.z0);
    const Vector y0 = cfg.transfer == InitialTransfer::project ? l2_project_initial(r.mesh, f, g)
                                                               : interpolate_initial(r.mesh, f, g);
    r.series = simulate(r.sys, controlled ? &r.stab.gain : nullptr, y0, cfg.dt, t_final, checkpoints);
    return r;
}

inline std::vector<int> selected_levels(const ExperimentConfig& cfg, std::optional<int> level) {
    if (!level) return cfg.levels;
    require(*level >= 1, "--level must be >= 1");
    return {*level};
}

inline std::vector<TimeSeries> cmd_simulate(const ExperimentConfig& cfg, bool controlled, std::optional<int> level = {},
                                            const OutputOptions& io = {}) {
    const auto dir = detail::prepare_dir(cfg.output_dir);
    std::vector<TimeSeries> out;
    for (int l : selected_levels(cfg, level)) {
        LevelRun r = run_level(cfg, l, controlled, cfg.t_final, {}, io);
        const std::string name =
            std::string("energy_") + (controlled ? "controlled" : "uncontrolled") + "_L" + std::to_string(l) + ".csv";
        write_time_series_csv(r.series, (dir / name).string(), io.precision);
        if (io.out) {
            *io.out << name << ": " << r.series.times.size() << " samples, state energy "
                    << detail::fmt(r.series.state_energy.front(), 6) << " -> "
                    << detail::fmt(r.series.state_energy.back(), 6);
            if (controlled) *io.out << ", unstable modes " << r.stab.basis.count;
            *io.out << '\n';
        }
        out.push_back(std::move(r.series));
    }
    return out;
}

inline const std::vector<std::string>& table2_names() {
    static const std::vector<std::string> names{"L2_y", "H1_y", "L2_z", "H1_z", "L2_u"};
    return names;
}

/// Inter-level errors of the stabilized solution at eval_time, measured on the finer mesh.
inline ConvergenceTable cmd_convergence(const ExperimentConfig& cfg, const OutputOptions& io = {}) {
    require(cfg.levels.size() >= 2, "convergence study needs at least two levels");
    for (std::size_t i = 1; i < cfg.levels.size(); ++i)
        require(cfg.levels[i] == cfg.levels[i - 1] + 1, "convergence study needs consecutive (nested) levels");
    struct Snapshot {
        Mesh mesh;
        SparseMatrix G, K, G_O;
        Vector y, z, u;
    };
    std::vector<Snapshot> snaps;
    for (int l : cfg.levels) {
        LevelRun r = run_level(cfg, l, true, cfg.eval_time, {cfg.eval_time}, io);
        if (r.series.checkpoints.empty()) throw NumericalError("missing checkpoint at eval_time");
        const Vector& Y = r.series.checkpoints.back().second;
        Snapshot s;
        const int n = r.sys.n;
        s.y = Y.head(n);
        s.z = Y.tail(n);
        s.u = r.stab.gain.empty() ? Vector(Vector::Zero(n)) : Vector(-(r.stab.gain.left_factor * (r.stab.gain.right_factor * Y)));
        s.G = r.sys.G;
        s.K = r.sys.K;
        s.G_O = r.sys.G_O;
        s.mesh = std::move(r.mesh);
        snaps.push_back(std::move(s));
        if (io.log) *io.log << "level " << l << " done\n";
    }
    ConvergenceTable t;
    t.names = table2_names();
    for (std::size_t i = 0; i + 1 < snaps.size(); ++i) {
        const Snapshot& c = snaps[i];
        const Snapshot& f = snaps[i + 1];
        const SparseMatrix P = prolongation(c.mesh, f.mesh);
        const Vector dy = f.y - P * c.y;
        const Vector dz = f.z - P * c.z;
        const Vector du = f.u - P * c.u;
        ConvergenceRow row;
        row.h = c.mesh.h;
        row.errors = {discrete_l2_norm(f.G, dy), discrete_h1_norm(f.G, f.K, dy), discrete_l2_norm(f.G, dz),
                      discrete_h1_norm(f.G, f.K, dz), discrete_l2_norm(f.G_O, du)};
        t.rows.push_back(row);
    }
    t.fill_orders();
    const auto dir = detail::prepare_dir(cfg.output_dir);
    detail::write_table_csv(t, (dir / "table2.csv").string(), io.precision);
    if (io.out) {
        auto& o = *io.out;
        o << std::left << std::setw(10) << "h";
        for (const auto& n : t.names) o << std::setw(12) << ("err_" + n) << std::setw(9) << "order";
        o << '\n';
        for (const auto& r : t.rows) {
            o << std::setw(10) << detail::fmt(r.h, 6);
            for (std::size_t q = 0; q < t.names.size(); ++q)
                o << std::setw(12) << detail::fmt(r.errors[q], 6) << std::setw(9) << detail::fmt(r.orders[q], 4);
            o << '\n';
        }
    }
    return t;
}

/// ∫ (‖Y‖² + ‖u‖²) dt by the trapezoidal rule over a simulated series.
inline double trapezoid_cost(const TimeSeries& ts) {
    double j = 0.0;
    for (std::size_t i = 1; i < ts.times.size(); ++i) {
        const double a = ts.state_energy[i - 1] * ts.state_energy[i - 1] + ts.control_energy[i - 1] * ts.control_energy[i - 1];
        const double b = ts.state_energy[i] * ts.state_energy[i] + ts.control_energy[i] * ts.control_energy[i];
        j += 0.5 * (ts.times[i] - ts.times[i - 1]) * (a + b);
    }
    return j;
}

struct CostRow {
    int level = 0;
    double h = 0.0;
    double cost = 0.0;
    std::optional<double> difference;
};

inline std::vector<CostRow> cmd_cost(const ExperimentConfig& cfg, std::optional<int> level = {},
                                     const OutputOptions& io = {}) {
    std::vector<CostRow> rows;
    for (int l : selected_levels(cfg, level)) {
        LevelRun r = run_level(cfg, l, true, cfg.t_final, {}, io);
        CostRow row;
        row.level = l;
        row.h = r.mesh.h;
        row.cost = trapezoid_cost(r.series);
        if (!rows.empty()) row.difference = std::abs(row.cost - rows.back().cost);
        rows.push_back(row);
    }
    const auto dir = detail::prepare_dir(cfg.output_dir);
    const std::string path = (dir / "cost.csv").string();
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path + " for writing");
    os << "level,h,J,difference\n";
    for (const auto& r : rows)
        os << r.level << ',' << detail::fmt(r.h, io.precision) << ',' << detail::fmt(r.cost, io.precision) << ','
           << detail::fmt(r.difference, io.precision) << '\n';
    if (io.out)
        for (const auto& r : rows)
            *io.out << "level " << r.level << "  J = " << detail::fmt(r.cost, 8)
                    << (r.difference ? "  |dJ| = " + detail::fmt(*r.difference, 6) : std::string()) << '\n';
    return rows;
}

}  // namespace stab
