#include "perfms/cli_experiments.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace perfms {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::vector<std::string>>& config_keys() {
    static const std::map<std::string, std::vector<std::string>> keys{
        {"mesh", {"geometry", "n", "levels"}},
        {"operator", {"kind", "E", "nu", "f"}},
        {"snapshots", {"mode", "rand_count", "oversample", "seed"}},
        {"offline", {"basis"}},
        {"online", {"theta", "indicator", "adaptive", "iters", "tol", "reference", "load"}},
        {"run", {"threads", "out", "solver"}},
    };
    return keys;
}

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size() || x < INT32_MIN || x > INT32_MAX)
        throw ValidationError(key + ": expected an integer, got '" + v + "'");
    return static_cast<int>(x);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ValidationError(key + ": expected a number, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string sci(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6e", x);
    return buf;
}

std::string path_in(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

void ensure_out(const RunConfig& c) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw IoError("cannot create output directory " + c.out + ": " + ec.message());
}

std::ofstream open_out(const std::string& path, bool binary = false) {
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw IoError("cannot write " + path);
    return f;
}

std::ifstream open_artifact(const std::string& path, const std::string& stage, bool binary = false) {
    if (!fs::exists(path)) throw IoError("missing artifact " + path + " (run the " + stage + " stage first)");
    std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
    if (!f) throw IoError("cannot read " + path);
    return f;
}

std::string vec_text(const Vec2& v) { return num(v[0]) + " " + num(v[1]); }

std::vector<double> next_from_file(const OfflineFile& f) {
    std::vector<double> out(f.lambda.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        SpectralDecomposition sd;
        sd.lambda = f.lambda[i];
        out[i] = sd.next_eigenvalue(f.space.counts[i]);
    }
    return out;
}

} // namespace

void RunConfig::validate() const {
    if (geometry.empty()) throw ValidationError("geometry must be given");
    if (n < 1 || n > 64) throw ValidationError("n must lie in [1,64]");
    if (levels < 0 || levels > 8) throw ValidationError("levels must lie in [0,8]");
    if (rand_count < 1) throw ValidationError("rand_count must be >= 1");
    if (oversample < 0) throw ValidationError("oversample must be >= 0");
    if (basis < 0) throw ValidationError("basis must be >= 0");
    if (threads < 1) throw ValidationError("threads must be >= 1");
    if (reference != "fine" && reference != "snapshot" && reference != "none")
        throw ValidationError("reference must be fine, snapshot or none");
    if (load != "assembled" && load != "snapshot") throw ValidationError("load must be assembled or snapshot");
    if (out.empty()) throw ValidationError("output directory must be given");
    schedule().validate();
    spec().validate();
}

OperatorSpec RunConfig::spec() const {
    OperatorSpec s = default_spec(kind);
    if (E) s.E = *E;
    if (nu) s.nu = *nu;
    if (f) s.f = *f;
    return s;
}

RandomizedOptions RunConfig::randomized() const {
    RandomizedOptions r;
    r.count = rand_count;
    r.layers = oversample;
    r.seed = seed;
    return r;
}

OnlineSchedule RunConfig::schedule() const {
    OnlineSchedule s;
    s.max_iters = iters;
    s.tol = tol;
    s.theta = theta;
    s.indicator = indicator;
    s.adaptive = adaptive;
    return s;
}

void set_config_value(RunConfig& c, const std::string& section, const std::string& key, const std::string& v) {
    auto it = config_keys().find(section);
    if (it == config_keys().end()) throw ValidationError("unknown config section [" + section + "]");
    if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw ValidationError("unknown key '" + key + "' in [" + section + "]");
    const std::string name = section + "." + key;
    if (key == "geometry") c.geometry = v;
    else if (key == "n") c.n = to_int(name, v);
    else if (key == "levels") c.levels = to_int(name, v);
    else if (key == "kind") c.kind = parse_operator(v);
    else if (key == "E") c.E = to_double(name, v);
    else if (key == "nu") c.nu = to_double(name, v);
    else if (key == "f") {
        std::istringstream in(v);
        std::string a, b, extra;
        if (!(in >> a >> b) || (in >> extra)) throw ValidationError(name + ": expected two numbers");
        c.f = Vec2{to_double(name, a), to_double(name, b)};
    } else if (key == "mode") c.snapshots = parse_snapshot_mode(v);
    else if (key == "rand_count") c.rand_count = to_int(name, v);
    else if (key == "oversample") c.oversample = to_int(name, v);
    else if (key == "seed") {
        int s = to_int(name, v);
        if (s < 0) throw ValidationError(name + " must be >= 0");
        c.seed = static_cast<std::uint64_t>(s);
    } else if (key == "basis") c.basis = to_int(name, v);
    else if (key == "theta") c.theta = to_double(name, v);
    else if (key == "indicator") c.indicator = parse_indicator(v);
    else if (key == "adaptive") c.adaptive = to_bool(name, v);
    else if (key == "iters") c.iters = to_int(name, v);
    else if (key == "tol") c.tol = to_double(name, v);
    else if (key == "reference") c.reference = v;
    else if (key == "load") c.load = v;
    else if (key == "threads") c.threads = to_int(name, v);
    else if (key == "out") c.out = v;
    else if (key == "solver") {
        if (v == "direct") c.solver = SolverKind::Direct;
        else if (v == "cg") c.solver = SolverKind::CG;
        else throw ValidationError(name + ": expected direct or cg, got '" + v + "'");
    }
}

RunConfig parse_config(std::istream& in, RunConfig base, std::vector<std::string>* seen) {
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw ValidationError("malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                if (!config_keys().count(section)) throw ValidationError("unknown config section [" + section + "]");
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ValidationError("expected key = value");
            if (section.empty()) throw ValidationError("key outside of a section");
            std::string key = trim(line.substr(0, eq));
            set_config_value(base, section, key, trim(line.substr(eq + 1)));
            if (seen) seen->push_back(key);
        } catch (const ValidationError& e) {
            throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base, std::vector<std::string>* seen) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    return parse_config(f, std::move(base), seen);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream o;
    o << "[mesh]\ngeometry = " << c.geometry << "\nn = " << c.n << "\nlevels = " << c.levels << "\n\n";
    o << "[operator]\nkind = " << operator_name(c.kind) << "\n";
    if (c.E) o << "E = " << num(*c.E) << "\n";
    if (c.nu) o << "nu = " << num(*c.nu) << "\n";
    if (c.f) o << "f = " << vec_text(*c.f) << "\n";
    o << "\n[snapshots]\nmode = " << snapshot_mode_name(c.snapshots) << "\nrand_count = " << c.rand_count
      << "\noversample = " << c.oversample << "\nseed = " << c.seed << "\n\n";
    o << "[offline]\nbasis = " << c.basis << "\n\n";
    o << "[online]\ntheta = " << num(c.theta) << "\nindicator = " << indicator_name(c.indicator)
      << "\nadaptive = " << (c.adaptive ? "true" : "false") << "\niters = " << c.iters << "\ntol = " << num(c.tol)
      << "\nreference = " << c.reference << "\nload = " << c.load << "\n\n";
    o << "[run]\nthreads = " << c.threads << "\nout = " << c.out
      << "\nsolver = " << (c.solver == SolverKind::CG ? "cg" : "direct") << "\n";
    return o.str();
}

Pipeline::Pipeline(RunConfig c) : c_(std::move(c)) { c_.validate(); }

const Discretization& Pipeline::disc() {
    if (!d_) d_ = discretize(build_geometry(c_.geometry), c_.spec(), c_.n, c_.levels);
    return *d_;
}

std::string Pipeline::cache_dir() const {
    const char* env = std::getenv("PERFMS_CACHE_DIR");
    if (env && *env) return env;
    return (fs::path(c_.out) / "cache").string();
}

namespace {

std::uint64_t snapshot_key(const Discretization& d, const RunConfig& c) {
    Hasher h;
    h.str("snapshots v1");
    h.u64(d.hash());
    h.i64(static_cast<int>(c.snapshots));
    if (c.snapshots == SnapshotMode::Randomized) {
        auto r = c.randomized();
        h.i64(r.count);
        h.i64(r.extra);
        h.i64(r.layers);
        h.u64(r.seed);
    }
    return h.value();
}

} // namespace

const SnapshotSet& Pipeline::snapshots() {
    if (snaps_) return *snaps_;
    const auto& d = disc();
    std::uint64_t key = snapshot_key(d, c_);
    Hasher name;
    name.u64(key);
    fs::path file = fs::path(cache_dir()) / ("snapshots-" + name.hex() + ".bin");
    if (fs::exists(file)) {
        std::ifstream in(file, std::ios::binary);
        try {
            snaps_ = read_snapshots(in, key);
            return *snaps_;
        } catch (const IoError&) {
            // stale or truncated entry: rebuild below
        }
    }
    snaps_ = build_snapshots(d, c_.snapshots, c_.randomized(), c_.threads);
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (!ec) {
        fs::path tmp = file;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (out) write_snapshots(out, *snaps_, key);
        }
        fs::rename(tmp, file, ec);
    }
    return *snaps_;
}

const OfflineData& Pipeline::offline_data() {
    if (!data_) data_ = build_offline_data(disc(), snapshots(), c_.threads);
    return *data_;
}

std::uint64_t Pipeline::offline_key(int basis) {
    Hasher h;
    h.str("offline v1");
    h.u64(snapshot_key(disc(), c_));
    h.i64(basis);
    return h.value();
}

const SnapshotSolution& Pipeline::snapshot_solution() {
    if (!hat_) {
        ref_ = std::make_unique<SnapshotReference>(disc(), snapshots(), offline_data().pou, c_.threads);
        hat_ = ref_->solve();
    }
    return *hat_;
}

const Vec& Pipeline::load() {
    if (!load_) {
        if (c_.load == "assembled") {
            load_ = Vec();
        } else {
            const auto& d = disc();
            const auto& h = snapshot_solution();
            Vec F = d.sys.A * h.u;
            if (d.spec.kind == OperatorKind::Stokes) F -= d.sys.B.transpose() * h.p;
            for (int i = 0; i < d.space.ndof(); ++i)
                if (d.space.dirichlet[i]) F[i] = 0.0;
            load_ = F;
        }
    }
    return *load_;
}

const FineSolution& Pipeline::fine() {
    if (!fine_) {
        const auto& d = disc();
        const Vec& F = load();
        if (F.size()) {
            System s = d.sys;
            s.F = F;
            fine_ = solve_fine(d.spec, d.space, d.mesh, s, c_.solver);
        } else {
            fine_ = solve_fine(d.spec, d.space, d.mesh, d.sys, c_.solver);
        }
    }
    return *fine_;
}

const ResidualSolver& Pipeline::residual_solver() {
    if (!rs_) rs_ = std::make_unique<ResidualSolver>(disc(), c_.threads);
    return *rs_;
}

std::vector<TrajectoryRow> trajectory(Pipeline& p, const OnlineResult& res, const std::vector<double>& next_lambda) {
    const auto& c = p.config();
    const auto& d = p.disc();
    std::vector<TrajectoryRow> rows;
    const Vec* u_ref = nullptr;
    const Vec* p_ref = nullptr;
    ReferenceKind kind = ReferenceKind::Fine;
    if (c.reference == "fine") {
        u_ref = &p.fine().u;
        p_ref = &p.fine().p;
    } else if (c.reference == "snapshot") {
        u_ref = &p.snapshot_solution().u;
        p_ref = &p.snapshot_solution().p;
        kind = ReferenceKind::Snapshot;
    }
    std::optional<ErrorMeter> em;
    if (u_ref) em.emplace(d);
    for (const auto& L : res.levels) {
        TrajectoryRow r;
        r.level = L.level;
        r.dof = L.dof;
        r.marked_count = L.marked_count;
        r.sum_eta = L.report.sum_eta;
        if (em) r.err = (*em)(*u_ref, *p_ref, L.sol.u, L.sol.p_coarse, L.dof, kind);
        if (kind == ReferenceKind::Snapshot) r.bound = aposteriori_bound(d, L.report.norm, next_lambda, *u_ref, L.sol.u);
        rows.push_back(r);
    }
    return rows;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows, bool stokes) {
    out << "level,dof,marked_count,sum_eta,e_L2,e_H1,e_p\n";
    for (const auto& r : rows) {
        out << r.level << "," << r.dof << "," << r.marked_count << "," << sci(r.sum_eta) << ",";
        if (r.err) out << sci(r.err->e_L2) << "," << sci(r.err->e_H1) << "," << (stokes ? sci(r.err->e_p) : "");
        else out << ",,";
        out << "\n";
    }
}

void write_bound_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
    out << "level,bound,actual,ratio,holds\n";
    for (const auto& r : rows)
        if (r.bound)
            out << r.level << "," << sci(r.bound->bound) << "," << sci(r.bound->actual) << "," << sci(r.bound->ratio)
                << "," << (r.bound->holds ? 1 : 0) << "\n";
}

Study run_study(Pipeline& p, const OfflineSpace& off, const std::vector<double>& next_lambda,
                const OnlineSchedule& sched) {
    Study s;
    s.result = run_online(p.disc(), off, next_lambda, p.residual_solver(), sched, p.load(), p.config().threads);
    s.rows = trajectory(p, s.result, next_lambda);
    return s;
}

std::string stage_mesh(const RunConfig& c) {
    Pipeline p(c);
    ensure_out(c);
    const auto& d = p.disc();
    std::string path = path_in(c, "mesh.txt");
    auto f = open_out(path);
    write_mesh(f, d.mesh);
    return "mesh: " + std::to_string(d.mesh.num_vertices()) + " vertices, " + std::to_string(d.mesh.num_triangles()) +
           " triangles -> " + path;
}

std::string stage_solve_fine(const RunConfig& c) {
    Pipeline p(c);
    ensure_out(c);
    const auto& d = p.disc();
    const auto& s = p.fine();
    std::string path = path_in(c, "fine.vtk");
    auto f = open_out(path);
    write_vtk(f, d, s.u, s.p, "fine solution");
    return "fine: " + std::to_string(d.space.ndof()) + " dofs, energy " + sci(energy_norm_sq(d, s.u)) + " -> " + path;
}

namespace {

void check_mesh_artifact(Pipeline& p) {
    const auto& c = p.config();
    auto in = open_artifact(path_in(c, "mesh.txt"), "mesh");
    std::stringstream have, want;
    have << in.rdbuf();
    write_mesh(want, p.disc().mesh);
    if (have.str() != want.str())
        throw IoError("mesh artifact " + path_in(c, "mesh.txt") + " does not match the configuration; rerun the mesh stage");
}

} // namespace

std::string stage_offline(const RunConfig& c) {
    Pipeline p(c);
    check_mesh_artifact(p);
    const auto& d = p.disc();
    std::vector<int> counts(d.nbs.size(), c.basis);
    auto off = assemble_offline(d, p.snapshots(), p.offline_data(), counts, c.threads);
    std::string path = path_in(c, "offline.bin");
    auto f = open_out(path, true);
    write_offline(f, off, p.offline_data(), p.offline_key(c.basis));
    std::string s = "offline: " + std::to_string(off.dim()) + " columns (" + std::to_string(c.basis) +
                    " per neighborhood, " + std::to_string(d.nbs.size()) + " neighborhoods) -> " + path;
    if (!off.warnings.empty()) {
        auto f = open_out(path_in(c, "offline_warnings.txt"));
        for (const auto& w : off.warnings) f << w << "\n";
        s += "\n" + std::to_string(off.warnings.size()) + " warnings (first: " + off.warnings.front() + ") -> " +
             path_in(c, "offline_warnings.txt");
    }
    return s;
}

std::string stage_online(const RunConfig& c) {
    Pipeline p(c);
    check_mesh_artifact(p);
    auto in = open_artifact(path_in(c, "offline.bin"), "offline", true);
    OfflineFile file = read_offline(in, p.offline_key(c.basis));
    auto lam = next_from_file(file);
    Study st = run_study(p, file.space, lam, c.schedule());
    const bool stokes = c.kind == OperatorKind::Stokes;
    {
        auto f = open_out(path_in(c, "online.csv"));
        write_trajectory_csv(f, st.rows, stokes);
    }
    if (c.reference == "snapshot") {
        auto f = open_out(path_in(c, "bound.csv"));
        write_bound_csv(f, st.rows);
    }
    const auto& last = st.result.levels.back();
    {
        auto f = open_out(path_in(c, "online.vtk"));
        write_vtk(f, p.disc(), last.sol.u, last.sol.p, "multiscale solution");
    }
    std::string s = "online: " + std::to_string(st.result.levels.size() - 1) + " iterations, final dof " +
                    std::to_string(last.dof) + " -> " + path_in(c, "online.csv");
    for (const auto& L : st.result.levels)
        for (const auto& n : L.notes) s += "\nnote: " + n;
    return s;
}

std::string stage_report(const RunConfig& c) {
    auto in = open_artifact(path_in(c, "online.csv"), "online");
    std::string line;
    std::getline(in, line);
    if (line != "level,dof,marked_count,sum_eta,e_L2,e_H1,e_p") throw IoError("unexpected header in online.csv");
    std::ostringstream o;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%5s %7s %7s %12s %10s %10s %10s\n", "level", "dof", "marked", "sum_eta", "e_L2 %",
                  "e_H1 %", "e_p %");
    o << buf;
    double first_h1 = -1.0;
    double last_h1 = -1.0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        while (f.size() < 7) f.push_back("");
        auto pct = [](const std::string& s) {
            if (s.empty()) return std::string("-");
            char b[32];
            std::snprintf(b, sizeof b, "%.4g", 100.0 * std::stod(s));
            return std::string(b);
        };
        std::snprintf(buf, sizeof buf, "%5s %7s %7s %12s %10s %10s %10s\n", f[0].c_str(), f[1].c_str(),
                      f[2].c_str(), f[3].c_str(), pct(f[4]).c_str(), pct(f[5]).c_str(), pct(f[6]).c_str());
        o << buf;
        if (!f[5].empty()) {
            if (first_h1 < 0.0) first_h1 = std::stod(f[5]);
            last_h1 = std::stod(f[5]);
        }
    }
    if (first_h1 > 0.0 && last_h1 > 0.0) o << "H1 reduction over the run: " << sci(first_h1 / last_h1) << "\n";
    std::string bound = path_in(c, "bound.csv");
    if (fs::exists(bound)) {
        std::ifstream b(bound);
        std::getline(b, line);
        double worst = std::numeric_limits<double>::infinity();
        int fails = 0;
        while (std::getline(b, line)) {
            std::vector<std::string> f;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) f.push_back(cell);
            if (f.size() < 5) continue;
            worst = std::min(worst, std::stod(f[3]));
            fails += f[4] == "0";
        }
        o << "a-posteriori bound: smallest bound/actual " << sci(worst) << ", " << fails << " violations\n";
    }
    std::string offp = path_in(c, "offline.bin");
    if (c.kind == OperatorKind::Stokes && fs::exists(offp)) {
        Pipeline p(c);
        std::ifstream f(offp, std::ios::binary);
        OfflineFile file = read_offline(f, p.offline_key(c.basis));
        CoarseSolver cs(p.disc(), file.space.columns);
        auto is = infsup_diagnostic(p.disc(), cs);
        o << "inf-sup: beta " << sci(is.beta) << (is.ok() ? " (ok)" : " (FAILED: " + is.message + ")") << "\n";
    }
    return o.str();
}

std::vector<std::string> preset_names() { return {"elasticity-table", "stokes-table", "stokes-randomized"}; }

RunConfig preset_config(const std::string& name, RunConfig c, const std::vector<std::string>& explicit_keys) {
    auto given = [&](const std::string& k) {
        return std::find(explicit_keys.begin(), explicit_keys.end(), k) != explicit_keys.end();
    };
    if (name == "elasticity-table") {
        c.kind = OperatorKind::Elasticity;
        if (!given("geometry")) c.geometry = "small-inclusions";
        if (!given("iters")) c.iters = 4;
    } else if (name == "stokes-table" || name == "stokes-randomized") {
        c.kind = OperatorKind::Stokes;
        if (!given("geometry")) c.geometry = "big-inclusions";
    } else {
        throw ValidationError("unknown preset '" + name + "'");
    }
    return c;
}

namespace {

struct Mode {
    const char* name;
    bool adaptive;
    IndicatorKind ind;
};

std::string table_preset(const std::string& name, const RunConfig& c, const std::vector<int>& bases) {
    Pipeline p(c);
    ensure_out(c);
    const auto& d = p.disc();
    const bool stokes = c.kind == OperatorKind::Stokes;
    const Mode modes[] = {{"no-adapt", false, IndicatorKind::Ind1},
                          {"ind1", true, IndicatorKind::Ind1},
                          {"ind2", true, IndicatorKind::Ind2}};
    std::string csv = path_in(c, name + ".csv");
    auto out = open_out(csv);
    open_out(path_in(c, name + ".cfg")) << serialize_config(c);
    {
        auto f = open_out(path_in(c, name + "_fine.vtk"));
        write_vtk(f, d, p.fine().u, p.fine().p, "fine solution");
    }
    int blocks = 0;
    for (int basis : bases) {
        std::vector<int> counts(d.nbs.size(), basis);
        auto off = assemble_offline(d, p.snapshots(), p.offline_data(), counts, c.threads);
        auto lam = next_eigenvalues(p.offline_data(), counts);
        for (const auto& m : modes) {
            OnlineSchedule sc = c.schedule();
            sc.adaptive = m.adaptive;
            sc.indicator = m.ind;
            Study st = run_study(p, off, lam, sc);
            out << (blocks ? "\n" : "") << "# " << name << " geometry=" << c.geometry << " basis=" << basis
                << " mode=" << m.name << "\n";
            write_trajectory_csv(out, st.rows, stokes);
            ++blocks;
            const auto& last = st.result.levels.back();
            auto f = open_out(path_in(c, name + "_l" + std::to_string(basis) + "_" + m.name + ".vtk"));
            write_vtk(f, d, last.sol.u, last.sol.p, "multiscale solution");
        }
    }
    return name + ": " + std::to_string(blocks) + " blocks -> " + csv;
}

std::string randomized_preset(const std::string& name, const RunConfig& c) {
    ensure_out(c);
    std::string csv = path_in(c, name + ".csv");
    auto out = open_out(csv);
    open_out(path_in(c, name + ".cfg")) << serialize_config(c);
    out << "# " << name << " geometry=" << c.geometry << " rand_count=" << c.rand_count << " oversample=" << c.oversample
        << " seed=" << c.seed << "\n";
    out << "snapshots,fraction,basis,dof,e_L2,e_H1,e_p\n";
    RunConfig std_c = c;
    std_c.snapshots = SnapshotMode::Standard;
    RunConfig rnd_c = c;
    rnd_c.snapshots = SnapshotMode::Randomized;
    Pipeline ps(std_c), pr(rnd_c);
    const auto& fine = ps.fine();
    ErrorMeter em(ps.disc());
    for (Pipeline* p : {&ps, &pr}) {
        const auto& d = p->disc();
        const auto& snaps = p->snapshots();
        double frac = p == &ps ? 1.0 : snaps.fraction();
        // offline sizes up to the randomized target count
        for (int basis = 1; basis <= c.rand_count; ++basis) {
            std::vector<int> counts(d.nbs.size(), basis);
            bool fits = true;
            for (const auto& s : p->offline_data().spectra) fits = fits && basis <= s.count();
            if (!fits) break;
            auto off = assemble_offline(d, snaps, p->offline_data(), counts, c.threads);
            auto sol = CoarseSolver(d, off.columns).solve(p->load());
            auto e = em(fine.u, fine.p, sol.u, sol.p_coarse, off.dim(), ReferenceKind::Fine);
            char pct[32];
            std::snprintf(pct, sizeof pct, "%.1f%%", 100.0 * frac);
            out << snapshot_mode_name(p->config().snapshots) << "," << pct << "," << basis << "," << off.dim() << ","
                << sci(e.e_L2) << "," << sci(e.e_H1) << "," << sci(e.e_p) << "\n";
        }
    }
    return name + " -> " + csv;
}

} // namespace

std::string run_preset(const std::string& name, const RunConfig& c) {
    if (name == "elasticity-table") return table_preset(name, c, {1, 2, 4});
    if (name == "stokes-table") return table_preset(name, c, {1, 2, 3});
    if (name == "stokes-randomized") return randomized_preset(name, c);
    throw ValidationError("unknown preset '" + name + "'");
}

} // namespace perfms
