#include "perfms/snapshots.hpp"

#include "perfms/parallel.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

namespace perfms {

const char* snapshot_mode_name(SnapshotMode m) { return m == SnapshotMode::Standard ? "standard" : "randomized"; }

SnapshotMode parse_snapshot_mode(const std::string& s) {
    if (s == "standard") return SnapshotMode::Standard;
    if (s == "randomized") return SnapshotMode::Randomized;
    throw ValidationError("unknown snapshot mode '" + s + "' (expected standard or randomized)");
}

Region snapshot_region(const Discretization& d, const std::vector<int>& cells) {
    return make_region(d.space, d.mesh, cells, RegionBoundary::All);
}

namespace {

bool stokes(const Discretization& d) { return d.spec.kind == OperatorKind::Stokes; }

// Factorised snapshot problem on a set of cells.
struct Solver {
    Region region;
    std::unique_ptr<LocalProblem> lp;
    std::vector<int> fixed_pos_of;  // global dof -> index in region.fixed, or -1

    Solver(const Discretization& d, const std::vector<int>& cells) : region(snapshot_region(d, cells)) {
        if (stokes(d)) {
            System s = assemble(d.spec, d.space, d.mesh, &region.cells);
            lp = std::make_unique<LocalProblem>(d.space, d.mesh, region, s.A, &s.B, PressureSpace::FineP0);
        } else {
            SpMat A = assemble_stiffness(d.spec, d.space, d.mesh, &region.cells);
            lp = std::make_unique<LocalProblem>(d.space, d.mesh, region, A, nullptr, PressureSpace::None);
        }
        fixed_pos_of.assign(d.space.ndof(), -1);
        for (std::size_t i = 0; i < region.fixed.size(); ++i) fixed_pos_of[region.fixed[i]] = static_cast<int>(i);
    }

    bool carrier(const Discretization& d, int dof) const {
        return fixed_pos_of[dof] >= 0 && !d.space.hole_node[dof / d.space.ncomp] && !d.space.dirichlet[dof];
    }

    // Stokes: the divergence target is the constant that balances the flux of g.
    Vec extend(const Discretization& d, const Vec& g) const {
        if (!stokes(d)) return lp->solve(g);
        double c = lp->boundary_flux(g) / lp->region_area();
        Vec t(region.cells.size());
        for (std::size_t i = 0; i < region.cells.size(); ++i) t[i] = c * d.mesh.area(region.cells[i]);
        return lp->solve(g, Vec(), t);
    }
};

void push(SnapshotSpace& s, const Vec& col, SnapshotColumn info) {
    s.columns.conservativeResize(col.size(), s.columns.cols() + 1);
    s.columns.col(s.columns.cols() - 1) = col;
    s.info.push_back(info);
}

void finish(const Discretization& d, const Neighborhood& nb, SnapshotSpace& s) {
    if (s.columns.cols() == 0) return;
    Mat G = snapshot_energy_gram(d, nb, s);
    s.deflated = s.size() - numerical_rank(G);
}

std::vector<std::array<int, 3>> stokes_edge_nodes(const Discretization& d, const Neighborhood& nb) {
    std::vector<std::array<int, 3>> out;
    const int nv = d.mesh.num_vertices();
    for (int e : nb.interface_edges) out.push_back({nv + e, d.mesh.edges[e][0], d.mesh.edges[e][1]});
    return out;
}

} // namespace

int standard_snapshot_count(const Discretization& d, const Neighborhood& nb) {
    const int nc = d.space.ncomp;
    if (stokes(d)) return 2 * static_cast<int>(nb.interface_edges.size());
    int count = 0;
    for (int v : nb.interface_vertices)
        for (int c = 0; c < nc; ++c) count += !d.space.dirichlet[v * nc + c];
    return count;
}

SnapshotSpace standard_snapshots(const Discretization& d, const Neighborhood& nb) {
    SnapshotSpace s;
    s.nb = nb.id;
    s.mode = SnapshotMode::Standard;
    Solver solver(d, nb.base_cells);
    s.dofs = solver.region.dofs;
    s.columns.resize(s.dofs.size(), 0);
    const int nc = d.space.ncomp;
    const int nb_fixed = static_cast<int>(solver.region.fixed.size());
    std::vector<std::pair<Vec, SnapshotColumn>> cols;
    if (stokes(d)) {
        // Edge datum: 1 at the midpoint, 1/2 at the endpoints (0 on holes), so
        // that the data of all interface edges sum to 1 on the interface.
        for (const auto& en : stokes_edge_nodes(d, nb))
            for (int c = 0; c < nc; ++c) {
                Vec g = Vec::Zero(nb_fixed);
                const double w[3] = {1.0, 0.5, 0.5};
                for (int k = 0; k < 3; ++k) {
                    int dof = en[k] * nc + c;
                    if (solver.carrier(d, dof)) g[solver.fixed_pos_of[dof]] = w[k];
                }
                cols.push_back({g, SnapshotColumn{en[0] - d.mesh.num_vertices(), c, false, false}});
            }
    } else {
        for (int v : nb.interface_vertices)
            for (int c = 0; c < nc; ++c) {
                int dof = v * nc + c;
                if (!solver.carrier(d, dof)) continue;
                Vec g = Vec::Zero(nb_fixed);
                g[solver.fixed_pos_of[dof]] = 1.0;
                cols.push_back({g, SnapshotColumn{v, c, false, false}});
            }
    }
    s.columns.resize(s.dofs.size(), cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
        s.columns.col(k) = solver.extend(d, cols[k].first);
        s.info.push_back(cols[k].second);
    }
    s.standard_count = s.size();
    finish(d, nb, s);
    return s;
}

SnapshotSpace randomized_snapshots(const Discretization& d, const Neighborhood& nb, const RandomizedOptions& opt) {
    if (opt.count < 1) throw ValidationError("randomized snapshots: count must be >= 1");
    if (opt.extra < 0 || opt.layers < 0) throw ValidationError("randomized snapshots: extra and layers must be >= 0");
    SnapshotSpace s;
    s.nb = nb.id;
    s.mode = SnapshotMode::Randomized;
    s.standard_count = standard_snapshot_count(d, nb);
    Neighborhood plus = oversample(d.mesh, nb, opt.layers);
    if (opt.layers > 0 && plus.cells.size() == nb.base_cells.size())
        s.warnings.push_back("neighborhood " + std::to_string(nb.id) + ": oversampled region could not grow");
    Solver base(d, nb.base_cells);
    s.dofs = base.region.dofs;
    s.columns.resize(s.dofs.size(), 0);
    const int nc = d.space.ncomp;
    {
        Solver big(d, plus.cells);
        std::vector<int> pos(d.space.ndof(), -1);
        for (std::size_t i = 0; i < big.region.dofs.size(); ++i) pos[big.region.dofs[i]] = static_cast<int>(i);
        std::vector<int> carriers;
        for (int dof : big.region.fixed)
            if (big.carrier(d, dof)) carriers.push_back(dof);
        Hasher h;
        h.u64(opt.seed);
        h.i64(nb.id);
        std::mt19937_64 rng(h.value());
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int k = 0; k < opt.count + opt.extra; ++k) {
            Vec g = Vec::Zero(big.region.fixed.size());
            for (int dof : carriers) g[big.fixed_pos_of[dof]] = normal(rng);
            Vec u = big.extend(d, g);
            Vec col(s.dofs.size());
            for (std::size_t i = 0; i < s.dofs.size(); ++i) col[i] = u[pos[s.dofs[i]]];
            push(s, col, SnapshotColumn{k, -1, true, false});
        }
    }
    // constant per component, zero trace on the holes, extended again
    for (int c = 0; c < nc; ++c) {
        Vec g = Vec::Zero(base.region.fixed.size());
        for (int dof : base.region.fixed)
            if (dof % nc == c && base.carrier(d, dof)) g[base.fixed_pos_of[dof]] = 1.0;
        push(s, base.extend(d, g), SnapshotColumn{-1, c, false, true});
    }
    finish(d, nb, s);
    return s;
}

Mat snapshot_energy_gram(const Discretization& d, const Neighborhood& nb, const SnapshotSpace& s) {
    SpMat A = assemble_stiffness(d.spec, d.space, d.mesh, &nb.base_cells);
    SpMat Al = submatrix(A, s.dofs, s.dofs, d.space.ndof());
    Mat AC = Al * s.columns;
    Mat G = s.columns.transpose() * AC;
    return 0.5 * (G + G.transpose());
}

int numerical_rank(const Mat& gram, double rel_tol) {
    if (gram.rows() == 0) return 0;
    Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
    double dmax = gram.diagonal().cwiseAbs().maxCoeff();
    int r = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) r += es.eigenvalues()[i] > rel_tol * dmax;
    return r;
}

int SnapshotSet::total_columns() const {
    int n = 0;
    for (const auto& s : spaces) n += s.size();
    return n;
}

int SnapshotSet::total_standard() const {
    int n = 0;
    for (const auto& s : spaces) n += s.standard_count;
    return n;
}

double SnapshotSet::fraction() const {
    int st = total_standard();
    return st == 0 ? 0.0 : double(total_columns()) / st;
}

SnapshotSet build_snapshots(const Discretization& d, SnapshotMode mode, const RandomizedOptions& opt, int threads) {
    SnapshotSet set;
    set.mode = mode;
    set.rand = opt;
    set.spaces.resize(d.nbs.size());
    parallel_for(static_cast<int>(d.nbs.size()), threads, [&](int i) {
        set.spaces[i] = mode == SnapshotMode::Standard ? standard_snapshots(d, d.nbs[i]) : randomized_snapshots(d, d.nbs[i], opt);
    });
    return set;
}

namespace {

const char kMagic[8] = {'P', 'E', 'R', 'F', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("snapshot cache: truncated file");
    return v;
}

} // namespace

void write_snapshots(std::ostream& out, const SnapshotSet& s, std::uint64_t key) {
    out.write(kMagic, 8);
    put(out, kVersion);
    put(out, key);
    put<std::int32_t>(out, static_cast<int>(s.mode));
    put<std::int32_t>(out, s.rand.count);
    put<std::int32_t>(out, s.rand.extra);
    put<std::int32_t>(out, s.rand.layers);
    put<std::uint64_t>(out, s.rand.seed);
    put<std::int32_t>(out, static_cast<int>(s.spaces.size()));
    for (const auto& sp : s.spaces) {
        put<std::int32_t>(out, sp.nb);
        put<std::int32_t>(out, sp.standard_count);
        put<std::int32_t>(out, sp.deflated);
        put<std::int32_t>(out, static_cast<int>(sp.dofs.size()));
        for (int dof : sp.dofs) put<std::int32_t>(out, dof);
        put<std::int32_t>(out, sp.size());
        for (const auto& c : sp.info) {
            put<std::int32_t>(out, c.source);
            put<std::int32_t>(out, c.component);
            put<std::int32_t>(out, c.random);
            put<std::int32_t>(out, c.constant);
        }
        out.write(reinterpret_cast<const char*>(sp.columns.data()), sizeof(double) * sp.columns.size());
    }
    if (!out) throw IoError("snapshot cache: write failed");
}

SnapshotSet read_snapshots(std::istream& in, std::uint64_t key) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("snapshot cache: bad magic");
    if (take<std::uint32_t>(in) != kVersion) throw IoError("snapshot cache: unsupported version");
    if (take<std::uint64_t>(in) != key) throw IoError("snapshot cache: key mismatch");
    SnapshotSet s;
    s.mode = static_cast<SnapshotMode>(take<std::int32_t>(in));
    s.rand.count = take<std::int32_t>(in);
    s.rand.extra = take<std::int32_t>(in);
    s.rand.layers = take<std::int32_t>(in);
    s.rand.seed = take<std::uint64_t>(in);
    s.spaces.resize(take<std::int32_t>(in));
    for (auto& sp : s.spaces) {
        sp.mode = s.mode;
        sp.nb = take<std::int32_t>(in);
        sp.standard_count = take<std::int32_t>(in);
        sp.deflated = take<std::int32_t>(in);
        sp.dofs.resize(take<std::int32_t>(in));
        for (auto& dof : sp.dofs) dof = take<std::int32_t>(in);
        int ncol = take<std::int32_t>(in);
        sp.info.resize(ncol);
        for (auto& c : sp.info) {
            c.source = take<std::int32_t>(in);
            c.component = take<std::int32_t>(in);
            c.random = take<std::int32_t>(in);
            c.constant = take<std::int32_t>(in);
        }
        sp.columns.resize(sp.dofs.size(), ncol);
        if (!in.read(reinterpret_cast<char*>(sp.columns.data()), sizeof(double) * sp.columns.size()))
            throw IoError("snapshot cache: truncated column block");
    }
    return s;
}

} // namespace perfms
