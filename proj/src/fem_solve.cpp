#include "perfms/fem_core.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>

namespace perfms {

Vec gather(const Vec& global, const std::vector<int>& idx) {
    Vec out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = global[idx[i]];
    return out;
}

void scatter_add(Vec& global, const std::vector<int>& idx, const Vec& local) {
    for (std::size_t i = 0; i < idx.size(); ++i) global[idx[i]] += local[i];
}

Region make_region(const FineSpace& space, const FineMesh& mesh, const std::vector<int>& cells, RegionBoundary rule) {
    Region r;
    r.cells = cells;
    std::sort(r.cells.begin(), r.cells.end());
    const int nv = mesh.num_vertices();
    std::vector<char> in(space.num_nodes, 0), bnd(space.num_nodes, 0), fix(space.num_nodes, 0);
    for (int t : r.cells)
        for (int k = 0; k < space.nodes_per_cell(); ++k) in[space.cell_nodes[t][k]] = 1;
    for (int e : region_boundary_edges(mesh, r.cells)) {
        int tag = mesh.edge_tag[e];
        bool fixed_edge = rule == RegionBoundary::All ? tag != static_cast<int>(BoundaryTag::Perforation) : tag == -1;
        int nodes[3] = {mesh.edges[e][0], mesh.edges[e][1], space.order == 2 ? nv + e : -1};
        for (int n : nodes) {
            if (n < 0) continue;
            bnd[n] = 1;
            if (fixed_edge) fix[n] = 1;
        }
    }
    const int nc = space.ncomp;
    for (int n = 0; n < space.num_nodes; ++n) {
        if (!in[n]) continue;
        for (int c = 0; c < nc; ++c) {
            int d = n * nc + c;
            r.dofs.push_back(d);
            if (fix[n] || space.dirichlet[d]) r.fixed.push_back(d);
            else {
                r.free.push_back(d);
                if (bnd[n]) r.natural_boundary = true;
            }
        }
    }
    return r;
}

SpMat submatrix(const SpMat& A, const std::vector<int>& rows, const std::vector<int>& cols, int nrows_total) {
    std::vector<int> rmap(nrows_total, -1);
    for (std::size_t i = 0; i < rows.size(); ++i) rmap[rows[i]] = static_cast<int>(i);
    std::vector<Eigen::Triplet<double>> tr;
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (SpMat::InnerIterator it(A, cols[j]); it; ++it)
            if (rmap[it.row()] >= 0) tr.emplace_back(rmap[it.row()], static_cast<int>(j), it.value());
    SpMat out(rows.size(), cols.size());
    out.setFromTriplets(tr.begin(), tr.end());
    return out;
}

LocalProblem::LocalProblem(const FineSpace& space, const FineMesh& mesh, const Region& region, const SpMat& A,
                           const SpMat* B, PressureSpace pressure, std::vector<std::vector<int>> coarse_groups)
    : region_(region), pressure_(pressure) {
    const int nd = space.ndof();
    nf_ = static_cast<int>(region_.free.size());
    {
        std::vector<int> pos(nd, -1);
        for (std::size_t i = 0; i < region_.dofs.size(); ++i) pos[region_.dofs[i]] = static_cast<int>(i);
        for (int d : region_.free) free_pos_.push_back(pos[d]);
        for (int d : region_.fixed) fixed_pos_.push_back(pos[d]);
    }
    SpMat Aff = submatrix(A, region_.free, region_.free, nd);
    Afb_ = submatrix(A, region_.free, region_.fixed, nd);

    if (pressure_ != PressureSpace::None) {
        if (!B) throw SolverError("LocalProblem: pressure space requested without a divergence matrix");
        std::vector<int> row_of(mesh.num_triangles(), -1);
        if (pressure_ == PressureSpace::FineP0) {
            for (std::size_t i = 0; i < region_.cells.size(); ++i) {
                row_of[region_.cells[i]] = static_cast<int>(i);
                prow_weight_.push_back(mesh.area(region_.cells[i]));
            }
        } else {
            for (std::size_t g = 0; g < coarse_groups.size(); ++g) {
                double w = 0.0;
                for (int t : coarse_groups[g]) {
                    row_of[t] = static_cast<int>(g);
                    w += mesh.area(t);
                }
                prow_weight_.push_back(w);
            }
        }
        const int np = static_cast<int>(prow_weight_.size());
        std::vector<int> fmap(nd, -1), bmap(nd, -1);
        for (int i = 0; i < nf_; ++i) fmap[region_.free[i]] = i;
        for (std::size_t i = 0; i < region_.fixed.size(); ++i) bmap[region_.fixed[i]] = static_cast<int>(i);
        std::vector<Eigen::Triplet<double>> tf, tb;
        for (int d : region_.dofs)
            for (SpMat::InnerIterator it(*B, d); it; ++it) {
                int row = row_of[it.row()];
                if (row < 0) continue;
                if (fmap[d] >= 0) tf.emplace_back(row, fmap[d], it.value());
                else tb.emplace_back(row, bmap[d], it.value());
            }
        Bf_.resize(np, nf_);
        Bf_.setFromTriplets(tf.begin(), tf.end());
        Bb_.resize(np, region_.fixed.size());
        Bb_.setFromTriplets(tb.begin(), tb.end());
        gauge_ = !region_.natural_boundary;
    }
    if (nf_ == 0) return;

    if (pressure_ == PressureSpace::None) {
        ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(Aff);
        if (ldlt_->info() != Eigen::Success) throw SolverError("local Dirichlet problem is singular");
        return;
    }
    const int np = static_cast<int>(prow_weight_.size());
    const int n = nf_ + np + (gauge_ ? 1 : 0);
    std::vector<Eigen::Triplet<double>> tk;
    tk.reserve(Aff.nonZeros() + 2 * Bf_.nonZeros() + 2 * np);
    for (int j = 0; j < Aff.outerSize(); ++j)
        for (SpMat::InnerIterator it(Aff, j); it; ++it) tk.emplace_back(it.row(), j, it.value());
    for (int j = 0; j < Bf_.outerSize(); ++j)
        for (SpMat::InnerIterator it(Bf_, j); it; ++it) {
            tk.emplace_back(nf_ + it.row(), j, it.value());
            tk.emplace_back(j, nf_ + it.row(), it.value());
        }
    if (gauge_)
        for (int r = 0; r < np; ++r) {
            tk.emplace_back(nf_ + np, nf_ + r, prow_weight_[r]);
            tk.emplace_back(nf_ + r, nf_ + np, prow_weight_[r]);
        }
    SpMat K(n, n);
    K.setFromTriplets(tk.begin(), tk.end());
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    lu_->analyzePattern(K);
    lu_->factorize(K);
    if (lu_->info() != Eigen::Success)
        throw SolverError("local saddle system is singular: " + lu_->lastErrorMessage());
}

double LocalProblem::boundary_flux(const Vec& g) const {
    if (pressure_ == PressureSpace::None || g.size() == 0) return 0.0;
    return (Bb_ * g).sum();
}

double LocalProblem::region_area() const {
    double s = 0.0;
    for (double w : prow_weight_) s += w;
    return s;
}

Vec LocalProblem::solve(const Vec& g, const Vec& r, const Vec& t, Vec* pressure) const {
    const int nb = static_cast<int>(region_.fixed.size());
    Vec gg = g.size() ? g : Vec::Zero(nb);
    if (gg.size() != nb) throw SolverError("LocalProblem::solve: boundary data has the wrong length");
    Vec out(region_.dofs.size());
    for (int i = 0; i < nb; ++i) out[fixed_pos_[i]] = gg[i];
    const int np = pressure_rows();
    if (nf_ == 0) {
        if (pressure) *pressure = Vec::Zero(np);
        return out;
    }
    Vec rhs_u = r.size() ? Vec(r) : Vec(Vec::Zero(nf_));
    if (nb) rhs_u -= Afb_ * gg;
    Vec x;
    if (pressure_ == PressureSpace::None) {
        x = ldlt_->solve(rhs_u);
    } else {
        Vec tt = t.size() ? Vec(t) : Vec(Vec::Zero(np));
        Vec bg = nb ? Vec(Bb_ * gg) : Vec(Vec::Zero(np));
        if (gauge_) {
            double scale = tt.cwiseAbs().sum() + bg.cwiseAbs().sum();
            double gap = tt.sum() - bg.sum();
            if (scale > 0.0 && std::abs(gap) > 1e-9 * scale)
                throw SolverError("incompatible Stokes data: divergence target and boundary flux differ by " +
                                  std::to_string(gap));
        }
        const int n = nf_ + np + (gauge_ ? 1 : 0);
        Vec rhs = Vec::Zero(n);
        rhs.head(nf_) = rhs_u;
        rhs.segment(nf_, np) = tt - bg;
        Vec sol = lu_->solve(rhs);
        x = sol.head(nf_);
        if (pressure) *pressure = -sol.segment(nf_, np);
    }
    for (int i = 0; i < nf_; ++i) out[free_pos_[i]] = x[i];
    return out;
}

Vec LocalProblem::solve_load(const Vec& global_load, Vec* pressure) const {
    return solve(Vec(), gather(global_load, region_.free), Vec(), pressure);
}

FineSolution solve_fine(const OperatorSpec& spec, const FineSpace& space, const FineMesh& mesh, const System& sys,
                        SolverKind solver) {
    std::vector<int> cells(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) cells[t] = t;
    Region all = make_region(space, mesh, cells, RegionBoundary::InteriorOnly);
    const bool stokes = spec.kind == OperatorKind::Stokes;
    if (all.fixed.empty())
        throw SolverError(std::string("solve_fine: no Dirichlet condition anywhere, the operator is singular") +
                          (stokes ? " (Stokes needs perforations or a Dirichlet side)" : ""));
    Vec g(all.fixed.size());
    for (std::size_t i = 0; i < all.fixed.size(); ++i) g[i] = space.dirichlet_value[all.fixed[i]];
    Vec rf = gather(sys.F, all.free);
    FineSolution out;
    out.u = Vec::Zero(space.ndof());
    if (solver == SolverKind::CG && !stokes) {
        SpMat Aff = submatrix(sys.A, all.free, all.free, space.ndof());
        SpMat Afb = submatrix(sys.A, all.free, all.fixed, space.ndof());
        Vec rhs = rf - Afb * g;
        Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(1e-10);
        cg.setMaxIterations(10 * std::max<int>(1, Aff.rows()));
        cg.compute(Aff);
        Vec x = cg.solve(rhs);
        if (cg.info() != Eigen::Success)
            throw SolverError("solve_fine: conjugate gradients stopped at relative residual " +
                              std::to_string(cg.error()) + " after " + std::to_string(cg.iterations()) + " iterations");
        for (std::size_t i = 0; i < all.free.size(); ++i) out.u[all.free[i]] = x[i];
        for (std::size_t i = 0; i < all.fixed.size(); ++i) out.u[all.fixed[i]] = g[i];
        return out;
    }
    LocalProblem lp(space, mesh, all, sys.A, stokes ? &sys.B : nullptr, stokes ? PressureSpace::FineP0 : PressureSpace::None);
    Vec p;
    Vec loc = lp.solve(g, rf, Vec(), stokes ? &p : nullptr);
    for (std::size_t i = 0; i < all.dofs.size(); ++i) out.u[all.dofs[i]] = loc[i];

    // residual on the free rows
    Vec res = sys.A * out.u - sys.F;
    if (stokes) {
        out.p = Vec::Zero(mesh.num_triangles());
        for (std::size_t i = 0; i < all.cells.size(); ++i) out.p[all.cells[i]] = p[i];
        res -= sys.B.transpose() * out.p;
    }
    double rn = gather(res, all.free).norm();
    double scale = std::max(rf.norm(), (gather(sys.A * out.u, all.free)).norm());
    if (scale > 0.0 && rn > 1e-10 * scale)
        throw SolverError("solve_fine: relative residual " + std::to_string(rn / scale) + " above 1e-10");
    return out;
}

} // namespace perfms

namespace perfms {

std::uint64_t Discretization::hash() const {
    Hasher h;
    h.u64(geometry.hash());
    h.u64(spec.hash());
    h.i64(grid.n);
    h.i64(levels);
    h.u64(mesh.hash());
    return h.value();
}

Discretization discretize(const PerforatedGeometry& g, const OperatorSpec& spec, int n_per_side, int levels) {
    Discretization d;
    d.geometry = g;
    d.spec = spec;
    d.levels = levels;
    d.grid = build_coarse_grid(g, n_per_side);
    d.mesh = refine_to_fine(d.grid, g, levels);
    d.space = build_space(spec, d.mesh);
    d.sys = assemble(spec, d.space, d.mesh);
    d.nbs = build_neighborhoods(d.grid, d.mesh, spec.kind == OperatorKind::Stokes);
    d.cover = cover_constant(d.grid, d.nbs);
    return d;
}

} // namespace perfms
