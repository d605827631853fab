#include "perfms/diagnostics_metrics.hpp"

#include "perfms/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace perfms {

namespace {

// Columns chi_i * snapshot of one neighborhood, as sparse global vectors.
std::vector<SpVec> products(const Discretization& d, const SnapshotSpace& s, const Vec& chi, int comp) {
    const int nc = d.space.ncomp;
    std::vector<SpVec> out;
    for (int j = 0; j < s.size(); ++j) {
        Vec v = Vec::Zero(d.space.ndof());
        bool any = false;
        for (std::size_t a = 0; a < s.dofs.size(); ++a) {
            int dof = s.dofs[a];
            if (comp >= 0 && dof % nc != comp) continue;
            double x = chi[dof / nc] * s.columns(a, j);
            if (x != 0.0) {
                v[dof] = x;
                any = true;
            }
        }
        if (any) out.push_back(sparsify(v));
    }
    return out;
}

// Energy-orthonormal basis of span(cols), dropping directions below rel_tol.
std::vector<SpVec> local_orthonormal(const SpMat& A, const std::vector<SpVec>& cols, double rel_tol) {
    if (cols.empty()) return {};
    SpMat Z = columns_matrix(static_cast<int>(A.rows()), cols);
    Mat G = Mat(SpMat(Z.transpose() * (A * Z)));
    G = 0.5 * (G + G.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    const Vec& mu = es.eigenvalues();
    double top = mu.maxCoeff();
    std::vector<SpVec> out;
    for (int k = static_cast<int>(mu.size()) - 1; k >= 0; --k) {
        if (!(mu[k] > rel_tol * top)) break;
        Vec v = Z * (es.eigenvectors().col(k) / std::sqrt(mu[k]));
        out.push_back(sparsify(v));
    }
    return out;
}

bool has_natural_outer(const FineSpace& sp) {
    for (int n = 0; n < sp.num_nodes; ++n)
        if (sp.outer_sides[n])
            for (int c = 0; c < sp.ncomp; ++c)
                if (!sp.dirichlet[n * sp.ncomp + c]) return true;
    return false;
}

std::vector<double> element_areas(const Discretization& d) {
    std::vector<double> a(d.grid.num_elements(), 0.0);
    for (int K = 0; K < d.grid.num_elements(); ++K)
        for (int t : d.grid.fine_cells[K]) a[K] += d.mesh.area(t);
    return a;
}

} // namespace

SnapshotReference::SnapshotReference(const Discretization& d, const SnapshotSet& snaps, const PartitionOfUnity& pou,
                                     int threads)
    : d_(d) {
    for (int i = 0; i < d.space.ndof(); ++i)
        if (d.space.dirichlet[i] && d.space.dirichlet_value[i] != 0.0)
            throw ValidationError("snapshot solution needs homogeneous Dirichlet data");
    const int nnb = static_cast<int>(d.nbs.size());
    const bool stokes = d.spec.kind == OperatorKind::Stokes;
    const int ndof = d.space.ndof();

    if (!stokes) {
        std::vector<std::vector<SpVec>> local(nnb);
        std::vector<int> ncols(nnb, 0);
        parallel_for(nnb, threads, [&](int i) {
            auto cols = products(d, snaps.spaces[i], pou.chi[i], -1);
            ncols[i] = static_cast<int>(cols.size());
            local[i] = local_orthonormal(d.sys.A, cols, 1e-12);
        });
        std::vector<SpVec> all;
        for (int i = 0; i < nnb; ++i) {
            columns_ += ncols[i];
            all.insert(all.end(), local[i].begin(), local[i].end());
        }
        Z_ = columns_matrix(ndof, all);
        G_ = Mat(SpMat(Z_.transpose() * (d.sys.A * Z_)));
        G_ = 0.5 * (G_ + G_.transpose());
        std::vector<int> keep = cholesky_pivots(G_, 1e-10 * G_.diagonal().maxCoeff());
        std::sort(keep.begin(), keep.end());
        rank_ = static_cast<int>(keep.size());
        const int total = static_cast<int>(G_.rows());
        if (rank_ < total)
            warnings_.push_back("snapshot Gram is rank deficient: " + std::to_string(total - rank_) + " of " +
                                std::to_string(total) + " directions deflated");
        std::vector<SpVec> kept;
        for (int k : keep) kept.push_back(all[k]);
        Z_ = columns_matrix(ndof, kept);
        G_ = Mat(SpMat(Z_.transpose() * (d.sys.A * Z_)));
        G_ = 0.5 * (G_ + G_.transpose());
        llt_.compute(G_);
        if (llt_.info() != Eigen::Success) throw SolverError("snapshot Gram is not positive definite after deflation");
        return;
    }

    // Stokes: the snapshot space is spanned by Stokes extensions of skeleton traces.
    StokesExtension ext(d);
    std::vector<int> skel_pos(ndof, -1);
    std::vector<int> skel;
    for (int K = 0; K < d.grid.num_elements(); ++K)
        for (int dof : ext.region(K).fixed)
            if (!d.space.dirichlet[dof] && skel_pos[dof] < 0) {
                skel_pos[dof] = 0;
                skel.push_back(dof);
            }
    std::sort(skel.begin(), skel.end());
    for (std::size_t k = 0; k < skel.size(); ++k) skel_pos[skel[k]] = static_cast<int>(k);
    trace_dofs_ = static_cast<int>(skel.size());

    std::vector<std::vector<Eigen::Triplet<double>>> trip(nnb);
    std::vector<int> ncols(nnb, 0);
    parallel_for(nnb, threads, [&](int i) {
        auto cols = products(d, snaps.spaces[i], pou.chi[i], 0);
        auto c1 = products(d, snaps.spaces[i], pou.chi[i], 1);
        cols.insert(cols.end(), c1.begin(), c1.end());
        ncols[i] = static_cast<int>(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j)
            for (SpVec::InnerIterator it(cols[j]); it; ++it)
                if (skel_pos[it.index()] >= 0) trip[i].emplace_back(skel_pos[it.index()], static_cast<int>(j), it.value());
    });
    std::vector<Eigen::Triplet<double>> all_t;
    int off = 0;
    for (int i = 0; i < nnb; ++i) {
        for (const auto& t : trip[i]) all_t.emplace_back(t.row(), t.col() + off, t.value());
        off += ncols[i];
    }
    columns_ = off;
    SpMat T(trace_dofs_, off);
    T.setFromTriplets(all_t.begin(), all_t.end());
    Mat M = Mat(SpMat(T * T.transpose()));
    Eigen::LDLT<Mat> mt(M);
    Vec D = mt.vectorD();
    double top = D.cwiseAbs().maxCoeff();
    trace_rank_ = 0;
    for (int k = 0; k < D.size(); ++k)
        if (D[k] > 1e-10 * top) ++trace_rank_;

    std::vector<SpVec> basis;
    if (trace_rank_ == trace_dofs_) {
        // full trace rank: extensions of unit traces give a sparse basis
        std::vector<std::vector<int>> touching(trace_dofs_);
        for (int K = 0; K < d.grid.num_elements(); ++K)
            for (int dof : ext.region(K).fixed)
                if (skel_pos[dof] >= 0) touching[skel_pos[dof]].push_back(K);
        basis.resize(trace_dofs_);
        parallel_for(trace_dofs_, threads, [&](int k) {
            Vec delta = Vec::Zero(ndof);
            delta[skel[k]] = 1.0;
            basis[k] = sparsify(ext.extend_elements(delta, touching[k]));
        });
    } else {
        warnings_.push_back("product traces span " + std::to_string(trace_rank_) + " of " + std::to_string(trace_dofs_) +
                            " skeleton dofs; using the dense trace range");
        Eigen::SelfAdjointEigenSolver<Mat> es(M);
        std::vector<int> all_el(d.grid.num_elements());
        for (int K = 0; K < d.grid.num_elements(); ++K) all_el[K] = K;
        double emax = es.eigenvalues().maxCoeff();
        for (int k = trace_dofs_ - 1; k >= 0; --k) {
            if (!(es.eigenvalues()[k] > 1e-10 * emax)) break;
            Vec tr = Vec::Zero(ndof);
            for (int a = 0; a < trace_dofs_; ++a) tr[skel[a]] = es.eigenvectors()(a, k);
            basis.push_back(sparsify(ext.extend_elements(tr, all_el)));
        }
    }
    rank_ = static_cast<int>(basis.size());
    Z_ = columns_matrix(ndof, basis);
    SpMat Gs = Z_.transpose() * (d.sys.A * Z_);
    Bc_ = coarse_divergence(d, Z_);
    const int q = static_cast<int>(Bc_.rows());
    const bool gauge = !has_natural_outer(d.space);
    auto areas = element_areas(d);
    const int n = rank_ + q + (gauge ? 1 : 0);
    std::vector<Eigen::Triplet<double>> tk;
    for (int j = 0; j < Gs.outerSize(); ++j)
        for (SpMat::InnerIterator it(Gs, j); it; ++it) tk.emplace_back(it.row(), j, it.value());
    for (int K = 0; K < q; ++K)
        for (int j = 0; j < rank_; ++j)
            if (Bc_(K, j) != 0.0) {
                tk.emplace_back(rank_ + K, j, Bc_(K, j));
                tk.emplace_back(j, rank_ + K, Bc_(K, j));
            }
    if (gauge)
        for (int K = 0; K < q; ++K) {
            tk.emplace_back(rank_ + q, rank_ + K, areas[K]);
            tk.emplace_back(rank_ + K, rank_ + q, areas[K]);
        }
    SpMat Kmat(n, n);
    Kmat.setFromTriplets(tk.begin(), tk.end());
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    lu_->analyzePattern(Kmat);
    lu_->factorize(Kmat);
    if (lu_->info() != Eigen::Success) throw SolverError("snapshot Stokes system is singular: " + lu_->lastErrorMessage());
}

SnapshotSolution SnapshotReference::solve(const Vec& Fin) const {
    const Vec& F = Fin.size() ? Fin : d_.sys.F;
    SnapshotSolution out;
    out.columns = columns_;
    out.rank = rank_;
    out.trace_dofs = trace_dofs_;
    out.trace_rank = trace_rank_;
    out.warnings = warnings_;
    Vec b = Z_.transpose() * F;
    if (d_.spec.kind != OperatorKind::Stokes) {
        Vec x = llt_.solve(b);
        out.u = Z_ * x;
        return out;
    }
    const int q = static_cast<int>(Bc_.rows());
    Vec rhs = Vec::Zero(lu_->rows());
    rhs.head(rank_) = b;
    Vec sol = lu_->solve(rhs);
    out.u = Z_ * sol.head(rank_);
    out.p_coarse = -sol.segment(rank_, q);
    out.p.resize(d_.mesh.num_triangles());
    for (int t = 0; t < d_.mesh.num_triangles(); ++t) out.p[t] = out.p_coarse[d_.mesh.parent[t]];
    return out;
}

Vec coarse_average(const Discretization& d, const Vec& p_fine) {
    Vec out = Vec::Zero(d.grid.num_elements());
    for (int K = 0; K < d.grid.num_elements(); ++K) {
        double a = 0.0, s = 0.0;
        for (int t : d.grid.fine_cells[K]) {
            a += d.mesh.area(t);
            s += d.mesh.area(t) * p_fine[t];
        }
        out[K] = a > 0.0 ? s / a : 0.0;
    }
    return out;
}

double energy_norm_sq(const Discretization& d, const Vec& u) { return u.dot(d.sys.A * u); }

ErrorMeter::ErrorMeter(const Discretization& d) : d_(d), areas_(element_areas(d)) {
    mass_ = assemble_mass(d.space, d.mesh, nullptr);
    if (d.spec.kind == OperatorKind::Elasticity) mass_ *= d.spec.xi() + 2.0 * d.spec.mu();
}

ErrorReport ErrorMeter::operator()(const Vec& u_ref, const Vec& p_ref, const Vec& u, const Vec& p_coarse, int dofs,
                                   ReferenceKind kind) const {
    ErrorReport r;
    r.dofs = dofs;
    r.reference = kind;
    double l2 = u_ref.dot(mass_ * u_ref);
    double en = energy_norm_sq(d_, u_ref);
    if (!(l2 > 0.0) || !(en > 0.0)) throw ValidationError("relative error is undefined for a zero reference");
    Vec e = u_ref - u;
    r.e_L2 = std::sqrt(std::max(0.0, e.dot(mass_ * e)) / l2);
    r.e_H1 = std::sqrt(std::max(0.0, energy_norm_sq(d_, e)) / en);
    if (d_.spec.kind == OperatorKind::Stokes && p_ref.size() && p_coarse.size()) {
        Vec pbar = coarse_average(d_, p_ref);
        double num = 0.0, den = 0.0;
        for (int K = 0; K < pbar.size(); ++K) {
            num += areas_[K] * (pbar[K] - p_coarse[K]) * (pbar[K] - p_coarse[K]);
            den += areas_[K] * pbar[K] * pbar[K];
        }
        if (!(den > 0.0)) throw ValidationError("relative pressure error is undefined for a zero reference");
        r.e_p = std::sqrt(num / den);
    }
    return r;
}

BoundCheck aposteriori_bound(const Discretization& d, const std::vector<double>& norms,
                             const std::vector<double>& next_lambda, const Vec& u_ref, const Vec& u_ms) {
    BoundCheck b;
    double s = 0.0;
    for (std::size_t i = 0; i < norms.size(); ++i) {
        double l = i < next_lambda.size() ? next_lambda[i] : std::numeric_limits<double>::infinity();
        double factor = std::isinf(l) ? 1.0 : 1.0 + 1.0 / l;
        s += factor * norms[i] * norms[i];
    }
    b.bound = d.cover * s;
    b.actual = std::max(0.0, energy_norm_sq(d, u_ref - u_ms));
    b.ratio = b.actual > 0.0 ? b.bound / b.actual : std::numeric_limits<double>::infinity();
    b.holds = b.bound >= (1.0 - 1e-8) * b.actual;
    return b;
}

SpMat edge_flux_matrix(const Discretization& d) {
    const int ne = d.grid.num_edges();
    // normal of each coarse edge, oriented away from its first adjacent element
    std::vector<Vec2> normal(ne);
    std::vector<char> done(ne, 0);
    for (int K = 0; K < d.grid.num_elements(); ++K) {
        const auto& el = d.grid.elements[K];
        Vec2 c{(d.grid.nodes[el[0]][0] + d.grid.nodes[el[1]][0] + d.grid.nodes[el[2]][0]) / 3.0,
               (d.grid.nodes[el[0]][1] + d.grid.nodes[el[1]][1] + d.grid.nodes[el[2]][1]) / 3.0};
        for (int k = 0; k < 3; ++k) {
            int E = d.grid.element_edges[K][k];
            if (done[E]) continue;
            done[E] = 1;
            Vec2 a = d.grid.nodes[d.grid.edges[E][0]], b = d.grid.nodes[d.grid.edges[E][1]];
            Vec2 n{b[1] - a[1], a[0] - b[0]};
            if ((c[0] - a[0]) * n[0] + (c[1] - a[1]) * n[1] > 0.0) n = {-n[0], -n[1]};
            double len = std::hypot(n[0], n[1]);
            normal[E] = {n[0] / len, n[1] / len};
        }
    }
    const int nv = d.mesh.num_vertices();
    const int nc = d.space.ncomp;
    std::vector<Eigen::Triplet<double>> tr;
    for (int e = 0; e < d.mesh.num_edges(); ++e) {
        int E = d.mesh.edge_coarse[e];
        if (E < 0) continue;
        int va = d.mesh.edges[e][0], vb = d.mesh.edges[e][1];
        Vec2 pa = d.mesh.vertices[va], pb = d.mesh.vertices[vb];
        double w = std::hypot(pb[0] - pa[0], pb[1] - pa[1]) / 6.0;
        for (int c = 0; c < std::min(nc, 2); ++c) {
            double nn = normal[E][c] * w;
            if (d.space.order == 2) {
                tr.emplace_back(E, va * nc + c, nn);
                tr.emplace_back(E, vb * nc + c, nn);
                tr.emplace_back(E, (nv + e) * nc + c, 4.0 * nn);
            } else {
                tr.emplace_back(E, va * nc + c, 3.0 * nn);
                tr.emplace_back(E, vb * nc + c, 3.0 * nn);
            }
        }
    }
    SpMat P(ne, d.space.ndof());
    P.setFromTriplets(tr.begin(), tr.end());
    return P;
}

double edge_flux(const Discretization& d, int coarse_edge, const Vec& u) {
    SpMat P = edge_flux_matrix(d);
    return P.row(coarse_edge).dot(u.transpose().sparseView());
}

InfSupReport infsup_diagnostic(const Discretization& d, const CoarseSolver& cs) {
    if (d.spec.kind != OperatorKind::Stokes) throw ValidationError("inf-sup diagnostic applies to Stokes only");
    InfSupReport rep;
    const Mat& Bc = cs.coarse_div();
    const int q = static_cast<int>(Bc.rows());
    const int m = cs.dim();

    // flux witnesses per interior coarse edge
    std::vector<int> adj(d.grid.num_edges(), 0);
    for (int K = 0; K < d.grid.num_elements(); ++K)
        for (int k = 0; k < 3; ++k) ++adj[d.grid.element_edges[K][k]];
    std::vector<char> fluid(d.grid.num_edges(), 0);
    for (int e = 0; e < d.mesh.num_edges(); ++e)
        if (d.mesh.edge_coarse[e] >= 0) fluid[d.mesh.edge_coarse[e]] = 1;
    rep.edge_witness.assign(d.grid.num_edges(), 0.0);
    if (m > 0) {
        SpMat P = edge_flux_matrix(d);
        Mat flux = Mat(SpMat(P * columns_matrix(d.space.ndof(), cs.columns())));
        for (int j = 0; j < m; ++j) {
            double scale = std::sqrt(std::max(cs.gram()(j, j), 1e-300));
            for (int E = 0; E < d.grid.num_edges(); ++E)
                if (adj[E] == 2 && fluid[E]) rep.edge_witness[E] = std::max(rep.edge_witness[E], std::abs(flux(E, j)) / scale);
        }
    }
    double wmax = 0.0;
    for (double w : rep.edge_witness) wmax = std::max(wmax, w);
    for (int E = 0; E < d.grid.num_edges(); ++E)
        if (adj[E] == 2 && fluid[E] && !(rep.edge_witness[E] > 1e-8 * wmax)) rep.missing_edges.push_back(E);

    // smallest Schur eigenvalue on zero-mean pressures
    rep.beta = 0.0;
    if (m > 0 && q > 1) {
        Mat X(m, q);
        for (int k = 0; k < q; ++k) X.col(k) = cs.solve_gram(Bc.row(k).transpose());
        Mat S = Bc * X;
        S = 0.5 * (S + S.transpose());
        auto areas = element_areas(d);
        Vec w(q);
        for (int K = 0; K < q; ++K) w[K] = 1.0 / std::sqrt(areas[K]);
        Mat Sh = w.asDiagonal() * S * w.asDiagonal();
        Vec v(q);
        for (int K = 0; K < q; ++K) v[K] = std::sqrt(areas[K]);
        Mat vm = v;
        Eigen::HouseholderQR<Mat> qr(vm);
        Mat Q = Mat(qr.householderQ()).rightCols(q - 1);
        Eigen::SelfAdjointEigenSolver<Mat> es(Q.transpose() * Sh * Q);
        rep.beta = es.eigenvalues()[0];
        double top = es.eigenvalues().cwiseAbs().maxCoeff();
        rep.positive = rep.beta > 1e-10 * top;
    }
    if (!rep.positive || !rep.missing_edges.empty()) {
        std::string names;
        for (std::size_t k = 0; k < rep.missing_edges.size(); ++k) {
            auto e = d.grid.edges[rep.missing_edges[k]];
            names += (k ? ", " : "") + std::to_string(rep.missing_edges[k]) + " (" + std::to_string(e[0]) + "-" +
                     std::to_string(e[1]) + ")";
        }
        rep.message = !rep.missing_edges.empty() ? "coarse edges without a flux witness: " + names
                                                 : "pressure Schur complement is not positive on zero-mean pressures";
    }
    return rep;
}

void write_vtk(std::ostream& out, const Discretization& d, const Vec& u, const Vec& p_cells, const std::string& title) {
    const int nv = d.mesh.num_vertices();
    const int nt = d.mesh.num_triangles();
    const int nc = d.space.ncomp;
    char buf[128];
    out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << nv << " double\n";
    for (const auto& v : d.mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.12e %.12e 0\n", v[0], v[1]);
        out << buf;
    }
    out << "CELLS " << nt << ' ' << 4 * nt << '\n';
    for (const auto& t : d.mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    out << "CELL_TYPES " << nt << '\n';
    for (int t = 0; t < nt; ++t) out << "5\n";
    out << "POINT_DATA " << nv << '\n';
    if (nc == 1) {
        out << "SCALARS u double 1\nLOOKUP_TABLE default\n";
        for (int v = 0; v < nv; ++v) {
            std::snprintf(buf, sizeof buf, "%.12e\n", u.size() ? u[v] : 0.0);
            out << buf;
        }
    } else {
        out << "VECTORS u double\n";
        for (int v = 0; v < nv; ++v) {
            double x = u.size() ? u[v * nc] : 0.0, y = u.size() ? u[v * nc + 1] : 0.0;
            std::snprintf(buf, sizeof buf, "%.12e %.12e 0\n", x, y);
            out << buf;
        }
    }
    if (p_cells.size()) {
        out << "CELL_DATA " << nt << "\nSCALARS p double 1\nLOOKUP_TABLE default\n";
        for (int t = 0; t < nt; ++t) {
            std::snprintf(buf, sizeof buf, "%.12e\n", p_cells[t]);
            out << buf;
        }
    }
    if (!out) throw IoError("field export failed");
}

} // namespace perfms
