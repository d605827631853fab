#include "perfms/offline_space.hpp"

#include "perfms/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

namespace perfms {

double SpectralDecomposition::next_eigenvalue(int l) const {
    // zero-energy modes (constants away from the holes) are floored relative to the top of the spectrum
    if (l < count()) return std::max(lambda[l], 1e-8 * lambda[count() - 1]);
    return std::numeric_limits<double>::infinity();
}

std::vector<int> cholesky_pivots(const Mat& G, double tol) {
    const int n = static_cast<int>(G.rows());
    Vec diag = G.diagonal();
    Mat L = Mat::Zero(n, std::min(n, 64));
    std::vector<char> used(n, 0);
    std::vector<int> piv;
    for (int step = 0; step < n; ++step) {
        int j = -1;
        double best = tol;
        for (int i = 0; i < n; ++i)
            if (!used[i] && diag[i] > best) {
                best = diag[i];
                j = i;
            }
        if (j < 0) break;
        if (step == L.cols()) L.conservativeResize(n, std::min(n, 2 * step));
        used[j] = 1;
        piv.push_back(j);
        Vec col = G.col(j) - L.leftCols(step) * L.row(j).head(step).transpose();
        col /= std::sqrt(diag[j]);
        for (int i = 0; i < n; ++i)
            if (used[i] && i != j) col[i] = 0.0;
        L.col(step) = col;
        for (int i = 0; i < n; ++i)
            if (!used[i]) diag[i] -= col[i] * col[i];
    }
    return piv;
}

SpectralDecomposition local_gevp(const Mat& A, const Mat& S) {
    const int n = static_cast<int>(S.rows());
    if (A.rows() != n || A.cols() != n || S.cols() != n) throw ValidationError("local_gevp: size mismatch");
    SpectralDecomposition sd;
    sd.A_off = A;
    sd.S_off = S;
    if (n == 0) {
        sd.psi.resize(0, 0);
        return sd;
    }
    // pivoted Cholesky of S picks a well-conditioned column subset
    std::vector<int> piv = cholesky_pivots(S, 1e-12 * S.trace());
    if (piv.empty()) throw SolverError("local_gevp: spectral weight has numerical rank 0 of " + std::to_string(n));
    sd.kept = piv;
    std::sort(sd.kept.begin(), sd.kept.end());
    sd.deflated = n - static_cast<int>(sd.kept.size());
    const int m = static_cast<int>(sd.kept.size());
    Mat Sk(m, m), Ak(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            Sk(a, b) = S(sd.kept[a], sd.kept[b]);
            Ak(a, b) = A(sd.kept[a], sd.kept[b]);
        }
    Eigen::LLT<Mat> llt(Sk);
    if (llt.info() != Eigen::Success)
        throw SolverError("local_gevp: spectral weight is singular after deflation (rank " + std::to_string(m) + " of " +
                          std::to_string(n) + ")");
    Mat Lk = llt.matrixL();
    Mat Y = Lk.triangularView<Eigen::Lower>().solve(Ak);
    Mat C = Lk.triangularView<Eigen::Lower>().solve(Y.transpose());
    C = 0.5 * (C + C.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    if (es.info() != Eigen::Success) throw SolverError("local_gevp: eigen solver failed");
    sd.lambda = es.eigenvalues();
    Mat pk = Lk.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
    sd.psi = Mat::Zero(n, m);
    for (int a = 0; a < m; ++a) sd.psi.row(sd.kept[a]) = pk.row(a);
    return sd;
}

double pou_value(const CoarseGrid& grid, PouKind kind, const Neighborhood& nb, int element, const Vec2& p) {
    const auto& el = grid.elements[element];
    Vec2 q[3];
    for (int k = 0; k < 3; ++k) {
        auto l = grid.node_lattice(el[k]);
        q[k] = {l[0] / double(grid.n), l[1] / double(grid.n)};
    }
    double det = (q[1][0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[2][0] - q[0][0]) * (q[1][1] - q[0][1]);
    double lam[3];
    for (int k = 0; k < 3; ++k) {
        const auto& a = q[(k + 1) % 3];
        const auto& b = q[(k + 2) % 3];
        lam[k] = ((a[0] - p[0]) * (b[1] - p[1]) - (b[0] - p[0]) * (a[1] - p[1])) / det;
    }
    if (nb.kind == NeighborhoodKind::Node) {
        for (int k = 0; k < 3; ++k)
            if (el[k] == nb.anchor) return kind == PouKind::LinearHat ? lam[k] : lam[k] * (2.0 * lam[k] - 1.0);
        return 0.0;
    }
    if (kind == PouKind::LinearHat) throw ValidationError("pou_value: hats have no edge anchors");
    for (int k = 0; k < 3; ++k)
        if (grid.element_edges[element][k] == nb.anchor) return 4.0 * lam[(k + 1) % 3] * lam[(k + 2) % 3];
    return 0.0;
}

PartitionOfUnity build_pou(const Discretization& d) {
    PartitionOfUnity pou;
    pou.kind = d.spec.kind == OperatorKind::Stokes ? PouKind::QuadraticLagrange : PouKind::LinearHat;
    pou.chi.resize(d.nbs.size());
    for (std::size_t i = 0; i < d.nbs.size(); ++i) {
        const auto& nb = d.nbs[i];
        Vec chi = Vec::Zero(d.space.num_nodes);
        for (int K : nb.elements)
            for (int t : d.grid.fine_cells[K])
                for (int k = 0; k < d.space.nodes_per_cell(); ++k) {
                    int node = d.space.cell_nodes[t][k];
                    chi[node] = pou_value(d.grid, pou.kind, nb, K, d.space.node_ref[node]);
                }
        pou.chi[i] = std::move(chi);
    }
    return pou;
}

Mat spectral_weight(const Discretization& d, const Neighborhood& nb, const SnapshotSpace& s, const PartitionOfUnity& pou) {
    SpMat M;
    if (d.spec.kind == OperatorKind::Stokes) {
        M = assemble_mass(d.space, d.mesh, &nb.base_cells, &pou.chi[nb.id]);
    } else {
        M = assemble_mass(d.space, d.mesh, &nb.base_cells);
        if (d.spec.kind == OperatorKind::Elasticity) M *= d.spec.xi() + 2.0 * d.spec.mu();
    }
    SpMat Ml = submatrix(M, s.dofs, s.dofs, d.space.ndof());
    Mat MC = Ml * s.columns;
    Mat S = s.columns.transpose() * MC;
    return 0.5 * (S + S.transpose());
}

SpectralDecomposition local_gevp(const Discretization& d, const Neighborhood& nb, const SnapshotSpace& s,
                                 const PartitionOfUnity& pou) {
    SpectralDecomposition sd = local_gevp(snapshot_energy_gram(d, nb, s), spectral_weight(d, nb, s, pou));
    sd.nb = nb.id;
    return sd;
}

StokesExtension::StokesExtension(const Discretization& d) : d_(d) {
    const int ne = d.grid.num_elements();
    regions_.resize(ne);
    problems_.resize(ne);
    for (int K = 0; K < ne; ++K) {
        regions_[K] = std::make_unique<Region>(make_region(d.space, d.mesh, d.grid.fine_cells[K], RegionBoundary::All));
        System s = assemble(d.spec, d.space, d.mesh, &regions_[K]->cells);
        problems_[K] = std::make_unique<LocalProblem>(d.space, d.mesh, *regions_[K], s.A, &s.B, PressureSpace::FineP0);
    }
}

Vec StokesExtension::extend(int element, const Vec& field) const {
    const Region& r = *regions_[element];
    const LocalProblem& lp = *problems_[element];
    Vec g = gather(field, r.fixed);
    double c = lp.boundary_flux(g) / lp.region_area();
    Vec t(r.cells.size());
    for (std::size_t i = 0; i < r.cells.size(); ++i) t[i] = c * d_.mesh.area(r.cells[i]);
    return lp.solve(g, Vec(), t);
}

Vec StokesExtension::extend_elements(const Vec& field, const std::vector<int>& elements) const {
    Vec out = Vec::Zero(d_.space.ndof());
    for (int K : elements) {
        Vec v = extend(K, field);
        const auto& dofs = regions_[K]->dofs;
        for (std::size_t i = 0; i < dofs.size(); ++i) out[dofs[i]] = v[i];
    }
    return out;
}

OfflineData build_offline_data(const Discretization& d, const SnapshotSet& snaps, int threads) {
    OfflineData data;
    data.pou = build_pou(d);
    data.spectra.resize(d.nbs.size());
    parallel_for(static_cast<int>(d.nbs.size()), threads,
                 [&](int i) { data.spectra[i] = local_gevp(d, d.nbs[i], snaps.spaces[i], data.pou); });
    return data;
}

Vec eigenfunction(const SnapshotSpace& s, const SpectralDecomposition& sd, int k) { return s.columns * sd.psi.col(k); }

SpVec sparsify(const Vec& v, double drop) {
    SpVec out(v.size());
    for (int i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > drop) out.insert(i) = v[i];
    return out;
}

SpMat columns_matrix(int ndof, const std::vector<SpVec>& cols) {
    std::vector<Eigen::Triplet<double>> tr;
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (SpVec::InnerIterator it(cols[j]); it; ++it) tr.emplace_back(it.index(), static_cast<int>(j), it.value());
    SpMat Z(ndof, cols.size());
    Z.setFromTriplets(tr.begin(), tr.end());
    return Z;
}

namespace {

// Ordered Cholesky of the energy Gram: a column is dropped when its remainder
// against the earlier kept columns is negligible. Degenerate eigenpairs split
// per component, and products that agree on the coarse skeleton, produce these.
void prune_dependent(const SpMat& A, std::vector<SpVec>& cols, std::vector<BasisTag>& tags,
                     std::vector<std::string>& warn, double tol) {
    const int n = static_cast<int>(cols.size());
    if (n == 0) return;
    SpMat Z = columns_matrix(static_cast<int>(A.rows()), cols);
    Mat G = Mat(SpMat(Z.transpose() * (A * Z)));
    G = 0.5 * (G + G.transpose());
    const double gmax = G.diagonal().maxCoeff();
    Mat L = Mat::Zero(n, n);
    std::vector<int> kept;
    std::vector<SpVec> keep_c;
    std::vector<BasisTag> keep_t;
    for (int j = 0; j < n; ++j) {
        const int m = static_cast<int>(kept.size());
        Vec row(m);
        for (int a = 0; a < m; ++a) {
            double v = G(j, kept[a]);
            for (int b = 0; b < a; ++b) v -= row[b] * L(a, b);
            row[a] = v / L(a, a);
        }
        if (!(G(j, j) > 1e-16 * gmax)) {
            warn.push_back("neighborhood " + std::to_string(tags[j].nb) + " eigenfunction " + std::to_string(tags[j].eig) +
                           (tags[j].comp >= 0 ? " component " + std::to_string(tags[j].comp) : std::string()) +
                           " has negligible energy, dropped");
            continue;
        }
        double e = G(j, j) - row.squaredNorm();
        if (e <= tol * G(j, j)) {
            warn.push_back("neighborhood " + std::to_string(tags[j].nb) + " eigenfunction " + std::to_string(tags[j].eig) +
                           (tags[j].comp >= 0 ? " component " + std::to_string(tags[j].comp) : std::string()) +
                           " is linearly dependent on earlier columns, dropped");
            continue;
        }
        L.row(m).head(m) = row.transpose();
        L(m, m) = std::sqrt(e);
        kept.push_back(j);
        keep_c.push_back(cols[j]);
        keep_t.push_back(tags[j]);
    }
    cols = std::move(keep_c);
    tags = std::move(keep_t);
}

} // namespace

OfflineSpace assemble_offline(const Discretization& d, const SnapshotSet& snaps, const OfflineData& data,
                              const std::vector<int>& counts, int threads) {
    const int nnb = static_cast<int>(d.nbs.size());
    if (static_cast<int>(counts.size()) != nnb) throw ValidationError("assemble_offline: one count per neighborhood expected");
    for (int i = 0; i < nnb; ++i) {
        if (counts[i] < 0) throw ValidationError("assemble_offline: negative basis count");
        if (counts[i] > data.spectra[i].count())
            throw ValidationError("assemble_offline: neighborhood " + std::to_string(i) + " has only " +
                                  std::to_string(data.spectra[i].count()) + " eigenpairs, " + std::to_string(counts[i]) +
                                  " requested");
    }
    const bool stokes = d.spec.kind == OperatorKind::Stokes;
    const int nc = d.space.ncomp;
    std::unique_ptr<StokesExtension> ext;
    if (stokes) ext = std::make_unique<StokesExtension>(d);
    std::vector<std::vector<SpVec>> cols(nnb);
    std::vector<std::vector<BasisTag>> tags(nnb);
    std::vector<std::vector<std::string>> warn(nnb);
    parallel_for(nnb, threads, [&](int i) {
        const auto& s = snaps.spaces[i];
        const auto& chi = data.pou.chi[i];
        for (int k = 0; k < counts[i]; ++k) {
            Vec phi = eigenfunction(s, data.spectra[i], k);
            if (!stokes) {
                Vec v = Vec::Zero(d.space.ndof());
                for (std::size_t a = 0; a < s.dofs.size(); ++a) v[s.dofs[a]] = chi[s.dofs[a] / nc] * phi[a];
                SpVec sv = sparsify(v);
                if (sv.nonZeros() == 0) {
                    warn[i].push_back("neighborhood " + std::to_string(i) + " eigenfunction " + std::to_string(k) +
                                      " vanishes after partition of unity, dropped");
                    continue;
                }
                cols[i].push_back(sv);
                tags[i].push_back(BasisTag{i, k, -1, 0});
                continue;
            }
            for (int c = 0; c < 2; ++c) {
                Vec v = Vec::Zero(d.space.ndof());
                for (std::size_t a = 0; a < s.dofs.size(); ++a)
                    if (s.dofs[a] % 2 == c) v[s.dofs[a]] = chi[s.dofs[a] / 2] * phi[a];
                if (v.cwiseAbs().maxCoeff() == 0.0) {
                    warn[i].push_back("neighborhood " + std::to_string(i) + " eigenfunction " + std::to_string(k) +
                                      " component " + std::to_string(c) + " vanishes after partition of unity, dropped");
                    continue;
                }
                cols[i].push_back(sparsify(ext->extend_elements(v, d.nbs[i].elements)));
                tags[i].push_back(BasisTag{i, k, c, 0});
            }
        }
    });
    OfflineSpace off;
    off.counts = counts;
    off.q_off = stokes ? d.grid.num_elements() : 0;
    for (int i = 0; i < nnb; ++i) {
        off.columns.insert(off.columns.end(), cols[i].begin(), cols[i].end());
        off.tags.insert(off.tags.end(), tags[i].begin(), tags[i].end());
        off.warnings.insert(off.warnings.end(), warn[i].begin(), warn[i].end());
    }
    prune_dependent(d.sys.A, off.columns, off.tags, off.warnings, 1e-8);
    return off;
}

Mat coarse_divergence(const Discretization& d, const SpMat& Z) {
    SpMat BZ = d.sys.B * Z;
    Mat Bc = Mat::Zero(d.grid.num_elements(), Z.cols());
    for (int j = 0; j < BZ.outerSize(); ++j)
        for (SpMat::InnerIterator it(BZ, j); it; ++it) Bc(d.mesh.parent[it.row()], j) += it.value();
    return Bc;
}

CoarseSolver::CoarseSolver(const Discretization& d, std::vector<SpVec> columns) : d_(d) {
    for (int i = 0; i < d.space.ndof(); ++i)
        if (d.space.dirichlet[i] && d.space.dirichlet_value[i] != 0.0)
            throw ValidationError("coarse solve needs homogeneous Dirichlet data");
    G_.resize(0, 0);
    Bc_.resize(d.spec.kind == OperatorKind::Stokes ? d.grid.num_elements() : 0, 0);
    add_columns(columns);
}

void CoarseSolver::add_columns(const std::vector<SpVec>& extra) { append(extra, -1.0); }

std::vector<int> CoarseSolver::add_independent(const std::vector<SpVec>& extra, double tol) {
    return append(extra, tol);
}

std::vector<int> CoarseSolver::append(const std::vector<SpVec>& extra, double tol) {
    const int n0 = dim();
    const int k = static_cast<int>(extra.size());
    SpMat Zn = columns_matrix(d_.space.ndof(), extra);
    SpMat AZn = d_.sys.A * Zn;
    Mat G(n0 + k, n0 + k);
    G.topLeftCorner(n0, n0) = G_;
    if (n0 > 0) {
        SpMat Z0 = columns_matrix(d_.space.ndof(), cols_);
        Mat cross = Mat(SpMat(Z0.transpose() * AZn));
        G.topRightCorner(n0, k) = cross;
        G.bottomLeftCorner(k, n0) = cross.transpose();
    }
    Mat Gnn = Mat(SpMat(Zn.transpose() * AZn));
    G.bottomRightCorner(k, k) = 0.5 * (Gnn + Gnn.transpose());

    std::vector<int> accepted;
    Mat S;
    if (tol < 0.0) {
        for (int j = 0; j < k; ++j) accepted.push_back(j);
    } else {
        // Schur complement from the projection residuals W = Phi - Z G^-1 Zᵀ A Phi; forming it
        // as Gnn - Gno G^-1 Gon cancels catastrophically once the basis is ill conditioned
        Mat W = Mat(Zn);
        if (n0 > 0) {
            Mat X(n0, k);
            for (int j = 0; j < k; ++j) X.col(j) = solve_gram(G.block(0, n0 + j, n0, 1));
            W -= columns_matrix(d_.space.ndof(), cols_) * X;
        }
        S = W.transpose() * (d_.sys.A * W);
        S = 0.5 * (S + S.transpose());
        Vec sc(k);
        for (int j = 0; j < k; ++j) sc[j] = G(n0 + j, n0 + j) > 0.0 ? 1.0 / std::sqrt(G(n0 + j, n0 + j)) : 0.0;
        accepted = cholesky_pivots(sc.asDiagonal() * S * sc.asDiagonal(), tol);
        std::sort(accepted.begin(), accepted.end());
    }
    std::vector<int> keep;
    for (int i = 0; i < n0; ++i) keep.push_back(i);
    for (int j : accepted) keep.push_back(n0 + j);
    const int n = static_cast<int>(keep.size());
    Mat Gk(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) Gk(a, b) = G(keep[a], keep[b]);
    G_ = std::move(Gk);
    std::vector<SpVec> added;
    for (int j : accepted) added.push_back(extra[j]);
    if (d_.spec.kind == OperatorKind::Stokes) {
        Mat Bn = coarse_divergence(d_, columns_matrix(d_.space.ndof(), added));
        Mat Bc(Bc_.rows(), n);
        Bc.leftCols(n0) = Bc_;
        Bc.rightCols(n - n0) = Bn;
        Bc_ = std::move(Bc);
    }
    cols_.insert(cols_.end(), added.begin(), added.end());
    refresh_factor();
    return accepted;
}

void CoarseSolver::refresh_factor() {
    const int n = dim();
    if (n == 0) return;
    scale_.resize(n);
    for (int i = 0; i < n; ++i) {
        if (!(G_(i, i) > 0.0)) throw SolverError("coarse Gram: column " + std::to_string(i) + " has zero energy");
        scale_[i] = 1.0 / std::sqrt(G_(i, i));
    }
    Mat Gs = scale_.asDiagonal() * G_ * scale_.asDiagonal();
    ldlt_.compute(Gs);
    Vec D = ldlt_.vectorD();
    double dmax = D.cwiseAbs().maxCoeff();
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    const auto& tr = ldlt_.transpositionsP();
    for (int k = 0; k < n; ++k) std::swap(perm[k], perm[tr.coeff(k)]);
    std::vector<int> dependent;
    for (int k = 0; k < n; ++k)
        if (D[k] <= 1e-11 * dmax) dependent.push_back(perm[k]);
    if (!dependent.empty()) {
        std::sort(dependent.begin(), dependent.end());
        std::string list;
        for (std::size_t i = 0; i < dependent.size() && i < 20; ++i) list += (i ? ", " : "") + std::to_string(dependent[i]);
        if (dependent.size() > 20) list += ", ...";
        throw SolverError("coarse Gram is singular; dependent columns: " + list);
    }
}

Vec CoarseSolver::solve_gram(const Vec& b) const {
    Vec x = ldlt_.solve(scale_.asDiagonal() * b);
    return scale_.asDiagonal() * x;
}

CoarseSolution CoarseSolver::solve(const Vec& Fin) const {
    const Vec& F = Fin.size() ? Fin : d_.sys.F;
    const int n = dim();
    CoarseSolution out;
    out.u = Vec::Zero(d_.space.ndof());
    if (n == 0) {
        out.coeffs = Vec();
        if (d_.spec.kind == OperatorKind::Stokes) {
            out.p_coarse = Vec::Zero(d_.grid.num_elements());
            out.p = Vec::Zero(d_.mesh.num_triangles());
        }
        return out;
    }
    SpMat Z = columns_matrix(d_.space.ndof(), cols_);
    Vec b = Z.transpose() * F;
    if (d_.spec.kind != OperatorKind::Stokes) {
        out.coeffs = solve_gram(b);
    } else {
        const int q = static_cast<int>(Bc_.rows());
        Mat X(n, q);
        for (int k = 0; k < q; ++k) X.col(k) = solve_gram(Bc_.row(k).transpose());
        Mat S = Bc_ * X;
        S = 0.5 * (S + S.transpose());
        Eigen::LDLT<Mat> sl(S);
        Vec D = sl.vectorD();
        double dmax = D.cwiseAbs().maxCoeff();
        if (!(dmax > 0.0) || D.cwiseAbs().minCoeff() <= 1e-12 * dmax)
            throw SolverError("coarse Stokes system is singular: some interior coarse edge lacks a flux witness "
                              "(run the inf-sup diagnostic for the edge list)");
        // G c + Bcᵀ y = b, Bc c = 0, with two rounds of refinement against the
        // loss of the constraint when G is badly conditioned
        auto block = [&](const Vec& r, const Vec& s, Vec& c, Vec& y) {
            Vec Gr = solve_gram(r);
            y = sl.solve(Bc_ * Gr - s);
            c = Gr - X * y;
        };
        Vec c, y;
        block(b, Vec::Zero(q), c, y);
        for (int it = 0; it < 2; ++it) {
            Vec dc, dy;
            block(b - G_ * c - Bc_.transpose() * y, -Bc_ * c, dc, dy);
            c += dc;
            y += dy;
        }
        out.coeffs = c;
        out.p_coarse = -y;
        out.p.resize(d_.mesh.num_triangles());
        for (int t = 0; t < d_.mesh.num_triangles(); ++t) out.p[t] = out.p_coarse[d_.mesh.parent[t]];
    }
    out.u = Z * out.coeffs;
    return out;
}

namespace {

const char kMagic[8] = {'P', 'E', 'R', 'F', 'O', 'F', 'F', 'L'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("offline file: truncated");
    return v;
}

} // namespace

void write_offline(std::ostream& out, const OfflineSpace& off, const OfflineData& data, std::uint64_t key) {
    out.write(kMagic, 8);
    put(out, kVersion);
    put(out, key);
    put<std::int32_t>(out, off.q_off);
    put<std::int32_t>(out, static_cast<int>(off.counts.size()));
    for (int c : off.counts) put<std::int32_t>(out, c);
    put<std::int32_t>(out, static_cast<int>(data.spectra.size()));
    for (const auto& sd : data.spectra) {
        put<std::int32_t>(out, sd.count());
        for (int k = 0; k < sd.count(); ++k) put<double>(out, sd.lambda[k]);
    }
    put<std::int32_t>(out, off.dim());
    for (int j = 0; j < off.dim(); ++j) {
        const auto& t = off.tags[j];
        put<std::int32_t>(out, t.nb);
        put<std::int32_t>(out, t.eig);
        put<std::int32_t>(out, t.comp);
        put<std::int32_t>(out, t.iteration);
        const auto& c = off.columns[j];
        put<std::int32_t>(out, static_cast<int>(c.size()));
        put<std::int32_t>(out, static_cast<int>(c.nonZeros()));
        for (SpVec::InnerIterator it(c); it; ++it) {
            put<std::int32_t>(out, static_cast<int>(it.index()));
            put<double>(out, it.value());
        }
    }
    if (!out) throw IoError("offline file: write failed");
}

OfflineFile read_offline(std::istream& in, std::uint64_t key) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("offline file: bad magic");
    if (take<std::uint32_t>(in) != kVersion) throw IoError("offline file: unsupported version");
    if (take<std::uint64_t>(in) != key) throw IoError("offline file: built for a different configuration");
    OfflineFile f;
    f.space.q_off = take<std::int32_t>(in);
    f.space.counts.resize(take<std::int32_t>(in));
    for (auto& c : f.space.counts) c = take<std::int32_t>(in);
    f.lambda.resize(take<std::int32_t>(in));
    for (auto& l : f.lambda) {
        l.resize(take<std::int32_t>(in));
        for (int k = 0; k < l.size(); ++k) l[k] = take<double>(in);
    }
    int n = take<std::int32_t>(in);
    f.space.columns.resize(n);
    f.space.tags.resize(n);
    for (int j = 0; j < n; ++j) {
        auto& t = f.space.tags[j];
        t.nb = take<std::int32_t>(in);
        t.eig = take<std::int32_t>(in);
        t.comp = take<std::int32_t>(in);
        t.iteration = take<std::int32_t>(in);
        int size = take<std::int32_t>(in);
        int nnz = take<std::int32_t>(in);
        SpVec c(size);
        c.reserve(nnz);
        for (int k = 0; k < nnz; ++k) {
            int idx = take<std::int32_t>(in);
            c.insert(idx) = take<double>(in);
        }
        f.space.columns[j] = std::move(c);
    }
    return f;
}

} // namespace perfms
