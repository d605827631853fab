#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "perfms/offline_space.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace perfms;

namespace {

const Discretization& elastic() {
    static const Discretization d =
        discretize(build_geometry("small-inclusions"), default_spec(OperatorKind::Elasticity), 4, 3);
    return d;
}

const Discretization& flow() {
    static const Discretization d = discretize(build_geometry("big-inclusions"), default_spec(OperatorKind::Stokes), 4, 3);
    return d;
}

struct Built {
    SnapshotSet snaps;
    OfflineData data;
};

const Built& elastic_built() {
    static const Built b = [] {
        Built r;
        r.snaps = build_snapshots(elastic(), SnapshotMode::Standard, RandomizedOptions{}, 1);
        r.data = build_offline_data(elastic(), r.snaps, 1);
        return r;
    }();
    return b;
}

const Built& flow_built() {
    static const Built b = [] {
        Built r;
        r.snaps = build_snapshots(flow(), SnapshotMode::Standard, RandomizedOptions{}, 1);
        r.data = build_offline_data(flow(), r.snaps, 1);
        return r;
    }();
    return b;
}

Mat random_spd(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Mat X(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) X(i, j) = nd(rng);
    return X * X.transpose() + n * Mat::Identity(n, n);
}

} // namespace

TEST_CASE("generalized eigenproblem on small matrices") {
    std::mt19937_64 rng(3);
    Mat S = random_spd(5, rng);
    auto same = local_gevp(S, S);
    REQUIRE(same.count() == 5);
    for (int k = 0; k < 5; ++k) CHECK(same.lambda[k] == doctest::Approx(1.0));

    Mat A = Mat::Zero(2, 2);
    A(0, 0) = 4;
    A(1, 1) = 1;
    auto diag = local_gevp(A, Mat::Identity(2, 2));
    CHECK(diag.lambda[0] == doctest::Approx(1.0));
    CHECK(diag.lambda[1] == doctest::Approx(4.0));
    CHECK(diag.next_eigenvalue(1) == doctest::Approx(4.0));
    CHECK(std::isinf(diag.next_eigenvalue(2)));

    Mat A2 = random_spd(6, rng);
    auto sd = local_gevp(A2, S.rows() == 5 ? random_spd(6, rng) : S);
    Mat I = sd.psi.transpose() * sd.S_off * sd.psi;
    Mat L = sd.psi.transpose() * sd.A_off * sd.psi;
    CHECK((I - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((L - Mat(sd.lambda.asDiagonal())).cwiseAbs().maxCoeff() < 1e-8 * sd.lambda.maxCoeff());
    for (int k = 1; k < 6; ++k) CHECK(sd.lambda[k] >= sd.lambda[k - 1]);
}

TEST_CASE("rank deficient weight is deflated") {
    std::mt19937_64 rng(5);
    Mat X = Mat::Random(6, 3);
    Mat S = X * X.transpose();
    Mat A = random_spd(6, rng);
    auto sd = local_gevp(A, S);
    CHECK(sd.deflated == 3);
    CHECK(sd.count() == 3);
    Mat I = sd.psi.transpose() * S * sd.psi;
    CHECK((I - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_THROWS_AS(local_gevp(A, Mat::Zero(6, 6)), SolverError);
}

TEST_CASE("hat partition of unity") {
    const auto& d = elastic();
    const auto& pou = elastic_built().data.pou;
    CHECK(pou.kind == PouKind::LinearHat);
    Vec sum = Vec::Zero(d.space.num_nodes);
    for (const auto& c : pou.chi) sum += c;
    CHECK((sum.array() - 1.0).abs().maxCoeff() < 1e-12);
    for (const auto& nb : d.nbs) {
        for (int j = 0; j < static_cast<int>(d.grid.nodes.size()); ++j) {
            auto l = d.grid.node_lattice(j);
            Vec2 p{l[0] / double(d.grid.n), l[1] / double(d.grid.n)};
            for (int K = 0; K < d.grid.num_elements(); ++K) {
                const auto& el = d.grid.elements[K];
                if (el[0] != j && el[1] != j && el[2] != j) continue;
                CHECK(pou_value(d.grid, PouKind::LinearHat, nb, K, p) == doctest::Approx(nb.anchor == j ? 1.0 : 0.0));
            }
        }
    }
}

TEST_CASE("quadratic partition of unity") {
    const auto& d = flow();
    const auto& pou = flow_built().data.pou;
    CHECK(pou.kind == PouKind::QuadraticLagrange);
    CHECK(pou.chi.size() == d.grid.nodes.size() + d.grid.edges.size());
    Vec sum = Vec::Zero(d.space.num_nodes);
    for (const auto& c : pou.chi) sum += c;
    CHECK((sum.array() - 1.0).abs().maxCoeff() < 1e-12);
    // mid-edge anchor is 1 at the midpoint and vanishes at the vertices
    const auto& nb = d.nbs[d.grid.nodes.size() + 7];
    REQUIRE(nb.kind == NeighborhoodKind::Edge);
    int K = nb.elements[0];
    auto e = d.grid.edges[nb.anchor];
    auto la = d.grid.node_lattice(e[0]);
    auto lb = d.grid.node_lattice(e[1]);
    double n = d.grid.n;
    Vec2 mid{(la[0] + lb[0]) / (2 * n), (la[1] + lb[1]) / (2 * n)};
    CHECK(pou_value(d.grid, PouKind::QuadraticLagrange, nb, K, mid) == doctest::Approx(1.0));
    CHECK(pou_value(d.grid, PouKind::QuadraticLagrange, nb, K, Vec2{la[0] / n, la[1] / n}) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("empty offline space and zero load") {
    const auto& d = elastic();
    const auto& b = elastic_built();
    std::vector<int> zero(d.nbs.size(), 0);
    auto off = assemble_offline(d, b.snaps, b.data, zero, 1);
    CHECK(off.dim() == 0);
    CoarseSolver cs(d, off.columns);
    auto sol = cs.solve();
    CHECK(sol.u.size() == d.space.ndof());
    CHECK(sol.u.cwiseAbs().maxCoeff() == 0.0);

    std::vector<int> two(d.nbs.size(), 2);
    auto off2 = assemble_offline(d, b.snaps, b.data, two, 1);
    CoarseSolver cs2(d, off2.columns);
    auto z = cs2.solve(Vec::Zero(d.space.ndof()));
    CHECK(z.u.cwiseAbs().maxCoeff() == 0.0);

    std::vector<int> too_many(d.nbs.size(), 100000);
    CHECK_THROWS_AS(assemble_offline(d, b.snaps, b.data, too_many, 1), ValidationError);
}

TEST_CASE("elasticity Galerkin solve is energy optimal") {
    const auto& d = elastic();
    const auto& b = elastic_built();
    std::vector<int> counts(d.nbs.size(), 3);
    auto off = assemble_offline(d, b.snaps, b.data, counts, 1);
    CHECK(off.dim() > 0);
    CoarseSolver cs(d, off.columns);
    auto sol = cs.solve();
    auto fine = solve_fine(d.spec, d.space, d.mesh, d.sys);
    SpMat Z = columns_matrix(d.space.ndof(), off.columns);
    // Galerkin orthogonality
    Vec g = Z.transpose() * (d.sys.A * (fine.u - sol.u));
    Vec ref = Z.transpose() * d.sys.F;
    CHECK(g.cwiseAbs().maxCoeff() < 1e-8 * ref.cwiseAbs().maxCoeff());
    auto energy = [&](const Vec& v) { return v.dot(d.sys.A * v); };
    double best = energy(fine.u - sol.u);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
        Vec c = sol.coeffs;
        for (int i = 0; i < c.size(); ++i) c[i] *= 1.0 + 0.01 * nd(rng);
        CHECK(energy(fine.u - Z * c) >= best);
    }
}

TEST_CASE("eigenfunctions are local and basis functions vanish off the neighborhood") {
    const auto& d = elastic();
    const auto& b = elastic_built();
    std::vector<int> counts(d.nbs.size(), 1);
    auto off = assemble_offline(d, b.snaps, b.data, counts, 1);
    for (int j = 0; j < off.dim(); ++j) {
        const auto& nb = d.nbs[off.tags[j].nb];
        Region r = snapshot_region(d, nb.base_cells);
        std::vector<char> in(d.space.ndof(), 0);
        for (int dof : r.dofs) in[dof] = 1;
        for (SpVec::InnerIterator it(off.columns[j]); it; ++it) CHECK(in[it.index()]);
    }
}

TEST_CASE("Stokes basis has piecewise constant divergence and the coarse system is consistent") {
    const auto& d = flow();
    const auto& b = flow_built();
    std::vector<int> counts(d.nbs.size(), 2);
    auto off = assemble_offline(d, b.snaps, b.data, counts, 1);
    REQUIRE(off.dim() > 0);
    CHECK(off.q_off == d.grid.num_elements());
    for (int j = 0; j < off.dim(); j += 7) {
        Vec div = cell_divergence(d.space, d.mesh, Vec(off.columns[j]));
        for (int K = 0; K < d.grid.num_elements(); ++K) {
            double c0 = 0.0, scale = 0.0;
            bool first = true;
            for (int t : d.grid.fine_cells[K]) {
                double c = div[t] / d.mesh.area(t);
                scale = std::max(scale, std::abs(c));
                if (first) c0 = c;
                first = false;
                CHECK(std::abs(c - c0) <= 1e-8 * std::max(1.0, scale));
            }
        }
    }
    CoarseSolver cs(d, off.columns);
    auto sol = cs.solve();
    Vec b0 = columns_matrix(d.space.ndof(), off.columns).transpose() * d.sys.F;
    Vec r = cs.gram() * sol.coeffs - cs.coarse_div().transpose() * sol.p_coarse - b0;
    CHECK(r.cwiseAbs().maxCoeff() < 1e-8 * b0.cwiseAbs().maxCoeff());
    CHECK((cs.coarse_div() * sol.coeffs).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(sol.p.size() == d.mesh.num_triangles());
}

TEST_CASE("Stokes extension reproduces the trace") {
    const auto& d = flow();
    StokesExtension ext(d);
    Vec field = interpolate(d.space, [](const Vec2& p) { return Vec2{p[1] * p[1], std::sin(p[0])}; });
    for (int i = 0; i < d.space.ndof(); ++i)
        if (d.space.dirichlet[i]) field[i] = 0.0;
    int K = 5;
    Vec v = ext.extend(K, field);
    const Region& r = ext.region(K);
    for (int dof : r.fixed) {
        auto it = std::lower_bound(r.dofs.begin(), r.dofs.end(), dof);
        CHECK(v[it - r.dofs.begin()] == doctest::Approx(field[dof]).epsilon(1e-10));
    }
}

TEST_CASE("dependent columns are reported") {
    const auto& d = elastic();
    const auto& b = elastic_built();
    std::vector<int> counts(d.nbs.size(), 1);
    auto off = assemble_offline(d, b.snaps, b.data, counts, 1);
    auto cols = off.columns;
    cols.push_back(cols[3] * 2.0);
    CHECK_THROWS_AS(CoarseSolver(d, cols), SolverError);
}

TEST_CASE("offline export round trip") {
    const auto& d = elastic();
    const auto& b = elastic_built();
    std::vector<int> counts(d.nbs.size(), 2);
    auto off = assemble_offline(d, b.snaps, b.data, counts, 1);
    std::stringstream ss;
    write_offline(ss, off, b.data, 42);
    auto f = read_offline(ss, 42);
    REQUIRE(f.space.dim() == off.dim());
    for (int j = 0; j < off.dim(); ++j) CHECK((Vec(f.space.columns[j]) - Vec(off.columns[j])).norm() == 0.0);
    CHECK(f.lambda[4].size() == b.data.spectra[4].count());
    std::stringstream ss2;
    write_offline(ss2, off, b.data, 42);
    CHECK_THROWS_AS(read_offline(ss2, 43), IoError);
    auto off2 = assemble_offline(d, b.snaps, build_offline_data(d, b.snaps, 2), counts, 2);
    for (int j = 0; j < off.dim(); ++j) CHECK((Vec(off2.columns[j]) - Vec(off.columns[j])).norm() == 0.0);
}
