#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "perfms/snapshots.hpp"

#include <cmath>
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

Vec globalize(const Discretization& d, const SnapshotSpace& s, int k) {
    Vec u = Vec::Zero(d.space.ndof());
    scatter_add(u, s.dofs, s.columns.col(k));
    return u;
}

} // namespace

TEST_CASE("elasticity standard snapshots: two per interface node") {
    const auto& d = elastic();
    const auto& nb = d.nbs[12];  // interior coarse node
    auto s = standard_snapshots(d, nb);
    CHECK(s.size() == 2 * static_cast<int>(nb.interface_vertices.size()));
    CHECK(s.standard_count == s.size());
    Region r = snapshot_region(d, nb.base_cells);
    REQUIRE(r.dofs == s.dofs);
    for (int k = 0; k < s.size(); ++k) {
        Vec u = globalize(d, s, k);
        // trace reproduction: delta on its own dof, zero on every other fixed dof
        int own = s.info[k].source * 2 + s.info[k].component;
        for (int dof : r.fixed) CHECK(u[dof] == (dof == own ? 1.0 : 0.0));
    }
    CHECK(s.deflated == 0);
}

TEST_CASE("boundary neighborhoods skip constrained components") {
    const auto& d = elastic();
    const auto& nb = d.nbs[0];  // corner (0,0): u1 = 0 on the left, u2 = 0 on the bottom
    auto s = standard_snapshots(d, nb);
    for (const auto& c : s.info) CHECK_FALSE(d.space.dirichlet[c.source * 2 + c.component]);
    CHECK(s.size() < 2 * static_cast<int>(nb.interface_vertices.size()));
    CHECK(s.size() == standard_snapshot_count(d, nb));
}

TEST_CASE("Stokes standard snapshots") {
    const auto& d = flow();
    const auto& nb = d.nbs[12];
    auto s = standard_snapshots(d, nb);
    CHECK(s.size() == 2 * static_cast<int>(nb.interface_edges.size()));
    Region r = snapshot_region(d, nb.base_cells);
    double area = 0.0;
    for (int t : nb.base_cells) area += d.mesh.area(t);
    for (int k = 0; k < s.size(); k += 7) {
        Vec u = globalize(d, s, k);
        Vec div = d.sys.B * u;  // global B: boundary cells outside the region see the trace too
        double flux = 0.0, c_sum = 0.0;
        for (int t : nb.base_cells) flux += div[t];
        // net flux of the datum equals c |omega|, and the divergence is c on every cell
        double c = flux / area;
        for (int t : nb.base_cells) {
            c_sum += std::abs(div[t] - c * d.mesh.area(t));
        }
        CHECK(c_sum <= 1e-10 * (1.0 + std::abs(flux)));
        for (int n = 0; n < d.space.num_nodes; ++n)
            if (d.space.hole_node[n]) {
                CHECK(u[2 * n] == 0.0);
                CHECK(u[2 * n + 1] == 0.0);
            }
    }
}

TEST_CASE("randomized snapshots: n + 4 columns plus constants, seeded") {
    const auto& d = flow();
    const auto& nb = d.nbs[12];
    RandomizedOptions opt;
    opt.count = 3;
    opt.seed = 42;
    auto a = randomized_snapshots(d, nb, opt);
    auto b = randomized_snapshots(d, nb, opt);
    int random = 0, constant = 0;
    for (const auto& c : a.info) {
        random += c.random;
        constant += c.constant;
    }
    CHECK(random == 7);
    CHECK(constant == 2);
    CHECK(a.columns == b.columns);
    opt.seed = 43;
    auto c = randomized_snapshots(d, nb, opt);
    CHECK(a.columns != c.columns);
    CHECK(a.dofs == standard_snapshots(d, nb).dofs);
}

TEST_CASE("randomized rank grows with the sample count") {
    const auto& d = elastic();
    const auto& nb = d.nbs[12];
    int prev = 0;
    for (int count : {1, 3, 6}) {
        RandomizedOptions opt;
        opt.count = count;
        opt.seed = 5;
        auto s = randomized_snapshots(d, nb, opt);
        int rank = numerical_rank(snapshot_energy_gram(d, nb, s));
        CHECK(rank >= prev);
        prev = rank;
    }
}

TEST_CASE("snapshot cache round trip") {
    const auto& d = elastic();
    auto set = build_snapshots(d, SnapshotMode::Standard, RandomizedOptions{}, 2);
    std::stringstream io;
    write_snapshots(io, set, 99);
    auto back = read_snapshots(io, 99);
    REQUIRE(back.spaces.size() == set.spaces.size());
    for (std::size_t i = 0; i < set.spaces.size(); ++i) {
        CHECK(back.spaces[i].columns == set.spaces[i].columns);
        CHECK(back.spaces[i].dofs == set.spaces[i].dofs);
    }
    std::stringstream io2;
    write_snapshots(io2, set, 99);
    CHECK_THROWS_AS(read_snapshots(io2, 100), IoError);
    auto one = build_snapshots(d, SnapshotMode::Standard, RandomizedOptions{}, 1);
    for (std::size_t i = 0; i < set.spaces.size(); ++i) CHECK(one.spaces[i].columns == set.spaces[i].columns);
}
