#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "perfms/online_enrichment.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace perfms;

namespace {

struct Setup {
    Discretization d;
    SnapshotSet snaps;
    OfflineData data;
    std::vector<int> counts;
    OfflineSpace off;
    FineSolution fine;
    std::unique_ptr<ResidualSolver> rs;
};

std::unique_ptr<Setup> make_setup(const std::string& geo, OperatorKind kind, int l) {
    auto s = std::make_unique<Setup>();
    s->d = discretize(build_geometry(geo), default_spec(kind), 4, 3);
    s->snaps = build_snapshots(s->d, SnapshotMode::Standard, RandomizedOptions{}, 1);
    s->data = build_offline_data(s->d, s->snaps, 1);
    s->counts.assign(s->d.nbs.size(), l);
    s->off = assemble_offline(s->d, s->snaps, s->data, s->counts, 1);
    s->fine = solve_fine(s->d.spec, s->d.space, s->d.mesh, s->d.sys);
    s->rs = std::make_unique<ResidualSolver>(s->d, 1);
    return s;
}

const Setup& elastic() {
    static auto s = make_setup("small-inclusions", OperatorKind::Elasticity, 1);
    return *s;
}

const Setup& flow() {
    static auto s = make_setup("big-inclusions", OperatorKind::Stokes, 1);
    return *s;
}

double energy_error(const Setup& s, const Vec& u) {
    Vec e = s.fine.u - u;
    return std::sqrt(e.dot(s.d.sys.A * e));
}

} // namespace

TEST_CASE("indicator formulas") {
    std::vector<double> norms{2.0, 1.0, 3.0};
    std::vector<double> lam{2.0, 4.0, std::numeric_limits<double>::infinity()};
    auto e1 = indicator_values(norms, IndicatorKind::Ind1, lam);
    auto e2 = indicator_values(norms, IndicatorKind::Ind2, lam);
    CHECK(e1[0] == doctest::Approx(4.0));
    CHECK(e2[0] == doctest::Approx(2.0));
    CHECK(e2[1] == doctest::Approx(0.25));
    CHECK(e2[2] == 0.0);
    CHECK(parse_indicator("ind2") == IndicatorKind::Ind2);
    CHECK_THROWS_AS(parse_indicator("ind3"), ValidationError);
}

TEST_CASE("marking examples") {
    auto none = [](int, int) { return false; };
    auto m = mark({5, 3, 2}, none, 0.7);
    CHECK(m.marked == std::vector<int>{0, 1});
    CHECK_FALSE(m.shortfall);
    auto all = mark({5, 3, 2, 1}, none, 0.999);
    CHECK(all.marked.size() == 4);
    // the two largest overlap: the second is skipped and the third is taken
    auto clash = [](int a, int b) { return (a == 0 && b == 1) || (a == 1 && b == 0); };
    auto s = mark({5, 4, 3, 1}, clash, 0.6);
    CHECK(s.marked == std::vector<int>{0, 2});
    auto zero = mark({0, 0, 0}, none, 0.7);
    CHECK(zero.marked.empty());
    CHECK_FALSE(zero.shortfall);
    auto chain = mark({5, 4, 3}, [](int, int) { return true; }, 0.9);
    CHECK(chain.marked == std::vector<int>{0});
    CHECK(chain.shortfall);
    CHECK_THROWS_AS(mark({1}, none, 1.0), ValidationError);
}

TEST_CASE("marking matches prefix enumeration") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 1 + static_cast<int>(u(rng) * 12);
        std::vector<double> eta(n);
        for (auto& e : eta) e = u(rng) < 0.15 ? 0.0 : u(rng);
        std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
        double density = u(rng);
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) adj[a][b] = adj[b][a] = u(rng) < density;
        double theta = 0.05 + 0.9 * u(rng);
        auto over = [&](int a, int b) { return adj[a][b] != 0; };
        auto got = mark(eta, over, theta);

        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eta[a] > eta[b]; });
        double total = 0.0;
        for (double e : eta) total += e;
        std::vector<int> expect;
        bool found = false;
        for (int k = 0; k <= n && !found; ++k) {
            std::vector<int> sel;
            double mass = 0.0;
            for (int p = 0; p < k; ++p) {
                bool ok = true;
                for (int q : sel) ok = ok && !adj[order[p]][q];
                if (ok) {
                    sel.push_back(order[p]);
                    mass += eta[order[p]];
                }
            }
            if (mass >= theta * total || k == n) {
                expect = sel;
                found = mass >= theta * total;
                if (found || k == n) break;
            }
        }
        CHECK(got.marked == expect);
        CHECK(got.shortfall == !found);
    }
}

TEST_CASE("Riesz identity and exact-state residual") {
    for (const Setup* s : {&elastic(), &flow()}) {
        CoarseSolver cs(s->d, s->off.columns);
        auto sol = cs.solve();
        Vec r = residual_vector(s->d, sol, s->d.sys.F);
        for (int i = 0; i < static_cast<int>(s->d.nbs.size()); i += 3) {
            auto lr = s->rs->solve(i, r);
            CHECK(std::abs(lr.norm * lr.norm - lr.value) <= 1e-9 * std::max(lr.norm * lr.norm, 1e-300));
        }
        CoarseSolution exact;
        exact.u = s->fine.u;
        exact.p = s->fine.p;
        Vec r0 = residual_vector(s->d, exact, s->d.sys.F);
        double scale = s->d.sys.F.cwiseAbs().maxCoeff();
        CHECK(r0.cwiseAbs().maxCoeff() <= 1e-9 * scale);
        for (int i = 0; i < static_cast<int>(s->d.nbs.size()); i += 5)
            CHECK(s->rs->solve(i, r0).norm <= 1e-7 * std::max(s->rs->solve(i, r).norm, 1e-300));
    }
}

TEST_CASE("Stokes representatives are divergence free") {
    const auto& s = flow();
    CoarseSolver cs(s.d, s.off.columns);
    Vec r = residual_vector(s.d, cs.solve(), s.d.sys.F);
    for (int i = 0; i < static_cast<int>(s.d.nbs.size()); i += 4) {
        auto lr = s.rs->solve(i, r);
        Vec div = s.d.sys.B * Vec(lr.phi);
        CHECK(div.cwiseAbs().maxCoeff() <= 1e-10 * std::max(lr.norm, 1e-300));
    }
}

TEST_CASE("enriching a neighborhood lowers its residual") {
    const auto& s = elastic();
    CoarseSolver cs(s.d, s.off.columns);
    auto sol = cs.solve();
    Vec r = residual_vector(s.d, sol, s.d.sys.F);
    const int i = 12;
    auto before = s.rs->solve(i, r);
    cs.add_columns({before.phi});
    CHECK(cs.dim() == s.off.dim() + 1);
    auto after = s.rs->solve(i, residual_vector(s.d, cs.solve(), s.d.sys.F));
    CHECK(after.norm < before.norm);
}

TEST_CASE("non-overlapping batches cover every neighborhood once") {
    for (const Setup* s : {&elastic(), &flow()}) {
        auto batches = nonoverlapping_batches(s->d.nbs);
        std::vector<int> seen(s->d.nbs.size(), 0);
        for (const auto& b : batches) {
            for (std::size_t x = 0; x < b.size(); ++x) {
                ++seen[b[x]];
                for (std::size_t y = x + 1; y < b.size(); ++y)
                    CHECK_FALSE(neighborhoods_overlap(s->d.nbs[b[x]], s->d.nbs[b[y]]));
            }
        }
        for (int c : seen) CHECK(c == 1);
    }
}

TEST_CASE("online loop: offline level, monotone error, bookkeeping") {
    for (const Setup* s : {&elastic(), &flow()}) {
        auto lam = next_eigenvalues(s->data, s->counts);
        OnlineSchedule none;
        auto r0 = run_online(s->d, s->off, lam, *s->rs, none, Vec(), 1);
        REQUIRE(r0.levels.size() == 1);
        CHECK(r0.levels[0].level == 1);
        CHECK(r0.levels[0].dof == s->off.dim());

        for (bool adaptive : {true, false}) {
            OnlineSchedule sc;
            sc.max_iters = 2;
            sc.adaptive = adaptive;
            sc.indicator = adaptive ? IndicatorKind::Ind2 : IndicatorKind::Ind1;
            auto res = run_online(s->d, s->off, lam, *s->rs, sc, Vec(), 1);
            REQUIRE(res.levels.size() == 3);
            double prev = energy_error(*s, res.levels[0].sol.u);
            CHECK(prev == doctest::Approx(energy_error(*s, r0.levels[0].sol.u)));
            for (std::size_t k = 1; k < res.levels.size(); ++k) {
                const auto& L = res.levels[k];
                CHECK(L.dof == res.levels[k - 1].dof + L.marked_count);
                double e = energy_error(*s, L.sol.u);
                CHECK(e <= prev * (1.0 + 1e-12));
                prev = e;
                if (adaptive) CHECK(L.marked_count == static_cast<int>(res.levels[k - 1].report.marked.size()));
                else CHECK(L.marked_count + static_cast<int>(L.notes.size()) == static_cast<int>(s->d.nbs.size()));
            }
            CHECK(static_cast<int>(res.columns.size()) == res.levels.back().dof);
            INFO("adaptive " << adaptive);
            CHECK(res.tags.back().iteration == 3);
        }
    }
}

TEST_CASE("schedule validation") {
    OnlineSchedule sc;
    sc.theta = 1.5;
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc.theta = 0.7;
    sc.max_iters = -1;
    CHECK_THROWS_AS(sc.validate(), ValidationError);
}
