#include "perfms/online_enrichment.hpp"

#include "perfms/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace perfms {

const char* indicator_name(IndicatorKind k) { return k == IndicatorKind::Ind1 ? "ind1" : "ind2"; }

IndicatorKind parse_indicator(const std::string& s) {
    if (s == "ind1") return IndicatorKind::Ind1;
    if (s == "ind2") return IndicatorKind::Ind2;
    throw ValidationError("unknown indicator '" + s + "' (expected ind1 or ind2)");
}

Vec residual_vector(const Discretization& d, const CoarseSolution& sol, const Vec& F) {
    Vec r = F - d.sys.A * sol.u;
    if (d.spec.kind == OperatorKind::Stokes && sol.p.size()) r += d.sys.B.transpose() * sol.p;
    for (int i = 0; i < d.space.ndof(); ++i)
        if (d.space.dirichlet[i]) r[i] = 0.0;
    return r;
}

ResidualSolver::ResidualSolver(const Discretization& d, int threads) : d_(d) {
    const int n = static_cast<int>(d.nbs.size());
    regions_.resize(n);
    locals_.resize(n);
    problems_.resize(n);
    const bool stokes = d.spec.kind == OperatorKind::Stokes;
    parallel_for(n, threads, [&](int i) {
        const auto& nb = d.nbs[i];
        regions_[i] = std::make_unique<Region>(make_region(d.space, d.mesh, nb.base_cells, RegionBoundary::InteriorOnly));
        System s = assemble(d.spec, d.space, d.mesh, &nb.base_cells);
        locals_[i] = submatrix(s.A, regions_[i]->dofs, regions_[i]->dofs, d.space.ndof());
        if (stokes) {
            // divergence in Q_off with zero coarse moments is divergence free cell by cell
            problems_[i] = std::make_unique<LocalProblem>(d.space, d.mesh, *regions_[i], s.A, &s.B, PressureSpace::FineP0);
        } else {
            problems_[i] = std::make_unique<LocalProblem>(d.space, d.mesh, *regions_[i], s.A, nullptr, PressureSpace::None);
        }
    });
}

LocalResidual ResidualSolver::solve(int nb, const Vec& r) const {
    const Region& reg = *regions_[nb];
    Vec phi = problems_[nb]->solve_load(r);
    LocalResidual out;
    out.nb = nb;
    out.value = gather(r, reg.dofs).dot(phi);
    out.norm = std::sqrt(std::max(0.0, phi.dot(locals_[nb] * phi)));
    Vec g = Vec::Zero(d_.space.ndof());
    for (std::size_t k = 0; k < reg.dofs.size(); ++k) g[reg.dofs[k]] = phi[k];
    out.phi = sparsify(g);
    return out;
}

std::vector<LocalResidual> ResidualSolver::solve_all(const Vec& r, const std::vector<int>& nbs, int threads) const {
    std::vector<LocalResidual> out(nbs.size());
    parallel_for(static_cast<int>(nbs.size()), threads, [&](int k) { out[k] = solve(nbs[k], r); });
    return out;
}

std::vector<double> indicator_values(const std::vector<double>& norms, IndicatorKind kind,
                                     const std::vector<double>& next_lambda) {
    std::vector<double> eta(norms.size());
    for (std::size_t i = 0; i < norms.size(); ++i) {
        double r2 = norms[i] * norms[i];
        if (kind == IndicatorKind::Ind1) {
            eta[i] = r2;
        } else {
            if (i >= next_lambda.size()) throw ValidationError("ind2 needs an eigenvalue per neighborhood");
            double l = next_lambda[i];
            eta[i] = std::isinf(l) ? 0.0 : r2 / l;
        }
    }
    return eta;
}

std::vector<int> descending_order(const std::vector<double>& eta) {
    std::vector<int> order(eta.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eta[a] > eta[b]; });
    return order;
}

MarkResult mark(const std::vector<double>& eta, const std::function<bool(int, int)>& overlap, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("theta must lie in (0,1)");
    MarkResult out;
    double total = std::accumulate(eta.begin(), eta.end(), 0.0);
    double target = theta * total;
    double mass = 0.0;
    for (int i : descending_order(eta)) {
        if (mass >= target) break;
        bool clash = false;
        for (int j : out.marked)
            if (overlap(i, j)) {
                clash = true;
                break;
            }
        if (clash) continue;
        out.marked.push_back(i);
        mass += eta[i];
    }
    out.shortfall = mass < target;
    return out;
}

ResidualReport make_report(const std::vector<double>& norms, IndicatorKind kind, const std::vector<double>& next_lambda,
                           const std::vector<Neighborhood>& nbs, double theta) {
    ResidualReport rep;
    rep.norm = norms;
    rep.theta = theta;
    rep.eta = indicator_values(norms, kind, next_lambda);
    rep.order = descending_order(rep.eta);
    rep.sum_eta = std::accumulate(rep.eta.begin(), rep.eta.end(), 0.0);
    auto m = mark(rep.eta, [&](int a, int b) { return neighborhoods_overlap(nbs[a], nbs[b]); }, theta);
    rep.marked = m.marked;
    rep.shortfall = m.shortfall;
    double all = 0.0, sel = 0.0;
    for (double r : norms) all += r * r;
    for (int i : rep.marked) sel += norms[i] * norms[i];
    rep.theta_achieved = all > 0.0 ? sel / all : 0.0;
    return rep;
}

std::vector<std::vector<int>> nonoverlapping_batches(const std::vector<Neighborhood>& nbs) {
    std::vector<int> colour(nbs.size(), -1);
    int ncol = 0;
    for (std::size_t i = 0; i < nbs.size(); ++i) {
        std::vector<char> used(ncol + 1, 0);
        for (std::size_t j = 0; j < i; ++j)
            if (neighborhoods_overlap(nbs[i], nbs[j])) used[colour[j]] = 1;
        int c = 0;
        while (used[c]) ++c;
        colour[i] = c;
        ncol = std::max(ncol, c + 1);
    }
    std::vector<std::vector<int>> batches(ncol);
    for (std::size_t i = 0; i < nbs.size(); ++i) batches[colour[i]].push_back(static_cast<int>(i));
    return batches;
}

void OnlineSchedule::validate() const {
    if (max_iters < 0) throw ValidationError("iterations must be >= 0");
    if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("theta must lie in (0,1)");
    if (tol < 0.0) throw ValidationError("tolerance must be >= 0");
}

std::vector<double> next_eigenvalues(const OfflineData& data, const std::vector<int>& counts) {
    std::vector<double> out(data.spectra.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = data.spectra[i].next_eigenvalue(counts[i]);
    return out;
}

namespace {

struct Loop {
    const Discretization& d;
    const ResidualSolver& rs;
    const OnlineSchedule& sched;
    const std::vector<double>& next_lambda;
    const Vec& F;
    int threads;
    CoarseSolver cs;
    std::vector<BasisTag> tags;

    OnlineLevel snapshot_level(int level, CoarseSolution sol) {
        OnlineLevel L;
        L.level = level;
        L.dof = cs.dim();
        L.pressure_dof = d.spec.kind == OperatorKind::Stokes ? d.grid.num_elements() : 0;
        L.sol = std::move(sol);
        std::vector<int> all(d.nbs.size());
        std::iota(all.begin(), all.end(), 0);
        L.residuals = rs.solve_all(residual_vector(d, L.sol, F), all, threads);
        std::vector<double> norms(all.size());
        for (std::size_t i = 0; i < all.size(); ++i) norms[i] = L.residuals[i].norm;
        L.report = make_report(norms, sched.indicator, next_lambda, d.nbs, sched.theta);
        return L;
    }

    // Appends the usable representatives; returns the neighborhoods actually enriched.
    std::vector<int> enrich(const std::vector<LocalResidual>& res, int level, const CoarseSolution& sol,
                            std::vector<std::string>& notes) {
        double scale = std::sqrt(std::max(0.0, sol.u.dot(d.sys.A * sol.u)));
        std::vector<SpVec> add;
        std::vector<int> used, cand;
        for (const auto& r : res) {
            if (r.norm <= 1e-13 * std::max(scale, 1e-300) || r.phi.nonZeros() == 0) {
                notes.push_back("neighborhood " + std::to_string(r.nb) + ": residual representative is numerically zero, skipped");
                continue;
            }
            add.push_back(r.phi);
            cand.push_back(r.nb);
        }
        if (add.empty()) return used;
        // a representative numerically inside the current space would make the Gram singular
        auto kept = cs.add_independent(add, 1e-5);
        std::size_t next = 0;
        for (std::size_t j = 0; j < add.size(); ++j) {
            if (next < kept.size() && kept[next] == static_cast<int>(j)) {
                ++next;
                tags.push_back(BasisTag{cand[j], -1, -1, level});
                used.push_back(cand[j]);
            } else {
                notes.push_back("neighborhood " + std::to_string(cand[j]) +
                                ": residual representative is dependent on the current space, skipped");
            }
        }
        return used;
    }
};

} // namespace

OnlineResult run_online(const Discretization& d, const OfflineSpace& off, const std::vector<double>& next_lambda,
                        const ResidualSolver& rs, const OnlineSchedule& sched, const Vec& F, int threads) {
    sched.validate();
    const Vec& load = F.size() ? F : d.sys.F;
    Loop lp{d, rs, sched, next_lambda, load, threads, CoarseSolver(d, off.columns), off.tags};
    OnlineResult out;
    out.levels.push_back(lp.snapshot_level(1, lp.cs.solve(load)));
    const auto batches = nonoverlapping_batches(d.nbs);
    for (int it = 1; it <= sched.max_iters; ++it) {
        const OnlineLevel& cur = out.levels.back();
        if (sched.tol > 0.0 && cur.report.sum_eta <= sched.tol) break;
        std::vector<std::string> notes;
        std::vector<int> marked;
        CoarseSolution sol = cur.sol;
        if (sched.adaptive) {
            std::vector<LocalResidual> chosen;
            for (int i : cur.report.marked) chosen.push_back(cur.residuals[i]);
            marked = lp.enrich(chosen, it + 1, sol, notes);
            sol = lp.cs.solve(load);
        } else {
            for (const auto& batch : batches) {
                auto res = rs.solve_all(residual_vector(d, sol, load), batch, threads);
                auto used = lp.enrich(res, it + 1, sol, notes);
                marked.insert(marked.end(), used.begin(), used.end());
                sol = lp.cs.solve(load);
            }
        }
        OnlineLevel next = lp.snapshot_level(it + 1, std::move(sol));
        next.marked_count = static_cast<int>(marked.size());
        next.marked = std::move(marked);
        next.notes = std::move(notes);
        out.levels.push_back(std::move(next));
    }
    out.columns = lp.cs.columns();
    out.tags = lp.tags;
    return out;
}

} // namespace perfms
