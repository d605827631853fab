#pragma once

#include "perfms/offline_space.hpp"

#include <functional>

namespace perfms {

enum class IndicatorKind { Ind1, Ind2 };
const char* indicator_name(IndicatorKind k);
IndicatorKind parse_indicator(const std::string& s);

// Global residual r = F - A u + Bᵀ p of a multiscale state (p on fine cells).
Vec residual_vector(const Discretization& d, const CoarseSolution& sol, const Vec& F);

struct LocalResidual {
    int nb = -1;
    SpVec phi;            // Riesz representative, zero outside the neighborhood
    double norm = 0.0;    // ‖R_i‖, the energy (Stokes: H1 seminorm) of phi
    double value = 0.0;   // R_i(phi)
};

// Factorised Riesz problems on every neighborhood: test functions vanish on the
// interior part of the neighborhood boundary; Stokes representatives have
// divergence in Q_off with zero coarse moments, i.e. zero on every fine cell.
class ResidualSolver {
public:
    explicit ResidualSolver(const Discretization& d, int threads = 1);
    LocalResidual solve(int nb, const Vec& r) const;
    std::vector<LocalResidual> solve_all(const Vec& r, const std::vector<int>& nbs, int threads) const;
    const Region& region(int nb) const { return *regions_[nb]; }
    const SpMat& local_matrix(int nb) const { return locals_[nb]; }

private:
    const Discretization& d_;
    std::vector<std::unique_ptr<Region>> regions_;
    std::vector<SpMat> locals_;  // region-local energy matrix on region.dofs
    std::vector<std::unique_ptr<LocalProblem>> problems_;
};

struct ResidualReport {
    std::vector<double> norm;  // ‖R_i‖ per neighborhood
    std::vector<double> eta;
    std::vector<int> order;    // eta descending, ties by id
    std::vector<int> marked;
    bool shortfall = false;
    double theta = 0.0;
    double sum_eta = 0.0;
    double theta_achieved = 0.0;  // marked residual mass over the total, in ‖R_i‖²
};

// ind1: ‖R‖²; ind2: ‖R‖² / lambda_{l+1}, zero where lambda is +inf.
std::vector<double> indicator_values(const std::vector<double>& norms, IndicatorKind kind,
                                     const std::vector<double>& next_lambda);
std::vector<int> descending_order(const std::vector<double>& eta);

struct MarkResult {
    std::vector<int> marked;  // in acceptance order
    bool shortfall = false;
};
MarkResult mark(const std::vector<double>& eta, const std::function<bool(int, int)>& overlap, double theta);

ResidualReport make_report(const std::vector<double>& norms, IndicatorKind kind, const std::vector<double>& next_lambda,
                           const std::vector<Neighborhood>& nbs, double theta);

// Greedy colouring of the neighborhood overlap graph, neighborhoods in id order.
std::vector<std::vector<int>> nonoverlapping_batches(const std::vector<Neighborhood>& nbs);

struct OnlineSchedule {
    int max_iters = 0;
    double tol = 0.0;  // stop when the indicator mass drops to tol
    double theta = 0.7;
    IndicatorKind indicator = IndicatorKind::Ind1;
    bool adaptive = true;

    void validate() const;
};

struct OnlineLevel {
    int level = 1;
    int dof = 0;            // velocity / displacement basis columns
    int pressure_dof = 0;   // Stokes coarse pressure
    int marked_count = 0;   // online columns added to reach this level
    std::vector<int> marked;
    CoarseSolution sol;
    ResidualReport report;  // residuals of this level's solution
    std::vector<LocalResidual> residuals;
    std::vector<std::string> notes;
};

struct OnlineResult {
    std::vector<OnlineLevel> levels;
    std::vector<SpVec> columns;  // final basis, offline first
    std::vector<BasisTag> tags;
};

// Enrichment loop. next_lambda[i] is lambda_{l_i+1} of neighborhood i. With
// adaptive=false every iteration sweeps the non-overlapping batches, re-solving
// after each batch.
OnlineResult run_online(const Discretization& d, const OfflineSpace& off, const std::vector<double>& next_lambda,
                        const ResidualSolver& rs, const OnlineSchedule& sched, const Vec& F, int threads);

std::vector<double> next_eigenvalues(const OfflineData& data, const std::vector<int>& counts);

} // namespace perfms
