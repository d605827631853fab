#pragma once

#include "perfms/online_enrichment.hpp"

#include <iosfwd>

namespace perfms {

// Galerkin solution in the snapshot space (u-hat). Laplace/elasticity: span of
// the products chi_i * snapshot; Stokes: Stokes extensions of the coarse-skeleton
// traces those products generate, with the coarse pressure.
struct SnapshotSolution {
    Vec u;
    Vec p_coarse;
    Vec p;
    int columns = 0;     // generating columns
    int rank = 0;        // dimension actually used
    int trace_dofs = 0;  // Stokes: free velocity dofs on the coarse skeleton
    int trace_rank = 0;  // Stokes: rank of the product traces there
    std::vector<std::string> warnings;
};

class SnapshotReference {
public:
    SnapshotReference(const Discretization& d, const SnapshotSet& snaps, const PartitionOfUnity& pou, int threads);
    SnapshotSolution solve(const Vec& F = Vec()) const;
    int dim() const { return rank_; }

private:
    const Discretization& d_;
    SpMat Z_;                   // basis of the snapshot space
    Mat G_;                     // dense Gram (Laplace/elasticity)
    Mat Bc_;                    // Stokes moments
    Eigen::LLT<Mat> llt_;       // on the pivots kept by a rank-revealing LDLT
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;  // Stokes saddle on the sparse trace basis
    int columns_ = 0, rank_ = 0, trace_dofs_ = 0, trace_rank_ = 0;
    std::vector<std::string> warnings_;
};

enum class ReferenceKind { Fine, Snapshot };

struct ErrorReport {
    double e_L2 = 0.0;
    double e_H1 = 0.0;
    double e_p = 0.0;  // Stokes only
    int dofs = 0;
    ReferenceKind reference = ReferenceKind::Fine;
};

// Area-weighted average of a fine P0 pressure over every coarse element.
Vec coarse_average(const Discretization& d, const Vec& p_fine);
double energy_norm_sq(const Discretization& d, const Vec& u);

// Relative errors against a reference; p_ref is a fine-cell pressure.
class ErrorMeter {
public:
    explicit ErrorMeter(const Discretization& d);
    ErrorReport operator()(const Vec& u_ref, const Vec& p_ref, const Vec& u, const Vec& p_coarse, int dofs,
                           ReferenceKind kind) const;

private:
    const Discretization& d_;
    SpMat mass_;  // weighted by xi + 2 mu for elasticity
    std::vector<double> areas_;
};

struct BoundCheck {
    double bound = 0.0;   // C_s * sum (1 + 1/lambda) ‖R_i‖²
    double actual = 0.0;  // ‖u_ref - u_ms‖² in energy
    double ratio = 0.0;   // bound / actual (inf when actual is 0)
    bool holds = false;
};
BoundCheck aposteriori_bound(const Discretization& d, const std::vector<double>& norms,
                             const std::vector<double>& next_lambda, const Vec& u_ref, const Vec& u_ms);

struct InfSupReport {
    double beta = 0.0;  // smallest eigenvalue of Bc G^-1 Bcᵀ against diag(|K|) on zero-mean pressures
    bool positive = false;
    std::vector<int> missing_edges;  // interior coarse edges without a flux witness
    std::vector<double> edge_witness;  // per coarse edge: largest |flux| over the columns, scaled
    std::string message;

    bool ok() const { return positive && missing_edges.empty(); }
};

// Flux of a velocity field through coarse edge E, normal pointing from the
// first adjacent coarse element to the second (Simpson on each fine edge).
SpMat edge_flux_matrix(const Discretization& d);  // one row per coarse edge
double edge_flux(const Discretization& d, int coarse_edge, const Vec& u);
InfSupReport infsup_diagnostic(const Discretization& d, const CoarseSolver& cs);

// Legacy VTK unstructured grid: vertices, triangles, point vector field
// (vertex values) and optional cell scalar.
void write_vtk(std::ostream& out, const Discretization& d, const Vec& u, const Vec& p_cells, const std::string& title);

} // namespace perfms
