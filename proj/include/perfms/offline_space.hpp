#pragma once

#include "perfms/snapshots.hpp"

#include <iosfwd>

namespace perfms {

using SpVec = Eigen::SparseVector<double>;

struct SpectralDecomposition {
    int nb = -1;
    Mat A_off, S_off;       // over snapshot coordinates
    Vec lambda;             // ascending
    Mat psi;                // snapshot coordinates x eigenpairs, S-orthonormal
    std::vector<int> kept;  // snapshot columns kept after deflating S
    int deflated = 0;

    int count() const { return static_cast<int>(lambda.size()); }
    // lambda_{l+1} with l basis functions in use, floored at 1e-8 of the largest
    // eigenvalue; +inf when every mode is used.
    double next_eigenvalue(int l) const;
};

// Greedy diagonally pivoted Cholesky: pivot order, stopping once every
// remaining Schur diagonal is <= tol.
std::vector<int> cholesky_pivots(const Mat& G, double tol);

// Solves A psi = lambda S psi on the span of the columns kept by a pivoted
// Cholesky of S (pivot tolerance 1e-12 * trace S).
SpectralDecomposition local_gevp(const Mat& A, const Mat& S);

enum class PouKind { LinearHat, QuadraticLagrange };

struct PartitionOfUnity {
    PouKind kind = PouKind::LinearHat;
    std::vector<Vec> chi;  // per neighborhood, scalar nodal coefficients (space.num_nodes)
};

// Hats for Laplace/elasticity, quadratic Lagrange functions (node and
// mid-edge anchors) for Stokes, evaluated at the unsnapped node positions.
PartitionOfUnity build_pou(const Discretization& d);
// Value of the coarse Lagrange function of neighborhood `nb` at a point of
// coarse element `element` (unit-box coordinates).
double pou_value(const CoarseGrid& grid, PouKind kind, const Neighborhood& nb, int element, const Vec2& p);

// Weight matrix S of the local spectral problem, over the neighborhood dofs.
Mat spectral_weight(const Discretization& d, const Neighborhood& nb, const SnapshotSpace& s, const PartitionOfUnity& pou);
SpectralDecomposition local_gevp(const Discretization& d, const Neighborhood& nb, const SnapshotSpace& s,
                                 const PartitionOfUnity& pou);

// Per-coarse-element Stokes extension with cached factorisations.
class StokesExtension {
public:
    explicit StokesExtension(const Discretization& d);
    // Extends the trace of `field` on the boundary of K; result on region(K).dofs.
    Vec extend(int element, const Vec& field) const;
    // Extends over every listed element and stitches the pieces into a global vector.
    Vec extend_elements(const Vec& field, const std::vector<int>& elements) const;
    const Region& region(int element) const { return *regions_[element]; }

private:
    const Discretization& d_;
    std::vector<std::unique_ptr<Region>> regions_;
    std::vector<std::unique_ptr<LocalProblem>> problems_;
};

struct BasisTag {
    int nb = -1;
    int eig = -1;        // eigen index for offline columns
    int comp = -1;       // Stokes: velocity component of the product
    int iteration = 0;   // 0 offline, >0 online enrichment level that added it
};

struct OfflineData {
    PartitionOfUnity pou;
    std::vector<SpectralDecomposition> spectra;
};

OfflineData build_offline_data(const Discretization& d, const SnapshotSet& snaps, int threads);

struct OfflineSpace {
    std::vector<SpVec> columns;
    std::vector<BasisTag> tags;
    std::vector<int> counts;  // l_i per neighborhood
    int q_off = 0;            // coarse pressure dimension (Stokes)
    std::vector<std::string> warnings;

    int dim() const { return static_cast<int>(columns.size()); }
};

// Fine-space eigenfunction k of neighborhood i (values on the neighborhood dofs).
Vec eigenfunction(const SnapshotSpace& s, const SpectralDecomposition& sd, int k);

OfflineSpace assemble_offline(const Discretization& d, const SnapshotSet& snaps, const OfflineData& data,
                              const std::vector<int>& counts, int threads);

SpMat columns_matrix(int ndof, const std::vector<SpVec>& cols);
SpVec sparsify(const Vec& v, double drop = 0.0);

// Coarse element divergence moments of each column: Bc(K, j) = sum over the
// fine cells of K of (B z_j).
Mat coarse_divergence(const Discretization& d, const SpMat& Z);

struct CoarseSolution {
    Vec coeffs;
    Vec u;         // fine coefficients
    Vec p_coarse;  // per coarse element (Stokes)
    Vec p;         // fine P0 representation of p_coarse
};

// Galerkin solve in span(columns) with load F (the assembled load if empty).
class CoarseSolver {
public:
    CoarseSolver(const Discretization& d, std::vector<SpVec> columns);
    void add_columns(const std::vector<SpVec>& extra);
    // Adds the columns whose energy-orthogonal complements against the current
    // span are independent (pivoted Cholesky of the scaled complement Gram at
    // tol); the rest are skipped. Returns the indices kept.
    std::vector<int> add_independent(const std::vector<SpVec>& extra, double tol);
    CoarseSolution solve(const Vec& F = Vec()) const;
    Vec solve_gram(const Vec& b) const;  // G^{-1} b
    int dim() const { return static_cast<int>(cols_.size()); }
    const Mat& gram() const { return G_; }
    const Mat& coarse_div() const { return Bc_; }
    const std::vector<SpVec>& columns() const { return cols_; }

private:
    std::vector<int> append(const std::vector<SpVec>& extra, double tol);
    void refresh_factor();
    const Discretization& d_;
    std::vector<SpVec> cols_;
    Mat G_;   // Z^T A Z
    Mat Bc_;  // Stokes moments
    Vec scale_;  // Jacobi scaling of G
    Eigen::LDLT<Mat> ldlt_;
};

// Versioned binary export of an offline space (columns, tags, eigenvalues).
void write_offline(std::ostream& out, const OfflineSpace& off, const OfflineData& data, std::uint64_t key);
struct OfflineFile {
    OfflineSpace space;
    std::vector<Vec> lambda;  // per neighborhood
};
OfflineFile read_offline(std::istream& in, std::uint64_t key);

} // namespace perfms
