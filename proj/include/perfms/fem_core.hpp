#pragma once

#include "perfms/geometry_mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <optional>

namespace perfms {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class OperatorKind { Laplace, Elasticity, Stokes };
const char* operator_name(OperatorKind k);
OperatorKind parse_operator(const std::string& s);

struct ComponentBC {
    bool dirichlet = false;
    double value = 0.0;
};

struct OperatorSpec {
    OperatorKind kind = OperatorKind::Elasticity;
    double E = 1e9;
    double nu = 0.22;
    Vec2 f{0.0, 0.0};  // scalar problems use f[0]
    // outer[side][component], side indexed by BoundaryTag (left, right, top, bottom)
    std::array<std::array<ComponentBC, 2>, 4> outer{};
    bool perforation_dirichlet = true;

    int components() const { return kind == OperatorKind::Laplace ? 1 : 2; }
    double mu() const { return E / (2.0 * (1.0 + nu)); }
    double xi() const { return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
    void validate() const;
    std::uint64_t hash() const;
};

// Laplace: homogeneous Dirichlet everywhere, f = 1.
// Elasticity: u1 = 0 on the left, u2 = 0 on the bottom, traction free elsewhere,
// f = (1e7, 1e7), E = 1e9, nu = 0.22.
// Stokes: du/dn = 0 on the outer box, f = (1, 1).
OperatorSpec default_spec(OperatorKind k);

// Degree-of-freedom layout. Scalar nodes are the mesh vertices (P1) or
// vertices followed by edge midpoints (P2); dof = node * ncomp + comp.
struct FineSpace {
    OperatorKind kind = OperatorKind::Laplace;
    int order = 1;
    int ncomp = 1;
    int num_nodes = 0;
    int num_pressure = 0;  // one per fine cell for Stokes
    std::vector<std::array<int, 6>> cell_nodes;
    std::vector<Vec2> node_xy;
    std::vector<Vec2> node_ref;        // unsnapped lattice coordinates, normalised to the unit box
    std::vector<char> hole_node;       // on a perforation edge
    std::vector<int> outer_sides;      // bitmask of outer sides a node lies on
    std::vector<char> dirichlet;       // per dof
    std::vector<double> dirichlet_value;

    int ndof() const { return num_nodes * ncomp; }
    int nodes_per_cell() const { return order == 1 ? 3 : 6; }
};

FineSpace build_space(const OperatorSpec& spec, const FineMesh& mesh);

struct Quadrature {
    std::vector<std::array<double, 3>> bary;
    std::vector<double> weight;  // sums to 1, multiply by the cell area
};
const Quadrature& quadrature(int degree);

// Scalar shape values and gradients of one cell at barycentric point `l`.
void shape_functions(const FineMesh& mesh, int cell, int order, const std::array<double, 3>& l, double* N,
                     std::array<double, 2>* dN);

struct System {
    SpMat A;  // ndof x ndof
    SpMat B;  // num_pressure x ndof, (B v)_t = integral of div v over cell t
    Vec F;
};

// Element contributions restricted to `cells` (all cells when null).
System assemble(const OperatorSpec& spec, const FineSpace& space, const FineMesh& mesh,
                const std::vector<int>* cells = nullptr);
SpMat assemble_stiffness(const OperatorSpec& spec, const FineSpace& space, const FineMesh& mesh,
                         const std::vector<int>* cells = nullptr);
// Vector mass matrix; when `chi` (scalar nodal coefficients) is given the
// integrand is weighted by |grad chi|^2.
SpMat assemble_mass(const FineSpace& space, const FineMesh& mesh, const std::vector<int>* cells = nullptr,
                    const Vec* chi = nullptr);
SpMat element_stiffness_p1(const OperatorSpec& spec, const Vec2& a, const Vec2& b, const Vec2& c);

struct FineSolution {
    Vec u;
    Vec p;  // Stokes only, one value per fine cell
};

enum class SolverKind { Direct, CG };

FineSolution solve_fine(const OperatorSpec& spec, const FineSpace& space, const FineMesh& mesh, const System& sys,
                        SolverKind solver = SolverKind::Direct);

// Dofs of a set of fine cells, split into constrained and free ones.
struct Region {
    std::vector<int> cells;
    std::vector<int> dofs;   // sorted
    std::vector<int> fixed;  // sorted subset of dofs
    std::vector<int> free;   // sorted complement
    bool natural_boundary = false;  // some region boundary dof is left free
};

enum class RegionBoundary {
    All,           // every dof on the region boundary is fixed
    InteriorOnly,  // dofs on the outer box stay free unless globally constrained
};

Region make_region(const FineSpace& space, const FineMesh& mesh, const std::vector<int>& cells, RegionBoundary rule);

enum class PressureSpace { None, FineP0, Coarse };

// Factorised local Dirichlet or saddle problem on a region:
//   A_ff u_f + B_fᵀ y = r - A_fb g,   B_f u_f = t - B_b g
// with y = -p. Coarse pressure rows sum the fine divergence over each coarse
// element listed in `coarse_groups`.
class LocalProblem {
public:
    LocalProblem(const FineSpace& space, const FineMesh& mesh, const Region& region, const SpMat& A, const SpMat* B,
                 PressureSpace pressure,
                 std::vector<std::vector<int>> coarse_groups = {});

    // g: values on region.fixed; r: load on region.free (empty = 0);
    // t: divergence targets per pressure row (empty = 0).
    // Returns values on region.dofs; pressure (per row) when requested.
    Vec solve(const Vec& g, const Vec& r = Vec(), const Vec& t = Vec(), Vec* pressure = nullptr) const;
    // Same, with a global-length load vector restricted to the free dofs.
    Vec solve_load(const Vec& global_load, Vec* pressure = nullptr) const;

    const Region& region() const { return region_; }
    int pressure_rows() const { return static_cast<int>(prow_weight_.size()); }
    bool gauged() const { return gauge_; }
    // Sum over pressure rows of B_b g: the net boundary flux of g.
    double boundary_flux(const Vec& g) const;
    double region_area() const;

private:
    Region region_;
    PressureSpace pressure_;
    bool gauge_ = false;
    SpMat Afb_;
    SpMat Bf_, Bb_;
    std::vector<double> prow_weight_;
    int nf_ = 0;
    std::vector<int> free_pos_, fixed_pos_;  // positions inside region.dofs
    std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt_;
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

// Restriction helpers between global and region-local numbering.
Vec gather(const Vec& global, const std::vector<int>& idx);
void scatter_add(Vec& global, const std::vector<int>& idx, const Vec& local);
// A(rows, cols); nrows_total is A.rows().
SpMat submatrix(const SpMat& A, const std::vector<int>& rows, const std::vector<int>& cols, int nrows_total);

// Interpolates a vector field (node coordinates -> value) onto the dofs.
Vec interpolate(const FineSpace& space, const std::function<Vec2(const Vec2&)>& fn);

// Cell-wise divergence integrals (B v) for any space.
Vec cell_divergence(const FineSpace& space, const FineMesh& mesh, const Vec& u);

// Everything fixed by (geometry, operator, n, levels): grids, fine space,
// global system and coarse neighborhoods (with edge ones for Stokes).
struct Discretization {
    PerforatedGeometry geometry;
    OperatorSpec spec;
    int levels = 0;
    CoarseGrid grid;
    FineMesh mesh;
    FineSpace space;
    System sys;
    std::vector<Neighborhood> nbs;
    int cover = 0;  // C_s

    int num_nodes_nb() const { return grid.num_nodes(); }
    std::uint64_t hash() const;
};

Discretization discretize(const PerforatedGeometry& g, const OperatorSpec& spec, int n_per_side, int levels);

} // namespace perfms
