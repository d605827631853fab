#include "perfms/fem_core.hpp"

#include <algorithm>
#include <cmath>

namespace perfms {

const char* operator_name(OperatorKind k) {
    switch (k) {
    case OperatorKind::Laplace: return "laplace";
    case OperatorKind::Elasticity: return "elasticity";
    case OperatorKind::Stokes: return "stokes";
    }
    return "?";
}

OperatorKind parse_operator(const std::string& s) {
    if (s == "laplace") return OperatorKind::Laplace;
    if (s == "elasticity") return OperatorKind::Elasticity;
    if (s == "stokes") return OperatorKind::Stokes;
    throw ValidationError("unknown operator '" + s + "' (expected laplace, elasticity or stokes)");
}

void OperatorSpec::validate() const {
    if (kind == OperatorKind::Elasticity) {
        if (!(E > 0.0)) throw ValidationError("elasticity: E must be positive");
        if (!(nu > 0.0 && nu < 0.5)) throw ValidationError("elasticity: nu must lie in (0, 0.5)");
    }
    if (!std::isfinite(f[0]) || !std::isfinite(f[1])) throw ValidationError("forcing must be finite");
    if (kind != OperatorKind::Laplace && !perforation_dirichlet)
        throw ValidationError("elasticity and Stokes need zero Dirichlet data on the perforations");
}

std::uint64_t OperatorSpec::hash() const {
    Hasher h;
    h.i64(static_cast<int>(kind));
    h.f64(E);
    h.f64(nu);
    h.f64(f[0]);
    h.f64(f[1]);
    for (const auto& side : outer)
        for (const auto& c : side) {
            h.i64(c.dirichlet);
            h.f64(c.value);
        }
    h.i64(perforation_dirichlet);
    return h.value();
}

OperatorSpec default_spec(OperatorKind k) {
    OperatorSpec s;
    s.kind = k;
    switch (k) {
    case OperatorKind::Laplace:
        s.f = {1.0, 0.0};
        for (auto& side : s.outer) side[0].dirichlet = true;
        break;
    case OperatorKind::Elasticity:
        s.f = {1e7, 1e7};
        s.outer[static_cast<int>(BoundaryTag::OuterLeft)][0].dirichlet = true;
        s.outer[static_cast<int>(BoundaryTag::OuterBottom)][1].dirichlet = true;
        break;
    case OperatorKind::Stokes:
        s.f = {1.0, 1.0};
        break;
    }
    return s;
}

FineSpace build_space(const OperatorSpec& spec, const FineMesh& mesh) {
    spec.validate();
    FineSpace sp;
    sp.kind = spec.kind;
    sp.order = spec.kind == OperatorKind::Stokes ? 2 : 1;
    sp.ncomp = spec.components();
    const int nv = mesh.num_vertices();
    sp.num_nodes = sp.order == 1 ? nv : nv + mesh.num_edges();
    sp.num_pressure = spec.kind == OperatorKind::Stokes ? mesh.num_triangles() : 0;
    sp.cell_nodes.resize(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        auto& cn = sp.cell_nodes[t];
        cn.fill(-1);
        for (int k = 0; k < 3; ++k) cn[k] = mesh.triangles[t][k];
        if (sp.order == 2)
            for (int k = 0; k < 3; ++k) cn[3 + k] = nv + mesh.tri_edges[t][k];
    }
    sp.node_xy.resize(sp.num_nodes);
    sp.node_ref.resize(sp.num_nodes);
    for (int v = 0; v < nv; ++v) {
        sp.node_xy[v] = mesh.vertices[v];
        sp.node_ref[v] = mesh.lattice_point(v);
    }
    if (sp.order == 2)
        for (int e = 0; e < mesh.num_edges(); ++e) {
            int a = mesh.edges[e][0], b = mesh.edges[e][1];
            sp.node_xy[nv + e] = {0.5 * (mesh.vertices[a][0] + mesh.vertices[b][0]),
                                  0.5 * (mesh.vertices[a][1] + mesh.vertices[b][1])};
            auto ra = mesh.lattice_point(a), rb = mesh.lattice_point(b);
            sp.node_ref[nv + e] = {0.5 * (ra[0] + rb[0]), 0.5 * (ra[1] + rb[1])};
        }
    sp.hole_node.assign(sp.num_nodes, 0);
    sp.outer_sides.assign(sp.num_nodes, 0);
    for (int e = 0; e < mesh.num_edges(); ++e) {
        int tag = mesh.edge_tag[e];
        if (tag < 0) continue;
        std::vector<int> nodes{mesh.edges[e][0], mesh.edges[e][1]};
        if (sp.order == 2) nodes.push_back(nv + e);
        for (int n : nodes) {
            if (tag == static_cast<int>(BoundaryTag::Perforation)) sp.hole_node[n] = 1;
            else sp.outer_sides[n] |= 1 << tag;
        }
    }
    sp.dirichlet.assign(sp.ndof(), 0);
    sp.dirichlet_value.assign(sp.ndof(), 0.0);
    for (int n = 0; n < sp.num_nodes; ++n) {
        for (int s = 0; s < 4; ++s) {
            if (!(sp.outer_sides[n] & (1 << s))) continue;
            for (int c = 0; c < sp.ncomp; ++c)
                if (spec.outer[s][c].dirichlet) {
                    sp.dirichlet[n * sp.ncomp + c] = 1;
                    sp.dirichlet_value[n * sp.ncomp + c] = spec.outer[s][c].value;
                }
        }
        if (sp.hole_node[n] && spec.perforation_dirichlet)
            for (int c = 0; c < sp.ncomp; ++c) {
                sp.dirichlet[n * sp.ncomp + c] = 1;
                sp.dirichlet_value[n * sp.ncomp + c] = 0.0;
            }
    }
    return sp;
}

const Quadrature& quadrature(int degree) {
    static const Quadrature q2 = [] {
        Quadrature q;
        q.bary = {{2.0 / 3, 1.0 / 6, 1.0 / 6}, {1.0 / 6, 2.0 / 3, 1.0 / 6}, {1.0 / 6, 1.0 / 6, 2.0 / 3}};
        q.weight = {1.0 / 3, 1.0 / 3, 1.0 / 3};
        return q;
    }();
    static const Quadrature q4 = [] {
        Quadrature q;
        const double a = 0.445948490915965, wa = 0.223381589678011;
        const double b = 0.091576213509771, wb = 0.109951743655322;
        q.bary = {{1 - 2 * a, a, a}, {a, 1 - 2 * a, a}, {a, a, 1 - 2 * a},
                  {1 - 2 * b, b, b}, {b, 1 - 2 * b, b}, {b, b, 1 - 2 * b}};
        q.weight = {wa, wa, wa, wb, wb, wb};
        return q;
    }();
    if (degree <= 2) return q2;
    if (degree <= 4) return q4;
    throw ValidationError("quadrature: degree " + std::to_string(degree) + " is not available");
}

namespace {

struct CellGeom {
    double area;
    std::array<std::array<double, 2>, 3> grad;  // gradients of the barycentric coordinates
};

CellGeom cell_geom(const FineMesh& mesh, int t) {
    const auto& p0 = mesh.vertices[mesh.triangles[t][0]];
    const auto& p1 = mesh.vertices[mesh.triangles[t][1]];
    const auto& p2 = mesh.vertices[mesh.triangles[t][2]];
    double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    if (!(det > 0.0)) throw SolverError("degenerate or inverted fine cell " + std::to_string(t));
    CellGeom g;
    g.area = 0.5 * det;
    const std::array<const Vec2*, 3> p{&p0, &p1, &p2};
    for (int i = 0; i < 3; ++i) {
        const auto& a = *p[(i + 1) % 3];
        const auto& b = *p[(i + 2) % 3];
        g.grad[i] = {(a[1] - b[1]) / det, (b[0] - a[0]) / det};
    }
    return g;
}

void shapes(const CellGeom& g, int order, const std::array<double, 3>& l, double* N, std::array<double, 2>* dN) {
    if (order == 1) {
        for (int i = 0; i < 3; ++i) {
            if (N) N[i] = l[i];
            if (dN) dN[i] = g.grad[i];
        }
        return;
    }
    for (int i = 0; i < 3; ++i) {
        if (N) N[i] = l[i] * (2 * l[i] - 1);
        if (dN) dN[i] = {(4 * l[i] - 1) * g.grad[i][0], (4 * l[i] - 1) * g.grad[i][1]};
    }
    for (int k = 0; k < 3; ++k) {
        int a = (k + 1) % 3, b = (k + 2) % 3;
        if (N) N[3 + k] = 4 * l[a] * l[b];
        if (dN)
            dN[3 + k] = {4 * (l[a] * g.grad[b][0] + l[b] * g.grad[a][0]), 4 * (l[a] * g.grad[b][1] + l[b] * g.grad[a][1])};
    }
}

std::vector<int> all_cells(const FineMesh& mesh, const std::vector<int>* cells) {
    if (cells) return *cells;
    std::vector<int> out(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) out[t] = t;
    return out;
}

} // namespace

void shape_functions(const FineMesh& mesh, int cell, int order, const std::array<double, 3>& l, double* N,
                     std::array<double, 2>* dN) {
    shapes(cell_geom(mesh, cell), order, l, N, dN);
}

SpMat element_stiffness_p1(const OperatorSpec& spec, const Vec2& a, const Vec2& b, const Vec2& c) {
    FineMesh m;
    m.vertices = {a, b, c};
    m.triangles = {{0, 1, 2}};
    OperatorSpec s = spec;
    if (s.kind == OperatorKind::Stokes) s.kind = OperatorKind::Laplace;
    FineSpace sp;
    sp.kind = s.kind;
    sp.order = 1;
    sp.ncomp = s.components();
    sp.num_nodes = 3;
    sp.cell_nodes = {{0, 1, 2, -1, -1, -1}};
    return assemble_stiffness(s, sp, m);
}

System assemble(const OperatorSpec& spec, const FineSpace& space, const FineMesh& mesh, const std::vector<int>* cells) {
    const int nd = space.ndof();
    const int nc = space.ncomp;
    const int npc = space.nodes_per_cell();
    std::vector<Eigen::Triplet<double>> ta, tb;
    System sys;
    sys.F = Vec::Zero(nd);
    const auto list = all_cells(mesh, cells);
    ta.reserve(list.size() * npc * npc * nc * nc);
    const double mu = spec.mu(), xi = spec.xi();
    const double D[3][3] = {{2 * mu + xi, xi, 0}, {xi, 2 * mu + xi, 0}, {0, 0, mu}};
    const auto& quad = quadrature(space.order == 1 ? 2 : 4);
    double N[6];
    std::array<double, 2> dN[6];
    for (int t : list) {
        const auto g = cell_geom(mesh, t);
        const auto& cn = space.cell_nodes[t];
        if (spec.kind == OperatorKind::Elasticity) {
            // engineering strain: (e11, e22, 2 e12)
            double Bm[3][6] = {};
            for (int i = 0; i < 3; ++i) {
                Bm[0][2 * i] = g.grad[i][0];
                Bm[1][2 * i + 1] = g.grad[i][1];
                Bm[2][2 * i] = g.grad[i][1];
                Bm[2][2 * i + 1] = g.grad[i][0];
            }
            for (int r = 0; r < 6; ++r)
                for (int s = 0; s < 6; ++s) {
                    double v = 0.0;
                    for (int p = 0; p < 3; ++p)
                        for (int q = 0; q < 3; ++q) v += Bm[p][r] * D[p][q] * Bm[q][s];
                    ta.emplace_back(cn[r / 2] * 2 + r % 2, cn[s / 2] * 2 + s % 2, g.area * v);
                }
            for (int i = 0; i < 3; ++i)
                for (int c = 0; c < 2; ++c) sys.F[cn[i] * 2 + c] += spec.f[c] * g.area / 3.0;
            continue;
        }
        double K[6][6] = {};
        double load[6] = {};
        double div[6][2] = {};
        for (std::size_t q = 0; q < quad.weight.size(); ++q) {
            shapes(g, space.order, quad.bary[q], N, dN);
            double w = quad.weight[q] * g.area;
            for (int i = 0; i < npc; ++i) {
                load[i] += w * N[i];
                div[i][0] += w * dN[i][0];
                div[i][1] += w * dN[i][1];
                for (int j = 0; j < npc; ++j) K[i][j] += w * (dN[i][0] * dN[j][0] + dN[i][1] * dN[j][1]);
            }
        }
        for (int i = 0; i < npc; ++i)
            for (int c = 0; c < nc; ++c) {
                sys.F[cn[i] * nc + c] += spec.f[c] * load[i];
                for (int j = 0; j < npc; ++j) ta.emplace_back(cn[i] * nc + c, cn[j] * nc + c, K[i][j]);
                if (space.num_pressure > 0) tb.emplace_back(t, cn[i] * nc + c, div[i][c]);
            }
    }
    sys.A.resize(nd, nd);
    sys.A.setFromTriplets(ta.begin(), ta.end());
    if (space.num_pressure > 0) {
        sys.B.resize(space.num_pressure, nd);
        sys.B.setFromTriplets(tb.begin(), tb.end());
    }
    return sys;
}

SpMat assemble_stiffness(const OperatorSpec& spec, const FineSpace& space, const FineMesh& mesh,
                         const std::vector<int>* cells) {
    OperatorSpec s = spec;
    s.f = {0.0, 0.0};
    FineSpace sp = space;
    sp.num_pressure = 0;
    return assemble(s, sp, mesh, cells).A;
}

SpMat assemble_mass(const FineSpace& space, const FineMesh& mesh, const std::vector<int>* cells, const Vec* chi) {
    const int nd = space.ndof();
    const int nc = space.ncomp;
    const int npc = space.nodes_per_cell();
    const auto& quad = quadrature(space.order == 1 ? 2 : 4);
    std::vector<Eigen::Triplet<double>> tm;
    double N[6];
    std::array<double, 2> dN[6];
    for (int t : all_cells(mesh, cells)) {
        const auto g = cell_geom(mesh, t);
        const auto& cn = space.cell_nodes[t];
        double M[6][6] = {};
        for (std::size_t q = 0; q < quad.weight.size(); ++q) {
            shapes(g, space.order, quad.bary[q], N, dN);
            double w = quad.weight[q] * g.area;
            if (chi) {
                double gx = 0.0, gy = 0.0;
                for (int i = 0; i < npc; ++i) {
                    gx += (*chi)[cn[i]] * dN[i][0];
                    gy += (*chi)[cn[i]] * dN[i][1];
                }
                w *= gx * gx + gy * gy;
            }
            for (int i = 0; i < npc; ++i)
                for (int j = 0; j < npc; ++j) M[i][j] += w * N[i] * N[j];
        }
        for (int i = 0; i < npc; ++i)
            for (int j = 0; j < npc; ++j)
                if (M[i][j] != 0.0)
                    for (int c = 0; c < nc; ++c) tm.emplace_back(cn[i] * nc + c, cn[j] * nc + c, M[i][j]);
    }
    SpMat out(nd, nd);
    out.setFromTriplets(tm.begin(), tm.end());
    return out;
}

Vec interpolate(const FineSpace& space, const std::function<Vec2(const Vec2&)>& fn) {
    Vec out(space.ndof());
    for (int n = 0; n < space.num_nodes; ++n) {
        Vec2 v = fn(space.node_xy[n]);
        for (int c = 0; c < space.ncomp; ++c) out[n * space.ncomp + c] = v[c];
    }
    return out;
}

Vec cell_divergence(const FineSpace& space, const FineMesh& mesh, const Vec& u) {
    const int nc = space.ncomp;
    if (nc != 2) throw ValidationError("cell_divergence needs a vector field");
    const auto& quad = quadrature(space.order == 1 ? 2 : 4);
    Vec out = Vec::Zero(mesh.num_triangles());
    std::array<double, 2> dN[6];
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto g = cell_geom(mesh, t);
        const auto& cn = space.cell_nodes[t];
        for (std::size_t q = 0; q < quad.weight.size(); ++q) {
            shapes(g, space.order, quad.bary[q], nullptr, dN);
            double d = 0.0;
            for (int i = 0; i < space.nodes_per_cell(); ++i) d += u[cn[i] * 2] * dN[i][0] + u[cn[i] * 2 + 1] * dN[i][1];
            out[t] += quad.weight[q] * g.area * d;
        }
    }
    return out;
}

} // namespace perfms
