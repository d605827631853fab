#include "perfms/geometry_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace perfms {

const char* tag_name(BoundaryTag t) {
    switch (t) {
    case BoundaryTag::OuterLeft: return "outer_left";
    case BoundaryTag::OuterRight: return "outer_right";
    case BoundaryTag::OuterTop: return "outer_top";
    case BoundaryTag::OuterBottom: return "outer_bottom";
    case BoundaryTag::Perforation: return "perforation";
    }
    return "?";
}

double FineMesh::area(int t) const {
    const auto& a = vertices[triangles[t][0]];
    const auto& b = vertices[triangles[t][1]];
    const auto& c = vertices[triangles[t][2]];
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

Vec2 FineMesh::centroid(int t) const {
    Vec2 s{0, 0};
    for (int v : triangles[t]) {
        s[0] += vertices[v][0];
        s[1] += vertices[v][1];
    }
    return {s[0] / 3.0, s[1] / 3.0};
}

Vec2 FineMesh::lattice_point(int v) const {
    if (lattice <= 0) return vertices[v];
    return {vertex_lattice[v][0] / double(lattice), vertex_lattice[v][1] / double(lattice)};
}

std::uint64_t FineMesh::hash() const {
    Hasher h;
    h.u64(vertices.size());
    for (const auto& v : vertices) {
        h.f64(v[0]);
        h.f64(v[1]);
    }
    h.u64(triangles.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        for (int v : triangles[t]) h.i64(v);
        h.i64(parent[t]);
    }
    return h.value();
}

namespace {

void build_edges(FineMesh& m) {
    std::vector<std::array<int, 4>> keyed;
    keyed.reserve(m.triangles.size() * 3);
    for (int t = 0; t < m.num_triangles(); ++t)
        for (int k = 0; k < 3; ++k) {
            int a = m.triangles[t][(k + 1) % 3], b = m.triangles[t][(k + 2) % 3];
            keyed.push_back({std::min(a, b), std::max(a, b), t, k});
        }
    std::sort(keyed.begin(), keyed.end());
    m.edges.clear();
    m.edge_tris.clear();
    m.tri_edges.assign(m.triangles.size(), {-1, -1, -1});
    for (std::size_t i = 0; i < keyed.size(); ++i) {
        if (i == 0 || keyed[i][0] != keyed[i - 1][0] || keyed[i][1] != keyed[i - 1][1]) {
            m.edges.push_back({keyed[i][0], keyed[i][1]});
            m.edge_tris.push_back({keyed[i][2], -1});
        } else {
            m.edge_tris.back()[1] = keyed[i][2];
        }
        m.tri_edges[keyed[i][2]][keyed[i][3]] = m.num_edges() - 1;
    }
}

int nearest_circle(const PerforatedGeometry& g, const Vec2& p, double* gap) {
    int best = -1;
    double bd = 1e300;
    for (std::size_t i = 0; i < g.inclusions.size(); ++i) {
        const auto& c = g.inclusions[i];
        double d = std::abs(std::hypot(p[0] - c.center[0], p[1] - c.center[1]) - c.radius);
        if (d < bd) {
            bd = d;
            best = static_cast<int>(i);
        }
    }
    if (gap) *gap = bd;
    return best;
}

Vec2 project(const Circle& c, const Vec2& p) {
    double dx = p[0] - c.center[0], dy = p[1] - c.center[1];
    double d = std::hypot(dx, dy);
    if (d == 0.0) return {c.center[0] + c.radius, c.center[1]};
    return {c.center[0] + c.radius * dx / d, c.center[1] + c.radius * dy / d};
}

int count_components(const FineMesh& m, const std::vector<int>& cells) {
    if (cells.empty()) return 0;
    std::vector<int> local(m.triangles.size(), -1);
    for (std::size_t i = 0; i < cells.size(); ++i) local[cells[i]] = static_cast<int>(i);
    std::vector<char> seen(cells.size(), 0);
    int comps = 0;
    std::vector<int> stack;
    for (std::size_t s = 0; s < cells.size(); ++s) {
        if (seen[s]) continue;
        ++comps;
        seen[s] = 1;
        stack.push_back(cells[s]);
        while (!stack.empty()) {
            int t = stack.back();
            stack.pop_back();
            for (int e : m.tri_edges[t])
                for (int nt : m.edge_tris[e]) {
                    if (nt < 0 || local[nt] < 0 || seen[local[nt]]) continue;
                    seen[local[nt]] = 1;
                    stack.push_back(nt);
                }
        }
    }
    return comps;
}

} // namespace

FineMesh refine_to_fine(CoarseGrid& grid, const PerforatedGeometry& g, int levels) {
    if (levels < 1) throw ValidationError("refine_to_fine: levels must be >= 1");
    const int msub = 1 << levels;
    const int N = grid.n * msub;
    FineMesh m;
    m.levels = levels;
    m.lattice = N;
    m.h = std::max(grid.hx, grid.hy) / msub;
    const double fx = (g.x1 - g.x0) / N, fy = (g.y1 - g.y0) / N;
    auto coord = [&](int a, int b) { return Vec2{g.x0 + a * fx, g.y0 + b * fy}; };
    for (std::size_t i = 0; i < g.inclusions.size(); ++i)
        if (2.0 * g.inclusions[i].radius < m.h)
            throw MeshError("inclusion " + std::to_string(i) + " is smaller than one fine cell; increase levels");

    // Lattice triangles of each coarse element, in element order.
    struct Raw {
        std::array<int, 3> key;
        int parent;
    };
    std::vector<Raw> raw;
    for (int e = 0; e < grid.num_elements(); ++e) {
        std::array<std::array<int, 2>, 3> P;
        for (int k = 0; k < 3; ++k) {
            auto l = grid.node_lattice(grid.elements[e][k]);
            P[k] = {l[0] * msub, l[1] * msub};
        }
        auto pt = [&](int i, int j) {
            int a = P[0][0] + (i * (P[1][0] - P[0][0]) + j * (P[2][0] - P[0][0])) / msub;
            int b = P[0][1] + (i * (P[1][1] - P[0][1]) + j * (P[2][1] - P[0][1])) / msub;
            return b * (N + 1) + a;
        };
        for (int j = 0; j < msub; ++j)
            for (int i = 0; i + j < msub; ++i) {
                raw.push_back({{pt(i, j), pt(i + 1, j), pt(i, j + 1)}, e});
                if (i + j <= msub - 2) raw.push_back({{pt(i + 1, j), pt(i + 1, j + 1), pt(i, j + 1)}, e});
            }
    }
    auto key_xy = [&](int key) { return coord(key % (N + 1), key / (N + 1)); };
    auto on_outer = [&](int key) {
        int a = key % (N + 1), b = key / (N + 1);
        return a == 0 || b == 0 || a == N || b == N;
    };

    // Vertices within the snap tolerance of a circle are projected first.
    const double snap = 0.3 * m.h;
    std::map<int, Vec2> moved;
    std::map<int, int> moved_circle;
    if (!g.inclusions.empty()) {
        for (const auto& r : raw)
            for (int key : r.key) {
                if (moved.count(key) || on_outer(key)) continue;
                double gap;
                Vec2 p = key_xy(key);
                int c = nearest_circle(g, p, &gap);
                if (gap <= snap) {
                    moved[key] = project(g.inclusions[c], p);
                    moved_circle[key] = c;
                }
            }
    }
    auto pos = [&](int key) {
        auto it = moved.find(key);
        return it == moved.end() ? key_xy(key) : it->second;
    };
    std::vector<char> keep(raw.size(), 1);
    std::vector<int> removed_per_circle(g.inclusions.size(), 0);
    auto centroid_hole = [&](const Raw& r) -> int {
        Vec2 c{0, 0};
        for (int key : r.key) {
            Vec2 p = pos(key);
            c[0] += p[0] / 3.0;
            c[1] += p[1] / 3.0;
        }
        for (std::size_t i = 0; i < g.inclusions.size(); ++i) {
            const auto& ci = g.inclusions[i];
            if (std::hypot(c[0] - ci.center[0], c[1] - ci.center[1]) < ci.radius) return static_cast<int>(i);
        }
        return -1;
    };
    for (std::size_t t = 0; t < raw.size(); ++t) {
        int c = centroid_hole(raw[t]);
        if (c >= 0) {
            keep[t] = 0;
            ++removed_per_circle[c];
        }
    }
    for (std::size_t i = 0; i < g.inclusions.size(); ++i)
        if (removed_per_circle[i] == 0)
            throw MeshError("inclusion " + std::to_string(i) + " is smaller than one fine cell; increase levels");

    // Project the remaining hole-boundary vertices and drop cells that
    // degenerate or fall inside a disk, until the boundary is stable.
    const double min_area = 0.05 * 0.5 * fx * fy;
    for (int sweep = 0;; ++sweep) {
        if (sweep > 20) throw MeshError("refine_to_fine: hole boundary projection did not stabilise");
        std::map<std::pair<int, int>, int> count;
        for (std::size_t t = 0; t < raw.size(); ++t) {
            if (!keep[t]) continue;
            for (int k = 0; k < 3; ++k) {
                int a = raw[t].key[(k + 1) % 3], b = raw[t].key[(k + 2) % 3];
                ++count[{std::min(a, b), std::max(a, b)}];
            }
        }
        bool changed = false;
        for (const auto& [e, c] : count) {
            if (c != 1) continue;
            auto [a, b] = e;
            int ax = a % (N + 1), ay = a / (N + 1), bx = b % (N + 1), by = b / (N + 1);
            bool outer = (ax == bx && (ax == 0 || ax == N)) || (ay == by && (ay == 0 || ay == N));
            if (outer) continue;
            for (int key : {a, b}) {
                if (moved.count(key)) continue;
                int ci = nearest_circle(g, key_xy(key), nullptr);
                moved[key] = project(g.inclusions[ci], key_xy(key));
                moved_circle[key] = ci;
                changed = true;
            }
        }
        for (std::size_t t = 0; t < raw.size(); ++t) {
            if (!keep[t]) continue;
            Vec2 a = pos(raw[t].key[0]), b = pos(raw[t].key[1]), c = pos(raw[t].key[2]);
            double ar = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
            int hole = centroid_hole(raw[t]);
            bool touched = moved.count(raw[t].key[0]) || moved.count(raw[t].key[1]) || moved.count(raw[t].key[2]);
            if (hole >= 0 || (ar < min_area && touched)) {
                // inside a disk, or squeezed by a projected vertex: the cell joins the hole
                keep[t] = 0;
                changed = true;
            } else if (ar < min_area) {
                throw MeshError("refine_to_fine: degenerate cell in coarse element " + std::to_string(raw[t].parent));
            }
        }
        if (!changed) break;
    }

    // Renumber used vertices in lattice order.
    std::vector<int> used;
    for (std::size_t t = 0; t < raw.size(); ++t)
        if (keep[t])
            for (int key : raw[t].key) used.push_back(key);
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    std::map<int, int> vid;
    for (std::size_t i = 0; i < used.size(); ++i) {
        vid[used[i]] = static_cast<int>(i);
        m.vertices.push_back(pos(used[i]));
        m.vertex_lattice.push_back({used[i] % (N + 1), used[i] / (N + 1)});
        auto it = moved_circle.find(used[i]);
        m.vertex_circle.push_back(it == moved_circle.end() ? -1 : it->second);
    }
    grid.fine_cells.assign(grid.num_elements(), {});
    for (std::size_t t = 0; t < raw.size(); ++t) {
        if (!keep[t]) continue;
        int id = m.num_triangles();
        m.triangles.push_back({vid[raw[t].key[0]], vid[raw[t].key[1]], vid[raw[t].key[2]]});
        m.parent.push_back(raw[t].parent);
        grid.fine_cells[raw[t].parent].push_back(id);
    }
    build_edges(m);

    // Boundary tags and coarse-edge membership.
    m.edge_tag.assign(m.num_edges(), -1);
    m.edge_coarse.assign(m.num_edges(), -1);
    for (int e = 0; e < m.num_edges(); ++e) {
        auto la = m.vertex_lattice[m.edges[e][0]], lb = m.vertex_lattice[m.edges[e][1]];
        if (m.edge_tris[e][1] < 0) {
            BoundaryTag tag = BoundaryTag::Perforation;
            if (la[0] == 0 && lb[0] == 0) tag = BoundaryTag::OuterLeft;
            else if (la[0] == N && lb[0] == N) tag = BoundaryTag::OuterRight;
            else if (la[1] == 0 && lb[1] == 0) tag = BoundaryTag::OuterBottom;
            else if (la[1] == N && lb[1] == N) tag = BoundaryTag::OuterTop;
            m.edge_tag[e] = static_cast<int>(tag);
            m.boundary_edges.push_back({m.edges[e][0], m.edges[e][1], tag});
        }
        for (int t : m.edge_tris[e]) {
            if (t < 0) continue;
            int ce = m.parent[t];
            for (int k = 0; k < 3; ++k) {
                auto P = grid.node_lattice(grid.elements[ce][(k + 1) % 3]);
                auto Q = grid.node_lattice(grid.elements[ce][(k + 2) % 3]);
                long px = P[0] * msub, py = P[1] * msub, qx = Q[0] * msub, qy = Q[1] * msub;
                auto on = [&](std::array<int, 2> r) {
                    long cr = (qx - px) * (r[1] - py) - (qy - py) * (r[0] - px);
                    return cr == 0;
                };
                if (on(la) && on(lb)) m.edge_coarse[e] = grid.element_edges[ce][k];
            }
        }
    }

    for (int e = 0; e < grid.num_elements(); ++e) {
        int comps = count_components(m, grid.fine_cells[e]);
        if (comps == 0) throw MeshError("coarse element " + std::to_string(e) + " lies entirely inside the perforations");
        if (comps > 1)
            throw MeshError("perforations split coarse element " + std::to_string(e) + " into " + std::to_string(comps) +
                            " disconnected pieces");
    }
    std::vector<int> all(m.num_triangles());
    for (int t = 0; t < m.num_triangles(); ++t) all[t] = t;
    if (count_components(m, all) != 1) throw MeshError("refine_to_fine: perforated domain is disconnected");
    return m;
}

std::vector<int> region_boundary_edges(const FineMesh& m, const std::vector<int>& cells) {
    std::vector<int> in(m.triangles.size(), 0);
    for (int t : cells) in[t] = 1;
    std::vector<int> out;
    std::vector<char> seen(m.edges.size(), 0);
    for (int t : cells)
        for (int e : m.tri_edges[t]) {
            if (seen[e]) continue;
            seen[e] = 1;
            int a = m.edge_tris[e][0], b = m.edge_tris[e][1];
            int cnt = (a >= 0 && in[a]) + (b >= 0 && in[b]);
            if (cnt == 1) out.push_back(e);
        }
    std::sort(out.begin(), out.end());
    return out;
}

void fill_interface(const FineMesh& m, Neighborhood& nb) {
    std::vector<char> hole_vertex(m.vertices.size(), 0);
    for (int e = 0; e < m.num_edges(); ++e)
        if (m.edge_tag[e] == static_cast<int>(BoundaryTag::Perforation)) {
            hole_vertex[m.edges[e][0]] = 1;
            hole_vertex[m.edges[e][1]] = 1;
        }
    nb.interface_edges.clear();
    nb.interface_vertices.clear();
    for (int e : region_boundary_edges(m, nb.cells)) {
        if (m.edge_tag[e] == static_cast<int>(BoundaryTag::Perforation)) continue;
        nb.interface_edges.push_back(e);
        for (int v : m.edges[e])
            if (!hole_vertex[v]) nb.interface_vertices.push_back(v);
    }
    std::sort(nb.interface_vertices.begin(), nb.interface_vertices.end());
    nb.interface_vertices.erase(std::unique(nb.interface_vertices.begin(), nb.interface_vertices.end()),
                                nb.interface_vertices.end());
}

std::vector<Neighborhood> build_neighborhoods(const CoarseGrid& grid, const FineMesh& m, bool with_edges) {
    std::vector<Neighborhood> out;
    auto make = [&](NeighborhoodKind kind, int anchor, std::vector<int> elements) {
        Neighborhood nb;
        nb.id = static_cast<int>(out.size());
        nb.kind = kind;
        nb.anchor = anchor;
        std::sort(elements.begin(), elements.end());
        nb.elements = elements;
        for (int e : elements) nb.cells.insert(nb.cells.end(), grid.fine_cells[e].begin(), grid.fine_cells[e].end());
        std::sort(nb.cells.begin(), nb.cells.end());
        nb.base_cells = nb.cells;
        fill_interface(m, nb);
        out.push_back(std::move(nb));
    };
    for (int i = 0; i < grid.num_nodes(); ++i) make(NeighborhoodKind::Node, i, grid.node_elements[i]);
    if (with_edges)
        for (int e = 0; e < grid.num_edges(); ++e) make(NeighborhoodKind::Edge, e, grid.edge_elements[e]);
    return out;
}

Neighborhood oversample(const FineMesh& m, const Neighborhood& nb, int layers) {
    Neighborhood out = nb;
    if (layers <= 0) return out;
    std::vector<char> in(m.triangles.size(), 0);
    for (int t : nb.cells) in[t] = 1;
    std::vector<int> front = nb.cells;
    for (int l = 0; l < layers; ++l) {
        std::vector<int> next;
        for (int t : front)
            for (int e : m.tri_edges[t])
                for (int nt : m.edge_tris[e])
                    if (nt >= 0 && !in[nt]) {
                        in[nt] = 1;
                        next.push_back(nt);
                    }
        if (next.empty()) break;
        out.cells.insert(out.cells.end(), next.begin(), next.end());
        front = std::move(next);
    }
    std::sort(out.cells.begin(), out.cells.end());
    out.oversample_layers = nb.oversample_layers + layers;
    fill_interface(m, out);
    return out;
}

int cover_constant(const CoarseGrid& grid, const std::vector<Neighborhood>& nbs) {
    std::vector<int> count(grid.num_elements(), 0);
    for (const auto& nb : nbs)
        for (int e : nb.elements) ++count[e];
    int c = 0;
    for (int v : count) c = std::max(c, v);
    return c;
}

bool neighborhoods_overlap(const Neighborhood& a, const Neighborhood& b) {
    std::size_t i = 0, j = 0;
    while (i < a.elements.size() && j < b.elements.size()) {
        if (a.elements[i] == b.elements[j]) return true;
        if (a.elements[i] < b.elements[j]) ++i;
        else ++j;
    }
    return false;
}

void write_mesh(std::ostream& out, const FineMesh& m) {
    char buf[128];
    out << "perfmesh v1\n";
    for (const auto& v : m.vertices) {
        std::snprintf(buf, sizeof buf, "vertex %.17g %.17g\n", v[0], v[1]);
        out << buf;
    }
    for (int t = 0; t < m.num_triangles(); ++t)
        out << "tri " << m.triangles[t][0] << ' ' << m.triangles[t][1] << ' ' << m.triangles[t][2] << ' ' << m.parent[t]
            << '\n';
    for (const auto& b : m.boundary_edges) out << "bedge " << b.a << ' ' << b.b << ' ' << tag_name(b.tag) << '\n';
}

FineMesh read_mesh(std::istream& in) {
    FineMesh m;
    std::string line;
    if (!std::getline(in, line) || line != "perfmesh v1") throw IoError("mesh file: missing 'perfmesh v1' header");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string kw;
        if (!(ss >> kw)) continue;
        if (kw == "vertex") {
            Vec2 p;
            if (!(ss >> p[0] >> p[1])) throw IoError("mesh file line " + std::to_string(lineno) + ": bad vertex");
            m.vertices.push_back(p);
        } else if (kw == "tri") {
            std::array<int, 3> t;
            int parent;
            if (!(ss >> t[0] >> t[1] >> t[2] >> parent)) throw IoError("mesh file line " + std::to_string(lineno) + ": bad tri");
            m.triangles.push_back(t);
            m.parent.push_back(parent);
        } else if (kw == "bedge") {
            BoundaryEdge b;
            std::string tag;
            if (!(ss >> b.a >> b.b >> tag)) throw IoError("mesh file line " + std::to_string(lineno) + ": bad bedge");
            bool found = false;
            for (int k = 0; k <= 4; ++k)
                if (tag == tag_name(static_cast<BoundaryTag>(k))) {
                    b.tag = static_cast<BoundaryTag>(k);
                    found = true;
                }
            if (!found) throw IoError("mesh file line " + std::to_string(lineno) + ": unknown tag " + tag);
            m.boundary_edges.push_back(b);
        } else {
            throw IoError("mesh file line " + std::to_string(lineno) + ": unknown record '" + kw + "'");
        }
    }
    for (const auto& t : m.triangles)
        for (int v : t)
            if (v < 0 || v >= m.num_vertices()) throw IoError("mesh file: triangle references missing vertex");
    m.vertex_circle.assign(m.vertices.size(), -1);
    build_edges(m);
    m.edge_tag.assign(m.num_edges(), -1);
    m.edge_coarse.assign(m.num_edges(), -1);
    std::map<std::pair<int, int>, int> lookup;
    for (int e = 0; e < m.num_edges(); ++e) lookup[{m.edges[e][0], m.edges[e][1]}] = e;
    for (const auto& b : m.boundary_edges) {
        auto it = lookup.find({std::min(b.a, b.b), std::max(b.a, b.b)});
        if (it == lookup.end()) throw IoError("mesh file: bedge is not a mesh edge");
        m.edge_tag[it->second] = static_cast<int>(b.tag);
    }
    return m;
}

} // namespace perfms
