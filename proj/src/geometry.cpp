#include "perfms/geometry_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace perfms {

bool PerforatedGeometry::inside_hole(const Vec2& p) const {
    for (const auto& c : inclusions) {
        double dx = p[0] - c.center[0], dy = p[1] - c.center[1];
        if (dx * dx + dy * dy < c.radius * c.radius) return true;
    }
    return false;
}

std::uint64_t PerforatedGeometry::hash() const {
    Hasher h;
    h.f64(x0);
    h.f64(y0);
    h.f64(x1);
    h.f64(y1);
    h.u64(inclusions.size());
    for (const auto& c : inclusions) {
        h.f64(c.center[0]);
        h.f64(c.center[1]);
        h.f64(c.radius);
    }
    return h.value();
}

void validate_geometry(const PerforatedGeometry& g) {
    if (!(g.x1 > g.x0 && g.y1 > g.y0)) throw ValidationError("geometry: outer box is empty");
    for (std::size_t i = 0; i < g.inclusions.size(); ++i) {
        const auto& c = g.inclusions[i];
        if (!(c.radius > 0.0)) throw ValidationError("geometry: inclusion " + std::to_string(i) + " has non-positive radius");
        if (c.center[0] - c.radius <= g.x0 || c.center[0] + c.radius >= g.x1 || c.center[1] - c.radius <= g.y0 ||
            c.center[1] + c.radius >= g.y1)
            throw ValidationError("geometry: inclusion " + std::to_string(i) + " is not strictly inside the outer box");
    }
    for (std::size_t i = 0; i < g.inclusions.size(); ++i)
        for (std::size_t j = i + 1; j < g.inclusions.size(); ++j) {
            const auto& a = g.inclusions[i];
            const auto& b = g.inclusions[j];
            double d = std::hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]);
            if (d <= a.radius + b.radius)
                throw ValidationError("geometry: inclusions " + std::to_string(i) + " and " + std::to_string(j) +
                                      " overlap");
        }
}

PerforatedGeometry build_geometry(std::vector<Circle> circles, std::string label) {
    PerforatedGeometry g;
    g.inclusions = std::move(circles);
    g.label = std::move(label);
    validate_geometry(g);
    return g;
}

namespace {

double seg_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
    double vx = b[0] - a[0], vy = b[1] - a[1];
    double t = ((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / (vx * vx + vy * vy);
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(a[0] + t * vx - p[0], a[1] + t * vy - p[1]);
}

// True when every coarse triangle minus the inclusions stays connected, judged
// on a sampling lattice of `res` subdivisions per coarse edge.
bool coarse_cells_connected(const std::vector<Circle>& circles, int n, int res, int* bad_element = nullptr) {
    double hc = 1.0 / n;
    for (int J = 0; J < n; ++J)
        for (int I = 0; I < n; ++I)
            for (int t = 0; t < 2; ++t) {
                Vec2 p0{I * hc, J * hc};
                Vec2 p1 = t == 0 ? Vec2{(I + 1) * hc, J * hc} : Vec2{(I + 1) * hc, (J + 1) * hc};
                Vec2 p2 = t == 0 ? Vec2{(I + 1) * hc, (J + 1) * hc} : Vec2{I * hc, (J + 1) * hc};
                bool touched = false;
                for (const auto& c : circles) {
                    double d = std::min({seg_dist(c.center, p0, p1), seg_dist(c.center, p1, p2), seg_dist(c.center, p2, p0)});
                    // a disk fully inside the triangle cannot disconnect it
                    if (d <= c.radius) touched = true;
                }
                if (!touched) continue;
                auto idx = [res](int i, int j) { return j * (res + 1) + i; };
                std::vector<char> free((res + 1) * (res + 1), 0);
                for (int j = 0; j <= res; ++j)
                    for (int i = 0; i + j <= res; ++i) {
                        double a = double(i) / res, b = double(j) / res;
                        Vec2 p{p0[0] + a * (p1[0] - p0[0]) + b * (p2[0] - p0[0]), p0[1] + a * (p1[1] - p0[1]) + b * (p2[1] - p0[1])};
                        bool in = false;
                        for (const auto& c : circles)
                            if (std::hypot(p[0] - c.center[0], p[1] - c.center[1]) < c.radius) in = true;
                        free[idx(i, j)] = !in;
                    }
                std::vector<char> seen(free.size(), 0);
                int comps = 0;
                std::vector<std::array<int, 2>> stack;
                for (int j = 0; j <= res; ++j)
                    for (int i = 0; i + j <= res; ++i) {
                        if (!free[idx(i, j)] || seen[idx(i, j)]) continue;
                        ++comps;
                        stack.push_back({i, j});
                        seen[idx(i, j)] = 1;
                        while (!stack.empty()) {
                            auto [ci, cj] = stack.back();
                            stack.pop_back();
                            const int nb[6][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, -1}, {-1, 1}};
                            for (auto& d : nb) {
                                int ni = ci + d[0], nj = cj + d[1];
                                if (ni < 0 || nj < 0 || ni + nj > res) continue;
                                if (!free[idx(ni, nj)] || seen[idx(ni, nj)]) continue;
                                seen[idx(ni, nj)] = 1;
                                stack.push_back({ni, nj});
                            }
                        }
                    }
                if (comps > 1) {
                    if (bad_element) *bad_element = 2 * (J * n + I) + t;
                    return false;
                }
            }
    return true;
}

// Keeps circles clear of coarse vertices and edges of the grids a built-in
// layout is meant for, so no coarse cell gets a sliver or a cut-off corner.
bool clear_of_grid(const Circle& c, int n, double margin) {
    double hc = 1.0 / n;
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) {
            double d = std::hypot(c.center[0] - i * hc, c.center[1] - j * hc);
            if (std::abs(d - c.radius) < margin) return false;
        }
    for (int j = 0; j <= n; ++j) {
        double dy = std::abs(c.center[1] - j * hc);
        if (std::abs(dy - c.radius) < margin) return false;
    }
    for (int i = 0; i <= n; ++i) {
        double dx = std::abs(c.center[0] - i * hc);
        if (std::abs(dx - c.radius) < margin) return false;
    }
    for (int k = -n; k <= n; ++k) {
        // diagonals y - x = k*hc
        double d = std::abs(c.center[1] - c.center[0] - k * hc) / std::sqrt(2.0);
        if (std::abs(d - c.radius) < margin) return false;
    }
    return true;
}

struct Slot {
    double cx0, cx1, cy0, cy1, r0, r1;
};

std::vector<Circle> place(const std::vector<Slot>& slots, std::uint32_t seed, double gap, const std::vector<int>& grids) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Circle> out;
    for (const auto& s : slots) {
        for (int attempt = 0; attempt < 400; ++attempt) {
            Circle c{{s.cx0 + (s.cx1 - s.cx0) * u(rng), s.cy0 + (s.cy1 - s.cy0) * u(rng)}, s.r0 + (s.r1 - s.r0) * u(rng)};
            if (c.center[0] - c.radius < 0.04 || c.center[0] + c.radius > 0.96 || c.center[1] - c.radius < 0.04 ||
                c.center[1] + c.radius > 0.96)
                continue;
            bool ok = true;
            for (const auto& o : out)
                if (std::hypot(c.center[0] - o.center[0], c.center[1] - o.center[1]) < c.radius + o.radius + gap) ok = false;
            for (int n : grids)
                if (ok && !clear_of_grid(c, n, 0.02)) ok = false;
            if (!ok) continue;
            auto trial = out;
            trial.push_back(c);
            for (int n : grids)
                if (ok && !coarse_cells_connected(trial, n, 48)) ok = false;
            if (!ok) continue;
            out.push_back(c);
            break;
        }
    }
    return out;
}

PerforatedGeometry small_inclusions() {
    std::vector<Slot> slots;
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
            double cx = 0.125 + 0.25 * i, cy = 0.125 + 0.25 * j;
            slots.push_back({cx - 0.06, cx + 0.06, cy - 0.06, cy + 0.06, 0.035, 0.06});
        }
    for (int k = 0; k < 4; ++k) {
        double cx = 0.25 + 0.5 * (k % 2), cy = 0.25 + 0.5 * (k / 2);
        slots.push_back({cx - 0.05, cx + 0.05, cy - 0.05, cy + 0.05, 0.035, 0.05});
    }
    PerforatedGeometry g;
    g.inclusions = place(slots, 20150611u, 0.03, {4, 5});
    g.label = "small-inclusions";
    return g;
}

PerforatedGeometry big_inclusions() {
    std::vector<Slot> slots = {
        {0.24, 0.34, 0.24, 0.34, 0.11, 0.15}, {0.66, 0.76, 0.22, 0.32, 0.11, 0.15},
        {0.24, 0.34, 0.66, 0.76, 0.11, 0.15}, {0.66, 0.76, 0.66, 0.76, 0.11, 0.15},
    };
    for (int k = 0; k < 8; ++k) slots.push_back({0.08, 0.92, 0.08, 0.92, 0.035, 0.045});
    PerforatedGeometry g;
    g.inclusions = place(slots, 20150612u, 0.025, {4, 5});
    g.label = "big-inclusions";
    return g;
}

} // namespace

std::vector<std::string> builtin_geometries() { return {"empty", "small-inclusions", "big-inclusions"}; }

bool is_builtin_geometry(const std::string& name) {
    auto b = builtin_geometries();
    return std::find(b.begin(), b.end(), name) != b.end();
}

PerforatedGeometry parse_circle_file(std::istream& in, const std::string& label) {
    std::vector<Circle> circles;
    std::string line, lab = label;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        std::string kw;
        if (!(ss >> kw)) continue;
        if (kw == "circle") {
            Circle c;
            if (!(ss >> c.center[0] >> c.center[1] >> c.radius))
                throw ValidationError("geometry file line " + std::to_string(lineno) + ": expected 'circle x y r'");
            circles.push_back(c);
        } else if (kw == "label") {
            ss >> lab;
        } else {
            throw ValidationError("geometry file line " + std::to_string(lineno) + ": unknown keyword '" + kw + "'");
        }
    }
    return build_geometry(std::move(circles), lab);
}

PerforatedGeometry build_geometry(const std::string& descriptor) {
    PerforatedGeometry g;
    if (descriptor == "empty") {
        g.label = "empty";
    } else if (descriptor == "small-inclusions") {
        g = small_inclusions();
    } else if (descriptor == "big-inclusions") {
        g = big_inclusions();
    } else {
        std::ifstream in(descriptor);
        if (!in) throw ValidationError("unknown geometry '" + descriptor + "' (not a built-in name or readable file)");
        return parse_circle_file(in, descriptor);
    }
    validate_geometry(g);
    return g;
}

CoarseGrid build_coarse_grid(const PerforatedGeometry& g, int n) {
    if (n < 1) throw ValidationError("coarse grid: n_per_side must be >= 1");
    validate_geometry(g);
    CoarseGrid c;
    c.n = n;
    c.x0 = g.x0;
    c.y0 = g.y0;
    c.hx = (g.x1 - g.x0) / n;
    c.hy = (g.y1 - g.y0) / n;
    c.H = std::max(c.hx, c.hy);
    auto nid = [n](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) c.nodes.push_back({g.x0 + i * c.hx, g.y0 + j * c.hy});
    for (int J = 0; J < n; ++J)
        for (int I = 0; I < n; ++I) {
            c.elements.push_back({nid(I, J), nid(I + 1, J), nid(I + 1, J + 1)});
            c.elements.push_back({nid(I, J), nid(I + 1, J + 1), nid(I, J + 1)});
        }
    // edges in order of first appearance
    std::vector<std::array<int, 4>> keyed;  // a, b, element, local
    for (int e = 0; e < c.num_elements(); ++e)
        for (int k = 0; k < 3; ++k) {
            int a = c.elements[e][(k + 1) % 3], b = c.elements[e][(k + 2) % 3];
            keyed.push_back({std::min(a, b), std::max(a, b), e, k});
        }
    std::sort(keyed.begin(), keyed.end());
    c.element_edges.assign(c.num_elements(), {-1, -1, -1});
    for (std::size_t i = 0; i < keyed.size(); ++i) {
        if (i == 0 || keyed[i][0] != keyed[i - 1][0] || keyed[i][1] != keyed[i - 1][1]) {
            c.edges.push_back({keyed[i][0], keyed[i][1]});
            c.edge_elements.emplace_back();
        }
        int eid = c.num_edges() - 1;
        c.element_edges[keyed[i][2]][keyed[i][3]] = eid;
        c.edge_elements[eid].push_back(keyed[i][2]);
    }
    for (auto& v : c.edge_elements) std::sort(v.begin(), v.end());
    c.node_elements.assign(c.num_nodes(), {});
    for (int e = 0; e < c.num_elements(); ++e)
        for (int v : c.elements[e]) c.node_elements[v].push_back(e);
    int bad = -1;
    std::vector<Circle> unit;
    for (const auto& ci : g.inclusions)
        unit.push_back({{(ci.center[0] - g.x0) / (g.x1 - g.x0), (ci.center[1] - g.y0) / (g.y1 - g.y0)},
                        ci.radius / std::min(g.x1 - g.x0, g.y1 - g.y0)});
    if (!coarse_cells_connected(unit, n, 64, &bad))
        throw MeshError("coarse grid: perforations split coarse element " + std::to_string(bad) +
                        " into disconnected pieces");
    return c;
}

} // namespace perfms
