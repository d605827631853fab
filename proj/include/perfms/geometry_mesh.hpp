#pragma once

#include "perfms/common.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace perfms {

struct Circle {
    Vec2 center{};
    double radius = 0.0;
};

struct PerforatedGeometry {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    std::vector<Circle> inclusions;
    std::string label;

    bool inside_hole(const Vec2& p) const;
    std::uint64_t hash() const;
};

// Built-in names: "empty", "small-inclusions", "big-inclusions".
std::vector<std::string> builtin_geometries();
bool is_builtin_geometry(const std::string& name);

// Accepts a built-in name or a path to a circle file (lines "circle x y r").
PerforatedGeometry build_geometry(const std::string& descriptor);
PerforatedGeometry build_geometry(std::vector<Circle> circles, std::string label = "custom");
void validate_geometry(const PerforatedGeometry& g);
PerforatedGeometry parse_circle_file(std::istream& in, const std::string& label);

struct CoarseGrid {
    int n = 0;
    double H = 0.0;
    double x0 = 0.0, y0 = 0.0, hx = 0.0, hy = 0.0;
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 2>> edges;
    std::vector<std::array<int, 3>> elements;       // counter-clockwise node ids
    std::vector<std::array<int, 3>> element_edges;  // local edge k is opposite node k
    std::vector<std::vector<int>> node_elements;
    std::vector<std::vector<int>> edge_elements;
    std::vector<std::vector<int>> fine_cells;       // filled by refine_to_fine

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int num_edges() const { return static_cast<int>(edges.size()); }
    int num_elements() const { return static_cast<int>(elements.size()); }
    // Integer lattice coordinates of node i (multiples of the coarse spacing).
    std::array<int, 2> node_lattice(int i) const { return {i % (n + 1), i / (n + 1)}; }
    bool is_boundary_edge(int e) const { return edge_elements[e].size() == 1; }
};

CoarseGrid build_coarse_grid(const PerforatedGeometry& g, int n_per_side);

enum class BoundaryTag { OuterLeft = 0, OuterRight = 1, OuterTop = 2, OuterBottom = 3, Perforation = 4 };
const char* tag_name(BoundaryTag t);

struct BoundaryEdge {
    int a = 0, b = 0;
    BoundaryTag tag = BoundaryTag::Perforation;
};

struct FineMesh {
    int levels = 0;
    int lattice = 0;  // fine subdivisions per unit side (n * 2^levels)
    double h = 0.0;
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 2>> vertex_lattice;  // position before snapping, in lattice units
    std::vector<int> vertex_circle;                  // inclusion a vertex was projected onto, or -1
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> parent;
    std::vector<std::array<int, 2>> edges;
    std::vector<std::array<int, 3>> tri_edges;  // local edge k is opposite vertex k
    std::vector<std::array<int, 2>> edge_tris;  // second entry -1 on the boundary
    std::vector<int> edge_tag;                  // -1 interior, else BoundaryTag value
    std::vector<int> edge_coarse;               // coarse edge the fine edge lies on, or -1
    std::vector<BoundaryEdge> boundary_edges;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
    int num_edges() const { return static_cast<int>(edges.size()); }
    double area(int t) const;
    Vec2 centroid(int t) const;
    Vec2 lattice_point(int v) const;  // unperturbed coordinates of vertex v
    std::uint64_t hash() const;
};

// Red-refines every coarse triangle `levels` times, removes cells inside the
// inclusions and projects the hole boundary onto the circles. Fills
// grid.fine_cells.
FineMesh refine_to_fine(CoarseGrid& grid, const PerforatedGeometry& g, int levels);

enum class NeighborhoodKind { Node, Edge };

struct Neighborhood {
    int id = 0;
    NeighborhoodKind kind = NeighborhoodKind::Node;
    int anchor = 0;
    std::vector<int> elements;          // coarse elements of the base region
    std::vector<int> cells;             // fine cells (sorted), possibly oversampled
    std::vector<int> base_cells;        // fine cells of the base region (sorted)
    std::vector<int> interface_vertices;  // on the region boundary, off the perforations
    std::vector<int> interface_edges;     // region boundary edges that are not perforation edges
    int oversample_layers = 0;
};

// Region helpers over arbitrary fine-cell subsets.
std::vector<int> region_boundary_edges(const FineMesh& m, const std::vector<int>& cells);
void fill_interface(const FineMesh& m, Neighborhood& nb);

// One node neighborhood per coarse node; edge neighborhoods (ids after the
// node ones) when with_edges is set.
std::vector<Neighborhood> build_neighborhoods(const CoarseGrid& grid, const FineMesh& m, bool with_edges);
Neighborhood oversample(const FineMesh& m, const Neighborhood& nb, int layers);

// Largest number of neighborhoods sharing one coarse element.
int cover_constant(const CoarseGrid& grid, const std::vector<Neighborhood>& nbs);
bool neighborhoods_overlap(const Neighborhood& a, const Neighborhood& b);

void write_mesh(std::ostream& out, const FineMesh& m);
FineMesh read_mesh(std::istream& in);

} // namespace perfms
