#pragma once

#include "perfms/fem_core.hpp"

#include <iosfwd>

namespace perfms {

enum class SnapshotMode { Standard, Randomized };
const char* snapshot_mode_name(SnapshotMode m);
SnapshotMode parse_snapshot_mode(const std::string& s);

struct RandomizedOptions {
    int count = 4;   // n: target number of basis functions
    int extra = 4;   // oversampling of the sample count (n + extra solves)
    int layers = 4;  // rings of fine cells added around the neighborhood
    std::uint64_t seed = 1;
};

struct SnapshotColumn {
    int source = -1;     // interface vertex / fine edge, or sample index
    int component = 0;
    bool random = false;
    bool constant = false;
};

struct SnapshotSpace {
    int nb = 0;
    SnapshotMode mode = SnapshotMode::Standard;
    std::vector<int> dofs;  // dofs of the neighborhood, rows of `columns`
    Mat columns;
    std::vector<SnapshotColumn> info;
    int standard_count = 0;  // size the standard construction has on this neighborhood
    int deflated = 0;        // directions below the rank tolerance of the energy Gram
    std::vector<std::string> warnings;

    int size() const { return static_cast<int>(columns.cols()); }
};

// Region of a neighborhood used by every snapshot solve: all region-boundary
// dofs are prescribed, hole dofs are zero.
Region snapshot_region(const Discretization& d, const std::vector<int>& cells);

// Interface fine dofs that carry snapshot data (region boundary, not on the
// perforations, not globally constrained), grouped per interface entity.
int standard_snapshot_count(const Discretization& d, const Neighborhood& nb);

SnapshotSpace standard_snapshots(const Discretization& d, const Neighborhood& nb);
SnapshotSpace randomized_snapshots(const Discretization& d, const Neighborhood& nb, const RandomizedOptions& opt);

// Energy Gram of the columns on the neighborhood.
Mat snapshot_energy_gram(const Discretization& d, const Neighborhood& nb, const SnapshotSpace& s);
int numerical_rank(const Mat& gram, double rel_tol = 1e-10);

struct SnapshotSet {
    SnapshotMode mode = SnapshotMode::Standard;
    RandomizedOptions rand;
    std::vector<SnapshotSpace> spaces;  // one per neighborhood

    int total_columns() const;
    int total_standard() const;
    double fraction() const;  // randomized columns over the standard count
};

SnapshotSet build_snapshots(const Discretization& d, SnapshotMode mode, const RandomizedOptions& opt, int threads);

// Versioned binary cache of snapshot columns.
void write_snapshots(std::ostream& out, const SnapshotSet& s, std::uint64_t key);
SnapshotSet read_snapshots(std::istream& in, std::uint64_t key);

} // namespace perfms
