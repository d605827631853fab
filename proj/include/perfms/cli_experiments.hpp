#pragma once

#include "perfms/diagnostics_metrics.hpp"

#include <iosfwd>
#include <optional>

namespace perfms {

struct RunConfig {
    // [mesh]
    std::string geometry = "big-inclusions";
    int n = 5;
    int levels = 3;
    // [operator]; unset values take the operator defaults
    OperatorKind kind = OperatorKind::Stokes;
    std::optional<double> E, nu;
    std::optional<Vec2> f;
    // [snapshots]
    SnapshotMode snapshots = SnapshotMode::Standard;
    int rand_count = 4;
    int oversample = 4;
    std::uint64_t seed = 1;
    // [offline]
    int basis = 2;
    // [online]
    double theta = 0.7;
    IndicatorKind indicator = IndicatorKind::Ind1;
    bool adaptive = false;
    int iters = 2;
    double tol = 0.0;
    std::string reference = "fine";  // fine, snapshot, none
    std::string load = "assembled";  // assembled, snapshot (F = A u-hat - Bᵀ p-hat)
    // [run]
    int threads = 1;
    std::string out = "perfms_out";
    SolverKind solver = SolverKind::Direct;  // fine solve; cg is ignored for Stokes

    void validate() const;
    OperatorSpec spec() const;
    RandomizedOptions randomized() const;
    OnlineSchedule schedule() const;
};

// key = value lines under [section] headers; '#' starts a comment.
void set_config_value(RunConfig& c, const std::string& section, const std::string& key, const std::string& value);
// `seen` collects the keys present in the input.
RunConfig parse_config(std::istream& in, RunConfig base = RunConfig(), std::vector<std::string>* seen = nullptr);
RunConfig load_config(const std::string& path, RunConfig base = RunConfig(), std::vector<std::string>* seen = nullptr);
std::string serialize_config(const RunConfig& c);

// Shared state of one configuration; every stage builds only what it needs.
class Pipeline {
public:
    explicit Pipeline(RunConfig c);
    const RunConfig& config() const { return c_; }
    const Discretization& disc();
    const SnapshotSet& snapshots();  // cached under the cache directory
    const OfflineData& offline_data();
    const FineSolution& fine();
    const SnapshotSolution& snapshot_solution();
    const ResidualSolver& residual_solver();
    const Vec& load();  // empty for the assembled load
    std::string cache_dir() const;
    std::uint64_t offline_key(int basis);

private:
    RunConfig c_;
    std::optional<Discretization> d_;
    std::optional<SnapshotSet> snaps_;
    std::optional<OfflineData> data_;
    std::optional<FineSolution> fine_;
    std::optional<SnapshotSolution> hat_;
    std::unique_ptr<SnapshotReference> ref_;
    std::unique_ptr<ResidualSolver> rs_;
    std::optional<Vec> load_;
};

struct TrajectoryRow {
    int level = 1;
    int dof = 0;
    int marked_count = 0;
    double sum_eta = 0.0;
    std::optional<ErrorReport> err;
    std::optional<BoundCheck> bound;  // against u-hat, snapshot reference only
};

std::vector<TrajectoryRow> trajectory(Pipeline& p, const OnlineResult& res, const std::vector<double>& next_lambda);
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows, bool stokes);
void write_bound_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

// Online run from an offline space; also returns the trajectory rows.
struct Study {
    OnlineResult result;
    std::vector<TrajectoryRow> rows;
};
Study run_study(Pipeline& p, const OfflineSpace& off, const std::vector<double>& next_lambda,
                const OnlineSchedule& sched);

// Stages. Each reads and writes artifacts in c.out and returns a short summary.
std::string stage_mesh(const RunConfig& c);
std::string stage_solve_fine(const RunConfig& c);
std::string stage_offline(const RunConfig& c);
std::string stage_online(const RunConfig& c);
std::string stage_report(const RunConfig& c);

std::vector<std::string> preset_names();
// Applies the preset's defaults (operator, geometry) where the user kept the defaults.
RunConfig preset_config(const std::string& name, RunConfig c, const std::vector<std::string>& explicit_keys);
std::string run_preset(const std::string& name, const RunConfig& c);

} // namespace perfms
