// SPDX-License-Identifier: MIT
//
// Experiment orchestration: the per-step simulation loop for every algorithm
// variant, regret/communication accounting, named presets, and CSV output.
//
// Common random numbers: for a given seed, the environment, the per-step
// action-set/noise stream, and the uniform-exploration stream are identical
// across algorithms, so cross-algorithm comparisons are paired and the queue
// variants diverge only where their protocols differ.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedband/environment.hpp"
#include "fedband/server.hpp"

namespace fedband {

enum class Algorithm {
    HetoFedBandit,    // two-stage: uniform exploration, one-shot clustering,
                      // event-triggered FIFO cluster sync
    HetoFedBanditE,   // dynamic re-clustering + priority queue
    HetoFedBanditPQ,  // one-shot clustering + priority queue
    HetoFedBanditDR,  // dynamic re-clustering + FIFO queue
    NIndepLinUCB,     // independent learners, no communication
    DisLinUCB,        // single all-client cluster, no homogeneity tests
};

// "HetoFedBandit-E", "NIndepLinUCB", ... (used in CSV and CLI).
std::string algorithm_name(Algorithm a);
// Inverse of algorithm_name; throws std::invalid_argument for unknown names.
Algorithm algorithm_from_name(const std::string& name);

struct RunConfig {
    EnvConfig env;
    Algorithm algorithm = Algorithm::HetoFedBandit;
    long T0 = 0;          // exploration length (only the HetoFedBandit family)
    double lambda = 0.1;  // ridge regularizer
    double delta = 0.1;   // confidence level
    std::optional<double> upsilon_override;   // fixed homogeneity threshold
    std::optional<QueueMode> queue_override;  // force FIFO or priority pop
    std::vector<std::uint64_t> seeds;         // used by run_all
};

// Throws std::invalid_argument on violated constraints
// (0 <= T0 <= T, lambda > 0, 0 < delta < 1, valid env).
void validate(const RunConfig& cfg);

struct SimTrace {
    std::string algorithm;
    std::uint64_t seed = 0;
    // Indexed by step t in [0, T]; entry 0 is 0 for both series.
    std::vector<double> cum_regret;
    std::vector<long long> comm_cost;
    // Final cluster estimate (canonical order); empty when the algorithm
    // never formed one (NIndepLinUCB, or a re-clustering variant that never
    // triggered).
    std::vector<std::vector<int>> clusters;
    // Exact set equality between the estimate and the ground-truth clusters.
    bool clustering_correct = false;
};

// Hooks observed by protocol tests; every callback defaults to a no-op.
struct RunObserver {
    virtual ~RunObserver() = default;
    virtual void on_observation(int /*client*/, const Vector& /*x*/, double /*y*/) {}
    virtual void on_sync(const std::vector<int>& /*members*/) {}
    virtual void on_recluster(long /*t*/, int /*triggering_client*/) {}
    virtual void on_enqueue(long /*t*/, int /*cluster*/) {}
    virtual void on_pop(long /*t*/, int /*cluster*/) {}
    // End of step t, after all client updates and any serve for that step.
    virtual void on_step(long /*t*/, const std::vector<ClientState>& /*clients*/) {}
};

// Simulates one (config, seed) run. The seed overrides config.env.seed so
// that matched seeds share the environment across algorithms.  Deterministic:
// identical inputs give identical traces.
SimTrace run(const RunConfig& config, std::uint64_t seed, RunObserver* observer = nullptr);

// Runs config.seeds sequentially; throws std::invalid_argument when empty.
std::vector<SimTrace> run_all(const RunConfig& config);

// Exploration length sufficient for reliable clustering:
//   psi_d = F^-1(delta / (N^2 (M-1)); d, upsilon_c)   (noncentral chi-square)
//   T0    = ceil(16 psi_d sigma^2 / (lambda_c gamma^2))
// M = 1 returns 0 (no separation to detect).  Throws std::invalid_argument
// on invalid inputs.
long theoretical_T0(double gamma, double sigma, double lambda_c, int N, int M,
                    double delta, double upsilon_c, int d);

// Writes one `<algorithm>_seed<seed>.csv` per trace (header
// `t,cum_regret,comm_cost`, one row per step, >= 6 significant digits) plus
// `summary.csv` (`algorithm,seed,final_regret,final_comm,clustering_correct`)
// into `dir` (created if missing).  Throws std::invalid_argument on an empty
// trace list and std::runtime_error with path context on I/O failure.
void emit_csv(const std::vector<SimTrace>& traces, const std::string& dir);

// Named configurations: synthetic-balanced, synthetic-imbalanced,
// sensitivity-1..5, desk-small.  Throws std::invalid_argument for unknown
// names, listing the valid ones.
RunConfig preset(const std::string& name);

// preset(name) specialized for an algorithm: sets cfg.algorithm, and for the
// re-clustering variants (-E/-DR) and the baselines clears the exploration
// phase and the fixed threshold override (they use neither).
RunConfig preset_for_algorithm(const std::string& name, Algorithm algorithm);

// JSON round-trip for RunConfig (the CLI's --config format).
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// JSON snapshot of server-side state (graph edges, clusters, thresholds,
// queue contents, cumulative communication) for debugging and assertions.
std::string server_snapshot(const ClientGraph& graph, const ClusterSet& clusters,
                            const SyncQueue& queue, long long comm_cost);

}  // namespace fedband
