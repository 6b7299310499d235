// SPDX-License-Identifier: MIT
//
// Synthetic heterogeneous bandit environment: N clients partitioned into M
// ground-truth clusters of nearby parameter vectors, a shared pool of unit
// context vectors, and reward/regret queries.  Clusters are "epsilon-close
// inside, gamma-separated across": within a cluster every pair of client
// parameters is within epsilon = 1/(N*sqrt(T)) of each other, while clients
// in different clusters are at least gamma apart.

#pragma once

#include "fedband/numerics.hpp"
#include "fedband/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedband {

struct EnvConfig {
    int d = 2;                  // context dimension
    int K = 10;                 // arm-pool size
    int N = 1;                  // number of clients
    int M = 1;                  // number of ground-truth clusters
    long T = 100;               // horizon
    double gamma = 0.0;         // cluster separation
    double sigma = 0.1;         // reward noise scale
    int arms_per_round = 10;    // action-set size per step
    std::uint64_t seed = 0;     // generation seed
    // Optional explicit cluster sizes (length M, summing to N).  Empty means
    // clients are assigned to clusters uniformly at random.
    std::vector<int> cluster_sizes;
};

// Throws std::invalid_argument when a field violates its constraints.
void validate(const EnvConfig& cfg);

struct GroundTruth {
    std::vector<Vector> theta_star;  // one parameter vector per client, norm <= 1
    std::vector<int> assignment;     // client -> cluster index in [0, M)
    double epsilon = 0.0;            // intra-cluster radius 1/(N*sqrt(T))
};

struct Environment {
    EnvConfig cfg;
    GroundTruth truth;
    std::vector<Vector> pool;  // K unit-norm context vectors
};

// A per-step action set: indices into the arm pool.
struct ActionSet {
    std::vector<int> indices;
};

// Groups clients by cluster: returns the list of nonempty clusters, each a
// sorted list of client ids, ordered by smallest member.
std::vector<std::vector<int>> truth_clusters(const GroundTruth& truth);

// Generates cluster centers (rejection-sampled to pairwise distance
// >= gamma + 2*epsilon, at most 1e5 attempts), client parameters within
// epsilon/2 of their center, and the unit-norm arm pool.  The construction
// guarantees the intra/cross distance invariants exactly and they are
// asserted before returning.
// Throws std::invalid_argument on a bad config and std::runtime_error when
// rejection sampling exceeds its attempt budget (infeasible gamma/M).
Environment generate_environment(const EnvConfig& cfg);

// Samples cfg.arms_per_round distinct pool indices uniformly without
// replacement into `out` (cleared first).
void draw_action_set(int pool_size, int arms_per_round, Rng& rng, ActionSet& out);
ActionSet draw_action_set(const Environment& env, Rng& rng);

// Observed reward <theta_star, x> + noise with noise ~ Normal(0, sigma^2).
// Always consumes exactly one normal draw, so the stream position does not
// depend on sigma; sigma = 0 yields the exact inner product.
// Throws std::invalid_argument if ||x|| > 1 + 1e-9.
double realize_reward(const Vector& theta_star, const Vector& x, double sigma, Rng& rng);

// Pseudo-regret of choosing action-set position `chosen` (0-based index into
// the set, not a pool index): max_{x in A} <theta*, x> - <theta*, x_chosen>.
// Throws std::invalid_argument if `chosen` is out of range.
double instant_regret(const Vector& theta_star, const std::vector<Vector>& pool,
                      const ActionSet& set, int chosen);

// JSON snapshot of a generated environment (config, parameters, assignment,
// pool); load restores it bit-for-bit.
void save_environment(const Environment& env, const std::string& path);
Environment load_environment(const std::string& path);

}  // namespace fedband
