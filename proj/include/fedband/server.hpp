// SPDX-License-Identifier: MIT
//
// Central coordinator: pairwise homogeneity testing, client-graph
// construction, maximal-clique clustering, per-cluster communication
// thresholds, sync-queue management, and cluster synchronization.
//
// The homogeneity test never sees raw observations: it runs on Gram-form
// summaries (G = X^T X, h = X^T y, y^T y), expanding ||X(a - b)||^2 as
// (a - b)^T G (a - b).  Edge decisions compare the statistic's CDF value
// against the confidence level, which is equivalent to comparing the
// statistic against the quantile threshold (the CDF is strictly increasing)
// and costs one CDF evaluation instead of a quantile search; the explicit
// threshold ops remain available and are tested against the fast path.

#pragma once

#include "fedband/client.hpp"
#include "fedband/numerics.hpp"

#include <optional>
#include <vector>

namespace fedband {

// ------------------------------------------------------------------ types --

struct ClientGraph {
    int n = 0;
    std::vector<std::vector<bool>> adj;

    explicit ClientGraph(int n_ = 0)
        : n(n_), adj(n_, std::vector<bool>(n_, false)) {}
    bool edge(int i, int j) const { return adj[i][j]; }
    void add_edge(int i, int j) {
        if (i == j) throw std::invalid_argument("ClientGraph: no self-loops");
        adj[i][j] = adj[j][i] = true;
    }
    bool operator==(const ClientGraph&) const = default;
};

struct ClusterSet {
    std::vector<std::vector<int>> clusters;      // canonical clique order
    std::vector<double> thresholds;              // D_k per cluster
    std::vector<std::vector<int>> memberships;   // per client: K_i
};

enum class QueueMode { FIFO, Priority };

struct SyncQueue {
    QueueMode mode = QueueMode::FIFO;
    std::vector<int> order;  // cluster indices in insertion order, no duplicates

    bool contains(int k) const {
        for (int v : order) {
            if (v == k) return true;
        }
        return false;
    }
    bool empty() const { return order.empty(); }
    void clear() { order.clear(); }
};

// How edges are decided during graph construction.
struct ThresholdRule {
    enum class Kind { Static, DataDependent } kind = Kind::Static;
    int N = 1;            // client count entering the union bound
    double delta = 0.1;   // confidence parameter
    double sigma = 0.1;   // noise scale
    // Optional fixed threshold: when set, every pair uses s <= upsilon
    // directly and no distribution is evaluated.
    std::optional<double> upsilon_override;
    // When true, decisions go through nc_chisq_quantile instead of the
    // CDF-comparison fast path (reference route for tests).
    bool use_quantile_route = false;
};

// Threshold value plus the degenerate-test marker (df = 0: no testable
// direction, the pair is clustered by definition).
struct ThresholdResult {
    double value = 0.0;
    bool degenerate = false;
};

// Caches for re-clustering sweeps.  Per-client entries are keyed by the
// observation count (a monotone data-version stamp); pair decisions are keyed
// by both members' stamps.  Reusing the cache across sweeps makes repeated
// re-cluster events within a burst cheap.
struct PairwiseCache {
    struct ClientEntry {
        long version = -1;
        Vector vartheta;      // pinv(G) h
        int rank = 0;         // rank(G)
        double lambda_max = 0.0;
    };
    struct PairEntry {
        long va = -1, vb = -1;
        bool edge = false;
    };
    std::vector<ClientEntry> clients;
    std::vector<PairEntry> pairs;  // n*n slots, row-major upper triangle used

    void resize(int n) {
        clients.assign(n, {});
        pairs.assign(static_cast<std::size_t>(n) * n, {});
    }
};

// -------------------------------------------------------------- statistics --

// Homogeneity statistic between two clients' data:
//   s = ( ||X1 (t1 - t12)||^2 + ||X2 (t2 - t12)||^2 ) / sigma^2
// with t1, t2 the per-client minimum-norm least-squares estimates and t12 the
// estimate on the pooled data.  Always >= 0 after clamping; `raw` (optional)
// receives the pre-clamp value.  Throws std::invalid_argument on empty data.
double homogeneity_statistic(const GramSummary& a, const GramSummary& b, double sigma,
                             double* raw = nullptr);
double homogeneity_statistic(const ObservationHistory& h1, const ObservationHistory& h2,
                             double sigma, double* raw = nullptr);

// Degrees of freedom of the test: rank(X1) + rank(X2) - rank([X1; X2]).
int homogeneity_df(const Matrix& X1, const Matrix& X2);
// Same quantity from Gram matrices (rank(G) = rank(X)).
int homogeneity_df_gram(const Matrix& G1, const Matrix& G2);

// Fixed threshold from the concentration bound: the 1 - delta/N^2 quantile of
// the noncentral chi-squared with noncentrality psi = 1/sigma^2.
// df = 0 returns value 0 with the degenerate flag set.
ThresholdResult static_threshold(int N, double delta, int df, double sigma);

// Data-dependent threshold computed from the pair's Gram matrices:
//   psi = (eps^2 / sigma^2) * lambda_max( G2 (G1 + G2)^- G1 ),
//   eps = 1 / (N * sqrt(max(lambda_max(G1), lambda_max(G2)))),
// using the symmetric PSD identity G2 (G1+G2)^- G1 = G1 - G1 (G1+G2)^- G1;
// the middle inverse is regularized by +1e-10 I when G1 + G2 is singular.
// Throws std::invalid_argument when both Gram matrices are zero.
ThresholdResult data_dependent_threshold(const Matrix& G1, const Matrix& G2, int N,
                                         double delta, double sigma);

// ------------------------------------------------------------------- graph --

// Runs all N(N-1)/2 pairwise tests and adds an edge where the statistic does
// not exceed the pair's threshold.  `cache` may be null; when `parallel` is
// false the pair loop runs on a single thread (reference path; results are
// identical by construction).  Throws std::invalid_argument if any client has
// no observations.
ClientGraph build_client_graph(const std::vector<GramSummary>& summaries,
                               const ThresholdRule& rule, PairwiseCache* cache = nullptr,
                               bool parallel = true);

// All maximal cliques via Bron-Kerbosch with pivoting, canonically ordered
// (each clique's members ascending; cliques sorted by smallest member).
// Throws std::runtime_error if the clique count exceeds 1e6.
std::vector<std::vector<int>> maximal_cliques(const ClientGraph& g);

// Per-cluster communication thresholds D_k = T * ln(|C_k| * T) / (d * |C_k|).
std::vector<double> cluster_thresholds(const std::vector<std::vector<int>>& clusters,
                                       double T, int d);

// Bundles cliques into a ClusterSet with thresholds and per-client
// membership lists.
ClusterSet make_cluster_set(std::vector<std::vector<int>> cliques, double T, int d, int N);

// ------------------------------------------------------------------- queue --

// Appends k unless already present (dedup).
void enqueue(SyncQueue& queue, int k);

// Removes and returns the next cluster to serve: FIFO head, or in priority
// mode the cluster maximizing the summed buffered-information score
// sum_{i in C_k} dt_i * (logdet(V_i + lI) - logdet(V_i - dV_i + lI)),
// ties toward the lower cluster index.  Returns nullopt on an empty queue.
std::optional<int> pop_next(SyncQueue& queue, const ClusterSet& clusters,
                            std::vector<ClientState>& clients, double lambda);

// Aggregates the members' buffers, applies the sync to every member, and
// returns the communication cost delta: |C| * (d^2 + d) up + the same down.
long long serve_cluster(const std::vector<int>& members, std::vector<ClientState>& clients);

}  // namespace fedband
