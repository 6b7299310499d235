// SPDX-License-Identifier: MIT
//
// Per-client bandit logic: uniform exploration, UCB arm selection on ridge
// statistics, local statistic/buffer maintenance, event-trigger checks, and
// application of server sync payloads.
//
// Performance note: the selection/trigger path maintains a cached Cholesky
// factor of V + lambda*I together with its log-determinant.  update_local
// advances the log-determinant by the rank-1 determinant identity
// logdet(V + xx^T + lI) = logdet(V + lI) + log(1 + x^T (V + lI)^-1 x)
// whenever the factor is current, so a client-step costs one factorization.

#pragma once

#include "fedband/environment.hpp"
#include "fedband/numerics.hpp"
#include "fedband/rng.hpp"

#include <vector>

namespace fedband {

// Raw observations owned by one client (X rows stay local; never transmitted).
struct ObservationHistory {
    std::vector<Vector> xs;
    std::vector<double> ys;

    // n x d design matrix view of the history.
    Matrix design_matrix() const;
};

// Gram-form summary of a client's own observations: G = X^T X, h = X^T y,
// yty = y^T y; exactly the d^2 + d + 1 scalars uploaded for re-clustering.
struct GramSummary {
    Matrix G;
    Vector h;
    double yty = 0.0;
    long n = 0;  // observation count (doubles as a data-version stamp)

    explicit GramSummary(int d = 0) : G(Matrix::Zero(d, d)), h(Vector::Zero(d)) {}
};

GramSummary summarize(const ObservationHistory& history, int d);

// Ridge sufficient statistics plus the upload buffers accumulated since the
// last cluster sync.
struct SufficientStats {
    Matrix V;    // sum of xx^T over own + received observations
    Vector b;    // sum of x*y likewise
    Matrix dV;   // buffered own-observation Gram mass since last sync
    Vector db;   // buffered own-observation reward mass
    long dt = 0; // buffered observation count

    explicit SufficientStats(int d = 0)
        : V(Matrix::Zero(d, d)), b(Vector::Zero(d)), dV(Matrix::Zero(d, d)),
          db(Vector::Zero(d)) {}
};

struct ClientState {
    int id = 0;
    int d = 0;
    SufficientStats stats;
    GramSummary gram;            // own observations only
    ObservationHistory history;  // own pulls only
    std::vector<int> memberships;  // indices of clusters containing this client

    ClientState(int id_, int d_) : id(id_), d(d_), stats(d_), gram(d_) {}

    // --- cached factorization state, managed by the free functions below ---
    Eigen::LLT<Matrix> llt;        // factor of V + cache_lambda * I
    double cache_lambda = -1.0;
    bool factor_valid = false;
    bool logdet_valid = false;
    bool synced_valid = false;
    double logdet_cur = 0.0;     // logdet(V + lambda I)
    double logdet_synced = 0.0;  // logdet(V - dV + lambda I)
    Vector work;                 // scratch vector for triangular solves
};

// Uniform arm choice during the exploration phase.
// Throws std::invalid_argument on an empty action set.
int explore_step(const ClientState& state, const ActionSet& set, Rng& rng);

// UCB selection: argmax over the action set of
//   x^T theta_hat + alpha * ||x||_{(V + lambda I)^-1},
// theta_hat the ridge estimate and
//   alpha = sigma * sqrt(logdet(V + lambda I) - d*log(lambda) - 2*log(delta))
//           + sqrt(lambda).
// Ties break toward the lowest action-set index.  Returns an index into the
// action set.  Throws std::invalid_argument for lambda <= 0 or an empty set;
// numeric failures propagate.
int ucb_select(ClientState& state, const std::vector<Vector>& pool, const ActionSet& set,
               double lambda, double sigma, double delta);

// Records one own observation: V/b and the dV/db/dt buffers all grow, the
// Gram summary and history are appended.
// Throws std::invalid_argument if ||x|| > 1 + 1e-9.
void update_local(ClientState& state, const Vector& x, double y);

// Event trigger: true iff dt * (logdet(V + lI) - logdet(V - dV + lI)) >= D_k.
bool check_trigger(ClientState& state, double D_k, double lambda);

// The trigger's left-hand side (0 when the buffer is empty); used by the
// priority queue's pop rule.
double trigger_score(ClientState& state, double lambda);

// Applies a cluster sync: V += V_sync - dV, b += b_sync - db, buffers reset.
void apply_sync(ClientState& state, const Matrix& V_sync, const Vector& b_sync);

}  // namespace fedband
