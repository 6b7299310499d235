// SPDX-License-Identifier: MIT

#include "fedband/client.hpp"

#include <cmath>

namespace fedband {

Matrix ObservationHistory::design_matrix() const {
    const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
    const Eigen::Index d = n > 0 ? xs[0].size() : 0;
    Matrix X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) X.row(i) = xs[i].transpose();
    return X;
}

GramSummary summarize(const ObservationHistory& history, int d) {
    GramSummary s(d);
    for (std::size_t i = 0; i < history.xs.size(); ++i) {
        s.G.noalias() += history.xs[i] * history.xs[i].transpose();
        s.h.noalias() += history.ys[i] * history.xs[i];
        s.yty += history.ys[i] * history.ys[i];
        ++s.n;
    }
    return s;
}

namespace {

// Recomputes the Cholesky factor of V + lambda*I and its log-determinant.
void refresh_factor(ClientState& state, double lambda) {
    if (lambda <= 0.0) throw std::invalid_argument("client cache: lambda must be > 0");
    if (state.factor_valid && state.logdet_valid && state.cache_lambda == lambda) return;
    Matrix Vbar = state.stats.V;
    Vbar.diagonal().array() += lambda;
    state.llt.compute(Vbar);
    if (state.llt.info() != Eigen::Success) {
        throw std::runtime_error("client cache: Cholesky of V + lambda I failed");
    }
    double acc = 0.0;
    const auto& L = state.llt.matrixLLT();
    for (int i = 0; i < state.d; ++i) acc += std::log(L(i, i));
    state.logdet_cur = 2.0 * acc;
    if (state.cache_lambda != lambda) state.synced_valid = false;
    state.cache_lambda = lambda;
    state.factor_valid = true;
    state.logdet_valid = true;
}

// Ensures logdet(V - dV + lambda I) is cached (changes only at syncs).
void refresh_synced(ClientState& state, double lambda) {
    if (state.synced_valid && state.cache_lambda == lambda) return;
    refresh_factor(state, lambda);
    if (state.stats.dt == 0) {
        state.logdet_synced = state.logdet_cur;  // dV = 0
    } else {
        Matrix W = state.stats.V - state.stats.dV;
        W.diagonal().array() += lambda;
        state.logdet_synced = logdet(W);
    }
    state.synced_valid = true;
}

}  // namespace

int explore_step(const ClientState& /*state*/, const ActionSet& set, Rng& rng) {
    if (set.indices.empty()) {
        throw std::invalid_argument("explore_step: empty action set");
    }
    return rng.uniform_int(static_cast<int>(set.indices.size()));
}

int ucb_select(ClientState& state, const std::vector<Vector>& pool, const ActionSet& set,
               double lambda, double sigma, double delta) {
    if (lambda <= 0.0) throw std::invalid_argument("ucb_select: lambda must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("ucb_select: delta must lie in (0, 1)");
    }
    if (set.indices.empty()) throw std::invalid_argument("ucb_select: empty action set");

    refresh_factor(state, lambda);
    const Vector theta = state.llt.solve(state.stats.b);

    // Confidence radius; the sqrt argument is >= 0 up to rounding because
    // logdet(V + lambda I) >= d * log(lambda).
    const double width_arg =
        state.logdet_cur - state.d * std::log(lambda) - 2.0 * std::log(delta);
    const double alpha = sigma * std::sqrt(std::max(width_arg, 0.0)) + std::sqrt(lambda);

    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    Vector& w = state.work;
    for (std::size_t j = 0; j < set.indices.size(); ++j) {
        const Vector& x = pool[set.indices[j]];
        w = x;
        state.llt.matrixL().solveInPlace(w);  // ||w||^2 = x^T (V + lI)^-1 x
        const double score = x.dot(theta) + alpha * std::sqrt(w.squaredNorm());
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(j);
        }
    }
    return best;
}

void update_local(ClientState& state, const Vector& x, double y) {
    if (x.norm() > 1.0 + 1e-9) {
        throw std::invalid_argument("update_local: context norm exceeds 1");
    }
    // Advance the cached log-determinant with the pre-update factor before V
    // changes (rank-1 determinant identity); the factor itself goes stale.
    if (state.factor_valid && state.logdet_valid) {
        Vector& w = state.work;
        w = x;
        state.llt.matrixL().solveInPlace(w);
        state.logdet_cur += std::log1p(w.squaredNorm());
    } else {
        state.logdet_valid = false;
    }
    state.factor_valid = false;

    state.stats.V.noalias() += x * x.transpose();
    state.stats.b.noalias() += y * x;
    state.stats.dV.noalias() += x * x.transpose();
    state.stats.db.noalias() += y * x;
    state.stats.dt += 1;

    state.gram.G.noalias() += x * x.transpose();
    state.gram.h.noalias() += y * x;
    state.gram.yty += y * y;
    state.gram.n += 1;

    state.history.xs.push_back(x);
    state.history.ys.push_back(y);
}

bool check_trigger(ClientState& state, double D_k, double lambda) {
    return trigger_score(state, lambda) >= D_k;
}

double trigger_score(ClientState& state, double lambda) {
    if (state.stats.dt == 0) return 0.0;
    if (!state.logdet_valid || state.cache_lambda != lambda) refresh_factor(state, lambda);
    refresh_synced(state, lambda);
    return static_cast<double>(state.stats.dt) * (state.logdet_cur - state.logdet_synced);
}

void apply_sync(ClientState& state, const Matrix& V_sync, const Vector& b_sync) {
    state.stats.V.noalias() += V_sync - state.stats.dV;
    state.stats.b.noalias() += b_sync - state.stats.db;
    state.stats.dV.setZero();
    state.stats.db.setZero();
    state.stats.dt = 0;
    state.factor_valid = false;
    state.logdet_valid = false;
    state.synced_valid = false;
}

}  // namespace fedband
