// SPDX-License-Identifier: MIT
//
// Client-agent tests: exploration uniformity, UCB selection against an
// independent brute-force scorer, statistic/buffer bookkeeping, trigger
// arithmetic against hand determinants, and sync application checked by the
// shadow ledger.

#include "doctest.h"

#include "fedband/client.hpp"
#include "shadow_ledger.hpp"

#include <cmath>

using fedband::ActionSet;
using fedband::ClientState;
using fedband::Matrix;
using fedband::Vector;

namespace {

std::vector<Vector> unit_pool(int K, int d, std::uint64_t seed) {
    fedband::Rng rng(seed);
    std::vector<Vector> pool;
    pool.reserve(K);
    for (int k = 0; k < K; ++k) {
        Vector v(d);
        for (int i = 0; i < d; ++i) v(i) = rng.gauss();
        pool.push_back(v / v.norm());
    }
    return pool;
}

ActionSet first_n(int n) {
    ActionSet s;
    for (int i = 0; i < n; ++i) s.indices.push_back(i);
    return s;
}

// Independent UCB scorer: recomputes every arm's index value from scratch
// with generic dense routines (QR solve, full eigendecomposition logdet).
int brute_force_ucb(const ClientState& st, const std::vector<Vector>& pool,
                    const ActionSet& set, double lambda, double sigma, double delta) {
    Matrix Vbar = st.stats.V + lambda * Matrix::Identity(st.d, st.d);
    const Vector theta = Vbar.colPivHouseholderQr().solve(st.stats.b);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Vbar);
    double ld = 0.0;
    for (int i = 0; i < st.d; ++i) ld += std::log(eig.eigenvalues()(i));
    const double alpha =
        sigma * std::sqrt(ld - st.d * std::log(lambda) - 2.0 * std::log(delta)) +
        std::sqrt(lambda);
    const Matrix Vinv = Vbar.inverse();
    int best = 0;
    double best_score = -1e300;
    for (std::size_t j = 0; j < set.indices.size(); ++j) {
        const Vector& x = pool[set.indices[j]];
        const double score = x.dot(theta) + alpha * std::sqrt(x.dot(Vinv * x));
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(j);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("explore_step: singleton, uniformity, reproducibility") {
    ClientState st(0, 3);
    ActionSet single = first_n(1);
    fedband::Rng rng(1);
    CHECK(fedband::explore_step(st, single, rng) == 0);

    ActionSet four = first_n(4);
    const int n = 10000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < n; ++i) ++counts[fedband::explore_step(st, four, rng)];
    const double p = 0.25;
    const double sd = std::sqrt(n * p * (1 - p));
    for (int c : counts) CHECK(std::abs(c - n * p) < 4.0 * sd);

    fedband::Rng r1(9), r2(9);
    for (int i = 0; i < 50; ++i) {
        CHECK(fedband::explore_step(st, four, r1) == fedband::explore_step(st, four, r2));
    }

    ActionSet empty;
    CHECK_THROWS_AS(fedband::explore_step(st, empty, rng), std::invalid_argument);
}

TEST_CASE("ucb_select: fresh client and single arm") {
    const auto pool = unit_pool(6, 4, 3);
    ClientState st(0, 4);
    // All arms unit-norm and V = 0: every score is alpha/sqrt(lambda), so the
    // lowest index must win the tie.
    CHECK(fedband::ucb_select(st, pool, first_n(6), 0.1, 0.1, 0.1) == 0);
    // Single arm regardless of statistics.
    CHECK(fedband::ucb_select(st, pool, first_n(1), 0.1, 0.1, 0.1) == 0);
    CHECK_THROWS_AS(fedband::ucb_select(st, pool, first_n(2), 0.0, 0.1, 0.1),
                    std::invalid_argument);
}

TEST_CASE("ucb_select: matches the independent brute-force scorer") {
    const int d = 8;
    const auto pool = unit_pool(25, d, 17);
    fedband::Rng rng(18);
    ClientState st(0, d);
    Vector theta(d);
    for (int i = 0; i < d; ++i) theta(i) = rng.gauss();
    theta /= (2.0 * theta.norm());
    for (int n = 0; n < 50; ++n) {
        const Vector& x = pool[rng.uniform_int(25)];
        fedband::update_local(st, x, theta.dot(x) + 0.1 * rng.gauss());
    }
    const ActionSet set = first_n(25);
    for (double lambda : {0.1, 1.0}) {
        for (double delta : {0.1, 0.01}) {
            CHECK(fedband::ucb_select(st, pool, set, lambda, 0.1, delta) ==
                  brute_force_ucb(st, pool, set, lambda, 0.1, delta));
        }
    }
}

TEST_CASE("update_local: bookkeeping from zero state") {
    ClientState st(0, 3);
    Vector e1 = Vector::Zero(3);
    e1(0) = 1.0;
    fedband::update_local(st, e1, 2.0);
    CHECK(st.stats.V(0, 0) == 2.0 - 1.0);  // e1 e1^T has a single 1 entry
    CHECK(st.stats.V.sum() == 1.0);
    CHECK(st.stats.b(0) == 2.0);
    CHECK(st.stats.dt == 1);
    CHECK(st.stats.dV == st.stats.V);
    CHECK(st.stats.db == st.stats.b);
    CHECK(st.gram.n == 1);
    CHECK(st.gram.yty == 4.0);
    CHECK(st.history.xs.size() == 1);

    for (int i = 0; i < 6; ++i) fedband::update_local(st, e1, 1.0);
    CHECK(st.stats.dt == 7);

    Vector big = 2.0 * e1;
    CHECK_THROWS_AS(fedband::update_local(st, big, 0.0), std::invalid_argument);
}

TEST_CASE("check_trigger: hand determinant example and trivial falses") {
    ClientState st(0, 2);
    // dt = 0: no buffered mass, never triggers.
    CHECK_FALSE(fedband::check_trigger(st, 0.1, 1.0));
    CHECK(fedband::trigger_score(st, 1.0) == 0.0);

    // V = diag(3,0), dV = diag(3,0), dt = 5, lambda = 1:
    // score = 5 * ln(det(diag(4,1)) / det(diag(1,1))) = 5 ln 4 ~= 6.931.
    st.stats.V = Matrix::Zero(2, 2);
    st.stats.V(0, 0) = 3.0;
    st.stats.dV = st.stats.V;
    st.stats.dt = 5;
    const double score = fedband::trigger_score(st, 1.0);
    CHECK(score == doctest::Approx(5.0 * std::log(4.0)).epsilon(1e-12));
    CHECK(fedband::check_trigger(st, 6.93, 1.0));
    CHECK_FALSE(fedband::check_trigger(st, 6.94, 1.0));

    // dV = 0 with dt > 0 (constructed): log ratio is 0, no trigger.
    ClientState st2(0, 2);
    st2.stats.V = Matrix::Identity(2, 2);
    st2.stats.dt = 3;
    CHECK_FALSE(fedband::check_trigger(st2, 1e-9, 1.0));
}

TEST_CASE("apply_sync: singleton no-op, pairwise exchange, post-sync trigger") {
    const auto pool = unit_pool(10, 4, 23);
    fedband::Rng rng(24);

    // Singleton cluster: V_sync = own dV, so V is unchanged.
    ClientState solo(0, 4);
    for (int i = 0; i < 5; ++i) fedband::update_local(solo, pool[i], rng.gauss());
    const Matrix v_before = solo.stats.V;
    fedband::apply_sync(solo, solo.stats.dV, solo.stats.db);
    CHECK((solo.stats.V - v_before).norm() == 0.0);
    CHECK(solo.stats.dt == 0);
    CHECK(solo.stats.dV.isZero(0.0));
    // After a sync the trigger stays false until a new observation arrives.
    CHECK_FALSE(fedband::check_trigger(solo, 1e-12, 0.1));
    fedband::update_local(solo, pool[0], 0.3);
    CHECK(fedband::check_trigger(solo, 1e-12, 0.1));

    // Pairwise exchange: each client's V gains exactly the other's buffer.
    ClientState a(0, 4), b(1, 4);
    for (int i = 0; i < 4; ++i) fedband::update_local(a, pool[i], rng.gauss());
    for (int i = 4; i < 10; ++i) fedband::update_local(b, pool[i], rng.gauss());
    const Matrix buf_a = a.stats.dV, buf_b = b.stats.dV;
    const Matrix va = a.stats.V, vb = b.stats.V;
    const Matrix v_sync = a.stats.dV + b.stats.dV;
    const Vector b_sync = a.stats.db + b.stats.db;
    fedband::apply_sync(a, v_sync, b_sync);
    fedband::apply_sync(b, v_sync, b_sync);
    CHECK((a.stats.V - (va + buf_b)).norm() < 1e-12);
    CHECK((b.stats.V - (vb + buf_a)).norm() < 1e-12);
}

TEST_CASE("apply_sync: five-client seeded cluster verified by shadow ledger") {
    const int d = 5;
    const auto pool = unit_pool(30, d, 41);
    fedband::Rng rng(42);
    std::vector<ClientState> clients;
    for (int i = 0; i < 5; ++i) clients.emplace_back(i, d);
    fedband_test::ShadowLedger ledger(5, d);

    auto one_round = [&](int pulls) {
        for (auto& c : clients) {
            for (int p = 0; p < pulls; ++p) {
                const Vector& x = pool[rng.uniform_int(30)];
                const double y = rng.gauss();
                fedband::update_local(c, x, y);
                ledger.on_observation(c.id, x, y);
                CHECK(ledger.verify_client(c));
            }
        }
    };
    auto sync_all = [&] {
        Matrix v_sync = Matrix::Zero(d, d);
        Vector b_sync = Vector::Zero(d);
        for (auto& c : clients) {
            v_sync += c.stats.dV;
            b_sync += c.stats.db;
        }
        for (auto& c : clients) fedband::apply_sync(c, v_sync, b_sync);
        ledger.on_sync({0, 1, 2, 3, 4});
        for (auto& c : clients) {
            CHECK(ledger.verify_client(c));
            CHECK(ledger.verify_buffers_cleared(c));
        }
    };

    one_round(3);
    sync_all();
    one_round(2);
    sync_all();
    CHECK(ledger.violations() == 0);
}

TEST_CASE("client invariants: V - dV PSD, logdet monotone, incremental logdet exact") {
    const int d = 6;
    const auto pool = unit_pool(40, d, 51);
    fedband::Rng rng(52);
    ClientState st(0, d);
    const double lambda = 0.1;
    double last_logdet = fedband::logdet(lambda * Matrix::Identity(d, d));
    const ActionSet set = first_n(12);

    for (int step = 0; step < 60; ++step) {
        // Keep the factor fresh the way the simulation loop does.
        (void)fedband::ucb_select(st, pool, set, lambda, 0.1, 0.1);
        const Vector& x = pool[rng.uniform_int(40)];
        fedband::update_local(st, x, rng.gauss());

        Matrix Vbar = st.stats.V + lambda * Matrix::Identity(d, d);
        const double exact = fedband::logdet(Vbar);
        CHECK(exact >= last_logdet - 1e-12);  // monotone over the lifetime
        last_logdet = exact;
        // The incrementally maintained value matches a fresh factorization.
        CHECK(fedband::trigger_score(st, lambda) ==
              doctest::Approx(st.stats.dt *
                              (exact - fedband::logdet(
                                           (st.stats.V - st.stats.dV).eval() +
                                           lambda * Matrix::Identity(d, d))))
                  .epsilon(1e-9));

        const auto [lo, hi] = fedband::lambda_extremes(st.stats.V - st.stats.dV);
        CHECK(lo >= -1e-9);  // V - dV stays PSD

        if (step % 17 == 16) fedband::apply_sync(st, st.stats.dV, st.stats.db);
    }
}
