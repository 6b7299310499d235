// SPDX-License-Identifier: MIT

#include "fedband/server.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedband {

// ------------------------------------------------------------- statistics --

namespace {

void check_sigma(double sigma) {
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("homogeneity test: sigma must be > 0");
    }
}

// Eigen-decomposes a symmetric PSD Gram matrix once and derives everything
// the tests need from it: the pseudoinverse solve, the rank, and the largest
// eigenvalue (relative cutoff kPinvCutoff).
struct GramEig {
    Vector solve;      // pinv(G) * h
    int rank = 0;
    double lambda_max = 0.0;
};

GramEig gram_eig(const Matrix& G, const Vector& h) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (G + G.transpose()));
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("homogeneity test: eigendecomposition failed");
    }
    const Vector& ev = eig.eigenvalues();
    GramEig out;
    out.lambda_max = std::max(ev[ev.size() - 1], 0.0);
    const double cutoff = kPinvCutoff * out.lambda_max;
    Vector inv(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const bool keep = ev[i] > cutoff && ev[i] > 0.0;
        inv[i] = keep ? 1.0 / ev[i] : 0.0;
        if (keep) ++out.rank;
    }
    out.solve = eig.eigenvectors() * inv.asDiagonal() * (eig.eigenvectors().transpose() * h);
    return out;
}

double statistic_from_estimates(const Matrix& G1, const Matrix& G2, const Vector& t1,
                                const Vector& t2, const Vector& t12, double sigma,
                                double* raw) {
    const Vector d1 = t1 - t12;
    const Vector d2 = t2 - t12;
    const double q = d1.dot(G1 * d1) + d2.dot(G2 * d2);
    const double s = q / (sigma * sigma);
    if (raw != nullptr) *raw = s;
    return std::max(s, 0.0);
}

}  // namespace

double homogeneity_statistic(const GramSummary& a, const GramSummary& b, double sigma,
                             double* raw) {
    if (a.n == 0 || b.n == 0) {
        throw std::invalid_argument("homogeneity_statistic: empty history");
    }
    check_sigma(sigma);
    const Vector t1 = mle_from_gram(a.G, a.h);
    const Vector t2 = mle_from_gram(b.G, b.h);
    const Vector t12 = mle_from_gram(a.G + b.G, a.h + b.h);
    return statistic_from_estimates(a.G, b.G, t1, t2, t12, sigma, raw);
}

double homogeneity_statistic(const ObservationHistory& h1, const ObservationHistory& h2,
                             double sigma, double* raw) {
    if (h1.xs.empty() || h2.xs.empty()) {
        throw std::invalid_argument("homogeneity_statistic: empty history");
    }
    const int d = static_cast<int>(h1.xs[0].size());
    return homogeneity_statistic(summarize(h1, d), summarize(h2, d), sigma, raw);
}

int homogeneity_df(const Matrix& X1, const Matrix& X2) {
    if (X1.cols() != X2.cols()) {
        throw std::invalid_argument("homogeneity_df: column counts must match");
    }
    Matrix stacked(X1.rows() + X2.rows(), X1.cols());
    stacked << X1, X2;
    return matrix_rank(X1) + matrix_rank(X2) - matrix_rank(stacked);
}

int homogeneity_df_gram(const Matrix& G1, const Matrix& G2) {
    return matrix_rank(G1) + matrix_rank(G2) - matrix_rank(G1 + G2);
}

ThresholdResult static_threshold(int N, double delta, int df, double sigma) {
    if (N < 1) throw std::invalid_argument("static_threshold: N must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("static_threshold: delta must lie in (0, 1)");
    }
    if (df < 0) throw std::invalid_argument("static_threshold: df must be >= 0");
    check_sigma(sigma);
    if (df == 0) return {0.0, true};
    const double p = 1.0 - delta / (static_cast<double>(N) * N);
    const double psi = 1.0 / (sigma * sigma);
    return {nc_chisq_quantile(p, {df, psi}), false};
}

namespace {

// Symmetrized G1 - G1 (G1+G2)^- G1, which by the PSD identity
// G2 S^- G1 = G1 - G1 S^- G1 (S = G1 + G2, range(G1) inside range(S))
// shares the spectrum of the data-dependent test's middle matrix; the
// inverse gets a +1e-10 I ridge when S is singular.
Matrix middle_matrix(const Matrix& G1, const Matrix& G2) {
    Matrix S = G1 + G2;
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) {
        S.diagonal().array() += 1e-10;
        llt.compute(S);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error("data-dependent test: factorization failed");
        }
    }
    Matrix B = G1 - G1 * llt.solve(G1);
    return 0.5 * (B + B.transpose());
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
// Rayleigh-quotient estimate; the deterministic start vector breaks
// coordinate symmetry.  Accurate to ~1e-9 relative, which is far inside the
// tolerance the threshold comparison needs.
double lambda_max_power(const Matrix& A) {
    const int d = static_cast<int>(A.rows());
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = 1.0 + 1e-3 * (i + 1);
    v /= v.norm();
    double lam = 0.0;
    for (int it = 0; it < 100; ++it) {
        const Vector w = A * v;
        const double ray = v.dot(w);
        const double n = w.norm();
        if (n <= 1e-300) return 0.0;
        v = w / n;
        if (it >= 3 && std::abs(ray - lam) <= 1e-9 * std::max(std::abs(ray), 1.0)) {
            return std::max(ray, 0.0);
        }
        lam = ray;
    }
    return std::max(lam, 0.0);
}

double pair_epsilon(double lmax1, double lmax2, int N, const char* who) {
    const double lmax = std::max(lmax1, lmax2);
    if (lmax <= 0.0) {
        throw std::invalid_argument(std::string(who) + ": both Gram matrices are zero");
    }
    return 1.0 / (N * std::sqrt(lmax));
}

// psi for the data-dependent test, from the pair's Gram matrices and their
// cached largest eigenvalues (exact eigendecomposition route).
double data_dependent_psi(const Matrix& G1, const Matrix& G2, double lmax1, double lmax2,
                          int N, double sigma) {
    const double eps = pair_epsilon(lmax1, lmax2, N, "data_dependent_threshold");
    const Matrix B = middle_matrix(G1, G2);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(B, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("data_dependent_threshold: eigendecomposition failed");
    }
    const double lmax_b = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    return (eps * eps / (sigma * sigma)) * lmax_b;
}

}  // namespace

ThresholdResult data_dependent_threshold(const Matrix& G1, const Matrix& G2, int N,
                                         double delta, double sigma) {
    if (N < 1) throw std::invalid_argument("data_dependent_threshold: N must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("data_dependent_threshold: delta must lie in (0, 1)");
    }
    check_sigma(sigma);
    const auto [l1lo, l1hi] = lambda_extremes(G1);
    const auto [l2lo, l2hi] = lambda_extremes(G2);
    const double psi = data_dependent_psi(G1, G2, std::max(l1hi, 0.0), std::max(l2hi, 0.0),
                                          N, sigma);
    const int df = homogeneity_df_gram(G1, G2);
    if (df == 0) return {0.0, true};
    const double p = 1.0 - delta / (static_cast<double>(N) * N);
    return {nc_chisq_quantile(p, {df, psi}), false};
}

// ------------------------------------------------------------------- graph --

namespace {

void refresh_client_entry(const GramSummary& g, PairwiseCache::ClientEntry& e) {
    if (e.version == g.n) return;
    const GramEig ge = gram_eig(g.G, g.h);
    e.vartheta = ge.solve;
    e.rank = ge.rank;
    e.lambda_max = ge.lambda_max;
    e.version = g.n;
}

// Full pairwise edge decision (statistic, df, threshold comparison).  Runs
// inside the re-clustering hot loop, so the pooled solve takes a Cholesky
// fast path (falling back to the eigendecomposition near rank deficiency,
// where the exact rank matters) and the data-dependent top eigenvalue uses
// power iteration.
bool decide_edge(const GramSummary& A, const GramSummary& B,
                 const PairwiseCache::ClientEntry& ca, const PairwiseCache::ClientEntry& cb,
                 const ThresholdRule& rule) {
    const Matrix S = A.G + B.G;
    const Vector h = A.h + B.h;
    Vector pooled;
    int rank_s;
    Eigen::LLT<Matrix> llt(S);
    bool llt_ok = false;
    if (llt.info() == Eigen::Success) {
        const auto& diag = llt.matrixLLT().diagonal();
        // diag(L) holds sqrt-pivots; this ratio mirrors the eigenvalue
        // cutoff kPinvCutoff = 1e-10 on the spectrum.
        llt_ok = diag.minCoeff() > 1e-5 * diag.maxCoeff();
    }
    if (llt_ok) {
        pooled = llt.solve(h);
        rank_s = static_cast<int>(S.rows());
    } else {
        const GramEig ge = gram_eig(S, h);
        pooled = ge.solve;
        rank_s = ge.rank;
    }
    const double s = statistic_from_estimates(A.G, B.G, ca.vartheta, cb.vartheta, pooled,
                                              rule.sigma, nullptr);

    if (rule.upsilon_override.has_value()) {
        return s <= *rule.upsilon_override;
    }

    const int df = ca.rank + cb.rank - rank_s;
    if (df <= 0) return true;  // degenerate test: no evidence of difference

    double psi;
    if (rule.kind == ThresholdRule::Kind::Static) {
        psi = 1.0 / (rule.sigma * rule.sigma);
    } else {
        const double eps = pair_epsilon(ca.lambda_max, cb.lambda_max, rule.N,
                                        "build_client_graph");
        psi = (eps * eps / (rule.sigma * rule.sigma)) * lambda_max_power(middle_matrix(A.G, B.G));
    }
    const double p = 1.0 - rule.delta / (static_cast<double>(rule.N) * rule.N);
    if (rule.use_quantile_route) {
        return s <= nc_chisq_quantile(p, {df, psi});
    }
    // F strictly increasing: s <= F^-1(p)  <=>  F(s) <= p.
    return nc_chisq_cdf(s, {df, psi}) <= p;
}

}  // namespace

ClientGraph build_client_graph(const std::vector<GramSummary>& summaries,
                               const ThresholdRule& rule, PairwiseCache* cache,
                               bool parallel) {
    const int n = static_cast<int>(summaries.size());
    for (const auto& s : summaries) {
        if (s.n == 0) {
            throw std::invalid_argument("build_client_graph: client with empty history");
        }
    }

    PairwiseCache local;
    PairwiseCache& c = cache != nullptr ? *cache : local;
    if (static_cast<int>(c.clients.size()) != n) c.resize(n);

    // Per-client entries first (serial: shared mutable cache).
    for (int i = 0; i < n; ++i) refresh_client_entry(summaries[i], c.clients[i]);

    // Independent pairwise decisions.
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    std::vector<char> edges(pairs.size(), 0);

    const auto body = [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        auto& slot = c.pairs[static_cast<std::size_t>(i) * n + j];
        if (slot.va == summaries[i].n && slot.vb == summaries[j].n) {
            edges[p] = slot.edge ? 1 : 0;
            return;
        }
        const bool e = decide_edge(summaries[i], summaries[j], c.clients[i], c.clients[j], rule);
        slot = {summaries[i].n, summaries[j].n, e};
        edges[p] = e ? 1 : 0;
    };

#ifdef _OPENMP
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (std::size_t p = 0; p < pairs.size(); ++p) body(p);
    } else {
        for (std::size_t p = 0; p < pairs.size(); ++p) body(p);
    }
#else
    (void)parallel;
    for (std::size_t p = 0; p < pairs.size(); ++p) body(p);
#endif

    ClientGraph g(n);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (edges[p]) g.add_edge(pairs[p].first, pairs[p].second);
    }
    return g;
}

// ----------------------------------------------------------------- cliques --

namespace {

// Small dynamic bitset over 64-bit words (n is bounded by the client count).
struct Bits {
    std::vector<std::uint64_t> w;

    explicit Bits(int n = 0) : w((n + 63) / 64, 0) {}
    void set(int i) { w[i >> 6] |= (1ULL << (i & 63)); }
    void reset(int i) { w[i >> 6] &= ~(1ULL << (i & 63)); }
    bool test(int i) const { return (w[i >> 6] >> (i & 63)) & 1ULL; }
    bool empty() const {
        for (auto v : w) {
            if (v) return false;
        }
        return true;
    }
    int count() const {
        int c = 0;
        for (auto v : w) c += __builtin_popcountll(v);
        return c;
    }
    Bits operator&(const Bits& o) const {
        Bits r = *this;
        for (std::size_t k = 0; k < w.size(); ++k) r.w[k] &= o.w[k];
        return r;
    }
    Bits and_not(const Bits& o) const {
        Bits r = *this;
        for (std::size_t k = 0; k < w.size(); ++k) r.w[k] &= ~o.w[k];
        return r;
    }
    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t k = 0; k < w.size(); ++k) {
            std::uint64_t v = w[k];
            while (v) {
                const int bit = __builtin_ctzll(v);
                f(static_cast<int>(k * 64 + bit));
                v &= v - 1;
            }
        }
    }
};

constexpr long kMaxCliques = 1000000;

struct BronKerbosch {
    const std::vector<Bits>& nbr;
    std::vector<std::vector<int>>& out;
    std::vector<int> current;

    void run(Bits P, Bits X) {
        if (P.empty() && X.empty()) {
            if (static_cast<long>(out.size()) >= kMaxCliques) {
                throw std::runtime_error(
                    "maximal_cliques: clique count exceeds 1e6 (resource limit)");
            }
            std::vector<int> clique = current;  // DFS order; canonicalize
            std::sort(clique.begin(), clique.end());
            out.push_back(std::move(clique));
            return;
        }
        // Pivot: vertex of P | X with the most neighbors inside P.
        int pivot = -1, best = -1;
        const auto consider = [&](int v) {
            const int c = (P & nbr[v]).count();
            if (c > best) {
                best = c;
                pivot = v;
            }
        };
        P.for_each(consider);
        X.for_each(consider);

        const Bits cand = P.and_not(nbr[pivot]);
        cand.for_each([&](int v) {
            current.push_back(v);
            run(P & nbr[v], X & nbr[v]);
            current.pop_back();
            P.reset(v);
            X.set(v);
        });
    }
};

}  // namespace

std::vector<std::vector<int>> maximal_cliques(const ClientGraph& g) {
    std::vector<Bits> nbr(g.n, Bits(g.n));
    for (int i = 0; i < g.n; ++i) {
        for (int j = 0; j < g.n; ++j) {
            if (i != j && g.adj[i][j]) nbr[i].set(j);
        }
    }
    std::vector<std::vector<int>> out;
    Bits P(g.n), X(g.n);
    for (int i = 0; i < g.n; ++i) P.set(i);
    BronKerbosch bk{nbr, out, {}};
    bk.run(P, X);

    // Canonical order: members ascending (done at emit), cliques lexicographic
    // (equivalently: sorted by smallest member).
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> cluster_thresholds(const std::vector<std::vector<int>>& clusters,
                                       double T, int d) {
    if (T < 1.0 || d < 1) {
        throw std::invalid_argument("cluster_thresholds: T and d must be >= 1");
    }
    std::vector<double> out;
    out.reserve(clusters.size());
    for (const auto& c : clusters) {
        if (c.empty()) throw std::invalid_argument("cluster_thresholds: empty cluster");
        const double size = static_cast<double>(c.size());
        out.push_back(T * std::log(size * T) / (d * size));
    }
    return out;
}

ClusterSet make_cluster_set(std::vector<std::vector<int>> cliques, double T, int d, int N) {
    ClusterSet cs;
    cs.clusters = std::move(cliques);
    cs.thresholds = cluster_thresholds(cs.clusters, T, d);
    cs.memberships.assign(N, {});
    for (int k = 0; k < static_cast<int>(cs.clusters.size()); ++k) {
        for (int i : cs.clusters[k]) cs.memberships[i].push_back(k);
    }
    return cs;
}

// ------------------------------------------------------------------- queue --

void enqueue(SyncQueue& queue, int k) {
    if (k < 0) throw std::invalid_argument("enqueue: negative cluster index");
    if (!queue.contains(k)) queue.order.push_back(k);
}

std::optional<int> pop_next(SyncQueue& queue, const ClusterSet& clusters,
                            std::vector<ClientState>& clients, double lambda) {
    if (queue.order.empty()) return std::nullopt;
    std::size_t pick = 0;
    if (queue.mode == QueueMode::Priority) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < queue.order.size(); ++q) {
            const int k = queue.order[q];
            double score = 0.0;
            for (int i : clusters.clusters[k]) score += trigger_score(clients[i], lambda);
            if (score > best || (score == best && k < queue.order[pick])) {
                best = score;
                pick = q;
            }
        }
    }
    const int k = queue.order[pick];
    queue.order.erase(queue.order.begin() + static_cast<std::ptrdiff_t>(pick));
    return k;
}

long long serve_cluster(const std::vector<int>& members, std::vector<ClientState>& clients) {
    if (members.empty()) throw std::invalid_argument("serve_cluster: empty cluster");
    const int d = clients[members[0]].d;
    Matrix v_sync = Matrix::Zero(d, d);
    Vector b_sync = Vector::Zero(d);
    for (int i : members) {
        v_sync += clients[i].stats.dV;
        b_sync += clients[i].stats.db;
    }
    for (int i : members) apply_sync(clients[i], v_sync, b_sync);
    const long long scalars_each = static_cast<long long>(d) * d + d;
    return 2LL * static_cast<long long>(members.size()) * scalars_each;
}

}  // namespace fedband
