// SPDX-License-Identifier: MIT
//
// Benchmark: OpenMP-parallel pairwise homogeneity sweep vs the serial
// reference path, over growing client counts.  The pair loop is
// embarrassingly parallel, so the expected gap is roughly the core count
// (on a single-core host the two paths should tie).

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "fedband/rng.hpp"
#include "fedband/server.hpp"

using namespace fedband;

namespace {

std::vector<GramSummary> make_summaries(int n_clients, int d, int rows,
                                        std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GramSummary> out;
    for (int c = 0; c < n_clients; ++c) {
        Vector theta(d);
        for (int i = 0; i < d; ++i) theta[i] = rng.gauss();
        theta /= theta.norm() * 1.25;
        GramSummary g(d);
        for (int k = 0; k < rows; ++k) {
            Vector x(d);
            for (int i = 0; i < d; ++i) x[i] = rng.gauss();
            x /= x.norm();
            const double y = theta.dot(x) + 0.1 * rng.gauss();
            g.G += x * x.transpose();
            g.h += x * y;
            g.yty += y * y;
            ++g.n;
        }
        out.push_back(std::move(g));
    }
    return out;
}

ThresholdRule make_rule(int n_clients) {
    ThresholdRule rule;
    rule.kind = ThresholdRule::Kind::DataDependent;
    rule.N = n_clients;
    rule.delta = 0.1;
    rule.sigma = 0.1;
    return rule;
}

void bench_graph(benchmark::State& state, bool parallel) {
    const int n_clients = static_cast<int>(state.range(0));
    const int d = 25;
    const auto summaries = make_summaries(n_clients, d, 2 * d, 42);
    const ThresholdRule rule = make_rule(n_clients);
    for (auto _ : state) {
        ClientGraph g = build_client_graph(summaries, rule, nullptr, parallel);
        benchmark::DoNotOptimize(g);
    }
    state.SetComplexityN(n_clients);
}

}  // namespace

static void BM_PairwiseSweepSerial(benchmark::State& state) {
    bench_graph(state, false);
}
static void BM_PairwiseSweepParallel(benchmark::State& state) {
    bench_graph(state, true);
}

BENCHMARK(BM_PairwiseSweepSerial)->Arg(10)->Arg(25)->Arg(50)->Complexity();
BENCHMARK(BM_PairwiseSweepParallel)->Arg(10)->Arg(25)->Arg(50)->Complexity();

BENCHMARK_MAIN();
