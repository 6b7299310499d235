// SPDX-License-Identifier: MIT

#include "fedband/environment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fedband {

namespace {

constexpr int kMaxRejectionAttempts = 100000;

Vector gauss_vector(int d, Rng& rng) {
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = rng.gauss();
    return v;
}

Vector unit_gauss_vector(int d, Rng& rng) {
    Vector v = gauss_vector(d, rng);
    double n = v.norm();
    while (n == 0.0) {  // astronomically unlikely; redraw keeps determinism
        v = gauss_vector(d, rng);
        n = v.norm();
    }
    return v / n;
}

}  // namespace

void validate(const EnvConfig& cfg) {
    if (cfg.d < 1) throw std::invalid_argument("EnvConfig: d must be >= 1");
    if (cfg.K < 1) throw std::invalid_argument("EnvConfig: K must be >= 1");
    if (cfg.N < 1) throw std::invalid_argument("EnvConfig: N must be >= 1");
    if (cfg.M < 1) throw std::invalid_argument("EnvConfig: M must be >= 1");
    if (cfg.M > cfg.N) throw std::invalid_argument("EnvConfig: M must be <= N");
    if (cfg.T < 1) throw std::invalid_argument("EnvConfig: T must be >= 1");
    if (cfg.gamma < 0.0) throw std::invalid_argument("EnvConfig: gamma must be >= 0");
    if (!(cfg.sigma >= 0.0)) throw std::invalid_argument("EnvConfig: sigma must be >= 0");
    if (cfg.arms_per_round < 1 || cfg.arms_per_round > cfg.K) {
        throw std::invalid_argument("EnvConfig: arms_per_round must be in [1, K]");
    }
    if (!cfg.cluster_sizes.empty()) {
        if (static_cast<int>(cfg.cluster_sizes.size()) != cfg.M) {
            throw std::invalid_argument("EnvConfig: cluster_sizes length must equal M");
        }
        int total = 0;
        for (int s : cfg.cluster_sizes) {
            if (s < 1) throw std::invalid_argument("EnvConfig: cluster sizes must be >= 1");
            total += s;
        }
        if (total != cfg.N) {
            throw std::invalid_argument("EnvConfig: cluster_sizes must sum to N");
        }
    }
}

std::vector<std::vector<int>> truth_clusters(const GroundTruth& truth) {
    int max_cluster = -1;
    for (int c : truth.assignment) max_cluster = std::max(max_cluster, c);
    std::vector<std::vector<int>> groups(max_cluster + 1);
    for (int i = 0; i < static_cast<int>(truth.assignment.size()); ++i) {
        groups[truth.assignment[i]].push_back(i);
    }
    std::vector<std::vector<int>> out;
    for (auto& g : groups) {
        if (!g.empty()) out.push_back(std::move(g));  // already sorted by id
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

Environment generate_environment(const EnvConfig& cfg) {
    validate(cfg);
    const double eps = 1.0 / (cfg.N * std::sqrt(static_cast<double>(cfg.T)));
    Rng rng(cfg.seed);

    // Cluster centers: unit directions scaled to norm (1 - eps), rejection
    // sampled to pairwise distance >= gamma + 2*eps.  The shrink leaves room
    // for the client offsets, so no renormalization of theta* is needed and
    // the separation invariants hold exactly.
    std::vector<Vector> centers;
    centers.reserve(cfg.M);
    int attempts = 0;
    const double center_norm = 1.0 - eps;
    const double min_center_dist = cfg.gamma + 2.0 * eps;
    while (static_cast<int>(centers.size()) < cfg.M) {
        if (++attempts > kMaxRejectionAttempts) {
            std::ostringstream msg;
            msg << "generate_environment: infeasible configuration (gamma=" << cfg.gamma
                << ", M=" << cfg.M << "): center rejection sampling exceeded "
                << kMaxRejectionAttempts << " attempts";
            throw std::runtime_error(msg.str());
        }
        Vector cand = center_norm * unit_gauss_vector(cfg.d, rng);
        bool ok = true;
        for (const Vector& c : centers) {
            if ((cand - c).norm() < min_center_dist) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back(std::move(cand));
    }

    // Client-to-cluster assignment.
    GroundTruth truth;
    truth.epsilon = eps;
    truth.assignment.resize(cfg.N);
    if (!cfg.cluster_sizes.empty()) {
        int client = 0;
        for (int c = 0; c < cfg.M; ++c) {
            for (int j = 0; j < cfg.cluster_sizes[c]; ++j) truth.assignment[client++] = c;
        }
    } else {
        for (int i = 0; i < cfg.N; ++i) truth.assignment[i] = rng.uniform_int(cfg.M);
    }

    // Client parameters: center + radius * unit direction with radius uniform
    // in [0, eps/2], so any same-cluster pair is within eps of each other and
    // ||theta*|| <= (1 - eps) + eps/2 < 1.
    truth.theta_star.reserve(cfg.N);
    for (int i = 0; i < cfg.N; ++i) {
        const Vector dir = unit_gauss_vector(cfg.d, rng);
        const double radius = 0.5 * eps * rng.next_double();
        truth.theta_star.push_back(centers[truth.assignment[i]] + radius * dir);
    }

    // Arm pool: unit-norm context vectors.
    std::vector<Vector> pool;
    pool.reserve(cfg.K);
    for (int k = 0; k < cfg.K; ++k) pool.push_back(unit_gauss_vector(cfg.d, rng));

    // Post-generation asserts: the two distance conditions hold exactly.
    for (int i = 0; i < cfg.N; ++i) {
        if (truth.theta_star[i].norm() > 1.0 + 1e-12) {
            throw std::runtime_error("generate_environment: parameter norm exceeds 1");
        }
        for (int j = i + 1; j < cfg.N; ++j) {
            const double dist = (truth.theta_star[i] - truth.theta_star[j]).norm();
            if (truth.assignment[i] == truth.assignment[j]) {
                if (dist > eps + 1e-12) {
                    throw std::runtime_error(
                        "generate_environment: intra-cluster distance exceeds epsilon");
                }
            } else if (dist < cfg.gamma - 1e-12) {
                throw std::runtime_error(
                    "generate_environment: cross-cluster distance below gamma");
            }
        }
    }

    return Environment{cfg, std::move(truth), std::move(pool)};
}

void draw_action_set(int pool_size, int arms_per_round, Rng& rng, ActionSet& out) {
    if (arms_per_round < 1 || arms_per_round > pool_size) {
        throw std::invalid_argument("draw_action_set: arms_per_round out of range");
    }
    out.indices.clear();
    out.indices.reserve(arms_per_round);
    // Floyd's algorithm: uniform sample without replacement using exactly
    // arms_per_round bounded-integer draws.
    for (int i = pool_size - arms_per_round; i < pool_size; ++i) {
        const int j = rng.uniform_int(i + 1);
        const bool seen =
            std::find(out.indices.begin(), out.indices.end(), j) != out.indices.end();
        out.indices.push_back(seen ? i : j);
    }
}

ActionSet draw_action_set(const Environment& env, Rng& rng) {
    ActionSet set;
    draw_action_set(env.cfg.K, env.cfg.arms_per_round, rng, set);
    return set;
}

double realize_reward(const Vector& theta_star, const Vector& x, double sigma, Rng& rng) {
    if (x.norm() > 1.0 + 1e-9) {
        throw std::invalid_argument("realize_reward: context norm exceeds 1");
    }
    // The normal draw happens unconditionally so the stream advances the same
    // way regardless of sigma.
    const double noise = rng.gauss();
    return theta_star.dot(x) + sigma * noise;
}

double instant_regret(const Vector& theta_star, const std::vector<Vector>& pool,
                      const ActionSet& set, int chosen) {
    if (chosen < 0 || chosen >= static_cast<int>(set.indices.size())) {
        throw std::invalid_argument("instant_regret: chosen index out of range");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int idx : set.indices) {
        best = std::max(best, theta_star.dot(pool[idx]));
    }
    return best - theta_star.dot(pool[set.indices[chosen]]);
}

namespace {

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Vector vector_from_json(const nlohmann::json& arr) {
    Vector v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i];
    return v;
}

}  // namespace

void save_environment(const Environment& env, const std::string& path) {
    nlohmann::json j;
    j["config"] = {{"d", env.cfg.d},
                   {"K", env.cfg.K},
                   {"N", env.cfg.N},
                   {"M", env.cfg.M},
                   {"T", env.cfg.T},
                   {"gamma", env.cfg.gamma},
                   {"sigma", env.cfg.sigma},
                   {"arms_per_round", env.cfg.arms_per_round},
                   {"seed", env.cfg.seed},
                   {"cluster_sizes", env.cfg.cluster_sizes}};
    j["epsilon"] = env.truth.epsilon;
    j["assignment"] = env.truth.assignment;
    nlohmann::json thetas = nlohmann::json::array();
    for (const Vector& t : env.truth.theta_star) thetas.push_back(vector_to_json(t));
    j["theta_star"] = std::move(thetas);
    nlohmann::json pool = nlohmann::json::array();
    for (const Vector& x : env.pool) pool.push_back(vector_to_json(x));
    j["pool"] = std::move(pool);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_environment: cannot open " + path);
    out << j.dump(2) << "\n";
}

Environment load_environment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_environment: cannot open " + path);
    nlohmann::json j;
    in >> j;

    Environment env;
    const auto& c = j.at("config");
    env.cfg.d = c.at("d").get<int>();
    env.cfg.K = c.at("K").get<int>();
    env.cfg.N = c.at("N").get<int>();
    env.cfg.M = c.at("M").get<int>();
    env.cfg.T = c.at("T").get<long>();
    env.cfg.gamma = c.at("gamma").get<double>();
    env.cfg.sigma = c.at("sigma").get<double>();
    env.cfg.arms_per_round = c.at("arms_per_round").get<int>();
    env.cfg.seed = c.at("seed").get<std::uint64_t>();
    env.cfg.cluster_sizes = c.at("cluster_sizes").get<std::vector<int>>();

    env.truth.epsilon = j.at("epsilon").get<double>();
    env.truth.assignment = j.at("assignment").get<std::vector<int>>();
    for (const auto& arr : j.at("theta_star")) {
        env.truth.theta_star.push_back(vector_from_json(arr));
    }
    for (const auto& arr : j.at("pool")) {
        env.pool.push_back(vector_from_json(arr));
    }
    return env;
}

}  // namespace fedband
