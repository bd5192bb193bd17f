#include <catch2/catch_amalgamated.hpp>

#include "licds/core.hpp"
#include "licds/systems.hpp"

#include <cmath>
#include <random>

using namespace licds;

namespace {

DynamicsFn linear_decay() {
    return DynamicsFn{1, [](const Vector& x) { return Vector(-x); }};
}


/// Exhaustive search over every (m, k_1..k_m) assignment; ties resolve to
/// the first candidate in (m ascending, k lexicographic) order, matching
/// the optimizer's smallest-m / smallest-k rule.
struct BruteForce {
    int m_star = 0;
    double L_star = kInf;
    std::vector<int> ks;
};

BruteForce brute_force(const DynamicsFn& f, const Trajectory& truth, double T_global,
                       double lambda, int k_max, int m_max) {
    const auto n = static_cast<std::size_t>(std::llround(T_global / truth.dt));
    BruteForce best;
    for (int m = 1; m <= m_max; ++m) {
        const auto windows = detail::partition_indices(n, m);
        std::vector<int> ks(static_cast<std::size_t>(m), 1);
        for (;;) {
            double total = 0.0;
            for (int i = 0; i < m; ++i)
                total += local_cost_window(f, truth, windows[i].first, windows[i].second,
                                           ks[static_cast<std::size_t>(i)], lambda)
                             .L;
            if (total < best.L_star) {
                best.L_star = total;
                best.m_star = m;
                best.ks = ks;
            }
            // next assignment in lexicographic order (last index slowest so
            // earlier windows stay smallest on ties)
            int pos = m - 1;
            while (pos >= 0 && ks[static_cast<std::size_t>(pos)] == k_max) {
                ks[static_cast<std::size_t>(pos)] = 1;
                --pos;
            }
            if (pos < 0) break;
            ++ks[static_cast<std::size_t>(pos)];
        }
    }
    return best;
}

} // namespace

TEST_CASE("local cost of a linear field with an affine model", "[core]") {
    Vector x0(1);
    x0 << 1.0;
    const auto truth = integrate(linear_decay(), x0, 0.0, 1.0, 0.01);
    const auto lc = local_cost(linear_decay(), truth, 0.0, 1.0, x0, 2, 0.1);
    REQUIRE(lc.L == Catch::Approx(0.2).margin(1e-7));
    REQUIRE(lc.model.coeffs(0, 0) == Catch::Approx(-1.0).margin(1e-9));
    REQUIRE(lc.model.coeffs(0, 1) == Catch::Approx(-1.0).margin(1e-9));
}

TEST_CASE("constant-model cost equals the straight-line quadrature", "[core]") {
    // k = 1 rollout is the line x0 + f(x0) t; recompute the trapezoid
    // integral against the RK4 truth independently.
    auto spec = get_system("tanh");
    Vector x0(1);
    x0 << 2.0;
    const double dt = 0.01;
    const auto truth = integrate(spec.dynamics, x0, 0.0, 1.0, dt);
    const auto lc = local_cost(spec.dynamics, truth, 0.0, 1.0, x0, 1, 0.0);

    const double slope = spec.dynamics(x0)[0];
    double expected = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double line = 2.0 + slope * truth.time(i);
        const double w = (i == 0 || i + 1 == truth.size()) ? 0.5 : 1.0;
        expected += w * std::abs(line - truth.states[i][0]);
    }
    expected *= dt;
    REQUIRE(lc.L == Catch::Approx(expected).epsilon(1e-6));
}

TEST_CASE("zero-lambda cost vanishes as the window shrinks", "[core]") {
    auto spec = get_system("tanh");
    Vector x0(1);
    x0 << 2.0;
    const auto truth = integrate(spec.dynamics, x0, 0.0, 1.0, 0.005);
    double prev = kInf;
    for (double stop : {1.0, 0.5, 0.25}) {
        const auto lc = local_cost(spec.dynamics, truth, 0.0, stop, x0, 5, 0.0);
        REQUIRE(lc.L < prev);
        prev = lc.L;
    }
    REQUIRE(prev < 1e-8);
}

TEST_CASE("diverging candidate yields an infinite cost, not a failure", "[core]") {
    // Truth from a mild field, candidate fit from an explosive one.
    DynamicsFn cubic{1, [](const Vector& x) {
        Vector v(1);
        v << 40.0 * x[0] * x[0] * x[0];
        return v;
    }};
    Vector x0(1);
    x0 << 2.0;
    const auto truth = integrate(linear_decay(), x0, 0.0, 1.0, 0.01);
    const auto lc = local_cost_window(cubic, truth, 0, 100, 4, 0.1);
    REQUIRE(lc.L == kInf);
}

TEST_CASE("LMS picks the constant model for a constant field", "[core]") {
    DynamicsFn constant{1, [](const Vector& x) {
        Vector v(1);
        v << 0.7;
        return v;
    }};
    Vector x0(1);
    x0 << 0.0;
    const auto truth = integrate(constant, x0, 0.0, 1.0, 0.01);
    const auto part = lms(constant, truth, 1, 1.0, 0.5, x0, 5);
    REQUIRE(part.k_star == 1);
    REQUIRE(part.L_star == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("LMS equals the independent argmin over k", "[core]") {
    auto spec = get_system("pendulum");
    Vector x0(2);
    x0 << 3.0, 0.0;
    const auto truth = integrate(spec.dynamics, x0, 0.0, 1.0, 0.01);
    const double lambda = 0.05;
    const int k_max = 4;
    const auto part = lms(spec.dynamics, truth, 1, 1.0, lambda, x0, k_max);

    double best = kInf;
    int best_k = 0;
    for (int k = 1; k <= k_max; ++k) {
        const double L = local_cost_window(spec.dynamics, truth, 0, 100, k, lambda).L;
        if (L < best) {
            best = L;
            best_k = k;
        }
    }
    REQUIRE(part.k_star == best_k);
    REQUIRE(part.L_star == best);
}

TEST_CASE("large lambda forces the simplest model", "[core]") {
    auto spec = get_system("pendulum");
    Vector x0(2);
    x0 << 3.0, 0.0;
    const auto truth = integrate(spec.dynamics, x0, 0.0, 1.0, 0.01);
    const auto part = lms(spec.dynamics, truth, 1, 1.0, 1e6, x0, 4);
    REQUIRE(part.k_star == 1);
}

TEST_CASE("globally linear fields want one affine partition", "[core]") {
    Vector x0(1);
    x0 << 1.5;
    const auto truth = integrate(linear_decay(), x0, 0.0, 2.0, 0.01);
    LicdsParams p;
    p.T_global = 2.0;
    p.dt = 0.01;
    p.lambda = 0.05;
    p.k_max = 4;
    p.m_max = 4;
    const auto res = search(linear_decay(), truth, p);
    REQUIRE(res.m_star == 1);
    REQUIRE(res.partitions.size() == 1);
    REQUIRE(res.partitions[0].k_star == 2);
    REQUIRE(res.L_total_star == Catch::Approx(0.1).margin(1e-6));
}

TEST_CASE("search equals brute-force enumeration", "[core][oracle]") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 1 + trial % 2;
        const DynamicsFn f = random_smooth_field(dim, rng);
        Vector x0(dim);
        for (int d = 0; d < dim; ++d) x0[d] = u(rng);
        Trajectory truth;
        try {
            truth = integrate(f, x0, 0.0, 1.0, 0.02);
        } catch (const NumericError&) {
            continue;  // rare unstable draw
        }
        for (int m_max = 1; m_max <= 3; ++m_max)
            for (int k_max = 1; k_max <= 3; ++k_max) {
                LicdsParams p;
                p.T_global = 1.0;
                p.dt = 0.02;
                p.lambda = 0.01;
                p.k_max = k_max;
                p.m_max = m_max;
                const auto res = search(f, truth, p);
                const auto oracle = brute_force(f, truth, 1.0, 0.01, k_max, m_max);
                REQUIRE(res.m_star == oracle.m_star);
                REQUIRE(std::abs(res.L_total_star - oracle.L_star) <= 1e-12);
                REQUIRE(res.partitions.size() == oracle.ks.size());
                for (std::size_t i = 0; i < oracle.ks.size(); ++i)
                    REQUIRE(res.partitions[i].k_star == oracle.ks[i]);
                ++checked;
            }
    }
    REQUIRE(checked >= 150);
}

TEST_CASE("cost curve recomposes from the returned partitions", "[core]") {
    auto spec = get_system("tanh");
    const auto truth = integrate(spec.dynamics, spec.default_x0, 0.0, 4.0, 0.01);
    LicdsParams p;
    p.T_global = 4.0;
    p.dt = 0.01;
    p.k_max = 6;
    p.m_max = 5;
    const auto res = search(spec.dynamics, truth, p);
    double total = 0.0;
    for (const auto& part : res.partitions) total += part.L_star;
    REQUIRE(std::abs(total - res.cost_curve[static_cast<std::size_t>(res.m_star - 1)]) <= 1e-12);
    REQUIRE(std::abs(total - res.L_total_star) <= 1e-12);
    double curve_min = kInf;
    for (double v : res.cost_curve) curve_min = std::min(curve_min, v);
    REQUIRE(res.L_total_star == curve_min);
}

TEST_CASE("restarts hit the exact truth samples", "[core]") {
    auto spec = get_system("pendulum");
    const auto truth = integrate(spec.dynamics, spec.default_x0, 0.0, 2.0, 0.01);
    LicdsParams p;
    p.T_global = 2.0;
    p.dt = 0.01;
    p.k_max = 4;
    p.m_max = 4;
    const auto res = search(spec.dynamics, truth, p);
    const auto windows = detail::partition_indices(200, res.m_star);
    for (std::size_t j = 0; j < res.partitions.size(); ++j) {
        const Vector& restart = res.partitions[j].restart_state;
        const Vector& sample = truth.states[windows[j].first];
        REQUIRE(restart[0] == sample[0]);
        REQUIRE(restart[1] == sample[1]);
        // the assembled trajectory carries the restart at the boundary
        REQUIRE(res.approx_states.states[windows[j].first][0] == sample[0]);
    }
    REQUIRE(res.approx_states.size() == truth.size());
}

TEST_CASE("dominant lambda collapses the search to one constant window", "[core]") {
    auto spec = get_system("tanh");
    const auto truth = integrate(spec.dynamics, spec.default_x0, 0.0, 4.0, 0.01);
    LicdsParams p;
    p.T_global = 4.0;
    p.dt = 0.01;
    p.k_max = 6;
    p.m_max = 5;
    p.lambda = 1e4;  // far above any integral error here
    const auto res = search(spec.dynamics, truth, p);
    REQUIRE(res.m_star == 1);
    REQUIRE(res.partitions[0].k_star == 1);
}

TEST_CASE("zero lambda rewards pure error and more restarts", "[core]") {
    auto spec = get_system("tanh");
    const auto truth = integrate(spec.dynamics, spec.default_x0, 0.0, 4.0, 0.01);
    LicdsParams p;
    p.T_global = 4.0;
    p.dt = 0.01;
    p.k_max = 5;
    p.m_max = 5;
    p.lambda = 1e-300;  // validate() wants positive; effectively zero
    const auto res = search(spec.dynamics, truth, p);
    // every window's k must be the pure-error argmin
    const auto windows = detail::partition_indices(400, res.m_star);
    for (std::size_t j = 0; j < res.partitions.size(); ++j) {
        double best = kInf;
        int best_k = 0;
        for (int k = 1; k <= p.k_max; ++k) {
            const double L = local_cost_window(spec.dynamics, truth, windows[j].first,
                                               windows[j].second, k, 0.0)
                                 .L;
            if (L < best) {
                best = L;
                best_k = k;
            }
        }
        REQUIRE(res.partitions[j].k_star == best_k);
    }
    // restarting from truth can only help: L_total(m) non-increasing
    for (std::size_t m = 1; m < res.cost_curve.size(); ++m)
        REQUIRE(res.cost_curve[m] <= res.cost_curve[m - 1] + 1e-9);
}

TEST_CASE("auto lambda balances the two cost terms", "[core]") {
    auto spec = get_system("tanh");
    const auto truth = integrate(spec.dynamics, spec.default_x0, 0.0, 4.0, 0.01);
    LicdsParams p;
    p.T_global = 4.0;
    p.dt = 0.01;
    p.k_max = 8;
    p.m_max = 5;
    const double lambda = calibrate_lambda(spec.dynamics, truth, p);
    const double E1 = local_cost_window(spec.dynamics, truth, 0, 400, 1, 0.0).L;
    REQUIRE(lambda * p.k_max == Catch::Approx(E1).epsilon(1e-12));

    LicdsParams doubled = p;
    doubled.k_max = 16;
    REQUIRE(calibrate_lambda(spec.dynamics, truth, doubled) ==
            Catch::Approx(lambda / 2.0).epsilon(1e-12));

    DynamicsFn constant{1, [](const Vector& x) { return Vector(Vector::Zero(1)); }};
    const auto const_truth = integrate(constant, Vector::Zero(1), 0.0, 4.0, 0.01);
    REQUIRE(calibrate_lambda(constant, const_truth, p) == 1e-12);
}

TEST_CASE("theorem 1: identical fields give a trivial bound", "[core][theorem]") {
    auto spec = get_system("tanh");
    const auto check =
        check_theorem1(spec.dynamics, spec.dynamics, spec.default_x0, 2.0, 0.01);
    REQUIRE(check.lhs == 0.0);
    REQUIRE(check.rhs == 0.0);
    REQUIRE(check.holds);
}

TEST_CASE("theorem 1 on a constant offset", "[core][theorem]") {
    auto spec = get_system("tanh");
    DynamicsFn offset{1, [f = spec.dynamics](const Vector& x) {
        return Vector(f(x).array() + 0.05);
    }};
    Vector x0(1);
    x0 << 1.0;
    const auto check = check_theorem1(spec.dynamics, offset, x0, 2.0, 0.01);
    REQUIRE(check.lhs > 0.0);
    REQUIRE(check.holds);
}

TEST_CASE("theorem 1 holds on randomized perturbations", "[core][theorem]") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto spec = get_system("tanh");
    for (int i = 0; i < 100; ++i) {
        const double eps = 0.2 * u(rng);
        const DynamicsFn g = random_smooth_field(1, rng);
        DynamicsFn f_hat{1, [f = spec.dynamics, g, eps](const Vector& x) {
            return Vector(f(x) + eps * g(x));
        }};
        const double T = (i % 2 == 0) ? 1.0 : 2.0;
        const auto check = check_theorem1(spec.dynamics, f_hat, spec.default_x0, T, 0.01);
        REQUIRE(check.holds);
    }
}

TEST_CASE("theorem 2: identical fields give zero norms", "[core][theorem]") {
    auto spec = get_system("pendulum");
    const auto check =
        check_theorem2(spec.dynamics, spec.dynamics, spec.default_x0, 2.0, 0.01);
    REQUIRE(check.dyn_l1 == 0.0);
    REQUIRE(check.state_l1 == 0.0);
}

TEST_CASE("theorem 2 family scales linearly in the perturbation", "[core][theorem]") {
    auto spec = get_system("tanh");
    std::mt19937_64 rng(5);
    const DynamicsFn g = random_smooth_field(1, rng);
    double prev_dyn = kInf, prev_state = kInf;
    std::vector<double> ratios;
    for (double eps : {0.2, 0.1, 0.05, 0.025}) {
        DynamicsFn f_hat{1, [f = spec.dynamics, g, eps](const Vector& x) {
            return Vector(f(x) + eps * g(x));
        }};
        const auto check = check_theorem2(spec.dynamics, f_hat, spec.default_x0, 2.0, 0.01);
        REQUIRE(check.dyn_l1 < prev_dyn);
        REQUIRE(check.state_l1 < prev_state);
        prev_dyn = check.dyn_l1;
        prev_state = check.state_l1;
        ratios.push_back(check.dyn_l1 / check.state_l1);
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    REQUIRE(*hi / *lo < 10.0);
}

TEST_CASE("theorem 2 only sees on-trajectory values", "[core][theorem]") {
    // Two approximations that differ only outside the trajectory envelope
    // must give identical dynamics norms.
    auto spec = get_system("tanh");
    Vector x0(1);
    x0 << 1.0;  // trajectory stays in (0, 1]
    auto bump = [](double x) { return x < -5.0 ? (x + 5.0) * (x + 5.0) : 0.0; };
    DynamicsFn f_hat1{1, [f = spec.dynamics](const Vector& x) {
        return Vector(f(x).array() + 0.02);
    }};
    DynamicsFn f_hat2{1, [f = spec.dynamics, bump](const Vector& x) {
        return Vector(f(x).array() + 0.02 + bump(x[0]));
    }};
    const auto a = check_theorem1(spec.dynamics, f_hat1, x0, 2.0, 0.01);
    const auto c1 = check_theorem2(spec.dynamics, f_hat1, x0, 2.0, 0.01);
    const auto c2 = check_theorem2(spec.dynamics, f_hat2, x0, 2.0, 0.01);
    REQUIRE(c1.dyn_l1 == c2.dyn_l1);
    REQUIRE(a.holds);
}

TEST_CASE("single init point scoring equals the plain run", "[core][score]") {
    auto spec = get_system("tanh");
    LicdsParams p;
    p.T_global = 2.0;
    p.dt = 0.01;
    p.k_max = 4;
    p.m_max = 3;
    p.lambda = 0.05;
    Vector x0(1);
    x0 << 1.3;
    const auto score = score_model(spec.dynamics, {x0}, p);
    const auto truth = integrate(spec.dynamics, x0, 0.0, 2.0, 0.01);
    const auto direct = search(spec.dynamics, truth, p);
    REQUIRE(score.L_mean == direct.L_total_star);
    REQUIRE(score.per_point.size() == 1);
}

TEST_CASE("linear candidates score the bare complexity price", "[core][score]") {
    // lambda small enough that the exact affine model beats the constant one
    LicdsParams p;
    p.T_global = 1.0;
    p.dt = 0.01;
    p.k_max = 3;
    p.m_max = 3;
    p.lambda = 0.05;
    std::vector<Vector> pts;
    for (double v : {0.5, -0.8, 1.2}) {
        Vector x(1);
        x << v;
        pts.push_back(x);
    }
    const auto score = score_model(linear_decay(), pts, p);
    REQUIRE(score.L_mean == Catch::Approx(0.05 * 2.0).margin(1e-6));
    for (const auto& r : score.per_point) {
        REQUIRE(r.m_star == 1);
        REQUIRE(r.partitions[0].k_star == 2);
    }
}

TEST_CASE("scoring is invariant under init point order", "[core][score]") {
    auto spec = get_system("tanh");
    LicdsParams p;
    p.T_global = 1.0;
    p.dt = 0.01;
    p.k_max = 4;
    p.m_max = 3;
    p.lambda = 0.1;
    std::vector<Vector> pts;
    for (double v : {0.5, -0.8, 1.2, 1.9}) {
        Vector x(1);
        x << v;
        pts.push_back(x);
    }
    const auto a = score_model(spec.dynamics, pts, p);
    std::reverse(pts.begin(), pts.end());
    const auto b = score_model(spec.dynamics, pts, p);
    REQUIRE(a.L_mean == b.L_mean);  // bitwise
}

TEST_CASE("ranking breaks ties by name and prefers the true field", "[core][score]") {
    auto spec = get_system("tanh");
    DynamicsFn offset{1, [f = spec.dynamics](const Vector& x) {
        return Vector(f(x).array() + 0.5);
    }};
    LicdsParams p;
    p.T_global = 2.0;
    p.dt = 0.01;
    p.k_max = 4;
    p.m_max = 3;
    p.lambda = 1e-4;
    std::vector<Vector> pts;
    for (double v : {0.6, 1.4}) {
        Vector x(1);
        x << v;
        pts.push_back(x);
    }
    const auto dup = rank_models({{"b", spec.dynamics}, {"a", spec.dynamics}}, pts, p);
    REQUIRE(dup[0].first == "a");
    REQUIRE(dup[0].second == dup[1].second);
}

TEST_CASE("window misalignment and bad params are rejected", "[core]") {
    auto spec = get_system("tanh");
    const auto truth = integrate(spec.dynamics, spec.default_x0, 0.0, 1.0, 0.01);
    Vector wrong(1);
    wrong << 1.0;
    REQUIRE_THROWS_AS(local_cost(spec.dynamics, truth, 0.0, 1.0, wrong, 2, 0.1),
                      ConfigError);
    LicdsParams p;
    p.T_global = 1.0;
    p.dt = 0.01;
    p.k_max = 0;
    p.m_max = 3;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    LicdsParams q;
    q.T_global = 0.05;
    q.dt = 0.01;
    q.k_max = 2;
    q.m_max = 10;  // fewer steps than partitions
    REQUIRE_THROWS_AS(q.validate(), ConfigError);
}
