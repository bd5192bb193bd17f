#include <catch2/catch_amalgamated.hpp>

#include "licds/learn.hpp"
#include "licds/systems.hpp"

#include <cmath>
#include <random>

using namespace licds;

namespace {
SystemSpec linear_system(double sigma = 0.0) {
    SystemSpec spec;
    spec.name = "linear";
    spec.dynamics = DynamicsFn{1, [](const Vector& x) { return Vector(-x); }};
    spec.default_x0 = Vector::Zero(1);
    spec.noise_sigma = sigma;
    spec.domain_bounds = {{-10.0, 10.0}};
    return spec;
}
const std::vector<Interval> kBox{{-2.0, 2.0}};
} // namespace

TEST_CASE("dataset has (n_samples-1) pairs per trajectory", "[learn]") {
    auto spec = get_system("tanh");
    const auto data = make_dataset(spec, 10, 100, 0.01, 3, kBox);
    REQUIRE(data.size() == 990);
    REQUIRE(data.source_trajectories == 10);
    REQUIRE(data.pairs_per_trajectory() == 99);
}

TEST_CASE("noise-free targets are the exact finite differences", "[learn]") {
    const auto data = make_dataset(linear_system(0.0), 2, 50, 0.01, 1, kBox);
    for (std::size_t i = 0; i < data.size(); ++i) {
        // Euler identity: target = (x(1-dt) - x)/dt = -x exactly
        REQUIRE(data.targets[i][0] == Catch::Approx(-data.inputs[i][0]).epsilon(1e-12));
    }
}

TEST_CASE("datasets are bitwise reproducible under the seed", "[learn]") {
    auto spec = get_system("tanh");
    const auto a = make_dataset(spec, 3, 20, 0.01, 42, kBox);
    const auto b = make_dataset(spec, 3, 20, 0.01, 42, kBox);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.inputs[i][0] == b.inputs[i][0]);
        REQUIRE(a.targets[i][0] == b.targets[i][0]);
    }
}

TEST_CASE("zero-epoch training returns the seeded initialization", "[learn]") {
    const auto data = make_dataset(linear_system(), 2, 20, 0.01, 5, kBox);
    const auto trained = train_mlp(data, {4}, 0, 1e-2, 17);
    const auto fresh = init_mlp(1, {4}, 17);
    for (std::size_t l = 0; l < fresh.weights.size(); ++l) {
        REQUIRE(trained.model.weights[l] == fresh.weights[l]);
        REQUIRE(trained.model.biases[l] == fresh.biases[l]);
    }
    const double lim = 1.0;  // fan_in = 1
    for (double w : fresh.weights[0].reshaped()) REQUIRE(std::abs(w) <= lim);
}

TEST_CASE("one hidden unit learns a gentle linear slope", "[learn][slow]") {
    // Regression set: uniform grid on [-2, 2], targets -x. A single tanh
    // unit rides the a*tanh(w*x) valley toward small w; after 2000 epochs
    // the oracle run lands around 0.08 worst-case error, frozen here with
    // margin (the exact floor depends on how far along the valley the
    // schedule travels).
    Dataset data;
    data.dt = 0.01;
    data.source_trajectories = 5;
    for (int i = 0; i < 500; ++i) {
        Vector x(1), y(1);
        x << -2.0 + 4.0 * i / 499.0;
        y << -x[0];
        data.inputs.push_back(x);
        data.targets.push_back(y);
    }
    const auto trained = train_mlp(data, {1}, 2000, 1e-2, 3);
    double worst = 0.0;
    for (int i = -40; i <= 40; ++i) {
        Vector x(1);
        x << 0.05 * i;
        worst = std::max(worst, std::abs(trained.model.forward(x)[0] + x[0]));
    }
    REQUIRE(worst < 0.12);
    REQUIRE(trained.epoch_loss.back() < 2e-3);
}

TEST_CASE("training loss settles with the fixed step schedule", "[learn][slow]") {
    auto spec = get_system("tanh");
    const auto data = make_dataset(spec, 5, 100, 0.01, 21, kBox);
    const auto trained = train_mlp(data, {4}, 4000, 1e-2, 2);
    const auto& loss = trained.epoch_loss;
    REQUIRE(loss.size() == 4000);
    for (std::size_t e = 2000; e + 500 < loss.size(); e += 100)
        REQUIRE(loss[e + 500] <= loss[e] + 1e-9);
}

TEST_CASE("training is bitwise reproducible", "[learn]") {
    const auto data = make_dataset(linear_system(), 3, 30, 0.01, 6, kBox);
    const auto a = train_mlp(data, {3}, 50, 1e-2, 8);
    const auto b = train_mlp(data, {3}, 50, 1e-2, 8);
    for (std::size_t l = 0; l < a.model.weights.size(); ++l)
        REQUIRE(a.model.weights[l] == b.model.weights[l]);
    REQUIRE(a.epoch_loss == b.epoch_loss);
}

TEST_CASE("MLP input jacobian matches finite differences", "[learn]") {
    const auto data = make_dataset(get_system("pendulum"), 2, 20, 0.01, 4,
                                   {{-2.0, 2.0}, {-2.0, 2.0}});
    const auto trained = train_mlp(data, {6, 4}, 30, 1e-2, 11);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        Vector x(2);
        x << u(rng), u(rng);
        const Matrix J = trained.model.input_jacobian(x);
        for (int j = 0; j < 2; ++j) {
            Vector xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const Vector fd = (trained.model.forward(xp) - trained.model.forward(xm)) / (2 * h);
            for (int d = 0; d < 2; ++d) REQUIRE(J(d, j) == Catch::Approx(fd[d]).margin(1e-5));
        }
    }
}

TEST_CASE("GP interpolates in the small-noise limit", "[learn]") {
    // one pair per trajectory -> well-spread inputs, well-conditioned kernel
    const auto data = make_dataset(linear_system(0.0), 10, 2, 0.1, 1, kBox);
    const auto gp = fit_gp(data, 1.0, 1.0, 1e-10);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Vector mean = gp.posterior_mean(data.inputs[i]);
        REQUIRE(mean[0] == Catch::Approx(data.targets[i][0]).margin(1e-6));
    }
}

TEST_CASE("kernel at zero distance is the signal variance", "[learn]") {
    const auto data = make_dataset(linear_system(0.0), 1, 5, 0.1, 2, kBox);
    const auto gp = fit_gp(data, 0.7, 2.5, 1e-2);
    Vector x(1);
    x << 0.3;
    REQUIRE(gp.kernel(x, x) == 2.5);
}

TEST_CASE("GP recovers minus-tanh from dense samples", "[learn][slow]") {
    // 200 exact samples on [-3, 3]; posterior mean must track on [-2, 2].
    Dataset data;
    data.dt = 1.0;
    data.source_trajectories = 1;
    for (int i = 0; i < 200; ++i) {
        Vector x(1), y(1);
        x << -3.0 + 6.0 * i / 199.0;
        y << -std::tanh(x[0]);
        data.inputs.push_back(x);
        data.targets.push_back(y);
    }
    const auto gp = fit_gp(data);
    double worst = 0.0;
    for (int i = -40; i <= 40; ++i) {
        Vector x(1);
        x << 0.05 * i;
        worst = std::max(worst, std::abs(gp.posterior_mean(x)[0] + std::tanh(x[0])));
    }
    REQUIRE(worst < 0.05);
}

TEST_CASE("GP posterior gradient matches the analytic kernel derivative", "[learn]") {
    const auto data = make_dataset(get_system("pendulum"), 2, 30, 0.01, 7,
                                   {{-2.0, 2.0}, {-2.0, 2.0}});
    const auto gp = fit_gp(data, 1.0, 1.0, 1e-2);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double h = 1e-5;
    for (int trial = 0; trial < 50; ++trial) {
        Vector x(2);
        x << u(rng), u(rng);
        const Matrix J = gp.input_jacobian(x);
        for (int j = 0; j < 2; ++j) {
            Vector xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const Vector fd = (gp.posterior_mean(xp) - gp.posterior_mean(xm)) / (2 * h);
            for (int d = 0; d < 2; ++d) REQUIRE(J(d, j) == Catch::Approx(fd[d]).margin(1e-4));
        }
    }
}

TEST_CASE("GP grid search never loses to the fixed defaults", "[learn]") {
    auto spec = get_system("tanh");
    const auto data = make_dataset(spec, 4, 50, 0.01, 12, kBox);
    const auto fixed = fit_gp(data);
    const auto searched = fit_gp(data, 1.0, 1.0, 1e-2, true);
    // the grid contains the default point, so the search can only improve
    // the marginal likelihood; smoke-check that it still predicts sanely
    Vector x(1);
    x << 0.5;
    REQUIRE(std::isfinite(searched.posterior_mean(x)[0]));
    REQUIRE(std::abs(searched.posterior_mean(x)[0] - fixed.posterior_mean(x)[0]) < 1.0);
}

TEST_CASE("oversized datasets are rejected for the dense solve", "[learn]") {
    Dataset data;
    data.dt = 0.01;
    data.source_trajectories = 1;
    for (int i = 0; i < 2001; ++i) {
        data.inputs.push_back(Vector::Zero(1));
        data.targets.push_back(Vector::Zero(1));
    }
    REQUIRE_THROWS_AS(fit_gp(data), ConfigError);
}
