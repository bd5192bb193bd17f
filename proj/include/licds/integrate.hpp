#pragma once

#include "licds/common.hpp"
#include "licds/systems.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace licds {

/// A uniformly sampled state sequence: sample i sits at time t0 + i*dt.
struct Trajectory {
    std::vector<Vector> states;
    double dt = 0.0;
    double t0 = 0.0;

    std::size_t size() const { return states.size(); }
    int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
    const Vector& front() const { return states.front(); }
    const Vector& back() const { return states.back(); }
};

namespace detail {

inline long long step_count(double T, double dt) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(T > 0.0)) throw ConfigError("horizon T must be positive");
    if (dt > T) throw ConfigError("dt must not exceed the horizon T");
    return std::llround(T / dt);
}

} // namespace detail

inline Vector rk4_step(const DynamicsFn& f, const Vector& x, double dt) {
    const Vector k1 = f(x);
    const Vector k2 = f(x + (dt / 2.0) * k1);
    const Vector k3 = f(x + (dt / 2.0) * k2);
    const Vector k4 = f(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Classical fixed-step RK4. Returns floor(T/dt)+1 states including x0.
/// A non-finite state aborts with NumericError carrying the last finite index.
inline Trajectory integrate(const DynamicsFn& f, const Vector& x0, double t0,
                            double T, double dt) {
    const long long n = detail::step_count(T, dt);
    Trajectory traj;
    traj.dt = dt;
    traj.t0 = t0;
    traj.states.reserve(static_cast<std::size_t>(n) + 1);
    traj.states.push_back(x0);
    Vector x = x0;
    for (long long i = 0; i < n; ++i) {
        x = rk4_step(f, x, dt);
        if (!all_finite(x))
            throw NumericError("integration blew up at step " + std::to_string(i + 1), i);
        traj.states.push_back(x);
    }
    return traj;
}

/// Euler-Maruyama sampling with additive isotropic noise:
///   x_{k+1} = x_k + f(x_k)*dt + sigma*sqrt(dt)*xi_k.
/// With sigma = 0 this reduces bitwise to the explicit Euler scheme.
inline Trajectory sample_em(const DynamicsFn& f, const Vector& x0, double T,
                            double dt, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ConfigError("noise sigma must be nonnegative");
    const long long n = detail::step_count(T, dt);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise_scale = sigma * std::sqrt(dt);

    Trajectory traj;
    traj.dt = dt;
    traj.t0 = 0.0;
    traj.states.reserve(static_cast<std::size_t>(n) + 1);
    traj.states.push_back(x0);
    Vector x = x0;
    const int dim = static_cast<int>(x0.size());
    for (long long i = 0; i < n; ++i) {
        x = x + f(x) * dt;
        if (sigma != 0.0) {
            for (int d = 0; d < dim; ++d) x[d] += noise_scale * normal(rng);
        }
        if (!all_finite(x))
            throw NumericError("sampling blew up at step " + std::to_string(i + 1), i);
        traj.states.push_back(x);
    }
    return traj;
}

} // namespace licds
