#pragma once

#include "licds/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace licds {

/// An evaluatable vector field f: R^n -> R^n. Evaluation must be pure:
/// the same input always yields the same output.
struct DynamicsFn {
    int dim = 0;
    std::function<Vector(const Vector&)> fn;

    Vector eval(const Vector& x) const { return fn(x); }
    Vector operator()(const Vector& x) const { return fn(x); }
};

using Interval = std::pair<double, double>;

/// A registered benchmark system: dynamics plus the metadata needed by
/// sampling (noise intensity) and by the codec (per-component bounds).
struct SystemSpec {
    std::string name;
    DynamicsFn dynamics;
    Vector default_x0;
    double noise_sigma = 0.0;
    std::vector<Interval> domain_bounds;
};

/// Quadrotor inertias are not fixed by the benchmark definition; they
/// default to 1 and can be overridden here.
struct QuadrotorConfig {
    double ix = 1.0;
    double iy = 1.0;
    double iz = 1.0;
};

namespace detail {

inline Vector vec1(double a) {
    Vector v(1);
    v << a;
    return v;
}

inline std::vector<Interval> box(int dim, double lo, double hi) {
    return std::vector<Interval>(static_cast<std::size_t>(dim), Interval{lo, hi});
}

inline DynamicsFn scalar_field(const std::function<double(double)>& g) {
    return DynamicsFn{1, [g](const Vector& x) { return vec1(g(x[0])); }};
}

inline DynamicsFn quadrotor_dynamics(const QuadrotorConfig& cfg) {
    // State: [phi, theta, p, q, r, u, v, w].
    // Wind forces [1,1,1], time-varying disturbance 0, wind torques [1,1,1],
    // control torques [1,1,1], mass 1, g = 9.81.
    const double ix = cfg.ix, iy = cfg.iy, iz = cfg.iz;
    return DynamicsFn{8, [ix, iy, iz](const Vector& x) {
        const double phi = x[0], th = x[1];
        const double p = x[2], q = x[3], r = x[4];
        const double u = x[5], v = x[6], w = x[7];
        const double g = 9.81, m = 1.0;
        const double fwx = 1.0, fwy = 1.0, fwz = 1.0, ft = 0.0;
        const double twx = 1.0, twy = 1.0, twz = 1.0;
        const double tx = 1.0, ty = 1.0, tz = 1.0;
        Vector dx(8);
        dx[0] = p + r * std::cos(phi) * std::tan(th) + q * std::sin(phi) * std::tan(th);
        dx[1] = q * std::cos(th) - r * std::sin(phi);
        dx[2] = (iy - iz) / ix * r * q + (tx + twx) / ix;
        dx[3] = (iz - ix) / iy * p * r + (ty + twy) / iy;
        dx[4] = (ix - iy) / iz * p * q + (tz + twz) / iz;
        dx[5] = r * v - q * w - g * std::sin(th) + fwx / m;
        dx[6] = p * w - r * u + g * std::sin(phi) * std::cos(th) + fwy / m;
        dx[7] = q * u - p * v + g * std::cos(th) * std::cos(phi) + (fwz - ft) / m;
        return dx;
    }};
}

} // namespace detail

inline std::vector<std::string> system_names() {
    return {"tanh", "sat",     "tanh_lin", "rational",  "tanh_sin",
            "tanh_sin5", "pendulum", "lorenz",   "quadrotor"};
}

/// Look up a benchmark system by name. Unknown names raise ConfigError
/// listing the valid identifiers.
inline SystemSpec get_system(const std::string& name,
                             const QuadrotorConfig& quad_cfg = {}) {
    using detail::box;
    using detail::scalar_field;
    using detail::vec1;

    SystemSpec spec;
    spec.name = name;
    spec.noise_sigma = 0.01;

    if (name == "tanh") {
        spec.dynamics = scalar_field([](double x) { return -std::tanh(x); });
        spec.default_x0 = vec1(2.0);
        spec.domain_bounds = box(1, -10.0, 10.0);
    } else if (name == "sat") {
        spec.dynamics = scalar_field(
            [](double x) { return -std::clamp(x, -1.0, 1.0); });
        spec.default_x0 = vec1(2.0);
        spec.domain_bounds = box(1, -10.0, 10.0);
    } else if (name == "tanh_lin") {
        spec.dynamics =
            scalar_field([](double x) { return -std::tanh(x) + 0.5 * x; });
        spec.default_x0 = vec1(2.0);
        spec.domain_bounds = box(1, -10.0, 10.0);
    } else if (name == "rational") {
        spec.dynamics =
            scalar_field([](double x) { return -x / (1.0 + x * x); });
        spec.default_x0 = vec1(2.0);
        spec.domain_bounds = box(1, -10.0, 10.0);
    } else if (name == "tanh_sin") {
        spec.dynamics = scalar_field(
            [](double x) { return -std::tanh(x) + 0.5 * std::sin(x); });
        spec.default_x0 = vec1(2.0);
        spec.domain_bounds = box(1, -10.0, 10.0);
    } else if (name == "tanh_sin5") {
        spec.dynamics = scalar_field(
            [](double x) { return -std::tanh(x) + 0.1 * std::sin(5.0 * x); });
        spec.default_x0 = vec1(2.0);
        spec.domain_bounds = box(1, -10.0, 10.0);
    } else if (name == "pendulum") {
        spec.dynamics = DynamicsFn{2, [](const Vector& x) {
            Vector dx(2);
            dx[0] = x[1];
            dx[1] = -x[1] - 9.81 * std::sin(x[0]);
            return dx;
        }};
        spec.default_x0 = Vector(2);
        spec.default_x0 << 3.0, 0.0;
        spec.domain_bounds = box(2, -10.0, 10.0);
    } else if (name == "lorenz") {
        spec.dynamics = DynamicsFn{3, [](const Vector& x) {
            const double sigma = 10.0, beta = 8.0 / 3.0, rho = 28.0;
            Vector dx(3);
            dx[0] = sigma * (x[1] - x[0]);
            dx[1] = x[0] * (rho - x[2]) - x[1];
            dx[2] = x[0] * x[1] - beta * x[2];
            return dx;
        }};
        spec.default_x0 = Vector(3);
        spec.default_x0 << 1.0, 1.0, 1.0;
        spec.domain_bounds = box(3, -10.0, 10.0);
    } else if (name == "quadrotor") {
        spec.dynamics = detail::quadrotor_dynamics(quad_cfg);
        spec.default_x0 = Vector(8);
        spec.default_x0 << -2.0, -3.0, 1.0, 3.0, 1.0, 4.0, 2.0, 1.0;
        spec.noise_sigma = 0.0;
        spec.domain_bounds = box(8, -10.0, 10.0);
        const double pi = 3.14159265358979323846;
        spec.domain_bounds[0] = {-pi, pi};
        spec.domain_bounds[1] = {-pi, pi};
    } else {
        std::string valid;
        for (const auto& n : system_names()) {
            if (!valid.empty()) valid += ", ";
            valid += n;
        }
        throw ConfigError("unknown system '" + name + "' (valid: " + valid + ")");
    }
    return spec;
}

} // namespace licds
