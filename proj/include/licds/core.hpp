#pragma once

#include "licds/common.hpp"
#include "licds/integrate.hpp"
#include "licds/local_model.hpp"
#include "licds/parallel.hpp"
#include "licds/systems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace licds {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Search configuration. `lambda` empty means "calibrate automatically"
/// (see calibrate_lambda); `resolved_lambda()` is only valid afterwards.
struct LicdsParams {
    double T_global = 0.0;
    double dt = 0.0;
    std::optional<double> lambda;  // empty = auto
    int k_max = 1;
    int m_max = 1;

    void validate() const {
        if (!(T_global > 0.0) || !(dt > 0.0))
            throw ConfigError("T_global and dt must be positive");
        if (k_max < 1 || m_max < 1)
            throw ConfigError("k_max and m_max must be >= 1");
        if (std::llround(T_global / dt) < m_max)
            throw ConfigError("T_global/dt must be >= m_max so every partition holds a step");
        if (lambda && !(*lambda > 0.0))
            throw ConfigError("lambda must be positive (or auto)");
    }
    double resolved_lambda() const {
        if (!lambda) throw ConfigError("lambda has not been resolved yet");
        return *lambda;
    }
};

/// Outcome of local model selection on one window.
struct PartitionResult {
    int index = 0;        // 1-based window index j
    int k_star = 0;       // selected complexity (Taylor degree levels)
    double L_star = 0.0;  // lambda*k_star + integrated rollout error
    LocalModel model;
    Vector restart_state;     // truth sample at the window start
    Trajectory local_states;  // rollout of the local model over the window
};

/// Full search outcome: optimal partition count plus the whole cost curve.
struct LicdsResult {
    int m_star = 0;
    double L_total_star = 0.0;
    int k_total_star = 0;
    std::vector<PartitionResult> partitions;
    std::vector<double> cost_curve;  // cost_curve[m-1] = L_total(m)
    std::vector<int> k_total_curve;  // k_total_curve[m-1] = sum of k_star at m
    Trajectory approx_states;
    LicdsParams params;  // resolved configuration (lambda concrete)
};

namespace detail {

/// Split grid [0, N] into m index windows, boundaries snapped to the grid.
inline std::vector<std::pair<std::size_t, std::size_t>> partition_indices(
    std::size_t n_steps, int m) {
    std::vector<std::pair<std::size_t, std::size_t>> windows;
    windows.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const auto a = static_cast<std::size_t>(
            std::llround(static_cast<double>(i) * static_cast<double>(n_steps) / m));
        const auto b = static_cast<std::size_t>(
            std::llround(static_cast<double>(i + 1) * static_cast<double>(n_steps) / m));
        windows.emplace_back(a, b);
    }
    return windows;
}

inline double trapezoid_window_error(const Trajectory& rollout, const Trajectory& truth,
                                     std::size_t first, std::size_t last) {
    double acc = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
        const double d = (rollout.states[i - first] - truth.states[i]).norm();
        acc += (i == first || i == last) ? 0.5 * d : d;
    }
    return acc * truth.dt;
}

inline std::size_t checked_grid_steps(const Trajectory& truth, const LicdsParams& p) {
    const auto n = static_cast<std::size_t>(std::llround(p.T_global / p.dt));
    if (truth.size() < n + 1)
        throw ConfigError("truth trajectory does not cover [0, T_global]");
    if (std::abs(truth.dt - p.dt) > 1e-12 * std::max(1.0, std::abs(p.dt)))
        throw ConfigError("truth trajectory grid does not match params.dt");
    return n;
}

} // namespace detail

struct LocalCost {
    double L = kInf;
    LocalModel model;
    Trajectory rollout;
};

/// Cost of describing truth[first..last] with a complexity-k local model:
///   L = lambda*k + trapezoid integral of ||rollout - truth|| over the window.
/// The model is the full Taylor polynomial with k degree levels (degree k-1)
/// around the window's restart state. A diverging rollout yields L = +inf
/// (a rejected candidate, not a failure).
inline LocalCost local_cost_window(const DynamicsFn& f, const Trajectory& truth,
                                   std::size_t first, std::size_t last, int k,
                                   double lambda) {
    LocalCost out;
    const Vector& x0 = truth.states[first];
    out.model = taylor_fit(f, x0, taylor_terms(f.dim, k));
    const double T_window = static_cast<double>(last - first) * truth.dt;
    try {
        out.rollout = integrate(out.model.as_dynamics(), x0, truth.time(first),
                                T_window, truth.dt);
    } catch (const NumericError&) {
        out.L = kInf;
        return out;
    }
    out.L = lambda * k + detail::trapezoid_window_error(out.rollout, truth, first, last);
    return out;
}

/// Time-window variant: [t_start, t_stop] must align with the truth grid.
inline LocalCost local_cost(const DynamicsFn& f, const Trajectory& truth,
                            double t_start, double t_stop, const Vector& x0,
                            int k, double lambda) {
    const auto first = static_cast<std::size_t>(std::llround((t_start - truth.t0) / truth.dt));
    const auto last = static_cast<std::size_t>(std::llround((t_stop - truth.t0) / truth.dt));
    if (last <= first || last >= truth.size())
        throw ConfigError("window [t_start, t_stop] does not fit the truth grid");
    if ((truth.states[first] - x0).norm() > 1e-9)
        throw ConfigError("x0 must equal the truth sample at t_start");
    return local_cost_window(f, truth, first, last, k, lambda);
}

/// Local Model Selection over an index window: evaluate k = 1..k_max and
/// keep the minimizer (smallest k on exact ties).
inline PartitionResult lms_window(const DynamicsFn& f, const Trajectory& truth,
                                  std::size_t first, std::size_t last, int window_index,
                                  double lambda, int k_max) {
    PartitionResult best;
    best.index = window_index;
    best.L_star = kInf;
    for (int k = 1; k <= k_max; ++k) {
        LocalCost cand = local_cost_window(f, truth, first, last, k, lambda);
        if (cand.L < best.L_star) {
            best.L_star = cand.L;
            best.k_star = k;
            best.model = std::move(cand.model);
            best.local_states = std::move(cand.rollout);
        }
    }
    if (!(best.L_star < kInf))
        throw NumericError("every local model candidate diverged in window " +
                           std::to_string(window_index));
    best.restart_state = truth.states[first];
    return best;
}

/// Spec-facing LMS: window i (1-based) of length T_local on the truth grid.
inline PartitionResult lms(const DynamicsFn& f, const Trajectory& truth,
                           int window_index, double T_local, double lambda,
                           const Vector& x0, int k_max) {
    const auto first = static_cast<std::size_t>(
        std::llround((window_index - 1) * T_local / truth.dt));
    const auto last = static_cast<std::size_t>(
        std::llround(window_index * T_local / truth.dt));
    if (last <= first || last >= truth.size())
        throw ConfigError("LMS window does not fit the truth grid");
    if ((truth.states[first] - x0).norm() > 1e-9)
        throw ConfigError("x0 must equal the truth sample at the window start");
    return lms_window(f, truth, first, last, window_index, lambda, k_max);
}

/// Integral error term of the whole-horizon constant model, divided by
/// k_max: makes the two cost terms comparable by construction.
inline double calibrate_lambda(const DynamicsFn& f, const Trajectory& truth,
                               const LicdsParams& params) {
    params.validate();
    const std::size_t n = detail::checked_grid_steps(truth, params);
    const LocalCost base = local_cost_window(f, truth, 0, n, 1, 0.0);
    if (!std::isfinite(base.L))
        throw NumericError("constant-model error is non-finite; cannot calibrate lambda");
    return std::max(base.L / params.k_max, 1e-12);
}

/// Full search (Alg. "computing the efficient code"): for every partition
/// count m, run LMS on each of the m equal windows (each restarting from
/// the exact truth sample at its start) and keep the m with the lowest
/// total cost, smallest m on ties.
inline LicdsResult search(const DynamicsFn& f, const Trajectory& truth,
                         const LicdsParams& params) {
    params.validate();
    LicdsParams resolved = params;
    if (!resolved.lambda) resolved.lambda = calibrate_lambda(f, truth, params);
    const double lambda = resolved.resolved_lambda();
    const std::size_t n = detail::checked_grid_steps(truth, resolved);

    struct PerM {
        double total = kInf;
        std::vector<PartitionResult> parts;
    };
    std::vector<PerM> by_m(static_cast<std::size_t>(resolved.m_max));

    parallel_for_indexed(static_cast<std::size_t>(resolved.m_max), [&](std::size_t mi) {
        const int m = static_cast<int>(mi) + 1;
        PerM out;
        out.parts.reserve(static_cast<std::size_t>(m));
        double total = 0.0;
        try {
            const auto windows = detail::partition_indices(n, m);
            for (int i = 0; i < m; ++i) {
                out.parts.push_back(lms_window(f, truth, windows[i].first,
                                               windows[i].second, i + 1, lambda,
                                               resolved.k_max));
                total += out.parts.back().L_star;
            }
            out.total = total;
        } catch (const NumericError&) {
            out.total = kInf;
            out.parts.clear();
        }
        by_m[mi] = std::move(out);
    });

    LicdsResult result;
    result.params = resolved;
    result.cost_curve.resize(static_cast<std::size_t>(resolved.m_max));
    result.k_total_curve.assign(static_cast<std::size_t>(resolved.m_max), 0);
    int best_m = 0;
    for (int m = 1; m <= resolved.m_max; ++m) {
        result.cost_curve[m - 1] = by_m[m - 1].total;
        for (const auto& p : by_m[m - 1].parts)
            result.k_total_curve[m - 1] += p.k_star;
        if (by_m[m - 1].total < (best_m == 0 ? kInf : by_m[best_m - 1].total))
            best_m = m;
    }
    if (best_m == 0)
        throw NumericError("all partition counts failed");

    result.m_star = best_m;
    result.L_total_star = by_m[best_m - 1].total;
    result.partitions = std::move(by_m[best_m - 1].parts);
    result.k_total_star = 0;
    for (const auto& p : result.partitions) result.k_total_star += p.k_star;

    // Assemble the approximate trajectory on the full grid. Boundary samples
    // belong to the later window, so they carry the (exact) restart states.
    result.approx_states.dt = truth.dt;
    result.approx_states.t0 = truth.t0;
    result.approx_states.states.assign(n + 1, Vector());
    const auto windows = detail::partition_indices(n, result.m_star);
    for (int i = result.m_star - 1; i >= 0; --i) {
        const auto& [first, last] = windows[static_cast<std::size_t>(i)];
        const auto& roll = result.partitions[static_cast<std::size_t>(i)].local_states;
        for (std::size_t j = first; j <= last; ++j) {
            if (result.approx_states.states[j].size() == 0)
                result.approx_states.states[j] = roll.states[j - first];
        }
    }
    return result;
}

/// Random polynomial field (degree <= 3, coefficients in [-0.3, 0.3]) with a
/// contracting linear part, so trajectories from the unit box stay tame over
/// short horizons. Used by the theorem verification suites.
inline DynamicsFn random_smooth_field(int dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> small(-0.3, 0.3);
    std::uniform_real_distribution<double> damp(0.5, 1.5);
    LocalModel poly;
    poly.working_point = Vector::Zero(dim);
    poly.basis = MonomialBasis::graded_lex(dim, taylor_terms(dim, 4));
    poly.coeffs = Matrix::Zero(dim, poly.basis.size());
    for (int d = 0; d < dim; ++d)
        for (int c = 0; c < poly.basis.size(); ++c) poly.coeffs(d, c) = small(rng);
    for (int d = 0; d < dim; ++d) poly.coeffs(d, 1 + d) -= damp(rng);
    return poly.as_dynamics();
}

struct TheoremOneCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

/// Numerical instantiation of the state-vs-dynamics L2 bound
///   ||x - x_hat||_{L2}^2 <= T^2 ||f(x(.)) - f_hat(x(.))||_{L2}^2
/// with both fields evaluated along the true trajectory.
inline TheoremOneCheck check_theorem1(const DynamicsFn& f, const DynamicsFn& f_hat,
                                      const Vector& x0, double T, double dt) {
    const Trajectory x = integrate(f, x0, 0.0, T, dt);
    const Trajectory x_hat = integrate(f_hat, x0, 0.0, T, dt);
    double lhs = 0.0, dyn = 0.0;
    const std::size_t n = x.size() - 1;
    for (std::size_t i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        lhs += w * (x.states[i] - x_hat.states[i]).squaredNorm();
        dyn += w * (f(x.states[i]) - f_hat(x.states[i])).squaredNorm();
    }
    lhs *= dt;
    dyn *= dt;
    TheoremOneCheck out;
    out.lhs = lhs;
    out.rhs = T * T * dyn;
    out.holds = lhs <= out.rhs * (1.0 + 1e-6) + 1e-12;
    return out;
}

struct TheoremTwoCheck {
    double dyn_l1 = 0.0;    // ||f(x(.)) - f_hat(x(.))||_{L1}
    double state_l1 = 0.0;  // ||x(.) - x_hat(.)||_{L1}
};

/// L1 distances between dynamics (along the true trajectory) and states.
/// The bounding constant is not computable, so both norms are reported
/// and the caller inspects their ratio across a perturbation family.
inline TheoremTwoCheck check_theorem2(const DynamicsFn& f, const DynamicsFn& f_hat,
                                      const Vector& x0, double T, double dt) {
    const Trajectory x = integrate(f, x0, 0.0, T, dt);
    const Trajectory x_hat = integrate(f_hat, x0, 0.0, T, dt);
    TheoremTwoCheck out;
    const std::size_t n = x.size() - 1;
    for (std::size_t i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        out.dyn_l1 += w * (f(x.states[i]) - f_hat(x.states[i])).norm();
        out.state_l1 += w * (x.states[i] - x_hat.states[i]).norm();
    }
    out.dyn_l1 *= dt;
    out.state_l1 *= dt;
    return out;
}

struct ModelScore {
    double L_mean = kInf;
    std::vector<LicdsResult> per_point;
};

/// Score a candidate against pre-built truth trajectories: one search per
/// trajectory, local models always fitted from f_hat. Failing trajectories
/// are excluded; the mean is computed over sorted values so it does not
/// depend on the input order.
inline ModelScore score_model_against(const DynamicsFn& f_hat,
                                      const std::vector<Trajectory>& truths,
                                      const LicdsParams& params) {
    if (truths.empty()) throw ConfigError("score_model needs at least one trajectory");
    params.validate();

    std::vector<std::optional<LicdsResult>> results(truths.size());
    parallel_for_indexed(truths.size(), [&](std::size_t i) {
        try {
            results[i] = search(f_hat, truths[i], params);
        } catch (const NumericError&) {
            results[i] = std::nullopt;
        }
    });

    ModelScore out;
    std::vector<double> scores;
    for (auto& r : results) {
        if (!r) continue;
        scores.push_back(r->L_total_star);
        out.per_point.push_back(std::move(*r));
    }
    if (scores.empty())
        throw NumericError("all trajectories failed while scoring the model");
    std::sort(scores.begin(), scores.end());
    double sum = 0.0;
    for (double s : scores) sum += s;
    out.L_mean = sum / static_cast<double>(scores.size());
    return out;
}

/// Score a candidate on its own rollouts: the truth for each init point is
/// the candidate's trajectory, so the score measures how compactly the
/// candidate describes itself.
inline ModelScore score_model(const DynamicsFn& f_hat,
                              const std::vector<Vector>& init_points,
                              const LicdsParams& params) {
    if (init_points.empty()) throw ConfigError("score_model needs at least one init point");
    params.validate();
    std::vector<Trajectory> truths;
    for (std::size_t i = 0; i < init_points.size(); ++i) {
        try {
            truths.push_back(
                integrate(f_hat, init_points[i], 0.0, params.T_global, params.dt));
        } catch (const NumericError&) {
            // point excluded
        }
    }
    if (truths.empty())
        throw NumericError("all init points failed while scoring the model");
    return score_model_against(f_hat, truths, params);
}

namespace detail {

template <class ScoreFn>
std::vector<std::pair<std::string, double>> rank_by(
    const std::vector<std::pair<std::string, DynamicsFn>>& candidates, ScoreFn&& score) {
    if (candidates.size() < 2) throw ConfigError("rank_models needs at least two candidates");
    std::vector<std::pair<std::string, double>> out(candidates.size());
    parallel_for_indexed(candidates.size(), [&](std::size_t i) {
        out[i] = {candidates[i].first, score(candidates[i].second)};
    });
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    return out;
}

} // namespace detail

/// Rank candidates by their self-description score, ascending; ties break
/// by name for determinism.
inline std::vector<std::pair<std::string, double>> rank_models(
    const std::vector<std::pair<std::string, DynamicsFn>>& candidates,
    const std::vector<Vector>& init_points, const LicdsParams& params) {
    return detail::rank_by(candidates, [&](const DynamicsFn& f) {
        return score_model(f, init_points, params).L_mean;
    });
}

/// Rank candidates against shared truth trajectories (observed data or
/// rollouts of a reference system): every candidate encodes the same
/// sequences, so the score directly reflects closeness to that truth.
inline std::vector<std::pair<std::string, double>> rank_models_against(
    const std::vector<std::pair<std::string, DynamicsFn>>& candidates,
    const std::vector<Trajectory>& truths, const LicdsParams& params) {
    return detail::rank_by(candidates, [&](const DynamicsFn& f) {
        return score_model_against(f, truths, params).L_mean;
    });
}

} // namespace licds
