#pragma once

#include "licds/common.hpp"
#include "licds/integrate.hpp"
#include "licds/systems.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <utility>
#include <vector>

namespace licds {

/// Finite-difference training pairs (x_k, (x_{k+1}-x_k)/dt) harvested from
/// noisy trajectories. Pairs never straddle a trajectory boundary; every
/// surviving trajectory contributes the same number of consecutive pairs.
struct Dataset {
    std::vector<Vector> inputs;
    std::vector<Vector> targets;
    double dt = 0.0;
    int source_trajectories = 0;

    int dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
    std::size_t size() const { return inputs.size(); }
    std::size_t pairs_per_trajectory() const {
        return source_trajectories ? inputs.size() / static_cast<std::size_t>(source_trajectories) : 0;
    }
};

/// Draw n_traj initial points uniformly from x0_box and sample each
/// trajectory with Euler-Maruyama at the system's noise level. Trajectories
/// that blow up are dropped (their RNG draws stay consumed, so the survivors
/// do not depend on which ones failed).
inline std::vector<Trajectory> sample_trajectories(const SystemSpec& system, int n_traj,
                                                   int n_samples, double dt,
                                                   std::uint64_t seed,
                                                   const std::vector<Interval>& x0_box) {
    if (n_traj < 1) throw ConfigError("make_dataset needs n_traj >= 1");
    if (n_samples < 2) throw ConfigError("make_dataset needs n_samples >= 2");
    const int dim = system.dynamics.dim;
    if (static_cast<int>(x0_box.size()) != dim)
        throw ConfigError("x0 sampling box dimension mismatch");

    std::mt19937_64 rng(seed);
    std::vector<Trajectory> out;
    const double T = (n_samples - 1) * dt;
    for (int t = 0; t < n_traj; ++t) {
        Vector x0(dim);
        for (int d = 0; d < dim; ++d) {
            std::uniform_real_distribution<double> u(x0_box[d].first, x0_box[d].second);
            x0[d] = u(rng);
        }
        const std::uint64_t traj_seed = rng();
        try {
            out.push_back(sample_em(system.dynamics, x0, T, dt, system.noise_sigma, traj_seed));
        } catch (const NumericError&) {
            // dropped
        }
    }
    if (out.empty()) throw NumericError("every sampled trajectory blew up");
    return out;
}

/// Consecutive finite-difference pairs of the given trajectories; pairs
/// never straddle a trajectory boundary.
inline Dataset dataset_from_trajectories(const std::vector<Trajectory>& trajectories,
                                         double dt) {
    Dataset data;
    data.dt = dt;
    for (const auto& traj : trajectories) {
        for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
            data.inputs.push_back(traj.states[i]);
            data.targets.push_back((traj.states[i + 1] - traj.states[i]) / dt);
        }
        ++data.source_trajectories;
    }
    return data;
}

inline Dataset make_dataset(const SystemSpec& system, int n_traj, int n_samples,
                            double dt, std::uint64_t seed,
                            const std::vector<Interval>& x0_box) {
    return dataset_from_trajectories(
        sample_trajectories(system, n_traj, n_samples, dt, seed, x0_box), dt);
}

// ---------------------------------------------------------------------------
// Fully connected network, tanh hidden activations, identity output.
// ---------------------------------------------------------------------------

struct MlpModel {
    std::vector<int> layer_sizes;  // hidden widths
    std::vector<Matrix> weights;   // per layer, (out x in)
    std::vector<Vector> biases;

    int dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }

    Vector forward(const Vector& x) const {
        Vector a = x;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            a = weights[l] * a + biases[l];
            if (l + 1 < weights.size()) a = a.array().tanh().matrix();
        }
        return a;
    }

    /// d forward / d x via backpropagation, rows = outputs.
    Matrix input_jacobian(const Vector& x) const {
        std::vector<Vector> acts{x};
        Vector a = x;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            a = weights[l] * a + biases[l];
            if (l + 1 < weights.size()) a = a.array().tanh().matrix();
            acts.push_back(a);
        }
        Matrix J = weights.back();
        for (std::size_t l = weights.size() - 1; l-- > 0;) {
            const Vector& h = acts[l + 1];  // tanh activations of layer l
            J = J * (1.0 - h.array().square()).matrix().asDiagonal() * weights[l];
        }
        return J;
    }

    DynamicsFn as_dynamics() const {
        auto self = std::make_shared<MlpModel>(*this);
        return DynamicsFn{dim(), [self](const Vector& x) { return self->forward(x); }};
    }
};

/// Seeded initialization: per layer, weights row-major then biases, all
/// uniform in +-1/sqrt(fan_in).
inline MlpModel init_mlp(int dim, const std::vector<int>& hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MlpModel mlp;
    mlp.layer_sizes = hidden;
    std::vector<int> sizes{dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(dim);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l], fan_out = sizes[l + 1];
        if (fan_in < 1 || fan_out < 1) throw ConfigError("layer widths must be positive");
        const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-lim, lim);
        Matrix w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = u(rng);
        Vector b(fan_out);
        for (int r = 0; r < fan_out; ++r) b[r] = u(rng);
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(std::move(b));
    }
    return mlp;
}

struct TrainedMlp {
    MlpModel model;
    std::vector<double> epoch_loss;  // mean squared error per epoch
};

/// Minimize MSE between forward(x_k) and the finite-difference targets with
/// bias-corrected Adam steps on a search-then-converge schedule
/// (lr / (1 + epoch/500)). One mini-batch per source trajectory.
inline TrainedMlp train_mlp(const Dataset& data, const std::vector<int>& layer_sizes,
                            int epochs, double lr, std::uint64_t seed) {
    if (data.size() == 0) throw ConfigError("train_mlp needs a non-empty dataset");
    const int dim = data.dim();
    TrainedMlp out;
    out.model = init_mlp(dim, layer_sizes, seed);
    MlpModel& mlp = out.model;
    const std::size_t n_layers = mlp.weights.size();

    // Batch matrices, one per trajectory (columns = samples).
    const std::size_t per_traj = data.pairs_per_trajectory();
    const int n_batches = data.source_trajectories;
    std::vector<Matrix> bx(static_cast<std::size_t>(n_batches)), by(static_cast<std::size_t>(n_batches));
    for (int b = 0; b < n_batches; ++b) {
        Matrix X(dim, per_traj), Y(dim, per_traj);
        for (std::size_t i = 0; i < per_traj; ++i) {
            X.col(i) = data.inputs[b * per_traj + i];
            Y.col(i) = data.targets[b * per_traj + i];
        }
        bx[static_cast<std::size_t>(b)] = std::move(X);
        by[static_cast<std::size_t>(b)] = std::move(Y);
    }

    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<Matrix> mw, vw;
    std::vector<Vector> mb, vb;
    for (std::size_t l = 0; l < n_layers; ++l) {
        mw.push_back(Matrix::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
        vw.push_back(mw.back());
        mb.push_back(Vector::Zero(mlp.biases[l].size()));
        vb.push_back(mb.back());
    }

    long step = 0;
    out.epoch_loss.reserve(static_cast<std::size_t>(epochs));
    std::vector<Matrix> acts(n_layers + 1);
    for (int ep = 0; ep < epochs; ++ep) {
        // the late decay settles the steps so long runs cannot drift back up
        const double lr_ep = lr / (1.0 + static_cast<double>(ep) / 500.0);
        double epoch_loss = 0.0;
        for (int b = 0; b < n_batches; ++b) {
            const Matrix& X = bx[static_cast<std::size_t>(b)];
            const Matrix& Y = by[static_cast<std::size_t>(b)];
            acts[0] = X;
            for (std::size_t l = 0; l < n_layers; ++l) {
                Matrix z = mlp.weights[l] * acts[l];
                z.colwise() += mlp.biases[l];
                acts[l + 1] = (l + 1 < n_layers) ? z.array().tanh().matrix() : z;
            }
            const Matrix diff = acts[n_layers] - Y;
            const double denom = static_cast<double>(diff.size());
            const double loss = diff.squaredNorm() / denom;
            if (!std::isfinite(loss))
                throw NumericError("training loss became non-finite at epoch " +
                                   std::to_string(ep));
            epoch_loss += loss;

            Matrix grad = (2.0 / denom) * diff;
            ++step;
            const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t l = n_layers; l-- > 0;) {
                const Matrix gw = grad * acts[l].transpose();
                const Vector gb = grad.rowwise().sum();
                if (l > 0)
                    grad = ((mlp.weights[l].transpose() * grad).array() *
                            (1.0 - acts[l].array().square()))
                               .matrix();
                mw[l] = (beta1 * mw[l].array() + (1.0 - beta1) * gw.array()).matrix();
                mb[l] = (beta1 * mb[l].array() + (1.0 - beta1) * gb.array()).matrix();
                vw[l] = (beta2 * vw[l].array() + (1.0 - beta2) * gw.array().square()).matrix();
                vb[l] = (beta2 * vb[l].array() + (1.0 - beta2) * gb.array().square()).matrix();
                mlp.weights[l].array() -= lr_ep * (mw[l].array() / corr1) /
                                          ((vw[l].array() / corr2).sqrt() + eps);
                mlp.biases[l].array() -= lr_ep * (mb[l].array() / corr1) /
                                         ((vb[l].array() / corr2).sqrt() + eps);
            }
        }
        out.epoch_loss.push_back(epoch_loss / n_batches);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vanilla dense GP regressor, squared-exponential kernel, zero prior mean,
// one independent GP per output dimension.
// ---------------------------------------------------------------------------

struct GpModel {
    std::vector<Vector> train_inputs;
    std::vector<Vector> train_targets;
    double lengthscale = 1.0;
    double signal_var = 1.0;
    double noise_var = 1e-2;
    double jitter = 0.0;  // escalated 0 -> 1e-6 -> 1e-4 until the solve succeeds
    Matrix alpha;         // (K + (noise+jitter) I)^{-1} Y, n_train x dim

    int dim() const { return train_inputs.empty() ? 0 : static_cast<int>(train_inputs.front().size()); }

    double kernel(const Vector& a, const Vector& b) const {
        return signal_var * std::exp(-(a - b).squaredNorm() / (2.0 * lengthscale * lengthscale));
    }

    Vector posterior_mean(const Vector& x) const {
        const auto n = train_inputs.size();
        Vector kx(n);
        for (std::size_t i = 0; i < n; ++i) kx[i] = kernel(x, train_inputs[i]);
        return alpha.transpose() * kx;
    }

    /// Analytic gradient of the posterior mean, rows = output dims.
    Matrix input_jacobian(const Vector& x) const {
        const auto n = train_inputs.size();
        const double inv_l2 = 1.0 / (lengthscale * lengthscale);
        Matrix J = Matrix::Zero(dim(), dim());
        for (std::size_t i = 0; i < n; ++i) {
            const double kx = kernel(x, train_inputs[i]);
            J += (alpha.row(i).transpose() * ((train_inputs[i] - x) * kx * inv_l2).transpose());
        }
        return J;
    }

    DynamicsFn as_dynamics() const {
        auto self = std::make_shared<GpModel>(*this);
        return DynamicsFn{dim(), [self](const Vector& x) { return self->posterior_mean(x); }};
    }
};

namespace detail {

/// Returns alpha and the log marginal likelihood (summed over output dims),
/// escalating jitter once before giving up.
inline std::pair<Matrix, double> gp_solve(const std::vector<Vector>& X,
                                          const std::vector<Vector>& Y, double ls,
                                          double sv, double nv, double& jitter_used) {
    const auto n = X.size();
    const int dim = static_cast<int>(X.front().size());
    Matrix K(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double k = sv * std::exp(-(X[i] - X[j]).squaredNorm() / (2.0 * ls * ls));
            K(i, j) = k;
            K(j, i) = k;
        }
    Matrix Ym(n, dim);
    for (std::size_t i = 0; i < n; ++i) Ym.row(i) = Y[i].transpose();

    for (double jitter : {0.0, 1e-6, 1e-4}) {
        Matrix Kn = K;
        Kn.diagonal().array() += nv + jitter;
        Eigen::LLT<Matrix> llt(Kn);
        if (llt.info() != Eigen::Success) continue;
        const Matrix alpha = llt.solve(Ym);
        double log_det = 0.0;
        for (std::size_t i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
        const double two_pi = 2.0 * 3.14159265358979323846;
        double lml = 0.0;
        for (int d = 0; d < dim; ++d)
            lml += -0.5 * Ym.col(d).dot(alpha.col(d)) - log_det -
                   0.5 * static_cast<double>(n) * std::log(two_pi);
        jitter_used = jitter;
        return {alpha, lml};
    }
    throw NumericError("GP kernel matrix factorization failed even with escalated jitter");
}

} // namespace detail

/// Fit the dense GP. With grid_search the three hyperparameters are scanned
/// over a 3x3x3 log-grid (factors 0.3, 1, 3 around the supplied values) and
/// the marginal likelihood decides; ties keep the earlier grid point.
inline GpModel fit_gp(const Dataset& data, double lengthscale = 1.0,
                      double signal_var = 1.0, double noise_var = 1e-2,
                      bool grid_search = false) {
    if (data.size() == 0) throw ConfigError("fit_gp needs a non-empty dataset");
    if (data.size() > 2000)
        throw ConfigError("fit_gp is a dense solve, capped at 2000 points");
    GpModel gp;
    gp.train_inputs = data.inputs;
    gp.train_targets = data.targets;

    if (!grid_search) {
        gp.lengthscale = lengthscale;
        gp.signal_var = signal_var;
        gp.noise_var = noise_var;
        gp.alpha = detail::gp_solve(gp.train_inputs, gp.train_targets, lengthscale,
                                    signal_var, noise_var, gp.jitter)
                       .first;
        return gp;
    }

    const double factors[] = {0.3, 1.0, 3.0};
    double best_lml = -std::numeric_limits<double>::infinity();
    for (double fl : factors)
        for (double fs : factors)
            for (double fn : factors) {
                const double ls = lengthscale * fl, sv = signal_var * fs, nv = noise_var * fn;
                double jitter = 1e-6;
                try {
                    auto [alpha, lml] =
                        detail::gp_solve(gp.train_inputs, gp.train_targets, ls, sv, nv, jitter);
                    if (lml > best_lml) {
                        best_lml = lml;
                        gp.lengthscale = ls;
                        gp.signal_var = sv;
                        gp.noise_var = nv;
                        gp.jitter = jitter;
                        gp.alpha = std::move(alpha);
                    }
                } catch (const NumericError&) {
                    // grid point rejected
                }
            }
    if (gp.alpha.size() == 0)
        throw NumericError("no GP hyperparameter grid point factorized");
    return gp;
}

} // namespace licds
