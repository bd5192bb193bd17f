// Command-line front end: simulate trajectories, run the local encoding
// search, learn dynamics models, rank them, verify the theorem bounds,
// and pack/unpack bit messages. All outputs are plot-ready CSV/JSON.

#include "licds/licds.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using licds::Json;
using licds::Vector;

Vector parse_vector(const std::string& csv) {
    std::vector<double> vals;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.empty()) throw licds::ConfigError("empty vector argument");
    return Eigen::Map<const Vector>(vals.data(), static_cast<int>(vals.size()));
}

std::vector<int> parse_arch(const std::string& csv) {
    std::vector<int> vals;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stoi(cell));
    if (vals.empty()) throw licds::ConfigError("empty architecture list");
    return vals;
}

/// Box flag: either "lo,hi" applied to every component or a per-component
/// "lo1,hi1,lo2,hi2,..." list.
std::vector<licds::Interval> parse_box(const std::string& csv, int dim) {
    std::vector<double> vals;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    std::vector<licds::Interval> box;
    if (vals.size() == 2) {
        box.assign(static_cast<std::size_t>(dim), {vals[0], vals[1]});
    } else if (vals.size() == static_cast<std::size_t>(2 * dim)) {
        for (int d = 0; d < dim; ++d) box.emplace_back(vals[2 * d], vals[2 * d + 1]);
    } else {
        throw licds::ConfigError("box must be 'lo,hi' or a per-component lo,hi list");
    }
    for (const auto& [lo, hi] : box)
        if (!(hi > lo)) throw licds::ConfigError("box bounds must satisfy hi > lo");
    return box;
}

std::optional<double> parse_lambda(const std::string& s) {
    if (s == "auto") return std::nullopt;
    const double v = std::stod(s);
    if (!(v > 0.0)) throw licds::ConfigError("lambda must be positive or 'auto'");
    return v;
}

void write_or_print(const std::string& path, const Json& j) {
    if (path.empty() || path == "-")
        std::cout << j.dump(2) << "\n";
    else
        licds::write_json(path, j);
}

/// Resolve the dynamics to operate on: a builtin system or a model file.
licds::DynamicsFn resolve_dynamics(const std::string& system, const std::string& model,
                                   licds::SystemSpec* spec_out = nullptr) {
    if (!system.empty() && !model.empty())
        throw licds::ConfigError("give either --system or --model, not both");
    if (!system.empty()) {
        auto spec = licds::get_system(system);
        if (spec_out) *spec_out = spec;
        return spec.dynamics;
    }
    if (!model.empty()) return licds::load_model(model);
    throw licds::ConfigError("one of --system or --model is required");
}

Json params_json(const licds::LicdsParams& p) { return licds::to_json(p); }

// --- subcommands ------------------------------------------------------------

int cmd_simulate(const std::string& system, const std::string& model, std::string x0_csv,
                 double t0, double T, double dt, double sigma, std::uint64_t seed,
                 const std::string& out) {
    licds::SystemSpec spec;
    auto f = resolve_dynamics(system, model, &spec);
    Vector x0 = x0_csv.empty() ? spec.default_x0 : parse_vector(x0_csv);
    if (x0.size() == 0) throw licds::ConfigError("--x0 is required for model files");
    if (x0.size() != f.dim) throw licds::ConfigError("--x0 dimension mismatch");

    licds::Trajectory traj = sigma > 0.0 ? licds::sample_em(f, x0, T, dt, sigma, seed)
                                         : licds::integrate(f, x0, t0, T, dt);
    Json config{{"command", "simulate"}, {"system", system}, {"model", model},
                {"T", T}, {"dt", dt}, {"sigma", sigma}, {"seed", seed}};
    if (out.empty() || out == "-")
        licds::write_trajectory_csv(std::cout, traj, config);
    else
        licds::write_trajectory_csv(out, traj, config);
    return 0;
}

int cmd_encode(const std::string& system, const std::string& model,
               const std::string& truth_csv, std::string x0_csv, double T, double dt,
               const std::string& lambda_s, int k_max, int m_max, const std::string& out,
               const std::string& curve_out, const std::string& approx_out,
               const std::string& message_out, int state_bits, int coeff_bits,
               double coeff_bound, bool emit_bits) {
    licds::SystemSpec spec;
    auto f = resolve_dynamics(system, model, &spec);
    Vector x0 = x0_csv.empty() ? spec.default_x0 : parse_vector(x0_csv);

    licds::LicdsParams params;
    params.T_global = T;
    params.dt = dt;
    params.lambda = parse_lambda(lambda_s);
    params.k_max = k_max;
    params.m_max = m_max;
    params.validate();

    licds::Trajectory truth;
    if (!truth_csv.empty()) {
        truth = licds::read_trajectory_csv(truth_csv);
    } else {
        if (x0.size() != f.dim) throw licds::ConfigError("--x0 dimension mismatch");
        truth = licds::integrate(f, x0, 0.0, T, dt);
    }

    const licds::LicdsResult result = licds::search(f, truth, params);

    Json rj = licds::to_json(result);
    rj["config"]["command"] = "encode";
    rj["config"]["system"] = system;
    rj["config"]["model"] = model;

    if (!curve_out.empty()) {
        std::ofstream os(curve_out);
        if (!os) throw licds::IoError("cannot open '" + curve_out + "'");
        os << "m,L_total,k_total\n";
        for (int m = 1; m <= params.m_max; ++m)
            os << m << "," << licds::format_full(result.cost_curve[m - 1]) << ","
               << result.k_total_curve[m - 1] << "\n";
        os << "# config: " << rj["config"].dump() << "\n";
    }
    if (!approx_out.empty())
        licds::write_trajectory_csv(approx_out, result.approx_states, rj["config"]);

    if (!message_out.empty() || emit_bits) {
        licds::QuantizationSpec qspec;
        qspec.state_bits = state_bits;
        qspec.coeff_bits = coeff_bits;
        qspec.coeff_bound = coeff_bound;
        qspec.state_bounds = !system.empty()
                                 ? spec.domain_bounds
                                 : std::vector<licds::Interval>(
                                       static_cast<std::size_t>(f.dim), {-10.0, 10.0});
        const licds::EncodedMessage msg = licds::encode(result, qspec);
        if (!message_out.empty()) licds::write_bytes(message_out, msg.to_bytes());
        const licds::BitAccounting acc = msg.accounting(params.k_max);
        Json bits{{"selected_bits", acc.selected_bits},
                  {"kmax_bits", acc.kmax_bits},
                  {"header_bits", acc.header_bits},
                  {"file_bits", acc.file_bits},
                  {"per_partition_bits", acc.per_partition_bits},
                  {"raw_bits_per_sample", static_cast<std::uint64_t>(f.dim) * state_bits},
                  {"clamped_values", msg.clamped_values}};
        rj["bits"] = bits;
        if (emit_bits) std::cout << bits.dump(2) << "\n";
    }
    write_or_print(out, rj);
    return 0;
}

int cmd_learn(const std::string& system, const std::string& arch_csv, bool gp,
              bool gp_grid, double lengthscale, double signal_var, double noise_var,
              int n_traj, int n_samples, double dt, double sigma_override,
              std::uint64_t seed, const std::string& box_csv, int epochs, double lr,
              const std::string& out, const std::string& loss_out) {
    licds::SystemSpec spec = licds::get_system(system);
    if (sigma_override >= 0.0) spec.noise_sigma = sigma_override;
    const auto box = box_csv.empty()
                         ? std::vector<licds::Interval>(
                               static_cast<std::size_t>(spec.dynamics.dim), {-2.0, 2.0})
                         : parse_box(box_csv, spec.dynamics.dim);
    const licds::Dataset data =
        licds::make_dataset(spec, n_traj, n_samples, dt, seed, box);

    Json config{{"command", "learn"},   {"system", system},       {"n_traj", n_traj},
                {"n_samples", n_samples}, {"dt", dt},             {"sigma", spec.noise_sigma},
                {"seed", seed},         {"dataset_pairs", data.size()}};

    Json mj;
    if (gp) {
        const licds::GpModel model =
            licds::fit_gp(data, lengthscale, signal_var, noise_var, gp_grid);
        mj = licds::to_json(model);
    } else {
        if (arch_csv.empty()) throw licds::ConfigError("--arch or --gp is required");
        const auto arch = parse_arch(arch_csv);
        config["arch"] = arch;
        config["epochs"] = epochs;
        config["lr"] = lr;
        const licds::TrainedMlp trained = licds::train_mlp(data, arch, epochs, lr, seed);
        mj = licds::to_json(trained.model);
        if (!loss_out.empty()) {
            std::ofstream os(loss_out);
            if (!os) throw licds::IoError("cannot open '" + loss_out + "'");
            os << "epoch,mse\n";
            for (std::size_t e = 0; e < trained.epoch_loss.size(); ++e)
                os << e << "," << licds::format_full(trained.epoch_loss[e]) << "\n";
            os << "# config: " << config.dump() << "\n";
        }
    }
    mj["config"] = config;
    write_or_print(out, mj);
    return 0;
}

int cmd_select(const std::vector<std::string>& model_files, const std::string& system,
               const std::string& init_box_csv, int n_init, std::uint64_t seed, double T,
               double dt, const std::string& lambda_s, int k_max, int m_max,
               const std::string& eval_box_csv, int eval_points, const std::string& out) {
    if (model_files.size() < 2)
        throw licds::ConfigError("cmd_select needs at least two --models files");

    std::vector<std::pair<std::string, licds::DynamicsFn>> candidates;
    for (const auto& path : model_files)
        candidates.emplace_back(std::filesystem::path(path).filename().string(),
                                licds::load_model(path));
    const int dim = candidates.front().second.dim;
    for (const auto& [name, fn] : candidates)
        if (fn.dim != dim) throw licds::ConfigError("candidate dimensions disagree");

    licds::LicdsParams params;
    params.T_global = T;
    params.dt = dt;
    params.lambda = parse_lambda(lambda_s);
    params.k_max = k_max;
    params.m_max = m_max;
    params.validate();

    const auto init_box = init_box_csv.empty()
                              ? std::vector<licds::Interval>(
                                    static_cast<std::size_t>(dim), {-2.0, 2.0})
                              : parse_box(init_box_csv, dim);
    std::mt19937_64 rng(seed);
    std::vector<Vector> init_points;
    for (int i = 0; i < n_init; ++i) {
        Vector x0(dim);
        for (int d = 0; d < dim; ++d) {
            std::uniform_real_distribution<double> u(init_box[static_cast<std::size_t>(d)].first,
                                                     init_box[static_cast<std::size_t>(d)].second);
            x0[d] = u(rng);
        }
        init_points.push_back(std::move(x0));
    }

    const auto ranking = licds::rank_models(candidates, init_points, params);

    Json rows = Json::array();
    for (const auto& [name, L] : ranking) rows.push_back({{"name", name}, {"L_mean", L}});

    // Ground-truth distance column when the true system is known.
    if (!system.empty()) {
        const licds::SystemSpec spec = licds::get_system(system);
        if (spec.dynamics.dim != dim)
            throw licds::ConfigError("true system dimension mismatch");
        const auto eval_box = eval_box_csv.empty() ? init_box : parse_box(eval_box_csv, dim);
        std::mt19937_64 eval_rng(seed + 1);
        std::vector<Vector> eval_pts;
        for (int i = 0; i < eval_points; ++i) {
            Vector x(dim);
            for (int d = 0; d < dim; ++d) {
                std::uniform_real_distribution<double> u(
                    eval_box[static_cast<std::size_t>(d)].first,
                    eval_box[static_cast<std::size_t>(d)].second);
                x[d] = u(eval_rng);
            }
            eval_pts.push_back(std::move(x));
        }
        for (auto& row : rows) {
            const auto it = std::find_if(candidates.begin(), candidates.end(),
                                         [&](const auto& c) { return c.first == row["name"]; });
            double acc = 0.0;
            for (const auto& x : eval_pts)
                acc += (it->second(x) - spec.dynamics(x)).squaredNorm();
            row["true_l2_distance"] =
                std::sqrt(acc / static_cast<double>(eval_pts.size()));
        }
    }

    Json j{{"ranking", rows},
           {"config", {{"command", "select"},
                       {"system", system},
                       {"n_init", n_init},
                       {"seed", seed},
                       {"params", params_json(params)}}}};
    write_or_print(out, j);
    return 0;
}

int cmd_check(const std::string& system, double T, double dt, int count,
              double eps_max, std::uint64_t seed, const std::string& out) {
    const licds::SystemSpec spec = licds::get_system(system);
    const licds::DynamicsFn f = spec.dynamics;
    const int dim = f.dim;

    // Theorem-1 suite: random bounded polynomial perturbations f_hat = f + eps*g.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    int pass = 0;
    double worst_ratio = 0.0;
    for (int i = 0; i < count; ++i) {
        const double eps = eps_max * u01(rng);
        const licds::DynamicsFn g = licds::random_smooth_field(dim, rng);
        licds::DynamicsFn f_hat{dim, [f, g, eps](const Vector& x) {
            return (f(x) + eps * g(x)).eval();
        }};
        const auto check = licds::check_theorem1(f, f_hat, spec.default_x0, T, dt);
        if (check.holds) ++pass;
        if (check.rhs > 0.0) worst_ratio = std::max(worst_ratio, check.lhs / check.rhs);
    }

    // Theorem-2 family: shrinking eps, both norms must shrink together.
    Json family = Json::array();
    std::mt19937_64 rng2(seed + 1);
    const licds::DynamicsFn g = licds::random_smooth_field(dim, rng2);
    for (double eps : {0.2, 0.1, 0.05, 0.025}) {
        licds::DynamicsFn f_hat{dim, [f, g, eps](const Vector& x) {
            return (f(x) + eps * g(x)).eval();
        }};
        const auto t2 = licds::check_theorem2(f, f_hat, spec.default_x0, T, dt);
        family.push_back({{"eps", eps}, {"dyn_l1", t2.dyn_l1}, {"state_l1", t2.state_l1}});
    }

    Json j{{"theorem1", {{"pass", pass}, {"count", count}, {"worst_lhs_over_rhs", worst_ratio}}},
           {"theorem2_family", family},
           {"config", {{"command", "check"}, {"system", system}, {"T", T},
                       {"dt", dt}, {"count", count}, {"eps_max", eps_max}, {"seed", seed}}}};
    write_or_print(out, j);
    return pass == count ? 0 : 3;
}

int cmd_decode(const std::string& message_in, const std::string& out,
               const std::string& result_out) {
    const auto bytes = licds::read_bytes(message_in);
    const licds::EncodedMessage msg = licds::EncodedMessage::from_bytes(bytes);
    const licds::Trajectory traj = licds::decode(msg);
    Json config{{"command", "decode"}, {"message", message_in},
                {"m", msg.m}, {"dt", msg.dt}, {"t_local", msg.t_local}};
    if (out.empty() || out == "-")
        licds::write_trajectory_csv(std::cout, traj, config);
    else
        licds::write_trajectory_csv(out, traj, config);
    if (!result_out.empty()) {
        Json rj = licds::to_json(licds::decode_result(msg));
        rj["config"] = config;
        licds::write_json(result_out, rj);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"L-ICDS: local encoding and model selection for dynamical systems"};
    app.require_subcommand(1);

    std::string system, model, x0_csv, out, truth_csv, lambda_s = "auto";
    std::string curve_out, approx_out, message_out, arch_csv, box_csv, loss_out;
    std::string init_box_csv, eval_box_csv, message_in, result_out;
    std::vector<std::string> model_files;
    double T = 4.0, dt = 0.01, t0 = 0.0, sigma = 0.0, lr = 1e-2;
    double lengthscale = 1.0, signal_var = 1.0, noise_var = 1e-2, coeff_bound = 64.0;
    double eps_max = 0.2, sigma_learn = -1.0;
    int k_max = 8, m_max = 5, n_traj = 10, n_samples = 100, epochs = 5000;
    int n_init = 3, eval_points = 256, state_bits = 16, coeff_bits = 16, count = 100;
    std::uint64_t seed = 0;
    bool gp = false, gp_grid = false, emit_bits = false;

    auto* sim = app.add_subcommand("simulate", "Integrate or sample a trajectory to CSV");
    sim->add_option("--system", system, "builtin system name");
    sim->add_option("--model", model, "learned model JSON file");
    sim->add_option("--x0", x0_csv, "initial state, comma separated");
    sim->add_option("--t0", t0, "start time");
    sim->add_option("--T", T, "horizon")->required();
    sim->add_option("--dt", dt, "time step")->required();
    sim->add_option("--sigma", sigma, "noise intensity (0 = deterministic RK4)");
    sim->add_option("--seed", seed, "noise seed");
    sim->add_option("--out", out, "output CSV path (default stdout)");

    auto* enc = app.add_subcommand("encode", "Run the local encoding search");
    enc->add_option("--system", system, "builtin system name");
    enc->add_option("--model", model, "learned model JSON file");
    enc->add_option("--truth-csv", truth_csv, "use this trajectory as the truth");
    enc->add_option("--x0", x0_csv, "initial state");
    enc->add_option("--T", T, "global horizon")->required();
    enc->add_option("--dt", dt, "time step")->required();
    enc->add_option("--lambda", lambda_s, "complexity weight or 'auto'");
    enc->add_option("--k-max", k_max, "maximum local complexity");
    enc->add_option("--m-max", m_max, "maximum partitions");
    enc->add_option("--out", out, "result JSON (default stdout)");
    enc->add_option("--curve-out", curve_out, "cost curve CSV");
    enc->add_option("--approx-out", approx_out, "approximated states CSV");
    enc->add_option("--message-out", message_out, "binary .licd message");
    enc->add_option("--state-bits", state_bits, "bits per state component");
    enc->add_option("--coeff-bits", coeff_bits, "bits per coefficient");
    enc->add_option("--coeff-bound", coeff_bound, "coefficient clamp bound");
    enc->add_flag("--emit-bits", emit_bits, "print bit accounting JSON");

    auto* lrn = app.add_subcommand("learn", "Learn a dynamics model from noisy samples");
    lrn->add_option("--system", system, "data-generating system")->required();
    lrn->add_option("--arch", arch_csv, "hidden layer widths, e.g. 10,5");
    lrn->add_flag("--gp", gp, "fit the GP instead of an MLP");
    lrn->add_flag("--gp-grid-search", gp_grid, "grid-search GP hyperparameters");
    lrn->add_option("--lengthscale", lengthscale, "GP lengthscale");
    lrn->add_option("--signal-var", signal_var, "GP signal variance");
    lrn->add_option("--noise-var", noise_var, "GP noise variance");
    lrn->add_option("--n-traj", n_traj, "number of trajectories");
    lrn->add_option("--n-samples", n_samples, "samples per trajectory");
    lrn->add_option("--dt", dt, "sampling interval")->required();
    lrn->add_option("--sigma", sigma_learn, "noise override (default: system's)");
    lrn->add_option("--seed", seed, "dataset + init seed");
    lrn->add_option("--x0-box", box_csv, "initial state sampling box 'lo,hi'");
    lrn->add_option("--epochs", epochs, "training epochs");
    lrn->add_option("--lr", lr, "learning rate");
    lrn->add_option("--out", out, "model JSON (default stdout)");
    lrn->add_option("--loss-out", loss_out, "training loss CSV");

    auto* sel = app.add_subcommand("select", "Rank learned models by their score");
    sel->add_option("--models", model_files, "model JSON files (>= 2)")->required();
    sel->add_option("--system", system, "true system for the distance column");
    sel->add_option("--init-box", init_box_csv, "init point sampling box");
    sel->add_option("--n-init", n_init, "number of init points");
    sel->add_option("--seed", seed, "init sampling seed");
    sel->add_option("--T", T, "scoring horizon");
    sel->add_option("--dt", dt, "time step");
    sel->add_option("--lambda", lambda_s, "complexity weight or 'auto'");
    sel->add_option("--k-max", k_max, "maximum local complexity");
    sel->add_option("--m-max", m_max, "maximum partitions");
    sel->add_option("--eval-box", eval_box_csv, "distance evaluation box");
    sel->add_option("--eval-points", eval_points, "distance evaluation sample count");
    sel->add_option("--out", out, "ranking JSON (default stdout)");

    auto* chk = app.add_subcommand("check", "Numerically verify the theorem bounds");
    chk->add_option("--system", system, "base system")->required();
    chk->add_option("--T", T, "horizon")->default_val(2.0);
    chk->add_option("--dt", dt, "time step");
    chk->add_option("--count", count, "number of random perturbations");
    chk->add_option("--eps-max", eps_max, "maximum perturbation size");
    chk->add_option("--seed", seed, "perturbation seed");
    chk->add_option("--out", out, "report JSON (default stdout)");

    auto* dec = app.add_subcommand("decode", "Reconstruct a trajectory from a .licd message");
    dec->add_option("--message", message_in, "input .licd file")->required();
    dec->add_option("--out", out, "trajectory CSV (default stdout)");
    dec->add_option("--result-out", result_out, "decoded result JSON");

    try {
        app.parse(argc, argv);
        if (sim->parsed())
            return cmd_simulate(system, model, x0_csv, t0, T, dt, sigma, seed, out);
        if (enc->parsed())
            return cmd_encode(system, model, truth_csv, x0_csv, T, dt, lambda_s, k_max,
                              m_max, out, curve_out, approx_out, message_out, state_bits,
                              coeff_bits, coeff_bound, emit_bits);
        if (lrn->parsed())
            return cmd_learn(system, arch_csv, gp, gp_grid, lengthscale, signal_var,
                             noise_var, n_traj, n_samples, dt, sigma_learn, seed, box_csv,
                             epochs, lr, out, loss_out);
        if (sel->parsed())
            return cmd_select(model_files, system, init_box_csv, n_init, seed, T, dt,
                              lambda_s, k_max, m_max, eval_box_csv, eval_points, out);
        if (chk->parsed())
            return cmd_check(system, T, dt, count, eps_max, seed, out);
        if (dec->parsed()) return cmd_decode(message_in, out, result_out);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << Json{{"error", e.what()}, {"code", 2}}.dump() << "\n";
        return 2;
    } catch (const licds::ConfigError& e) {
        std::cerr << Json{{"error", e.what()}, {"code", 2}}.dump() << "\n";
        return 2;
    } catch (const licds::NumericError& e) {
        std::cerr << Json{{"error", e.what()}, {"code", 3}}.dump() << "\n";
        return 3;
    } catch (const licds::IoError& e) {
        std::cerr << Json{{"error", e.what()}, {"code", 4}}.dump() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << Json{{"error", e.what()}, {"code", 1}}.dump() << "\n";
        return 1;
    }
}
