#pragma once

#include "licds/codec.hpp"
#include "licds/common.hpp"
#include "licds/core.hpp"
#include "licds/integrate.hpp"
#include "licds/learn.hpp"
#include "licds/local_model.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace licds {

using Json = nlohmann::json;

inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// CSV layout: header `t,x1,...,xn`, one row per sample, 17 significant
/// digits. An optional trailing `# config: {...}` comment carries the
/// resolved run configuration; readers skip `#` lines.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                                 const Json& config = {}) {
    os << "t";
    for (int d = 1; d <= traj.dim(); ++d) os << ",x" << d;
    os << "\n";
    for (std::size_t i = 0; i < traj.size(); ++i) {
        os << format_full(traj.time(i));
        for (int d = 0; d < traj.dim(); ++d) os << "," << format_full(traj.states[i][d]);
        os << "\n";
    }
    if (!config.is_null() && !config.empty()) os << "# config: " << config.dump() << "\n";
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                                 const Json& config = {}) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_trajectory_csv(os, traj, config);
}

inline Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    Trajectory traj;
    std::string line;
    bool header = true;
    std::vector<double> times;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() < 2) throw IoError("malformed CSV row in '" + path + "'");
        times.push_back(row[0]);
        Vector x(static_cast<int>(row.size()) - 1);
        for (std::size_t d = 1; d < row.size(); ++d) x[static_cast<int>(d) - 1] = row[d];
        traj.states.push_back(std::move(x));
    }
    if (traj.states.empty()) throw IoError("empty trajectory in '" + path + "'");
    traj.t0 = times.front();
    traj.dt = traj.states.size() > 1
                  ? (times.back() - times.front()) / static_cast<double>(times.size() - 1)
                  : 0.0;
    return traj;
}

// --- JSON conversions -------------------------------------------------------

inline Json to_json(const LocalModel& model) {
    Json j;
    j["dim"] = model.dim();
    j["k"] = model.k();
    j["working_point"] = std::vector<double>(model.working_point.data(),
                                             model.working_point.data() + model.dim());
    j["exponents"] = model.basis.exponents;
    std::vector<std::vector<double>> coeffs;
    for (int d = 0; d < model.coeffs.rows(); ++d) {
        std::vector<double> row;
        for (int i = 0; i < model.coeffs.cols(); ++i) row.push_back(model.coeffs(d, i));
        coeffs.push_back(std::move(row));
    }
    j["coeffs"] = coeffs;
    return j;
}

inline LocalModel local_model_from_json(const Json& j) {
    LocalModel model;
    const auto wp = j.at("working_point").get<std::vector<double>>();
    model.working_point = Eigen::Map<const Vector>(wp.data(), static_cast<int>(wp.size()));
    model.basis.dim = j.at("dim").get<int>();
    model.basis.exponents = j.at("exponents").get<std::vector<std::vector<int>>>();
    const auto coeffs = j.at("coeffs").get<std::vector<std::vector<double>>>();
    model.coeffs = Matrix(coeffs.size(), model.basis.size());
    for (std::size_t d = 0; d < coeffs.size(); ++d)
        for (std::size_t i = 0; i < coeffs[d].size(); ++i)
            model.coeffs(static_cast<int>(d), static_cast<int>(i)) = coeffs[d][i];
    return model;
}

inline Json to_json(const LicdsParams& params) {
    Json j;
    j["T_global"] = params.T_global;
    j["dt"] = params.dt;
    if (params.lambda)
        j["lambda"] = *params.lambda;
    else
        j["lambda"] = "auto";
    j["k_max"] = params.k_max;
    j["m_max"] = params.m_max;
    return j;
}

inline Json to_json(const LicdsResult& result) {
    Json j;
    j["m_star"] = result.m_star;
    j["L_total_star"] = result.L_total_star;
    j["k_total_star"] = result.k_total_star;
    Json curve = Json::object();
    for (std::size_t m = 1; m <= result.cost_curve.size(); ++m) {
        const double v = result.cost_curve[m - 1];
        curve[std::to_string(m)] = std::isfinite(v) ? Json(v) : Json("inf");
    }
    j["cost_curve"] = curve;
    j["k_total_curve"] = result.k_total_curve;
    Json parts = Json::array();
    for (const auto& p : result.partitions) {
        Json pj;
        pj["index"] = p.index;
        pj["k_star"] = p.k_star;
        pj["L_star"] = p.L_star;
        pj["restart_state"] = std::vector<double>(
            p.restart_state.data(), p.restart_state.data() + p.restart_state.size());
        pj["model"] = to_json(p.model);
        parts.push_back(std::move(pj));
    }
    j["partitions"] = parts;
    j["config"] = to_json(result.params);
    return j;
}

inline Json to_json(const MlpModel& mlp) {
    Json j;
    j["type"] = "mlp";
    j["dim"] = mlp.dim();
    j["layer_sizes"] = mlp.layer_sizes;
    Json weights = Json::array(), biases = Json::array();
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        std::vector<double> w;  // row-major
        for (int r = 0; r < mlp.weights[l].rows(); ++r)
            for (int c = 0; c < mlp.weights[l].cols(); ++c) w.push_back(mlp.weights[l](r, c));
        weights.push_back(w);
        biases.push_back(std::vector<double>(mlp.biases[l].data(),
                                             mlp.biases[l].data() + mlp.biases[l].size()));
    }
    j["weights"] = weights;
    j["biases"] = biases;
    return j;
}

inline MlpModel mlp_from_json(const Json& j) {
    MlpModel mlp;
    const int dim = j.at("dim").get<int>();
    mlp.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    std::vector<int> sizes{dim};
    sizes.insert(sizes.end(), mlp.layer_sizes.begin(), mlp.layer_sizes.end());
    sizes.push_back(dim);
    const auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
    const auto biases = j.at("biases").get<std::vector<std::vector<double>>>();
    if (weights.size() + 1 != sizes.size() || biases.size() != weights.size())
        throw IoError("MLP JSON layer count mismatch");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Matrix w(sizes[l + 1], sizes[l]);
        if (static_cast<int>(weights[l].size()) != w.rows() * w.cols())
            throw IoError("MLP JSON weight size mismatch in layer " + std::to_string(l));
        for (int r = 0; r < w.rows(); ++r)
            for (int c = 0; c < w.cols(); ++c)
                w(r, c) = weights[l][static_cast<std::size_t>(r) * w.cols() + c];
        Vector b = Eigen::Map<const Vector>(biases[l].data(),
                                            static_cast<int>(biases[l].size()));
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(std::move(b));
    }
    return mlp;
}

inline Json to_json(const GpModel& gp) {
    Json j;
    j["type"] = "gp";
    j["dim"] = gp.dim();
    Json inputs = Json::array(), targets = Json::array();
    for (const auto& x : gp.train_inputs)
        inputs.push_back(std::vector<double>(x.data(), x.data() + x.size()));
    for (const auto& y : gp.train_targets)
        targets.push_back(std::vector<double>(y.data(), y.data() + y.size()));
    j["inputs"] = inputs;
    j["targets"] = targets;
    j["lengthscale"] = gp.lengthscale;
    j["signal_var"] = gp.signal_var;
    j["noise_var"] = gp.noise_var;
    return j;
}

inline GpModel gp_from_json(const Json& j) {
    Dataset data;
    for (const auto& row : j.at("inputs")) {
        const auto v = row.get<std::vector<double>>();
        data.inputs.push_back(Eigen::Map<const Vector>(v.data(), static_cast<int>(v.size())));
    }
    for (const auto& row : j.at("targets")) {
        const auto v = row.get<std::vector<double>>();
        data.targets.push_back(Eigen::Map<const Vector>(v.data(), static_cast<int>(v.size())));
    }
    data.source_trajectories = 1;
    return fit_gp(data, j.at("lengthscale").get<double>(), j.at("signal_var").get<double>(),
                  j.at("noise_var").get<double>());
}

/// Load a learned-model JSON file as an evaluatable dynamics function.
inline DynamicsFn load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open model file '" + path + "'");
    Json j;
    try {
        is >> j;
    } catch (const Json::exception& e) {
        throw IoError("malformed JSON in '" + path + "': " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "mlp") return mlp_from_json(j).as_dynamics();
    if (type == "gp") return gp_from_json(j).as_dynamics();
    throw IoError("model file '" + path + "' has unknown type '" + type + "'");
}

inline void write_json(const std::string& path, const Json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
}

} // namespace licds
