#pragma once

#include "armax.hpp"
#include "error.hpp"
#include "plant_sim.hpp"
#include "timeseries.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace testing {

template <class F>
std::optional<udm::ErrorCode> error_code_of(F&& f) {
    try {
        f();
    } catch (const udm::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline std::filesystem::path temp_path(const std::string& stem) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() / "udm_tests";
    std::filesystem::create_directories(dir);
    return dir / (stem + "_" + std::to_string(counter++));
}

inline std::filesystem::path write_file(const std::string& stem, const std::string& text) {
    auto path = temp_path(stem);
    std::ofstream(path) << text;
    return path;
}

inline Eigen::MatrixXd column(std::initializer_list<double> values) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(values.size()), 1);
    Eigen::Index i = 0;
    for (double v : values) m(i++, 0) = v;
    return m;
}

inline udm::TimeSeriesDataset siso(std::initializer_list<double> u, std::initializer_list<double> y) {
    return {1.0, 0.0, column(u), column(y), {"u"}, {"y"}};
}

inline udm::TimeSeriesDataset outputs_only(std::initializer_list<double> y) {
    return {1.0, 0.0, Eigen::MatrixXd(static_cast<Eigen::Index>(y.size()), 0), column(y), {}, {"y"}};
}

/// Single-output model in identity scaling.
inline udm::ArmaxModel single_output_model(const udm::ArmaxOrders& orders, std::size_t n_inputs,
                                           udm::OutputCoefficients c) {
    std::vector<std::string> inputs;
    for (std::size_t j = 0; j < n_inputs; ++j) inputs.push_back(n_inputs == 1 ? "u" : "u" + std::to_string(j + 1));
    return {orders, inputs, {"y"}, {std::move(c)}, udm::ScalerParams::identity(n_inputs, 1)};
}

inline udm::ScenarioConfig truth_scenario(const udm::LinearTruthConfig& truth, std::size_t samples,
                                          std::uint64_t seed, double sigma) {
    udm::ScenarioConfig sc;
    sc.name = "truth";
    sc.kind = udm::PlantKind::LinearTruth;
    sc.plant = truth;
    sc.duration = static_cast<double>(samples) * sc.sample_period;
    sc.seed = seed;
    for (const auto& name : truth.output_names()) sc.noise_sigma[name] = sigma;
    return sc;
}

} // namespace testing
