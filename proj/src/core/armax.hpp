#pragma once

#include "timeseries.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace udm {

/// Lag structure shared by every output of a model.
///   na: AR order, nb: exogenous lags per input, nc: MA order, nk: input dead time.
/// Exogenous regressors for row t are u_{j,t-nk}, ..., u_{j,t-nk-nb+1}.
struct ArmaxOrders {
    std::size_t na = 0;
    std::size_t nb = 0;
    std::size_t nc = 0;
    std::size_t nk = 0;

    [[nodiscard]] std::size_t max_lag() const noexcept;
    [[nodiscard]] std::size_t parameter_count(std::size_t n_inputs) const noexcept { return na + nb * n_inputs + nc; }
    /// Throws InvalidArgument when the model would have no parameters.
    void validate(std::size_t n_inputs) const;

    friend bool operator==(const ArmaxOrders&, const ArmaxOrders&) = default;
};

/// MISO coefficient set for a single output channel.
struct OutputCoefficients {
    std::vector<double> alpha;              // AR, alpha[i-1] multiplies y_{t-i}
    std::vector<std::vector<double>> gamma; // gamma[j][i-1] multiplies u_{j,t-nk-i+1}
    std::vector<double> beta;               // MA, beta[i-1] multiplies eps_{t-i}

    static OutputCoefficients zeros(const ArmaxOrders& orders, std::size_t n_inputs);
    /// Packs as [alpha, gamma_1, ..., gamma_nu, beta].
    [[nodiscard]] Eigen::VectorXd pack() const;
    static OutputCoefficients unpack(const Eigen::VectorXd& theta, const ArmaxOrders& orders, std::size_t n_inputs);
};

struct StabilityReport {
    bool stable = true;
    double max_root_magnitude = 0.0;
};

struct FitMetadata {
    std::string method;           // "els", "rls", "manual", ...
    std::string timestamp;        // wall clock; excluded from reproducibility checks
    std::size_t train_first = 0;  // first row of the training window
    std::size_t train_rows = 0;
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::size_t version = 1;
    std::vector<StabilityReport> stability;
};

/// Bank of MISO ARMAX models, one per output, sharing the input set. The
/// coefficients act on scaled data; `scaler` records the fit-time normalization.
class ArmaxModel {
public:
    ArmaxModel(ArmaxOrders orders, std::vector<std::string> input_names, std::vector<std::string> output_names,
               std::vector<OutputCoefficients> coefficients, ScalerParams scaler, FitMetadata meta = {});

    [[nodiscard]] const ArmaxOrders& orders() const noexcept { return orders_; }
    [[nodiscard]] std::size_t n_inputs() const noexcept { return input_names_.size(); }
    [[nodiscard]] std::size_t n_outputs() const noexcept { return output_names_.size(); }
    [[nodiscard]] const std::vector<std::string>& input_names() const noexcept { return input_names_; }
    [[nodiscard]] const std::vector<std::string>& output_names() const noexcept { return output_names_; }
    [[nodiscard]] const std::vector<OutputCoefficients>& coefficients() const noexcept { return coefficients_; }
    [[nodiscard]] const OutputCoefficients& coefficients(std::size_t output) const { return coefficients_.at(output); }
    [[nodiscard]] const ScalerParams& scaler() const noexcept { return scaler_; }
    [[nodiscard]] const FitMetadata& metadata() const noexcept { return meta_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept { return orders_.parameter_count(n_inputs()); }

    [[nodiscard]] ArmaxModel with_metadata(FitMetadata meta) const;

private:
    ArmaxOrders orders_;
    std::vector<std::string> input_names_;
    std::vector<std::string> output_names_;
    std::vector<OutputCoefficients> coefficients_;
    ScalerParams scaler_;
    FitMetadata meta_;
};

/// Coefficients of one output re-expressed in original channel units:
///   y_t = intercept + sum alpha y + sum gamma u + sum beta eps.
struct PhysicalCoefficients {
    double intercept = 0.0;
    OutputCoefficients coefficients;
};

PhysicalCoefficients physical_coefficients(const ArmaxModel& model, std::size_t output);

/// Regression problem for one output: target[r] ~ regressors.row(r) . theta.
struct RegressionRows {
    std::size_t first_row = 0; // dataset row of target[0]
    Eigen::MatrixXd regressors;
    Eigen::VectorXd target;
};

/// Builds per-output regression rows for t in [max_lag, N_T). When
/// `residuals` is empty the MA columns are omitted (plain ARX regressor);
/// otherwise residuals(t, m) supplies eps_{m,t}.
std::vector<RegressionRows> build_regressor(const TimeSeriesDataset& data, const ArmaxOrders& orders,
                                            const Eigen::MatrixXd* residuals = nullptr);

/// Lags for a single prediction step, most recent first, in scaled units:
///   y[m][i-1] = y_{m,t-i}, u[j][k] = u_{j,t-k}, e[m][i-1] = eps_{m,t-i}.
struct LagHistory {
    std::vector<std::vector<double>> y;
    std::vector<std::vector<double>> u;
    std::vector<std::vector<double>> e;
};

/// One-step prediction per output, scaled units.
Eigen::VectorXd predict_one_step(const ArmaxModel& model, const LagHistory& history);

class FeedbackMode {
public:
    enum class Kind { Measured, FreeRun, MeasuredUntil };

    static FeedbackMode measured() { return FeedbackMode(Kind::Measured, 0); }
    static FeedbackMode free_run() { return FeedbackMode(Kind::FreeRun, 0); }
    /// Measurements are available for samples s < step; later lags use predictions.
    static FeedbackMode measured_until(std::size_t step) { return FeedbackMode(Kind::MeasuredUntil, step); }
    /// Parses "measured", "freerun" or "measured-until:<k>".
    static FeedbackMode parse(std::string_view text);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t until() const noexcept { return until_; }
    [[nodiscard]] std::string to_string() const;

private:
    FeedbackMode(Kind kind, std::size_t until) : kind_(kind), until_(until) {}
    Kind kind_;
    std::size_t until_;
};

struct HorizonPrediction {
    std::size_t first_row = 0;  // dataset row of predicted.row(0)
    Eigen::MatrixXd predicted;  // original units
    Eigen::MatrixXd residuals;  // scaled units, y_s - yhat_s against the supplied data
};

/// Recursive multi-step prediction over the whole record. The first max_lag
/// rows seed the lags. Without measured feedback the MA lags are zero.
HorizonPrediction predict_horizon(const ArmaxModel& model, const TimeSeriesDataset& data, FeedbackMode mode);

/// Companion-matrix roots of 1 - sum alpha_i z^{-i}, per output.
std::vector<StabilityReport> check_stability(const ArmaxModel& model);
StabilityReport check_stability(const std::vector<double>& alpha);

nlohmann::json to_json(const ArmaxModel& model);
ArmaxModel model_from_json(const nlohmann::json& doc);
void save_model(const ArmaxModel& model, const std::filesystem::path& path);
ArmaxModel load_model(const std::filesystem::path& path);

nlohmann::json to_json(const ArmaxOrders& orders);
ArmaxOrders orders_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ScalerParams& scaler);
ScalerParams scaler_from_json(const nlohmann::json& doc);

/// Shared evaluation kernel. y(i) -> y_{t-i}, u(j, k) -> u_{j,t-k}, e(i) -> eps_{t-i}.
template <class YLag, class ULag, class ELag>
double evaluate_output(const OutputCoefficients& c, const ArmaxOrders& orders, YLag&& y, ULag&& u, ELag&& e) {
    double acc = 0.0;
    for (std::size_t i = 1; i <= orders.na; ++i) {
        acc += c.alpha[i - 1] * y(i);
    }
    for (std::size_t j = 0; j < c.gamma.size(); ++j) {
        for (std::size_t i = 1; i <= orders.nb; ++i) {
            acc += c.gamma[j][i - 1] * u(j, orders.nk + i - 1);
        }
    }
    for (std::size_t i = 1; i <= orders.nc; ++i) {
        acc += c.beta[i - 1] * e(i);
    }
    return acc;
}

} // namespace udm
