#pragma once

#include "armax.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace udm {

/// Which residual fills the MA pseudo-regressor lags during recursive updates.
enum class ResidualConvention { APriori, APosteriori };

struct FitConfig {
    std::size_t max_els_iterations = 20;
    double els_tolerance = 1e-8; // relative coefficient change
    double ridge = 1e-10;
    double forgetting = 0.995;   // recursive mode only
    double initial_covariance_scale = 1e3;
    ScalerMode scaler_mode = ScalerMode::ZScore;
    ResidualConvention residual_convention = ResidualConvention::APriori;

    void validate() const;
};

nlohmann::json to_json(const FitConfig& cfg);
FitConfig fit_config_from_json(const nlohmann::json& doc);

struct OutputFitReport {
    double sse = 0.0;               // scaled units, rows t >= max_lag
    std::size_t iterations = 0;
    bool converged = false;
    double final_change = 0.0;      // relative coefficient change of the last iteration
    double condition_number_estimate = 0.0;
};

struct FitReport {
    std::vector<OutputFitReport> outputs;
    [[nodiscard]] bool converged() const;
};

nlohmann::json to_json(const FitReport& report, const std::vector<std::string>& output_names);

struct FitResult {
    ArmaxModel model;
    FitReport report;
};

/// Ridge-regularized least squares on the normal equations. Throws
/// SingularNormalEquations when the regressor matrix is rank deficient.
struct LeastSquaresSolution {
    Eigen::VectorXd theta;
    double condition_number_estimate = 0.0;
};
LeastSquaresSolution solve_normal_equations(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& target,
                                            double ridge);

/// Batch extended least squares (pseudo-linear regression). Iteration 0 is the
/// ARX fit; each later iteration refilters residuals through the current model
/// and re-solves with MA columns. Returns the best iterate (lowest SSE) with
/// converged = false when the tolerance is not met within the iteration cap.
FitResult fit_batch_els(const TimeSeriesDataset& data, const ArmaxOrders& orders, const FitConfig& cfg);

/// Measured-feedback residuals eps_t = y_t - yhat_t on already-scaled data,
/// zero on the seed rows. Columns are outputs.
Eigen::MatrixXd filter_residuals(const ArmaxModel& model, const TimeSeriesDataset& scaled);

struct RlsOutputState {
    Eigen::VectorXd theta;
    Eigen::MatrixXd covariance;
    std::vector<double> residuals; // most recent first, length nc
    std::size_t updates = 0;
};

struct RlsState {
    ArmaxOrders orders;
    std::size_t n_inputs = 0;
    double forgetting = 1.0;
    ResidualConvention convention = ResidualConvention::APriori;
    std::vector<RlsOutputState> outputs;
};

RlsState rls_init(const ArmaxOrders& orders, std::size_t n_inputs, std::size_t n_outputs, const FitConfig& cfg);
RlsState rls_init(const ArmaxModel& model, const FitConfig& cfg);

/// One forgetting-factor RLS step for `output`:
///   K = P phi / (lambda + phi' P phi), theta += K (y - phi' theta), P = (P - K phi' P) / lambda.
/// Returns the a-priori residual y - phi' theta_before and pushes the residual
/// selected by the state's convention into the MA ring buffer. On a non-finite
/// result the state is left untouched and NonFiniteUpdate is thrown.
double rls_update(RlsState& state, std::size_t output, const Eigen::VectorXd& phi, double y);

/// Runs rls_update over every row t >= max_lag of scaled data, building each
/// regressor from data lags and the state's residual ring. Returns the
/// a-priori residuals (rows x outputs, zero on seed rows).
Eigen::MatrixXd rls_run(RlsState& state, const TimeSeriesDataset& scaled);

/// Snapshots the recursive state into an immutable model using the template's
/// channels and scaler.
ArmaxModel finalize_rls(const RlsState& state, const ArmaxModel& model_template);

/// Normalized spectral entropy (0..1) of the output channels' periodograms,
/// averaged over channels. Used to pick the richest training event.
double spectral_entropy(const TimeSeriesDataset& data);
std::size_t select_richest(const std::vector<TimeSeriesDataset>& candidates);

} // namespace udm
