#pragma once

#include <json.hpp>

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace udm {

double rmse(std::span<const double> y, std::span<const double> yhat);
/// 100 * rmse / (max(y) - min(y)); NaN for a flat reference signal.
double nrmse_pct(std::span<const double> y, std::span<const double> yhat);
/// 100 * (1 - ||y - yhat|| / ||y - mean(y)||); NaN for a flat reference signal.
double fit_pct(std::span<const double> y, std::span<const double> yhat);

struct ErrorSummary {
    std::string scenario;
    std::vector<std::string> channels;
    std::vector<double> rmse;
    std::vector<double> nrmse_pct;
    std::vector<double> fit_pct;

    [[nodiscard]] double mean_rmse() const;
    [[nodiscard]] double mean_nrmse_pct() const;
};

/// Column-wise summary of measured vs. predicted outputs (rows aligned).
ErrorSummary summarize_errors(const std::string& scenario, const std::vector<std::string>& channels,
                              const Eigen::MatrixXd& measured, const Eigen::MatrixXd& predicted);

struct DistributionStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

/// Quartiles by linear interpolation between order statistics (type 7).
DistributionStats distribution(std::vector<double> values);

struct SuiteReport {
    std::vector<std::string> channels;
    std::vector<DistributionStats> rmse;        // per channel across scenarios
    std::vector<DistributionStats> nrmse_pct;   // per channel across scenarios
    DistributionStats mean_rmse;                // per-scenario mean over channels
    DistributionStats mean_nrmse_pct;
    std::vector<ErrorSummary> scenarios;

    [[nodiscard]] nlohmann::json to_json() const;
    /// Columns: channel, scenario, mean_rmse, nrmse_pct. Per-channel rows
    /// followed by the channel-averaged rows (channel = "mean").
    [[nodiscard]] std::string boxplot_csv() const;
};

SuiteReport summarize_suite(const std::vector<ErrorSummary>& results);

nlohmann::json to_json(const ErrorSummary& s);
ErrorSummary error_summary_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const DistributionStats& d);

} // namespace udm
