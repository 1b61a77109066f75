#include "metrics.hpp"

#include "error.hpp"
#include "timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace udm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(y.size()) + " measured vs " +
                                                   std::to_string(yhat.size()) + " predicted samples");
    }
    if (y.empty()) throw Error(ErrorCode::LengthMismatch, "empty series");
}

double finite_mean(const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v) {
        if (std::isfinite(x)) {
            s += x;
            ++n;
        }
    }
    return n ? s / static_cast<double>(n) : kNaN;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& v) { return v.is_null() ? kNaN : v.get<double>(); }

} // namespace

double rmse(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - yhat[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(y.size()));
}

double nrmse_pct(std::span<const double> y, std::span<const double> yhat) {
    const double r = rmse(y, yhat);
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double range = *hi - *lo;
    return range > 0.0 ? 100.0 * r / range : kNaN;
}

double fit_pct(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        den += (y[i] - mean) * (y[i] - mean);
    }
    return den > 0.0 ? 100.0 * (1.0 - std::sqrt(num) / std::sqrt(den)) : kNaN;
}

double ErrorSummary::mean_rmse() const { return finite_mean(rmse); }
double ErrorSummary::mean_nrmse_pct() const { return finite_mean(nrmse_pct); }

ErrorSummary summarize_errors(const std::string& scenario, const std::vector<std::string>& channels,
                              const Eigen::MatrixXd& measured, const Eigen::MatrixXd& predicted) {
    if (measured.rows() != predicted.rows() || measured.cols() != predicted.cols()) {
        throw Error(ErrorCode::LengthMismatch, "measured and predicted matrices differ in shape");
    }
    if (static_cast<std::size_t>(measured.cols()) != channels.size()) {
        throw Error(ErrorCode::ChannelCountMismatch, "channel names do not match columns");
    }
    ErrorSummary s;
    s.scenario = scenario;
    s.channels = channels;
    for (Eigen::Index c = 0; c < measured.cols(); ++c) {
        const Eigen::VectorXd y = measured.col(c);
        const Eigen::VectorXd yh = predicted.col(c);
        const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
        const std::span<const double> yhs(yh.data(), static_cast<std::size_t>(yh.size()));
        s.rmse.push_back(rmse(ys, yhs));
        s.nrmse_pct.push_back(nrmse_pct(ys, yhs));
        s.fit_pct.push_back(fit_pct(ys, yhs));
    }
    return s;
}

DistributionStats distribution(std::vector<double> values) {
    values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
                 values.end());
    if (values.empty()) {
        return {kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double p) {
        const double h = (static_cast<double>(values.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    DistributionStats d;
    d.min = values.front();
    d.max = values.back();
    d.q1 = quantile(0.25);
    d.median = quantile(0.5);
    d.q3 = quantile(0.75);
    d.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return d;
}

SuiteReport summarize_suite(const std::vector<ErrorSummary>& results) {
    if (results.empty()) throw Error(ErrorCode::EmptySuite, "no scenario results to summarize");
    SuiteReport r;
    r.channels = results.front().channels;
    for (const auto& s : results) {
        if (s.channels != r.channels) {
            throw Error(ErrorCode::ChannelMismatch, "scenario '" + s.scenario + "' reports different channels");
        }
    }
    for (std::size_t c = 0; c < r.channels.size(); ++c) {
        std::vector<double> rm;
        std::vector<double> nr;
        for (const auto& s : results) {
            rm.push_back(s.rmse[c]);
            nr.push_back(s.nrmse_pct[c]);
        }
        r.rmse.push_back(distribution(rm));
        r.nrmse_pct.push_back(distribution(nr));
    }
    std::vector<double> mr;
    std::vector<double> mn;
    for (const auto& s : results) {
        mr.push_back(s.mean_rmse());
        mn.push_back(s.mean_nrmse_pct());
    }
    r.mean_rmse = distribution(mr);
    r.mean_nrmse_pct = distribution(mn);
    r.scenarios = results;
    return r;
}

nlohmann::json to_json(const DistributionStats& d) {
    return {{"min", number_or_null(d.min)},       {"q1", number_or_null(d.q1)},
            {"median", number_or_null(d.median)}, {"q3", number_or_null(d.q3)},
            {"max", number_or_null(d.max)},       {"mean", number_or_null(d.mean)}};
}

nlohmann::json to_json(const ErrorSummary& s) {
    nlohmann::json rm = nlohmann::json::array();
    nlohmann::json nr = nlohmann::json::array();
    nlohmann::json fp = nlohmann::json::array();
    for (double v : s.rmse) rm.push_back(number_or_null(v));
    for (double v : s.nrmse_pct) nr.push_back(number_or_null(v));
    for (double v : s.fit_pct) fp.push_back(number_or_null(v));
    return {{"scenario", s.scenario}, {"channels", s.channels}, {"rmse", rm},
            {"nrmse_pct", nr},        {"fit_pct", fp},          {"mean_rmse", number_or_null(s.mean_rmse())}};
}

ErrorSummary error_summary_from_json(const nlohmann::json& doc) {
    try {
        ErrorSummary s;
        s.scenario = doc.value("scenario", std::string{});
        s.channels = doc.at("channels").get<std::vector<std::string>>();
        for (const auto& v : doc.at("rmse")) s.rmse.push_back(number_from(v));
        for (const auto& v : doc.at("nrmse_pct")) s.nrmse_pct.push_back(number_from(v));
        if (doc.contains("fit_pct"))
            for (const auto& v : doc.at("fit_pct")) s.fit_pct.push_back(number_from(v));
        if (s.rmse.size() != s.channels.size() || s.nrmse_pct.size() != s.channels.size()) {
            throw Error(ErrorCode::Config, "error summary '" + s.scenario + "': per-channel arrays differ in length");
        }
        s.fit_pct.resize(s.channels.size(), kNaN);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("error summary: ") + e.what());
    }
}

nlohmann::json SuiteReport::to_json() const {
    nlohmann::json per_channel = nlohmann::json::array();
    for (std::size_t c = 0; c < channels.size(); ++c) {
        per_channel.push_back({{"channel", channels[c]},
                               {"rmse", udm::to_json(rmse[c])},
                               {"nrmse_pct", udm::to_json(nrmse_pct[c])}});
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : scenarios) rows.push_back(udm::to_json(s));
    return {{"quartile_method", "linear-interpolation (type 7)"},
            {"scenario_count", scenarios.size()},
            {"per_channel", per_channel},
            {"per_scenario_mean", {{"rmse", udm::to_json(mean_rmse)}, {"nrmse_pct", udm::to_json(mean_nrmse_pct)}}},
            {"scenarios", rows}};
}

std::string SuiteReport::boxplot_csv() const {
    std::ostringstream out;
    auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
    out << "channel,scenario,mean_rmse,nrmse_pct\n";
    for (std::size_t c = 0; c < channels.size(); ++c) {
        for (const auto& s : scenarios) {
            out << channels[c] << ',' << s.scenario << ',' << num(s.rmse[c]) << ',' << num(s.nrmse_pct[c]) << '\n';
        }
    }
    for (const auto& s : scenarios) {
        out << "mean," << s.scenario << ',' << num(s.mean_rmse()) << ',' << num(s.mean_nrmse_pct()) << '\n';
    }
    return out.str();
}

} // namespace udm
