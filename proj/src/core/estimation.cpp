#include "estimation.hpp"

#include "error.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include <unsupported/Eigen/FFT>

namespace udm {

void FitConfig::validate() const {
    if (max_els_iterations < 1) throw Error(ErrorCode::Config, "max_els_iterations must be >= 1");
    if (!(els_tolerance > 0.0)) throw Error(ErrorCode::Config, "els_tolerance must be > 0");
    if (!(ridge >= 0.0)) throw Error(ErrorCode::Config, "ridge must be >= 0");
    if (!(forgetting > 0.0 && forgetting <= 1.0)) throw Error(ErrorCode::Config, "forgetting must be in (0, 1]");
    if (!(initial_covariance_scale > 0.0)) throw Error(ErrorCode::Config, "initial_covariance_scale must be > 0");
}

nlohmann::json to_json(const FitConfig& cfg) {
    return {{"max_els_iterations", cfg.max_els_iterations},
            {"els_tolerance", cfg.els_tolerance},
            {"ridge", cfg.ridge},
            {"forgetting", cfg.forgetting},
            {"initial_covariance_scale", cfg.initial_covariance_scale},
            {"scaler", std::string(to_string(cfg.scaler_mode))},
            {"residual_convention", cfg.residual_convention == ResidualConvention::APriori ? "a-priori" : "a-posteriori"}};
}

FitConfig fit_config_from_json(const nlohmann::json& doc) {
    FitConfig cfg;
    try {
        cfg.max_els_iterations = doc.value("max_els_iterations", cfg.max_els_iterations);
        cfg.els_tolerance = doc.value("els_tolerance", cfg.els_tolerance);
        cfg.ridge = doc.value("ridge", cfg.ridge);
        cfg.forgetting = doc.value("forgetting", cfg.forgetting);
        cfg.initial_covariance_scale = doc.value("initial_covariance_scale", cfg.initial_covariance_scale);
        if (doc.contains("scaler")) cfg.scaler_mode = scaler_mode_from_string(doc.at("scaler").get<std::string>());
        if (doc.contains("residual_convention")) {
            const auto c = doc.at("residual_convention").get<std::string>();
            if (c == "a-priori") cfg.residual_convention = ResidualConvention::APriori;
            else if (c == "a-posteriori") cfg.residual_convention = ResidualConvention::APosteriori;
            else throw Error(ErrorCode::Config, "fit.residual_convention: unknown value '" + c + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("fit config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

bool FitReport::converged() const {
    return std::all_of(outputs.begin(), outputs.end(), [](const auto& o) { return o.converged; });
}

nlohmann::json to_json(const FitReport& report, const std::vector<std::string>& output_names) {
    nlohmann::json outs = nlohmann::json::array();
    for (std::size_t m = 0; m < report.outputs.size(); ++m) {
        const auto& o = report.outputs[m];
        outs.push_back({{"output", m < output_names.size() ? output_names[m] : std::to_string(m)},
                        {"sse", o.sse},
                        {"iterations", o.iterations},
                        {"converged", o.converged},
                        {"final_change", o.final_change},
                        {"condition_number_estimate", o.condition_number_estimate}});
    }
    return {{"converged", report.converged()}, {"outputs", outs}};
}

LeastSquaresSolution solve_normal_equations(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& target,
                                            double ridge) {
    const auto p = regressors.cols();
    Eigen::MatrixXd gram = regressors.transpose() * regressors;
    const Eigen::VectorXd rhs = regressors.transpose() * target;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    // Exact collinearity (constant or duplicated excitation) is reported, not regularized away.
    const double floor = 10.0 * static_cast<double>(p) * std::numeric_limits<double>::epsilon() * lmax;
    if (!(lmax > 0.0) || lmin <= floor) {
        throw Error(ErrorCode::SingularNormalEquations,
                    "regressor matrix is rank deficient (eigenvalues " + format_double(lmin) + " .. " +
                        format_double(lmax) + "); check for constant or degenerate excitation");
    }
    gram.diagonal().array() += ridge;
    LeastSquaresSolution sol;
    sol.theta = gram.ldlt().solve(rhs);
    sol.condition_number_estimate = (lmax + ridge) / (lmin + ridge);
    if (!sol.theta.allFinite()) {
        throw Error(ErrorCode::SingularNormalEquations, "normal equations produced non-finite coefficients");
    }
    return sol;
}

Eigen::MatrixXd filter_residuals(const ArmaxModel& model, const TimeSeriesDataset& scaled) {
    const auto& o = model.orders();
    const std::size_t start = o.max_lag();
    const auto n = static_cast<Eigen::Index>(scaled.rows());
    const auto& u = scaled.inputs();
    const auto& y = scaled.outputs();
    Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(model.n_outputs()));
    for (Eigen::Index m = 0; m < eps.cols(); ++m) {
        const auto& c = model.coefficients(static_cast<std::size_t>(m));
        for (Eigen::Index t = static_cast<Eigen::Index>(start); t < n; ++t) {
            const double yhat = evaluate_output(
                c, o, [&](std::size_t i) { return y(t - static_cast<Eigen::Index>(i), m); },
                [&](std::size_t j, std::size_t k) { return u(t - static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)); },
                [&](std::size_t i) { return eps(t - static_cast<Eigen::Index>(i), m); });
            eps(t, m) = y(t, m) - yhat;
        }
    }
    return eps;
}

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const auto tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Reflects roots of 1 + sum beta_i z^-i that lie on or outside the unit circle
// to their reciprocals so the residual filter stays stable.
std::vector<double> minimum_phase(const std::vector<double>& beta) {
    const auto n = static_cast<Eigen::Index>(beta.size());
    if (n == 0) return beta;
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) companion(0, i) = -beta[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    const Eigen::VectorXcd roots = companion.eigenvalues();
    constexpr double limit = 0.999;
    bool reflect = false;
    for (Eigen::Index i = 0; i < n; ++i) reflect = reflect || std::abs(roots(i)) >= limit;
    if (!reflect) return beta;
    std::vector<std::complex<double>> poly{1.0};
    for (Eigen::Index i = 0; i < n; ++i) {
        std::complex<double> r = roots(i);
        const double mag = std::abs(r);
        if (mag >= 1.0) r = 1.0 / std::conj(r);
        if (std::abs(r) >= limit) r *= limit / std::abs(r);
        std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
        for (std::size_t k = 0; k < poly.size(); ++k) {
            next[k] += poly[k];
            next[k + 1] -= r * poly[k];
        }
        poly = std::move(next);
    }
    std::vector<double> out(beta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = poly[i + 1].real();
    return out;
}

double sse_from(const Eigen::MatrixXd& eps, Eigen::Index m, std::size_t start) {
    const auto n = eps.rows() - static_cast<Eigen::Index>(start);
    return eps.col(m).tail(n).squaredNorm();
}

} // namespace

FitResult fit_batch_els(const TimeSeriesDataset& data, const ArmaxOrders& orders, const FitConfig& cfg) {
    cfg.validate();
    orders.validate(data.n_inputs());
    const std::size_t n_par = orders.parameter_count(data.n_inputs());
    if (data.rows() <= orders.max_lag() + n_par) {
        throw Error(ErrorCode::InsufficientData, std::to_string(data.rows()) + " rows cannot fit " +
                                                     std::to_string(n_par) + " parameters with max lag " +
                                                     std::to_string(orders.max_lag()));
    }
    const auto scaler = fit_scaler(data, cfg.scaler_mode);
    const auto scaled = apply_scaler(scaler, data);
    const std::size_t n_out = data.n_outputs();
    const std::size_t n_in = data.n_inputs();
    const std::size_t start = orders.max_lag();

    FitReport report;
    report.outputs.resize(n_out);
    std::vector<OutputCoefficients> coeffs(n_out, OutputCoefficients::zeros(orders, n_in));

    // Iteration 0: ARX (no MA columns).
    const auto arx = build_regressor(scaled, orders, nullptr);
    for (std::size_t m = 0; m < n_out; ++m) {
        const auto sol = solve_normal_equations(arx[m].regressors, arx[m].target, cfg.ridge);
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_par));
        theta.head(sol.theta.size()) = sol.theta;
        coeffs[m] = OutputCoefficients::unpack(theta, orders, n_in);
        report.outputs[m].condition_number_estimate = sol.condition_number_estimate;
        report.outputs[m].iterations = 1;
    }

    auto make_model = [&](const std::vector<OutputCoefficients>& c) {
        return ArmaxModel(orders, data.input_names(), data.output_names(), c, scaler);
    };

    if (orders.nc == 0 || cfg.max_els_iterations == 1) {
        const auto eps = filter_residuals(make_model(coeffs), scaled);
        for (std::size_t m = 0; m < n_out; ++m) {
            report.outputs[m].sse = sse_from(eps, static_cast<Eigen::Index>(m), start);
            report.outputs[m].converged = orders.nc == 0;
            report.outputs[m].final_change = 0.0;
        }
    } else {
        std::vector<bool> done(n_out, false);
        std::vector<OutputCoefficients> best = coeffs;
        std::vector<double> best_sse(n_out, std::numeric_limits<double>::infinity());
        for (std::size_t m = 0; m < n_out; ++m) report.outputs[m].final_change = std::numeric_limits<double>::infinity();

        for (std::size_t it = 1; it < cfg.max_els_iterations; ++it) {
            const auto eps = filter_residuals(make_model(coeffs), scaled);
            if (std::all_of(done.begin(), done.end(), [](bool d) { return d; })) break;
            const auto rows = build_regressor(scaled, orders, &eps);
            for (std::size_t m = 0; m < n_out; ++m) {
                if (done[m]) continue;
                const auto mi = static_cast<Eigen::Index>(m);
                const double sse = sse_from(eps, mi, start);
                if (!std::isfinite(sse)) {
                    // Residual filter diverged (MA polynomial left the unit disk).
                    done[m] = true;
                    continue;
                }
                if (sse < best_sse[m]) {
                    best_sse[m] = sse;
                    best[m] = coeffs[m];
                }
                const auto sol = solve_normal_equations(rows[m].regressors, rows[m].target, cfg.ridge);
                const Eigen::VectorXd prev = coeffs[m].pack();
                const double change = (sol.theta - prev).norm() / std::max(prev.norm(), 1e-300);
                coeffs[m] = OutputCoefficients::unpack(sol.theta, orders, n_in);
                coeffs[m].beta = minimum_phase(coeffs[m].beta);
                report.outputs[m].iterations = it + 1;
                report.outputs[m].final_change = change;
                report.outputs[m].condition_number_estimate = sol.condition_number_estimate;
                if (change < cfg.els_tolerance) {
                    report.outputs[m].converged = true;
                    done[m] = true;
                }
            }
        }
        const auto eps = filter_residuals(make_model(coeffs), scaled);
        for (std::size_t m = 0; m < n_out; ++m) {
            const double sse = sse_from(eps, static_cast<Eigen::Index>(m), start);
            if (report.outputs[m].converged || (std::isfinite(sse) && sse <= best_sse[m])) {
                report.outputs[m].sse = sse;
            } else {
                coeffs[m] = best[m];
                report.outputs[m].sse = best_sse[m];
            }
        }
    }

    FitMetadata meta;
    meta.method = "els";
    meta.timestamp = now_iso8601();
    meta.train_first = 0;
    meta.train_rows = data.rows();
    for (const auto& o : report.outputs) meta.iterations = std::max(meta.iterations, o.iterations);
    for (const auto& c : coeffs) meta.stability.push_back(check_stability(c.alpha));
    return {ArmaxModel(orders, data.input_names(), data.output_names(), std::move(coeffs), scaler, std::move(meta)),
            std::move(report)};
}

RlsState rls_init(const ArmaxOrders& orders, std::size_t n_inputs, std::size_t n_outputs, const FitConfig& cfg) {
    cfg.validate();
    orders.validate(n_inputs);
    const auto p = static_cast<Eigen::Index>(orders.parameter_count(n_inputs));
    RlsState s;
    s.orders = orders;
    s.n_inputs = n_inputs;
    s.forgetting = cfg.forgetting;
    s.convention = cfg.residual_convention;
    s.outputs.resize(n_outputs);
    for (auto& o : s.outputs) {
        o.theta = Eigen::VectorXd::Zero(p);
        o.covariance = cfg.initial_covariance_scale * Eigen::MatrixXd::Identity(p, p);
        o.residuals.assign(orders.nc, 0.0);
    }
    return s;
}

RlsState rls_init(const ArmaxModel& model, const FitConfig& cfg) {
    auto s = rls_init(model.orders(), model.n_inputs(), model.n_outputs(), cfg);
    for (std::size_t m = 0; m < model.n_outputs(); ++m) {
        s.outputs[m].theta = model.coefficients(m).pack();
    }
    return s;
}

double rls_update(RlsState& state, std::size_t output, const Eigen::VectorXd& phi, double y) {
    auto& s = state.outputs.at(output);
    if (phi.size() != s.theta.size()) {
        throw Error(ErrorCode::DimensionMismatch, "regressor has " + std::to_string(phi.size()) + " entries, state " +
                                                      std::to_string(s.theta.size()));
    }
    const double lambda = state.forgetting;
    const Eigen::VectorXd p_phi = s.covariance * phi;
    const double denom = lambda + phi.dot(p_phi);
    const Eigen::VectorXd gain = p_phi / denom;
    const double prior = y - phi.dot(s.theta);
    Eigen::VectorXd theta = s.theta + gain * prior;
    Eigen::MatrixXd cov = (s.covariance - gain * p_phi.transpose()) / lambda;
    cov = 0.5 * (cov + cov.transpose());
    if (!std::isfinite(denom) || !theta.allFinite() || !cov.allFinite()) {
        throw Error(ErrorCode::NonFiniteUpdate, "output " + std::to_string(output) + " after " +
                                                    std::to_string(s.updates) + " updates; re-initialize the state");
    }
    s.theta = std::move(theta);
    s.covariance = std::move(cov);
    ++s.updates;
    if (!s.residuals.empty()) {
        const double pushed = state.convention == ResidualConvention::APriori ? prior : y - phi.dot(s.theta);
        std::rotate(s.residuals.rbegin(), s.residuals.rbegin() + 1, s.residuals.rend());
        s.residuals.front() = pushed;
    }
    return prior;
}

Eigen::MatrixXd rls_run(RlsState& state, const TimeSeriesDataset& scaled) {
    const auto& o = state.orders;
    if (scaled.n_inputs() != state.n_inputs || scaled.n_outputs() != state.outputs.size()) {
        throw Error(ErrorCode::ChannelMismatch, "dataset channels do not match the recursive state");
    }
    const std::size_t start = o.max_lag();
    const auto n = static_cast<Eigen::Index>(scaled.rows());
    if (scaled.rows() <= start) {
        throw Error(ErrorCode::InsufficientData, "recursive fit needs more than " + std::to_string(start) + " rows");
    }
    const auto& u = scaled.inputs();
    const auto& y = scaled.outputs();
    const auto p = static_cast<Eigen::Index>(o.parameter_count(state.n_inputs));
    Eigen::MatrixXd priors = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(state.outputs.size()));
    Eigen::VectorXd phi(p);
    for (Eigen::Index t = static_cast<Eigen::Index>(start); t < n; ++t) {
        for (std::size_t m = 0; m < state.outputs.size(); ++m) {
            const auto mi = static_cast<Eigen::Index>(m);
            Eigen::Index k = 0;
            for (std::size_t i = 1; i <= o.na; ++i) phi(k++) = y(t - static_cast<Eigen::Index>(i), mi);
            for (Eigen::Index j = 0; j < u.cols(); ++j)
                for (std::size_t i = 1; i <= o.nb; ++i) phi(k++) = u(t - static_cast<Eigen::Index>(o.nk + i - 1), j);
            for (std::size_t i = 0; i < o.nc; ++i) phi(k++) = state.outputs[m].residuals[i];
            priors(t, mi) = rls_update(state, m, phi, y(t, mi));
        }
    }
    return priors;
}

ArmaxModel finalize_rls(const RlsState& state, const ArmaxModel& tpl) {
    if (!(state.orders == tpl.orders()) || state.n_inputs != tpl.n_inputs() || state.outputs.size() != tpl.n_outputs()) {
        throw Error(ErrorCode::DimensionMismatch, "recursive state dimensions differ from the template model");
    }
    std::vector<OutputCoefficients> coeffs;
    for (const auto& o : state.outputs) coeffs.push_back(OutputCoefficients::unpack(o.theta, state.orders, state.n_inputs));
    FitMetadata meta = tpl.metadata();
    meta.method = "rls";
    meta.iterations = state.outputs.empty() ? 0 : state.outputs.front().updates;
    meta.stability.clear();
    for (const auto& c : coeffs) meta.stability.push_back(check_stability(c.alpha));
    return {tpl.orders(), tpl.input_names(), tpl.output_names(), std::move(coeffs), tpl.scaler(), std::move(meta)};
}

double spectral_entropy(const TimeSeriesDataset& data) {
    const std::size_t n = data.rows();
    std::size_t size = 1;
    while (size < n) size <<= 1;
    double total = 0.0;
    Eigen::FFT<double> fft;
    for (Eigen::Index c = 0; c < data.outputs().cols(); ++c) {
        const auto col = data.outputs().col(c);
        const double mean = col.mean();
        std::vector<double> signal(size, 0.0);
        for (std::size_t i = 0; i < n; ++i) signal[i] = col(static_cast<Eigen::Index>(i)) - mean;
        std::vector<std::complex<double>> buf;
        fft.fwd(buf, signal);
        const std::size_t bins = size / 2 + 1;
        std::vector<double> power(bins);
        double sum = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            power[k] = std::norm(buf[k]);
            sum += power[k];
        }
        if (!(sum > 0.0) || bins < 2) continue;
        double h = 0.0;
        for (double p : power) {
            if (p > 0.0) h -= (p / sum) * std::log(p / sum);
        }
        total += h / std::log(static_cast<double>(bins));
    }
    return data.n_outputs() > 0 ? total / static_cast<double>(data.n_outputs()) : 0.0;
}

std::size_t select_richest(const std::vector<TimeSeriesDataset>& candidates) {
    if (candidates.empty()) throw Error(ErrorCode::EmptyDataset, "no candidate training datasets");
    std::size_t best = 0;
    double best_h = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double h = spectral_entropy(candidates[i]);
        if (h > best_h) {
            best_h = h;
            best = i;
        }
    }
    return best;
}

} // namespace udm
