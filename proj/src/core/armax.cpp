#include "armax.hpp"

#include "error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace udm {

std::size_t ArmaxOrders::max_lag() const noexcept {
    const std::size_t exo = nb > 0 ? nb + nk - 1 : 0;
    return std::max({na, nc, exo});
}

void ArmaxOrders::validate(std::size_t n_inputs) const {
    if (parameter_count(n_inputs) < 1) {
        throw Error(ErrorCode::InvalidArgument, "orders na + nb*n_inputs + nc must be >= 1");
    }
}

OutputCoefficients OutputCoefficients::zeros(const ArmaxOrders& orders, std::size_t n_inputs) {
    OutputCoefficients c;
    c.alpha.assign(orders.na, 0.0);
    c.gamma.assign(n_inputs, std::vector<double>(orders.nb, 0.0));
    c.beta.assign(orders.nc, 0.0);
    return c;
}

Eigen::VectorXd OutputCoefficients::pack() const {
    std::size_t n = alpha.size() + beta.size();
    for (const auto& g : gamma) n += g.size();
    Eigen::VectorXd theta(static_cast<Eigen::Index>(n));
    Eigen::Index k = 0;
    for (double a : alpha) theta(k++) = a;
    for (const auto& g : gamma)
        for (double v : g) theta(k++) = v;
    for (double b : beta) theta(k++) = b;
    return theta;
}

OutputCoefficients OutputCoefficients::unpack(const Eigen::VectorXd& theta, const ArmaxOrders& orders,
                                              std::size_t n_inputs) {
    if (static_cast<std::size_t>(theta.size()) != orders.parameter_count(n_inputs)) {
        throw Error(ErrorCode::DimensionMismatch, "coefficient vector has " + std::to_string(theta.size()) +
                                                      " entries, orders need " +
                                                      std::to_string(orders.parameter_count(n_inputs)));
    }
    auto c = zeros(orders, n_inputs);
    Eigen::Index k = 0;
    for (auto& a : c.alpha) a = theta(k++);
    for (auto& g : c.gamma)
        for (auto& v : g) v = theta(k++);
    for (auto& b : c.beta) b = theta(k++);
    return c;
}

ArmaxModel::ArmaxModel(ArmaxOrders orders, std::vector<std::string> input_names, std::vector<std::string> output_names,
                       std::vector<OutputCoefficients> coefficients, ScalerParams scaler, FitMetadata meta)
    : orders_(orders),
      input_names_(std::move(input_names)),
      output_names_(std::move(output_names)),
      coefficients_(std::move(coefficients)),
      scaler_(std::move(scaler)),
      meta_(std::move(meta)) {
    orders_.validate(input_names_.size());
    if (output_names_.empty()) {
        throw Error(ErrorCode::InvalidArgument, "model needs at least one output");
    }
    if (coefficients_.size() != output_names_.size()) {
        throw Error(ErrorCode::DimensionMismatch, std::to_string(coefficients_.size()) +
                                                      " coefficient sets for " + std::to_string(output_names_.size()) +
                                                      " outputs");
    }
    for (std::size_t m = 0; m < coefficients_.size(); ++m) {
        const auto& c = coefficients_[m];
        bool ok = c.alpha.size() == orders_.na && c.beta.size() == orders_.nc && c.gamma.size() == n_inputs();
        for (const auto& g : c.gamma) ok = ok && g.size() == orders_.nb;
        if (!ok) {
            throw Error(ErrorCode::DimensionMismatch,
                        "coefficients of output '" + output_names_[m] + "' do not match the model orders");
        }
    }
    if (scaler_.n_inputs() != n_inputs() || scaler_.n_outputs() != n_outputs()) {
        throw Error(ErrorCode::ChannelCountMismatch, "scaler channel counts do not match the model");
    }
}

ArmaxModel ArmaxModel::with_metadata(FitMetadata meta) const {
    ArmaxModel copy = *this;
    copy.meta_ = std::move(meta);
    return copy;
}

PhysicalCoefficients physical_coefficients(const ArmaxModel& model, std::size_t output) {
    const auto& s = model.scaler();
    const auto& c = model.coefficients(output);
    PhysicalCoefficients p;
    p.coefficients = c;
    const double gy = s.output_gain[output];
    const double oy = s.output_offset[output];
    double ar_sum = 0.0;
    for (double a : c.alpha) ar_sum += a;
    double intercept = oy * (1.0 - ar_sum);
    for (std::size_t j = 0; j < c.gamma.size(); ++j) {
        const double ratio = gy / s.input_gain[j];
        for (std::size_t i = 0; i < c.gamma[j].size(); ++i) {
            p.coefficients.gamma[j][i] = c.gamma[j][i] * ratio;
            intercept -= c.gamma[j][i] * ratio * s.input_offset[j];
        }
    }
    p.intercept = intercept;
    return p;
}

std::vector<RegressionRows> build_regressor(const TimeSeriesDataset& data, const ArmaxOrders& orders,
                                            const Eigen::MatrixXd* residuals) {
    const std::size_t lag = orders.max_lag();
    const std::size_t n = data.rows();
    if (n <= lag) {
        throw Error(ErrorCode::InsufficientData, "N_T = " + std::to_string(n) + " rows but max lag is " +
                                                     std::to_string(lag));
    }
    if (residuals != nullptr && (static_cast<std::size_t>(residuals->rows()) != n ||
                                 static_cast<std::size_t>(residuals->cols()) != data.n_outputs())) {
        throw Error(ErrorCode::DimensionMismatch, "residuals are not aligned with the dataset rows");
    }
    const bool with_ma = residuals != nullptr;
    const std::size_t cols = orders.na + orders.nb * data.n_inputs() + (with_ma ? orders.nc : 0);
    const auto rows = static_cast<Eigen::Index>(n - lag);

    const auto& u = data.inputs();
    const auto& y = data.outputs();
    std::vector<RegressionRows> out;
    for (std::size_t m = 0; m < data.n_outputs(); ++m) {
        const auto mi = static_cast<Eigen::Index>(m);
        RegressionRows rr;
        rr.first_row = lag;
        rr.regressors.resize(rows, static_cast<Eigen::Index>(cols));
        rr.target.resize(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto t = static_cast<Eigen::Index>(lag) + r;
            Eigen::Index k = 0;
            for (std::size_t i = 1; i <= orders.na; ++i) rr.regressors(r, k++) = y(t - static_cast<Eigen::Index>(i), mi);
            for (Eigen::Index j = 0; j < u.cols(); ++j) {
                for (std::size_t i = 1; i <= orders.nb; ++i) {
                    rr.regressors(r, k++) = u(t - static_cast<Eigen::Index>(orders.nk + i - 1), j);
                }
            }
            if (with_ma) {
                for (std::size_t i = 1; i <= orders.nc; ++i) {
                    rr.regressors(r, k++) = (*residuals)(t - static_cast<Eigen::Index>(i), mi);
                }
            }
            rr.target(r) = y(t, mi);
        }
        out.push_back(std::move(rr));
    }
    return out;
}

Eigen::VectorXd predict_one_step(const ArmaxModel& model, const LagHistory& h) {
    const auto& o = model.orders();
    auto shortfall = [](const std::string& what) { throw Error(ErrorCode::LagShortfall, what); };
    if (h.y.size() < model.n_outputs() || h.e.size() < model.n_outputs() || h.u.size() < model.n_inputs()) {
        shortfall("history does not cover every channel");
    }
    for (std::size_t m = 0; m < model.n_outputs(); ++m) {
        if (h.y[m].size() < o.na) shortfall("output " + std::to_string(m) + " needs " + std::to_string(o.na) + " lags");
        if (h.e[m].size() < o.nc) shortfall("output " + std::to_string(m) + " needs " + std::to_string(o.nc) + " residual lags");
    }
    for (std::size_t j = 0; j < model.n_inputs(); ++j) {
        if (o.nb > 0 && h.u[j].size() < o.nb + o.nk) {
            shortfall("input " + std::to_string(j) + " needs " + std::to_string(o.nb + o.nk) + " lags");
        }
    }
    Eigen::VectorXd yhat(static_cast<Eigen::Index>(model.n_outputs()));
    for (std::size_t m = 0; m < model.n_outputs(); ++m) {
        yhat(static_cast<Eigen::Index>(m)) = evaluate_output(
            model.coefficients(m), o, [&](std::size_t i) { return h.y[m][i - 1]; },
            [&](std::size_t j, std::size_t k) { return h.u[j][k]; }, [&](std::size_t i) { return h.e[m][i - 1]; });
    }
    return yhat;
}

FeedbackMode FeedbackMode::parse(std::string_view text) {
    if (text == "measured") return measured();
    if (text == "freerun" || text == "free-run") return free_run();
    constexpr std::string_view prefix = "measured-until:";
    if (text.substr(0, prefix.size()) == prefix) {
        const auto digits = text.substr(prefix.size());
        std::size_t k = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) {
            return measured_until(k);
        }
    }
    throw Error(ErrorCode::Config, "unknown feedback mode '" + std::string(text) + "'");
}

std::string FeedbackMode::to_string() const {
    switch (kind_) {
    case Kind::Measured: return "measured";
    case Kind::FreeRun: return "freerun";
    case Kind::MeasuredUntil: return "measured-until:" + std::to_string(until_);
    }
    return "measured";
}

namespace {

void check_channels(const ArmaxModel& model, const TimeSeriesDataset& data) {
    if (data.n_inputs() != model.n_inputs() || data.n_outputs() != model.n_outputs()) {
        throw Error(ErrorCode::ChannelMismatch, "dataset has " + std::to_string(data.n_inputs()) + " inputs/" +
                                                    std::to_string(data.n_outputs()) + " outputs, model " +
                                                    std::to_string(model.n_inputs()) + "/" +
                                                    std::to_string(model.n_outputs()));
    }
    auto same = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].empty() && !b[i].empty() && a[i] != b[i]) return false;
        }
        return true;
    };
    if (!same(data.input_names(), model.input_names()) || !same(data.output_names(), model.output_names())) {
        throw Error(ErrorCode::ChannelMismatch, "dataset channel names differ from the model's");
    }
}

} // namespace

HorizonPrediction predict_horizon(const ArmaxModel& model, const TimeSeriesDataset& data, FeedbackMode mode) {
    check_channels(model, data);
    const auto& o = model.orders();
    const std::size_t start = o.max_lag();
    const std::size_t n = data.rows();
    if (n <= start) {
        throw Error(ErrorCode::LagShortfall, std::to_string(n) + " rows cannot seed " + std::to_string(start) + " lags");
    }
    if (mode.kind() == FeedbackMode::Kind::MeasuredUntil && mode.until() > n) {
        throw Error(ErrorCode::InvalidArgument, "measured-until step " + std::to_string(mode.until()) +
                                                    " beyond horizon " + std::to_string(n));
    }
    const auto scaled = apply_scaler(model.scaler(), data);
    const auto& us = scaled.inputs();
    const auto& ys = scaled.outputs();
    const auto m_count = static_cast<Eigen::Index>(model.n_outputs());

    auto measured_at = [&](std::size_t s) {
        if (s < start) return true;
        switch (mode.kind()) {
        case FeedbackMode::Kind::Measured: return true;
        case FeedbackMode::Kind::FreeRun: return false;
        case FeedbackMode::Kind::MeasuredUntil: return s < mode.until();
        }
        return true;
    };

    // Lags actually fed to the recursion: measured or previously predicted.
    Eigen::MatrixXd y_used = ys;
    Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), m_count);

    HorizonPrediction out;
    out.first_row = start;
    out.predicted.resize(static_cast<Eigen::Index>(n - start), m_count);
    out.residuals.resize(static_cast<Eigen::Index>(n - start), m_count);

    for (std::size_t t = start; t < n; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const bool have_y = measured_at(t);
        for (Eigen::Index m = 0; m < m_count; ++m) {
            const double yhat = evaluate_output(
                model.coefficients(static_cast<std::size_t>(m)), o,
                [&](std::size_t i) { return y_used(ti - static_cast<Eigen::Index>(i), m); },
                [&](std::size_t j, std::size_t k) { return us(ti - static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)); },
                [&](std::size_t i) { return eps(ti - static_cast<Eigen::Index>(i), m); });
            const double err = ys(ti, m) - yhat;
            y_used(ti, m) = have_y ? ys(ti, m) : yhat;
            eps(ti, m) = have_y ? err : 0.0;
            const auto r = ti - static_cast<Eigen::Index>(start);
            out.predicted(r, m) = model.scaler().unscale_output(static_cast<std::size_t>(m), yhat);
            out.residuals(r, m) = err;
        }
    }
    return out;
}

StabilityReport check_stability(const std::vector<double>& alpha) {
    StabilityReport rep;
    const auto n = static_cast<Eigen::Index>(alpha.size());
    if (n == 0) {
        return rep;
    }
    // Companion matrix of z^n - a1 z^{n-1} - ... - an.
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) companion(0, i) = alpha[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    rep.max_root_magnitude = solver.eigenvalues().cwiseAbs().maxCoeff();
    rep.stable = rep.max_root_magnitude < 1.0;
    return rep;
}

std::vector<StabilityReport> check_stability(const ArmaxModel& model) {
    std::vector<StabilityReport> out;
    for (const auto& c : model.coefficients()) out.push_back(check_stability(c.alpha));
    return out;
}

// --- serialization -------------------------------------------------------

nlohmann::json to_json(const ArmaxOrders& orders) {
    return {{"na", orders.na}, {"nb", orders.nb}, {"nc", orders.nc}, {"nk", orders.nk}};
}

ArmaxOrders orders_from_json(const nlohmann::json& doc) {
    ArmaxOrders o;
    o.na = doc.value("na", std::size_t{0});
    o.nb = doc.value("nb", std::size_t{0});
    o.nc = doc.value("nc", std::size_t{0});
    o.nk = doc.value("nk", std::size_t{0});
    return o;
}

nlohmann::json to_json(const ScalerParams& s) {
    return {{"mode", std::string(to_string(s.mode))},
            {"input_offset", s.input_offset},
            {"input_gain", s.input_gain},
            {"output_offset", s.output_offset},
            {"output_gain", s.output_gain}};
}

ScalerParams scaler_from_json(const nlohmann::json& doc) {
    ScalerParams s;
    s.mode = scaler_mode_from_string(doc.at("mode").get<std::string>());
    s.input_offset = doc.at("input_offset").get<std::vector<double>>();
    s.input_gain = doc.at("input_gain").get<std::vector<double>>();
    s.output_offset = doc.at("output_offset").get<std::vector<double>>();
    s.output_gain = doc.at("output_gain").get<std::vector<double>>();
    for (double g : s.input_gain)
        if (!(g > 0.0)) throw Error(ErrorCode::Config, "scaler gains must be positive");
    for (double g : s.output_gain)
        if (!(g > 0.0)) throw Error(ErrorCode::Config, "scaler gains must be positive");
    return s;
}

nlohmann::json to_json(const ArmaxModel& model) {
    nlohmann::json outputs = nlohmann::json::array();
    for (std::size_t m = 0; m < model.n_outputs(); ++m) {
        const auto& c = model.coefficients(m);
        outputs.push_back({{"name", model.output_names()[m]}, {"alpha", c.alpha}, {"gamma", c.gamma}, {"beta", c.beta}});
    }
    const auto& meta = model.metadata();
    nlohmann::json stability = nlohmann::json::array();
    for (const auto& s : meta.stability) {
        stability.push_back({{"stable", s.stable}, {"max_root_magnitude", s.max_root_magnitude}});
    }
    return {{"format", "udm-armax"},
            {"format_version", 1},
            {"orders", to_json(model.orders())},
            {"inputs", model.input_names()},
            {"outputs", model.output_names()},
            {"coefficients", outputs},
            {"scaler", to_json(model.scaler())},
            {"fit",
             {{"method", meta.method},
              {"train_first", meta.train_first},
              {"train_rows", meta.train_rows},
              {"iterations", meta.iterations},
              {"seed", meta.seed},
              {"config_hash", meta.config_hash},
              {"version", meta.version},
              {"stability", stability}}},
            {"metadata", {{"timestamp", meta.timestamp}}}};
}

ArmaxModel model_from_json(const nlohmann::json& doc) {
    try {
        const auto orders = orders_from_json(doc.at("orders"));
        auto inputs = doc.at("inputs").get<std::vector<std::string>>();
        auto outputs = doc.at("outputs").get<std::vector<std::string>>();
        std::vector<OutputCoefficients> coeffs;
        for (const auto& c : doc.at("coefficients")) {
            OutputCoefficients oc;
            oc.alpha = c.at("alpha").get<std::vector<double>>();
            oc.gamma = c.at("gamma").get<std::vector<std::vector<double>>>();
            oc.beta = c.at("beta").get<std::vector<double>>();
            coeffs.push_back(std::move(oc));
        }
        FitMetadata meta;
        if (doc.contains("fit")) {
            const auto& f = doc.at("fit");
            meta.method = f.value("method", std::string{});
            meta.train_first = f.value("train_first", std::size_t{0});
            meta.train_rows = f.value("train_rows", std::size_t{0});
            meta.iterations = f.value("iterations", std::size_t{0});
            meta.seed = f.value("seed", std::uint64_t{0});
            meta.config_hash = f.value("config_hash", std::string{});
            meta.version = f.value("version", std::size_t{1});
            if (f.contains("stability")) {
                for (const auto& s : f.at("stability")) {
                    meta.stability.push_back({s.at("stable").get<bool>(), s.at("max_root_magnitude").get<double>()});
                }
            }
        }
        if (doc.contains("metadata")) {
            meta.timestamp = doc.at("metadata").value("timestamp", std::string{});
        }
        return {orders, std::move(inputs), std::move(outputs), std::move(coeffs), scaler_from_json(doc.at("scaler")),
                std::move(meta)};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("malformed model document: ") + e.what());
    }
}

void save_model(const ArmaxModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    }
    out << to_json(model).dump(2) << '\n';
}

ArmaxModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, "'" + path.string() + "': " + e.what());
    }
    return model_from_json(doc);
}

} // namespace udm
