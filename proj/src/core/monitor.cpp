#include "monitor.hpp"

#include "error.hpp"

#include <cmath>
#include <sstream>

namespace udm {

void MonitorConfig::validate() const {
    if (window < 2) throw Error(ErrorCode::Config, "monitor.window: must be >= 2");
    if (patience < 1) throw Error(ErrorCode::Config, "monitor.patience: must be >= 1");
    if (recal_history < window) throw Error(ErrorCode::Config, "monitor.recal_history: must be >= window");
    if (!(threshold > 0.0)) throw Error(ErrorCode::Config, "monitor.threshold: must be > 0");
    fit.validate();
}

nlohmann::json to_json(const MonitorConfig& cfg) {
    nlohmann::json doc = {{"window", cfg.window},
                          {"threshold", std::isfinite(cfg.threshold) ? nlohmann::json(cfg.threshold) : nlohmann::json("inf")},
                          {"patience", cfg.patience},
                          {"recal_history", cfg.recal_history},
                          {"recal_method", cfg.recal_method == RecalMethod::BatchEls ? "batch_els" : "warm_rls"},
                          {"cooldown", cfg.cooldown_samples()},
                          {"periodic_refit", cfg.periodic_refit},
                          {"fit", to_json(cfg.fit)}};
    return doc;
}

MonitorConfig monitor_config_from_json(const nlohmann::json& doc) {
    MonitorConfig cfg;
    try {
        cfg.window = doc.value("window", cfg.window);
        if (doc.contains("threshold")) {
            const auto& t = doc.at("threshold");
            cfg.threshold = t.is_string() && t.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                           : t.get<double>();
        }
        cfg.patience = doc.value("patience", cfg.patience);
        cfg.recal_history = doc.value("recal_history", cfg.recal_history);
        if (doc.contains("recal_method")) {
            const auto m = doc.at("recal_method").get<std::string>();
            if (m == "batch_els") cfg.recal_method = RecalMethod::BatchEls;
            else if (m == "warm_rls") cfg.recal_method = RecalMethod::WarmRls;
            else throw Error(ErrorCode::Config, "monitor.recal_method: unknown method '" + m + "'");
        }
        if (doc.contains("cooldown")) cfg.cooldown = doc.at("cooldown").get<std::size_t>();
        cfg.periodic_refit = doc.value("periodic_refit", cfg.periodic_refit);
        if (doc.contains("fit")) cfg.fit = fit_config_from_json(doc.at("fit"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("monitor config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string_view to_string(EventKind kind) noexcept {
    switch (kind) {
    case EventKind::WindowOk: return "WindowOk";
    case EventKind::WindowViolation: return "WindowViolation";
    case EventKind::RecalTriggered: return "RecalTriggered";
    case EventKind::RecalCompleted: return "RecalCompleted";
    case EventKind::FeedbackLost: return "FeedbackLost";
    case EventKind::FeedbackRestored: return "FeedbackRestored";
    }
    return "WindowOk";
}

EventKind event_kind_from_string(std::string_view name) {
    for (auto k : {EventKind::WindowOk, EventKind::WindowViolation, EventKind::RecalTriggered,
                   EventKind::RecalCompleted, EventKind::FeedbackLost, EventKind::FeedbackRestored}) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorCode::Config, "unknown event kind '" + std::string(name) + "'");
}

nlohmann::json to_json(const MonitorEvent& e) {
    return {{"seq", e.seq},
            {"index", e.index},
            {"kind", std::string(to_string(e.kind))},
            {"model_version", e.model_version},
            {"rmse", std::isfinite(e.rmse) ? nlohmann::json(e.rmse) : nlohmann::json(nullptr)},
            {"details", e.details}};
}

MonitorEvent event_from_json(const nlohmann::json& doc) {
    MonitorEvent e;
    e.seq = doc.at("seq").get<std::size_t>();
    e.index = doc.at("index").get<std::size_t>();
    e.kind = event_kind_from_string(doc.at("kind").get<std::string>());
    e.model_version = doc.at("model_version").get<std::size_t>();
    e.rmse = doc.at("rmse").is_null() ? std::numeric_limits<double>::quiet_NaN() : doc.at("rmse").get<double>();
    e.details = doc.value("details", nlohmann::json::object());
    return e;
}

std::string to_jsonl(const std::vector<MonitorEvent>& events) {
    std::ostringstream out;
    for (const auto& e : events) out << to_json(e).dump() << '\n';
    return out.str();
}

std::vector<std::pair<std::size_t, std::size_t>> replay_versions(const std::vector<MonitorEvent>& events) {
    std::vector<std::pair<std::size_t, std::size_t>> timeline{{0, 1}};
    std::size_t active = 1;
    for (const auto& e : events) {
        if (e.kind == EventKind::RecalCompleted && e.model_version != active) {
            active = e.model_version;
            timeline.emplace_back(e.index + 1, active);
        }
    }
    return timeline;
}

namespace {

double mean_rmse_scaled(const ArmaxModel& reference, const ArmaxModel& model, const TimeSeriesDataset& data) {
    const auto pred = predict_horizon(model, data, FeedbackMode::measured());
    double total = 0.0;
    for (Eigen::Index m = 0; m < pred.predicted.cols(); ++m) {
        const auto measured = data.outputs().col(m).tail(pred.predicted.rows());
        const double g = reference.scaler().output_gain[static_cast<std::size_t>(m)];
        const double ss = ((measured - pred.predicted.col(m)) / g).squaredNorm();
        total += std::sqrt(ss / static_cast<double>(pred.predicted.rows()));
    }
    return total / static_cast<double>(pred.predicted.cols());
}

} // namespace

ArmaxModel recalibrate(const ArmaxModel& current, const TimeSeriesDataset& history, const MonitorConfig& cfg) {
    if (history.rows() < cfg.recal_history) {
        throw Error(ErrorCode::InsufficientHistory, std::to_string(history.rows()) + " samples buffered, " +
                                                        std::to_string(cfg.recal_history) + " required");
    }
    try {
        if (cfg.recal_method == RecalMethod::BatchEls) {
            return fit_batch_els(history, current.orders(), cfg.fit).model;
        }
        const auto scaled = apply_scaler(current.scaler(), history);
        auto state = rls_init(current, cfg.fit);
        rls_run(state, scaled);
        auto model = finalize_rls(state, current);
        auto meta = model.metadata();
        meta.train_first = 0;
        meta.train_rows = history.rows();
        return model.with_metadata(std::move(meta));
    } catch (const Error& e) {
        throw Error(ErrorCode::FitFailed, e.what());
    }
}

Monitor::Monitor(ArmaxModel model, MonitorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto meta = model.metadata();
    meta.version = 1;
    versions_.push_back(model.with_metadata(std::move(meta)));
    timeline_.emplace_back(0, 1);
    const auto& o = active_model().orders();
    y_lags_.assign(active_model().n_outputs(), std::deque<double>(o.na, 0.0));
    e_lags_.assign(active_model().n_outputs(), std::deque<double>(o.nc, 0.0));
    u_lags_.assign(active_model().n_inputs(), std::deque<double>(o.nb > 0 ? o.nb + o.nk : 0, 0.0));
    window_.assign(active_model().n_outputs(), {});
}

void Monitor::log(EventKind kind, double rmse, nlohmann::json details) {
    MonitorEvent e;
    e.seq = events_.size();
    e.index = last_index_.value_or(0);
    e.kind = kind;
    e.model_version = active_version();
    e.rmse = rmse;
    e.details = std::move(details);
    events_.push_back(std::move(e));
}

void Monitor::reset_window() {
    for (auto& w : window_) w.clear();
    since_eval_ = 0;
}

Eigen::VectorXd Monitor::rolling_rmse() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(window_.size()));
    for (std::size_t m = 0; m < window_.size(); ++m) {
        double s = 0.0;
        for (double r : window_[m]) s += r * r;
        out(static_cast<Eigen::Index>(m)) =
            window_[m].empty() ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(s / static_cast<double>(window_[m].size()));
    }
    return out;
}

StepResult Monitor::step(std::size_t index, std::span<const double> u, std::span<const double> y) {
    if (last_index_ && index <= *last_index_) {
        throw Error(ErrorCode::OutOfOrderSample,
                    "sample " + std::to_string(index) + " after " + std::to_string(*last_index_));
    }
    const auto& model = active_model();
    const auto& o = model.orders();
    const auto& sc = model.scaler();
    if (u.size() != model.n_inputs()) {
        throw Error(ErrorCode::ChannelMismatch, std::to_string(u.size()) + " inputs for a model with " +
                                                    std::to_string(model.n_inputs()));
    }
    bool present = !y.empty();
    if (present) {
        if (y.size() != model.n_outputs()) {
            throw Error(ErrorCode::ChannelMismatch, std::to_string(y.size()) + " outputs for a model with " +
                                                        std::to_string(model.n_outputs()));
        }
        for (double v : y) present = present && std::isfinite(v);
    }
    last_index_ = index;

    for (std::size_t j = 0; j < u.size(); ++j) {
        auto& q = u_lags_[j];
        if (!q.empty()) {
            q.pop_back();
            q.push_front(u[j]);
        }
    }

    StepResult result;
    const bool ready = seeded_ >= o.max_lag();
    if (present && !feedback_) {
        feedback_ = true;
        reset_window();
        log(EventKind::FeedbackRestored, std::numeric_limits<double>::quiet_NaN(), nlohmann::json::object());
    } else if (!present && feedback_) {
        feedback_ = false;
        log(EventKind::FeedbackLost, std::numeric_limits<double>::quiet_NaN(), nlohmann::json::object());
    }

    const auto n_out = model.n_outputs();
    if (ready) {
        Eigen::VectorXd pred(static_cast<Eigen::Index>(n_out));
        for (std::size_t m = 0; m < n_out; ++m) {
            const double yhat = evaluate_output(
                model.coefficients(m), o, [&](std::size_t i) { return y_lags_[m][i - 1]; },
                [&](std::size_t j, std::size_t k) { return sc.scale_input(j, u_lags_[j][k]); },
                [&](std::size_t i) { return e_lags_[m][i - 1]; });
            pred(static_cast<Eigen::Index>(m)) = sc.unscale_output(m, yhat);
            const double ys = present ? sc.scale_output(m, y[m]) : yhat;
            const double err = present ? ys - yhat : 0.0;
            if (!y_lags_[m].empty()) {
                y_lags_[m].pop_back();
                y_lags_[m].push_front(ys);
            }
            if (!e_lags_[m].empty()) {
                e_lags_[m].pop_back();
                e_lags_[m].push_front(err);
            }
            if (present) {
                window_[m].push_back(err);
                if (window_[m].size() > cfg_.window) window_[m].pop_front();
            }
        }
        result.prediction = std::move(pred);
    } else {
        for (std::size_t m = 0; m < n_out; ++m) {
            if (!y_lags_[m].empty()) {
                y_lags_[m].pop_back();
                y_lags_[m].push_front(present ? sc.scale_output(m, y[m]) : 0.0);
            }
            if (!e_lags_[m].empty()) {
                e_lags_[m].pop_back();
                e_lags_[m].push_front(0.0);
            }
        }
        ++seeded_;
    }

    Eigen::VectorXd u_raw(static_cast<Eigen::Index>(u.size()));
    for (std::size_t j = 0; j < u.size(); ++j) u_raw(static_cast<Eigen::Index>(j)) = u[j];
    Eigen::VectorXd y_raw = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_out), std::numeric_limits<double>::quiet_NaN());
    if (present)
        for (std::size_t m = 0; m < n_out; ++m) y_raw(static_cast<Eigen::Index>(m)) = y[m];
    history_.emplace_back(std::move(u_raw), std::move(y_raw));
    if (history_.size() > cfg_.recal_history) history_.pop_front();

    if (cooldown_left_ > 0) --cooldown_left_;
    ++since_refit_;

    if (ready && present && ++since_eval_ >= cfg_.window) {
        since_eval_ = 0;
        const auto rm = rolling_rmse();
        const double worst = rm.maxCoeff();
        nlohmann::json details = {{"per_output", std::vector<double>(rm.data(), rm.data() + rm.size())},
                                  {"mean", rm.mean()}};
        if (worst > cfg_.threshold) {
            if (cooldown_left_ > 0) {
                details["cooldown"] = true;
                log(EventKind::WindowViolation, worst, std::move(details));
            } else if (++violations_ >= cfg_.patience) {
                details["reason"] = "threshold";
                details["violations"] = violations_;
                violations_ = 0;
                ++triggers_;
                log(EventKind::RecalTriggered, worst, std::move(details));
                result.recal_requested = true;
            } else {
                details["violations"] = violations_;
                log(EventKind::WindowViolation, worst, std::move(details));
            }
        } else {
            violations_ = 0;
            log(EventKind::WindowOk, worst, std::move(details));
        }
    }
    if (!result.recal_requested && cfg_.periodic_refit > 0 && since_refit_ >= cfg_.periodic_refit &&
        cooldown_left_ == 0) {
        ++triggers_;
        log(EventKind::RecalTriggered, std::numeric_limits<double>::quiet_NaN(), {{"reason", "periodic"}});
        result.recal_requested = true;
    }
    return result;
}

RecalOutcome Monitor::recalibrate() {
    RecalOutcome out;
    const auto& current = active_model();
    const auto n = history_.size();
    bool complete = n >= cfg_.recal_history;
    for (const auto& [u, y] : history_) complete = complete && y.allFinite();

    try {
        if (!complete) {
            throw Error(ErrorCode::InsufficientHistory, std::to_string(n) + " buffered samples, " +
                                                            std::to_string(cfg_.recal_history) +
                                                            " fully measured samples required");
        }
        Eigen::MatrixXd u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(current.n_inputs()));
        Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(current.n_outputs()));
        for (std::size_t r = 0; r < n; ++r) {
            u.row(static_cast<Eigen::Index>(r)) = history_[r].first.transpose();
            y.row(static_cast<Eigen::Index>(r)) = history_[r].second.transpose();
        }
        const TimeSeriesDataset hist(1.0, 0.0, std::move(u), std::move(y), current.input_names(), current.output_names());
        auto fresh = udm::recalibrate(current, hist, cfg_);
        out.rmse_before = mean_rmse_scaled(current, current, hist);
        out.rmse_after = mean_rmse_scaled(current, fresh, hist);

        auto meta = fresh.metadata();
        meta.version = versions_.size() + 1;
        meta.train_first = last_index_.value_or(0) + 1 - n;
        meta.train_rows = n;
        fresh = fresh.with_metadata(std::move(meta));

        // Re-express the scaled lag buffers in the incoming model's scaling.
        const auto& old_s = current.scaler();
        const auto& new_s = fresh.scaler();
        for (std::size_t m = 0; m < y_lags_.size(); ++m) {
            for (auto& v : y_lags_[m]) v = new_s.scale_output(m, old_s.unscale_output(m, v));
            for (auto& v : e_lags_[m]) v = v * old_s.output_gain[m] / new_s.output_gain[m];
        }
        versions_.push_back(std::move(fresh));
        timeline_.emplace_back(last_index_.value_or(0) + 1, versions_.size());
        out.success = true;
    } catch (const Error& e) {
        out.success = false;
        out.error = e.what();
    }
    out.version = active_version();
    reset_window();
    violations_ = 0;
    since_refit_ = 0;
    if (out.success) cooldown_left_ = cfg_.cooldown_samples();

    nlohmann::json details = {{"status", out.success ? "ok" : "failed"},
                              {"method", cfg_.recal_method == RecalMethod::BatchEls ? "batch_els" : "warm_rls"}};
    if (out.success) {
        details["rmse_before"] = out.rmse_before;
        details["rmse_after"] = out.rmse_after;
    } else {
        details["error"] = out.error;
    }
    log(EventKind::RecalCompleted, out.success ? out.rmse_after : std::numeric_limits<double>::quiet_NaN(),
        std::move(details));
    return out;
}

} // namespace udm
