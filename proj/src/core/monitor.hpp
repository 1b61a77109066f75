#pragma once

#include "armax.hpp"
#include "estimation.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace udm {

enum class RecalMethod { BatchEls, WarmRls };

struct MonitorConfig {
    std::size_t window = 200;        // samples per rolling-RMSE window
    double threshold = 0.05;         // rolling RMSE trigger level, scaled units
    std::size_t patience = 3;        // consecutive violating windows before a trigger
    std::size_t recal_history = 2000;
    RecalMethod recal_method = RecalMethod::WarmRls;
    std::optional<std::size_t> cooldown; // defaults to recal_history
    std::size_t periodic_refit = 0;      // samples between scheduled refits, 0 = off
    FitConfig fit;

    [[nodiscard]] std::size_t cooldown_samples() const { return cooldown.value_or(recal_history); }
    void validate() const;
};

nlohmann::json to_json(const MonitorConfig& cfg);
MonitorConfig monitor_config_from_json(const nlohmann::json& doc);

enum class EventKind { WindowOk, WindowViolation, RecalTriggered, RecalCompleted, FeedbackLost, FeedbackRestored };
std::string_view to_string(EventKind kind) noexcept;
EventKind event_kind_from_string(std::string_view name);

/// One log record. `seq` is strictly increasing; several records may share a
/// sample index (a trigger and its completion land on the same sample).
struct MonitorEvent {
    std::size_t seq = 0;
    std::size_t index = 0;
    EventKind kind = EventKind::WindowOk;
    std::size_t model_version = 1; // active version after the event
    double rmse = std::numeric_limits<double>::quiet_NaN();
    nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const MonitorEvent& e);
MonitorEvent event_from_json(const nlohmann::json& doc);
std::string to_jsonl(const std::vector<MonitorEvent>& events);

/// Rebuilds (sample index, active version) transitions from a log.
std::vector<std::pair<std::size_t, std::size_t>> replay_versions(const std::vector<MonitorEvent>& events);

struct StepResult {
    std::optional<Eigen::VectorXd> prediction; // original units; empty while lags are seeding
    bool recal_requested = false;
};

struct RecalOutcome {
    bool success = false;
    std::string error;
    double rmse_before = std::numeric_limits<double>::quiet_NaN(); // scaled units of the outgoing model
    double rmse_after = std::numeric_limits<double>::quiet_NaN();
    std::size_t version = 0; // active version afterwards
};

/// Refits a model on `history` (all outputs measured). BatchEls refits scaler
/// and coefficients; WarmRls continues recursive estimation from the current
/// coefficients in the current scaling. Throws InsufficientHistory or FitFailed.
ArmaxModel recalibrate(const ArmaxModel& current, const TimeSeriesDataset& history, const MonitorConfig& cfg);

/// Streaming validation state machine: one-step predictions against arriving
/// measurements, rolling RMSE per output, patience-gated recalibration triggers.
/// Single consumer; call step() in sample order.
class Monitor {
public:
    Monitor(ArmaxModel model, MonitorConfig cfg);

    /// `y` empty (or non-finite) marks a missing measurement; the model then
    /// runs on its own predictions until measurements return.
    StepResult step(std::size_t index, std::span<const double> u, std::span<const double> y = {});

    /// Refits on the buffered history and swaps the active model at the
    /// current sample boundary. On failure the active model is kept.
    RecalOutcome recalibrate();

    [[nodiscard]] const ArmaxModel& active_model() const { return versions_.back(); }
    [[nodiscard]] std::size_t active_version() const { return versions_.size(); }
    [[nodiscard]] const std::vector<ArmaxModel>& versions() const { return versions_; }
    [[nodiscard]] const std::vector<MonitorEvent>& events() const { return events_; }
    [[nodiscard]] const MonitorConfig& config() const { return cfg_; }
    /// Swaps as (first sample served by the new version, version).
    [[nodiscard]] const std::vector<std::pair<std::size_t, std::size_t>>& version_timeline() const { return timeline_; }
    /// Batch RMSE over the residuals currently in the window, per output.
    [[nodiscard]] Eigen::VectorXd rolling_rmse() const;
    [[nodiscard]] std::size_t trigger_count() const { return triggers_; }
    [[nodiscard]] bool in_cooldown() const { return cooldown_left_ > 0; }

private:
    void log(EventKind kind, double rmse, nlohmann::json details);
    void reset_window();

    MonitorConfig cfg_;
    std::vector<ArmaxModel> versions_;
    std::vector<MonitorEvent> events_;
    std::vector<std::pair<std::size_t, std::size_t>> timeline_;

    // Lag buffers, most recent first: outputs and residuals in the active
    // model's scaled units, inputs raw.
    std::vector<std::deque<double>> y_lags_;
    std::vector<std::deque<double>> e_lags_;
    std::vector<std::deque<double>> u_lags_;
    std::size_t seeded_ = 0;

    std::vector<std::deque<double>> window_;
    std::size_t since_eval_ = 0;
    std::size_t violations_ = 0;
    std::size_t cooldown_left_ = 0;
    std::size_t since_refit_ = 0;
    std::size_t triggers_ = 0;
    bool feedback_ = true;

    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history_; // raw (u, y); y NaN when missing
    std::optional<std::size_t> last_index_;
};

} // namespace udm
