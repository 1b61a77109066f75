#pragma once

#include "armax.hpp"
#include "timeseries.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace udm {

/// CERTS-style droop inverter. Playback direction: (P, Q) in, (V, f) out.
struct GfmConfig {
    double f0 = 60.0;   // Hz
    double v0 = 1.0;    // p.u.
    double mp = 0.3;    // Hz per p.u. active power
    double mq = 0.05;   // p.u. voltage per p.u. reactive power
    double tf = 0.02;   // power measurement filter, s
    double p_ref = 0.5; // p.u.
    double q_ref = 0.1; // p.u.

    void validate() const;
};

/// Current-source inverter with SRF-PLL (PI) and first-order current loops.
/// Playback direction: (V, f) in, (P, Q) out.
struct GflConfig {
    double f0 = 60.0;
    double kp_pll = 50.0;
    double ki_pll = 900.0;
    double ti = 0.01;   // current loop time constant, s
    double p_ref = 0.8;
    double q_ref = 0.2;

    void validate() const;
};

/// Voltage envelope: v_pre before dip_start, v_dip for dip_cycles fundamental
/// cycles, v_post afterwards.
struct DipScenario {
    double v_pre = 1.0;
    double v_dip = 0.6;
    double dip_cycles = 6.0;
    double v_post = 1.0;
    double dip_start = 0.1; // s
    double fundamental = 60.0;

    [[nodiscard]] double dip_end() const noexcept { return dip_start + dip_cycles / fundamental; }
    [[nodiscard]] double envelope(double t) const noexcept;
    void validate() const;
};

/// Discrete linear load: i_t = sum_k a[k-1] i_{t-k} + sum_k b[k] v_{t-k}.
struct LoadFilter {
    std::string name;
    std::vector<double> a;
    std::vector<double> b;
};

/// Default residential load bank at the given sample period:
/// HVAC (inductive lag), PV (counter-phase injection), EV (rectifier-like draw).
std::vector<LoadFilter> default_load_bank(double sample_period);
LoadFilter preset_load(const std::string& preset, const std::string& name, double gain, double sample_period);

struct EmtConfig {
    DipScenario dip;
    std::vector<LoadFilter> loads; // empty -> default bank
};

enum class InputSignal { Prbs, Gaussian, Zero };

/// Coefficient switch at a given sample index (regime change).
struct RegimeChange {
    std::size_t at_sample = 0;
    std::vector<OutputCoefficients> coefficients;
};

/// Known ARMAX plant. Innovations have std noise_sigma[<output name>].
struct LinearTruthConfig {
    ArmaxOrders orders;
    std::size_t n_inputs = 1;
    std::vector<OutputCoefficients> coefficients;
    std::vector<RegimeChange> changes;
    InputSignal input = InputSignal::Prbs;
    double input_amplitude = 1.0;
    std::size_t input_hold = 1; // samples per PRBS level
    std::vector<double> y0;     // initial output level per output

    [[nodiscard]] std::vector<std::string> input_names() const;
    [[nodiscard]] std::vector<std::string> output_names() const;
    void validate() const;
};

enum class PlantKind { Gfm, Gfl, LinearTruth, EmtDip };
std::string_view to_string(PlantKind kind) noexcept;
PlantKind plant_kind_from_string(std::string_view name);

enum class EventType { Step, DampedSine };

/// Timed perturbation added to one input channel from `time` onwards.
///   Step:        + magnitude
///   DampedSine:  + magnitude * exp(-decay (t - time)) * sin(2 pi frequency (t - time))
struct InputEvent {
    EventType type = EventType::Step;
    std::string channel;
    double time = 0.0;
    double magnitude = 0.0;
    double decay = 0.5;
    double frequency = 0.7;

    [[nodiscard]] double value(double t) const noexcept;
};

struct ScenarioConfig {
    std::string name = "scenario";
    PlantKind kind = PlantKind::Gfm;
    std::variant<GfmConfig, GflConfig, LinearTruthConfig, EmtConfig> plant = GfmConfig{};
    std::vector<InputEvent> events;
    double duration = 5.0;
    double sample_period = 1e-3;
    /// Per-channel noise std in channel units (measurement noise; innovation
    /// std for LinearTruth outputs). Unlisted channels are noise-free.
    std::map<std::string, double> noise_sigma;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t samples() const;
    void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& cfg);
/// Field errors name the JSON path ("scenario.gfm.tf: must be > 0").
ScenarioConfig scenario_from_json(const nlohmann::json& doc);

TimeSeriesDataset simulate_gfm(const GfmConfig& cfg, const ScenarioConfig& scenario);
TimeSeriesDataset simulate_gfl(const GflConfig& cfg, const ScenarioConfig& scenario);
TimeSeriesDataset simulate_linear_truth(const LinearTruthConfig& cfg, const ScenarioConfig& scenario);
TimeSeriesDataset simulate_emt_dip(const EmtConfig& cfg, const ScenarioConfig& scenario);
/// Dispatches on scenario.kind.
TimeSeriesDataset simulate(const ScenarioConfig& scenario);

/// The four voltage-dip cases used for EMT calibration and testing.
std::vector<DipScenario> table_dip_cases();

/// Randomized, seed-deterministic event suite derived from `base`.
/// EmtDip bases yield the four tabulated dip cases first.
std::vector<ScenarioConfig> generate_event_suite(const ScenarioConfig& base, std::size_t count, std::uint64_t seed);

} // namespace udm
