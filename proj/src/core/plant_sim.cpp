#include "plant_sim.hpp"

#include "error.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <random>

namespace udm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw Error(ErrorCode::Config, field + ": " + what);
}

template <std::size_t N, class Deriv>
std::array<double, N> rk4_step(const std::array<double, N>& x, double t, double h, Deriv&& f) {
    auto axpy = [](const std::array<double, N>& a, double s, const std::array<double, N>& b) {
        std::array<double, N> r{};
        for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + s * b[i];
        return r;
    };
    const auto k1 = f(t, x);
    const auto k2 = f(t + 0.5 * h, axpy(x, 0.5 * h, k1));
    const auto k3 = f(t + 0.5 * h, axpy(x, 0.5 * h, k2));
    const auto k4 = f(t + h, axpy(x, h, k3));
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

/// Sum of the events on `channel` evaluated at `t`. Events switch on at the
/// first integration interval starting at or after their onset (`gate` is
/// that interval's start), so every RK4 stage of a step sees the same input.
double event_sum(const std::vector<InputEvent>& events, const std::string& channel, double t, double gate) {
    constexpr double kOnsetTolerance = 1e-9;
    double s = 0.0;
    for (const auto& e : events) {
        if (e.channel == channel && gate + kOnsetTolerance >= e.time) s += e.value(std::max(t, e.time));
    }
    return s;
}

void check_event_channels(const ScenarioConfig& sc, const std::vector<std::string>& inputs) {
    for (std::size_t i = 0; i < sc.events.size(); ++i) {
        const auto& ch = sc.events[i].channel;
        require(std::find(inputs.begin(), inputs.end(), ch) != inputs.end(),
                "scenario.events[" + std::to_string(i) + "].channel", "'" + ch + "' is not an input of this plant");
    }
}

void add_noise(Eigen::MatrixXd& m, const std::vector<std::string>& names, const std::map<std::string, double>& sigma,
               std::mt19937_64& rng) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const auto it = sigma.find(names[static_cast<std::size_t>(c)]);
        if (it == sigma.end() || it->second <= 0.0) continue;
        std::normal_distribution<double> noise(0.0, it->second);
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) += noise(rng);
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

void GfmConfig::validate() const {
    require(mp > 0.0, "scenario.gfm.mp", "must be > 0");
    require(mq > 0.0, "scenario.gfm.mq", "must be > 0");
    require(tf > 0.0, "scenario.gfm.tf", "must be > 0");
    require(f0 > 0.0, "scenario.gfm.f0", "must be > 0");
}

void GflConfig::validate() const {
    require(kp_pll > 0.0, "scenario.gfl.kp_pll", "must be > 0");
    require(ki_pll > 0.0, "scenario.gfl.ki_pll", "must be > 0");
    require(ti > 0.0, "scenario.gfl.ti", "must be > 0");
    require(f0 > 0.0, "scenario.gfl.f0", "must be > 0");
}

double DipScenario::envelope(double t) const noexcept {
    if (t < dip_start) return v_pre;
    if (t < dip_end()) return v_dip;
    return v_post;
}

void DipScenario::validate() const {
    for (auto [v, name] : {std::pair{v_pre, "v_pre"}, std::pair{v_dip, "v_dip"}, std::pair{v_post, "v_post"}}) {
        require(v > 0.0 && v <= 1.5, std::string("scenario.emt.dip.") + name, "must be in (0, 1.5]");
    }
    require(dip_cycles >= 1.0, "scenario.emt.dip.dip_cycles", "must be >= 1");
    require(dip_start >= 0.0, "scenario.emt.dip.dip_start", "must be >= 0");
    require(fundamental > 0.0, "scenario.emt.dip.fundamental", "must be > 0");
}

LoadFilter preset_load(const std::string& preset, const std::string& name, double gain, double h) {
    LoadFilter f;
    f.name = name;
    const double k = 2.0 / h;
    if (preset == "hvac") {
        // Series R-L branch, 3 ms time constant: lagging draw.
        const double a = std::exp(-h / 3e-3);
        f.a = {a};
        f.b = {gain * (1.0 - a)};
    } else if (preset == "pv") {
        // Inverter current loop, 2nd-order low-pass (300 Hz, zeta 0.7), counter-phase.
        const double wn = kTwoPi * 300.0;
        const double zeta = 0.7;
        const double d0 = k * k + 2.0 * zeta * wn * k + wn * wn;
        const double d1 = 2.0 * wn * wn - 2.0 * k * k;
        const double d2 = k * k - 2.0 * zeta * wn * k + wn * wn;
        const double g = -gain * wn * wn;
        f.a = {-d1 / d0, -d2 / d0};
        f.b = {g / d0, 2.0 * g / d0, g / d0};
    } else if (preset == "ev") {
        // Band-pass around the fundamental (Q = 2): in-phase draw with ringing on envelope steps.
        const double w0 = kTwoPi * 60.0;
        const double bw = w0 / 2.0;
        const double d0 = k * k + bw * k + w0 * w0;
        const double d1 = 2.0 * w0 * w0 - 2.0 * k * k;
        const double d2 = k * k - bw * k + w0 * w0;
        const double g = gain * bw * k;
        f.a = {-d1 / d0, -d2 / d0};
        f.b = {g / d0, 0.0, -g / d0};
    } else {
        throw Error(ErrorCode::Config, "scenario.emt.loads: unknown preset '" + preset + "'");
    }
    return f;
}

std::vector<LoadFilter> default_load_bank(double h) {
    return {preset_load("hvac", "i_HVAC", 1.0, h), preset_load("pv", "i_PV", 0.6, h), preset_load("ev", "i_EV", 0.4, h)};
}

std::vector<std::string> LinearTruthConfig::input_names() const {
    std::vector<std::string> n;
    for (std::size_t j = 0; j < n_inputs; ++j) n.push_back("u" + std::to_string(j + 1));
    return n;
}

std::vector<std::string> LinearTruthConfig::output_names() const {
    std::vector<std::string> n;
    for (std::size_t m = 0; m < coefficients.size(); ++m) n.push_back("y" + std::to_string(m + 1));
    return n;
}

void LinearTruthConfig::validate() const {
    require(!coefficients.empty(), "scenario.linear_truth.coefficients", "need at least one output");
    orders.validate(n_inputs);
    auto check = [&](const std::vector<OutputCoefficients>& cs, const std::string& where) {
        require(cs.size() == coefficients.size(), where, "output count differs from the initial regime");
        for (std::size_t m = 0; m < cs.size(); ++m) {
            const auto& c = cs[m];
            bool ok = c.alpha.size() == orders.na && c.beta.size() == orders.nc && c.gamma.size() == n_inputs;
            for (const auto& g : c.gamma) ok = ok && g.size() == orders.nb;
            require(ok, where + "[" + std::to_string(m) + "]", "coefficient lengths do not match orders");
            const auto rep = check_stability(c.alpha);
            if (!rep.stable) {
                throw Error(ErrorCode::UnstableTruth, where + "[" + std::to_string(m) + "]: AR root magnitude " +
                                                          format_double(rep.max_root_magnitude) + " >= 1");
            }
        }
    };
    check(coefficients, "scenario.linear_truth.coefficients");
    for (std::size_t i = 0; i < changes.size(); ++i) {
        check(changes[i].coefficients, "scenario.linear_truth.changes[" + std::to_string(i) + "].coefficients");
    }
    require(input_hold >= 1, "scenario.linear_truth.input_hold", "must be >= 1");
    require(y0.empty() || y0.size() == coefficients.size(), "scenario.linear_truth.y0", "one value per output");
}

std::string_view to_string(PlantKind kind) noexcept {
    switch (kind) {
    case PlantKind::Gfm: return "gfm";
    case PlantKind::Gfl: return "gfl";
    case PlantKind::LinearTruth: return "linear_truth";
    case PlantKind::EmtDip: return "emt_dip";
    }
    return "gfm";
}

PlantKind plant_kind_from_string(std::string_view name) {
    if (name == "gfm") return PlantKind::Gfm;
    if (name == "gfl") return PlantKind::Gfl;
    if (name == "linear_truth") return PlantKind::LinearTruth;
    if (name == "emt_dip") return PlantKind::EmtDip;
    throw Error(ErrorCode::Config, "scenario.plant: unknown plant kind '" + std::string(name) + "'");
}

double InputEvent::value(double t) const noexcept {
    if (t < time) return 0.0;
    const double dt = t - time;
    switch (type) {
    case EventType::Step: return magnitude;
    case EventType::DampedSine: return magnitude * std::exp(-decay * dt) * std::sin(kTwoPi * frequency * dt);
    }
    return 0.0;
}

std::size_t ScenarioConfig::samples() const {
    return static_cast<std::size_t>(std::llround(duration / sample_period));
}

void ScenarioConfig::validate() const {
    require(duration > 0.0, "scenario.duration", "must be > 0");
    require(sample_period > 0.0, "scenario.sample_period", "must be > 0");
    require(samples() >= 2, "scenario.duration", "shorter than two samples");
    for (const auto& [ch, s] : noise_sigma) require(s >= 0.0, "scenario.noise_sigma." + ch, "must be >= 0");
    const bool matches = (kind == PlantKind::Gfm && std::holds_alternative<GfmConfig>(plant)) ||
                         (kind == PlantKind::Gfl && std::holds_alternative<GflConfig>(plant)) ||
                         (kind == PlantKind::LinearTruth && std::holds_alternative<LinearTruthConfig>(plant)) ||
                         (kind == PlantKind::EmtDip && std::holds_alternative<EmtConfig>(plant));
    require(matches, "scenario.plant", "plant record does not match plant kind");
}

TimeSeriesDataset simulate_gfm(const GfmConfig& cfg, const ScenarioConfig& sc) {
    cfg.validate();
    sc.validate();
    const std::vector<std::string> in_names{"P", "Q"};
    const std::vector<std::string> out_names{"V", "f"};
    check_event_channels(sc, in_names);
    const std::size_t n = sc.samples();
    const double h = sc.sample_period;
    double gate = 0.0;
    auto p_in = [&](double t) { return cfg.p_ref + event_sum(sc.events, "P", t, gate); };
    auto q_in = [&](double t) { return cfg.q_ref + event_sum(sc.events, "Q", t, gate); };
    auto deriv = [&](double t, const std::array<double, 2>& x) {
        return std::array<double, 2>{(p_in(t) - x[0]) / cfg.tf, (q_in(t) - x[1]) / cfg.tf};
    };
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n), 2);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
    std::array<double, 2> x{p_in(0.0), q_in(0.0)};
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * h;
        gate = t;
        const auto r = static_cast<Eigen::Index>(k);
        u(r, 0) = p_in(t);
        u(r, 1) = q_in(t);
        y(r, 0) = cfg.v0 - cfg.mq * (x[1] - cfg.q_ref);
        y(r, 1) = cfg.f0 - cfg.mp * (x[0] - cfg.p_ref);
        x = rk4_step(x, t, h, deriv);
    }
    std::mt19937_64 rng(sc.seed);
    add_noise(u, in_names, sc.noise_sigma, rng);
    add_noise(y, out_names, sc.noise_sigma, rng);
    return {h, 0.0, std::move(u), std::move(y), in_names, out_names};
}

TimeSeriesDataset simulate_gfl(const GflConfig& cfg, const ScenarioConfig& sc) {
    cfg.validate();
    sc.validate();
    const std::vector<std::string> in_names{"V", "f"};
    const std::vector<std::string> out_names{"P", "Q"};
    check_event_channels(sc, in_names);
    const std::size_t n = sc.samples();
    const double h = sc.sample_period;
    double gate = 0.0;
    auto v_in = [&](double t) {
        const double v = 1.0 + event_sum(sc.events, "V", t, gate);
        if (v <= 0.1) {
            throw Error(ErrorCode::VoltageCollapse, "terminal voltage " + format_double(v) + " p.u. at t = " +
                                                        format_double(t) + " s (limit 0.1 p.u.)");
        }
        return v;
    };
    auto f_in = [&](double t) { return cfg.f0 + event_sum(sc.events, "f", t, gate); };
    // x = [i_d, i_q, delta (grid minus PLL angle), PLL integrator]
    auto deriv = [&](double t, const std::array<double, 4>& x) {
        const double v = v_in(t);
        const double id_ref = cfg.p_ref / v;
        const double iq_ref = -cfg.q_ref / v;
        const double s = std::sin(x[2]);
        const double w_pll = kTwoPi * cfg.f0 + cfg.kp_pll * s + x[3];
        return std::array<double, 4>{(id_ref - x[0]) / cfg.ti, (iq_ref - x[1]) / cfg.ti, kTwoPi * f_in(t) - w_pll,
                                     cfg.ki_pll * s};
    };
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n), 2);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
    const double v_start = v_in(0.0);
    std::array<double, 4> x{cfg.p_ref / v_start, -cfg.q_ref / v_start, 0.0, kTwoPi * (f_in(0.0) - cfg.f0)};
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * h;
        gate = t;
        const auto r = static_cast<Eigen::Index>(k);
        const double v = v_in(t);
        const double vd = v * std::cos(x[2]);
        const double vq = v * std::sin(x[2]);
        u(r, 0) = v;
        u(r, 1) = f_in(t);
        y(r, 0) = vd * x[0] + vq * x[1];
        y(r, 1) = vq * x[0] - vd * x[1];
        x = rk4_step(x, t, h, deriv);
    }
    std::mt19937_64 rng(sc.seed);
    add_noise(u, in_names, sc.noise_sigma, rng);
    add_noise(y, out_names, sc.noise_sigma, rng);
    return {h, 0.0, std::move(u), std::move(y), in_names, out_names};
}

TimeSeriesDataset simulate_linear_truth(const LinearTruthConfig& cfg, const ScenarioConfig& sc) {
    cfg.validate();
    sc.validate();
    const auto in_names = cfg.input_names();
    const auto out_names = cfg.output_names();
    check_event_channels(sc, in_names);
    const std::size_t n = sc.samples();
    const auto ni = static_cast<Eigen::Index>(n);
    const double h = sc.sample_period;
    const std::size_t n_out = cfg.coefficients.size();
    std::mt19937_64 rng(sc.seed);

    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(ni, static_cast<Eigen::Index>(cfg.n_inputs));
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        std::bernoulli_distribution coin(0.5);
        std::normal_distribution<double> gauss(0.0, cfg.input_amplitude);
        double level = 0.0;
        for (Eigen::Index t = 0; t < ni; ++t) {
            if (static_cast<std::size_t>(t) % cfg.input_hold == 0) {
                switch (cfg.input) {
                case InputSignal::Prbs: level = coin(rng) ? cfg.input_amplitude : -cfg.input_amplitude; break;
                case InputSignal::Gaussian: level = gauss(rng); break;
                case InputSignal::Zero: level = 0.0; break;
                }
            }
            u(t, j) = level + event_sum(sc.events, in_names[static_cast<std::size_t>(j)], static_cast<double>(t) * h,
                                           static_cast<double>(t) * h);
        }
    }

    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(ni, static_cast<Eigen::Index>(n_out));
    for (std::size_t m = 0; m < n_out; ++m) {
        const auto it = sc.noise_sigma.find(out_names[m]);
        if (it == sc.noise_sigma.end() || it->second <= 0.0) continue;
        std::normal_distribution<double> noise(0.0, it->second);
        for (Eigen::Index t = 0; t < ni; ++t) e(t, static_cast<Eigen::Index>(m)) = noise(rng);
    }

    const auto& o = cfg.orders;
    const std::size_t start = std::min(o.max_lag(), n);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(ni, static_cast<Eigen::Index>(n_out));
    for (std::size_t m = 0; m < n_out; ++m) {
        const auto mi = static_cast<Eigen::Index>(m);
        const double level = cfg.y0.empty() ? 0.0 : cfg.y0[m];
        for (std::size_t t = 0; t < start; ++t) {
            y(static_cast<Eigen::Index>(t), mi) = level + e(static_cast<Eigen::Index>(t), mi);
        }
    }
    for (std::size_t t = start; t < n; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const std::vector<OutputCoefficients>* active = &cfg.coefficients;
        for (const auto& ch : cfg.changes) {
            if (t >= ch.at_sample) active = &ch.coefficients;
        }
        for (std::size_t m = 0; m < n_out; ++m) {
            const auto mi = static_cast<Eigen::Index>(m);
            y(ti, mi) = evaluate_output(
                            (*active)[m], o, [&](std::size_t i) { return y(ti - static_cast<Eigen::Index>(i), mi); },
                            [&](std::size_t j, std::size_t k) { return u(ti - static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)); },
                            [&](std::size_t i) { return e(ti - static_cast<Eigen::Index>(i), mi); }) +
                        e(ti, mi);
        }
    }
    std::map<std::string, double> input_noise;
    for (const auto& nm : in_names) {
        if (auto it = sc.noise_sigma.find(nm); it != sc.noise_sigma.end()) input_noise.insert(*it);
    }
    Eigen::MatrixXd u_meas = u;
    add_noise(u_meas, in_names, input_noise, rng);
    return {h, 0.0, std::move(u_meas), std::move(y), in_names, out_names};
}

TimeSeriesDataset simulate_emt_dip(const EmtConfig& cfg, const ScenarioConfig& sc) {
    cfg.dip.validate();
    sc.validate();
    require(sc.events.empty(), "scenario.events", "EMT dip scenarios take their disturbance from emt.dip");
    const std::size_t n = sc.samples();
    const auto ni = static_cast<Eigen::Index>(n);
    const double h = sc.sample_period;
    const auto loads = cfg.loads.empty() ? default_load_bank(h) : cfg.loads;
    for (std::size_t l = 0; l < loads.size(); ++l) {
        require(loads[l].a.size() <= 8 && loads[l].b.size() <= 9, "scenario.emt.loads[" + std::to_string(l) + "]",
                "filter order must be <= 8");
        require(check_stability(loads[l].a).stable, "scenario.emt.loads[" + std::to_string(l) + "]",
                "load filter is unstable");
    }
    const std::vector<std::string> in_names{"v"};
    std::vector<std::string> out_names;
    for (const auto& l : loads) out_names.push_back(l.name);

    Eigen::MatrixXd v(ni, 1);
    for (Eigen::Index k = 0; k < ni; ++k) {
        const double t = static_cast<double>(k) * h;
        v(k, 0) = cfg.dip.envelope(t) * std::sin(kTwoPi * cfg.dip.fundamental * t);
    }
    Eigen::MatrixXd i = Eigen::MatrixXd::Zero(ni, static_cast<Eigen::Index>(loads.size()));
    for (std::size_t l = 0; l < loads.size(); ++l) {
        const auto li = static_cast<Eigen::Index>(l);
        const auto& f = loads[l];
        for (Eigen::Index k = 0; k < ni; ++k) {
            double acc = 0.0;
            for (std::size_t q = 0; q < f.a.size(); ++q) {
                const auto back = k - static_cast<Eigen::Index>(q + 1);
                if (back >= 0) acc += f.a[q] * i(back, li);
            }
            for (std::size_t q = 0; q < f.b.size(); ++q) {
                const auto back = k - static_cast<Eigen::Index>(q);
                if (back >= 0) acc += f.b[q] * v(back, 0);
            }
            i(k, li) = acc;
        }
    }
    std::mt19937_64 rng(sc.seed);
    add_noise(v, in_names, sc.noise_sigma, rng);
    add_noise(i, out_names, sc.noise_sigma, rng);
    return {h, 0.0, std::move(v), std::move(i), in_names, out_names};
}

TimeSeriesDataset simulate(const ScenarioConfig& sc) {
    sc.validate();
    switch (sc.kind) {
    case PlantKind::Gfm: return simulate_gfm(std::get<GfmConfig>(sc.plant), sc);
    case PlantKind::Gfl: return simulate_gfl(std::get<GflConfig>(sc.plant), sc);
    case PlantKind::LinearTruth: return simulate_linear_truth(std::get<LinearTruthConfig>(sc.plant), sc);
    case PlantKind::EmtDip: return simulate_emt_dip(std::get<EmtConfig>(sc.plant), sc);
    }
    throw Error(ErrorCode::Config, "scenario.plant: unsupported kind");
}

std::vector<DipScenario> table_dip_cases() {
    auto make = [](double v_dip, double cycles, double v_post) {
        DipScenario d;
        d.v_pre = 1.0;
        d.v_dip = v_dip;
        d.dip_cycles = cycles;
        d.v_post = v_post;
        return d;
    };
    return {make(0.6, 6, 1.0), make(0.5, 10, 1.0), make(0.5, 10, 0.8), make(0.5, 6, 0.8)};
}

std::vector<ScenarioConfig> generate_event_suite(const ScenarioConfig& base, std::size_t count, std::uint64_t seed) {
    base.validate();
    if (count < 2) throw Error(ErrorCode::Config, "suite.count: must be >= 2");
    std::mt19937_64 rng(seed);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto sign = [&] { return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0; };
    const double d = base.duration;
    const double h = base.sample_period;
    auto on_grid = [&](double t) { return std::round(t / h) * h; };

    std::vector<ScenarioConfig> suite;
    for (std::size_t i = 0; i < count; ++i) {
        ScenarioConfig sc = base;
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "_%03zu", i);
        sc.name = base.name + suffix;
        sc.seed = splitmix64(seed + i);
        sc.events.clear();
        switch (base.kind) {
        case PlantKind::Gfm: {
            sc.events.push_back({EventType::Step, "P", on_grid(uni(0.1, 0.3) * d), sign() * uni(0.02, 0.2)});
            sc.events.push_back({EventType::Step, "Q", on_grid(uni(0.35, 0.55) * d), sign() * uni(0.02, 0.2)});
            sc.events.push_back({EventType::DampedSine, "P", on_grid(uni(0.6, 0.8) * d), uni(0.02, 0.2), 0.5, uni(0.5, 1.5)});
            sc.events.push_back({EventType::DampedSine, "Q", on_grid(uni(0.6, 0.8) * d), uni(0.02, 0.2), 0.5, uni(0.5, 1.5)});
            break;
        }
        case PlantKind::Gfl: {
            const double sag = uni(0.02, 0.2);
            sc.events.push_back({EventType::Step, "V", on_grid(uni(0.1, 0.3) * d), -sag});
            sc.events.push_back({EventType::Step, "V", on_grid(uni(0.35, 0.55) * d), sag * uni(0.5, 1.0)});
            sc.events.push_back({EventType::DampedSine, "f", on_grid(uni(0.6, 0.8) * d), sign() * uni(0.05, 0.5), 0.5, 0.7});
            break;
        }
        case PlantKind::LinearTruth: break;
        case PlantKind::EmtDip: {
            auto& emt = std::get<EmtConfig>(sc.plant);
            const double start = emt.dip.dip_start;
            const auto cases = table_dip_cases();
            if (i < cases.size()) {
                emt.dip = cases[i];
            } else {
                emt.dip.v_dip = uni(0.4, 0.9);
                emt.dip.dip_cycles = std::round(uni(3.0, 12.0));
                emt.dip.v_post = uni(0.8, 1.0);
            }
            emt.dip.dip_start = start;
            break;
        }
        }
        suite.push_back(std::move(sc));
    }
    return suite;
}

// --- JSON ---------------------------------------------------------------------

namespace {

template <class T>
T field(const nlohmann::json& doc, const char* key, T fallback, const std::string& path) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::Config, path + "." + key + ": wrong type");
    }
}

nlohmann::json coeffs_json(const std::vector<OutputCoefficients>& cs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : cs) a.push_back({{"alpha", c.alpha}, {"gamma", c.gamma}, {"beta", c.beta}});
    return a;
}

std::vector<OutputCoefficients> coeffs_from(const nlohmann::json& a, const std::string& path) {
    std::vector<OutputCoefficients> out;
    try {
        for (const auto& c : a) {
            OutputCoefficients oc;
            oc.alpha = c.value("alpha", std::vector<double>{});
            oc.gamma = c.value("gamma", std::vector<std::vector<double>>{});
            oc.beta = c.value("beta", std::vector<double>{});
            out.push_back(std::move(oc));
        }
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::Config, path + ": malformed coefficient record");
    }
    return out;
}

} // namespace

nlohmann::json to_json(const ScenarioConfig& sc) {
    nlohmann::json doc = {{"name", sc.name},
                          {"plant", std::string(to_string(sc.kind))},
                          {"duration", sc.duration},
                          {"sample_period", sc.sample_period},
                          {"noise_sigma", sc.noise_sigma},
                          {"seed", sc.seed}};
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : sc.events) {
        nlohmann::json ev = {{"type", e.type == EventType::Step ? "step" : "damped_sine"},
                             {"channel", e.channel},
                             {"time", e.time},
                             {"magnitude", e.magnitude}};
        if (e.type == EventType::DampedSine) {
            ev["decay"] = e.decay;
            ev["frequency"] = e.frequency;
        }
        events.push_back(ev);
    }
    doc["events"] = events;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GfmConfig>) {
                doc["gfm"] = {{"f0", p.f0}, {"v0", p.v0}, {"mp", p.mp}, {"mq", p.mq},
                              {"tf", p.tf}, {"p_ref", p.p_ref}, {"q_ref", p.q_ref}};
            } else if constexpr (std::is_same_v<T, GflConfig>) {
                doc["gfl"] = {{"f0", p.f0}, {"kp_pll", p.kp_pll}, {"ki_pll", p.ki_pll},
                              {"ti", p.ti}, {"p_ref", p.p_ref}, {"q_ref", p.q_ref}};
            } else if constexpr (std::is_same_v<T, LinearTruthConfig>) {
                nlohmann::json changes = nlohmann::json::array();
                for (const auto& c : p.changes) changes.push_back({{"at_sample", c.at_sample}, {"coefficients", coeffs_json(c.coefficients)}});
                const char* input = p.input == InputSignal::Prbs ? "prbs" : p.input == InputSignal::Gaussian ? "gaussian" : "zero";
                doc["linear_truth"] = {{"orders", to_json(p.orders)},
                                       {"n_inputs", p.n_inputs},
                                       {"coefficients", coeffs_json(p.coefficients)},
                                       {"changes", changes},
                                       {"input", input},
                                       {"input_amplitude", p.input_amplitude},
                                       {"input_hold", p.input_hold},
                                       {"y0", p.y0}};
            } else {
                nlohmann::json loads = nlohmann::json::array();
                for (const auto& l : p.loads) loads.push_back({{"name", l.name}, {"a", l.a}, {"b", l.b}});
                doc["emt"] = {{"dip",
                               {{"v_pre", p.dip.v_pre},
                                {"v_dip", p.dip.v_dip},
                                {"dip_cycles", p.dip.dip_cycles},
                                {"v_post", p.dip.v_post},
                                {"dip_start", p.dip.dip_start},
                                {"fundamental", p.dip.fundamental}}},
                              {"loads", loads}};
            }
        },
        sc.plant);
    return doc;
}

ScenarioConfig scenario_from_json(const nlohmann::json& doc) {
    const std::string root = "scenario";
    if (!doc.is_object()) throw Error(ErrorCode::Config, root + ": expected an object");
    ScenarioConfig sc;
    sc.name = field<std::string>(doc, "name", sc.name, root);
    if (!doc.contains("plant")) throw Error(ErrorCode::Config, root + ".plant: required");
    sc.kind = plant_kind_from_string(field<std::string>(doc, "plant", "", root));
    const double default_period = sc.kind == PlantKind::EmtDip ? 2e-4 : 1e-3;
    sc.sample_period = field<double>(doc, "sample_period", default_period, root);
    sc.duration = field<double>(doc, "duration", sc.kind == PlantKind::EmtDip ? 0.4 : 5.0, root);
    sc.seed = field<std::uint64_t>(doc, "seed", 0, root);
    sc.noise_sigma = field<std::map<std::string, double>>(doc, "noise_sigma", {}, root);

    if (doc.contains("events")) {
        const auto& evs = doc.at("events");
        for (std::size_t i = 0; i < evs.size(); ++i) {
            const auto path = root + ".events[" + std::to_string(i) + "]";
            const auto& e = evs[i];
            InputEvent ev;
            const auto type = field<std::string>(e, "type", "step", path);
            if (type == "step") ev.type = EventType::Step;
            else if (type == "damped_sine") ev.type = EventType::DampedSine;
            else throw Error(ErrorCode::Config, path + ".type: unknown event type '" + type + "'");
            ev.channel = field<std::string>(e, "channel", "", path);
            ev.time = field<double>(e, "time", 0.0, path);
            ev.magnitude = field<double>(e, "magnitude", 0.0, path);
            ev.decay = field<double>(e, "decay", ev.decay, path);
            ev.frequency = field<double>(e, "frequency", ev.frequency, path);
            sc.events.push_back(ev);
        }
    }

    switch (sc.kind) {
    case PlantKind::Gfm: {
        GfmConfig g;
        const auto p = doc.value("gfm", nlohmann::json::object());
        const auto path = root + ".gfm";
        g.f0 = field(p, "f0", g.f0, path);
        g.v0 = field(p, "v0", g.v0, path);
        g.mp = field(p, "mp", g.mp, path);
        g.mq = field(p, "mq", g.mq, path);
        g.tf = field(p, "tf", g.tf, path);
        g.p_ref = field(p, "p_ref", g.p_ref, path);
        g.q_ref = field(p, "q_ref", g.q_ref, path);
        g.validate();
        sc.plant = g;
        break;
    }
    case PlantKind::Gfl: {
        GflConfig g;
        const auto p = doc.value("gfl", nlohmann::json::object());
        const auto path = root + ".gfl";
        g.f0 = field(p, "f0", g.f0, path);
        g.kp_pll = field(p, "kp_pll", g.kp_pll, path);
        g.ki_pll = field(p, "ki_pll", g.ki_pll, path);
        g.ti = field(p, "ti", g.ti, path);
        g.p_ref = field(p, "p_ref", g.p_ref, path);
        g.q_ref = field(p, "q_ref", g.q_ref, path);
        g.validate();
        sc.plant = g;
        break;
    }
    case PlantKind::LinearTruth: {
        LinearTruthConfig lt;
        const auto path = root + ".linear_truth";
        if (!doc.contains("linear_truth")) throw Error(ErrorCode::Config, path + ": required for linear_truth plants");
        const auto& p = doc.at("linear_truth");
        lt.orders = orders_from_json(p.value("orders", nlohmann::json::object()));
        lt.n_inputs = field<std::size_t>(p, "n_inputs", lt.n_inputs, path);
        lt.coefficients = coeffs_from(p.value("coefficients", nlohmann::json::array()), path + ".coefficients");
        if (p.contains("changes")) {
            for (const auto& c : p.at("changes")) {
                lt.changes.push_back({c.value("at_sample", std::size_t{0}),
                                      coeffs_from(c.value("coefficients", nlohmann::json::array()), path + ".changes")});
            }
        }
        const auto input = field<std::string>(p, "input", "prbs", path);
        if (input == "prbs") lt.input = InputSignal::Prbs;
        else if (input == "gaussian") lt.input = InputSignal::Gaussian;
        else if (input == "zero") lt.input = InputSignal::Zero;
        else throw Error(ErrorCode::Config, path + ".input: unknown input signal '" + input + "'");
        lt.input_amplitude = field(p, "input_amplitude", lt.input_amplitude, path);
        lt.input_hold = field(p, "input_hold", lt.input_hold, path);
        lt.y0 = field(p, "y0", lt.y0, path);
        lt.validate();
        sc.plant = lt;
        break;
    }
    case PlantKind::EmtDip: {
        EmtConfig emt;
        const auto p = doc.value("emt", nlohmann::json::object());
        const auto d = p.value("dip", nlohmann::json::object());
        const auto path = root + ".emt.dip";
        emt.dip.v_pre = field(d, "v_pre", emt.dip.v_pre, path);
        emt.dip.v_dip = field(d, "v_dip", emt.dip.v_dip, path);
        emt.dip.dip_cycles = field(d, "dip_cycles", emt.dip.dip_cycles, path);
        emt.dip.v_post = field(d, "v_post", emt.dip.v_post, path);
        emt.dip.dip_start = field(d, "dip_start", emt.dip.dip_start, path);
        emt.dip.fundamental = field(d, "fundamental", emt.dip.fundamental, path);
        emt.dip.validate();
        if (p.contains("loads")) {
            const auto& loads = p.at("loads");
            for (std::size_t i = 0; i < loads.size(); ++i) {
                const auto lp = root + ".emt.loads[" + std::to_string(i) + "]";
                const auto& l = loads[i];
                const auto name = field<std::string>(l, "name", "i_" + std::to_string(i), lp);
                if (l.contains("preset")) {
                    emt.loads.push_back(preset_load(field<std::string>(l, "preset", "", lp), name,
                                                    field<double>(l, "gain", 1.0, lp), sc.sample_period));
                } else {
                    emt.loads.push_back({name, field<std::vector<double>>(l, "a", {}, lp),
                                         field<std::vector<double>>(l, "b", {}, lp)});
                }
            }
        }
        sc.plant = emt;
        break;
    }
    }
    sc.validate();
    return sc;
}

} // namespace udm
