#include "timeseries.hpp"

#include "error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace udm {

namespace {

constexpr double kSamplingJitter = 1e-3;

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

void check_finite(const Eigen::MatrixXd& m, const std::vector<std::string>& names) {
    if (all_finite(m)) {
        return;
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (!std::isfinite(m(r, c))) {
                throw Error(ErrorCode::NonFiniteValue,
                            "column '" + names[static_cast<std::size_t>(c)] + "' row " + std::to_string(r));
            }
        }
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_number(std::string_view cell) {
    if (!cell.empty() && cell.front() == '+') {
        cell.remove_prefix(1);
    }
    double value = 0.0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        return std::nullopt;
    }
    return value;
}

struct CsvTable {
    std::vector<std::string> header;
    // (line number, cells)
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

CsvTable read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
    }
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        std::vector<std::string> cells;
        for (auto c : split(t)) {
            cells.emplace_back(c);
        }
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
        } else {
            table.rows.emplace_back(lineno, std::move(cells));
        }
    }
    if (!have_header || table.rows.empty()) {
        throw Error(ErrorCode::EmptyFile, "'" + path.string() + "' has no data rows");
    }
    return table;
}

std::vector<std::size_t> locate(const CsvTable& table, const std::vector<std::string>& names,
                                const std::filesystem::path& path) {
    std::vector<std::size_t> cols;
    for (const auto& name : names) {
        const auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end()) {
            throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found in '" + path.string() + "'");
        }
        cols.push_back(static_cast<std::size_t>(it - table.header.begin()));
    }
    return cols;
}


void fit_channels(const Eigen::MatrixXd& m, ScalerMode mode, std::vector<double>& offset, std::vector<double>& gain) {
    offset.assign(static_cast<std::size_t>(m.cols()), 0.0);
    gain.assign(static_cast<std::size_t>(m.cols()), 1.0);
    if (mode == ScalerMode::Identity) {
        return;
    }
    const double n = static_cast<double>(m.rows());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const auto col = m.col(c);
        const auto i = static_cast<std::size_t>(c);
        if (mode == ScalerMode::ZScore) {
            const double mean = col.sum() / n;
            const double var = (col.array() - mean).square().sum() / n;
            const double sd = std::sqrt(var);
            offset[i] = mean;
            // Flat channels (e.g. pre-event steady state) keep unit gain.
            gain[i] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
        } else {
            const double lo = col.minCoeff();
            const double hi = col.maxCoeff();
            offset[i] = lo;
            gain[i] = hi - lo > 1e-12 * std::max(1.0, std::abs(lo)) ? hi - lo : 1.0;
        }
    }
}

} // namespace

TimeSeriesDataset::TimeSeriesDataset(double sample_period, double t0, Eigen::MatrixXd inputs, Eigen::MatrixXd outputs,
                                     std::vector<std::string> input_names, std::vector<std::string> output_names)
    : sample_period_(sample_period),
      t0_(t0),
      inputs_(std::move(inputs)),
      outputs_(std::move(outputs)),
      input_names_(std::move(input_names)),
      output_names_(std::move(output_names)) {
    if (!(sample_period_ > 0.0) || !std::isfinite(sample_period_)) {
        throw Error(ErrorCode::InvalidArgument, "sample_period must be positive");
    }
    if (outputs_.rows() < 1) {
        throw Error(ErrorCode::EmptyDataset, "dataset needs at least one row");
    }
    if (inputs_.rows() != outputs_.rows()) {
        throw Error(ErrorCode::LengthMismatch, "inputs have " + std::to_string(inputs_.rows()) + " rows, outputs " +
                                                   std::to_string(outputs_.rows()));
    }
    if (static_cast<std::size_t>(inputs_.cols()) != input_names_.size() ||
        static_cast<std::size_t>(outputs_.cols()) != output_names_.size()) {
        throw Error(ErrorCode::ChannelCountMismatch, "channel labels do not match channel columns");
    }
    check_finite(inputs_, input_names_);
    check_finite(outputs_, output_names_);
}

TimeSeriesDataset TimeSeriesDataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > rows() || count == 0) {
        throw Error(ErrorCode::InvalidArgument, "slice [" + std::to_string(first) + ", +" + std::to_string(count) +
                                                    ") outside " + std::to_string(rows()) + " rows");
    }
    const auto f = static_cast<Eigen::Index>(first);
    const auto n = static_cast<Eigen::Index>(count);
    return {sample_period_, time(first), inputs_.middleRows(f, n), outputs_.middleRows(f, n), input_names_,
            output_names_};
}

std::string_view to_string(ScalerMode mode) noexcept {
    switch (mode) {
    case ScalerMode::ZScore: return "zscore";
    case ScalerMode::MinMax: return "minmax";
    case ScalerMode::Identity: return "identity";
    }
    return "identity";
}

ScalerMode scaler_mode_from_string(std::string_view name) {
    if (name == "zscore") return ScalerMode::ZScore;
    if (name == "minmax") return ScalerMode::MinMax;
    if (name == "identity") return ScalerMode::Identity;
    throw Error(ErrorCode::Config, "unknown scaler mode '" + std::string(name) + "'");
}

ScalerParams ScalerParams::identity(std::size_t n_inputs, std::size_t n_outputs) {
    ScalerParams p;
    p.mode = ScalerMode::Identity;
    p.input_offset.assign(n_inputs, 0.0);
    p.input_gain.assign(n_inputs, 1.0);
    p.output_offset.assign(n_outputs, 0.0);
    p.output_gain.assign(n_outputs, 1.0);
    return p;
}

ScalerParams fit_scaler(const TimeSeriesDataset& data, ScalerMode mode) {
    if (mode != ScalerMode::Identity && data.rows() < 2) {
        throw Error(ErrorCode::EmptyDataset, "scaler fit needs at least 2 rows");
    }
    ScalerParams p;
    p.mode = mode;
    fit_channels(data.inputs(), mode, p.input_offset, p.input_gain);
    fit_channels(data.outputs(), mode, p.output_offset, p.output_gain);
    return p;
}

namespace {

Eigen::MatrixXd map_columns(const Eigen::MatrixXd& m, const std::vector<double>& offset,
                            const std::vector<double>& gain, bool forward) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double o = offset[static_cast<std::size_t>(c)];
        const double g = gain[static_cast<std::size_t>(c)];
        if (forward) {
            out.col(c) = (m.col(c).array() - o) / g;
        } else {
            out.col(c) = m.col(c).array() * g + o;
        }
    }
    return out;
}

void check_channels(const ScalerParams& params, const TimeSeriesDataset& data) {
    if (params.n_inputs() != data.n_inputs() || params.n_outputs() != data.n_outputs() ||
        params.input_offset.size() != params.n_inputs() || params.output_offset.size() != params.n_outputs()) {
        throw Error(ErrorCode::ChannelCountMismatch,
                    "scaler has " + std::to_string(params.n_inputs()) + "/" + std::to_string(params.n_outputs()) +
                        " channels, dataset " + std::to_string(data.n_inputs()) + "/" +
                        std::to_string(data.n_outputs()));
    }
}

} // namespace

TimeSeriesDataset apply_scaler(const ScalerParams& params, const TimeSeriesDataset& data) {
    check_channels(params, data);
    return {data.sample_period(),
            data.t0(),
            map_columns(data.inputs(), params.input_offset, params.input_gain, true),
            map_columns(data.outputs(), params.output_offset, params.output_gain, true),
            data.input_names(),
            data.output_names()};
}

TimeSeriesDataset invert_scaler(const ScalerParams& params, const TimeSeriesDataset& data) {
    check_channels(params, data);
    return {data.sample_period(),
            data.t0(),
            map_columns(data.inputs(), params.input_offset, params.input_gain, false),
            map_columns(data.outputs(), params.output_offset, params.output_gain, false),
            data.input_names(),
            data.output_names()};
}

TimeSeriesDataset ingest_csv(const std::filesystem::path& path, const ChannelRoles& roles) {
    const auto table = read_table(path);
    const auto tcol = locate(table, {roles.time}, path).front();
    const auto icols = locate(table, roles.inputs, path);
    const auto ocols = locate(table, roles.outputs, path);

    const auto n = static_cast<Eigen::Index>(table.rows.size());
    std::vector<double> t(table.rows.size());
    Eigen::MatrixXd u(n, static_cast<Eigen::Index>(icols.size()));
    Eigen::MatrixXd y(n, static_cast<Eigen::Index>(ocols.size()));

    auto cell = [&](std::size_t r, std::size_t c) -> double {
        const auto& [lineno, cells] = table.rows[r];
        const auto& name = table.header[c];
        if (c >= cells.size() || cells[c].empty()) {
            throw Error(ErrorCode::NonFiniteValue, "column '" + name + "' line " + std::to_string(lineno) + " is empty");
        }
        const auto v = parse_number(cells[c]);
        if (!v || !std::isfinite(*v)) {
            throw Error(ErrorCode::NonFiniteValue,
                        "column '" + name + "' line " + std::to_string(lineno) + " value '" + cells[c] + "'");
        }
        return *v;
    };

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        t[r] = cell(r, tcol);
        for (std::size_t j = 0; j < icols.size(); ++j) {
            u(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = cell(r, icols[j]);
        }
        for (std::size_t j = 0; j < ocols.size(); ++j) {
            y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = cell(r, ocols[j]);
        }
    }

    if (t.size() < 2) {
        throw Error(ErrorCode::NonUniformSampling, "column '" + roles.time + "': one row cannot define a sample period");
    }
    const double period = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    if (!(period > 0.0)) {
        throw Error(ErrorCode::NonUniformSampling, "column '" + roles.time + "' is not increasing");
    }
    for (std::size_t r = 1; r < t.size(); ++r) {
        const double step = t[r] - t[r - 1];
        if (std::abs(step - period) > kSamplingJitter * period) {
            throw Error(ErrorCode::NonUniformSampling, "column '" + roles.time + "' line " +
                                                           std::to_string(table.rows[r].first) + ": step " +
                                                           format_double(step) + " vs period " + format_double(period));
        }
    }
    return {period, t.front(), std::move(u), std::move(y), roles.inputs, roles.outputs};
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    (void)ec;
    return {buf, ptr};
}

void export_csv(const TimeSeriesDataset& data, const std::filesystem::path& path, std::string_view comment) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    }
    if (!comment.empty()) {
        out << "# " << comment << '\n';
    }
    out << "t";
    for (const auto& n : data.input_names()) out << ',' << n;
    for (const auto& n : data.output_names()) out << ',' << n;
    out << '\n';
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        out << format_double(data.time(r));
        for (Eigen::Index c = 0; c < data.inputs().cols(); ++c) out << ',' << format_double(data.inputs()(ri, c));
        for (Eigen::Index c = 0; c < data.outputs().cols(); ++c) out << ',' << format_double(data.outputs()(ri, c));
        out << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
    }
}

bool MeasurementStream::output_present(std::size_t row) const {
    return outputs.row(static_cast<Eigen::Index>(row)).allFinite();
}

MeasurementStream read_stream_csv(const std::filesystem::path& path, const ChannelRoles& roles,
                                  std::size_t error_budget) {
    const auto table = read_table(path);
    const auto tcol = locate(table, {roles.time}, path).front();
    const auto icols = locate(table, roles.inputs, path);
    const auto ocols = locate(table, roles.outputs, path);

    MeasurementStream s;
    s.input_names = roles.inputs;
    s.output_names = roles.outputs;
    std::vector<double> t;
    std::vector<std::vector<double>> u_rows;
    std::vector<std::vector<double>> y_rows;

    auto reject = [&](std::size_t lineno, std::string msg) {
        s.skipped.push_back({lineno, std::move(msg)});
        if (s.skipped.size() > error_budget) {
            throw Error(ErrorCode::NonFiniteValue, "stream error budget (" + std::to_string(error_budget) +
                                                       ") exhausted at line " + std::to_string(lineno) + ": " +
                                                       s.skipped.back().message);
        }
    };

    for (const auto& [lineno, cells] : table.rows) {
        auto get = [&](std::size_t c) -> std::optional<double> {
            if (c >= cells.size()) return std::nullopt;
            return parse_number(cells[c]);
        };
        const auto tv = get(tcol);
        if (!tv || !std::isfinite(*tv)) {
            reject(lineno, "bad time value in column '" + roles.time + "'");
            continue;
        }
        if (!t.empty() && *tv <= t.back()) {
            reject(lineno, "time not increasing");
            continue;
        }
        std::vector<double> u;
        bool ok = true;
        for (auto c : icols) {
            const auto v = get(c);
            if (!v || !std::isfinite(*v)) {
                reject(lineno, "bad input value in column '" + table.header[c] + "'");
                ok = false;
                break;
            }
            u.push_back(*v);
        }
        if (!ok) continue;
        // Empty output cells mark a missing measurement; anything else must parse.
        std::vector<double> y;
        std::size_t blanks = 0;
        for (auto c : ocols) {
            if (c >= cells.size() || cells[c].empty()) {
                y.push_back(std::numeric_limits<double>::quiet_NaN());
                ++blanks;
                continue;
            }
            const auto v = get(c);
            if (!v || !std::isfinite(*v)) {
                reject(lineno, "bad output value in column '" + table.header[c] + "'");
                ok = false;
                break;
            }
            y.push_back(*v);
        }
        if (!ok) continue;
        if (blanks != 0 && blanks != ocols.size()) {
            reject(lineno, "partially missing outputs");
            continue;
        }
        t.push_back(*tv);
        u_rows.push_back(std::move(u));
        y_rows.push_back(std::move(y));
    }
    if (t.size() < 2) {
        throw Error(ErrorCode::EmptyFile, "stream '" + path.string() + "' has fewer than 2 usable rows");
    }
    std::vector<double> steps;
    for (std::size_t i = 1; i < t.size(); ++i) steps.push_back(t[i] - t[i - 1]);
    std::nth_element(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2), steps.end());
    s.sample_period = steps[steps.size() / 2];
    s.t0 = t.front();
    const auto n = static_cast<Eigen::Index>(t.size());
    s.inputs.resize(n, static_cast<Eigen::Index>(icols.size()));
    s.outputs.resize(n, static_cast<Eigen::Index>(ocols.size()));
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        for (Eigen::Index c = 0; c < s.inputs.cols(); ++c) s.inputs(r, c) = u_rows[ri][static_cast<std::size_t>(c)];
        for (Eigen::Index c = 0; c < s.outputs.cols(); ++c) s.outputs(r, c) = y_rows[ri][static_cast<std::size_t>(c)];
        s.index.push_back(static_cast<std::size_t>(std::llround((t[ri] - s.t0) / s.sample_period)));
    }
    return s;
}

} // namespace udm
