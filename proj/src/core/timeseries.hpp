#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace udm {

/// Column-role assignment used when ingesting a CSV file.
struct ChannelRoles {
    std::string time = "t";
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

/// Aligned multichannel record: N_T rows of inputs (u) and outputs (y) on a
/// uniform time grid t_k = t0 + k * sample_period.
///
/// The constructor enforces the invariants (equal row counts, positive period,
/// matching label counts, finite values); instances are immutable afterwards.
class TimeSeriesDataset {
public:
    TimeSeriesDataset(double sample_period, double t0, Eigen::MatrixXd inputs, Eigen::MatrixXd outputs,
                      std::vector<std::string> input_names, std::vector<std::string> output_names);

    [[nodiscard]] double sample_period() const noexcept { return sample_period_; }
    [[nodiscard]] double t0() const noexcept { return t0_; }
    [[nodiscard]] double time(std::size_t row) const noexcept {
        return t0_ + static_cast<double>(row) * sample_period_;
    }
    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(outputs_.rows()); }
    [[nodiscard]] std::size_t n_inputs() const noexcept { return static_cast<std::size_t>(inputs_.cols()); }
    [[nodiscard]] std::size_t n_outputs() const noexcept { return static_cast<std::size_t>(outputs_.cols()); }

    [[nodiscard]] const Eigen::MatrixXd& inputs() const noexcept { return inputs_; }
    [[nodiscard]] const Eigen::MatrixXd& outputs() const noexcept { return outputs_; }
    [[nodiscard]] const std::vector<std::string>& input_names() const noexcept { return input_names_; }
    [[nodiscard]] const std::vector<std::string>& output_names() const noexcept { return output_names_; }

    /// Rows [first, first + count) as a new dataset (t0 shifted accordingly).
    [[nodiscard]] TimeSeriesDataset slice(std::size_t first, std::size_t count) const;

private:
    double sample_period_;
    double t0_;
    Eigen::MatrixXd inputs_;
    Eigen::MatrixXd outputs_;
    std::vector<std::string> input_names_;
    std::vector<std::string> output_names_;
};

enum class ScalerMode { ZScore, MinMax, Identity };

std::string_view to_string(ScalerMode mode) noexcept;
ScalerMode scaler_mode_from_string(std::string_view name);

/// Per-channel affine normalization x_s = (x - offset) / gain, held separately
/// for input and output channels. Every gain is strictly positive.
struct ScalerParams {
    ScalerMode mode = ScalerMode::Identity;
    std::vector<double> input_offset;
    std::vector<double> input_gain;
    std::vector<double> output_offset;
    std::vector<double> output_gain;

    static ScalerParams identity(std::size_t n_inputs, std::size_t n_outputs);

    [[nodiscard]] std::size_t n_inputs() const noexcept { return input_gain.size(); }
    [[nodiscard]] std::size_t n_outputs() const noexcept { return output_gain.size(); }

    [[nodiscard]] double scale_input(std::size_t ch, double x) const { return (x - input_offset[ch]) / input_gain[ch]; }
    [[nodiscard]] double scale_output(std::size_t ch, double y) const { return (y - output_offset[ch]) / output_gain[ch]; }
    [[nodiscard]] double unscale_output(std::size_t ch, double ys) const { return ys * output_gain[ch] + output_offset[ch]; }
};

ScalerParams fit_scaler(const TimeSeriesDataset& data, ScalerMode mode);
TimeSeriesDataset apply_scaler(const ScalerParams& params, const TimeSeriesDataset& data);
TimeSeriesDataset invert_scaler(const ScalerParams& params, const TimeSeriesDataset& data);

/// Reads a CSV with a header row; lines starting with '#' are provenance comments.
TimeSeriesDataset ingest_csv(const std::filesystem::path& path, const ChannelRoles& roles);

/// Writes `t` followed by input then output channels, 17 significant digits.
/// `comment` (if non-empty) is emitted as a leading '#' line.
void export_csv(const TimeSeriesDataset& data, const std::filesystem::path& path, std::string_view comment = {});

/// A row that was rejected while reading a monitoring stream.
struct RowIssue {
    std::size_t line = 0;
    std::string message;
};

/// Monitoring stream: like a dataset, except that output cells may be empty
/// (stored as NaN) to mark spans where measurements are unavailable.
struct MeasurementStream {
    double sample_period = 0.0;
    double t0 = 0.0;
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd outputs;
    std::vector<std::size_t> index; // sample index of each retained row
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::vector<RowIssue> skipped;

    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
    [[nodiscard]] bool output_present(std::size_t row) const;
};

/// Lenient stream reader: malformed rows are collected in `skipped` (up to
/// `error_budget`, after which the read aborts) instead of failing the read.
MeasurementStream read_stream_csv(const std::filesystem::path& path, const ChannelRoles& roles,
                                  std::size_t error_budget);

std::string format_double(double value);

} // namespace udm
