#include "udm/udm.h"

#include "armax.hpp"
#include "error.hpp"
#include "estimation.hpp"
#include "metrics.hpp"
#include "monitor.hpp"
#include "plant_sim.hpp"
#include "timeseries.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

struct udm_dataset {
    udm::TimeSeriesDataset data;
};

struct udm_model {
    udm::ArmaxModel model;
};

struct udm_monitor {
    udm::Monitor monitor;
};

struct udm_stream {
    udm::MeasurementStream stream;
};

namespace {

thread_local std::string g_last_error;

udm_status to_status(udm::ErrorCode code) {
    return static_cast<udm_status>(static_cast<int>(code) + 1);
}

udm_status fail(udm_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

template <class F>
udm_status guarded(F&& body) {
    try {
        body();
        return UDM_OK;
    } catch (const udm::Error& e) {
        return fail(to_status(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(UDM_ERR_CONFIG, std::string("Config: ") + e.what());
    } catch (const std::bad_alloc&) {
        return fail(UDM_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(UDM_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(UDM_ERR_INTERNAL, "unknown failure");
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw udm::Error(udm::ErrorCode::InvalidArgument, what);
}

char* duplicate(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

nlohmann::json parse_json(const char* text, const char* what) {
    if (text == nullptr) return nlohmann::json::object();
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw udm::Error(udm::ErrorCode::Config, std::string(what) + ": " + e.what());
    }
}

udm::ChannelRoles roles_from(const char* roles_json) {
    require(roles_json != nullptr, "channel roles are required");
    const auto doc = parse_json(roles_json, "roles");
    udm::ChannelRoles roles;
    try {
        roles.time = doc.value("time", roles.time);
        roles.inputs = doc.value("inputs", std::vector<std::string>{});
        roles.outputs = doc.value("outputs", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw udm::Error(udm::ErrorCode::Config, std::string("roles: ") + e.what());
    }
    if (roles.outputs.empty()) throw udm::Error(udm::ErrorCode::Config, "roles.outputs: at least one output required");
    return roles;
}

std::vector<std::string> names_from(const char* const* names, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        require(names != nullptr && names[i] != nullptr, "channel name missing");
        out.emplace_back(names[i]);
    }
    return out;
}

Eigen::MatrixXd block_from(const double* values, std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (rows * cols > 0) require(values != nullptr, "data block missing");
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * cols + c];
        }
    }
    return m;
}

void copy_block(const Eigen::MatrixXd& m, double* buffer, std::size_t capacity) {
    const auto need = static_cast<std::size_t>(m.size());
    require(buffer != nullptr || need == 0, "buffer is NULL");
    if (capacity < need) {
        throw udm::Error(udm::ErrorCode::LengthMismatch,
                         "buffer holds " + std::to_string(capacity) + " values, " + std::to_string(need) + " needed");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) buffer[r * m.cols() + c] = m(r, c);
    }
}

udm::ArmaxModel fit_recursive(const udm::TimeSeriesDataset& data, const udm::ArmaxOrders& orders,
                              const udm::FitConfig& cfg, nlohmann::json& report) {
    orders.validate(data.n_inputs());
    const auto scaler = udm::fit_scaler(data, cfg.scaler_mode);
    const auto scaled = udm::apply_scaler(scaler, data);
    auto state = udm::rls_init(orders, data.n_inputs(), data.n_outputs(), cfg);
    const Eigen::MatrixXd residuals = udm::rls_run(state, scaled);
    std::vector<udm::OutputCoefficients> zero(data.n_outputs(), udm::OutputCoefficients::zeros(orders, data.n_inputs()));
    udm::FitMetadata meta;
    meta.train_rows = data.rows();
    const udm::ArmaxModel tpl(orders, data.input_names(), data.output_names(), std::move(zero), scaler, meta);
    auto model = udm::finalize_rls(state, tpl);

    nlohmann::json outs = nlohmann::json::array();
    const auto skip = static_cast<Eigen::Index>(orders.max_lag());
    for (std::size_t m = 0; m < data.n_outputs(); ++m) {
        const auto col = residuals.col(static_cast<Eigen::Index>(m));
        outs.push_back({{"output", data.output_names()[m]},
                        {"sse", col.tail(col.size() - skip).squaredNorm()},
                        {"updates", state.outputs[m].updates}});
    }
    report = {{"method", "rls"}, {"converged", true}, {"outputs", outs}};
    return model;
}

} // namespace

extern "C" {

const char* udm_version(void) { return "1.0.0"; }

const char* udm_status_name(udm_status status) {
    if (status == UDM_OK) return "Ok";
    if (status == UDM_ERR_INTERNAL) return "Internal";
    const int code = static_cast<int>(status) - 1;
    if (code < 0 || code > static_cast<int>(udm::ErrorCode::Config)) return "Unknown";
    return udm::to_string(static_cast<udm::ErrorCode>(code)).data();
}

const char* udm_last_error(void) { return g_last_error.c_str(); }

void udm_string_free(char* s) { std::free(s); }

// ---- datasets ----------------------------------------------------------------

udm_status udm_dataset_read_csv(const char* path, const char* roles_json, udm_dataset** out) {
    return guarded([&] {
        require(path != nullptr && out != nullptr, "path and out are required");
        *out = new udm_dataset{udm::ingest_csv(path, roles_from(roles_json))};
    });
}

udm_status udm_dataset_create(double sample_period, double t0, size_t rows, size_t n_inputs, const double* inputs,
                              const char* const* input_names, size_t n_outputs, const double* outputs,
                              const char* const* output_names, udm_dataset** out) {
    return guarded([&] {
        require(out != nullptr, "out is NULL");
        *out = new udm_dataset{{sample_period, t0, block_from(inputs, rows, n_inputs), block_from(outputs, rows, n_outputs),
                                names_from(input_names, n_inputs), names_from(output_names, n_outputs)}};
    });
}

udm_status udm_dataset_write_csv(const udm_dataset* data, const char* path, const char* comment) {
    return guarded([&] {
        require(data != nullptr && path != nullptr, "dataset and path are required");
        udm::export_csv(data->data, path, comment == nullptr ? "" : comment);
    });
}

size_t udm_dataset_rows(const udm_dataset* data) { return data == nullptr ? 0 : data->data.rows(); }
size_t udm_dataset_n_inputs(const udm_dataset* data) { return data == nullptr ? 0 : data->data.n_inputs(); }
size_t udm_dataset_n_outputs(const udm_dataset* data) { return data == nullptr ? 0 : data->data.n_outputs(); }
double udm_dataset_sample_period(const udm_dataset* data) { return data == nullptr ? 0.0 : data->data.sample_period(); }

udm_status udm_dataset_info(const udm_dataset* data, char** info_json) {
    return guarded([&] {
        require(data != nullptr && info_json != nullptr, "dataset and out are required");
        const auto& d = data->data;
        const nlohmann::json doc = {{"rows", d.rows()},
                                    {"sample_period", d.sample_period()},
                                    {"t0", d.t0()},
                                    {"inputs", d.input_names()},
                                    {"outputs", d.output_names()}};
        *info_json = duplicate(doc.dump());
    });
}

udm_status udm_dataset_copy_inputs(const udm_dataset* data, double* buffer, size_t capacity) {
    return guarded([&] {
        require(data != nullptr, "dataset is NULL");
        copy_block(data->data.inputs(), buffer, capacity);
    });
}

udm_status udm_dataset_copy_outputs(const udm_dataset* data, double* buffer, size_t capacity) {
    return guarded([&] {
        require(data != nullptr, "dataset is NULL");
        copy_block(data->data.outputs(), buffer, capacity);
    });
}

void udm_dataset_free(udm_dataset* data) { delete data; }

// ---- simulation --------------------------------------------------------------

udm_status udm_simulate(const char* scenario_json, udm_dataset** out) {
    return guarded([&] {
        require(scenario_json != nullptr && out != nullptr, "scenario and out are required");
        *out = new udm_dataset{udm::simulate(udm::scenario_from_json(parse_json(scenario_json, "scenario")))};
    });
}

udm_status udm_generate_suite(const char* base_scenario_json, size_t count, uint64_t seed, char** suite_json) {
    return guarded([&] {
        require(base_scenario_json != nullptr && suite_json != nullptr, "scenario and out are required");
        const auto base = udm::scenario_from_json(parse_json(base_scenario_json, "scenario"));
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& sc : udm::generate_event_suite(base, count, seed)) doc.push_back(udm::to_json(sc));
        *suite_json = duplicate(doc.dump());
    });
}

// ---- models --------------------------------------------------------------------

udm_status udm_fit(const udm_dataset* data, const char* orders_json, const char* fit_json, udm_model** out,
                   char** report_json) {
    return guarded([&] {
        require(data != nullptr && orders_json != nullptr && out != nullptr, "dataset, orders and out are required");
        const auto orders = udm::orders_from_json(parse_json(orders_json, "orders"));
        auto fit_doc = parse_json(fit_json, "fit");
        std::string method = "els";
        if (fit_doc.contains("method")) {
            method = fit_doc.at("method").get<std::string>();
            fit_doc.erase("method");
        }
        const auto cfg = udm::fit_config_from_json(fit_doc);
        nlohmann::json report;
        std::optional<udm::ArmaxModel> model;
        if (method == "els") {
            auto result = udm::fit_batch_els(data->data, orders, cfg);
            report = udm::to_json(result.report, data->data.output_names());
            report["method"] = "els";
            model = std::move(result.model);
        } else if (method == "rls") {
            model = fit_recursive(data->data, orders, cfg, report);
        } else {
            throw udm::Error(udm::ErrorCode::Config, "fit.method: unknown method '" + method + "'");
        }
        auto handle = std::make_unique<udm_model>(udm_model{std::move(*model)});
        if (report_json != nullptr) *report_json = duplicate(report.dump());
        *out = handle.release();
    });
}

udm_status udm_select_richest(const udm_dataset* const* candidates, size_t count, size_t* index) {
    return guarded([&] {
        require(candidates != nullptr && index != nullptr, "candidates and index are required");
        std::vector<udm::TimeSeriesDataset> sets;
        for (std::size_t i = 0; i < count; ++i) {
            require(candidates[i] != nullptr, "candidate dataset is NULL");
            sets.push_back(candidates[i]->data);
        }
        *index = udm::select_richest(sets);
    });
}

udm_status udm_model_load(const char* path, udm_model** out) {
    return guarded([&] {
        require(path != nullptr && out != nullptr, "path and out are required");
        *out = new udm_model{udm::load_model(path)};
    });
}

udm_status udm_model_save(const udm_model* model, const char* path) {
    return guarded([&] {
        require(model != nullptr && path != nullptr, "model and path are required");
        udm::save_model(model->model, path);
    });
}

udm_status udm_model_from_json(const char* json, udm_model** out) {
    return guarded([&] {
        require(json != nullptr && out != nullptr, "json and out are required");
        *out = new udm_model{udm::model_from_json(parse_json(json, "model"))};
    });
}

udm_status udm_model_to_json(const udm_model* model, char** json) {
    return guarded([&] {
        require(model != nullptr && json != nullptr, "model and out are required");
        *json = duplicate(udm::to_json(model->model).dump(2));
    });
}

udm_status udm_model_set_provenance(udm_model* model, uint64_t seed, const char* config_hash) {
    return guarded([&] {
        require(model != nullptr, "model is NULL");
        auto meta = model->model.metadata();
        meta.seed = seed;
        meta.config_hash = config_hash == nullptr ? "" : config_hash;
        model->model = model->model.with_metadata(std::move(meta));
    });
}

size_t udm_model_n_inputs(const udm_model* model) { return model == nullptr ? 0 : model->model.n_inputs(); }
size_t udm_model_n_outputs(const udm_model* model) { return model == nullptr ? 0 : model->model.n_outputs(); }
void udm_model_free(udm_model* model) { delete model; }

udm_status udm_predict(const udm_model* model, const udm_dataset* data, const char* mode, udm_dataset** predicted,
                       size_t* first_row) {
    return guarded([&] {
        require(model != nullptr && data != nullptr && predicted != nullptr, "model, dataset and out are required");
        const auto fm = udm::FeedbackMode::parse(mode == nullptr ? "measured" : mode);
        auto p = udm::predict_horizon(model->model, data->data, fm);
        const auto& d = data->data;
        const auto skip = static_cast<Eigen::Index>(p.first_row);
        Eigen::MatrixXd u = d.inputs().bottomRows(d.inputs().rows() - skip);
        *predicted = new udm_dataset{{d.sample_period(), d.time(p.first_row), std::move(u), std::move(p.predicted),
                                      d.input_names(), d.output_names()}};
        if (first_row != nullptr) *first_row = p.first_row;
    });
}

udm_status udm_validate(const udm_model* model, const udm_dataset* data, const char* mode, const char* scenario,
                        const char* predictions_csv, const char* comment, char** summary_json) {
    return guarded([&] {
        require(model != nullptr && data != nullptr && summary_json != nullptr, "model, dataset and out are required");
        const auto fm = udm::FeedbackMode::parse(mode == nullptr ? "measured" : mode);
        const auto p = udm::predict_horizon(model->model, data->data, fm);
        const auto& d = data->data;
        const auto n = p.predicted.rows();
        const Eigen::MatrixXd measured = d.outputs().bottomRows(n);
        auto summary = udm::summarize_errors(scenario == nullptr ? "scenario" : scenario, d.output_names(), measured,
                                             p.predicted);
        if (predictions_csv != nullptr) {
            Eigen::MatrixXd both(n, 2 * measured.cols());
            both << measured, p.predicted;
            std::vector<std::string> names;
            for (const auto& ch : d.output_names()) names.push_back("y_" + ch);
            for (const auto& ch : d.output_names()) names.push_back("yhat_" + ch);
            const udm::TimeSeriesDataset out(d.sample_period(), d.time(p.first_row), Eigen::MatrixXd(n, 0),
                                             std::move(both), {}, std::move(names));
            udm::export_csv(out, predictions_csv, comment == nullptr ? "" : comment);
        }
        auto doc = udm::to_json(summary);
        doc["mode"] = fm.to_string();
        doc["first_row"] = p.first_row;
        *summary_json = duplicate(doc.dump());
    });
}

// ---- metrics -------------------------------------------------------------------

udm_status udm_rmse(const double* measured, const double* predicted, size_t n, double* out) {
    return guarded([&] {
        require(out != nullptr && (n == 0 || (measured != nullptr && predicted != nullptr)), "arrays and out are required");
        *out = udm::rmse({measured, n}, {predicted, n});
    });
}

udm_status udm_summarize_suite(const char* summaries_json, char** report_json, char** boxplot_csv) {
    return guarded([&] {
        require(summaries_json != nullptr, "summaries are required");
        const auto doc = parse_json(summaries_json, "summaries");
        if (!doc.is_array()) throw udm::Error(udm::ErrorCode::Config, "summaries: expected an array");
        std::vector<udm::ErrorSummary> rows;
        for (const auto& s : doc) rows.push_back(udm::error_summary_from_json(s));
        const auto report = udm::summarize_suite(rows);
        std::string json = report.to_json().dump(2);
        std::string csv = report.boxplot_csv();
        if (report_json != nullptr) *report_json = duplicate(json);
        if (boxplot_csv != nullptr) *boxplot_csv = duplicate(csv);
    });
}

// ---- measurement streams -------------------------------------------------------

udm_status udm_stream_read_csv(const char* path, const char* roles_json, size_t error_budget, udm_stream** out) {
    return guarded([&] {
        require(path != nullptr && out != nullptr, "path and out are required");
        *out = new udm_stream{udm::read_stream_csv(path, roles_from(roles_json), error_budget)};
    });
}

size_t udm_stream_rows(const udm_stream* stream) { return stream == nullptr ? 0 : stream->stream.rows(); }

udm_status udm_stream_row(const udm_stream* stream, size_t row, size_t* index, double* inputs, size_t n_inputs,
                          double* outputs, size_t n_outputs, int* outputs_present) {
    return guarded([&] {
        require(stream != nullptr, "stream is NULL");
        const auto& s = stream->stream;
        require(row < s.rows(), "row out of range");
        const auto r = static_cast<Eigen::Index>(row);
        if (n_inputs != static_cast<std::size_t>(s.inputs.cols()) || n_outputs != static_cast<std::size_t>(s.outputs.cols())) {
            throw udm::Error(udm::ErrorCode::ChannelCountMismatch, "buffer sizes differ from the stream's channel counts");
        }
        require((inputs != nullptr || n_inputs == 0) && (outputs != nullptr || n_outputs == 0), "buffers are required");
        for (std::size_t j = 0; j < n_inputs; ++j) inputs[j] = s.inputs(r, static_cast<Eigen::Index>(j));
        for (std::size_t m = 0; m < n_outputs; ++m) outputs[m] = s.outputs(r, static_cast<Eigen::Index>(m));
        if (index != nullptr) *index = s.index[row];
        if (outputs_present != nullptr) *outputs_present = s.output_present(row) ? 1 : 0;
    });
}

udm_status udm_stream_skipped(const udm_stream* stream, char** json) {
    return guarded([&] {
        require(stream != nullptr && json != nullptr, "stream and out are required");
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& issue : stream->stream.skipped) doc.push_back({{"line", issue.line}, {"message", issue.message}});
        *json = duplicate(doc.dump());
    });
}

void udm_stream_free(udm_stream* stream) { delete stream; }

// ---- continual validation ------------------------------------------------------

udm_status udm_monitor_create(const udm_model* model, const char* config_json, udm_monitor** out) {
    return guarded([&] {
        require(model != nullptr && out != nullptr, "model and out are required");
        const auto cfg = udm::monitor_config_from_json(parse_json(config_json, "monitor"));
        *out = new udm_monitor{udm::Monitor(model->model, cfg)};
    });
}

udm_status udm_monitor_step(udm_monitor* monitor, size_t index, const double* inputs, size_t n_inputs,
                            const double* outputs, size_t n_outputs, double* prediction, int* has_prediction,
                            int* recal_requested) {
    return guarded([&] {
        require(monitor != nullptr && (inputs != nullptr || n_inputs == 0), "monitor and inputs are required");
        const std::span<const double> y = outputs == nullptr ? std::span<const double>{} : std::span{outputs, n_outputs};
        const auto r = monitor->monitor.step(index, {inputs, n_inputs}, y);
        if (has_prediction != nullptr) *has_prediction = r.prediction ? 1 : 0;
        if (recal_requested != nullptr) *recal_requested = r.recal_requested ? 1 : 0;
        if (prediction != nullptr && r.prediction) {
            for (Eigen::Index m = 0; m < r.prediction->size(); ++m) prediction[m] = (*r.prediction)(m);
        }
    });
}

udm_status udm_monitor_recalibrate(udm_monitor* monitor, char** outcome_json) {
    return guarded([&] {
        require(monitor != nullptr, "monitor is NULL");
        const auto o = monitor->monitor.recalibrate();
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        const nlohmann::json doc = {{"success", o.success},
                                    {"error", o.error},
                                    {"rmse_before", num(o.rmse_before)},
                                    {"rmse_after", num(o.rmse_after)},
                                    {"version", o.version}};
        if (outcome_json != nullptr) *outcome_json = duplicate(doc.dump());
    });
}

size_t udm_monitor_event_count(const udm_monitor* monitor) {
    return monitor == nullptr ? 0 : monitor->monitor.events().size();
}

udm_status udm_monitor_events(const udm_monitor* monitor, size_t first, char** jsonl) {
    return guarded([&] {
        require(monitor != nullptr && jsonl != nullptr, "monitor and out are required");
        const auto& all = monitor->monitor.events();
        const std::vector<udm::MonitorEvent> tail(all.begin() + static_cast<std::ptrdiff_t>(std::min(first, all.size())),
                                                  all.end());
        *jsonl = duplicate(udm::to_jsonl(tail));
    });
}

size_t udm_monitor_active_version(const udm_monitor* monitor) {
    return monitor == nullptr ? 0 : monitor->monitor.active_version();
}

udm_status udm_monitor_model(const udm_monitor* monitor, size_t version, udm_model** out) {
    return guarded([&] {
        require(monitor != nullptr && out != nullptr, "monitor and out are required");
        const auto& versions = monitor->monitor.versions();
        require(version >= 1 && version <= versions.size(), "model version out of range");
        *out = new udm_model{versions[version - 1]};
    });
}

udm_status udm_monitor_summary(const udm_monitor* monitor, char** json) {
    return guarded([&] {
        require(monitor != nullptr && json != nullptr, "monitor and out are required");
        const auto& m = monitor->monitor;
        nlohmann::json timeline = nlohmann::json::array();
        for (const auto& [index, version] : m.version_timeline()) timeline.push_back({{"from_index", index}, {"version", version}});
        const Eigen::VectorXd rm = m.rolling_rmse();
        nlohmann::json rolling = nlohmann::json::array();
        for (Eigen::Index i = 0; i < rm.size(); ++i) rolling.push_back(std::isfinite(rm(i)) ? nlohmann::json(rm(i)) : nlohmann::json(nullptr));
        const nlohmann::json doc = {{"active_version", m.active_version()},
                                    {"triggers", m.trigger_count()},
                                    {"events", m.events().size()},
                                    {"timeline", timeline},
                                    {"rolling_rmse", rolling},
                                    {"in_cooldown", m.in_cooldown()}};
        *json = duplicate(doc.dump());
    });
}

void udm_monitor_free(udm_monitor* monitor) { delete monitor; }

} // extern "C"
