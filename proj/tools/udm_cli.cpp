// udm: command-line front end over the shared library.
//
//   udm simulate --config sim.json      --out DIR [--seed N] [--force]
//   udm fit      --config fit.json      --out DIR [--seed N] [--force]
//   udm validate --config validate.json --out DIR [--mode M] [--force]
//   udm monitor  --config monitor.json  --out DIR [--force]
//
// Exit status: 0 success, 1 usage or validation error, 2 finished with warnings.

#include "udm/udm.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitWarnings = 2;

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(udm_status status, const std::string& context) {
    if (status != UDM_OK) throw Failure(context + ": " + udm_last_error());
}

std::string take(char* s) {
    std::string out = s == nullptr ? "" : s;
    udm_string_free(s);
    return out;
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<udm_dataset, Deleter<udm_dataset, udm_dataset_free>>;
using Model = std::unique_ptr<udm_model, Deleter<udm_model, udm_model_free>>;
using Monitor = std::unique_ptr<udm_monitor, Deleter<udm_monitor, udm_monitor_free>>;
using Stream = std::unique_ptr<udm_stream, Deleter<udm_stream, udm_stream_free>>;

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    bool force = false;
};

/// Shared state of one command run: effective configuration, provenance and
/// the list of artifacts written so far.
class Run {
public:
    Run(std::string command, const Options& opt) : command_(std::move(command)), opt_(opt) {
        std::ifstream in(opt.config);
        if (!in) throw Failure("cannot open config '" + opt.config + "'");
        try {
            config_ = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Failure("config '" + opt.config + "': " + e.what());
        }
        if (!config_.is_object()) throw Failure("config '" + opt.config + "': expected a JSON object");
        base_ = fs::absolute(opt.config).parent_path();
        if (opt.seed) config_["seed"] = *opt.seed;
        try {
            seed_ = config_.value("seed", std::uint64_t{0});
        } catch (const json::exception&) {
            throw Failure("config.seed: expected an unsigned integer");
        }
        out_ = opt.out;
    }

    [[nodiscard]] json& config() { return config_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] const fs::path& out() const { return out_; }
    [[nodiscard]] const std::string& hash() const { return hash_; }

    /// Fixes the configuration: later edits are not reflected in the hash.
    void seal() { hash_ = fnv1a_hex(config_.dump()); }

    [[nodiscard]] std::string provenance_comment() const {
        return "udm " + command_ + " seed=" + std::to_string(seed_) + " config_hash=" + hash_;
    }
    [[nodiscard]] json provenance() const { return {{"seed", seed_}, {"config_hash", hash_}}; }

    /// Resolves a config-relative path and insists that it exists.
    [[nodiscard]] fs::path input(const std::string& field, const json& value) const {
        if (!value.is_string()) throw Failure("config." + field + ": expected a path string");
        fs::path p = value.get<std::string>();
        if (p.is_relative()) p = base_ / p;
        if (!fs::exists(p)) throw Failure("config." + field + ": '" + p.string() + "' does not exist");
        return p;
    }

    [[nodiscard]] std::vector<fs::path> inputs(const std::string& field) const {
        if (!config_.contains(field)) throw Failure("config." + field + ": required");
        const auto& v = config_.at(field);
        std::vector<fs::path> out;
        if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) out.push_back(input(field + "[" + std::to_string(i) + "]", v[i]));
        } else {
            out.push_back(input(field, v));
        }
        if (out.empty()) throw Failure("config." + field + ": at least one path required");
        return out;
    }

    [[nodiscard]] std::string json_field(const std::string& field, bool required = true) const {
        if (!config_.contains(field)) {
            if (required) throw Failure("config." + field + ": required");
            return {};
        }
        return config_.at(field).dump();
    }

    /// Refuses to write into a non-empty output directory unless forced.
    void prepare_output() const {
        if (fs::exists(out_) && !fs::is_directory(out_)) throw Failure("--out '" + out_.string() + "' is not a directory");
        if (fs::exists(out_) && !fs::is_empty(out_) && !opt_.force) {
            throw Failure("output directory '" + out_.string() + "' is not empty; pass --force to overwrite");
        }
        fs::create_directories(out_);
    }

    fs::path artifact(const std::string& relative, const std::string& kind) {
        files_.push_back({{"path", relative}, {"kind", kind}});
        const auto p = out_ / relative;
        fs::create_directories(p.parent_path());
        return p;
    }

    void write_json(const std::string& relative, const std::string& kind, json doc) {
        doc["provenance"] = provenance();
        std::ofstream(artifact(relative, kind)) << doc.dump(2) << '\n';
    }

    void finish(json extra = json::object()) {
        json manifest = {{"command", command_},
                         {"seed", seed_},
                         {"config_hash", hash_},
                         {"config", config_},
                         {"files", files_},
                         {"metadata", {{"created", utc_now()}, {"udm_version", udm_version()}}}};
        for (auto& [k, v] : extra.items()) manifest[k] = v;
        std::ofstream(out_ / "manifest.json") << manifest.dump(2) << '\n';
    }

private:
    std::string command_;
    const Options& opt_;
    json config_;
    fs::path base_;
    fs::path out_;
    std::uint64_t seed_ = 0;
    std::string hash_;
    json files_ = json::array();
};

/// Runs `task(i)` for i in [0, n) on a small worker pool; the first failure is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

Dataset read_dataset(const fs::path& path, const std::string& roles) {
    udm_dataset* d = nullptr;
    check(udm_dataset_read_csv(path.c_str(), roles.c_str(), &d), path.string());
    return Dataset(d);
}

Model read_model(const fs::path& path) {
    udm_model* m = nullptr;
    check(udm_model_load(path.c_str(), &m), path.string());
    return Model(m);
}

std::string safe_name(std::string s) {
    for (auto& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    return s.empty() ? "scenario" : s;
}

// ---- simulate -------------------------------------------------------------------

int cmd_simulate(const Options& opt) {
    Run run("simulate", opt);
    auto& cfg = run.config();
    if (!cfg.contains("scenario") || !cfg.at("scenario").is_object()) throw Failure("config.scenario: required object");
    std::size_t count = 0;
    if (cfg.contains("suite")) {
        try {
            count = cfg.at("suite").value("count", std::size_t{0});
        } catch (const json::exception&) {
            throw Failure("config.suite.count: expected an unsigned integer");
        }
    }
    run.seal();

    json base = cfg.at("scenario");
    json scenarios = json::array();
    if (count > 0) {
        char* suite = nullptr;
        check(udm_generate_suite(base.dump().c_str(), count, run.seed(), &suite), "config.suite");
        scenarios = json::parse(take(suite));
    } else {
        base["seed"] = run.seed();
        scenarios.push_back(base);
    }
    run.prepare_output();

    std::vector<std::string> files(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const auto name = scenarios[i].value("name", std::string("scenario"));
        files[i] = "data/" + safe_name(name) + ".csv";
        run.artifact(files[i], "dataset");
    }
    parallel_for(scenarios.size(), [&](std::size_t i) {
        udm_dataset* d = nullptr;
        check(udm_simulate(scenarios[i].dump().c_str(), &d), "scenario '" + scenarios[i].value("name", "") + "'");
        Dataset owned(d);
        const auto comment = run.provenance_comment() + " scenario_seed=" +
                             std::to_string(scenarios[i].value("seed", std::uint64_t{0}));
        check(udm_dataset_write_csv(d, (run.out() / files[i]).c_str(), comment.c_str()), files[i]);
    });

    json listing = json::array();
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        listing.push_back({{"file", files[i]},
                           {"name", scenarios[i].value("name", "")},
                           {"seed", scenarios[i].value("seed", std::uint64_t{0})},
                           {"plant", scenarios[i].value("plant", "")}});
    }
    run.finish({{"plant", base.value("plant", "")}, {"scenarios", listing}, {"scenario_configs", scenarios}});
    std::cout << "simulated " << scenarios.size() << " scenario(s) into " << run.out().string() << '\n';
    return kExitOk;
}

// ---- fit ------------------------------------------------------------------------

int cmd_fit(const Options& opt) {
    Run run("fit", opt);
    const auto train = run.inputs("train");
    const auto roles = run.json_field("roles");
    const auto orders = run.json_field("orders");
    const auto fit_cfg = run.json_field("fit", false);
    const auto select = run.config().value("select", std::string("richest"));
    if (select != "richest" && select != "first") throw Failure("config.select: expected 'richest' or 'first'");
    run.seal();

    std::vector<Dataset> sets;
    for (const auto& p : train) sets.push_back(read_dataset(p, roles));
    std::size_t chosen = 0;
    if (select == "richest" && sets.size() > 1) {
        std::vector<const udm_dataset*> raw;
        for (const auto& s : sets) raw.push_back(s.get());
        check(udm_select_richest(raw.data(), raw.size(), &chosen), "config.train");
    }

    udm_model* m = nullptr;
    char* report_text = nullptr;
    check(udm_fit(sets[chosen].get(), orders.c_str(), fit_cfg.empty() ? nullptr : fit_cfg.c_str(), &m, &report_text),
          "fitting '" + train[chosen].string() + "'");
    Model model(m);
    auto report = json::parse(take(report_text));
    check(udm_model_set_provenance(model.get(), run.seed(), run.hash().c_str()), "model provenance");

    run.prepare_output();
    check(udm_model_save(model.get(), run.artifact("model.json", "model").c_str()), "model.json");
    report["training_file"] = train[chosen].string();
    run.write_json("fit_report.json", "fit_report", report);
    const bool converged = report.value("converged", true);
    run.finish({{"training_file", train[chosen].string()}, {"converged", converged}});

    std::cout << "fitted on " << train[chosen].filename().string() << (converged ? "" : " (NoConvergence)") << '\n';
    if (!converged) {
        std::cerr << "warning: NoConvergence: estimation stopped at the iteration cap; best iterate kept\n";
        return kExitWarnings;
    }
    return kExitOk;
}

// ---- validate -------------------------------------------------------------------

int cmd_validate(const Options& opt) {
    Run run("validate", opt);
    auto& cfg = run.config();
    if (opt.mode) cfg["mode"] = *opt.mode;
    const auto model_path = run.input("model", cfg.value("model", json()));
    const auto data = run.inputs("data");
    const auto roles = run.json_field("roles");
    const auto mode = cfg.value("mode", std::string("measured"));
    if (!std::regex_match(mode, std::regex("measured|freerun|free-run|measured-until:[0-9]+"))) {
        throw Failure("mode: expected measured, freerun or measured-until:<k>, got '" + mode + "'");
    }
    run.seal();

    const auto model = read_model(model_path);
    std::vector<Dataset> sets;
    for (const auto& p : data) sets.push_back(read_dataset(p, roles));
    run.prepare_output();

    std::vector<std::string> files(sets.size());
    std::vector<std::string> names(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        names[i] = data[i].stem().string();
        files[i] = "predictions/" + safe_name(names[i]) + ".csv";
        run.artifact(files[i], "predictions");
    }
    std::vector<json> summaries(sets.size());
    parallel_for(sets.size(), [&](std::size_t i) {
        char* summary = nullptr;
        const auto comment = run.provenance_comment() + " mode=" + mode;
        check(udm_validate(model.get(), sets[i].get(), mode.c_str(), names[i].c_str(), (run.out() / files[i]).c_str(),
                           comment.c_str(), &summary),
              data[i].string());
        summaries[i] = json::parse(take(summary));
    });

    char* report_text = nullptr;
    char* boxplot = nullptr;
    const auto all = json(summaries).dump();
    check(udm_summarize_suite(all.c_str(), &report_text, &boxplot), "suite report");
    auto report = json::parse(take(report_text));
    report["mode"] = mode;
    run.write_json("report.json", "suite_report", report);
    std::ofstream(run.artifact("boxplot.csv", "boxplot")) << "# " << run.provenance_comment() << '\n' << take(boxplot);
    run.finish({{"mode", mode}, {"model", model_path.string()}});

    std::cout << "validated " << sets.size() << " dataset(s), mode " << mode << '\n';
    for (const auto& ch : report.at("per_channel")) {
        const auto& r = ch.at("nrmse_pct");
        std::cout << "  " << ch.at("channel").get<std::string>() << ": median NRMSE "
                  << (r.at("median").is_number() ? std::to_string(r.at("median").get<double>()) + " %" : "n/a") << '\n';
    }
    return kExitOk;
}

// ---- monitor --------------------------------------------------------------------

int cmd_monitor(const Options& opt) {
    Run run("monitor", opt);
    auto& cfg = run.config();
    const auto model_path = run.input("model", cfg.value("model", json()));
    const auto stream_path = run.input("stream", cfg.value("stream", json()));
    const auto roles = run.json_field("roles");
    const auto monitor_cfg = run.json_field("monitor", false);
    std::size_t budget = 0;
    try {
        budget = cfg.value("error_budget", std::size_t{10});
    } catch (const json::exception&) {
        throw Failure("config.error_budget: expected an unsigned integer");
    }
    const bool auto_recal = cfg.value("recalibrate", true);
    run.seal();

    const auto model = read_model(model_path);
    udm_stream* s = nullptr;
    check(udm_stream_read_csv(stream_path.c_str(), roles.c_str(), budget, &s), stream_path.string());
    Stream stream(s);
    udm_monitor* m = nullptr;
    check(udm_monitor_create(model.get(), monitor_cfg.empty() ? nullptr : monitor_cfg.c_str(), &m), "config.monitor");
    Monitor monitor(m);
    run.prepare_output();

    const auto ni = udm_model_n_inputs(model.get());
    const auto no = udm_model_n_outputs(model.get());
    std::vector<double> u(ni), y(no), pred(no);
    std::size_t failed = 0;
    for (std::size_t r = 0; r < udm_stream_rows(stream.get()); ++r) {
        std::size_t index = 0;
        int present = 0, has = 0, recal = 0;
        check(udm_stream_row(stream.get(), r, &index, u.data(), ni, y.data(), no, &present), "stream row");
        check(udm_monitor_step(monitor.get(), index, u.data(), ni, present ? y.data() : nullptr, present ? no : 0,
                               pred.data(), &has, &recal),
              "sample " + std::to_string(index));
        if (recal && auto_recal) {
            char* outcome = nullptr;
            check(udm_monitor_recalibrate(monitor.get(), &outcome), "recalibration");
            if (!json::parse(take(outcome)).value("success", false)) ++failed;
        }
    }

    char* events = nullptr;
    check(udm_monitor_events(monitor.get(), 0, &events), "event log");
    {
        std::ofstream log(run.artifact("events.jsonl", "event_log"));
        std::istringstream lines(take(events));
        for (std::string line; std::getline(lines, line);) {
            auto e = json::parse(line);
            e["seed"] = run.seed();
            e["config_hash"] = run.hash();
            log << e.dump() << '\n';
        }
    }
    const auto versions = udm_monitor_active_version(monitor.get());
    json version_files = json::array();
    for (std::size_t v = 1; v <= versions; ++v) {
        udm_model* copy = nullptr;
        check(udm_monitor_model(monitor.get(), v, &copy), "model version " + std::to_string(v));
        Model owned(copy);
        check(udm_model_set_provenance(copy, run.seed(), run.hash().c_str()), "model provenance");
        char name[40];
        std::snprintf(name, sizeof(name), "models/model_v%03zu.json", v);
        check(udm_model_save(copy, run.artifact(name, "model").c_str()), name);
        version_files.push_back(name);
    }
    char* skipped = nullptr;
    check(udm_stream_skipped(stream.get(), &skipped), "stream");
    char* summary_text = nullptr;
    check(udm_monitor_summary(monitor.get(), &summary_text), "summary");
    auto summary = json::parse(take(summary_text));
    summary["skipped_rows"] = json::parse(take(skipped));
    summary["failed_recalibrations"] = failed;
    summary["model_files"] = version_files;
    run.write_json("summary.json", "monitor_summary", summary);
    run.finish({{"model", model_path.string()}, {"stream", stream_path.string()}});

    std::cout << "monitored " << udm_stream_rows(stream.get()) << " samples: " << summary.at("triggers")
              << " trigger(s), " << versions << " model version(s), final rolling RMSE " << summary.at("rolling_rmse").dump()
              << '\n';
    for (const auto& issue : summary.at("skipped_rows")) {
        std::cerr << "skipped line " << issue.at("line") << ": " << issue.at("message").get<std::string>() << '\n';
    }
    if (failed > 0) {
        std::cerr << "warning: " << failed << " recalibration(s) failed; previous model kept\n";
        return kExitWarnings;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ARMAX surrogate modelling of inverter-based resources"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(udm_version()));

    Options opt;
    std::uint64_t seed = 0;
    std::string mode;
    auto common = [&](CLI::App* sub, bool with_seed, bool with_mode) {
        sub->add_option("--config", opt.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "output directory")->required();
        sub->add_flag("--force", opt.force, "overwrite a non-empty output directory");
        if (with_seed) sub->add_option("--seed", seed, "override the configuration seed");
        if (with_mode) {
            sub->add_option("--mode", mode, "feedback mode: measured | freerun | measured-until:<k>");
        }
    };
    auto* simulate = app.add_subcommand("simulate", "generate scenario datasets");
    common(simulate, true, false);
    auto* fit = app.add_subcommand("fit", "estimate an ARMAX model");
    common(fit, true, false);
    auto* validate = app.add_subcommand("validate", "score a model on held-out datasets");
    common(validate, false, true);
    auto* monitor = app.add_subcommand("monitor", "run continual validation over a stream");
    common(monitor, false, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitError;
    }
    for (auto* sub : {simulate, fit}) {
        if (sub->parsed() && sub->count("--seed") > 0) opt.seed = seed;
    }
    if (validate->parsed() && validate->count("--mode") > 0) opt.mode = mode;

    try {
        if (simulate->parsed()) return cmd_simulate(opt);
        if (fit->parsed()) return cmd_fit(opt);
        if (validate->parsed()) return cmd_validate(opt);
        if (monitor->parsed()) return cmd_monitor(opt);
    } catch (const Failure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
