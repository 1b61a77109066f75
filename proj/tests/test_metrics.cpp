#include "metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace udm;
using testing::error_code_of;

TEST_CASE("rmse examples") {
    const std::vector<double> a{1.5, -2.0, 3.0};
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
    CHECK(rmse(std::vector<double>{0, 2}, std::vector<double>{0, 0}) == std::sqrt(2.0));
    CHECK(error_code_of([] { rmse(std::vector<double>{1, 2}, std::vector<double>{1}); }) == ErrorCode::LengthMismatch);
    CHECK(error_code_of([] { rmse(std::vector<double>{}, std::vector<double>{}); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("normalized errors and fit percentage") {
    const std::vector<double> y{0, 1, 2, 3, 4};
    const std::vector<double> yhat{0, 1, 2, 3, 3};
    CHECK(nrmse_pct(y, yhat) == doctest::Approx(100.0 * std::sqrt(0.2) / 4.0));
    CHECK(fit_pct(y, y) == 100.0);
    CHECK(fit_pct(y, yhat) < 100.0);
    CHECK(std::isnan(nrmse_pct(std::vector<double>{2, 2}, std::vector<double>{2, 2})));
}

TEST_CASE("summarize_suite examples") {
    auto summary = [](const std::string& name, double value) {
        ErrorSummary s;
        s.scenario = name;
        s.channels = {"V"};
        s.rmse = {value};
        s.nrmse_pct = {value};
        s.fit_pct = {100.0 - value};
        return s;
    };
    SUBCASE("single scenario is a degenerate distribution") {
        const auto r = summarize_suite({summary("a", 3.0)});
        const auto& d = r.rmse[0];
        CHECK(d.min == 3.0);
        CHECK(d.q1 == 3.0);
        CHECK(d.median == 3.0);
        CHECK(d.q3 == 3.0);
        CHECK(d.max == 3.0);
    }
    SUBCASE("linear interpolation quartiles") {
        const auto r = summarize_suite({summary("a", 4), summary("b", 1), summary("c", 3), summary("d", 2)});
        const auto& d = r.rmse[0];
        CHECK(d.median == 2.5);
        CHECK(d.q1 == 1.75);
        CHECK(d.q3 == 3.25);
        CHECK(d.mean == 2.5);
        const auto doc = r.to_json();
        CHECK(doc["scenarios"].size() == 4);
        CHECK(doc["per_channel"][0]["channel"] == "V");
    }
    SUBCASE("empty and inconsistent suites") {
        CHECK(error_code_of([] { summarize_suite({}); }) == ErrorCode::EmptySuite);
        auto other = summary("b", 1);
        other.channels = {"f"};
        CHECK(error_code_of([&] { summarize_suite({summary("a", 1), other}); }) == ErrorCode::ChannelMismatch);
    }
    SUBCASE("per-channel averages for current channels") {
        const std::vector<std::string> ch{"i_HVAC", "i_PV", "i_EV"};
        Eigen::MatrixXd y(4, 3), yhat(4, 3);
        y << 0, 0, 0, 1, 2, 3, 2, 4, 6, 3, 6, 9;
        yhat = y;
        yhat(3, 0) += 0.3;
        const auto r = summarize_suite({summarize_errors("case2", ch, y, yhat), summarize_errors("case3", ch, y, yhat)});
        CHECK(r.channels == ch);
        CHECK(r.nrmse_pct[0].mean == doctest::Approx(100.0 * 0.15 / 3.0));
        CHECK(r.nrmse_pct[1].mean == 0.0);
    }
}

TEST_CASE("box-plot CSV layout") {
    Eigen::MatrixXd y(3, 2), yhat(3, 2);
    y << 0, 1, 1, 2, 2, 4;
    yhat << 0, 1, 1, 2, 2, 3;
    const auto r = summarize_suite({summarize_errors("s1", {"V", "f"}, y, yhat)});
    const auto csv = r.boxplot_csv();
    CHECK(csv.rfind("channel,scenario,mean_rmse,nrmse_pct\n", 0) == 0);
    CHECK(csv.find("\nV,s1,") != std::string::npos);
    CHECK(csv.find("\nmean,s1,") != std::string::npos);
}

TEST_CASE("error summary JSON round trip") {
    Eigen::MatrixXd y(3, 1), yhat(3, 1);
    y << 1, 1, 1;
    yhat << 1, 2, 1;
    const auto s = summarize_errors("flat", {"V"}, y, yhat);
    const auto back = error_summary_from_json(to_json(s));
    CHECK(back.scenario == "flat");
    CHECK(back.rmse == s.rmse);
    CHECK(std::isnan(back.nrmse_pct[0]));
}

TEST_CASE("property: metric invariants") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> positive(0.01, 100.0);
    std::vector<ErrorSummary> suite;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 40);
        std::vector<double> y(n), yhat(n), ys(n), yhats(n), yc(n), yhatc(n);
        // Dyadic values keep the shifted sums exact.
        const double c = std::ldexp(std::round(normal(rng) * 64.0), 0);
        const double k = positive(rng);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = std::ldexp(std::round(normal(rng) * 256.0), -8);
            yhat[i] = std::ldexp(std::round(normal(rng) * 256.0), -8);
            yc[i] = y[i] + c;
            yhatc[i] = yhat[i] + c;
            ys[i] = k * y[i];
            yhats[i] = k * yhat[i];
        }
        CHECK(rmse(yc, yhatc) == rmse(y, yhat));
        CHECK(rmse(y, yhat) >= 0.0);
        const double fit = fit_pct(y, yhat);
        if (!std::isnan(fit)) CHECK(fit <= 100.0);
        const double a = nrmse_pct(y, yhat), b = nrmse_pct(ys, yhats);
        if (std::isfinite(a)) CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
        Eigen::MatrixXd m(static_cast<Eigen::Index>(n), 1), mh(static_cast<Eigen::Index>(n), 1);
        for (std::size_t i = 0; i < n; ++i) {
            m(static_cast<Eigen::Index>(i), 0) = y[i];
            mh(static_cast<Eigen::Index>(i), 0) = yhat[i];
        }
        suite.push_back(summarize_errors("s" + std::to_string(trial), {"y"}, m, mh));
        const auto r = summarize_suite(suite);
        for (const auto& d : {r.rmse[0], r.nrmse_pct[0], r.mean_rmse, r.mean_nrmse_pct}) {
            CHECK(d.min <= d.q1);
            CHECK(d.q1 <= d.median);
            CHECK(d.median <= d.q3);
            CHECK(d.q3 <= d.max);
        }
    }
}
