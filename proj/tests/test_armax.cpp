#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace udm;
using testing::error_code_of;
using testing::single_output_model;

TEST_CASE("build_regressor examples") {
    SUBCASE("pure AR(1)") {
        const auto rows = build_regressor(testing::outputs_only({1, 2, 3}), {1, 0, 0, 0}).front();
        CHECK(rows.first_row == 1);
        REQUIRE(rows.regressors.rows() == 2);
        REQUIRE(rows.regressors.cols() == 1);
        CHECK(rows.target(0) == 2.0);
        CHECK(rows.target(1) == 3.0);
        CHECK(rows.regressors(0, 0) == 1.0);
        CHECK(rows.regressors(1, 0) == 2.0);
    }
    SUBCASE("one lagged input with one sample of dead time") {
        const auto rows = build_regressor(testing::siso({4, 5, 6}, {1, 2, 3}), {1, 1, 0, 1}).front();
        REQUIRE(rows.regressors.rows() == 2);
        CHECK(rows.target(0) == 2.0);
        CHECK(rows.target(1) == 3.0);
        CHECK(rows.regressors.row(0) == Eigen::RowVector2d(1, 4));
        CHECK(rows.regressors.row(1) == Eigen::RowVector2d(2, 5));
    }
    SUBCASE("zero dead time uses the same-sample input") {
        const auto rows = build_regressor(testing::siso({4, 5, 6}, {1, 2, 3}), {1, 1, 0, 0}).front();
        CHECK(rows.regressors.row(0) == Eigen::RowVector2d(1, 5));
        CHECK(rows.regressors.row(1) == Eigen::RowVector2d(2, 6));
    }
    SUBCASE("too few rows for the lags") {
        CHECK(error_code_of([] { build_regressor(testing::outputs_only({1, 2}), {2, 0, 0, 0}); }) ==
              ErrorCode::InsufficientData);
    }
    SUBCASE("residual columns only when residuals are supplied") {
        const auto d = testing::siso({1, 2, 3, 4}, {5, 6, 7, 8});
        const ArmaxOrders o{1, 1, 2, 0};
        CHECK(build_regressor(d, o).front().regressors.cols() == 2);
        const Eigen::MatrixXd eps = testing::column({0.1, 0.2, 0.3, 0.4});
        const auto rows = build_regressor(d, o, &eps).front();
        REQUIRE(rows.regressors.cols() == 4);
        CHECK(rows.first_row == 2);
        CHECK(rows.regressors(0, 2) == 0.2);
        CHECK(rows.regressors(0, 3) == 0.1);
    }
}

TEST_CASE("orders validation") {
    CHECK(error_code_of([] { ArmaxOrders{0, 0, 0, 0}.validate(1); }) == ErrorCode::InvalidArgument);
    CHECK(error_code_of([] { ArmaxOrders{0, 2, 0, 0}.validate(0); }) == ErrorCode::InvalidArgument);
    CHECK_NOTHROW(ArmaxOrders{0, 1, 0, 0}.validate(1));
    CHECK(ArmaxOrders{2, 3, 1, 2}.max_lag() == 4);
    CHECK(ArmaxOrders{2, 0, 1, 5}.max_lag() == 2);
    CHECK(ArmaxOrders{2, 2, 1, 1}.parameter_count(2) == 7);
}

TEST_CASE("predict_one_step examples") {
    SUBCASE("single AR term") {
        const auto m = single_output_model({1, 0, 0, 0}, 0, {{0.5}, {}, {}});
        CHECK(predict_one_step(m, {{{2.0}}, {}, {{}}})(0) == 1.0);
    }
    SUBCASE("AR plus direct input") {
        const auto m = single_output_model({1, 1, 0, 0}, 1, {{0.5}, {{1.0}}, {}});
        CHECK(predict_one_step(m, {{{2.0}}, {{3.0}}, {{}}})(0) == 4.0);
    }
    SUBCASE("AR plus moving average") {
        const auto m = single_output_model({1, 0, 1, 0}, 0, {{0.9}, {}, {0.4}});
        CHECK(predict_one_step(m, {{{1.0}}, {}, {{0.5}}})(0) == doctest::Approx(1.1).epsilon(1e-15));
    }
    SUBCASE("short history") {
        const auto m = single_output_model({2, 0, 0, 0}, 0, {{0.5, 0.1}, {}, {}});
        CHECK(error_code_of([&] { predict_one_step(m, {{{2.0}}, {}, {{}}}); }) == ErrorCode::LagShortfall);
    }
}

TEST_CASE("predict_horizon examples") {
    const auto ar = single_output_model({1, 0, 0, 0}, 0, {{0.5}, {}, {}});
    SUBCASE("free run decays geometrically") {
        const auto p = predict_horizon(ar, testing::outputs_only({8, 0, 0, 0}), FeedbackMode::free_run());
        CHECK(p.first_row == 1);
        REQUIRE(p.predicted.rows() == 3);
        CHECK(p.predicted(0, 0) == 4.0);
        CHECK(p.predicted(1, 0) == 2.0);
        CHECK(p.predicted(2, 0) == 1.0);
    }
    SUBCASE("measured mode on matching data has zero residuals") {
        const auto p = predict_horizon(ar, testing::outputs_only({8, 4, 2, 1}), FeedbackMode::measured());
        CHECK(p.predicted(0, 0) == 4.0);
        CHECK(p.predicted(1, 0) == 2.0);
        CHECK(p.predicted(2, 0) == 1.0);
        CHECK(p.residuals.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("error grows after measurements stop") {
        LinearTruthConfig truth;
        truth.orders = {2, 2, 1, 1};
        truth.coefficients = {{{1.5, -0.7}, {{1.0, 0.5}}, {0.3}}};
        const auto data = simulate(testing::truth_scenario(truth, 1000, 3, 0.01));
        const ArmaxModel model(truth.orders, {"u1"}, {"y1"}, truth.coefficients, ScalerParams::identity(1, 1));
        const auto p = predict_horizon(model, data, FeedbackMode::measured_until(300));
        const auto pre = p.residuals.col(0).segment(0, 300 - 2);
        const auto post = p.residuals.col(0).segment(300 - 2, 700);
        const double pre_rms = std::sqrt(pre.squaredNorm() / static_cast<double>(pre.size()));
        const double post_rms = std::sqrt(post.squaredNorm() / static_cast<double>(post.size()));
        CHECK(pre_rms == doctest::Approx(0.01).epsilon(0.15));
        CHECK(post_rms > 2.0 * pre_rms);
    }
    SUBCASE("contract violations") {
        const auto two_in = single_output_model({1, 1, 0, 0}, 2, {{0.5}, {{1.0}, {1.0}}, {}});
        CHECK(error_code_of([&] { predict_horizon(two_in, testing::siso({1, 2}, {1, 2}), FeedbackMode::measured()); }) ==
              ErrorCode::ChannelMismatch);
        const auto renamed = TimeSeriesDataset(1.0, 0.0, Eigen::MatrixXd(2, 0), testing::column({1, 2}), {}, {"z"});
        CHECK(error_code_of([&] { predict_horizon(ar, renamed, FeedbackMode::measured()); }) ==
              ErrorCode::ChannelMismatch);
        CHECK(error_code_of([&] { predict_horizon(ar, testing::outputs_only({1}), FeedbackMode::measured()); }) ==
              ErrorCode::LagShortfall);
        CHECK(error_code_of([&] {
                  predict_horizon(ar, testing::outputs_only({1, 2}), FeedbackMode::measured_until(5));
              }) == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("feedback mode parsing") {
    CHECK(FeedbackMode::parse("measured").kind() == FeedbackMode::Kind::Measured);
    CHECK(FeedbackMode::parse("freerun").kind() == FeedbackMode::Kind::FreeRun);
    const auto m = FeedbackMode::parse("measured-until:300");
    CHECK(m.kind() == FeedbackMode::Kind::MeasuredUntil);
    CHECK(m.until() == 300);
    CHECK(m.to_string() == "measured-until:300");
    CHECK_THROWS_AS(FeedbackMode::parse("measured-until:"), Error);
    CHECK_THROWS_AS(FeedbackMode::parse("sometimes"), Error);
}

TEST_CASE("check_stability examples") {
    auto s = check_stability(std::vector<double>{0.5});
    CHECK(s.stable);
    CHECK(s.max_root_magnitude == doctest::Approx(0.5));
    s = check_stability(std::vector<double>{1.2});
    CHECK_FALSE(s.stable);
    CHECK(s.max_root_magnitude == doctest::Approx(1.2));
    s = check_stability(std::vector<double>{1.5, -0.56});
    CHECK(s.stable);
    CHECK(s.max_root_magnitude == doctest::Approx(0.8).epsilon(1e-12));
    const auto model = single_output_model({1, 0, 0, 0}, 0, {{1.2}, {}, {}});
    CHECK_FALSE(check_stability(model).front().stable);
}

namespace {

OutputCoefficients random_coefficients(const ArmaxOrders& o, std::size_t ni, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto c = OutputCoefficients::zeros(o, ni);
    for (auto& a : c.alpha) a = normal(rng);
    for (auto& g : c.gamma)
        for (auto& v : g) v = normal(rng);
    for (auto& b : c.beta) b = normal(rng);
    return c;
}

LagHistory random_history(const ArmaxOrders& o, std::size_t ni, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    LagHistory h;
    h.y.assign(1, std::vector<double>(o.na));
    h.e.assign(1, std::vector<double>(o.nc));
    h.u.assign(ni, std::vector<double>(o.nb + o.nk));
    for (auto& v : h.y[0]) v = normal(rng);
    for (auto& v : h.e[0]) v = normal(rng);
    for (auto& row : h.u)
        for (auto& v : row) v = normal(rng);
    return h;
}

} // namespace

TEST_CASE("property: one-step prediction is linear in the coefficients") {
    std::mt19937_64 rng(5);
    const ArmaxOrders o{3, 2, 2, 1};
    for (int trial = 0; trial < 100; ++trial) {
        const auto c1 = random_coefficients(o, 2, rng);
        const auto c2 = random_coefficients(o, 2, rng);
        const auto sum = OutputCoefficients::unpack(c1.pack() + c2.pack(), o, 2);
        const auto h = random_history(o, 2, rng);
        const double lhs = predict_one_step(single_output_model(o, 2, sum), h)(0);
        const double rhs = predict_one_step(single_output_model(o, 2, c1), h)(0) +
                           predict_one_step(single_output_model(o, 2, c2), h)(0);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("property: exact model on noise-free data leaves zero residuals after scaling") {
    LinearTruthConfig truth;
    truth.orders = {2, 2, 1, 1};
    truth.coefficients = {{{1.5, -0.7}, {{1.0, 0.5}}, {0.3}}};
    const auto data = simulate(testing::truth_scenario(truth, 500, 1, 0.0));
    ScalerParams sc = ScalerParams::identity(1, 1);
    sc.mode = ScalerMode::ZScore;
    sc.input_gain = {2.5};
    sc.output_gain = {0.4};
    auto c = truth.coefficients[0];
    for (auto& g : c.gamma[0]) g *= sc.input_gain[0] / sc.output_gain[0];
    const ArmaxModel model(truth.orders, {"u1"}, {"y1"}, {c}, sc);
    const auto p = predict_horizon(model, data, FeedbackMode::measured());
    CHECK(p.residuals.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("property: free run of a stable AR model decays to zero") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> root(0.05, 0.95);
    std::normal_distribution<double> seed(0.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double r = root(rng);
        const auto m = single_output_model({1, 0, 0, 0}, 0, {{r}, {}, {}});
        Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1000, 1);
        y(0, 0) = seed(rng);
        const auto p = predict_horizon(m, TimeSeriesDataset(1.0, 0.0, Eigen::MatrixXd(1000, 0), y, {}, {"y"}),
                                       FeedbackMode::free_run());
        for (Eigen::Index t = 1; t < p.predicted.rows(); ++t) {
            CHECK(std::abs(p.predicted(t, 0)) <= std::abs(p.predicted(t - 1, 0)));
        }
        CHECK(std::abs(p.predicted(p.predicted.rows() - 1, 0)) < 1e-8);
    }
    const auto two = single_output_model({2, 0, 0, 0}, 0, {{1.5, -0.56}, {}, {}});
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(300, 1);
    y(0, 0) = 3.0;
    y(1, 0) = -2.0;
    const auto p = predict_horizon(two, TimeSeriesDataset(1.0, 0.0, Eigen::MatrixXd(300, 0), y, {}, {"y"}),
                                   FeedbackMode::free_run());
    CHECK(std::abs(p.predicted(p.predicted.rows() - 1, 0)) < 1e-12);
}

TEST_CASE("property: measured horizon equals per-step one-step prediction") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> normal(0.0, 1.0);
    const ArmaxOrders o{2, 3, 2, 1};
    auto c = random_coefficients(o, 2, rng);
    c.alpha = {0.6, -0.2};
    c.beta = {0.3, 0.1};
    ScalerParams sc = ScalerParams::identity(2, 1);
    sc.input_offset = {0.3, -1.0};
    sc.input_gain = {2.0, 0.5};
    sc.output_offset = {4.0};
    sc.output_gain = {3.0};
    const ArmaxModel model(o, {"a", "b"}, {"y"}, {c}, sc);
    Eigen::MatrixXd u(80, 2), y(80, 1);
    for (Eigen::Index r = 0; r < 80; ++r) {
        u(r, 0) = normal(rng);
        u(r, 1) = normal(rng);
        y(r, 0) = normal(rng);
    }
    const TimeSeriesDataset data(1.0, 0.0, u, y, {"a", "b"}, {"y"});
    const auto scaled = apply_scaler(sc, data);
    const auto p = predict_horizon(model, data, FeedbackMode::measured());
    const auto start = static_cast<Eigen::Index>(o.max_lag());
    std::vector<double> eps(80, 0.0);
    for (Eigen::Index t = start; t < 80; ++t) {
        LagHistory h;
        h.y = {{scaled.outputs()(t - 1, 0), scaled.outputs()(t - 2, 0)}};
        h.e = {{eps[static_cast<std::size_t>(t - 1)], eps[static_cast<std::size_t>(t - 2)]}};
        h.u.assign(2, {});
        for (std::size_t j = 0; j < 2; ++j)
            for (Eigen::Index k = 0; k < 4; ++k) h.u[j].push_back(scaled.inputs()(t - k, static_cast<Eigen::Index>(j)));
        const double yhat = predict_one_step(model, h)(0);
        eps[static_cast<std::size_t>(t)] = scaled.outputs()(t, 0) - yhat;
        CHECK(p.predicted(t - start, 0) == sc.unscale_output(0, yhat));
        CHECK(p.residuals(t - start, 0) == eps[static_cast<std::size_t>(t)]);
    }
}

TEST_CASE("model serialization preserves coefficients bit-exactly") {
    std::mt19937_64 rng(21);
    const ArmaxOrders o{3, 2, 1, 1};
    ScalerParams sc = ScalerParams::identity(2, 2);
    sc.mode = ScalerMode::ZScore;
    sc.input_offset = {0.1 / 3.0, std::nextafter(1.0, 2.0)};
    sc.output_gain = {1e-300, 7.0 / 9.0};
    FitMetadata meta;
    meta.method = "els";
    meta.seed = 99;
    meta.config_hash = "abc";
    meta.train_rows = 1234;
    const ArmaxModel model(o, {"P", "Q"}, {"V", "f"}, {random_coefficients(o, 2, rng), random_coefficients(o, 2, rng)},
                           sc, meta);
    const auto path = testing::temp_path("model.json");
    save_model(model, path);
    const auto back = load_model(path);
    CHECK(back.orders() == model.orders());
    CHECK(back.input_names() == model.input_names());
    CHECK(back.output_names() == model.output_names());
    for (std::size_t m = 0; m < 2; ++m) CHECK(back.coefficients(m).pack() == model.coefficients(m).pack());
    CHECK(back.scaler().input_offset == sc.input_offset);
    CHECK(back.scaler().output_gain == sc.output_gain);
    CHECK(back.scaler().mode == sc.mode);
    CHECK(back.metadata().seed == 99);
    CHECK(back.metadata().config_hash == "abc");
    CHECK(back.metadata().train_rows == 1234);
    CHECK(to_json(back).dump() == to_json(model).dump());
}

TEST_CASE("model construction validates dimensions") {
    CHECK(error_code_of([] {
              ArmaxModel({2, 0, 0, 0}, {}, {"y"}, {{{0.5}, {}, {}}}, ScalerParams::identity(0, 1));
          }) == ErrorCode::DimensionMismatch);
    CHECK(error_code_of([] {
              ArmaxModel({1, 0, 0, 0}, {}, {"y"}, {{{0.5}, {}, {}}}, ScalerParams::identity(1, 1));
          }) == ErrorCode::ChannelCountMismatch);
    CHECK(error_code_of([] {
              OutputCoefficients::unpack(Eigen::VectorXd::Zero(3), {1, 1, 0, 0}, 1);
          }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("physical coefficients undo the scaling") {
    ScalerParams sc = ScalerParams::identity(1, 1);
    sc.input_offset = {1.0};
    sc.input_gain = {2.0};
    sc.output_offset = {3.0};
    sc.output_gain = {4.0};
    const ArmaxModel model({1, 1, 0, 1}, {"u"}, {"y"}, {{{0.5}, {{0.8}}, {}}}, sc);
    const auto phys = physical_coefficients(model, 0);
    CHECK(phys.coefficients.alpha[0] == 0.5);
    CHECK(phys.coefficients.gamma[0][0] == doctest::Approx(0.8 * 4.0 / 2.0));
    // y = 4*(0.5*(y1-3)/4 + 0.8*(u1-1)/2) + 3 = 0.5 y1 + 1.6 u1 + (3 - 1.5 - 1.6)
    CHECK(phys.intercept == doctest::Approx(-0.1));
}
