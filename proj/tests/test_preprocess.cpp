#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pivotreg/error.hpp"
#include "pivotreg/preprocess.hpp"
#include "support.hpp"

using namespace pivotreg;
using test_support::day;
using test_support::day_offset;

namespace {

// ln(1 - h) = -sum h^k / k, valid for |h| < 1.
double ln_one_minus(double h) {
    double sum = 0.0, term = 1.0;
    for (int k = 1; k < 200; ++k) {
        term *= h;
        sum -= term / k;
    }
    return sum;
}

Dataset make_dataset(const std::vector<std::vector<double>>& features, const std::vector<double>& target) {
    Dataset ds;
    ds.target_name = "price";
    for (std::size_t i = 0; i < target.size(); ++i) ds.dates.push_back(day_offset(day(2017, 1, 1), int(i)));
    ds.columns["price"] = target;
    for (std::size_t j = 0; j < features.size(); ++j) ds.columns["f" + std::to_string(j)] = features[j];
    return ds;
}

}  // namespace

TEST_CASE("log1p basics") {
    const Date d = day(2017, 1, 1);
    TimeSeries s("x", {{d, 0.0}, {day_offset(d, 1), std::numbers::e - 1.0}});
    auto t = log1p_transform(s);
    CHECK(t.points()[0].value == 0.0);
    CHECK(t.points()[1].value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(t.name() == "x");
}

TEST_CASE("log1p of -0.5 against a series evaluation") {
    TimeSeries s("x", {{day(2017, 1, 1), -0.5}});
    auto t = log1p_transform(s, true);
    const double oracle = ln_one_minus(0.5);
    CHECK(std::abs(t.points()[0].value - oracle) < 1e-14);
    CHECK(std::abs(oracle - (-0.6931)) < 1e-4);
    CHECK_THROWS_AS(log1p_transform(s), DomainError);
    TimeSeries bad("x", {{day(2017, 1, 1), -1.0}});
    CHECK_THROWS_AS(log1p_transform(bad, true), DomainError);
}

TEST_CASE("log1p is strictly monotone") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1e6);
    for (int i = 0; i < 2000; ++i) {
        double a = u(rng), b = u(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        TimeSeries s("x", {{day(2017, 1, 1), a}, {day(2017, 1, 2), b}});
        auto t = log1p_transform(s);
        CHECK(t.points()[0].value < t.points()[1].value);
    }
}

TEST_CASE("standardize by hand") {
    std::vector<double> v{1.0, 3.0};
    auto s = standardize(v, "c");
    CHECK(s.params.mean == 2.0);
    CHECK(s.params.std == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(s.values[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(s.values[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(s.params.column == "c");
}

TEST_CASE("standardize is idempotent on standardized input") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01;
    std::vector<double> v(37);
    for (auto& x : v) x = n01(rng) * 4.0 + 3.0;
    auto once = standardize(v);
    auto twice = standardize(once.values);
    CHECK(std::abs(twice.params.mean) < 1e-12);
    CHECK(std::abs(twice.params.std - 1.0) < 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(twice.values[i] - once.values[i]) < 1e-12);
}

TEST_CASE("standardize rejects degenerate input") {
    std::vector<double> v{5.0, 5.0, 5.0};
    CHECK_THROWS_AS(standardize(v), DegenerateColumnError);
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(standardize(one), SizeError);
}

TEST_CASE("standardize is affine invariant") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(25), w(25);
        const double s = scale(rng), c = shift(rng);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = n01(rng);
            w[i] = s * v[i] + c;
        }
        auto a = standardize(v), b = standardize(w);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) < 1e-12);
        CHECK(b.params.mean == doctest::Approx(s * a.params.mean + c).epsilon(1e-12).scale(1.0));
        CHECK(b.params.std == doctest::Approx(s * a.params.std).epsilon(1e-12));
    }
}

TEST_CASE("design reproduces standardize of log1p") {
    std::vector<double> f0{0.0, std::numbers::e - 1.0, 0.0, std::numbers::e - 1.0, std::numbers::e - 1.0};
    std::vector<double> f1{3.0, 1.0, 4.0, 1.0, 5.0};
    std::vector<double> y{0.0, 0.0, 0.0, 0.0, 0.0};
    auto ds = make_dataset({f0, f1}, y);
    auto design = build_design(ds, {"f0", "f1"});

    REQUIRE(design.rows() == 5);
    REQUIRE(design.cols() == 2);
    CHECK(design.feature_names == std::vector<std::string>{"f0", "f1"});
    CHECK(design.y.isZero(0.0));

    // f0 becomes the {0,1} pattern: mean 0.6, n-1 std sqrt(0.3).
    const double sd = std::sqrt(0.3);
    for (int i = 0; i < 5; ++i) {
        const double raw = (f0[i] == 0.0) ? 0.0 : 1.0;
        CHECK(design.x(i, 0) == doctest::Approx((raw - 0.6) / sd).epsilon(1e-14));
    }
    std::vector<double> logged;
    for (double v : f1) logged.push_back(std::log1p(v));
    auto z = standardize(logged);
    for (int i = 0; i < 5; ++i) CHECK(design.x(i, 1) == z.values[i]);
}

TEST_CASE("design columns have zero mean and unit sd") {
    std::mt19937_64 rng(4);
    std::lognormal_distribution<double> ln(3.0, 1.0);
    std::vector<std::vector<double>> f(4, std::vector<double>(120));
    std::vector<double> y(120);
    for (auto& col : f)
        for (auto& v : col) v = ln(rng);
    for (auto& v : y) v = ln(rng);
    auto design = build_design(make_dataset(f, y), {"f3", "f1", "f0", "f2"});
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        const double mean = design.x.col(j).mean();
        const double var = (design.x.col(j).array() - mean).square().sum() / double(design.rows() - 1);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
    CHECK(design.feature_names.front() == "f3");
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(design.y[Eigen::Index(i)] == std::log1p(y[i]));

    // Inverse scale then expm1 gets the raw values back.
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        const auto& raw = f[std::stoi(design.feature_names[j].substr(1))];
        for (Eigen::Index i = 0; i < design.rows(); ++i) {
            const double back = std::expm1(design.scales[j].invert(design.x(i, j)));
            CHECK(std::abs(back - raw[i]) <= 1e-10 * std::abs(raw[i]));
        }
    }
}

TEST_CASE("apply_design reuses scales") {
    std::vector<double> f{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    std::vector<double> y{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    auto ds = make_dataset({f}, y);
    auto train = build_design(ds.slice(0, 4), {"f0"});
    auto test = apply_design(ds.slice(4, 6), {"f0"}, train.scales);
    CHECK(test.x(0, 0) == train.scales[0].apply(std::log1p(5.0)));
    CHECK(test.scales[0].mean == train.scales[0].mean);
    CHECK(train.slice_rows(1, 3).rows() == 2);
    CHECK(train.slice_rows(1, 3).x(0, 0) == train.x(1, 0));
}

TEST_CASE("design errors") {
    auto ds = make_dataset({{1.0, 2.0, 3.0}}, {1.0, 2.0, 3.0});
    CHECK_THROWS_AS(build_design(ds, {"nope"}), NotFoundError);
    CHECK_THROWS_AS(build_design(ds, {"f0", "f0"}), SchemaError);
    auto flat = make_dataset({{2.0, 2.0, 2.0}}, {1.0, 2.0, 3.0});
    CHECK_THROWS_AS(build_design(flat, {"f0"}), DegenerateColumnError);
    auto neg = make_dataset({{1.0, -2.0, 3.0}}, {1.0, 2.0, 3.0});
    CHECK_THROWS_AS(build_design(neg, {"f0"}), DomainError);
}
