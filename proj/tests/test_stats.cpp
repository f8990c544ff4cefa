#include <doctest.h>

#include <cmath>

#include "odgen/core/rng.hpp"
#include "odgen/stats/layout_stats.hpp"

using namespace odgen;

namespace {

// Dataset with given per-image count vectors; geometry defaults to one fixed
// box per object so box stats stay valid.
DetectionDataset counts_dataset(const std::vector<std::vector<int>>& counts, int k, int size = 64) {
    DetectionDataset ds;
    ds.scene_name = "scene";
    for (int c = 0; c < k; ++c) ds.categories.push_back("c" + std::to_string(c));
    for (const auto& image_counts : counts) {
        LabeledImage item;
        item.pixels = ImageU8(size, size);
        for (int c = 0; c < k; ++c) {
            for (int i = 0; i < image_counts[c]; ++i) {
                item.annotations.push_back({c, {8, 8, 16, 16}});
            }
        }
        ds.items.push_back(std::move(item));
    }
    return ds;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Distribution of max(0, round(X)) for X ~ N(mu, sd^2): returns (mean, var).
std::pair<double, double> round_clamp_moments(double mu, double sd) {
    double m1 = 0.0, m2 = 0.0;
    for (int j = 1; j < 200; ++j) {
        const double p =
            normal_cdf((j + 0.5 - mu) / sd) - normal_cdf((j - 0.5 - mu) / sd);
        m1 += j * p;
        m2 += static_cast<double>(j) * j * p;
    }
    return {m1, m2 - m1 * m1};
}

}  // namespace

TEST_CASE("count stats: textbook covariance") {
    DetectionDataset ds = counts_dataset({{2, 0}, {0, 2}}, 2);
    ClassCountStats stats = estimate_count_stats(ds);
    CHECK(stats.mu[0] == doctest::Approx(1.0));
    CHECK(stats.mu[1] == doctest::Approx(1.0));
    CHECK(stats.sigma(0, 0) == doctest::Approx(2.0 + kCovarianceEpsilon));
    CHECK(stats.sigma(0, 1) == doctest::Approx(-2.0));
    CHECK(stats.sigma(1, 0) == doctest::Approx(-2.0));
    CHECK(stats.sigma(1, 1) == doctest::Approx(2.0 + kCovarianceEpsilon));
}

TEST_CASE("count stats: identical images give epsilon covariance") {
    DetectionDataset ds = counts_dataset({{3, 1}, {3, 1}, {3, 1}}, 2);
    ClassCountStats stats = estimate_count_stats(ds);
    CHECK(stats.mu[0] == doctest::Approx(3.0));
    CHECK(stats.mu[1] == doctest::Approx(1.0));
    CHECK(stats.sigma(0, 0) == doctest::Approx(kCovarianceEpsilon));
    CHECK(stats.sigma(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("count stats: single image is insufficient") {
    DetectionDataset ds = counts_dataset({{1, 1}}, 2);
    CHECK_THROWS_AS(estimate_count_stats(ds), InsufficientDataError);
}

TEST_CASE("box stats: single box has zero variance") {
    DetectionDataset ds;
    ds.scene_name = "scene";
    ds.categories = {"a"};
    LabeledImage item;
    item.pixels = ImageU8(64, 64);
    item.annotations.push_back({0, {16, 16, 32, 32}});  // x=y=0.25, area=0.25, ratio=1
    ds.items.push_back(std::move(item));
    BoxAttrStats stats = estimate_box_stats(ds);
    REQUIRE(stats.per_category[0].fitted);
    CHECK(stats.per_category[0].mu_x == doctest::Approx(0.25));
    CHECK(stats.per_category[0].mu_y == doctest::Approx(0.25));
    CHECK(stats.per_category[0].mu_area == doctest::Approx(0.25));
    CHECK(stats.per_category[0].mu_ratio == doctest::Approx(1.0));
    CHECK(stats.per_category[0].var_x == doctest::Approx(0.0));
    CHECK(stats.per_category[0].var_area == doctest::Approx(0.0));
}

TEST_CASE("box stats: unbiased variance for two samples") {
    DetectionDataset ds;
    ds.scene_name = "scene";
    ds.categories = {"a"};
    LabeledImage item;
    item.pixels = ImageU8(100, 100);
    item.annotations.push_back({0, {20, 30, 10, 10}});  // x = 0.2
    item.annotations.push_back({0, {40, 30, 10, 10}});  // x = 0.4
    ds.items.push_back(std::move(item));
    BoxAttrStats stats = estimate_box_stats(ds);
    CHECK(stats.per_category[0].mu_x == doctest::Approx(0.3));
    CHECK(stats.per_category[0].var_x == doctest::Approx(0.02));
}

TEST_CASE("box stats: absent category is flagged") {
    DetectionDataset ds = counts_dataset({{1, 0}, {2, 0}}, 2);
    BoxAttrStats stats = estimate_box_stats(ds);
    REQUIRE(stats.missing_categories.size() == 1);
    CHECK(stats.missing_categories[0] == 1);
    CHECK_FALSE(stats.per_category[1].fitted);
}

TEST_CASE("sample counts: degenerate gaussian reproduces the mean") {
    ClassCountStats stats;
    stats.mu = Eigen::Vector2d(2.0, 1.0);
    stats.sigma = kCovarianceEpsilon * Eigen::Matrix2d::Identity();
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        auto counts = sample_object_counts(stats, 16, rng);
        CHECK(counts[0] == 2);
        CHECK(counts[1] == 1);
    }
}

TEST_CASE("sample counts: clamped at zero and capped at max") {
    ClassCountStats stats;
    stats.mu = Eigen::Vector2d(0.0, 0.0);
    stats.sigma = 9.0 * Eigen::Matrix2d::Identity();
    Rng rng(18);
    for (int i = 0; i < 2000; ++i) {
        auto counts = sample_object_counts(stats, 4, rng);
        int total = 0;
        for (int c : counts) {
            CHECK(c >= 0);
            total += c;
        }
        CHECK(total <= 4);
    }
}

TEST_CASE("sample counts: monte carlo mean matches round-clamp oracle") {
    ClassCountStats stats;
    stats.mu = Eigen::Vector2d(1.0, 1.0);
    stats.sigma = Eigen::Matrix2d::Identity();
    const auto [oracle_mean, oracle_var] = round_clamp_moments(1.0, 1.0);
    const int m = 10000;
    Rng rng(19);
    double sum0 = 0.0, sum1 = 0.0;
    for (int i = 0; i < m; ++i) {
        auto counts = sample_object_counts(stats, 1000, rng);  // cap never binds
        sum0 += counts[0];
        sum1 += counts[1];
    }
    const double se = std::sqrt(oracle_var / m);
    CHECK(std::abs(sum0 / m - oracle_mean) < 3 * se);
    CHECK(std::abs(sum1 / m - oracle_mean) < 3 * se);
}

TEST_CASE("sample bbox: zero-variance stats are formula-forced") {
    BoxAttrStats stats;
    stats.per_category.resize(1);
    auto& s = stats.per_category[0];
    s.fitted = true;
    s.mu_x = 0.25;
    s.mu_y = 0.25;
    s.mu_area = 0.25;
    s.mu_ratio = 4.0;
    Rng rng(20);
    BBox b = sample_bbox(stats, 0, 64, 64, rng);
    CHECK(b.x == doctest::Approx(16.0));
    CHECK(b.y == doctest::Approx(16.0));
    CHECK(b.w == doctest::Approx(48.0));  // w = 64 clipped at the right edge
    CHECK(b.h == doctest::Approx(16.0));

    s.mu_area = 0.01;
    s.mu_ratio = 1.0;
    BBox c = sample_bbox(stats, 0, 64, 64, rng);
    CHECK(c.w == doctest::Approx(6.4));
    CHECK(c.h == doctest::Approx(6.4));
}

TEST_CASE("sample bbox: monte carlo area tracks mu_area when clipping is rare") {
    BoxAttrStats stats;
    stats.per_category.resize(1);
    auto& s = stats.per_category[0];
    s.fitted = true;
    s.mu_x = 0.45;
    s.var_x = 0.03 * 0.03;
    s.mu_y = 0.45;
    s.var_y = 0.03 * 0.03;
    s.mu_area = 0.01;
    s.var_area = 0.002 * 0.002;
    s.mu_ratio = 1.0;
    s.var_ratio = 0.05 * 0.05;
    Rng rng(21);
    double sum = 0.0;
    const int m = 10000;
    for (int i = 0; i < m; ++i) {
        BBox b = sample_bbox(stats, 0, 64, 64, rng);
        sum += b.area() / (64.0 * 64.0);
    }
    CHECK(std::abs(sum / m - s.mu_area) / s.mu_area < 0.05);
}

TEST_CASE("pseudo labels: invariants hold under fuzzing") {
    Rng meta(22);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = meta.uniform_int(1, 4);
        ClassCountStats cs;
        cs.mu = Eigen::VectorXd::Zero(k);
        cs.sigma = Eigen::MatrixXd::Identity(k, k);
        for (int c = 0; c < k; ++c) {
            cs.mu[c] = meta.uniform(0.0, 4.0);
            cs.sigma(c, c) = meta.uniform(0.2, 4.0);
        }
        BoxAttrStats bs;
        bs.per_category.resize(k);
        for (int c = 0; c < k; ++c) {
            auto& s = bs.per_category[c];
            s.fitted = true;
            s.mu_x = meta.uniform(0.0, 0.9);
            s.var_x = meta.uniform(0.0, 0.1);
            s.mu_y = meta.uniform(0.0, 0.9);
            s.var_y = meta.uniform(0.0, 0.1);
            s.mu_area = meta.uniform(0.001, 0.3);
            s.var_area = meta.uniform(0.0, 0.01);
            s.mu_ratio = meta.uniform(0.3, 3.0);
            s.var_ratio = meta.uniform(0.0, 0.2);
        }
        const int n_cap = meta.uniform_int(1, 8);
        Rng rng = meta.substream(trial);
        for (int i = 0; i < 2000; ++i) {
            PseudoLabel label = sample_pseudo_label(cs, bs, 64, 64, n_cap, rng);
            REQUIRE(static_cast<int>(label.annotations.size()) <= n_cap);
            for (size_t a = 0; a < label.annotations.size(); ++a) {
                const BBox& b = label.annotations[a].bbox;
                REQUIRE(b.w > 0);
                REQUIRE(b.h > 0);
                REQUIRE(b.x >= 0);
                REQUIRE(b.y >= 0);
                REQUIRE(b.x2() <= 64.0 + 1e-9);
                REQUIRE(b.y2() <= 64.0 + 1e-9);
                if (a > 0) {
                    REQUIRE(label.annotations[a - 1].bbox.area() >= b.area() - 1e-12);
                }
            }
        }
    }
}

TEST_CASE("pseudo labels: fixed seed is bit-reproducible") {
    ClassCountStats cs;
    cs.mu = Eigen::Vector2d(2.0, 1.0);
    cs.sigma = Eigen::Matrix2d::Identity();
    BoxAttrStats bs;
    bs.per_category.resize(2);
    for (auto& s : bs.per_category) {
        s.fitted = true;
        s.mu_x = 0.3;
        s.var_x = 0.01;
        s.mu_y = 0.3;
        s.var_y = 0.01;
        s.mu_area = 0.02;
        s.var_area = 1e-5;
        s.mu_ratio = 1.0;
        s.var_ratio = 0.01;
    }
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) {
        PseudoLabel la = sample_pseudo_label(cs, bs, 64, 64, 8, a);
        PseudoLabel lb = sample_pseudo_label(cs, bs, 64, 64, 8, b);
        REQUIRE(la.annotations.size() == lb.annotations.size());
        for (size_t j = 0; j < la.annotations.size(); ++j) {
            CHECK(la.annotations[j].category_id == lb.annotations[j].category_id);
            CHECK(la.annotations[j].bbox.x == lb.annotations[j].bbox.x);
            CHECK(la.annotations[j].bbox.w == lb.annotations[j].bbox.w);
        }
    }
}

TEST_CASE("stats serialization round trip") {
    ClassCountStats cs;
    cs.mu = Eigen::Vector2d(2.5, 1.5);
    cs.sigma.resize(2, 2);
    cs.sigma << 2.0, -0.5, -0.5, 1.0;
    BoxAttrStats bs;
    bs.per_category.resize(2);
    bs.per_category[0] = {true, 10, 0.1, 0.01, 0.2, 0.02, 0.05, 0.001, 1.5, 0.1};
    bs.per_category[1].fitted = false;
    bs.missing_categories = {1};
    const std::string path = "/tmp/odgen_test_stats.json";
    save_stats(path, cs, bs);
    ClassCountStats cs2;
    BoxAttrStats bs2;
    load_stats(path, cs2, bs2);
    CHECK(cs2.mu[0] == doctest::Approx(2.5));
    CHECK(cs2.sigma(0, 1) == doctest::Approx(-0.5));
    CHECK(bs2.per_category[0].mu_ratio == doctest::Approx(1.5));
    CHECK(bs2.per_category[0].var_area == doctest::Approx(0.001));
    CHECK_FALSE(bs2.per_category[1].fitted);
    REQUIRE(bs2.missing_categories == std::vector<int>{1});
}
