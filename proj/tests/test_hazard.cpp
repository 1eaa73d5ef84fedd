#include <gtest/gtest.h>

#include <cmath>

#include "epn_recovery/hazard_field.hpp"

using namespace epn;

namespace {

AttenuationParams coeffs(std::array<double, 5> c) {
    AttenuationParams p;
    p.c = c;
    return p;
}

}  // namespace

TEST(MedianLnIm, ConstantTermOnly) {
    EventSpec ev;
    ev.magnitude = 7.3;
    const Site s{{4.0, -2.0}, 300.0};
    EXPECT_DOUBLE_EQ(median_ln_im(ev, s, coeffs({0.1, 0, 0, 1, 0})), 0.1);
}

TEST(MedianLnIm, ZeroDistanceUnitOffset) {
    EventSpec ev;
    const Site s{{0.0, 0.0}, 760.0};
    EXPECT_DOUBLE_EQ(median_ln_im(ev, s, coeffs({0, 0, -1, 1, 0})), 0.0);
}

TEST(MedianLnIm, MatchesHighPrecisionEvaluation) {
    // 0.5*(7-6) - ln(12+10) + 0.2 ln(270/760), evaluated with 30-digit arithmetic.
    EventSpec ev;
    ev.magnitude = 7.0;
    const Site s{{12.0, 0.0}, 270.0};
    EXPECT_NEAR(median_ln_im(ev, s, coeffs({0, 0.5, -1, 10, 0.2})), -2.79802174821471625441, 1e-14);
}

TEST(MedianLnIm, DecreasesWithDistanceWhenC2Negative) {
    EventSpec ev;
    const auto p = coeffs({1.0, 0.5, -1.2, 5.0, -0.3});
    double prev = std::numeric_limits<double>::infinity();
    for (double r : {0.0, 0.5, 1.0, 3.0, 10.0, 50.0}) {
        const double v = median_ln_im(ev, Site{{r, 0.0}, 400.0}, p);
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Validation, RejectsBadInputs) {
    EventSpec ev;
    ev.magnitude = 3.9;
    EXPECT_THROW(ev.validate(), ConfigError);
    ev.magnitude = 9.1;
    EXPECT_THROW(ev.validate(), ConfigError);
    ev.magnitude = 6.0;
    ev.epicenter.x_km = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(ev.validate(), ConfigError);

    auto p = coeffs({0, 0, -1, 0, 0});
    EXPECT_THROW(p.validate(), ConfigError);
    p.c[3] = 1;
    p.sigma_intra = -0.1;
    EXPECT_THROW(p.validate(), ConfigError);

    std::vector<Site> sites{{{0, 0}, 0.0}};
    EXPECT_THROW(FieldSampler(EventSpec{}, sites, coeffs({0, 0, -1, 1, 0})), ConfigError);
    EXPECT_THROW(FieldSampler(EventSpec{}, std::vector<Site>{}, coeffs({0, 0, -1, 1, 0})), ConfigError);
}

TEST(Field, NoResidualsGivesMedian) {
    EventSpec ev;
    ev.magnitude = 6.5;
    auto p = coeffs({0.3, 0.9, -1.1, 8.0, -0.4});
    std::vector<Site> sites{{{0, 0}, 760}, {{3, 4}, 300}, {{10, 1}, 500}};
    const auto f = sample_im_field(ev, sites, p, 77);
    for (std::size_t i = 0; i < sites.size(); ++i) EXPECT_DOUBLE_EQ(f.pga_g[i], std::exp(median_ln_im(ev, sites[i], p)));
}

TEST(Field, InterEventTermIsShared) {
    EventSpec ev;
    auto p = coeffs({0.3, 0.9, -1.1, 8.0, -0.4});
    p.tau_inter = 1.0;
    std::vector<Site> sites{{{0, 0}, 760}, {{3, 4}, 300}, {{10, 1}, 500}, {{-2, 7}, 250}};
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto f = sample_im_field(ev, sites, p, seed);
        const double r0 = std::log(f.pga_g[0]) - median_ln_im(ev, sites[0], p);
        for (std::size_t i = 1; i < sites.size(); ++i)
            EXPECT_NEAR(std::log(f.pga_g[i]) - median_ln_im(ev, sites[i], p), r0, 1e-12);
    }
}

TEST(Field, DeterministicFromSeed) {
    EventSpec ev;
    auto p = coeffs({0.3, 0.9, -1.1, 8.0, -0.4});
    p.sigma_intra = 0.5;
    p.tau_inter = 0.3;
    p.correlation_range_km = 10;
    std::vector<Site> sites;
    for (int i = 0; i < 20; ++i) sites.push_back({{i * 0.7, i * 0.3}, 400});
    const auto a = sample_im_field(ev, sites, p, 42);
    const auto b = sample_im_field(ev, sites, p, 42);
    const auto c = sample_im_field(ev, sites, p, 43);
    EXPECT_EQ(a.pga_g, b.pga_g);
    EXPECT_NE(a.pga_g, c.pga_g);
    for (double v : a.pga_g) EXPECT_GT(v, 0.0);
}

TEST(Field, IntraEventCorrelationMatchesKernel) {
    EventSpec ev;
    auto p = coeffs({0, 0, -1, 1, 0});
    p.sigma_intra = 1.0;
    p.correlation_range_km = 20.0;
    std::vector<Site> sites{{{0, 0}, 760}, {{3, 4}, 760}};
    FieldSampler sampler(ev, sites, p);
    ASSERT_TRUE(sampler.correlated());
    Rng rng(2024);
    const int n = 100000;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const auto z = sampler.sample_intra_residuals(rng);
        sx += z[0];
        sy += z[1];
        sxx += z[0] * z[0];
        syy += z[1] * z[1];
        sxy += z[0] * z[1];
    }
    const double mx = sx / n, my = sy / n;
    const double corr = (sxy / n - mx * my) / std::sqrt((sxx / n - mx * mx) * (syy / n - my * my));
    EXPECT_NEAR(corr, 0.778800783071404868, 0.01);
}

TEST(Field, MarginalMomentsOfLogIm) {
    EventSpec ev;
    ev.magnitude = 6.9;
    auto p = coeffs({1.0, 0.9, -1.0, 10.0, -0.5});
    p.sigma_intra = 0.5;
    p.tau_inter = 0.3;
    p.correlation_range_km = 20.0;
    std::vector<Site> sites{{{1, 1}, 350}, {{2, 5}, 350}, {{6, 2}, 350}};
    FieldSampler sampler(ev, sites, p);
    const int n = 100000;
    const double var = 0.5 * 0.5 + 0.3 * 0.3;
    for (std::size_t s = 0; s < sites.size(); ++s) {
        const double mu = median_ln_im(ev, sites[s], p);
        double sum = 0, sum2 = 0;
        for (int i = 0; i < n; ++i) {
            const double x = std::log(sampler.sample(derive_seed(99, static_cast<std::uint64_t>(i))).pga_g[s]) - mu;
            sum += x;
            sum2 += x * x;
        }
        const double mean = sum / n, v = sum2 / n - mean * mean;
        EXPECT_NEAR(mean, 0.0, 3.0 * std::sqrt(var / n));
        // Sample variance of a normal has standard error var*sqrt(2/n).
        EXPECT_NEAR(v, var, 3.0 * var * std::sqrt(2.0 / n));
    }
}

TEST(Field, DuplicateSitesNeedNugget) {
    EventSpec ev;
    auto p = coeffs({0, 0, -1, 1, 0});
    p.sigma_intra = 0.5;
    p.correlation_range_km = 5;
    std::vector<Site> sites{{{1, 1}, 760}, {{1, 1}, 760}, {{2, 2}, 760}};
    EXPECT_THROW(FieldSampler(ev, sites, p), ConfigError);
    p.nugget = 1e-6;
    EXPECT_NO_THROW(FieldSampler(ev, sites, p).sample(1));
}
