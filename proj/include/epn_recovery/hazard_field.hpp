#pragma once

// Ground-motion (PGA) field sampling over a set of sites.
//
//   ln(PGA_s) = median_ln_im(s) + eps1(s) * sigma + eps2 * tau
//
// eps2 is one standard-normal draw per event (inter-event residual); eps1 is a
// vector of standard-normal marginals (intra-event residual), optionally
// spatially correlated with an exponential kernel exp(-d / range).

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace epn {

struct Point {
    double x_km = 0.0;
    double y_km = 0.0;
};

inline double distance_km(const Point& a, const Point& b) {
    return std::hypot(a.x_km - b.x_km, a.y_km - b.y_km);
}

struct EventSpec {
    double magnitude = 6.9;
    Point epicenter;
    std::vector<double> fault_params;  // opaque; the parametric form ignores it

    void validate() const {
        if (!(magnitude >= 4.0 && magnitude <= 9.0))
            throw ConfigError("event magnitude must lie in [4, 9], got " + std::to_string(magnitude));
        if (!std::isfinite(epicenter.x_km) || !std::isfinite(epicenter.y_km))
            throw ConfigError("event epicenter must be finite");
    }
};

struct Site {
    Point location;
    double vs30 = 760.0;  // m/s
};

// ln(IM) = c0 + c1 (Mw - 6) + c2 ln(R + c3) + c4 ln(vs30 / 760)
struct AttenuationParams {
    std::array<double, 5> c{0.0, 0.0, -1.0, 1.0, 0.0};
    double sigma_intra = 0.0;
    double tau_inter = 0.0;
    double correlation_range_km = 0.0;  // 0 disables spatial correlation
    double nugget = 0.0;                // > 0 enables the diagonal-jitter fallback

    void validate() const {
        if (!(c[3] > 0.0)) throw ConfigError("attenuation coefficient c3 must be > 0");
        if (!(sigma_intra >= 0.0) || !(tau_inter >= 0.0))
            throw ConfigError("attenuation sigma and tau must be >= 0");
        if (!(correlation_range_km >= 0.0)) throw ConfigError("correlation range must be >= 0");
        if (!(nugget >= 0.0)) throw ConfigError("nugget must be >= 0");
    }
};

// One PGA value (g) per site.
struct ImField {
    std::vector<double> pga_g;
};

inline double median_ln_im(const EventSpec& event, const Site& site, const AttenuationParams& p) {
    const double r = distance_km(event.epicenter, site.location);
    return p.c[0] + p.c[1] * (event.magnitude - 6.0) + p.c[2] * std::log(r + p.c[3]) +
           p.c[4] * std::log(site.vs30 / 760.0);
}

// Precomputes medians and the correlation factor so that many realizations can
// be drawn for the same (event, sites, params).
class FieldSampler {
public:
    FieldSampler(const EventSpec& event, std::span<const Site> sites, const AttenuationParams& params)
        : params_(params) {
        event.validate();
        params.validate();
        if (sites.empty()) throw ConfigError("ground-motion field needs at least one site");
        medians_.reserve(sites.size());
        for (const auto& s : sites) {
            if (!(s.vs30 > 0.0)) throw ConfigError("site vs30 must be > 0");
            medians_.push_back(median_ln_im(event, s, params));
        }
        if (params.correlation_range_km > 0.0 && params.sigma_intra > 0.0 && sites.size() > 1)
            factor_ = correlation_factor(sites, params);
    }

    std::size_t size() const { return medians_.size(); }
    bool correlated() const { return factor_.size() > 0; }

    ImField sample(std::uint64_t seed) const {
        Rng rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double eps2 = normal(rng);
        const auto n = medians_.size();
        Eigen::VectorXd z(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
        if (correlated()) z = factor_.triangularView<Eigen::Lower>() * z;

        ImField field;
        field.pga_g.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ln_im = medians_[i] + z[static_cast<Eigen::Index>(i)] * params_.sigma_intra +
                                 eps2 * params_.tau_inter;
            field.pga_g[i] = std::exp(ln_im);
        }
        return field;
    }

    // Intra-event residual vector only (unit variance marginals); used by tests
    // to check the correlation structure directly.
    Eigen::VectorXd sample_intra_residuals(Rng& rng) const {
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd z(static_cast<Eigen::Index>(medians_.size()));
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
        if (correlated()) z = factor_.triangularView<Eigen::Lower>() * z;
        return z;
    }

private:
    static Eigen::MatrixXd correlation_factor(std::span<const Site> sites, const AttenuationParams& p) {
        const auto n = static_cast<Eigen::Index>(sites.size());
        Eigen::MatrixXd corr(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                const double d = distance_km(sites[static_cast<std::size_t>(i)].location,
                                             sites[static_cast<std::size_t>(j)].location);
                corr(i, j) = corr(j, i) = std::exp(-d / p.correlation_range_km);
            }
        Eigen::LLT<Eigen::MatrixXd> llt(corr);
        if (llt.info() != Eigen::Success) {
            if (p.nugget <= 0.0)
                throw ConfigError("intra-event correlation matrix is not positive definite "
                                  "(duplicate sites?); set a nugget to enable the jitter fallback");
            corr.diagonal().array() += p.nugget;
            corr /= 1.0 + p.nugget;
            llt.compute(corr);
            if (llt.info() != Eigen::Success)
                throw ConfigError("intra-event correlation matrix is not positive definite even with nugget");
        }
        return llt.matrixL();
    }

    AttenuationParams params_;
    std::vector<double> medians_;
    Eigen::MatrixXd factor_;
};

inline ImField sample_im_field(const EventSpec& event, std::span<const Site> sites, const AttenuationParams& params,
                               std::uint64_t seed) {
    return FieldSampler(event, sites, params).sample(seed);
}

}  // namespace epn
