#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mka/engines.hpp"

namespace mka {

struct GradReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t n_params = 0;
    double step = 0.0;
};

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central finite differences, one coordinate at a time. Non-finite function
// values surface as NaN in that coordinate.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x0, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: step must be positive");
    std::vector<double> g(x0.size());
    std::vector<double> x = x0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x[i] = x0[i] + h;
        const double fp = f(x);
        x[i] = x0[i] - h;
        const double fm = f(x);
        x[i] = x0[i];
        g[i] = (std::isfinite(fp) && std::isfinite(fm)) ? (fp - fm) / (2.0 * h)
                                                        : std::numeric_limits<double>::quiet_NaN();
    }
    return g;
}

struct MixtureGradients {
    Tensor<double> dq;                               // [S,d]
    std::array<double, kNumLevels> dlogits{};        // routing logits
    std::array<Tensor<double>, kNumLevels> dvalues;  // per-level [n_l,d]
};

// Analytic gradients of loss = <upstream, Attn(Q)> for the gated mixture,
// wrt q, the routing logits, and the level values. lambda = softmax(logits).
inline MixtureGradients grad_gated_mixture(const Tensor<double>& q,
                                           const std::array<LevelKv<double>, kNumLevels>& levels,
                                           const std::array<double, kNumLevels>& lambda_logits,
                                           const Tensor<double>& upstream) {
    if (q.rank() != 2) throw std::invalid_argument("grad_gated_mixture: q must be [S,d]");
    if (!upstream.same_shape(q))
        throw std::invalid_argument("grad_gated_mixture: upstream must match q's shape");
    const std::size_t s = q.shape[0], d = q.shape[1];

    std::array<double, kNumLevels> lam = detail::softmax3(lambda_logits);

    MixtureGradients g;
    g.dq = Tensor<double>({s, d});
    for (std::size_t l = 0; l < kNumLevels; ++l)
        g.dvalues[l] = Tensor<double>(levels[l].k.size() ? levels[l].k.shape
                                                        : std::vector<std::size_t>{0, d});

    std::array<double, kNumLevels> dlam{};
    for (std::size_t i = 0; i < s; ++i) {
        // stable pass: shared shift mu across levels for this row
        double mu = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < kNumLevels; ++l) {
            const auto& lv = levels[l];
            const std::size_t n = lv.k.size() ? lv.k.shape[0] : 0;
            if (lam[l] == 0.0 || n == 0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                double sc = 0.0;
                for (std::size_t e = 0; e < d; ++e) sc += q(i, e) * lv.k(j, e);
                mu = std::max(mu, sc);
            }
        }
        if (std::isinf(mu))
            throw std::invalid_argument("grad_gated_mixture: degenerate denominator");

        double z = 0.0;
        std::vector<double> a(d, 0.0);
        for (std::size_t l = 0; l < kNumLevels; ++l) {
            const auto& lv = levels[l];
            const std::size_t n = lv.k.size() ? lv.k.shape[0] : 0;
            if (lam[l] == 0.0 || n == 0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                double sc = 0.0;
                for (std::size_t e = 0; e < d; ++e) sc += q(i, e) * lv.k(j, e);
                const double w = lam[l] * std::exp(sc - mu);
                z += w;
                for (std::size_t e = 0; e < d; ++e) a[e] += w * lv.v(j, e);
            }
        }
        std::vector<double> outrow(d);
        for (std::size_t e = 0; e < d; ++e) outrow[e] = a[e] / z;
        double u_dot_out = 0.0;
        for (std::size_t e = 0; e < d; ++e) u_dot_out += upstream(i, e) * outrow[e];

        for (std::size_t l = 0; l < kNumLevels; ++l) {
            const auto& lv = levels[l];
            const std::size_t n = lv.k.size() ? lv.k.shape[0] : 0;
            if (n == 0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                double sc = 0.0;
                for (std::size_t e = 0; e < d; ++e) sc += q(i, e) * lv.k(j, e);
                const double e_shift = std::exp(sc - mu);  // exp(sc)/exp(mu); ratios to z cancel the shift
                double u_dot_v = 0.0;
                for (std::size_t e = 0; e < d; ++e) u_dot_v += upstream(i, e) * lv.v(j, e);
                const double common = e_shift * (u_dot_v - u_dot_out) / z;
                dlam[l] += common;
                if (lam[l] != 0.0) {
                    for (std::size_t e = 0; e < d; ++e) {
                        g.dq(i, e) += lam[l] * common * lv.k(j, e);
                        g.dvalues[l](j, e) += lam[l] * e_shift * upstream(i, e) / z;
                    }
                }
            }
        }
    }

    // chain through softmax over the logits
    double dot = 0.0;
    for (std::size_t l = 0; l < kNumLevels; ++l) dot += dlam[l] * lam[l];
    for (std::size_t l = 0; l < kNumLevels; ++l) g.dlogits[l] = lam[l] * (dlam[l] - dot);
    return g;
}

}  // namespace mka
