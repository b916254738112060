#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "enfed/nn.hpp"
#include "enfed/rng.hpp"

namespace enfed {

// Central finite differences against the analytic backprop, both evaluated in
// double precision on the same float-initialized weights. A coordinate passes
// if the absolute difference is below 1e-9 (both sides effectively zero, e.g.
// dead ReLU paths) or the relative error is below the threshold.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::vector<std::string> failures;
    bool passed(double tol) const { return failures.empty() && max_rel_err < tol; }
};

namespace detail {

inline double loss_at(Net<double>& net, std::size_t layer, bool is_bias, std::size_t idx,
                      double value, const Mat<double>& x, const std::vector<int>& y) {
    double& slot = is_bias ? net.layers[layer].b[idx] : net.layers[layer].w.a[idx];
    const double saved = slot;
    slot = value;
    const double loss = mean_cross_entropy(net, x, y);
    slot = saved;
    return loss;
}

}  // namespace detail

inline GradCheckReport gradient_check(const Hyperparams& arch, std::uint64_t seed,
                                      int coords_per_layer, double step = 1e-4,
                                      double tol = 1e-4, bool corrupt = false) {
    Hyperparams hp = arch;
    hp.seed = derive_seed(seed, seed_stream::kGradCheck, 1);
    Net<double> net = net_cast<double>(init_mlp(hp));

    Rng rng(derive_seed(seed, seed_stream::kGradCheck, 2));
    const std::size_t rows = 8;
    Mat<double> x(rows, static_cast<std::size_t>(hp.input_size()));
    for (auto& v : x.a) v = rng.normal();
    std::vector<int> y(rows);
    for (auto& lbl : y) lbl = static_cast<int>(rng.below(hp.output_size()));

    Net<double> analytic = gradient(net, x, y);
    if (corrupt) {
        // Test hook: perturb the largest-magnitude gradient so the check has a
        // known failure to detect.
        double* worst = &analytic.layers[0].w.a[0];
        for (auto& l : analytic.layers)
            for (auto& g : l.w.a)
                if (std::fabs(g) > std::fabs(*worst)) worst = &g;
        *worst *= 1.01;
    }

    GradCheckReport report;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const std::size_t wn = net.layers[k].w.size();
        const std::size_t bn = net.layers[k].b.size();
        for (int c = 0; c < coords_per_layer; ++c) {
            const std::size_t pick = rng.below(wn + bn);
            const bool is_bias = pick >= wn;
            const std::size_t idx = is_bias ? pick - wn : pick;
            const double w0 = is_bias ? net.layers[k].b[idx] : net.layers[k].w.a[idx];
            const double lp = detail::loss_at(net, k, is_bias, idx, w0 + step, x, y);
            const double lm = detail::loss_at(net, k, is_bias, idx, w0 - step, x, y);
            const double fd = (lp - lm) / (2.0 * step);
            const double an =
                is_bias ? analytic.layers[k].b[idx] : analytic.layers[k].w.a[idx];
            const double diff = std::fabs(an - fd);
            ++report.coords_checked;
            if (diff < 1e-9) continue;
            const double rel = diff / std::max(std::fabs(an), std::fabs(fd));
            report.max_rel_err = std::max(report.max_rel_err, rel);
            if (rel >= tol) {
                report.failures.push_back("layer " + std::to_string(k) +
                                          (is_bias ? " bias[" : " w[") + std::to_string(idx) +
                                          "] analytic=" + std::to_string(an) +
                                          " fd=" + std::to_string(fd));
            }
        }
    }
    return report;
}

}  // namespace enfed
