#pragma once

#include <string>
#include <vector>

#include "enfed/nn.hpp"

namespace enfed {

// One received model: who sent it and in which round.
struct ModelBundle {
    std::string source;
    ModelWeights weights;
    int round = 0;
};

// Uniform elementwise mean over the bundles, in the given order. Sums are
// accumulated in double and rounded once to float, so the result matches a
// 64-bit oracle to within final rounding and is exact for identical inputs.
inline ModelWeights average_weights(const std::vector<ModelBundle>& bundles) {
    if (bundles.empty()) throw std::invalid_argument("average_weights: no bundles");
    const ModelWeights& first = bundles.front().weights;
    validate_weights(first);
    for (const auto& b : bundles) {
        if (!congruent(b.weights, first))
            throw std::invalid_argument("average_weights: shape mismatch from source '" +
                                        b.source + "'");
    }
    Net<double> acc = detail::congruent_zeros(net_cast<double>(first));
    for (const auto& b : bundles) {
        for (std::size_t k = 0; k < acc.layers.size(); ++k) {
            const auto& src = b.weights.layers[k];
            auto& dst = acc.layers[k];
            for (std::size_t i = 0; i < src.w.a.size(); ++i)
                dst.w.a[i] += static_cast<double>(src.w.a[i]);
            for (std::size_t i = 0; i < src.b.size(); ++i)
                dst.b[i] += static_cast<double>(src.b[i]);
        }
    }
    const double inv = 1.0 / static_cast<double>(bundles.size());
    ModelWeights out = first;
    for (std::size_t k = 0; k < acc.layers.size(); ++k) {
        for (std::size_t i = 0; i < acc.layers[k].w.a.size(); ++i)
            out.layers[k].w.a[i] = static_cast<float>(acc.layers[k].w.a[i] * inv);
        for (std::size_t i = 0; i < acc.layers[k].b.size(); ++i)
            out.layers[k].b[i] = static_cast<float>(acc.layers[k].b[i] * inv);
    }
    return out;
}

struct UpdateResult {
    ModelWeights model;
    std::vector<double> fit_loss;  // per-epoch trace of the fine-tune
};

// The full model-update step: install the average of the received models,
// then fine-tune on the local training split.
inline UpdateResult update_model(const ModelWeights& local,
                                 const std::vector<ModelBundle>& bundles, const Dataset& train,
                                 const Hyperparams& hp) {
    ModelWeights averaged = average_weights(bundles);
    if (!congruent(averaged, local))
        throw std::invalid_argument("update_model: averaged shape does not match local model");
    auto fitted = fit(std::move(averaged), train, hp);
    return UpdateResult{std::move(fitted.net), std::move(fitted.epoch_loss)};
}

}  // namespace enfed
