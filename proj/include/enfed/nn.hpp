#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "enfed/dataset.hpp"
#include "enfed/errors.hpp"
#include "enfed/matrix.hpp"
#include "enfed/rng.hpp"

namespace enfed {

enum class Activation : std::uint8_t { Relu = 0, Softmax = 1 };

// Training hyperparameters. Defaults follow the usual Adam/Keras settings;
// layer sizes and epochs come from the experiment configuration.
struct Hyperparams {
    std::vector<int> layer_sizes;  // input, hidden..., output
    int epochs = 100;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    void validate() const {
        if (layer_sizes.size() < 2)
            throw std::invalid_argument("Hyperparams: need at least input and output layers");
        for (int s : layer_sizes)
            if (s <= 0) throw std::invalid_argument("Hyperparams: degenerate layer size");
        if (epochs <= 0) throw std::invalid_argument("Hyperparams: epochs must be positive");
        if (batch_size <= 0) throw std::invalid_argument("Hyperparams: batch_size must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw std::invalid_argument("Hyperparams: bad learning_rate");
    }

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
};

template <class Real>
struct DenseLayer {
    Mat<Real> w;             // out x in
    std::vector<Real> b;     // out
    Activation act = Activation::Relu;
};

template <class Real>
struct Net {
    std::vector<DenseLayer<Real>> layers;

    std::size_t input_size() const { return layers.front().w.cols; }
    std::size_t output_size() const { return layers.back().w.rows; }

    std::size_t weight_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

using ModelWeights = Net<float>;

template <class To, class From>
Net<To> net_cast(const Net<From>& net) {
    Net<To> out;
    out.layers.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        DenseLayer<To> nl;
        nl.w = mat_cast<To>(l.w);
        nl.b.assign(l.b.begin(), l.b.end());
        nl.act = l.act;
        out.layers.push_back(std::move(nl));
    }
    return out;
}

template <class Real>
bool congruent(const Net<Real>& a, const Net<Real>& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (!a.layers[i].w.same_shape(b.layers[i].w)) return false;
        if (a.layers[i].b.size() != b.layers[i].b.size()) return false;
    }
    return true;
}

template <class Real>
bool bitwise_equal(const Net<Real>& a, const Net<Real>& b) {
    if (!congruent(a, b)) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].w.a != b.layers[i].w.a) return false;
        if (a.layers[i].b != b.layers[i].b) return false;
    }
    return true;
}

template <class Real>
bool all_finite(const Net<Real>& net) {
    for (const auto& l : net.layers) {
        for (Real v : l.w.a)
            if (!std::isfinite(static_cast<double>(v))) return false;
        for (Real v : l.b)
            if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

template <class Real>
void validate_weights(const Net<Real>& net) {
    if (net.layers.empty()) throw std::invalid_argument("ModelWeights: no layers");
    for (std::size_t k = 1; k < net.layers.size(); ++k) {
        if (net.layers[k].w.cols != net.layers[k - 1].w.rows)
            throw std::invalid_argument("ModelWeights: layer dimensions do not chain at layer " +
                                        std::to_string(k));
    }
    for (const auto& l : net.layers)
        if (l.b.size() != l.w.rows)
            throw std::invalid_argument("ModelWeights: bias length != layer rows");
    if (!all_finite(net)) throw std::invalid_argument("ModelWeights: non-finite value");
}

// Glorot-style uniform init: +-sqrt(6/(fan_in+fan_out)), zero biases.
// Deterministic for a fixed seed; hidden layers ReLU, output softmax.
inline ModelWeights init_mlp(const Hyperparams& hp) {
    hp.validate();
    ModelWeights net;
    const std::size_t n_layers = hp.layer_sizes.size() - 1;
    net.layers.resize(n_layers);
    for (std::size_t k = 0; k < n_layers; ++k) {
        const int fan_in = hp.layer_sizes[k];
        const int fan_out = hp.layer_sizes[k + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(derive_seed(hp.seed, seed_stream::kModelInit, k));
        auto& layer = net.layers[k];
        layer.w = Mat<float>(fan_out, fan_in);
        for (auto& v : layer.w.a) v = static_cast<float>(rng.uniform(-limit, limit));
        layer.b.assign(fan_out, 0.0f);
        layer.act = (k + 1 == n_layers) ? Activation::Softmax : Activation::Relu;
    }
    return net;
}

namespace detail {

// z = x * W^T + b, activations applied in place. Softmax uses the usual
// max-subtraction so large logits stay finite.
template <class Real>
Mat<Real> layer_forward(const DenseLayer<Real>& layer, const Mat<Real>& x) {
    if (x.cols != layer.w.cols)
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols) +
                                    " features, layer expects " + std::to_string(layer.w.cols));
    Mat<Real> z(x.rows, layer.w.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const Real* xi = &x.a[i * x.cols];
        for (std::size_t o = 0; o < layer.w.rows; ++o) {
            const Real* wo = &layer.w.a[o * layer.w.cols];
            Real acc = layer.b[o];
            for (std::size_t c = 0; c < x.cols; ++c) acc += xi[c] * wo[c];
            z(i, o) = acc;
        }
    }
    return z;
}

template <class Real>
void apply_relu(Mat<Real>& z) {
    for (auto& v : z.a) v = v > Real{0} ? v : Real{0};
}

template <class Real>
void apply_softmax_rows(Mat<Real>& z) {
    for (std::size_t i = 0; i < z.rows; ++i) {
        Real* row = &z.a[i * z.cols];
        Real mx = row[0];
        for (std::size_t c = 1; c < z.cols; ++c) mx = std::max(mx, row[c]);
        Real sum{0};
        for (std::size_t c = 0; c < z.cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (std::size_t c = 0; c < z.cols; ++c) row[c] /= sum;
    }
}

template <class Real>
struct ForwardCache {
    std::vector<Mat<Real>> inputs;  // activation entering each layer
    Mat<Real> logits;               // pre-softmax output
    Mat<Real> probs;
};

template <class Real>
ForwardCache<Real> forward_cached(const Net<Real>& net, const Mat<Real>& x) {
    ForwardCache<Real> cache;
    cache.inputs.reserve(net.layers.size());
    Mat<Real> cur = x;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        cache.inputs.push_back(cur);
        Mat<Real> z = layer_forward(net.layers[k], cur);
        if (net.layers[k].act == Activation::Relu) {
            apply_relu(z);
            cur = std::move(z);
        } else {
            cache.logits = z;
            apply_softmax_rows(z);
            cur = std::move(z);
        }
    }
    cache.probs = std::move(cur);
    return cache;
}

// Mean cross-entropy from logits via log-sum-exp (numerically stable, and
// computed in double regardless of the parameter type).
template <class Real>
double mean_cross_entropy_from_logits(const Mat<Real>& logits, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const Real* row = &logits.a[i * logits.cols];
        double mx = static_cast<double>(row[0]);
        for (std::size_t c = 1; c < logits.cols; ++c)
            mx = std::max(mx, static_cast<double>(row[c]));
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c)
            sum += std::exp(static_cast<double>(row[c]) - mx);
        const double logp = static_cast<double>(row[labels[i]]) - mx - std::log(sum);
        total -= logp;
    }
    return total / static_cast<double>(logits.rows);
}

template <class Real>
Net<Real> congruent_zeros(const Net<Real>& net) {
    Net<Real> out;
    out.layers.resize(net.layers.size());
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        out.layers[k].w = Mat<Real>(net.layers[k].w.rows, net.layers[k].w.cols);
        out.layers[k].b.assign(net.layers[k].b.size(), Real{0});
        out.layers[k].act = net.layers[k].act;
    }
    return out;
}

template <class Real>
void gather_batch(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t begin,
                  std::size_t end, Mat<Real>& x, std::vector<int>& y) {
    const std::size_t n = end - begin;
    x = Mat<Real>(n, ds.features.cols);
    y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t src = idx[begin + r];
        for (std::size_t c = 0; c < ds.features.cols; ++c)
            x(r, c) = static_cast<Real>(ds.features(src, c));
        y[r] = ds.labels[src];
    }
}

}  // namespace detail

// Class probabilities for a batch; every row sums to 1.
template <class Real>
Mat<Real> forward(const Net<Real>& net, const Mat<Real>& batch) {
    validate_weights(net);
    return detail::forward_cached(net, batch).probs;
}

template <class Real>
double mean_cross_entropy(const Net<Real>& net, const Mat<Real>& batch,
                          const std::vector<int>& labels) {
    auto cache = detail::forward_cached(net, batch);
    return detail::mean_cross_entropy_from_logits(cache.logits, labels);
}

// Analytic softmax + cross-entropy + ReLU backprop. Gradients are means over
// the batch, congruent in shape with the network.
template <class Real>
Net<Real> gradient(const Net<Real>& net, const Mat<Real>& batch, const std::vector<int>& labels) {
    if (batch.rows != labels.size())
        throw std::invalid_argument("gradient: batch/label row counts differ");
    if (batch.rows == 0) throw std::invalid_argument("gradient: empty batch");
    auto cache = detail::forward_cached(net, batch);
    Net<Real> grads = detail::congruent_zeros(net);

    const std::size_t n = batch.rows;
    const Real inv_n = Real{1} / static_cast<Real>(n);

    // delta for the output layer: (p - onehot)/n
    Mat<Real> delta = cache.probs;
    for (std::size_t i = 0; i < n; ++i) {
        delta(i, static_cast<std::size_t>(labels[i])) -= Real{1};
        for (std::size_t c = 0; c < delta.cols; ++c) delta(i, c) *= inv_n;
    }

    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const auto& layer = net.layers[k];
        const Mat<Real>& input = cache.inputs[k];
        auto& g = grads.layers[k];
        // gW = delta^T * input, gb = column sums of delta
        for (std::size_t i = 0; i < n; ++i) {
            const Real* di = &delta.a[i * delta.cols];
            const Real* xi = &input.a[i * input.cols];
            for (std::size_t o = 0; o < layer.w.rows; ++o) {
                const Real d = di[o];
                if (d == Real{0}) continue;
                Real* go = &g.w.a[o * g.w.cols];
                for (std::size_t c = 0; c < input.cols; ++c) go[c] += d * xi[c];
                g.b[o] += d;
            }
        }
        if (k == 0) break;
        // delta_prev = (delta * W) masked by the ReLU that produced input.
        const Mat<Real>& act = cache.inputs[k];  // post-ReLU activation of layer k-1
        Mat<Real> prev(n, layer.w.cols);
        for (std::size_t i = 0; i < n; ++i) {
            const Real* di = &delta.a[i * delta.cols];
            Real* pi = &prev.a[i * prev.cols];
            for (std::size_t o = 0; o < layer.w.rows; ++o) {
                const Real d = di[o];
                if (d == Real{0}) continue;
                const Real* wo = &layer.w.a[o * layer.w.cols];
                for (std::size_t c = 0; c < prev.cols; ++c) pi[c] += d * wo[c];
            }
            for (std::size_t c = 0; c < prev.cols; ++c)
                if (!(act(i, c) > Real{0})) pi[c] = Real{0};
        }
        delta = std::move(prev);
    }
    return grads;
}

template <class Real>
struct FitResult {
    Net<Real> net;
    std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

// Mini-batch Adam. The per-epoch shuffle comes from a counter-keyed stream of
// hp.seed, so the whole trajectory is reproducible bit-for-bit.
template <class Real>
FitResult<Real> fit(Net<Real> net, const Dataset& train, const Hyperparams& hp) {
    hp.validate();
    train.validate();
    if (train.rows() == 0) throw std::invalid_argument("fit: empty training set");
    if (net.input_size() != train.dim())
        throw std::invalid_argument("fit: dataset dimension does not match model input");
    if (train.class_count > static_cast<int>(net.output_size()))
        throw std::invalid_argument("fit: class label outside model output range");

    const std::size_t n = train.rows();
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(hp.batch_size), n);

    Net<Real> m = detail::congruent_zeros(net);
    Net<Real> v = detail::congruent_zeros(net);
    const Real beta1 = Real{0.9}, beta2 = Real{0.999}, eps = Real{1e-8};
    const Real lr = static_cast<Real>(hp.learning_rate);
    long step = 0;

    FitResult<Real> result;
    result.epoch_loss.reserve(hp.epochs);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(hp.seed, seed_stream::kFitShuffle, epoch));
        const auto perm = random_permutation(n, shuffle_rng);
        double loss_sum = 0.0;

        for (std::size_t begin = 0; begin < n; begin += batch) {
            const std::size_t end = std::min(begin + batch, n);
            Mat<Real> x;
            std::vector<int> y;
            detail::gather_batch(train, perm, begin, end, x, y);

            auto cache = detail::forward_cached(net, x);
            const double loss = detail::mean_cross_entropy_from_logits(cache.logits, y);
            if (!std::isfinite(loss))
                throw DivergenceError("fit: non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += loss * static_cast<double>(end - begin);

            Net<Real> g = gradient(net, x, y);
            ++step;
            const Real bc1 = Real{1} - static_cast<Real>(std::pow(0.9, step));
            const Real bc2 = Real{1} - static_cast<Real>(std::pow(0.999, step));
            for (std::size_t k = 0; k < net.layers.size(); ++k) {
                auto adam = [&](Real& w, Real& mw, Real& vw, Real gw) {
                    mw = beta1 * mw + (Real{1} - beta1) * gw;
                    vw = beta2 * vw + (Real{1} - beta2) * gw * gw;
                    const Real mhat = mw / bc1;
                    const Real vhat = vw / bc2;
                    w -= lr * mhat / (std::sqrt(vhat) + eps);
                };
                auto& lw = net.layers[k].w.a;
                auto& gw = g.layers[k].w.a;
                for (std::size_t i = 0; i < lw.size(); ++i)
                    adam(lw[i], m.layers[k].w.a[i], v.layers[k].w.a[i], gw[i]);
                auto& lb = net.layers[k].b;
                auto& gb = g.layers[k].b;
                for (std::size_t i = 0; i < lb.size(); ++i)
                    adam(lb[i], m.layers[k].b[i], v.layers[k].b[i], gb[i]);
            }
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }
    if (!all_finite(net)) throw DivergenceError("fit: non-finite weights after training");
    result.net = std::move(net);
    return result;
}

// Fraction of rows whose argmax prediction matches the label. Argmax ties
// break toward the lowest class index.
template <class Real>
int predict_row(const Mat<Real>& probs, std::size_t row) {
    int best = 0;
    Real best_p = probs(row, 0);
    for (std::size_t c = 1; c < probs.cols; ++c) {
        if (probs(row, c) > best_p) {
            best_p = probs(row, c);
            best = static_cast<int>(c);
        }
    }
    return best;
}

template <class Real>
double accuracy_score(const Net<Real>& net, const Dataset& test) {
    test.validate();
    if (test.rows() == 0) throw std::invalid_argument("accuracy_score: empty test set");
    auto probs = forward(net, mat_cast<Real>(test.features));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.rows(); ++i)
        if (predict_row(probs, i) == test.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.rows());
}

struct ClassificationMetrics {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

template <class Real>
ClassificationMetrics classification_metrics(const Net<Real>& net, const Dataset& test) {
    test.validate();
    if (test.rows() == 0) throw std::invalid_argument("classification_metrics: empty test set");
    auto probs = forward(net, mat_cast<Real>(test.features));
    const int C = test.class_count;
    std::vector<long> tp(C, 0), fp(C, 0), fn(C, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const int pred = predict_row(probs, i);
        const int truth = test.labels[i];
        if (pred == truth) {
            ++correct;
            ++tp[truth];
        } else {
            if (pred < C) ++fp[pred];
            ++fn[truth];
        }
    }
    ClassificationMetrics out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(test.rows());
    for (int c = 0; c < C; ++c) {
        const double denom_p = static_cast<double>(tp[c] + fp[c]);
        const double denom_r = static_cast<double>(tp[c] + fn[c]);
        const double p = denom_p > 0 ? tp[c] / denom_p : 0.0;
        const double r = denom_r > 0 ? tp[c] / denom_r : 0.0;
        out.macro_precision += p;
        out.macro_recall += r;
        out.macro_f1 += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    out.macro_precision /= C;
    out.macro_recall /= C;
    out.macro_f1 /= C;
    return out;
}

}  // namespace enfed
