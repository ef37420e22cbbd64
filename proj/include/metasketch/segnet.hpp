// SPDX-License-Identifier: Apache-2.0
//
// metasketch-sim: metasurface-assisted compressive RF sensing simulator
// Copyright (C) 2026 The metasketch-sim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include "core.hpp"
#include "recovery.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace metasketch
{

enum class Activation
{
    relu,
    tanh
};

inline const char *to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string &s)
{
    if (s == "relu")
        return Activation::relu;
    if (s == "tanh")
        return Activation::tanh;
    throw Error(ErrorKind::invalid_argument, "unknown activation '" + s + "'");
}

struct DenseLayer
{
    RMatrix W;  // out x in
    RVector b;  // out

    std::size_t in() const { return static_cast<std::size_t>(W.cols()); }
    std::size_t out() const { return static_cast<std::size_t>(W.rows()); }
};

// Widths of the two shared MLP groups. Group 1 maps each 5-dim point through
// local_widths (activated); a linear projection to global_dim is max-pooled
// over points; group 2 maps [local, global] through head_widths (activated)
// and a final linear layer to n_classes logits.
struct SegNetArchitecture
{
    std::size_t input_dim = 5;
    std::vector<std::size_t> local_widths{64, 64};
    std::size_t global_dim = 5;
    std::vector<std::size_t> head_widths{64};
    std::size_t n_classes = 5;
    Activation activation = Activation::relu;
};

struct SegNetParams
{
    std::vector<DenseLayer> local;  // symmetric MLP group 1
    DenseLayer pool;                // per-point projection feeding the max-pool
    std::vector<DenseLayer> head;   // symmetric MLP group 2, last layer gives logits
    Activation activation = Activation::relu;

    std::size_t input_dim() const { return local.empty() ? pool.in() : local.front().in(); }
    std::size_t local_dim() const { return pool.in(); }
    std::size_t global_dim() const { return pool.out(); }
    std::size_t n_classes() const { return head.back().out(); }

    template <typename Fn>
    void for_each_layer(Fn &&fn)
    {
        for (auto &l : local)
            fn(l);
        fn(pool);
        for (auto &l : head)
            fn(l);
    }

    template <typename Fn>
    void for_each_layer(Fn &&fn) const
    {
        for (const auto &l : local)
            fn(l);
        fn(pool);
        for (const auto &l : head)
            fn(l);
    }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for_each_layer([&](const DenseLayer &l) { n += static_cast<std::size_t>(l.W.size() + l.b.size()); });
        return n;
    }

    // Weights then biases, layer by layer, W in column-major order.
    RVector to_vector() const
    {
        RVector v(static_cast<Eigen::Index>(parameter_count()));
        Eigen::Index at = 0;
        for_each_layer([&](const DenseLayer &l) {
            v.segment(at, l.W.size()) = Eigen::Map<const RVector>(l.W.data(), l.W.size());
            at += l.W.size();
            v.segment(at, l.b.size()) = l.b;
            at += l.b.size();
        });
        return v;
    }

    void from_vector(const RVector &v)
    {
        require(static_cast<std::size_t>(v.size()) == parameter_count(), ErrorKind::dimension_mismatch,
                "parameter vector length mismatch");
        Eigen::Index at = 0;
        for_each_layer([&](DenseLayer &l) {
            Eigen::Map<RVector>(l.W.data(), l.W.size()) = v.segment(at, l.W.size());
            at += l.W.size();
            l.b = v.segment(at, l.b.size());
            at += l.b.size();
        });
    }

    SegNetParams zeros_like() const
    {
        SegNetParams z = *this;
        z.for_each_layer([](DenseLayer &l) {
            l.W.setZero();
            l.b.setZero();
        });
        return z;
    }

    void validate() const
    {
        require(!head.empty(), ErrorKind::invalid_argument, "segmentation net needs an output layer");
        std::size_t width = input_dim();
        for (const auto &l : local)
        {
            require(l.in() == width && static_cast<std::size_t>(l.b.size()) == l.out(), ErrorKind::dimension_mismatch,
                    "group-1 layer shapes do not chain");
            width = l.out();
        }
        require(pool.in() == width && static_cast<std::size_t>(pool.b.size()) == pool.out(), ErrorKind::dimension_mismatch,
                "pool projection shape mismatch");
        width += pool.out();
        for (const auto &l : head)
        {
            require(l.in() == width && static_cast<std::size_t>(l.b.size()) == l.out(), ErrorKind::dimension_mismatch,
                    "group-2 layer shapes do not chain");
            width = l.out();
        }
    }
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline SegNetParams init_segnet(const SegNetArchitecture &arch, std::uint64_t seed)
{
    require(arch.input_dim >= 1 && arch.global_dim >= 1 && arch.n_classes >= 2, ErrorKind::invalid_argument,
            "segmentation net dimensions must be positive (n_classes >= 2)");
    Rng rng(seed);
    auto make = [&](std::size_t in, std::size_t out) {
        DenseLayer l;
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        l.W.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        for (Eigen::Index j = 0; j < l.W.cols(); ++j)
            for (Eigen::Index i = 0; i < l.W.rows(); ++i)
                l.W(i, j) = rng.uniform(-bound, bound);
        l.b = RVector::Zero(static_cast<Eigen::Index>(out));
        return l;
    };
    SegNetParams p;
    p.activation = arch.activation;
    std::size_t width = arch.input_dim;
    for (std::size_t w : arch.local_widths)
    {
        p.local.push_back(make(width, w));
        width = w;
    }
    p.pool = make(width, arch.global_dim);
    width += arch.global_dim;
    for (std::size_t w : arch.head_widths)
    {
        p.head.push_back(make(width, w));
        width = w;
    }
    p.head.push_back(make(width, arch.n_classes));
    return p;
}

// Per-point class probabilities (M x N_obj) and 1-based argmax labels.
struct LabeledPrediction
{
    RMatrix probabilities;
    std::vector<int> labels;
};

namespace detail
{

inline void activate(RVector &v, Activation a)
{
    if (a == Activation::relu)
        v = v.cwiseMax(0.0);
    else
        v = v.array().tanh().matrix();
}

// dL/dpre from dL/dout, given the activated output and activation kind.
inline void activate_backward(RVector &grad, const RVector &out, Activation a)
{
    if (a == Activation::relu)
    {
        for (Eigen::Index i = 0; i < grad.size(); ++i)
            if (!(out[i] > 0.0))
                grad[i] = 0.0;
    }
    else
    {
        grad = grad.cwiseProduct((1.0 - out.array().square()).matrix());
    }
}

inline RVector softmax(const RVector &z)
{
    const double top = z.maxCoeff();
    RVector e = (z.array() - top).exp().matrix();
    return e / e.sum();
}

// Everything a backward pass needs for one cloud.
struct ForwardState
{
    std::vector<std::vector<RVector>> local;  // [point][layer]: activated outputs (index 0 = input)
    std::vector<RVector> projected;           // [point]: pool projection outputs
    RVector global;
    std::vector<Eigen::Index> argmax;         // [global dim]: point providing the max
    std::vector<std::vector<RVector>> head;   // [point][layer]: inputs to each head layer, then logits
    RMatrix probabilities;
};

inline ForwardState forward_state(const SegNetParams &p, const PointCloud &cloud)
{
    p.validate();
    const Eigen::Index M = cloud.features.rows();
    require(M >= 1, ErrorKind::invalid_argument, "point cloud must contain at least one point");
    require(p.input_dim() == 5, ErrorKind::dimension_mismatch, "segmentation net input must be 5-dim");
    require(cloud.features.allFinite(), ErrorKind::numeric, "point cloud features must be finite");

    ForwardState st;
    st.local.resize(static_cast<std::size_t>(M));
    st.projected.resize(static_cast<std::size_t>(M));
    st.head.resize(static_cast<std::size_t>(M));

    for (Eigen::Index m = 0; m < M; ++m)
    {
        auto &acts = st.local[static_cast<std::size_t>(m)];
        acts.reserve(p.local.size() + 1);
        acts.emplace_back(cloud.features.row(m).transpose());
        for (const auto &layer : p.local)
        {
            RVector z = layer.W * acts.back() + layer.b;
            activate(z, p.activation);
            acts.push_back(std::move(z));
        }
        st.projected[static_cast<std::size_t>(m)] = p.pool.W * acts.back() + p.pool.b;
    }

    // max over points per dimension; ties go to the lowest point index
    const auto G = static_cast<Eigen::Index>(p.global_dim());
    st.global = st.projected[0];
    st.argmax.assign(static_cast<std::size_t>(G), 0);
    for (Eigen::Index m = 1; m < M; ++m)
        for (Eigen::Index j = 0; j < G; ++j)
            if (st.projected[static_cast<std::size_t>(m)][j] > st.global[j])
            {
                st.global[j] = st.projected[static_cast<std::size_t>(m)][j];
                st.argmax[static_cast<std::size_t>(j)] = m;
            }

    const auto C = static_cast<Eigen::Index>(p.n_classes());
    st.probabilities.resize(M, C);
    const auto D = static_cast<Eigen::Index>(p.local_dim());
    for (Eigen::Index m = 0; m < M; ++m)
    {
        auto &acts = st.head[static_cast<std::size_t>(m)];
        acts.reserve(p.head.size() + 1);
        RVector in(D + G);
        in << st.local[static_cast<std::size_t>(m)].back(), st.global;
        acts.push_back(std::move(in));
        for (std::size_t li = 0; li < p.head.size(); ++li)
        {
            RVector z = p.head[li].W * acts.back() + p.head[li].b;
            if (li + 1 < p.head.size())
                activate(z, p.activation);
            acts.push_back(std::move(z));
        }
        require(acts.back().allFinite(), ErrorKind::numeric, "non-finite logits at point " + std::to_string(m));
        st.probabilities.row(m) = softmax(acts.back()).transpose();
    }
    return st;
}

inline std::vector<int> argmax_labels(const RMatrix &probabilities)
{
    std::vector<int> labels(static_cast<std::size_t>(probabilities.rows()));
    for (Eigen::Index m = 0; m < probabilities.rows(); ++m)
    {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probabilities.cols(); ++c)
            if (probabilities(m, c) > probabilities(m, best))
                best = c;
        labels[static_cast<std::size_t>(m)] = static_cast<int>(best + 1);
    }
    return labels;
}

} // namespace detail

inline LabeledPrediction forward(const SegNetParams &params, const PointCloud &cloud)
{
    detail::ForwardState st = detail::forward_state(params, cloud);
    LabeledPrediction pred;
    pred.labels = detail::argmax_labels(st.probabilities);
    pred.probabilities = std::move(st.probabilities);
    return pred;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline constexpr double log_clamp = 1e-12;

// Mean over points of -log(b_true), log argument clamped at 1e-12. Labels are 1-based.
inline double loss(const RMatrix &probabilities, const std::vector<int> &truth)
{
    require(static_cast<std::size_t>(probabilities.rows()) == truth.size() && !truth.empty(),
            ErrorKind::dimension_mismatch, "one truth label per point is required");
    double total = 0.0;
    for (Eigen::Index m = 0; m < probabilities.rows(); ++m)
    {
        const auto row = probabilities.row(m);
        require(row.minCoeff() >= 0.0 && std::abs(row.sum() - 1.0) <= 1e-9, ErrorKind::invalid_argument,
                "invalid probability vector at point " + std::to_string(m));
        const int t = truth[static_cast<std::size_t>(m)];
        require(t >= 1 && t <= probabilities.cols(), ErrorKind::invalid_argument, "truth label out of range");
        total -= std::log(std::max(row[t - 1], log_clamp));
    }
    return total / static_cast<double>(probabilities.rows());
}

inline double loss(const LabeledPrediction &pred, const std::vector<int> &truth) { return loss(pred.probabilities, truth); }

// Unweighted mean over the labels present in truth of each label's
// misclassification fraction.
inline double avg_error_rate(const std::vector<int> &predicted, const std::vector<int> &truth, int n_obj)
{
    require(!truth.empty(), ErrorKind::invalid_argument, "error rate of an empty labeling is undefined");
    require(predicted.size() == truth.size(), ErrorKind::dimension_mismatch, "label vectors must have equal length");
    std::vector<std::size_t> total(static_cast<std::size_t>(n_obj) + 1, 0), wrong(static_cast<std::size_t>(n_obj) + 1, 0);
    for (std::size_t i = 0; i < truth.size(); ++i)
    {
        require(truth[i] >= 1 && truth[i] <= n_obj, ErrorKind::invalid_argument, "truth label out of range");
        ++total[static_cast<std::size_t>(truth[i])];
        if (predicted[i] != truth[i])
            ++wrong[static_cast<std::size_t>(truth[i])];
    }
    double sum = 0.0;
    int present = 0;
    for (int l = 1; l <= n_obj; ++l)
        if (total[static_cast<std::size_t>(l)] > 0)
        {
            sum += static_cast<double>(wrong[static_cast<std::size_t>(l)]) / static_cast<double>(total[static_cast<std::size_t>(l)]);
            ++present;
        }
    return sum / present;
}

// ---------------------------------------------------------------------------
// Backpropagation
// ---------------------------------------------------------------------------

struct GradientResult
{
    SegNetParams grad;
    double loss = 0.0;
    LabeledPrediction prediction;
};

// Exact gradient of the mean cross-entropy. The max-pool passes each global
// dimension's gradient to the single point that supplied the maximum.
inline GradientResult gradients(const SegNetParams &params, const PointCloud &cloud, const std::vector<int> &truth)
{
    detail::ForwardState st = detail::forward_state(params, cloud);
    const Eigen::Index M = cloud.features.rows();
    require(truth.size() == static_cast<std::size_t>(M), ErrorKind::dimension_mismatch, "one truth label per point is required");

    GradientResult out;
    out.grad = params.zeros_like();
    out.loss = loss(st.probabilities, truth);

    const auto D = static_cast<Eigen::Index>(params.local_dim());
    const auto G = static_cast<Eigen::Index>(params.global_dim());
    const double inv_m = 1.0 / static_cast<double>(M);
    RVector d_global = RVector::Zero(G);
    std::vector<RVector> d_local(static_cast<std::size_t>(M));

    for (Eigen::Index m = 0; m < M; ++m)
    {
        const auto &acts = st.head[static_cast<std::size_t>(m)];
        RVector delta = st.probabilities.row(m).transpose();
        delta[truth[static_cast<std::size_t>(m)] - 1] -= 1.0;
        delta *= inv_m;
        for (std::size_t li = params.head.size(); li-- > 0;)
        {
            const DenseLayer &layer = params.head[li];
            DenseLayer &g = out.grad.head[li];
            g.W.noalias() += delta * acts[li].transpose();
            g.b += delta;
            RVector d_in = layer.W.transpose() * delta;
            if (li > 0)
                detail::activate_backward(d_in, acts[li], params.activation);
            delta = std::move(d_in);
        }
        d_local[static_cast<std::size_t>(m)] = delta.head(D);
        d_global += delta.tail(G);
    }

    // route the pooled gradient to the argmax points
    std::vector<RVector> d_projected(static_cast<std::size_t>(M));
    for (Eigen::Index j = 0; j < G; ++j)
    {
        auto &dp = d_projected[static_cast<std::size_t>(st.argmax[static_cast<std::size_t>(j)])];
        if (dp.size() == 0)
            dp = RVector::Zero(G);
        dp[j] += d_global[j];
    }

    for (Eigen::Index m = 0; m < M; ++m)
    {
        const auto &acts = st.local[static_cast<std::size_t>(m)];
        RVector delta = std::move(d_local[static_cast<std::size_t>(m)]);
        const RVector &dp = d_projected[static_cast<std::size_t>(m)];
        if (dp.size() > 0)
        {
            out.grad.pool.W.noalias() += dp * acts.back().transpose();
            out.grad.pool.b += dp;
            delta.noalias() += params.pool.W.transpose() * dp;
        }
        for (std::size_t li = params.local.size(); li-- > 0;)
        {
            detail::activate_backward(delta, acts[li + 1], params.activation);
            DenseLayer &g = out.grad.local[li];
            g.W.noalias() += delta * acts[li].transpose();
            g.b += delta;
            if (li > 0)
                delta = params.local[li].W.transpose() * delta;
        }
    }

    out.prediction.labels = detail::argmax_labels(st.probabilities);
    out.prediction.probabilities = std::move(st.probabilities);
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class OptimizerKind
{
    momentum,  // heavy-ball SGD, beta1 is the momentum coefficient
    adam       // beta1 / beta2 are the first / second moment decay rates
};

struct TrainConfig
{
    std::size_t epochs = 500;
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    OptimizerKind optimizer = OptimizerKind::momentum;
    std::uint64_t rng_seed = 1;

    void validate() const
    {
        require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::invalid_argument,
                "learning rate must be >= 0");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::invalid_argument,
                "moment coefficients must lie in [0, 1)");
    }
};

struct LabeledCloud
{
    PointCloud cloud;
    std::vector<int> labels;
};

struct EpochRecord
{
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean per-scene loss seen during the epoch
    double avg_error_rate = 0.0;
};

struct TrainResult
{
    SegNetParams params;
    std::vector<EpochRecord> trace;
};

inline EpochRecord evaluate(const SegNetParams &params, const std::vector<LabeledCloud> &data, int n_obj)
{
    require(!data.empty(), ErrorKind::invalid_argument, "evaluation needs at least one scene");
    EpochRecord rec;
    std::vector<int> pred_all, truth_all;
    for (const auto &s : data)
    {
        const LabeledPrediction p = forward(params, s.cloud);
        rec.loss += loss(p, s.labels);
        pred_all.insert(pred_all.end(), p.labels.begin(), p.labels.end());
        truth_all.insert(truth_all.end(), s.labels.begin(), s.labels.end());
    }
    rec.loss /= static_cast<double>(data.size());
    rec.avg_error_rate = avg_error_rate(pred_all, truth_all, n_obj);
    return rec;
}

// One optimizer step per scene, scenes visited in a seeded shuffled order.
inline TrainResult train(const SegNetParams &initial, const std::vector<LabeledCloud> &data, const TrainConfig &config)
{
    config.validate();
    initial.validate();
    require(!data.empty(), ErrorKind::invalid_argument, "training needs at least one scene");
    const std::size_t M = data.front().cloud.size();
    for (const auto &s : data)
        require(s.cloud.size() == M && s.labels.size() == M, ErrorKind::dimension_mismatch,
                "all training clouds must have the same number of points");

    const int n_obj = static_cast<int>(initial.n_classes());
    TrainResult res;
    res.params = initial;
    RVector theta = initial.to_vector();
    RVector m1 = RVector::Zero(theta.size());
    RVector m2 = RVector::Zero(theta.size());
    std::size_t step = 0;

    std::vector<std::size_t> order(data.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch)
    {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(config.rng_seed, "train/order", epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);

        EpochRecord rec;
        rec.epoch = epoch;
        std::vector<int> pred_all, truth_all;
        for (std::size_t idx : order)
        {
            const LabeledCloud &s = data[idx];
            GradientResult g;
            try
            {
                g = gradients(res.params, s.cloud, s.labels);
            }
            catch (const Error &e)
            {
                if (e.kind() != ErrorKind::numeric)
                    throw;
                throw Error(ErrorKind::training, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(g.loss))
                throw Error(ErrorKind::training, "loss diverged at epoch " + std::to_string(epoch));
            rec.loss += g.loss;
            pred_all.insert(pred_all.end(), g.prediction.labels.begin(), g.prediction.labels.end());
            truth_all.insert(truth_all.end(), s.labels.begin(), s.labels.end());

            if (config.learning_rate == 0.0)
                continue;
            const RVector grad = g.grad.to_vector();
            ++step;
            if (config.optimizer == OptimizerKind::momentum)
            {
                m1 = config.beta1 * m1 + grad;
                theta -= config.learning_rate * m1;
            }
            else
            {
                m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
                m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseAbs2();
                const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
                theta.array() -= config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + 1e-8);
            }
            if (!theta.allFinite())
                throw Error(ErrorKind::training, "parameters diverged at epoch " + std::to_string(epoch));
            res.params.from_vector(theta);
        }
        rec.loss /= static_cast<double>(data.size());
        rec.avg_error_rate = avg_error_rate(pred_all, truth_all, n_obj);
        res.trace.push_back(rec);
    }
    return res;
}

} // namespace metasketch
