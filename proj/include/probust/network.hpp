#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "probust/common.hpp"
#include "probust/rng.hpp"

// Minimal dense feedforward classifier: deterministic forward pass, exact
// reverse-mode gradients for inputs and parameters, JSON serialization.

namespace probust {

enum class Activation { Relu, Identity };

inline std::string to_string(Activation a) {
    return a == Activation::Relu ? "relu" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation: " + s);
}

// Row-major dense matrix, just enough for small nets.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

struct Layer {
    Matrix weights;  // out x in
    Vec bias;        // out
    Activation activation = Activation::Relu;

    int out_size() const { return weights.rows; }
    int in_size() const { return weights.cols; }
};

struct LabeledPoint {
    Vec features;
    int label = 0;
};

struct Network {
    std::vector<Layer> layers;
    int input_dim = 0;
    int class_count = 0;

    void validate() const {
        if (layers.empty()) throw ConfigError("network has no layers");
        if (input_dim <= 0) throw ConfigError("input_dim must be positive");
        if (class_count < 2) throw ConfigError("class_count must be at least 2");
        int prev = input_dim;
        for (std::size_t li = 0; li < layers.size(); ++li) {
            const Layer& l = layers[li];
            if (l.weights.cols != prev)
                throw ConfigError("layer " + std::to_string(li) + " expects input size " +
                                  std::to_string(l.weights.cols) + ", got " + std::to_string(prev));
            if (static_cast<int>(l.bias.size()) != l.weights.rows)
                throw ConfigError("layer " + std::to_string(li) + " bias/weight size mismatch");
            if (!all_finite(l.weights.data) || !all_finite(l.bias))
                throw ConfigError("layer " + std::to_string(li) + " has non-finite parameters");
            prev = l.weights.rows;
        }
        if (prev != class_count) throw ConfigError("final layer size does not match class_count");
    }
};

// Parameter gradients, mirroring the Network layout.
struct Gradients {
    std::vector<Matrix> d_weights;
    std::vector<Vec> d_bias;
};

namespace detail {

inline void check_input(const Network& net, const Vec& x) {
    if (static_cast<int>(x.size()) != net.input_dim)
        throw ConfigError("input has dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(net.input_dim));
}

struct ForwardTrace {
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post-activation per layer; post.back() = logits
};

inline ForwardTrace forward_trace(const Network& net, const Vec& x) {
    ForwardTrace t;
    t.pre.reserve(net.layers.size());
    t.post.reserve(net.layers.size());
    const Vec* cur = &x;
    for (const Layer& l : net.layers) {
        Vec z(l.out_size());
        for (int i = 0; i < l.out_size(); ++i) {
            double s = l.bias[i];
            for (int j = 0; j < l.in_size(); ++j) s += l.weights(i, j) * (*cur)[j];
            z[i] = s;
        }
        Vec a = z;
        if (l.activation == Activation::Relu)
            for (double& v : a) v = std::max(0.0, v);
        t.pre.push_back(std::move(z));
        t.post.push_back(std::move(a));
        cur = &t.post.back();
    }
    return t;
}

}  // namespace detail

inline Vec forward(const Network& net, const Vec& x) {
    detail::check_input(net, x);
    return detail::forward_trace(net, x).post.back();
}

// Argmax with ties broken toward the lowest class index.
inline int argmax_lowest(const Vec& logits) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

inline int predict(const Network& net, const Vec& x) { return argmax_lowest(forward(net, x)); }

// Log-sum-exp stabilized softmax.
inline Vec softmax(const Vec& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

inline double loss_ce_from_logits(const Vec& logits, int y) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return std::log(z) + m - logits[y];
}

inline double loss_ce(const Network& net, const Vec& x, int y) {
    detail::check_input(net, x);
    if (y < 0 || y >= net.class_count) throw ConfigError("label out of range");
    return loss_ce_from_logits(forward(net, x), y);
}

namespace detail {

// Full reverse pass for softmax cross-entropy; fills whichever outputs are
// requested.
inline double backprop(const Network& net, const Vec& x, int y, Gradients* grads, Vec* grad_x) {
    check_input(net, x);
    if (y < 0 || y >= net.class_count) throw ConfigError("label out of range");
    const ForwardTrace t = forward_trace(net, x);
    const Vec& logits = t.post.back();
    const double loss = loss_ce_from_logits(logits, y);

    Vec delta = softmax(logits);  // dL/dlogits
    delta[y] -= 1.0;

    if (grads) {
        grads->d_weights.assign(net.layers.size(), Matrix());
        grads->d_bias.assign(net.layers.size(), Vec());
    }
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const Layer& l = net.layers[li];
        // delta currently holds dL/d(post-activation of layer li); fold in
        // the activation derivative to get dL/d(pre-activation).
        if (l.activation == Activation::Relu)
            for (int i = 0; i < l.out_size(); ++i)
                if (t.pre[li][i] <= 0.0) delta[i] = 0.0;

        const Vec& input = li == 0 ? x : t.post[li - 1];
        if (grads) {
            Matrix dw(l.out_size(), l.in_size());
            for (int i = 0; i < l.out_size(); ++i)
                for (int j = 0; j < l.in_size(); ++j) dw(i, j) = delta[i] * input[j];
            grads->d_weights[li] = std::move(dw);
            grads->d_bias[li] = delta;
        }
        Vec prev(l.in_size(), 0.0);
        for (int j = 0; j < l.in_size(); ++j) {
            double s = 0.0;
            for (int i = 0; i < l.out_size(); ++i) s += l.weights(i, j) * delta[i];
            prev[j] = s;
        }
        delta = std::move(prev);
    }
    if (grad_x) *grad_x = std::move(delta);

    if (grads)
        for (const auto& gw : grads->d_weights)
            if (!all_finite(gw.data)) throw NumericFault("non-finite parameter gradient");
    if (grad_x && !all_finite(*grad_x)) throw NumericFault("non-finite input gradient");
    return loss;
}

}  // namespace detail

inline Vec grad_input(const Network& net, const Vec& x, int y) {
    Vec g;
    detail::backprop(net, x, y, nullptr, &g);
    return g;
}

inline Gradients grad_params(const Network& net, const Vec& x, int y) {
    Gradients g;
    detail::backprop(net, x, y, &g, nullptr);
    return g;
}

inline double loss_and_grads(const Network& net, const Vec& x, int y, Gradients& grads) {
    return detail::backprop(net, x, y, &grads, nullptr);
}

inline Network sgd_step(const Network& net, const Gradients& grads, double lr) {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    Network out = net;
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
        Layer& l = out.layers[li];
        const Matrix& dw = grads.d_weights[li];
        const Vec& db = grads.d_bias[li];
        for (std::size_t k = 0; k < l.weights.data.size(); ++k)
            l.weights.data[k] -= lr * dw.data[k];
        for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] -= lr * db[k];
        if (!all_finite(l.weights.data) || !all_finite(l.bias))
            throw NumericFault("non-finite parameters after sgd step");
    }
    return out;
}

// Fresh MLP with gaussian init scaled by init_scale/sqrt(fan_in).
inline Network make_mlp(int input_dim, const std::vector<int>& hidden, int class_count,
                        Activation hidden_activation, double init_scale, RngKey key) {
    Network net;
    net.input_dim = input_dim;
    net.class_count = class_count;
    std::vector<int> sizes;
    sizes.push_back(input_dim);
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(class_count);
    for (std::size_t li = 0; li + 1 < sizes.size(); ++li) {
        Layer l;
        l.weights = Matrix(sizes[li + 1], sizes[li]);
        l.bias.assign(sizes[li + 1], 0.0);
        l.activation = (li + 2 == sizes.size()) ? Activation::Identity : hidden_activation;
        PhiloxStream rng(key.sub(0x11a0 + li), 0);
        const double sd = init_scale / std::sqrt(static_cast<double>(sizes[li]));
        for (double& w : l.weights.data) w = sd * rng.next_gaussian();
        net.layers.push_back(std::move(l));
    }
    net.validate();
    return net;
}

inline nlohmann::json model_to_json(const Network& net) {
    net.validate();
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : net.layers) {
        nlohmann::json rows = nlohmann::json::array();
        for (int i = 0; i < l.weights.rows; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int j = 0; j < l.weights.cols; ++j) row.push_back(l.weights(i, j));
            rows.push_back(std::move(row));
        }
        layers.push_back({{"weights", std::move(rows)},
                          {"bias", l.bias},
                          {"activation", to_string(l.activation)}});
    }
    return {{"input_dim", net.input_dim},
            {"class_count", net.class_count},
            {"layers", std::move(layers)}};
}

inline Network model_from_json(const nlohmann::json& j) {
    Network net;
    try {
        net.input_dim = j.at("input_dim").get<int>();
        net.class_count = j.at("class_count").get<int>();
        for (const auto& lj : j.at("layers")) {
            Layer l;
            const auto& rows = lj.at("weights");
            l.weights.rows = static_cast<int>(rows.size());
            l.weights.cols = l.weights.rows > 0 ? static_cast<int>(rows[0].size()) : 0;
            for (const auto& row : rows) {
                if (static_cast<int>(row.size()) != l.weights.cols)
                    throw ConfigError("ragged weight matrix");
                for (const auto& v : row) l.weights.data.push_back(v.get<double>());
            }
            l.bias = lj.at("bias").get<Vec>();
            l.activation = activation_from_string(lj.at("activation").get<std::string>());
            net.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model document: ") + e.what());
    }
    net.validate();
    return net;
}

inline void save_model(const Network& net, std::ostream& sink) {
    sink << model_to_json(net).dump(2) << '\n';
}

inline void save_model(const Network& net, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open model file for writing: " + path);
    save_model(net, f);
}

inline Network load_model(std::istream& source) {
    nlohmann::json j;
    try {
        source >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model document: ") + e.what());
    }
    return model_from_json(j);
}

inline Network load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open model file: " + path);
    return load_model(f);
}

}  // namespace probust
