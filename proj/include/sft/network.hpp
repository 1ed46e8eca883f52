#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sft/ops.hpp"
#include "sft/rng.hpp"
#include "sft/tensor.hpp"

namespace sft {

enum class LayerKind { Conv, Relu, Pool, Flatten, Linear };

struct LayerDesc {
    LayerKind kind;
    int out_channels = 0;   // conv
    int ksize = 0;          // conv, pool
    int stride = 1;         // conv, pool
    int pad = 0;            // conv
    int out_features = 0;   // linear
    int weight_idx = -1;    // conv, linear; bias sits at weight_idx + 1
};

// Feedforward network description: ordered layer descriptors plus the
// parameter set they index into. Forward shape inference must succeed from
// the declared input shape through to num_classes logits.
template <class T>
struct Network {
    std::string arch_id;
    std::uint8_t arch_code = 0;
    int num_classes = 0;
    std::array<int, 3> input_shape{1, 64, 64};  // (C,H,W)
    std::vector<LayerDesc> layers;
    std::vector<Parameter<T>> params;

    int layer_count() const { return static_cast<int>(layers.size()); }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& p : params) n += p.value.numel();
        return n;
    }

    template <class U>
    Network<U> cast() const {
        Network<U> out;
        out.arch_id = arch_id;
        out.arch_code = arch_code;
        out.num_classes = num_classes;
        out.input_shape = input_shape;
        out.layers = layers;
        out.params.reserve(params.size());
        for (const auto& p : params) out.params.push_back(p.template cast<U>());
        return out;
    }
};

// Per-boundary (C,H,W) shapes h_0..h_L for a single sample.
template <class T>
std::vector<std::array<int, 3>> infer_shapes(const Network<T>& net) {
    std::vector<std::array<int, 3>> shapes;
    shapes.push_back(net.input_shape);
    for (const auto& l : net.layers) {
        auto [c, h, w] = shapes.back();
        switch (l.kind) {
            case LayerKind::Conv: {
                const auto& wt = net.params[l.weight_idx].value;
                if (wt.c() != c)
                    throw std::runtime_error("infer_shapes: conv channel mismatch");
                shapes.push_back({l.out_channels,
                                  conv_out_extent(h, l.ksize, l.stride, l.pad),
                                  conv_out_extent(w, l.ksize, l.stride, l.pad)});
                break;
            }
            case LayerKind::Pool:
                shapes.push_back({c, (h - l.ksize) / l.stride + 1, (w - l.ksize) / l.stride + 1});
                break;
            case LayerKind::Relu:
                shapes.push_back({c, h, w});
                break;
            case LayerKind::Flatten:
                shapes.push_back({c * h * w, 1, 1});
                break;
            case LayerKind::Linear:
                if (c * h * w != net.params[l.weight_idx].value.c())
                    throw std::runtime_error("infer_shapes: linear feature mismatch");
                shapes.push_back({l.out_features, 1, 1});
                break;
        }
        if (shapes.back()[1] < 1 || shapes.back()[2] < 1)
            throw std::runtime_error("infer_shapes: collapsed spatial extent");
    }
    return shapes;
}

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases, drawn in parameter
// order from one derived stream.
template <class T>
void init_params(Network<T>& net, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, /*tag=*/0x1717);
    for (auto& l : net.layers) {
        if (l.weight_idx < 0) continue;
        auto& w = net.params[l.weight_idx].value;
        int fan_in = 0, fan_out = 0;
        if (l.kind == LayerKind::Conv) {
            fan_in = w.c() * w.h() * w.w();
            fan_out = w.n() * w.h() * w.w();
        } else {
            fan_in = w.c();
            fan_out = w.n();
        }
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
        for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
        auto& b = net.params[l.weight_idx + 1].value;
        std::fill(b.data.begin(), b.data.end(), T(0));
    }
}

namespace detail {

template <class T>
int add_conv(Network<T>& net, const std::string& name, int in_ch, int out_ch,
             int k, int stride, int pad) {
    LayerDesc l;
    l.kind = LayerKind::Conv;
    l.out_channels = out_ch;
    l.ksize = k;
    l.stride = stride;
    l.pad = pad;
    l.weight_idx = static_cast<int>(net.params.size());
    net.params.emplace_back(name + ".weight", Tensor4<T>(out_ch, in_ch, k, k));
    net.params.emplace_back(name + ".bias", Tensor4<T>(out_ch, 1, 1, 1));
    net.layers.push_back(l);
    return out_ch;
}

template <class T>
int add_linear(Network<T>& net, const std::string& name, int in_f, int out_f) {
    LayerDesc l;
    l.kind = LayerKind::Linear;
    l.out_features = out_f;
    l.weight_idx = static_cast<int>(net.params.size());
    net.params.emplace_back(name + ".weight", Tensor4<T>(out_f, in_f, 1, 1));
    net.params.emplace_back(name + ".bias", Tensor4<T>(out_f, 1, 1, 1));
    net.layers.push_back(l);
    return out_f;
}

template <class T>
void add_relu(Network<T>& net) {
    net.layers.push_back(LayerDesc{LayerKind::Relu});
}

template <class T>
void add_pool(Network<T>& net, int k, int stride) {
    LayerDesc l;
    l.kind = LayerKind::Pool;
    l.ksize = k;
    l.stride = stride;
    net.layers.push_back(l);
}

template <class T>
void add_flatten(Network<T>& net) {
    net.layers.push_back(LayerDesc{LayerKind::Flatten});
}

}  // namespace detail

}  // namespace sft
