#pragma once

#include <stdexcept>
#include <string>

#include "sft/network.hpp"

namespace sft {

inline constexpr std::uint8_t kArchLenet5_64 = 1;
inline constexpr std::uint8_t kArchAlexnetS = 2;

// LeNet-5 channel plan (6/16/120) adapted to 1x64x64 inputs; the classifier
// sizes follow from the shape chain 6x60x60 -> 6x30x30 -> 16x26x26 ->
// 16x13x13 -> 120x9x9 -> 9720 -> 84 -> K.
template <class T = float>
Network<T> build_lenet5_64(int K) {
    if (K < 2) throw std::invalid_argument("build_lenet5_64: K must be >= 2");
    Network<T> net;
    net.arch_id = "lenet5-64";
    net.arch_code = kArchLenet5_64;
    net.num_classes = K;
    net.input_shape = {1, 64, 64};
    int ch = detail::add_conv(net, "conv1", 1, 6, 5, 1, 0);
    detail::add_relu(net);
    detail::add_pool(net, 2, 2);
    ch = detail::add_conv(net, "conv2", ch, 16, 5, 1, 0);
    detail::add_relu(net);
    detail::add_pool(net, 2, 2);
    ch = detail::add_conv(net, "conv3", ch, 120, 5, 1, 0);
    detail::add_relu(net);
    detail::add_flatten(net);
    int f = detail::add_linear(net, "fc1", 120 * 9 * 9, 84);
    detail::add_relu(net);
    detail::add_linear(net, "fc2", f, K);
    infer_shapes(net);  // validates the chain
    return net;
}

// Reduced AlexNet-style network for 1x64x64 inputs: five conv stages
// (32,64,96,96,64), first conv 5x5 stride 2 pad 2, the rest 3x3 stride 1
// pad 1; 2x2 pools after stages 1, 2 and 5; two hidden 256-wide linears.
// Shape chain: 32x32x32 -> 32x16x16 -> 64x16x16 -> 64x8x8 -> 96x8x8 ->
// 96x8x8 -> 64x8x8 -> 64x4x4 -> 1024 -> 256 -> 256 -> K.
template <class T = float>
Network<T> build_alexnet_s(int K) {
    if (K < 2) throw std::invalid_argument("build_alexnet_s: K must be >= 2");
    Network<T> net;
    net.arch_id = "alexnet-s";
    net.arch_code = kArchAlexnetS;
    net.num_classes = K;
    net.input_shape = {1, 64, 64};
    int ch = detail::add_conv(net, "conv1", 1, 32, 5, 2, 2);
    detail::add_relu(net);
    detail::add_pool(net, 2, 2);
    ch = detail::add_conv(net, "conv2", ch, 64, 3, 1, 1);
    detail::add_relu(net);
    detail::add_pool(net, 2, 2);
    ch = detail::add_conv(net, "conv3", ch, 96, 3, 1, 1);
    detail::add_relu(net);
    ch = detail::add_conv(net, "conv4", ch, 96, 3, 1, 1);
    detail::add_relu(net);
    ch = detail::add_conv(net, "conv5", ch, 64, 3, 1, 1);
    detail::add_relu(net);
    detail::add_pool(net, 2, 2);
    detail::add_flatten(net);
    int f = detail::add_linear(net, "fc1", 64 * 4 * 4, 256);
    detail::add_relu(net);
    f = detail::add_linear(net, "fc2", f, 256);
    detail::add_relu(net);
    detail::add_linear(net, "fc3", f, K);
    infer_shapes(net);
    return net;
}

template <class T = float>
Network<T> build_arch(const std::string& arch, int K) {
    if (arch == "lenet5") return build_lenet5_64<T>(K);
    if (arch == "alexnet_s") return build_alexnet_s<T>(K);
    throw std::invalid_argument("unknown architecture '" + arch +
                                "' (expected lenet5 or alexnet_s)");
}

}  // namespace sft
