#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sft/network.hpp"
#include "sft/ops.hpp"
#include "sft/tensor.hpp"

namespace sft {

enum class OpKind { Conv, Relu, Pool, Flatten, Linear, GateModulate };

// Reverse-mode computation tape. Nodes are appended in execution order, so
// the list is topologically sorted by construction; values[] is the backing
// store of every intermediate activation (saved for backward and for replay
// verification). Gating tensors on GateModulate nodes are constants: backward
// treats them as fixed coefficients.
template <class T>
struct Tape {
    struct Node {
        OpKind kind;
        int layer = -1;  // index into Network.layers, -1 for GateModulate
        int in = -1;
        int out = -1;
        std::vector<std::int32_t> argmax;  // Pool
        Tensor4<T> gate;                   // GateModulate
        T alpha{}, beta{};                 // GateModulate
    };

    std::vector<Tensor4<T>> values;
    std::vector<Node> nodes;
    // value id of h_i for every layer boundary i = 0..L (modulation nodes do
    // not create boundaries)
    std::vector<int> boundary_ids;
    // node id per network layer (for pool argmax lookup)
    std::vector<int> layer_node_ids;

    bool has_loss = false;
    std::vector<int> labels;
    Tensor4<T> probs;
    T loss{};

    int logits_id() const { return boundary_ids.empty() ? -1 : boundary_ids.back(); }
    const Tensor4<T>& logits() const { return values[logits_id()]; }

    const Tensor4<T>& h(int boundary) const { return values[boundary_ids[boundary]]; }

    const std::vector<std::int32_t>& pool_argmax(int layer) const {
        return nodes[layer_node_ids[layer]].argmax;
    }
};

// Per-layer non-negative gating activities g_0..g_L, shape-matched to the
// forward boundaries.
template <class T>
struct GatingTrace {
    std::vector<Tensor4<T>> g;  // indexed by boundary, 0..L
};

namespace detail {

template <class T>
Tensor4<T> flatten_view(const Tensor4<T>& x) {
    Tensor4<T> out;
    out.shape = {x.n(), x.c() * x.h() * x.w(), 1, 1};
    out.data = x.data;
    return out;
}

template <class T>
void run_layer(const Network<T>& net, int li, Tape<T>& tape) {
    const LayerDesc& l = net.layers[li];
    typename Tape<T>::Node node;
    node.kind = OpKind::Relu;
    node.layer = li;
    node.in = static_cast<int>(tape.values.size()) - 1;
    const Tensor4<T>& x = tape.values.back();
    Tensor4<T> y;
    switch (l.kind) {
        case LayerKind::Conv:
            node.kind = OpKind::Conv;
            y = conv2d_forward(x, net.params[l.weight_idx].value,
                               net.params[l.weight_idx + 1].value, l.stride, l.pad);
            break;
        case LayerKind::Relu:
            node.kind = OpKind::Relu;
            y = relu_forward(x);
            break;
        case LayerKind::Pool:
            node.kind = OpKind::Pool;
            y = maxpool_forward(x, l.ksize, l.stride, &node.argmax);
            break;
        case LayerKind::Flatten:
            node.kind = OpKind::Flatten;
            y = flatten_view(x);
            break;
        case LayerKind::Linear:
            node.kind = OpKind::Linear;
            y = linear_forward(x, net.params[l.weight_idx].value,
                               net.params[l.weight_idx + 1].value);
            break;
    }
    tape.values.push_back(std::move(y));
    const int out_id = static_cast<int>(tape.values.size()) - 1;
    node.out = out_id;
    tape.layer_node_ids[li] = static_cast<int>(tape.nodes.size());
    tape.nodes.push_back(std::move(node));
    tape.boundary_ids.push_back(out_id);
}

}  // namespace detail

// First (plain) forward pass: records one node per layer, boundaries are
// exactly h_0..h_L.
template <class T>
Tape<T> forward(const Network<T>& net, Tensor4<T> x) {
    Tape<T> tape;
    tape.layer_node_ids.assign(net.layers.size(), -1);
    tape.values.push_back(std::move(x));
    tape.boundary_ids.push_back(0);
    for (int li = 0; li < net.layer_count(); ++li) detail::run_layer(net, li, tape);
    return tape;
}

// Iterative (gated) forward pass: before every layer, the running activation
// is modulated by alpha*(h .* gate[i]) + beta*h with gate[i] the normalized
// gating at boundary i. Gates enter the tape as constants.
template <class T>
Tape<T> forward_gated(const Network<T>& net, Tensor4<T> x,
                      const GatingTrace<T>& gates, T alpha, T beta) {
    if (static_cast<int>(gates.g.size()) != net.layer_count() + 1)
        throw std::invalid_argument("forward_gated: gating trace has " +
                                    std::to_string(gates.g.size()) + " layers, network needs " +
                                    std::to_string(net.layer_count() + 1));
    Tape<T> tape;
    tape.layer_node_ids.assign(net.layers.size(), -1);
    tape.values.push_back(std::move(x));
    tape.boundary_ids.push_back(0);
    for (int li = 0; li < net.layer_count(); ++li) {
        typename Tape<T>::Node mod;
        mod.kind = OpKind::GateModulate;
        mod.in = static_cast<int>(tape.values.size()) - 1;
        mod.gate = gates.g[li];
        mod.alpha = alpha;
        mod.beta = beta;
        tape.values.push_back(
            gate_modulate_forward(tape.values.back(), mod.gate, alpha, beta));
        mod.out = static_cast<int>(tape.values.size()) - 1;
        tape.nodes.push_back(std::move(mod));
        detail::run_layer(net, li, tape);
    }
    return tape;
}

// Attaches the softmax cross-entropy head; returns mean loss.
template <class T>
T forward_loss(Tape<T>& tape, const std::vector<int>& labels) {
    tape.labels = labels;
    tape.loss = softmax_xent_forward(tape.values[tape.logits_id()], labels, &tape.probs);
    tape.has_loss = true;
    return tape.loss;
}

// Reverse sweep. Parameter gradients ACCUMULATE (+=); callers zero them via
// the optimizer step. loss_scale multiplies the loss seed (used for the
// alpha-weighted second term of the training objective).
template <class T>
void backward(Network<T>& net, const Tape<T>& tape, T loss_scale = T(1)) {
    if (tape.nodes.empty())
        throw std::runtime_error("backward: empty tape");
    if (!tape.has_loss)
        throw std::runtime_error("backward: tape has no loss head");

    std::vector<Tensor4<T>> dvals(tape.values.size());
    auto grad_of = [&](int id) -> Tensor4<T>& {
        if (dvals[id].numel() == 0) {
            const auto& s = tape.values[id].shape;
            dvals[id] = Tensor4<T>(s[0], s[1], s[2], s[3]);
        }
        return dvals[id];
    };

    softmax_xent_backward(tape.probs, tape.labels, loss_scale,
                          &grad_of(tape.logits_id()));

    for (int ni = static_cast<int>(tape.nodes.size()) - 1; ni >= 0; --ni) {
        const auto& node = tape.nodes[ni];
        if (dvals[node.out].numel() == 0) continue;  // no gradient flowed here
        const Tensor4<T>& dout = dvals[node.out];
        const Tensor4<T>& x = tape.values[node.in];
        switch (node.kind) {
            case OpKind::Conv: {
                const LayerDesc& l = net.layers[node.layer];
                conv2d_backward(x, net.params[l.weight_idx].value, l.stride, l.pad, dout,
                                &grad_of(node.in), &net.params[l.weight_idx].grad,
                                &net.params[l.weight_idx + 1].grad);
                break;
            }
            case OpKind::Relu:
                relu_backward(x, dout, &grad_of(node.in));
                break;
            case OpKind::Pool:
                maxpool_backward(node.argmax, dout, &grad_of(node.in));
                break;
            case OpKind::Flatten: {
                Tensor4<T>& dx = grad_of(node.in);
                for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dout.data[i];
                break;
            }
            case OpKind::Linear: {
                const LayerDesc& l = net.layers[node.layer];
                linear_backward(x, net.params[l.weight_idx].value, dout, &grad_of(node.in),
                                &net.params[l.weight_idx].grad,
                                &net.params[l.weight_idx + 1].grad);
                break;
            }
            case OpKind::GateModulate:
                gate_modulate_backward(node.gate, node.alpha, node.beta, dout,
                                       &grad_of(node.in));
                break;
        }
    }
}

// Re-runs every node from its recorded inputs and compares against the
// recorded outputs bit for bit.
template <class T>
bool replay_bitexact(const Network<T>& net, const Tape<T>& tape) {
    for (const auto& node : tape.nodes) {
        const Tensor4<T>& x = tape.values[node.in];
        Tensor4<T> y;
        switch (node.kind) {
            case OpKind::Conv: {
                const LayerDesc& l = net.layers[node.layer];
                y = conv2d_forward(x, net.params[l.weight_idx].value,
                                   net.params[l.weight_idx + 1].value, l.stride, l.pad);
                break;
            }
            case OpKind::Relu:
                y = relu_forward(x);
                break;
            case OpKind::Pool: {
                std::vector<std::int32_t> am;
                const LayerDesc& l = net.layers[node.layer];
                y = maxpool_forward(x, l.ksize, l.stride, &am);
                if (am != node.argmax) return false;
                break;
            }
            case OpKind::Flatten:
                y = detail::flatten_view(x);
                break;
            case OpKind::Linear: {
                const LayerDesc& l = net.layers[node.layer];
                y = linear_forward(x, net.params[l.weight_idx].value,
                                   net.params[l.weight_idx + 1].value);
                break;
            }
            case OpKind::GateModulate:
                y = gate_modulate_forward(x, node.gate, node.alpha, node.beta);
                break;
        }
        if (y.shape != tape.values[node.out].shape) return false;
        if (y.data != tape.values[node.out].data) return false;
    }
    return true;
}

}  // namespace sft
