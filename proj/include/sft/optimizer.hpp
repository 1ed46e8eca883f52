#pragma once

#include <vector>

#include "sft/network.hpp"
#include "sft/tensor.hpp"

namespace sft {

// SGD with momentum and decoupled-into-gradient weight decay:
//   buf <- momentum*buf + grad + weight_decay*value
//   value <- value - lr*buf
// Gradients are zeroed afterwards, closing one accumulate/step cycle.
template <class T>
void sgd_step(std::vector<Parameter<T>>& params, T lr, T momentum, T weight_decay) {
    for (auto& p : params) {
        T* v = p.value.data.data();
        T* g = p.grad.data.data();
        T* m = p.momentum.data.data();
        const std::int64_t n = p.value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            m[i] = momentum * m[i] + g[i] + weight_decay * v[i];
            v[i] -= lr * m[i];
            g[i] = T(0);
        }
    }
}

template <class T>
void zero_grads(std::vector<Parameter<T>>& params) {
    for (auto& p : params)
        std::fill(p.grad.data.begin(), p.grad.data.end(), T(0));
}

}  // namespace sft
