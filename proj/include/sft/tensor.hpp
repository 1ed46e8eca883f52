#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sft {

// Dense rank-4 array in (batch, channel, height, width) row-major layout.
// The universal value type of every pass; scalar type is float for training
// and double for the gradient-check replay mode.
template <class T>
struct Tensor4 {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n, int c, int h, int w)
        : shape{n, c, h, w},
          data(static_cast<std::size_t>(n) * c * h * w, T(0)) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw std::invalid_argument("tensor: negative extent");
    }

    static Tensor4 zeros(int n, int c, int h, int w) { return Tensor4(n, c, h, w); }

    static Tensor4 full(int n, int c, int h, int w, T v) {
        Tensor4 t(n, c, h, w);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    std::int64_t numel() const {
        return static_cast<std::int64_t>(shape[0]) * shape[1] * shape[2] * shape[3];
    }

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }

    // Elements of one batch entry.
    std::int64_t sample_size() const {
        return static_cast<std::int64_t>(shape[1]) * shape[2] * shape[3];
    }

    T& at(int n_, int c_, int y, int x) {
        return data[((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + y) * shape[3] + x];
    }
    T at(int n_, int c_, int y, int x) const {
        return data[((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + y) * shape[3] + x];
    }

    T* sample_ptr(int n_) { return data.data() + n_ * sample_size(); }
    const T* sample_ptr(int n_) const { return data.data() + n_ * sample_size(); }

    bool same_shape(const Tensor4& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(" << shape[0] << "," << shape[1] << "," << shape[2] << "," << shape[3] << ")";
        return os.str();
    }

    template <class U>
    Tensor4<U> cast() const {
        Tensor4<U> out(shape[0], shape[1], shape[2], shape[3]);
        for (std::size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor4<float>;
using TensorD = Tensor4<double>;

// Named trainable tensor with its gradient and momentum buffer, all
// shape-locked together.
template <class T>
struct Parameter {
    std::string name;
    Tensor4<T> value;
    Tensor4<T> grad;
    Tensor4<T> momentum;

    Parameter() = default;
    Parameter(std::string n, Tensor4<T> v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(value.shape[0], value.shape[1], value.shape[2], value.shape[3]),
          momentum(value.shape[0], value.shape[1], value.shape[2], value.shape[3]) {}

    template <class U>
    Parameter<U> cast() const {
        Parameter<U> p;
        p.name = name;
        p.value = value.template cast<U>();
        p.grad = grad.template cast<U>();
        p.momentum = momentum.template cast<U>();
        return p;
    }
};

}  // namespace sft
