#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace afen::nn {

enum class Mode { Train, Infer };

/// NHWC tensor (batch, height, width, channels).
template <typename T>
struct Tensor {
    std::array<std::size_t, 4> dims{0, 0, 0, 0};
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t b, std::size_t h, std::size_t w, std::size_t c, T fill = T(0))
        : dims{b, h, w, c}, data(b * h * w * c, fill) {}

    std::size_t batch() const noexcept { return dims[0]; }
    std::size_t height() const noexcept { return dims[1]; }
    std::size_t width() const noexcept { return dims[2]; }
    std::size_t channels() const noexcept { return dims[3]; }
    std::size_t sample_size() const noexcept { return dims[1] * dims[2] * dims[3]; }
    std::size_t size() const noexcept { return data.size(); }

    std::size_t index(std::size_t b, std::size_t h, std::size_t w, std::size_t c) const noexcept {
        return ((b * dims[1] + h) * dims[2] + w) * dims[3] + c;
    }
    T& at(std::size_t b, std::size_t h, std::size_t w, std::size_t c) noexcept { return data[index(b, h, w, c)]; }
    T at(std::size_t b, std::size_t h, std::size_t w, std::size_t c) const noexcept { return data[index(b, h, w, c)]; }

    std::span<T> sample(std::size_t b) noexcept { return {data.data() + b * sample_size(), sample_size()}; }
    std::span<const T> sample(std::size_t b) const noexcept {
        return {data.data() + b * sample_size(), sample_size()};
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::array<std::size_t, 4>& dims);

/// A trainable array with its gradient accumulator.
template <typename T>
struct Param {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<T> value;
    std::vector<T> grad;

    Param() = default;
    Param(std::string n, std::vector<std::size_t> d) : name(std::move(n)), dims(std::move(d)) {
        std::size_t count = 1;
        for (auto x : dims) count *= x;
        value.assign(count, T(0));
        grad.assign(count, T(0));
    }
};

/// Non-trainable persistent state (batch-norm running statistics).
template <typename T>
struct Buffer {
    std::string name;
    std::vector<T> value;
};

}  // namespace afen::nn
