#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace afen {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace afen
