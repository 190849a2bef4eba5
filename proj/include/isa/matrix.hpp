#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace isa {

/// Dense row-major matrix of binary32 values, the in-memory image of an EMB1
/// payload.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("matrix: data size does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  const std::vector<float>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

}  // namespace isa
