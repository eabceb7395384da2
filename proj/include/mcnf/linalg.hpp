#ifndef MCNF_LINALG_HPP
#define MCNF_LINALG_HPP

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mcnf {

// Row-major dense matrix of doubles. Small helper, no BLAS.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_row(const std::vector<double>& v) {
    Matrix m(1, v.size());
    m.data_ = v;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::vector<double> row_vec(std::size_t i) const {
    return std::vector<double>(row(i), row(i) + cols_);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void check_width(const Matrix& x, std::size_t expected,
                        const char* what) {
  if (x.cols() != expected) {
    throw std::invalid_argument(std::string(what) + ": expected width " +
                                std::to_string(expected) + ", got " +
                                std::to_string(x.cols()));
  }
}

}  // namespace mcnf

#endif
