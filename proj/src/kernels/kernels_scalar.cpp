#include <cmath>
#include <cstddef>

#include "irtmix/kernels.hpp"

namespace irtmix::kern {

namespace {

void exp_n_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void log_n_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
}

void logistic_n_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void shift_scale_add_n_scalar(double base, const double* xi0, double s, const double* xi1,
                              double* theta, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) theta[i] = base + xi0[i] + s * xi1[i];
}

void shift_n_scalar(double base, const double* xi0, double* theta, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) theta[i] = base + xi0[i];
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table{exp_n_scalar, log_n_scalar, logistic_n_scalar,
                         shift_scale_add_n_scalar, shift_n_scalar, "scalar"};
  return table;
}

}  // namespace irtmix::kern
