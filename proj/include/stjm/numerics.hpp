#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>

namespace stjm {

// Gauss-Hermite nodes and weights for weight function exp(-x^2), via the
// Golub-Welsch eigen decomposition of the Jacobi matrix.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n);

// Simple deterministic work-sharing loop; results must be written to
// per-index storage so the reduction order stays fixed.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

double log_sum_exp(const Eigen::VectorXd& v);

}  // namespace stjm
