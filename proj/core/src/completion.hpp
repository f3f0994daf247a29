#pragma once

// Conditional-Gaussian completion of incomplete rows, shared by the EM and
// GSE updates.

#include "cellguard/data_matrix.hpp"
#include "cellguard/robust_scale.hpp"

#include <Eigen/Core>

#include <vector>

namespace cellguard::detail {

struct Completion {
  Eigen::MatrixXd x_hat;                       // rows completed by E[x_m | x_o]
  std::vector<Eigen::MatrixXd> missing_cov;    // per pattern: Cov[x_m | x_o]
  Eigen::VectorXd d;                           // partial distance of each row
  Eigen::VectorXd log_det;                     // log |Sigma^(u_i)| of each row
};

// Throws SingularMatrixError when an observed block is not positive definite.
Completion complete_rows(const DataMatrix& x, const MaskPatterns& patterns,
                         const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

// log |A^(u_i)| for every row.
Eigen::VectorXd observed_log_dets(const MaskPatterns& patterns, const Eigen::MatrixXd& a);

// Adds scale * C to the missing-by-missing block of `target`.
void add_missing_block(Eigen::MatrixXd& target, const MaskPatterns::Pattern& pat,
                       const Eigen::MatrixXd& c, double scale);

}  // namespace cellguard::detail
