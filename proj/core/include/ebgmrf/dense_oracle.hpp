#pragma once

#include <Eigen/Dense>

#include "ebgmrf/system.hpp"

namespace ebgmrf {

/// Dense reference quantities for small systems (K N <= 6000): the assembled
/// Q~, its log-determinant, inverse and exact traces. Validation-only; the
/// production path never materializes Q~.
class DenseOracle {
 public:
  explicit DenseOracle(const PosteriorSystem& system, Eigen::Index max_dim = 6000);

  const Eigen::MatrixXd& matrix() const { return q_; }
  double log_det() const;
  const Eigen::MatrixXd& inverse() const;
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& b) const;
  double trace_inv_times(const Eigen::Ref<const Eigen::MatrixXd>& t) const;

  /// Dense Q_k and its core factor (K for M kinds, G for ICAR, I for GS).
  static Eigen::MatrixXd dense_prior(const PrecisionOperator& op);
  static Eigen::MatrixXd dense_core(const PrecisionOperator& op);

 private:
  Eigen::MatrixXd q_;
  mutable Eigen::LLT<Eigen::MatrixXd> llt_;
  mutable bool have_llt_ = false;
  mutable Eigen::MatrixXd inv_;
  mutable bool have_inv_ = false;

  const Eigen::LLT<Eigen::MatrixXd>& llt() const;
};

}  // namespace ebgmrf
