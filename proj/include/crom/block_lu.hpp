#pragma once

#include "crom/sparse_lu.hpp"

#include <map>
#include <vector>

namespace crom {

/// Direct LU over a fixed partition of the unknowns into dense blocks. Blocks are
/// eliminated in minimum-degree order of the block graph; pivoting happens inside each
/// diagonal block only.
class BlockSparseLU : public LinearSolver {
 public:
  /// `blocks[b]` lists the global indices of block b; together they must cover
  /// 0..n-1 exactly once.
  explicit BlockSparseLU(std::vector<std::vector<Index>> blocks);

  Index size() const { return static_cast<Index>(block_of_.size()); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  /// Elimination order (block ids), fixed at the first factorization.
  const std::vector<int>& order() const { return order_; }

  /// Throws crom::Error when a pivot block has reciprocal condition below 1e-14.
  void factorize(const SparseMatrix& matrix) override;
  Vector solve(const Vector& rhs) const override;

 private:
  void choose_order(const std::vector<std::vector<int>>& adjacency);

  std::vector<std::vector<Index>> blocks_;
  std::vector<int> block_of_;
  std::vector<int> local_of_;
  std::vector<int> order_;     // position -> block
  std::vector<int> position_;  // block -> position

  // Factors indexed by elimination position.
  std::vector<Eigen::PartialPivLU<Matrix>> pivots_;
  std::vector<std::map<int, Matrix>> lower_;  // lower_[i][k], k < i: multiplier rows
  std::vector<std::map<int, Matrix>> upper_;  // upper_[k][j], j > k: D_k^{-1} A_kj
  bool factored_ = false;
};

}  // namespace crom
