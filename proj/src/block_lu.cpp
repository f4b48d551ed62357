#include "crom/block_lu.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace crom {

BlockSparseLU::BlockSparseLU(std::vector<std::vector<Index>> blocks) : blocks_(std::move(blocks)) {
  Index n = 0;
  for (const auto& b : blocks_) n += static_cast<Index>(b.size());
  block_of_.assign(n, -1);
  local_of_.assign(n, -1);
  for (int b = 0; b < num_blocks(); ++b) {
    require(!blocks_[b].empty(), "block LU: empty block");
    for (std::size_t l = 0; l < blocks_[b].size(); ++l) {
      const Index g = blocks_[b][l];
      require(g >= 0 && g < n && block_of_[g] < 0, "block LU: blocks must partition the unknowns");
      block_of_[g] = b;
      local_of_[g] = static_cast<int>(l);
    }
  }
}

void BlockSparseLU::choose_order(const std::vector<std::vector<int>>& adjacency) {
  const int nb = num_blocks();
  std::vector<std::set<int>> graph(nb);
  for (int b = 0; b < nb; ++b)
    for (int c : adjacency[b])
      if (c != b) {
        graph[b].insert(c);
        graph[c].insert(b);
      }
  std::vector<bool> done(nb, false);
  order_.clear();
  for (int step = 0; step < nb; ++step) {
    int best = -1;
    for (int b = 0; b < nb; ++b)
      if (!done[b] && (best < 0 || graph[b].size() < graph[best].size())) best = b;
    done[best] = true;
    order_.push_back(best);
    const std::vector<int> neighbours(graph[best].begin(), graph[best].end());
    for (int a : neighbours) {
      graph[a].erase(best);
      for (int c : neighbours)
        if (c != a) graph[a].insert(c);
    }
    graph[best].clear();
  }
  position_.assign(nb, -1);
  for (int p = 0; p < nb; ++p) position_[order_[p]] = p;
}

void BlockSparseLU::factorize(const SparseMatrix& matrix) {
  require(matrix.rows() == size() && matrix.cols() == size(), "block LU: matrix size does not match the partition");
  const int nb = num_blocks();
  factored_ = false;

  std::unordered_map<long long, Matrix> work;
  auto key = [nb](int i, int j) { return static_cast<long long>(i) * nb + j; };
  for (Index col = 0; col < matrix.outerSize(); ++col) {
    const int bj = block_of_[col];
    const int lj = local_of_[col];
    for (SparseMatrix::InnerIterator it(matrix, col); it; ++it) {
      const int bi = block_of_[it.row()];
      auto [slot, inserted] = work.try_emplace(key(bi, bj));
      if (inserted) slot->second = Matrix::Zero(blocks_[bi].size(), blocks_[bj].size());
      slot->second(local_of_[it.row()], lj) += it.value();
    }
  }
  if (order_.empty()) {
    std::vector<std::vector<int>> adjacency(nb);
    for (const auto& [k, block] : work) adjacency[k / nb].push_back(static_cast<int>(k % nb));
    choose_order(adjacency);
  }

  // Re-key the blocks by elimination position.
  std::vector<std::map<int, Matrix>> rows(nb);
  std::vector<std::set<int>> cols(nb);
  for (auto& [k, block] : work) {
    const int i = position_[k / nb], j = position_[k % nb];
    rows[i].emplace(j, std::move(block));
    cols[j].insert(i);
  }
  work.clear();

  pivots_.assign(nb, {});
  lower_.assign(nb, {});
  upper_.assign(nb, {});
  for (int k = 0; k < nb; ++k) {
    auto diag = rows[k].find(k);
    require(diag != rows[k].end(), "singular factorization (empty pivot block)");
    pivots_[k].compute(diag->second);
    const double rcond = pivots_[k].rcond();
    if (!(rcond >= 1e-14)) throw Error("singular factorization (pivot block rcond " + std::to_string(rcond) + ")");

    std::vector<int> right;
    for (auto& [j, block] : rows[k])
      if (j > k) {
        upper_[k].emplace(j, pivots_[k].solve(block));
        right.push_back(j);
      }
    for (int i : cols[k]) {
      if (i <= k) continue;
      auto lik = rows[i].find(k);
      const Matrix& l = lik->second;
      for (int j : right) {
        auto [slot, inserted] = rows[i].try_emplace(j);
        if (inserted) {
          slot->second = Matrix::Zero(l.rows(), upper_[k].at(j).cols());
          cols[j].insert(i);
        }
        slot->second.noalias() -= l * upper_[k].at(j);
      }
      lower_[i].emplace(k, std::move(lik->second));
      rows[i].erase(lik);
    }
    rows[k].clear();
  }
  factored_ = true;
}

Vector BlockSparseLU::solve(const Vector& rhs) const {
  require(factored_, "block LU: solve before factorize");
  require(rhs.size() == size(), "block LU: right-hand side size mismatch");
  const int nb = num_blocks();
  std::vector<Vector> y(nb);
  for (int k = 0; k < nb; ++k) {
    const auto& idx = blocks_[order_[k]];
    Vector b(static_cast<Index>(idx.size()));
    for (std::size_t l = 0; l < idx.size(); ++l) b[l] = rhs[idx[l]];
    for (const auto& [j, block] : lower_[k]) b.noalias() -= block * y[j];
    y[k] = pivots_[k].solve(b);
  }
  for (int k = nb - 1; k >= 0; --k)
    for (const auto& [j, block] : upper_[k]) y[k].noalias() -= block * y[j];
  Vector x(size());
  for (int k = 0; k < nb; ++k) {
    const auto& idx = blocks_[order_[k]];
    for (std::size_t l = 0; l < idx.size(); ++l) x[idx[l]] = y[k][l];
  }
  return x;
}

}  // namespace crom
