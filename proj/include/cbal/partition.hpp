#pragma once
#include <string>
#include <vector>

#include "cbal/problem.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Decomposition of the problem into N consensus blocks and M subvectors.
// Subvector ranges are shared by all blocks; constraint rows are owned by
// exactly one block each.
// =======================================================================

enum class Strategy { RoundRobin, Contiguous };

struct ConsensusPartition {
  int N = 1, M = 1;
  std::vector<int> range_lo, range_hi;  // per subvector l, [lo, hi)
  std::vector<int> F_assign, G_assign, H_assign;  // owning block per row

  int subvector_size(int l) const { return range_hi[l] - range_lo[l]; }
};

inline ConsensusPartition build_partition(const Problem& p, int N, int M,
                                          Strategy strategy) {
  if (N < 1) throw SolverError("block count N must be at least 1");
  if (M < 1) throw SolverError("subvector count M must be at least 1");
  if (M > p.n)
    throw SolverError("subvector count M=" + std::to_string(M) +
                      " exceeds dimension n=" + std::to_string(p.n));
  ConsensusPartition part;
  part.N = N;
  part.M = M;
  const int base = p.n / M, rem = p.n % M;
  int start = 0;
  for (int l = 0; l < M; ++l) {
    const int size = base + (l < rem ? 1 : 0);
    part.range_lo.push_back(start);
    part.range_hi.push_back(start + size);
    start += size;
  }
  auto assign = [&](int count) {
    std::vector<int> a(count);
    if (strategy == Strategy::RoundRobin) {
      for (int j = 0; j < count; ++j) a[j] = j % N;
    } else {
      const int per = count ? (count + N - 1) / N : 1;
      for (int j = 0; j < count; ++j) a[j] = std::min(j / per, N - 1);
    }
    return a;
  };
  part.F_assign = assign(static_cast<int>(p.F.size()));
  part.G_assign = assign(p.G.count());
  part.H_assign = assign(p.H.count());
  return part;
}

// Read-only view of one block: the constraint rows it owns, with
// evaluation helpers used by the subproblem, slack, dual, and diagnostic
// code. Holds pointers into the problem; keep the problem alive.
struct BlockView {
  const Problem* problem = nullptr;
  int block = 0;
  std::vector<int> Fidx, Gidx, Hidx;

  int nF() const { return static_cast<int>(Fidx.size()); }
  int nG() const { return static_cast<int>(Gidx.size()); }
  int nH() const { return static_cast<int>(Hidx.size()); }

  const QuadraticConstraint& Frow(int j) const {
    return problem->F[Fidx[j]];
  }
  const AffineForm& Grow(int j) const { return problem->G.rows[Gidx[j]]; }
  const AffineForm& Hrow(int j) const { return problem->H.rows[Hidx[j]]; }

  Vec F_values(const Vec& x) const {
    Vec out(nF());
    for (int j = 0; j < nF(); ++j) out[j] = Frow(j).value(x);
    return out;
  }
  Vec G_values(const Vec& x) const {
    Vec out(nG());
    for (int j = 0; j < nG(); ++j) out[j] = Grow(j).value(x);
    return out;
  }
  Vec H_values(const Vec& x) const {
    Vec out(nH());
    for (int j = 0; j < nH(); ++j) out[j] = Hrow(j).value(x);
    return out;
  }
  // Gradient rows of the block's quadratic constraints, restricted to the
  // coordinate range [lo, hi).
  Mat F_gradients_segment(const Vec& x, int lo, int hi) const {
    Mat out(nF(), hi - lo);
    for (int j = 0; j < nF(); ++j)
      out.row(j) = Frow(j).gradient(x).segment(lo, hi - lo).transpose();
    return out;
  }
};

inline BlockView make_block_view(const Problem& p,
                                 const ConsensusPartition& part, int i) {
  BlockView bv;
  bv.problem = &p;
  bv.block = i;
  for (size_t j = 0; j < part.F_assign.size(); ++j)
    if (part.F_assign[j] == i) bv.Fidx.push_back(static_cast<int>(j));
  for (size_t j = 0; j < part.G_assign.size(); ++j)
    if (part.G_assign[j] == i) bv.Gidx.push_back(static_cast<int>(j));
  for (size_t j = 0; j < part.H_assign.size(); ++j)
    if (part.H_assign[j] == i) bv.Hidx.push_back(static_cast<int>(j));
  return bv;
}

inline std::vector<BlockView> make_block_views(
    const Problem& p, const ConsensusPartition& part) {
  std::vector<BlockView> out;
  out.reserve(part.N);
  for (int i = 0; i < part.N; ++i) out.push_back(make_block_view(p, part, i));
  return out;
}

// Per-block slack box sizes. Each bound dominates the attainable magnitude
// of its residual over the primal box, plus headroom eps, so the upper
// bound is never active along the iteration.
struct SlackBounds {
  std::vector<FamilyVecs> per_block;  // per_block[i][family]

  const Vec& of(int i, Family fam) const { return per_block[i][fam]; }
};

inline SlackBounds slack_upper_bounds(const Problem& p,
                                      const ConsensusPartition& part,
                                      double eps) {
  if (eps < 0) throw SolverError("slack headroom eps must be nonnegative");
  SlackBounds sb;
  sb.per_block.resize(part.N);
  for (int i = 0; i < part.N; ++i) {
    BlockView bv = make_block_view(p, part, i);
    FamilyVecs& b = sb.per_block[i];
    b[FAM_PX] = (2.0 * p.u.array() + eps).matrix();
    b[FAM_NX] = b[FAM_PX];
    b[FAM_F].resize(bv.nF());
    for (int j = 0; j < bv.nF(); ++j)
      b[FAM_F][j] = bv.Frow(j).slack_upper(p.u, eps);
    b[FAM_G].resize(bv.nG());
    for (int j = 0; j < bv.nG(); ++j)
      b[FAM_G][j] = bv.Grow(j).range_on_box(p.u) + eps;
    b[FAM_PH].resize(bv.nH());
    for (int j = 0; j < bv.nH(); ++j)
      b[FAM_PH][j] = bv.Hrow(j).range_on_box(p.u) + eps;
    b[FAM_NH] = b[FAM_PH];
  }
  return sb;
}

}  // namespace cbal
