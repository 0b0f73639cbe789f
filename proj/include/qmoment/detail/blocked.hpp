#pragma once

// Node loops split into fixed-size blocks. Blocks may run on any number of
// threads; partial results are combined serially in block order, so the
// floating-point summation order never depends on the thread count.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <vector>

namespace qmoment::detail {

inline constexpr std::size_t kNodeBlock = 128;

/// fn(begin, end, Partial&) accumulates nodes [begin, end) into a partial
/// that starts as a copy of init; combine(acc, partial) folds them in order.
template <class Partial, class BlockFn, class Combine>
Partial blocked_reduce(std::size_t n, const Partial& init, BlockFn&& fn, Combine&& combine) {
  const std::size_t nblocks = (n + kNodeBlock - 1) / kNodeBlock;
  std::vector<Partial> parts(nblocks, init);
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (long b = 0; b < static_cast<long>(nblocks); ++b) {
    try {
      const std::size_t begin = static_cast<std::size_t>(b) * kNodeBlock;
      fn(begin, std::min(n, begin + kNodeBlock), parts[static_cast<std::size_t>(b)]);
    } catch (...) {
#pragma omp critical(qmoment_blocked_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  Partial acc = init;
  for (auto& p : parts) combine(acc, p);
  return acc;
}

/// Independent per-node work with no reduction.
template <class NodeFn>
void blocked_for(std::size_t n, NodeFn&& fn) {
  const std::size_t nblocks = (n + kNodeBlock - 1) / kNodeBlock;
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (long b = 0; b < static_cast<long>(nblocks); ++b) {
    try {
      const std::size_t begin = static_cast<std::size_t>(b) * kNodeBlock;
      const std::size_t end = std::min(n, begin + kNodeBlock);
      for (std::size_t j = begin; j < end; ++j) fn(j);
    } catch (...) {
#pragma omp critical(qmoment_blocked_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace qmoment::detail
