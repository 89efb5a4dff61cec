#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "run_config.hpp"
#include "table.hpp"

namespace qspan::cli {

struct Options {
  std::uint64_t seed = 0;
  int threads = 1;
};

/// tables[0] is the main output; the rest are side tables.
struct Output {
  std::vector<Table> tables;
  std::vector<std::string> warnings;
};

Output cmd_asymptotics(const RunConfig& cfg, const Options& opt);
Output cmd_distribution(const RunConfig& cfg, const Options& opt);
Output cmd_rank(const RunConfig& cfg, const Options& opt);
Output cmd_ising(const RunConfig& cfg, const Options& opt);
Output cmd_ed(const RunConfig& cfg, const Options& opt);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to slot i by the callee; if several cells throw, the exception of
/// the lowest index is rethrown, so failures do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::min<std::size_t>(std::max(threads, 1), n);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < count; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace qspan::cli
