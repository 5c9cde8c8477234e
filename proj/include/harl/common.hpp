#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace harl {

enum class ErrorCode {
  invalid_argument = 1,
  config = 2,
  numeric = 3,
  convergence = 4,
  check_failed = 5,
  io = 6,
};

// Single exception type for the library. The code maps onto the C API
// status values and the CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool cond, const std::string& message) {
  if (!cond) fail(ErrorCode::invalid_argument, message);
}

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent per-worker seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

double uniform01(Rng& rng);
double normal01(Rng& rng);
int sample_index(std::span<const double> probs, Rng& rng);

std::vector<int> random_permutation(int n, Rng& rng);

}  // namespace harl
