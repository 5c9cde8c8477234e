#pragma once

#include <string>
#include <vector>

#include "harl/haml.hpp"

namespace harl {

enum class PenaltyMode { max_kl_exact, sum_kl_surrogate };

struct TrustRegionConfig {
  PenaltyMode penalty_mode = PenaltyMode::sum_kl_surrogate;
  // Cap and tolerance of the per-state dual root find.
  int inner_iters = 500;
  double inner_tol = 1e-10;
  int max_outer_iters = 50;
  // Negative: use C from the advantage bound. Otherwise this value is used.
  double penalty_override = -1.0;
  double monotonic_tol = 1e-9;
  bool log_gaps = false;

  void validate() const;
};

class PermutationSampler {
 public:
  // Uniform over Sym(n).
  PermutationSampler(int n, std::uint64_t seed);
  // Always returns `order`.
  explicit PermutationSampler(std::vector<int> order);

  std::vector<int> next();
  bool random() const { return random_; }
  int n() const { return n_; }

 private:
  int n_ = 0;
  bool random_ = true;
  std::vector<int> fixed_;
  Rng rng_;
};

// C = 4 gamma eps / (1 - gamma)^2 with eps = max |A(s, a)|.
double penalty_coefficient(const CooperativeMarkovGame& game, const ValueProfile& profile);

struct AgentStepResult {
  TabularPolicy policy;
  double surrogate = 0.0;   // L of the returned policy
  double penalty = 0.0;     // C * sum_s KL
  double objective = 0.0;   // surrogate - penalty, >= 0 up to round-off
};

AgentStepResult agent_tr_step(const CooperativeMarkovGame& game, const JointPolicy& policy,
                              const ValueProfile& profile, std::span<const int> prefix_agents,
                              const JointPolicy& prefix_policies, int agent,
                              const TrustRegionConfig& config);

struct RoundLog {
  int round = 0;
  std::vector<int> permutation;
  std::vector<double> surrogate;  // per agent, in update order
  std::vector<double> objective;
  double J_before = 0.0;
  double J_after = 0.0;
  std::vector<double> gaps;  // filled when log_gaps is set
};

struct IterationResult {
  std::vector<double> J;  // J_0 .. J_K
  JointPolicy policy;
  std::vector<RoundLog> rounds;
};

IterationResult policy_iteration(const CooperativeMarkovGame& game, const JointPolicy& pi0,
                                 PermutationSampler& sampler, const TrustRegionConfig& config);

// Every agent updates against the old joint policy with an empty prefix.
IterationResult simultaneous_iteration(const CooperativeMarkovGame& game, const JointPolicy& pi0,
                                       const TrustRegionConfig& config);

IterationResult haml_iteration(const CooperativeMarkovGame& game, const JointPolicy& pi0,
                               const std::vector<DriftSpec>& specs, PermutationSampler& sampler,
                               const TrustRegionConfig& config);

std::string iteration_log_json(const IterationResult& result);

}  // namespace harl
