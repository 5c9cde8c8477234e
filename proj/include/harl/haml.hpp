#pragma once

#include <string>
#include <vector>

#include "harl/oracle.hpp"

namespace harl {

enum class DriftKind { trivial, kl, happo_clip, negated_kl };
enum class NeighbourhoodKind { full, kl_ball };
enum class SamplingKind { visitation, uniform };

// One HAML instance: drift functional, neighbourhood operator and the state
// distribution the mirror objective is averaged over.
struct DriftSpec {
  DriftKind drift = DriftKind::trivial;
  double coef = 1.0;       // scale of the kl drift
  double clip_eps = 0.2;   // happo_clip
  NeighbourhoodKind neighbourhood = NeighbourhoodKind::full;
  // KL-ball radius. The ball is measured under the normalized visitation
  // (1 - gamma) * rho of the current joint policy.
  double radius = 0.1;
  SamplingKind sampling = SamplingKind::visitation;

  std::string name() const;
  static DriftSpec trivial_full();
  static DriftSpec trivial_kl_ball(double radius);
  static DriftSpec happo(double clip_eps);
  static DriftSpec kl(double coef);
};

DriftSpec drift_spec_from_name(const std::string& name);

// Prefix-weighted joint advantages at one state:
//   adv[x][a] = A^{prefix u agent}(s, x, a) = Q^{prefix u agent}(s, x, a) - V(s)
// for each prefix joint action x with probability weight[x] under the updated
// prefix policies.
struct PrefixTable {
  std::vector<double> weight;
  std::vector<std::vector<double>> adv;
};

PrefixTable prefix_table(const CooperativeMarkovGame& game, const JointPolicy& policy,
                         const ValueProfile& profile, int s,
                         std::span<const int> prefix_agents, const JointPolicy& prefix_policies,
                         int agent);

// E_{x ~ prefix, a ~ pi_old}[ReLU((r - clip(r, 1 +- eps)) * A^{prefix u agent})],
// r = candidate(a) / pi_old(a).
double happo_drift(const CooperativeMarkovGame& game, const JointPolicy& policy,
                   const ValueProfile& profile, int s, std::span<const int> prefix_agents,
                   const JointPolicy& prefix_policies, int agent,
                   std::span<const double> candidate, double clip_eps);

double kl_divergence(std::span<const double> p, std::span<const double> q);

double drift_value(const DriftSpec& spec, const CooperativeMarkovGame& game,
                   const JointPolicy& policy, const ValueProfile& profile, int s,
                   std::span<const int> prefix_agents, const JointPolicy& prefix_policies,
                   int agent, std::span<const double> candidate);

struct HamoEvaluation {
  int state = 0;
  double advantage_term = 0.0;
  double drift_term = 0.0;
  double value = 0.0;
};

// E_{prefix, candidate}[A^{agent}(s, a^{prefix}, a)] - drift.
HamoEvaluation hamo(const DriftSpec& spec, const CooperativeMarkovGame& game,
                    const JointPolicy& policy, const ValueProfile& profile, int s,
                    std::span<const int> prefix_agents, const JointPolicy& prefix_policies,
                    int agent, std::span<const double> candidate);

// argmax_q <q, g> - c KL(p || q) over the simplex. c = 0 returns the argmax
// vertex (lowest index on ties). Converges the dual multiplier to `tol`.
std::vector<double> kl_prox_argmax(std::span<const double> p, std::span<const double> g,
                                   double c, double tol = 1e-13, int max_iter = 500);

// argmax of the HAPPO clipped objective at one state: a separable concave
// piecewise-linear program over the simplex.
std::vector<double> clip_objective_argmax(std::span<const double> p, const PrefixTable& table,
                                          double clip_eps);

struct SolverOptions {
  double tol = 1e-13;
  int max_iter = 500;
};

// One HAML agent update: maximizes the expected mirror objective over the
// neighbourhood. Throws ErrorCode::convergence when the combination has no
// exact solver here.
TabularPolicy haml_agent_update(const DriftSpec& spec, const CooperativeMarkovGame& game,
                                const JointPolicy& policy, const ValueProfile& profile,
                                std::span<const int> prefix_agents,
                                const JointPolicy& prefix_policies, int agent,
                                const SolverOptions& options = {});

std::vector<double> sampling_weights(const DriftSpec& spec, const CooperativeMarkovGame& game,
                                     const ValueProfile& profile);

// Mean KL(old || candidate) under (1 - gamma) * rho.
double mean_kl(const CooperativeMarkovGame& game, const ValueProfile& profile,
               const TabularPolicy& old_policy, const TabularPolicy& candidate);
bool in_neighbourhood(const DriftSpec& spec, const CooperativeMarkovGame& game,
                      const ValueProfile& profile, const TabularPolicy& old_policy,
                      const TabularPolicy& candidate, double slack = 1e-12);

struct HadfReport {
  std::string drift;
  int samples = 0;
  bool nonnegative = true;
  bool zero_at_current = true;
  bool zero_gradient = true;
  double worst_negative = 0.0;      // most negative drift seen
  double worst_at_current = 0.0;    // largest |drift(current)|
  double worst_derivative = 0.0;    // largest |derivative| / ||v||
  std::string classification;       // trivial, positive or neither
  // First violation, if any.
  bool has_witness = false;
  int witness_state = -1;
  int witness_agent = -1;
  std::vector<int> witness_prefix;
  std::vector<double> witness_candidate;
  std::string witness_axiom;

  bool passed() const { return nonnegative && zero_at_current && zero_gradient; }
};

HadfReport check_hadf(const DriftSpec& spec, const CooperativeMarkovGame& game,
                      const JointPolicy& policy, int n_samples, std::uint64_t seed);

struct ImprovementReport {
  double worst_hamo_gap = 0.0;  // min over (s, m) of HAMO(new) - HAMO(old)
  double worst_value_gap = 0.0; // min over s of V_new - V_old
  bool passed = false;
};

// Builds pi_new agent by agent with a state-wise HAMO maximizer and checks
// V_new >= V_old - tol at every state.
ImprovementReport check_state_improvement(const DriftSpec& spec, const CooperativeMarkovGame& game,
                                     const JointPolicy& policy, const std::vector<int>& order,
                                     double tol = 1e-9);

}  // namespace harl
