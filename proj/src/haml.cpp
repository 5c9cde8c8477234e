#include "harl/haml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace harl {

std::string DriftSpec::name() const {
  std::string d;
  switch (drift) {
    case DriftKind::trivial: d = "trivial"; break;
    case DriftKind::kl: d = "kl"; break;
    case DriftKind::happo_clip: d = "happo_clip"; break;
    case DriftKind::negated_kl: d = "negated_kl"; break;
  }
  d += neighbourhood == NeighbourhoodKind::full ? "+full" : "+kl_ball";
  d += sampling == SamplingKind::visitation ? "+rho" : "+uniform";
  return d;
}

DriftSpec DriftSpec::trivial_full() { return {}; }

DriftSpec DriftSpec::trivial_kl_ball(double radius) {
  DriftSpec s;
  s.neighbourhood = NeighbourhoodKind::kl_ball;
  s.radius = radius;
  return s;
}

DriftSpec DriftSpec::happo(double clip_eps) {
  DriftSpec s;
  s.drift = DriftKind::happo_clip;
  s.clip_eps = clip_eps;
  return s;
}

DriftSpec DriftSpec::kl(double coef) {
  DriftSpec s;
  s.drift = DriftKind::kl;
  s.coef = coef;
  return s;
}

DriftSpec drift_spec_from_name(const std::string& name) {
  if (name == "trivial") return DriftSpec::trivial_full();
  if (name == "kl_ball" || name == "hatrpo") return DriftSpec::trivial_kl_ball(0.1);
  if (name == "happo" || name == "happo_clip") return DriftSpec::happo(0.2);
  if (name == "kl") return DriftSpec::kl(1.0);
  if (name == "negated_kl") {
    DriftSpec s;
    s.drift = DriftKind::negated_kl;
    return s;
  }
  fail(ErrorCode::config, "unknown drift '" + name + "'");
}

PrefixTable prefix_table(const CooperativeMarkovGame& game, const JointPolicy& policy,
                         const ValueProfile& profile, int s,
                         std::span<const int> prefix_agents, const JointPolicy& prefix_policies,
                         int agent) {
  const int n = game.n_agents();
  std::vector<char> in_prefix(n, 0);
  for (int i : prefix_agents) {
    require(i >= 0 && i < n && !in_prefix[i] && i != agent, "invalid prefix agent list");
    in_prefix[i] = 1;
  }
  int n_x = 1;
  for (int i : prefix_agents) n_x *= game.n_actions(i);
  const int na = game.n_actions(agent);
  PrefixTable t;
  t.weight.assign(n_x, 1.0);
  t.adv.assign(n_x, std::vector<double>(na, 0.0));
  for (int x = 0; x < n_x; ++x) {
    int rem = x;
    for (int k = static_cast<int>(prefix_agents.size()) - 1; k >= 0; --k) {
      int i = prefix_agents[k];
      t.weight[x] *= prefix_policies[i](s, rem % game.n_actions(i));
      rem /= game.n_actions(i);
    }
  }
  for (int j = 0; j < game.n_joint(); ++j) {
    double w = 1.0;
    int x = 0;
    for (int k = 0; k < static_cast<int>(prefix_agents.size()); ++k) {
      int i = prefix_agents[k];
      x = x * game.n_actions(i) + game.agent_action(j, i);
    }
    for (int i = 0; i < n && w != 0.0; ++i)
      if (!in_prefix[i] && i != agent) w *= policy[i](s, game.agent_action(j, i));
    if (w != 0.0) t.adv[x][game.agent_action(j, agent)] += w * profile.q(s, j);
  }
  for (auto& row : t.adv)
    for (auto& v : row) v -= profile.V[s];
  return t;
}

namespace {

double clip(double r, double eps) { return std::clamp(r, 1.0 - eps, 1.0 + eps); }

double happo_drift_from_table(std::span<const double> p, const PrefixTable& t,
                              std::span<const double> candidate, double eps) {
  double total = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    double r = candidate[a] / p[a];
    double excess = r - clip(r, eps);
    if (excess == 0.0) continue;
    double acc = 0.0;
    for (std::size_t x = 0; x < t.weight.size(); ++x)
      acc += t.weight[x] * std::max(0.0, excess * t.adv[x][a]);
    total += p[a] * acc;
  }
  return total;
}

}  // namespace

double happo_drift(const CooperativeMarkovGame& game, const JointPolicy& policy,
                   const ValueProfile& profile, int s, std::span<const int> prefix_agents,
                   const JointPolicy& prefix_policies, int agent,
                   std::span<const double> candidate, double clip_eps) {
  auto t = prefix_table(game, policy, profile, s, prefix_agents, prefix_policies, agent);
  return happo_drift_from_table(policy[agent].row(s), t, candidate, clip_eps);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    if (q[a] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[a] * std::log(p[a] / q[a]);
  }
  return std::max(kl, 0.0);
}

double drift_value(const DriftSpec& spec, const CooperativeMarkovGame& game,
                   const JointPolicy& policy, const ValueProfile& profile, int s,
                   std::span<const int> prefix_agents, const JointPolicy& prefix_policies,
                   int agent, std::span<const double> candidate) {
  auto p = policy[agent].row(s);
  switch (spec.drift) {
    case DriftKind::trivial: return 0.0;
    case DriftKind::kl: return spec.coef * kl_divergence(p, candidate);
    case DriftKind::negated_kl: return -spec.coef * kl_divergence(p, candidate);
    case DriftKind::happo_clip:
      return happo_drift(game, policy, profile, s, prefix_agents, prefix_policies, agent,
                         candidate, spec.clip_eps);
  }
  return 0.0;
}

HamoEvaluation hamo(const DriftSpec& spec, const CooperativeMarkovGame& game,
                    const JointPolicy& policy, const ValueProfile& profile, int s,
                    std::span<const int> prefix_agents, const JointPolicy& prefix_policies,
                    int agent, std::span<const double> candidate) {
  auto g = prefix_advantage(game, policy, profile, s, prefix_agents, prefix_policies, agent);
  HamoEvaluation e;
  e.state = s;
  for (std::size_t a = 0; a < g.size(); ++a) e.advantage_term += candidate[a] * g[a];
  e.drift_term =
      drift_value(spec, game, policy, profile, s, prefix_agents, prefix_policies, agent, candidate);
  e.value = e.advantage_term - e.drift_term;
  return e;
}

std::vector<double> kl_prox_argmax(std::span<const double> p, std::span<const double> g,
                                   double c, double tol, int max_iter) {
  const int n = static_cast<int>(p.size());
  require(static_cast<int>(g.size()) == n && n > 0, "kl_prox_argmax shape mismatch");
  std::vector<double> q(n, 0.0);
  if (c <= 0.0) {
    int best = 0;
    for (int a = 1; a < n; ++a)
      if (g[a] > g[best] + 1e-12 * std::max(1.0, std::abs(g[best]))) best = a;
    q[best] = 1.0;
    return q;
  }
  double gmax = -std::numeric_limits<double>::infinity();
  double p_top = 0.0;
  int zero_best = -1;
  for (int a = 0; a < n; ++a) {
    if (p[a] > 0.0) {
      if (g[a] > gmax) {
        gmax = g[a];
        p_top = p[a];
      } else if (g[a] == gmax) {
        p_top += p[a];
      }
    } else if (zero_best < 0 || g[a] > g[zero_best]) {
      zero_best = a;
    }
  }
  auto h = [&](double lambda) {
    double sum = 0.0;
    for (int a = 0; a < n; ++a)
      if (p[a] > 0.0) sum += c * p[a] / (lambda - g[a]);
    return sum;
  };
  if (zero_best >= 0 && g[zero_best] > gmax && h(g[zero_best]) <= 1.0) {
    // Mass leaks onto an action the old policy never plays.
    double lambda = g[zero_best];
    double used = 0.0;
    for (int a = 0; a < n; ++a) {
      if (p[a] > 0.0) {
        q[a] = c * p[a] / (lambda - g[a]);
        used += q[a];
      }
    }
    q[zero_best] = std::max(0.0, 1.0 - used);
    return q;
  }
  // Solve f(t) = sum_a c p_a / (t + gmax - g_a) - 1 = 0 for t in (0, c].
  // f is convex and decreasing, so Newton from the left stays left.
  auto f = [&](double t, double* df) {
    double v = -1.0, d = 0.0;
    for (int a = 0; a < n; ++a) {
      if (p[a] <= 0.0) continue;
      double den = t + (gmax - g[a]);
      double term = c * p[a] / den;
      v += term;
      d -= term / den;
    }
    if (df) *df = d;
    return v;
  };
  double t = c * p_top;
  double hi = c;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    double df = 0.0;
    double v = f(t, &df);
    if (std::abs(v) <= tol) {
      converged = true;
      break;
    }
    double next = t - v / df;
    if (!(next > t) || !(next <= hi)) next = 0.5 * (t + hi);
    if (v < 0.0) {
      // Round-off overshoot; fall back to bisection toward zero.
      hi = t;
      next = 0.5 * t;
    }
    if (next == t) {
      converged = true;
      break;
    }
    t = next;
  }
  if (!converged) {
    std::ostringstream os;
    os << "per-state dual solve did not reach tolerance " << tol << " in " << max_iter
       << " iterations";
    os.precision(17);
    os << " c=" << c << " t=" << t;
    for (int a = 0; a < n; ++a) os << " (" << p[a] << "," << g[a] << ")";
    fail(ErrorCode::convergence, os.str());
  }
  double sum = 0.0;
  for (int a = 0; a < n; ++a) {
    if (p[a] > 0.0) q[a] = c * p[a] / (t + (gmax - g[a]));
    sum += q[a];
  }
  for (auto& v : q) v /= sum;
  return q;
}

std::vector<double> clip_objective_argmax(std::span<const double> p, const PrefixTable& table,
                                          double eps) {
  const int n = static_cast<int>(p.size());
  struct Piece {
    double slope;
    double length;
    int zero_support;
    int segment;
    int action;
  };
  std::vector<Piece> pieces;
  const double inf = std::numeric_limits<double>::infinity();
  auto snap = [](double v) { return std::abs(v) < 1e-13 ? 0.0 : v; };
  for (int a = 0; a < n; ++a) {
    if (p[a] <= 0.0) {
      pieces.push_back({0.0, inf, 1, 0, a});
      continue;
    }
    double pos = 0.0, neg = 0.0;
    for (std::size_t x = 0; x < table.weight.size(); ++x) {
      double w = table.weight[x] * table.adv[x][a];
      if (w > 0.0) pos += w;
      else neg += w;
    }
    pieces.push_back({snap(pos), p[a] * (1.0 - eps), 0, 0, a});
    pieces.push_back({snap(pos + neg), 2.0 * eps * p[a], 0, 1, a});
    pieces.push_back({snap(neg), inf, 0, 2, a});
  }
  std::sort(pieces.begin(), pieces.end(), [](const Piece& x, const Piece& y) {
    if (x.slope != y.slope) return x.slope > y.slope;
    if (x.zero_support != y.zero_support) return x.zero_support < y.zero_support;
    if (x.segment != y.segment) return x.segment < y.segment;
    return x.action < y.action;
  });
  std::vector<double> q(n, 0.0);
  double budget = 1.0;
  for (const auto& pc : pieces) {
    if (budget <= 0.0) break;
    double take = std::min(budget, pc.length);
    q[pc.action] += take;
    budget -= take;
  }
  double sum = std::accumulate(q.begin(), q.end(), 0.0);
  for (auto& v : q) v /= sum;
  return q;
}

std::vector<double> sampling_weights(const DriftSpec& spec, const CooperativeMarkovGame& game,
                                     const ValueProfile& profile) {
  if (spec.sampling == SamplingKind::uniform)
    return std::vector<double>(game.n_states(), 1.0 / game.n_states());
  return profile.rho;
}

double mean_kl(const CooperativeMarkovGame& game, const ValueProfile& profile,
               const TabularPolicy& old_policy, const TabularPolicy& candidate) {
  double total = 0.0;
  for (int s = 0; s < game.n_states(); ++s)
    total += (1.0 - game.gamma()) * profile.rho[s] * kl_divergence(old_policy.row(s), candidate.row(s));
  return total;
}

bool in_neighbourhood(const DriftSpec& spec, const CooperativeMarkovGame& game,
                      const ValueProfile& profile, const TabularPolicy& old_policy,
                      const TabularPolicy& candidate, double slack) {
  if (spec.neighbourhood == NeighbourhoodKind::full) return true;
  return mean_kl(game, profile, old_policy, candidate) <= spec.radius + slack;
}

TabularPolicy haml_agent_update(const DriftSpec& spec, const CooperativeMarkovGame& game,
                                const JointPolicy& policy, const ValueProfile& profile,
                                std::span<const int> prefix_agents,
                                const JointPolicy& prefix_policies, int agent,
                                const SolverOptions& options) {
  const int S = game.n_states();
  const int na = game.n_actions(agent);
  const TabularPolicy& old = policy[agent];
  if (spec.drift == DriftKind::negated_kl)
    fail(ErrorCode::check_failed, "drift violation: negated KL is negative off the current policy");
  std::vector<double> out(static_cast<std::size_t>(S) * na);
  auto store = [&](int s, const std::vector<double>& q) {
    std::copy(q.begin(), q.end(), out.begin() + static_cast<std::ptrdiff_t>(s) * na);
  };

  if (spec.drift == DriftKind::happo_clip) {
    if (spec.neighbourhood != NeighbourhoodKind::full)
      fail(ErrorCode::convergence,
           "neighbourhood projection failure: clip drift is only solved over the full simplex");
    for (int s = 0; s < S; ++s) {
      auto t = prefix_table(game, policy, profile, s, prefix_agents, prefix_policies, agent);
      store(s, clip_objective_argmax(old.row(s), t, spec.clip_eps));
    }
  } else {
    auto g = prefix_advantage_table(game, policy, profile, prefix_agents, prefix_policies, agent);
    const double base = spec.drift == DriftKind::kl ? spec.coef : 0.0;
    auto solve_all = [&](double eta) {
      auto beta = sampling_weights(spec, game, profile);
      for (int s = 0; s < S; ++s) {
        double c = base;
        if (eta > 0.0) c += eta * (1.0 - game.gamma()) * profile.rho[s] / beta[s];
        store(s, kl_prox_argmax(old.row(s), g[s], c, options.tol, options.max_iter));
      }
    };
    solve_all(0.0);
    if (spec.neighbourhood == NeighbourhoodKind::kl_ball) {
      require(spec.radius > 0.0, "KL-ball radius must be positive");
      auto ball_kl = [&] {
        return mean_kl(game, profile, old, TabularPolicy(S, na, out));
      };
      if (ball_kl() > spec.radius) {
        double lo = 0.0, hi = 1.0;
        for (int k = 0;; ++k) {
          solve_all(hi);
          if (ball_kl() <= spec.radius) break;
          lo = hi;
          hi *= 2.0;
          if (k > 200) fail(ErrorCode::convergence, "neighbourhood projection failure");
        }
        for (int k = 0; k < 200 && hi - lo > 1e-15 * hi; ++k) {
          double mid = 0.5 * (lo + hi);
          solve_all(mid);
          if (ball_kl() <= spec.radius) hi = mid;
          else lo = mid;
        }
        solve_all(hi);
      }
    }
  }
  TabularPolicy result(S, na, out);
  for (int s = 0; s < S; ++s) {
    double d = drift_value(spec, game, policy, profile, s, prefix_agents, prefix_policies, agent,
                           result.row(s));
    if (d < -1e-12) fail(ErrorCode::check_failed, "drift violation: negative drift at candidate");
  }
  return result;
}

namespace {

std::vector<double> random_row(int n, Rng& rng) {
  std::vector<double> r(n);
  double sum = 0.0;
  for (auto& v : r) {
    v = 0.02 + uniform01(rng);
    sum += v;
  }
  for (auto& v : r) v /= sum;
  return r;
}

}  // namespace

HadfReport check_hadf(const DriftSpec& spec, const CooperativeMarkovGame& game,
                      const JointPolicy& policy, int n_samples, std::uint64_t seed) {
  check_policy(game, policy);
  require(n_samples >= 1, "n_samples must be positive");
  ValueProfile profile = evaluate(game, policy);
  Rng rng(seed);
  HadfReport rep;
  rep.drift = spec.name();
  rep.samples = n_samples;
  const double h = 1e-5;
  bool any_positive = false, any_zero_off_current = false;
  auto witness = [&](int s, int agent, const std::vector<int>& prefix,
                     const std::vector<double>& cand, const char* axiom) {
    if (rep.has_witness) return;
    rep.has_witness = true;
    rep.witness_state = s;
    rep.witness_agent = agent;
    rep.witness_prefix = prefix;
    rep.witness_candidate = cand;
    rep.witness_axiom = axiom;
  };
  JointPolicy prefix_policies = policy;
  for (int k = 0; k < n_samples; ++k) {
    int s = static_cast<int>(uniform01(rng) * game.n_states());
    int agent = static_cast<int>(uniform01(rng) * game.n_agents());
    std::vector<int> others;
    for (int i = 0; i < game.n_agents(); ++i)
      if (i != agent) others.push_back(i);
    auto perm = random_permutation(static_cast<int>(others.size()), rng);
    int m = static_cast<int>(uniform01(rng) * (others.size() + 1));
    std::vector<int> prefix;
    for (int j = 0; j < m; ++j) prefix.push_back(others[perm[j]]);
    for (int i : prefix) {
      auto row = random_row(game.n_actions(i), rng);
      std::copy(row.begin(), row.end(), prefix_policies[i].row(s).begin());
    }
    auto p = policy[agent].row(s);
    const int na = game.n_actions(agent);
    std::vector<double> cand;
    if (uniform01(rng) < 0.5) {
      cand = random_row(na, rng);
    } else {
      // Small move around the current row.
      double scale = 0.3 * uniform01(rng);
      auto dir = random_row(na, rng);
      cand.resize(na);
      for (int a = 0; a < na; ++a) cand[a] = (1.0 - scale) * p[a] + scale * dir[a];
    }
    auto D = [&](std::span<const double> q) {
      return drift_value(spec, game, policy, profile, s, prefix, prefix_policies, agent, q);
    };
    double d = D(cand);
    if (d < rep.worst_negative) rep.worst_negative = d;
    if (d < -1e-12) {
      rep.nonnegative = false;
      witness(s, agent, prefix, cand, "nonnegativity");
    }
    double dist = 0.0;
    for (int a = 0; a < na; ++a) dist = std::max(dist, std::abs(cand[a] - p[a]));
    if (std::abs(d) > 1e-15) any_positive = true;
    else if (dist > 1e-9) any_zero_off_current = true;

    std::vector<double> cur(p.begin(), p.end());
    double d0 = D(cur);
    rep.worst_at_current = std::max(rep.worst_at_current, std::abs(d0));
    if (std::abs(d0) > 1e-12) {
      rep.zero_at_current = false;
      witness(s, agent, prefix, cur, "zero at current policy");
    }

    // Tangent direction restricted to the support of the current row.
    std::vector<int> support;
    for (int a = 0; a < na; ++a)
      if (p[a] > 0.0) support.push_back(a);
    if (support.size() < 2) continue;
    std::vector<double> v(na, 0.0);
    double mean = 0.0;
    for (int a : support) {
      v[a] = normal01(rng);
      mean += v[a];
    }
    mean /= static_cast<double>(support.size());
    double norm = 0.0;
    for (int a : support) {
      v[a] -= mean;
      norm += v[a] * v[a];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    double step = h;
    for (int a : support)
      if (std::abs(v[a]) * step > 0.5 * p[a]) step = 0.5 * p[a] / std::abs(v[a]);
    std::vector<double> plus(na), minus(na);
    for (int a = 0; a < na; ++a) {
      plus[a] = p[a] + step * v[a];
      minus[a] = p[a] - step * v[a];
    }
    double deriv = (D(plus) - D(minus)) / (2.0 * step);
    rep.worst_derivative = std::max(rep.worst_derivative, std::abs(deriv) / norm);
    if (std::abs(deriv) > 1e-6 * norm) {
      rep.zero_gradient = false;
      witness(s, agent, prefix, plus, "zero gradient");
    }
  }
  if (!any_positive) rep.classification = "trivial";
  else if (!any_zero_off_current) rep.classification = "positive";
  else rep.classification = "neither";
  return rep;
}

ImprovementReport check_state_improvement(const DriftSpec& spec, const CooperativeMarkovGame& game,
                                     const JointPolicy& policy, const std::vector<int>& order,
                                     double tol) {
  require(static_cast<int>(order.size()) == game.n_agents(), "order must list every agent");
  ValueProfile profile = evaluate(game, policy);
  DriftSpec local = spec;
  local.neighbourhood = NeighbourhoodKind::full;
  JointPolicy next = policy;
  ImprovementReport rep;
  rep.worst_hamo_gap = std::numeric_limits<double>::infinity();
  std::vector<int> prefix;
  for (int agent : order) {
    TabularPolicy updated = haml_agent_update(local, game, policy, profile, prefix, next, agent);
    for (int s = 0; s < game.n_states(); ++s) {
      double h_new =
          hamo(local, game, policy, profile, s, prefix, next, agent, updated.row(s)).value;
      double h_old =
          hamo(local, game, policy, profile, s, prefix, next, agent, policy[agent].row(s)).value;
      rep.worst_hamo_gap = std::min(rep.worst_hamo_gap, h_new - h_old);
    }
    next[agent] = updated;
    prefix.push_back(agent);
  }
  ValueProfile after = evaluate(game, next);
  rep.worst_value_gap = std::numeric_limits<double>::infinity();
  for (int s = 0; s < game.n_states(); ++s)
    rep.worst_value_gap = std::min(rep.worst_value_gap, after.V[s] - profile.V[s]);
  rep.passed = rep.worst_hamo_gap >= -tol && rep.worst_value_gap >= -tol;
  return rep;
}

}  // namespace harl
