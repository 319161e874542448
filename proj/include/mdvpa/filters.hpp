#ifndef MDVPA_FILTERS_HPP
#define MDVPA_FILTERS_HPP

// The three filters over the marginalized iHMM:
//   smc_step    bootstrap sequential Monte Carlo with multinomial resampling
//   vpa_step    deterministic greedy top-K particle selection
//   mdvpa_step  mirror-descent selection: VPA's free-energy term times an
//               eps_n-discounted one-step-lookahead factor, normalized by a
//               per-candidate-state population term.
//
// All steps are pure transformations ParticleSet -> ParticleSet. VPA and
// MD-VPA consume no randomness.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mdvpa/common.hpp"
#include "mdvpa/ihmm.hpp"

namespace mdvpa {

struct Particle {
  State state = kNoState;
  SufficientStats stats;
  double log_weight = 0.0;
  // Factors of this particle's most recent step potential f(x_n, y_n),
  // kept for free-energy and lookahead-loss evaluation.
  double log_trans = 0.0;
  double log_emis = 0.0;

  double log_potential() const { return log_trans + log_emis; }

  friend bool operator==(const Particle&, const Particle&) = default;
};

// The empirical posterior Q: weighted particles after n observations. The
// deterministic filters hold at most target_k particles and may hold fewer
// in the first steps, before the candidate tree has branched K ways.
struct ParticleSet {
  std::vector<Particle> particles;
  std::size_t target_k = 0;  // K
  std::size_t n = 0;         // observations consumed
  Symbol last_symbol = 0;    // most recent observation, 0 before the first

  std::vector<double> weights() const {
    std::vector<double> w(particles.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(particles[i].log_weight);
    return w;
  }

  double weight_sum() const {
    double s = 0.0;
    for (const Particle& p : particles) s += std::exp(p.log_weight);
    return s;
  }

  bool is_normalized(double tol = 1e-10) const { return std::abs(weight_sum() - 1.0) <= tol; }

  double mean_state_count() const {
    if (particles.empty()) return 0.0;
    double s = 0.0;
    for (const Particle& p : particles) s += p.stats.num_states();
    return s / static_cast<double>(particles.size());
  }

  friend bool operator==(const ParticleSet&, const ParticleSet&) = default;
};

enum class ScheduleKind { reciprocal, constant };

struct EpsilonSchedule {
  ScheduleKind kind = ScheduleKind::reciprocal;
  double value = 0.0;  // used by constant
};

inline double epsilon_schedule(std::size_t n, const EpsilonSchedule& sched) {
  if (n < 1) throw std::invalid_argument("epsilon_schedule: n must be >= 1");
  switch (sched.kind) {
    case ScheduleKind::reciprocal:
      return 1.0 / static_cast<double>(n);
    case ScheduleKind::constant:
      return sched.value;
  }
  return 0.0;
}

enum class DenominatorVariant { geometric_mean, arithmetic_sum };

struct FilterConfig {
  std::size_t particle_count = 100;  // K
  int initial_states = 0;            // M0
  EpsilonSchedule schedule;
  std::uint64_t seed = 1;
  DenominatorVariant denominator = DenominatorVariant::geometric_mean;
  ModelConfig model;

  void validate() const {
    if (particle_count < 1) throw std::invalid_argument("FilterConfig: K must be >= 1");
    if (initial_states < 0) throw std::invalid_argument("FilterConfig: M0 must be >= 0");
    if (schedule.kind == ScheduleKind::constant && schedule.value < 0.0)
      throw std::invalid_argument("FilterConfig: constant epsilon must be >= 0");
    model.validate();
  }
};

namespace detail {

inline int effective_initial_states(const FilterConfig& cfg) {
  return cfg.model.mode == ModelMode::fixed ? static_cast<int>(cfg.model.fixed_spec.num_states())
                                            : cfg.initial_states;
}

// Transition row used by proposals and candidate evaluation. Fixed mode has
// no `new` mass.
inline TransitionPredictive transition_row(const SufficientStats& stats, const ModelConfig& cfg,
                                           State prev) {
  if (cfg.mode == ModelMode::fixed) {
    TransitionPredictive out;
    out.existing = cfg.fixed_spec.transition[prev - 1];
    out.new_mass = 0.0;
    return out;
  }
  return crf_transition_predictive(stats, cfg, prev);
}

inline double emission_prob(const SufficientStats& stats, const ModelConfig& cfg, State state,
                            Symbol y) {
  if (cfg.mode == ModelMode::fixed) return cfg.fixed_spec.emission[state - 1][y - 1];
  return emission_predictive(stats, cfg, state, y);
}

}  // namespace detail

// K particles with states drawn uniformly from 1..M0 (a pre-first-observation
// sentinel when M0 = 0; fixed mode uses the model's state count), fresh
// statistics and uniform weights.
inline ParticleSet init_particles(const FilterConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t k = cfg.particle_count;
  const int m0 = detail::effective_initial_states(cfg);
  ParticleSet ps;
  ps.target_k = k;
  ps.particles.resize(k);
  const double log_w = -std::log(static_cast<double>(k));
  for (Particle& p : ps.particles) {
    p.state = m0 == 0 ? kNoState : static_cast<State>(1 + rng.next_index(m0));
    p.stats = new_stats(m0, cfg.model.vocab_size);
    p.log_weight = log_w;
  }
  return ps;
}

// K i.i.d. index draws from Multinomial(weights). Indices are 0-based.
inline std::vector<std::size_t> multinomial_resample(const std::vector<double>& weights,
                                                     std::size_t k, Rng& rng) {
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("multinomial_resample: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-10)
    throw std::invalid_argument("multinomial_resample: weights not normalized");
  std::vector<double> cum(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cum[i] = acc;
  }
  std::vector<std::size_t> out(k);
  for (std::size_t d = 0; d < k; ++d) {
    const double u = rng.next_double() * sum;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    out[d] = it == cum.end() ? weights.size() - 1
                             : static_cast<std::size_t>(it - cum.begin());
  }
  return out;
}

// One candidate hypothesis: parent particle k continuing in state m, with the
// selection weight log W_n(k, m) and the cached factors of f(x = m, y_n).
struct CandidateEntry {
  std::size_t parent = 0;
  State state = kNoState;  // 1..M or kNewState
  double log_w = kNegInf;
  double log_trans = 0.0;
  double log_emis = 0.0;
};

// Raw per-candidate potentials, before the mirror-descent combination. Split
// out so the lookahead potentials can be rescaled independently in tests.
// `parent` is the index of the pooled parent's representative particle and
// `log_w_prev` its pooled weight.
struct CandidateEval {
  std::size_t parent = 0;
  State state = kNoState;
  double log_w_prev = kNegInf;
  double log_f_now = kNegInf;
  double log_f_next = kNegInf;  // meaningful only when a lookahead symbol was given
  double log_trans = 0.0;
  double log_emis = 0.0;
};

// Evaluate f(x^k = m, y) and optionally f(x^k = m, y_next) for every pooled
// parent k and candidate m in {1..M^k} (plus `new` in nonparametric mode),
// using parent k's statistics and previous state. Before the first
// observation there is no previous state: the transition factor is the fixed
// spec's initial distribution in fixed mode and 1 otherwise.
//
// Parents that agree on every quantity the extension can see would produce
// byte-identical candidate rows, so they are pooled into a single row
// carrying their summed weight (before the first observation the previous
// state is invisible, so only the statistics are compared). Pooling is what
// lets a degenerate set, like the one produced by initialization, branch back
// out to K distinct particles instead of replicating one trajectory K times;
// the selected set can therefore run below K until branching refills it.
inline std::vector<CandidateEval> evaluate_candidates(const ParticleSet& ps, Symbol y,
                                                      std::optional<Symbol> y_next,
                                                      const FilterConfig& cfg) {
  const ModelConfig& model = cfg.model;
  const bool fixed = model.mode == ModelMode::fixed;

  std::vector<std::size_t> reps;
  std::vector<std::vector<double>> pooled_log_ws;
  for (std::size_t k = 0; k < ps.particles.size(); ++k) {
    const Particle& p = ps.particles[k];
    std::size_t g = reps.size();
    for (std::size_t i = 0; i < reps.size(); ++i) {
      const Particle& r = ps.particles[reps[i]];
      if ((ps.n == 0 || r.state == p.state) && r.stats == p.stats) {
        g = i;
        break;
      }
    }
    if (g == reps.size()) {
      reps.push_back(k);
      pooled_log_ws.emplace_back();
    }
    pooled_log_ws[g].push_back(p.log_weight);
  }

  std::vector<CandidateEval> evals;
  for (std::size_t group = 0; group < reps.size(); ++group) {
    const std::size_t k = reps[group];
    const double log_w_prev = log_sum_exp(pooled_log_ws[group]);
    const Particle& parent = ps.particles[k];
    const int m_existing = parent.stats.num_states();

    std::vector<double> trans(m_existing, 1.0);
    double trans_new = fixed ? 0.0 : 1.0;
    if (ps.n == 0) {
      if (fixed)
        for (int m = 0; m < m_existing; ++m) trans[m] = model.fixed_spec.initial[m];
    } else {
      const TransitionPredictive row = detail::transition_row(parent.stats, model, parent.state);
      trans = row.existing;
      trans_new = row.new_mass;
    }

    auto push = [&](State m, double trans_prob) {
      CandidateEval e;
      e.parent = k;
      e.state = m;
      e.log_w_prev = log_w_prev;
      e.log_trans = std::log(trans_prob);
      e.log_emis = std::log(detail::emission_prob(parent.stats, model, m == kNewState ? kNewState : m, y));
      e.log_f_now = e.log_trans + e.log_emis;
      if (y_next)
        e.log_f_next =
            e.log_trans + std::log(detail::emission_prob(parent.stats, model,
                                                         m == kNewState ? kNewState : m, *y_next));
      evals.push_back(e);
    };

    for (State m = 1; m <= m_existing; ++m) push(m, trans[m - 1]);
    if (!fixed) push(kNewState, trans_new);
  }
  return evals;
}

// Combine raw potentials into selection weights:
//   log W(k,m) = log w^k + log f(k,m,y_n) + eps*log f(k,m,y_next) - eps*G(m)
// G(m) aggregates the lookahead potential of candidate state m over the
// pooled parents: the mean of log f over parents that carry m with positive
// potential (geometric_mean) or (1/K) log sum_k f with K the pooled parent
// count (arithmetic_sum, the literal algorithm-box form). eps = 0 drops the
// lookahead terms entirely.
inline std::vector<CandidateEntry> combine_candidates(const std::vector<CandidateEval>& evals,
                                                      double eps, DenominatorVariant variant) {
  std::vector<CandidateEntry> out;
  out.reserve(evals.size());

  int max_state = 0;
  for (const CandidateEval& e : evals) max_state = std::max(max_state, e.state);

  // Slot max_state+1 aggregates the shared `new` candidate.
  std::vector<double> g(static_cast<std::size_t>(max_state) + 2, 0.0);
  if (eps > 0.0) {
    std::vector<double> acc(g.size(), 0.0);
    std::vector<std::size_t> cnt(g.size(), 0);
    const auto slot = [&](State s) {
      return static_cast<std::size_t>(s == kNewState ? max_state + 1 : s);
    };
    std::vector<std::size_t> parents_seen;
    for (const CandidateEval& e : evals) {
      if (std::find(parents_seen.begin(), parents_seen.end(), e.parent) == parents_seen.end())
        parents_seen.push_back(e.parent);
      if (variant == DenominatorVariant::geometric_mean) {
        if (std::isfinite(e.log_f_next)) {
          acc[slot(e.state)] += e.log_f_next;
          ++cnt[slot(e.state)];
        }
      } else {
        acc[slot(e.state)] += std::exp(e.log_f_next);
        ++cnt[slot(e.state)];
      }
    }
    const double k_total = static_cast<double>(parents_seen.size());
    for (std::size_t s = 0; s < g.size(); ++s) {
      if (variant == DenominatorVariant::geometric_mean)
        g[s] = cnt[s] > 0 ? acc[s] / static_cast<double>(cnt[s]) : 0.0;
      else
        g[s] = acc[s] > 0.0 ? std::log(acc[s]) / k_total : 0.0;
    }
  }

  for (const CandidateEval& e : evals) {
    CandidateEntry c;
    c.parent = e.parent;
    c.state = e.state;
    c.log_trans = e.log_trans;
    c.log_emis = e.log_emis;
    if (!std::isfinite(e.log_f_now) || !std::isfinite(e.log_w_prev)) {
      c.log_w = kNegInf;
    } else if (eps == 0.0) {
      c.log_w = e.log_w_prev + e.log_f_now;
    } else if (!std::isfinite(e.log_f_next)) {
      c.log_w = kNegInf;
    } else {
      const std::size_t s = static_cast<std::size_t>(e.state == kNewState ? max_state + 1 : e.state);
      c.log_w = e.log_w_prev + e.log_f_now + eps * e.log_f_next - eps * g[s];
    }
    out.push_back(c);
  }
  return out;
}

inline std::vector<CandidateEntry> candidate_grid(const ParticleSet& ps, Symbol y,
                                                  std::optional<Symbol> y_next, double eps,
                                                  const FilterConfig& cfg) {
  if (eps < 0.0) throw std::invalid_argument("candidate_grid: eps must be >= 0");
  if (eps > 0.0 && !y_next)
    throw std::invalid_argument("candidate_grid: eps > 0 requires a lookahead symbol");
  return combine_candidates(evaluate_candidates(ps, y, eps > 0.0 ? y_next : std::nullopt, cfg), eps,
                            cfg.denominator);
}

namespace detail {

// Total order on candidates: larger log_w first, then lower parent index,
// existing states before `new`, then lower state index.
inline bool candidate_before(const CandidateEntry& a, const CandidateEntry& b) {
  if (a.log_w != b.log_w) return a.log_w > b.log_w;
  if (a.parent != b.parent) return a.parent < b.parent;
  const bool a_new = a.state == kNewState;
  const bool b_new = b.state == kNewState;
  if (a_new != b_new) return b_new;
  return a.state < b.state;
}

}  // namespace detail

// Keep the K largest candidates (all of them when the grid is smaller),
// materialize each as a particle with updated statistics, and renormalize.
// Zero-weight candidates are not support points and are never materialized,
// so every retained particle carries strictly positive weight.
inline ParticleSet select_k_largest(const ParticleSet& parents, std::vector<CandidateEntry> grid,
                                    Symbol y, const FilterConfig& cfg) {
  if (grid.empty()) throw std::invalid_argument("select_k_largest: empty candidate grid");
  std::sort(grid.begin(), grid.end(), detail::candidate_before);

  std::size_t finite = 0;
  for (const CandidateEntry& e : grid)
    if (std::isfinite(e.log_w)) ++finite;
  if (finite == 0)
    throw DegenerateFilterError(parents.n + 1, "all candidate weights are zero");
  const std::size_t keep = std::min<std::size_t>(cfg.particle_count, finite);

  ParticleSet next;
  next.target_k = cfg.particle_count;
  next.n = parents.n + 1;
  next.last_symbol = y;
  next.particles.reserve(keep);

  std::vector<double> log_ws(keep);
  for (std::size_t i = 0; i < keep; ++i) log_ws[i] = grid[i].log_w;
  const double norm = log_sum_exp(log_ws);

  for (std::size_t i = 0; i < keep; ++i) {
    const CandidateEntry& e = grid[i];
    const Particle& parent = parents.particles[e.parent];
    const State prev = parents.n == 0 ? kNoState : parent.state;
    const State resolved = e.state == kNewState ? parent.stats.num_states() + 1 : e.state;
    Particle p;
    p.state = resolved;
    p.stats = update_stats(parent.stats, prev, resolved, y);
    p.log_weight = e.log_w - norm;
    p.log_trans = e.log_trans;
    p.log_emis = e.log_emis;
    if (!std::isfinite(p.log_weight))
      throw std::logic_error("select_k_largest: zero-weight particle retained");
    next.particles.push_back(std::move(p));
  }
  return next;
}

// One MD-VPA step (deterministic). eps_n comes from the schedule; without a
// lookahead observation eps falls back to 0 (pure free-energy selection).
inline ParticleSet mdvpa_step(const ParticleSet& ps, Symbol y, std::optional<Symbol> y_next,
                              const FilterConfig& cfg) {
  const double eps = y_next ? epsilon_schedule(ps.n + 1, cfg.schedule) : 0.0;
  return select_k_largest(ps, candidate_grid(ps, y, y_next, eps, cfg), y, cfg);
}

// VPA is the eps = 0 specialization of the same selection.
inline ParticleSet vpa_step(const ParticleSet& ps, Symbol y, const FilterConfig& cfg) {
  return mdvpa_step(ps, y, std::nullopt, cfg);
}

// One bootstrap SMC step: propose from the transition predictive, weight by
// the emission predictive, normalize, then resample K particles with
// replacement. The first observation keeps the init-drawn state and weights
// it by the first-step potential. ess_out, when given, receives the
// pre-resampling effective sample size.
inline ParticleSet smc_step(const ParticleSet& ps, Symbol y, const FilterConfig& cfg, Rng& rng,
                            double* ess_out = nullptr) {
  const ModelConfig& model = cfg.model;
  const bool fixed = model.mode == ModelMode::fixed;
  ParticleSet next = ps;
  next.n = ps.n + 1;
  next.last_symbol = y;

  for (Particle& p : next.particles) {
    if (ps.n == 0) {
      const State s = p.state == kNoState ? p.stats.num_states() + 1 : p.state;
      p.log_trans = fixed ? std::log(model.fixed_spec.initial[s - 1]) : 0.0;
      p.log_emis = std::log(detail::emission_prob(p.stats, model, s, y));
      p.log_weight += p.log_trans + p.log_emis;
      p.stats.apply_update(kNoState, s, y);
      p.state = s;
    } else {
      const TransitionPredictive row = detail::transition_row(p.stats, model, p.state);
      std::vector<double> probs = row.existing;
      if (!fixed) probs.push_back(row.new_mass);
      const std::size_t pick = rng.next_categorical(probs);
      const State s = static_cast<State>(pick) + 1;  // pick == M means `new` -> index M+1
      p.log_trans = std::log(probs[pick]);
      p.log_emis = std::log(detail::emission_prob(p.stats, model, s <= p.stats.num_states() ? s : kNewState, y));
      p.log_weight += p.log_emis;
      p.stats.apply_update(p.state, s, y);
      p.state = s;
    }
  }

  std::vector<double> log_ws(next.particles.size());
  for (std::size_t i = 0; i < log_ws.size(); ++i) log_ws[i] = next.particles[i].log_weight;
  const double norm = log_sum_exp(log_ws);
  if (!std::isfinite(norm))
    throw DegenerateFilterError(next.n, "all particle weights are zero");
  for (Particle& p : next.particles) p.log_weight -= norm;

  const std::vector<double> w = next.weights();
  if (ess_out) {
    double sq = 0.0;
    for (double x : w) sq += x * x;
    *ess_out = 1.0 / sq;
  }

  const std::vector<std::size_t> idx = multinomial_resample(w, next.particles.size(), rng);
  std::vector<Particle> resampled;
  resampled.reserve(idx.size());
  const double log_uniform = -std::log(static_cast<double>(idx.size()));
  for (std::size_t i : idx) {
    Particle p = next.particles[i];
    p.log_weight = log_uniform;
    resampled.push_back(std::move(p));
  }
  next.particles.swap(resampled);
  return next;
}

}  // namespace mdvpa

#endif  // MDVPA_FILTERS_HPP
