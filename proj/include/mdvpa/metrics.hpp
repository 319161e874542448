#ifndef MDVPA_METRICS_HPP
#define MDVPA_METRICS_HPP

// Scoring and diagnostics: one-step predictive log-likelihood, the lookahead
// loss, the variational free energy, an exact forward-algorithm oracle for
// fixed HMMs, and cross-seed aggregation of run records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdvpa/common.hpp"
#include "mdvpa/filters.hpp"
#include "mdvpa/ihmm.hpp"

namespace mdvpa {

// One row of experiment output. loss is absent at the final observation (no
// lookahead symbol); ess is absent for the deterministic filters.
struct StepRecord {
  std::size_t n = 0;
  std::string filter;
  std::uint64_t seed = 0;
  double pred_loglik = 0.0;
  std::optional<double> loss;
  double free_energy = 0.0;
  double mean_state_count = 0.0;
  std::optional<double> ess;
};

// log p(y | y_1:n) under the particle mixture: each particle contributes its
// full one-step predictive (sum of potentials over its states plus `new`).
// Before the first observation the mixture reduces to the emission predictive
// under the initial distribution. Returns -inf when every term is zero.
inline double predictive_loglik(const ParticleSet& ps, const ModelConfig& model, Symbol y) {
  if (y < 1 || y > model.vocab_size)
    throw std::invalid_argument("predictive_loglik: symbol out of range");
  const bool fixed = model.mode == ModelMode::fixed;
  double total = 0.0;
  for (const Particle& p : ps.particles) {
    const double w = std::exp(p.log_weight);
    if (w == 0.0) continue;
    double pred = 0.0;
    if (ps.n == 0) {
      if (fixed) {
        for (std::size_t m = 0; m < model.fixed_spec.num_states(); ++m)
          pred += model.fixed_spec.initial[m] * model.fixed_spec.emission[m][y - 1];
      } else {
        pred = emission_predictive(p.stats, model, p.state, y);
      }
    } else {
      const TransitionPredictive row = detail::transition_row(p.stats, model, p.state);
      for (std::size_t m = 0; m < row.existing.size(); ++m)
        pred += row.existing[m] *
                detail::emission_prob(p.stats, model, static_cast<State>(m) + 1, y);
      if (!fixed) pred += row.new_mass * emission_predictive(p.stats, model, kNewState, y);
    }
    total += w * pred;
  }
  return std::log(total);
}

// The lookahead loss: -(1/K) sum_k log f(x_n^k, y_next), the potential each
// particle would have scored had y_next been observed at step n. Transition
// factors are the cached ones; emission predictives are rebuilt against the
// pre-update counts. A zero potential drives the loss to +inf.
inline double loss_term(const ParticleSet& ps, const ModelConfig& model, Symbol y_next) {
  if (ps.n == 0) throw std::invalid_argument("loss_term: no step has been taken");
  if (y_next < 1 || y_next > model.vocab_size)
    throw std::invalid_argument("loss_term: symbol out of range");
  const bool fixed = model.mode == ModelMode::fixed;
  double sum = 0.0;
  for (const Particle& p : ps.particles) {
    double log_emis;
    if (fixed) {
      log_emis = std::log(model.fixed_spec.emission[p.state - 1][y_next - 1]);
    } else {
      const double beta = model.emission_beta;
      double count = static_cast<double>(p.stats.emis_count(p.state, y_next));
      if (y_next == ps.last_symbol) count -= 1.0;
      const double row = static_cast<double>(p.stats.emis_row_total(p.state)) - 1.0;
      log_emis = std::log((count + beta) / (row + model.vocab_size * beta));
    }
    sum += p.log_trans + log_emis;
  }
  return -sum / static_cast<double>(ps.particles.size());
}

// The free energy L[w] = sum_k w_k (log f_k - log w_k) over the most recent
// step's potentials. Zero-weight particles contribute 0 (the w log w limit).
inline double free_energy(const ParticleSet& ps) {
  double total = 0.0;
  for (const Particle& p : ps.particles) {
    const double w = std::exp(p.log_weight);
    if (w == 0.0) continue;
    total += w * (p.log_potential() - p.log_weight);
  }
  return total;
}

struct ForwardResult {
  double total = 0.0;
  std::vector<double> per_step;  // log p(y_n | y_1:n-1)
};

// Exact log-likelihood of a symbol sequence under a fixed HMM, computed by
// the forward algorithm in log domain with per-step renormalization.
inline ForwardResult forward_loglik(const HmmSpec& spec, const std::vector<Symbol>& ys) {
  spec.validate();
  const std::size_t s = spec.num_states();
  const std::size_t v = spec.vocab_size();
  for (Symbol y : ys)
    if (y < 1 || static_cast<std::size_t>(y) > v)
      throw std::invalid_argument("forward_loglik: symbol out of range");

  ForwardResult out;
  if (ys.empty()) return out;
  std::vector<double> log_alpha(s);
  for (std::size_t m = 0; m < s; ++m)
    log_alpha[m] = std::log(spec.initial[m]) + std::log(spec.emission[m][ys[0] - 1]);

  std::vector<double> next(s);
  for (std::size_t t = 0;; ++t) {
    const double c = log_sum_exp(log_alpha);
    if (!std::isfinite(c)) throw std::domain_error("forward_loglik: impossible observation");
    out.per_step.push_back(c);
    out.total += c;
    if (t + 1 == ys.size()) break;
    for (double& a : log_alpha) a -= c;
    const Symbol y = ys[t + 1];
    for (std::size_t m2 = 0; m2 < s; ++m2) {
      std::vector<double> terms(s);
      for (std::size_t m1 = 0; m1 < s; ++m1)
        terms[m1] = log_alpha[m1] + std::log(spec.transition[m1][m2]);
      next[m2] = log_sum_exp(terms) + std::log(spec.emission[m2][y - 1]);
    }
    log_alpha = next;
  }
  return out;
}

inline std::vector<double> cumulative_loss(const std::vector<double>& losses) {
  std::vector<double> out(losses.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    acc += losses[i];
    out[i] = acc;
  }
  return out;
}

// Per-(filter, step) cross-seed statistics. Variance is the unbiased sample
// variance, absent with fewer than two runs. Cumulative loss carries the
// running total through steps whose loss is absent.
struct SummaryRow {
  std::string filter;
  std::size_t n = 0;
  double mean_pred_loglik = 0.0;
  std::optional<double> var_pred_loglik;
  std::size_t runs = 0;
  double mean_cum_loss = 0.0;
};

struct RunSummary {
  std::vector<SummaryRow> rows;
};

inline RunSummary aggregate_runs(const std::vector<StepRecord>& records) {
  std::map<std::pair<std::string, std::uint64_t>, std::vector<const StepRecord*>> runs;
  for (const StepRecord& r : records) runs[{r.filter, r.seed}].push_back(&r);

  // (filter, n) -> samples of pred_loglik and cumulative loss across seeds.
  std::map<std::pair<std::string, std::size_t>, std::pair<std::vector<double>, std::vector<double>>>
      cells;
  for (auto& [key, rows] : runs) {
    std::sort(rows.begin(), rows.end(),
              [](const StepRecord* a, const StepRecord* b) { return a->n < b->n; });
    double cum = 0.0;
    for (const StepRecord* r : rows) {
      if (r->loss) cum += *r->loss;
      auto& cell = cells[{r->filter, r->n}];
      cell.first.push_back(r->pred_loglik);
      cell.second.push_back(cum);
    }
  }

  RunSummary out;
  for (const auto& [key, cell] : cells) {
    const std::vector<double>& preds = cell.first;
    SummaryRow row;
    row.filter = key.first;
    row.n = key.second;
    row.runs = preds.size();
    double mean = 0.0;
    for (double x : preds) mean += x;
    mean /= static_cast<double>(preds.size());
    row.mean_pred_loglik = mean;
    if (preds.size() >= 2) {
      double ss = 0.0;
      for (double x : preds) ss += (x - mean) * (x - mean);
      row.var_pred_loglik = ss / static_cast<double>(preds.size() - 1);
    }
    double cum_mean = 0.0;
    for (double x : cell.second) cum_mean += x;
    row.mean_cum_loss = cum_mean / static_cast<double>(cell.second.size());
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace mdvpa

#endif  // MDVPA_METRICS_HPP
