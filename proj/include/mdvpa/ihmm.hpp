#ifndef MDVPA_IHMM_HPP
#define MDVPA_IHMM_HPP

// Infinite-capacity HMM core: sufficient statistics and their deterministic
// recursion, the Chinese-restaurant-franchise transition predictive, the
// Dirichlet-multinomial emission predictive, and the MRF potential
// f(x, y) = p(y|x) p(x|x_prev). A fixed-parameter mode (known transition and
// emission matrices) backs exact-oracle tests.

#include <cassert>
#include <cstdint>
#include <vector>

#include "mdvpa/common.hpp"

namespace mdvpa {

// A fully known finite HMM: used for data generation and as the fixed mode
// of the potential function.
struct HmmSpec {
  std::vector<std::vector<double>> transition;  // num_states x num_states
  std::vector<std::vector<double>> emission;    // num_states x vocab
  std::vector<double> initial;                  // num_states

  std::size_t num_states() const { return transition.size(); }
  std::size_t vocab_size() const { return emission.empty() ? 0 : emission.front().size(); }

  // Rows and the initial vector must be probability vectors (sum 1 within
  // 1e-12, entries in [0,1]).
  void validate() const {
    auto check_row = [](const std::vector<double>& row, const char* what) {
      double sum = 0.0;
      for (double p : row) {
        if (p < 0.0 || p > 1.0)
          throw std::invalid_argument(std::string(what) + ": entry outside [0,1]");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
    };
    if (transition.size() != emission.size() || transition.size() != initial.size())
      throw std::invalid_argument("HmmSpec: inconsistent dimensions");
    for (const auto& row : transition) {
      if (row.size() != transition.size())
        throw std::invalid_argument("HmmSpec: transition matrix not square");
      check_row(row, "transition");
    }
    for (const auto& row : emission) {
      if (row.size() != vocab_size())
        throw std::invalid_argument("HmmSpec: ragged emission matrix");
      check_row(row, "emission");
    }
    check_row(initial, "initial");
  }
};

enum class ModelMode { nonparametric, fixed };

struct ModelConfig {
  double alpha = 1.0;          // CRF concentration, state-local
  double gamma = 1.0;          // CRF concentration, global
  double emission_beta = 1.0;  // symmetric Dirichlet pseudo-count per symbol
  int vocab_size = 0;
  ModelMode mode = ModelMode::nonparametric;
  HmmSpec fixed_spec;  // meaningful only in fixed mode

  static ModelConfig nonparametric(int vocab, double alpha = 1.0, double gamma = 1.0,
                                   double beta = 1.0) {
    ModelConfig cfg;
    cfg.alpha = alpha;
    cfg.gamma = gamma;
    cfg.emission_beta = beta;
    cfg.vocab_size = vocab;
    cfg.validate();
    return cfg;
  }

  static ModelConfig fixed(HmmSpec spec) {
    spec.validate();
    ModelConfig cfg;
    cfg.mode = ModelMode::fixed;
    cfg.vocab_size = static_cast<int>(spec.vocab_size());
    cfg.fixed_spec = std::move(spec);
    cfg.validate();
    return cfg;
  }

  void validate() const {
    if (alpha <= 0.0 || gamma <= 0.0 || emission_beta <= 0.0)
      throw std::invalid_argument("ModelConfig: concentrations and beta must be positive");
    if (vocab_size < 1) throw std::invalid_argument("ModelConfig: vocab_size must be >= 1");
    if (mode == ModelMode::fixed) {
      fixed_spec.validate();
      if (static_cast<int>(fixed_spec.vocab_size()) != vocab_size)
        throw std::invalid_argument("ModelConfig: fixed spec vocab inconsistent");
    }
  }
};

// The per-particle sufficient statistics c_n: the distinct-state count M plus
// transition and emission counts. Value type; update_stats returns a copy.
// Counts are stored densely (M x M and M x vocab), which keeps the per-step
// copy a memcpy and every lookup O(1). Accessors return 0 for any state
// beyond M, so a never-instantiated state reads as an empty row.
class SufficientStats {
 public:
  SufficientStats() = default;
  SufficientStats(int initial_states, int vocab) : vocab_(vocab) {
    assert(initial_states >= 0 && vocab >= 1);
    grow_to(initial_states);
  }

  int num_states() const { return m_; }
  int vocab() const { return vocab_; }

  std::uint32_t trans_count(State from, State to) const {
    if (!in_range(from) || !in_range(to)) return 0;
    return trans_[idx(from, to, m_)];
  }
  std::uint64_t trans_row_total(State from) const {
    return in_range(from) ? trans_row_[from - 1] : 0;
  }
  std::uint64_t trans_col_total(State to) const {
    return in_range(to) ? trans_col_[to - 1] : 0;
  }
  std::uint64_t trans_grand_total() const { return trans_total_; }

  std::uint32_t emis_count(State s, Symbol y) const {
    if (!in_range(s)) return 0;
    assert(y >= 1 && y <= vocab_);
    return emis_[idx(s, y, vocab_)];
  }
  std::uint64_t emis_row_total(State s) const { return in_range(s) ? emis_row_[s - 1] : 0; }
  std::uint64_t emis_grand_total() const { return emis_total_; }

  // One recursion step: count the transition prev -> state (when prev
  // exists) and the emission (state, y). state == kNewState instantiates
  // index M+1.
  void apply_update(State prev, State state, Symbol y) {
    State s = state == kNewState ? m_ + 1 : state;
    if (s > m_) grow_to(s);
    assert(s >= 1 && s <= m_);
    if (prev != kNoState) {
      assert(in_range(prev));
      ++trans_[idx(prev, s, m_)];
      ++trans_row_[prev - 1];
      ++trans_col_[s - 1];
      ++trans_total_;
    }
    assert(y >= 1 && y <= vocab_);
    ++emis_[idx(s, y, vocab_)];
    ++emis_row_[s - 1];
    ++emis_total_;
  }

  friend bool operator==(const SufficientStats&, const SufficientStats&) = default;

 private:
  static std::size_t idx(State row, int col, int ncols) {
    return static_cast<std::size_t>(row - 1) * static_cast<std::size_t>(ncols) +
           static_cast<std::size_t>(col - 1);
  }
  bool in_range(State s) const { return s >= 1 && s <= m_; }

  void grow_to(int new_m) {
    if (new_m <= m_) return;
    std::vector<std::uint32_t> trans(static_cast<std::size_t>(new_m) * new_m, 0);
    for (State j = 1; j <= m_; ++j)
      for (State c = 1; c <= m_; ++c) trans[idx(j, c, new_m)] = trans_[idx(j, c, m_)];
    trans_.swap(trans);
    trans_row_.resize(new_m, 0);
    trans_col_.resize(new_m, 0);
    emis_.resize(static_cast<std::size_t>(new_m) * vocab_, 0);
    emis_row_.resize(new_m, 0);
    m_ = new_m;
  }

  int m_ = 0;
  int vocab_ = 1;
  std::vector<std::uint32_t> trans_;      // m_ x m_, row-major
  std::vector<std::uint32_t> trans_row_;  // outgoing totals R_j
  std::vector<std::uint32_t> trans_col_;  // incoming totals S_c
  std::uint64_t trans_total_ = 0;         // T
  std::vector<std::uint32_t> emis_;       // m_ x vocab_, row-major
  std::vector<std::uint32_t> emis_row_;
  std::uint64_t emis_total_ = 0;
};

inline SufficientStats new_stats(int initial_states, int vocab) {
  return SufficientStats(initial_states, vocab);
}

// Transition predictive from one state: a probability for each instantiated
// state plus one mass for "a state never instantiated so far".
struct TransitionPredictive {
  std::vector<double> existing;  // existing[i] = p(next = i+1 | prev)
  double new_mass = 0.0;

  double total() const {
    double t = new_mass;
    for (double p : existing) t += p;
    return t;
  }
};

// Chinese-restaurant-franchise predictive
//   p(c | prev) = (t_{prev,c} + alpha * S_c / (T + gamma)) / (R_prev + alpha)
//   p(new| prev) = alpha * gamma / ((R_prev + alpha) (T + gamma))
// with R_prev the outgoing total of prev, S_c the incoming total of c and T
// the grand total. With M = 0 the whole mass is on `new`.
inline TransitionPredictive crf_transition_predictive(const SufficientStats& stats,
                                                      const ModelConfig& cfg, State prev) {
  const int m = stats.num_states();
  if (m == 0) return TransitionPredictive{{}, 1.0};
  if (prev < 1 || prev > m)
    throw std::invalid_argument("crf_transition_predictive: prev_state out of range");
  const double alpha = cfg.alpha;
  const double gamma = cfg.gamma;
  const double r_prev = static_cast<double>(stats.trans_row_total(prev));
  const double t_total = static_cast<double>(stats.trans_grand_total());
  const double denom = r_prev + alpha;
  const double oracle_denom = t_total + gamma;
  TransitionPredictive out;
  out.existing.resize(m);
  for (State c = 1; c <= m; ++c) {
    const double direct = static_cast<double>(stats.trans_count(prev, c));
    const double oracle = alpha * static_cast<double>(stats.trans_col_total(c)) / oracle_denom;
    out.existing[c - 1] = (direct + oracle) / denom;
  }
  out.new_mass = alpha * gamma / (denom * oracle_denom);
  return out;
}

// Dirichlet-multinomial emission predictive. A state beyond M (including
// kNewState) has empty counts and yields the uniform beta/(V*beta) = 1/V.
inline double emission_predictive(const SufficientStats& stats, const ModelConfig& cfg,
                                  State state, Symbol y) {
  if (y < 1 || y > cfg.vocab_size)
    throw std::invalid_argument("emission_predictive: symbol out of range");
  const double beta = cfg.emission_beta;
  const double count =
      state == kNewState || state == kNoState ? 0.0 : static_cast<double>(stats.emis_count(state, y));
  const double row = state == kNewState || state == kNoState
                         ? 0.0
                         : static_cast<double>(stats.emis_row_total(state));
  return (count + beta) / (row + cfg.vocab_size * beta);
}

// Potential f(x, y) = p(y | x) p(x | x_prev). Nonparametric mode combines the
// two predictives above; fixed mode reads the HmmSpec matrices.
inline double potential(const SufficientStats& stats, const ModelConfig& cfg, State prev,
                        State state, Symbol y) {
  if (cfg.mode == ModelMode::fixed) {
    const HmmSpec& spec = cfg.fixed_spec;
    const int s = static_cast<int>(spec.num_states());
    if (prev < 1 || prev > s || state < 1 || state > s)
      throw std::invalid_argument("potential: state index out of range for fixed spec");
    if (y < 1 || y > cfg.vocab_size)
      throw std::invalid_argument("potential: symbol out of range");
    return spec.emission[state - 1][y - 1] * spec.transition[prev - 1][state - 1];
  }
  const TransitionPredictive pred = crf_transition_predictive(stats, cfg, prev);
  double trans;
  if (state == kNewState || state > stats.num_states()) {
    trans = pred.new_mass;
  } else {
    if (state < 1) throw std::invalid_argument("potential: invalid state index");
    trans = pred.existing[state - 1];
  }
  return emission_predictive(stats, cfg, state, y) * trans;
}

// The deterministic recursion C(c, x_prev, x, y): purely functional, the
// input value is left untouched.
inline SufficientStats update_stats(const SufficientStats& stats, State prev, State state,
                                    Symbol y) {
  SufficientStats next = stats;
  next.apply_update(prev, state, y);
  return next;
}

}  // namespace mdvpa

#endif  // MDVPA_IHMM_HPP
