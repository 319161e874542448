// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line with a
// short measurement; the process exits with the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdvpa/common.hpp"
#include "mdvpa/datasets.hpp"
#include "mdvpa/experiment.hpp"
#include "mdvpa/filters.hpp"
#include "mdvpa/ihmm.hpp"
#include "mdvpa/metrics.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using mdvpa::State;
using mdvpa::Symbol;

int failures = 0;

double elapsed_s(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("[%s] %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<double> random_row(std::size_t n, mdvpa::Rng& rng) {
  std::vector<double> row(n);
  double sum = 0.0;
  for (double& x : row) {
    x = 0.05 + rng.next_double();
    sum += x;
  }
  for (double& x : row) x /= sum;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) acc += row[i];
  row[n - 1] = 1.0 - acc;
  return row;
}

mdvpa::HmmSpec random_spec(std::size_t states, std::size_t vocab, mdvpa::Rng& rng) {
  mdvpa::HmmSpec spec;
  for (std::size_t i = 0; i < states; ++i) {
    spec.transition.push_back(random_row(states, rng));
    spec.emission.push_back(random_row(vocab, rng));
  }
  spec.initial = random_row(states, rng);
  return spec;
}

double enumerated_loglik(const mdvpa::HmmSpec& spec, const std::vector<Symbol>& ys) {
  const std::size_t s = spec.num_states();
  std::vector<std::size_t> traj(ys.size(), 0);
  double total = 0.0;
  while (true) {
    double p = spec.initial[traj[0]] * spec.emission[traj[0]][ys[0] - 1];
    for (std::size_t t = 1; t < ys.size(); ++t)
      p *= spec.transition[traj[t - 1]][traj[t]] * spec.emission[traj[t]][ys[t] - 1];
    total += p;
    std::size_t i = 0;
    for (; i < traj.size(); ++i) {
      if (++traj[i] < s) break;
      traj[i] = 0;
    }
    if (i == traj.size()) break;
  }
  return std::log(total);
}

mdvpa::ParticleSet grown_set(const mdvpa::FilterConfig& cfg, mdvpa::Rng& rng, int steps) {
  mdvpa::Rng init_rng(cfg.seed);
  mdvpa::ParticleSet ps = mdvpa::init_particles(cfg, init_rng);
  for (int i = 0; i < steps; ++i)
    ps = mdvpa::vpa_step(ps, static_cast<Symbol>(1 + rng.next_index(cfg.model.vocab_size)), cfg);
  return ps;
}

// 1. SMC with exact fixed-mode potentials tracks the forward oracle.
void criterion_smc_oracle() {
  const auto start = Clock::now();
  const mdvpa::HmmSpec spec = mdvpa::synthetic_hmm_first();
  mdvpa::Rng data_rng(2024);
  const std::vector<Symbol> ys = mdvpa::generate_hmm(spec, 200, data_rng).symbols;
  const mdvpa::ForwardResult oracle = mdvpa::forward_loglik(spec, ys);

  mdvpa::FilterConfig cfg;
  cfg.particle_count = 2000;
  cfg.model = mdvpa::ModelConfig::fixed(spec);

  std::vector<double> mean_pred(ys.size(), 0.0);
  const int n_seeds = 20;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    mdvpa::Rng rng(seed);
    mdvpa::ParticleSet ps = mdvpa::init_particles(cfg, rng);
    for (std::size_t t = 0; t < ys.size(); ++t) {
      mean_pred[t] += mdvpa::predictive_loglik(ps, cfg.model, ys[t]) / n_seeds;
      ps = mdvpa::smc_step(ps, ys[t], cfg, rng);
    }
  }
  double max_err = 0.0;
  for (std::size_t t = 0; t < ys.size(); ++t)
    max_err = std::max(max_err, std::abs(mean_pred[t] - oracle.per_step[t]));
  const double secs = elapsed_s(start);
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max per-step deviation %.4f nats, bound 0.05; %.1f s, limit 30 s", max_err, secs);
  report(max_err <= 0.05 && secs < 30.0, "smc tracks the exact forward oracle", detail);
}

// 2. The forward oracle agrees with exhaustive trajectory enumeration.
void criterion_forward_enumeration() {
  const auto start = Clock::now();
  mdvpa::Rng rng(71);
  double max_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t states = 1 + rng.next_index(3);
    const std::size_t vocab = 2 + rng.next_index(3);
    const mdvpa::HmmSpec spec = random_spec(states, vocab, rng);
    const std::size_t len = 1 + rng.next_index(8);
    const std::vector<Symbol> ys = mdvpa::generate_hmm(spec, len, rng).symbols;
    max_err = std::max(
        max_err, std::abs(mdvpa::forward_loglik(spec, ys).total - enumerated_loglik(spec, ys)));
  }
  const double secs = elapsed_s(start);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "200 random HMMs, max |diff| %.2e, bound 1e-12; %.1f s",
                max_err, secs);
  report(max_err <= 1e-12 && secs < 5.0, "forward equals trajectory enumeration", detail);
}

// 3. mdvpa_step with eps = 0 reduces to vpa_step exactly.
void criterion_reduction_identity() {
  const auto start = Clock::now();
  mdvpa::Rng rng(73);
  bool all_equal = true;
  for (int trial = 0; trial < 100; ++trial) {
    mdvpa::FilterConfig cfg;
    cfg.particle_count = 1 + rng.next_index(8);
    cfg.initial_states = static_cast<int>(rng.next_index(3));
    cfg.seed = trial + 1;
    cfg.schedule = {mdvpa::ScheduleKind::constant, 0.0};
    cfg.model = mdvpa::ModelConfig::nonparametric(2 + static_cast<int>(rng.next_index(3)));
    const mdvpa::ParticleSet ps = grown_set(cfg, rng, 1 + static_cast<int>(rng.next_index(6)));
    const Symbol y = static_cast<Symbol>(1 + rng.next_index(cfg.model.vocab_size));
    const Symbol y_next = static_cast<Symbol>(1 + rng.next_index(cfg.model.vocab_size));
    const bool with_lookahead = mdvpa::mdvpa_step(ps, y, y_next, cfg) == mdvpa::vpa_step(ps, y, cfg);
    const bool without = mdvpa::mdvpa_step(ps, y, std::nullopt, cfg) == mdvpa::vpa_step(ps, y, cfg);
    all_equal = all_equal && with_lookahead && without;
  }
  const double secs = elapsed_s(start);
  char detail[96];
  std::snprintf(detail, sizeof(detail), "100 random particle sets, exact equality; %.1f s", secs);
  report(all_equal && secs < 5.0, "eps=0 mirror-descent step equals the greedy step", detail);
}

// 4. Geometric-mean selection is invariant to lookahead-potential scaling.
// Non-unit hyperparameters keep distinct candidates from tying exactly, so
// the selected states are comparable and not at the mercy of last-ulp
// rounding among true ties.
void criterion_scale_invariance() {
  mdvpa::Rng rng(79);
  double max_dev = 0.0;
  bool same_selection = true;
  for (int trial = 0; trial < 20; ++trial) {
    mdvpa::FilterConfig cfg;
    cfg.particle_count = 2 + rng.next_index(6);
    cfg.seed = trial + 1;
    cfg.model = mdvpa::ModelConfig::nonparametric(2 + static_cast<int>(rng.next_index(3)),
                                                  0.5 + rng.next_double(), 0.5 + rng.next_double(),
                                                  0.5 + rng.next_double());
    const mdvpa::ParticleSet ps = grown_set(cfg, rng, 2 + static_cast<int>(rng.next_index(5)));
    const Symbol y = static_cast<Symbol>(1 + rng.next_index(cfg.model.vocab_size));
    const Symbol y_next = static_cast<Symbol>(1 + rng.next_index(cfg.model.vocab_size));
    const double eps = 0.1 + rng.next_double();
    const auto evals = mdvpa::evaluate_candidates(ps, y, y_next, cfg);
    const mdvpa::ParticleSet base = mdvpa::select_k_largest(
        ps, mdvpa::combine_candidates(evals, eps, mdvpa::DenominatorVariant::geometric_mean), y,
        cfg);
    for (const double c : {1e-6, 1e6}) {
      auto scaled = evals;
      for (mdvpa::CandidateEval& e : scaled) e.log_f_next += std::log(c);
      const mdvpa::ParticleSet out = mdvpa::select_k_largest(
          ps, mdvpa::combine_candidates(scaled, eps, mdvpa::DenominatorVariant::geometric_mean), y,
          cfg);
      for (std::size_t i = 0; i < out.particles.size(); ++i) {
        same_selection = same_selection && out.particles[i].state == base.particles[i].state;
        max_dev = std::max(max_dev, std::abs(std::exp(out.particles[i].log_weight) -
                                             std::exp(base.particles[i].log_weight)));
      }
    }
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail), "c in {1e-6, 1e6}, max weight deviation %.2e, bound 1e-9",
                max_dev);
  report(same_selection && max_dev <= 1e-9, "lookahead scaling leaves selection invariant", detail);
}

// 5 and 6 share the synthetic preset output.
struct SyntheticRuns {
  mdvpa::ExperimentResult result;
  bool byte_identical = false;
  double secs = 0.0;
};

SyntheticRuns run_synthetic_preset() {
  const auto start = Clock::now();
  SyntheticRuns out;
  mdvpa::ExperimentConfig cfg = mdvpa::make_preset("synthetic");
  const fs::path base = fs::temp_directory_path() / "mdvpa_acceptance";
  fs::create_directories(base);
  cfg.out_dir = (base / "synthetic_a").string();
  out.result = mdvpa::run_experiment(cfg);
  mdvpa::ExperimentConfig again = cfg;
  again.out_dir = (base / "synthetic_b").string();
  mdvpa::run_experiment(again);
  out.byte_identical = read_bytes(fs::path(cfg.out_dir) / "records.csv") ==
                       read_bytes(fs::path(again.out_dir) / "records.csv");
  out.secs = elapsed_s(start);
  return out;
}

// 6. Post-changepoint, MD-VPA outperforms SMC and VPA on the synthetic
// stream: one-sided paired t over per-step seed means, plus a variance check.
void criterion_tracking(const SyntheticRuns& runs) {
  std::map<std::string, std::map<std::size_t, double>> mean_pred;
  std::map<std::string, std::map<std::size_t, double>> var_pred;
  for (const mdvpa::SummaryRow& row : runs.result.summary.rows) {
    mean_pred[row.filter][row.n] = row.mean_pred_loglik;
    if (row.var_pred_loglik) var_pred[row.filter][row.n] = *row.var_pred_loglik;
  }

  const auto paired_t = [&](const std::string& a, const std::string& b) {
    std::vector<double> d;
    for (std::size_t n = 151; n <= 300; ++n)
      d.push_back(mean_pred[a][n] - mean_pred[b][n]);
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(d.size() - 1));
    return mean / (sd / std::sqrt(static_cast<double>(d.size())));
  };

  // One-sided 5% critical value for 149 degrees of freedom.
  const double t_crit = 1.655;
  const double t_smc = paired_t("mdvpa", "smc");
  const double t_vpa = paired_t("mdvpa", "vpa");

  double var_mdvpa = 0.0, var_smc = 0.0;
  for (std::size_t n = 151; n <= 300; ++n) {
    var_mdvpa += var_pred["mdvpa"][n];
    var_smc += var_pred["smc"][n];
  }

  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "t(mdvpa>smc)=%.2f, t(mdvpa>vpa)=%.2f, crit %.3f; seed-variance %.3g vs smc %.3g; "
                "%.0f s, limit 120 s",
                t_smc, t_vpa, t_crit, var_mdvpa / 150.0, var_smc / 150.0, runs.secs);
  report(t_smc > t_crit && t_vpa > t_crit && var_mdvpa <= var_smc && runs.secs < 120.0,
         "mdvpa tracks the changepoint better than smc and vpa", detail);
}

// 7. Free-energy decomposition Phi = KL + L on enumerated trajectories.
void criterion_decomposition() {
  mdvpa::Rng rng(83);
  double max_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const mdvpa::HmmSpec spec = random_spec(2, 2, rng);
    const std::vector<Symbol> ys = {static_cast<Symbol>(1 + rng.next_index(2)),
                                    static_cast<Symbol>(1 + rng.next_index(2))};
    // Unnormalized posterior over the four trajectories (x1, x2).
    std::vector<double> joint;
    for (std::size_t x1 = 0; x1 < 2; ++x1)
      for (std::size_t x2 = 0; x2 < 2; ++x2)
        joint.push_back(spec.initial[x1] * spec.emission[x1][ys[0] - 1] *
                        spec.transition[x1][x2] * spec.emission[x2][ys[1] - 1]);
    double z = 0.0;
    for (double f : joint) z += f;
    const double phi = std::log(z);

    std::vector<std::vector<double>> qs;
    qs.push_back({0.25, 0.25, 0.25, 0.25});
    std::vector<double> posterior;
    for (double f : joint) posterior.push_back(f / z);
    qs.push_back(posterior);
    qs.push_back(random_row(4, rng));

    for (const std::vector<double>& q : qs) {
      double l = 0.0, kl = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        if (q[i] <= 0.0) continue;
        l += q[i] * (std::log(joint[i]) - std::log(q[i]));
        kl += q[i] * (std::log(q[i]) - std::log(joint[i] / z));
      }
      max_err = std::max(max_err, std::abs(kl + l - phi));
    }
  }
  char detail[96];
  std::snprintf(detail, sizeof(detail), "20 enumerated instances, max |KL+L-Phi| %.2e, bound 1e-9",
                max_err);
  report(max_err <= 1e-9, "free energy decomposes as Phi = KL + L", detail);
}

// 8 and 9. Transition-count conservation, continuous weight normalization,
// and the positive-selected-weight precondition, across all three filters.
void criterion_counts_and_normalization() {
  bool counts_ok = true, norm_ok = true;
  std::string note = "counts n-1 and weight sums within 1e-10 at every step";
  try {
    for (const int m0 : {0, 3}) {
      mdvpa::FilterConfig cfg;
      cfg.particle_count = 16;
      cfg.initial_states = m0;
      cfg.model = mdvpa::ModelConfig::nonparametric(4);
      mdvpa::Rng data_rng(101 + m0);
      std::vector<Symbol> ys;
      for (int i = 0; i < 40; ++i)
        ys.push_back(static_cast<Symbol>(1 + data_rng.next_index(4)));

      for (const std::string filter : {"smc", "vpa", "mdvpa"}) {
        mdvpa::Rng rng(7);
        mdvpa::ParticleSet ps = mdvpa::init_particles(cfg, rng);
        for (std::size_t i = 0; i < ys.size(); ++i) {
          const std::optional<Symbol> y_next =
              i + 1 < ys.size() ? std::optional<Symbol>(ys[i + 1]) : std::nullopt;
          if (filter == "smc")
            ps = mdvpa::smc_step(ps, ys[i], cfg, rng);
          else if (filter == "vpa")
            ps = mdvpa::vpa_step(ps, ys[i], cfg);
          else
            ps = mdvpa::mdvpa_step(ps, ys[i], y_next, cfg);
          norm_ok = norm_ok && ps.is_normalized(1e-10);
          for (const mdvpa::Particle& p : ps.particles)
            counts_ok = counts_ok && p.stats.trans_grand_total() == i;
        }
      }
    }
  } catch (const std::exception& e) {
    counts_ok = norm_ok = false;
    note = std::string("exception: ") + e.what();
  }
  report(counts_ok, "every particle accumulates exactly n-1 transition counts",
         "all filters, m0 in {0, 3}, 40 steps");
  report(norm_ok, "weights stay normalized after every step", note);
}

// 10. MSNBC fixture round-trip and range rejection.
void criterion_msnbc_parser() {
  bool ok = true;
  std::string note;
  try {
    const std::string fixture = MDVPA_FIXTURE_DIR "/msnbc_50.txt";
    const auto sessions = mdvpa::parse_msnbc(fixture);
    ok = ok && sessions.size() == 50;
    const fs::path tmp = fs::temp_directory_path() / "mdvpa_acceptance_msnbc.txt";
    mdvpa::save_msnbc(sessions, tmp.string());
    ok = ok && read_bytes(tmp) == read_bytes(fixture);
    fs::remove(tmp);

    const fs::path bad = fs::temp_directory_path() / "mdvpa_acceptance_msnbc_bad.txt";
    {
      std::ofstream out(bad);
      out << "1 2 3\n4 5\n6 18 7\n";
    }
    bool rejected = false;
    try {
      mdvpa::parse_msnbc(bad.string());
    } catch (const mdvpa::DataError& e) {
      rejected = std::string(e.what()).find(":3:") != std::string::npos;
    }
    fs::remove(bad);
    ok = ok && rejected;
    note = "50-line fixture byte round-trip; out-of-range token rejected at its line";
  } catch (const std::exception& e) {
    ok = false;
    note = std::string("exception: ") + e.what();
  }
  report(ok, "msnbc parser round-trips and rejects bad categories", note);
}

}  // namespace

int main() {
  criterion_smc_oracle();
  criterion_forward_enumeration();
  criterion_reduction_identity();
  criterion_scale_invariance();

  const SyntheticRuns runs = run_synthetic_preset();
  char detail[96];
  std::snprintf(detail, sizeof(detail), "records.csv byte-identical across reruns; %.0f s",
                runs.secs);
  report(runs.byte_identical, "synthetic preset is end-to-end deterministic", detail);
  criterion_tracking(runs);

  criterion_decomposition();
  criterion_counts_and_normalization();
  criterion_msnbc_parser();

  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
