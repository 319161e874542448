#ifndef MDVPA_EXPERIMENT_HPP
#define MDVPA_EXPERIMENT_HPP

// Experiment runner: configures model, filters and dataset, executes
// multi-seed runs, and writes records.csv / summary.csv / meta.txt plus an
// optional plot.tsv. All outputs are byte-deterministic for a given config.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mdvpa/common.hpp"
#include "mdvpa/datasets.hpp"
#include "mdvpa/filters.hpp"
#include "mdvpa/ihmm.hpp"
#include "mdvpa/metrics.hpp"

namespace mdvpa {

enum class DatasetKind { synthetic, text, msnbc, file };

inline const char* dataset_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::text: return "text";
    case DatasetKind::msnbc: return "msnbc";
    case DatasetKind::file: return "file";
  }
  return "?";
}

inline const std::vector<std::string> kDefaultTextPaths = {
    "data/texts/alice_in_wonderland.txt",
    "data/texts/moby_dick.txt",
    "data/texts/war_and_peace.txt",
};

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::synthetic;
  std::vector<std::string> inputs;  // text: 3 paths (empty = bundled), msnbc/file: 1 path
  std::vector<std::string> filters = {"mdvpa", "smc", "vpa"};
  std::size_t particles = 100;
  int initial_states = 0;
  std::vector<std::uint64_t> seeds = {1};
  double alpha = 1.0;
  double gamma = 1.0;
  double emission_beta = 1.0;
  EpsilonSchedule schedule;
  DenominatorVariant denominator = DenominatorVariant::geometric_mean;
  std::string out_dir = "out";
  std::size_t max_events = 10000;        // msnbc stream cap
  std::size_t chars_per_source = 600;    // text
  std::uint64_t data_seed = 15;          // synthetic generation; run seeds drive filters only
  bool plot = false;
  bool plot_variance = false;  // msnbc suppresses the variance column unless set

  void validate() const {
    if (filters.empty()) throw std::invalid_argument("config: need at least one filter");
    for (const std::string& f : filters)
      if (f != "smc" && f != "vpa" && f != "mdvpa")
        throw std::invalid_argument("config: unknown filter '" + f + "'");
    if (seeds.empty()) throw std::invalid_argument("config: need at least one seed");
    if (particles < 1) throw std::invalid_argument("config: particles must be >= 1");
    if (initial_states < 0) throw std::invalid_argument("config: m0 must be >= 0");
    if (alpha <= 0.0 || gamma <= 0.0 || emission_beta <= 0.0)
      throw std::invalid_argument("config: alpha, gamma, beta must be positive");
    if (schedule.kind == ScheduleKind::constant && schedule.value < 0.0)
      throw std::invalid_argument("config: constant epsilon must be >= 0");
    switch (dataset) {
      case DatasetKind::synthetic:
        if (!inputs.empty()) throw std::invalid_argument("config: synthetic takes no --input");
        break;
      case DatasetKind::text:
        if (!inputs.empty() && inputs.size() != 3)
          throw std::invalid_argument("config: text needs exactly 3 --input paths (or none)");
        break;
      case DatasetKind::msnbc:
      case DatasetKind::file:
        if (inputs.size() != 1)
          throw std::invalid_argument("config: this dataset needs exactly one --input path");
        break;
    }
  }
};

// The three pinned experiment setups.
inline ExperimentConfig make_preset(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "synthetic") {
    cfg.dataset = DatasetKind::synthetic;
    cfg.particles = 100;
    cfg.initial_states = 0;
    cfg.seeds.clear();
    for (std::uint64_t s = 1; s <= 20; ++s) cfg.seeds.push_back(s);
  } else if (name == "text") {
    cfg.dataset = DatasetKind::text;
    cfg.particles = 50;
    cfg.initial_states = 50;
    cfg.seeds = {1, 2, 3, 4, 5};
  } else if (name == "msnbc") {
    cfg.dataset = DatasetKind::msnbc;
    cfg.particles = 100;
    cfg.initial_states = 0;
    cfg.seeds = {1, 2, 3, 4, 5};
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return cfg;
}

struct ExperimentResult {
  std::vector<StepRecord> records;
  RunSummary summary;
  LabeledSequence data;
  std::vector<std::string> notes;
};

namespace detail {

inline LabeledSequence build_dataset(const ExperimentConfig& cfg, std::vector<std::string>& notes) {
  switch (cfg.dataset) {
    case DatasetKind::synthetic: {
      Rng rng(cfg.data_seed);
      return build_synthetic_experiment(rng);
    }
    case DatasetKind::text: {
      const std::vector<std::string>& paths = cfg.inputs.empty() ? kDefaultTextPaths : cfg.inputs;
      if (cfg.inputs.empty())
        notes.push_back(
            "bundled text sources: Alice in Wonderland, Moby-Dick, War and Peace "
            "(Moby-Dick substitutes a non-public-domain second source)");
      return load_text_chars(paths, cfg.chars_per_source);
    }
    case DatasetKind::msnbc: {
      const std::vector<std::vector<Symbol>> sessions = parse_msnbc(cfg.inputs[0]);
      LabeledSequence seq = concat_sessions(sessions, cfg.max_events, kMsnbcVocab);
      notes.push_back("msnbc sessions parsed: " + std::to_string(sessions.size()) +
                      ", events used: " + std::to_string(seq.symbols.size()) +
                      ", session starts recorded as boundaries");
      return seq;
    }
    case DatasetKind::file:
      return load_sequence(cfg.inputs[0]);
  }
  throw std::logic_error("unreachable dataset kind");
}

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string format_opt(const std::optional<double>& x) {
  return x ? format_double(*x) : std::string();
}

// Write-then-rename so partial output never lands under the final name.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write: " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string render_records_csv(const std::vector<StepRecord>& records) {
  std::string out = "n,filter,seed,pred_loglik,loss,free_energy,mean_M,ess\n";
  for (const StepRecord& r : records) {
    out += std::to_string(r.n) + ',' + r.filter + ',' + std::to_string(r.seed) + ',' +
           format_double(r.pred_loglik) + ',' + format_opt(r.loss) + ',' +
           format_double(r.free_energy) + ',' + format_double(r.mean_state_count) + ',' +
           format_opt(r.ess) + '\n';
  }
  return out;
}

inline std::string render_summary_csv(const RunSummary& summary) {
  std::string out = "filter,n,mean_pred_loglik,var_pred_loglik,runs,mean_cum_loss\n";
  for (const SummaryRow& row : summary.rows) {
    out += row.filter + ',' + std::to_string(row.n) + ',' + format_double(row.mean_pred_loglik) +
           ',' + format_opt(row.var_pred_loglik) + ',' + std::to_string(row.runs) + ',' +
           format_double(row.mean_cum_loss) + '\n';
  }
  return out;
}

inline std::string render_plot_tsv(const RunSummary& summary, bool include_variance) {
  std::string out;
  std::string current;
  for (const SummaryRow& row : summary.rows) {
    if (row.filter != current) {
      if (!current.empty()) out += "\n\n";
      current = row.filter;
      out += "# filter=" + current + "\n";
      out += "# n\tmean_pred_loglik\tvar_pred_loglik\tmean_cum_loss\n";
    }
    out += std::to_string(row.n) + '\t' + format_double(row.mean_pred_loglik) + '\t' +
           (include_variance ? format_opt(row.var_pred_loglik) : std::string()) + '\t' +
           format_double(row.mean_cum_loss) + '\n';
  }
  return out;
}

inline std::string render_meta(const ExperimentConfig& cfg, const ExperimentResult& result) {
  std::string out;
  out += std::string("dataset=") + dataset_name(cfg.dataset) + '\n';
  for (const std::string& p : cfg.inputs) out += "input=" + p + '\n';
  out += "vocab=" + std::to_string(result.data.vocab_size) + '\n';
  out += "length=" + std::to_string(result.data.symbols.size()) + '\n';
  out += "boundaries=";
  for (std::size_t i = 0; i < result.data.segment_boundaries.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(result.data.segment_boundaries[i]);
  }
  out += '\n';
  out += "filters=";
  for (std::size_t i = 0; i < cfg.filters.size(); ++i) {
    if (i > 0) out += ',';
    out += cfg.filters[i];
  }
  out += '\n';
  out += "particles=" + std::to_string(cfg.particles) + '\n';
  out += "m0=" + std::to_string(cfg.initial_states) + '\n';
  out += "seeds=";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(cfg.seeds[i]);
  }
  out += '\n';
  out += "alpha=" + format_double(cfg.alpha) + '\n';
  out += "gamma=" + format_double(cfg.gamma) + '\n';
  out += "beta=" + format_double(cfg.emission_beta) + '\n';
  out += std::string("schedule=") +
         (cfg.schedule.kind == ScheduleKind::reciprocal
              ? "reciprocal"
              : "constant:" + format_double(cfg.schedule.value)) +
         '\n';
  out += std::string("denominator=") +
         (cfg.denominator == DenominatorVariant::geometric_mean ? "geometric_mean"
                                                                : "arithmetic_sum") +
         '\n';
  out += "data_seed=" + std::to_string(cfg.data_seed) + '\n';
  if (cfg.dataset == DatasetKind::msnbc)
    out += "max_events=" + std::to_string(cfg.max_events) + '\n';
  for (const std::string& note : result.notes) out += "note=" + note + '\n';
  return out;
}

}  // namespace detail

// One (filter, seed) pass over the stream. Returns the per-step records and,
// when the filter degenerates, a note; records up to the failing step are
// kept. Weight normalization is asserted after every step.
inline std::pair<std::vector<StepRecord>, std::optional<std::string>> run_single(
    const std::string& filter_name, std::uint64_t seed, const LabeledSequence& data,
    const ExperimentConfig& cfg, const ModelConfig& model) {
  FilterConfig fc;
  fc.particle_count = cfg.particles;
  fc.initial_states = cfg.initial_states;
  fc.schedule = cfg.schedule;
  fc.seed = seed;
  fc.denominator = cfg.denominator;
  fc.model = model;

  Rng rng(seed);
  ParticleSet ps = init_particles(fc, rng);
  std::vector<StepRecord> records;
  const std::size_t n_total = data.symbols.size();
  for (std::size_t i = 0; i < n_total; ++i) {
    const Symbol y = data.symbols[i];
    const std::optional<Symbol> y_next =
        i + 1 < n_total ? std::optional<Symbol>(data.symbols[i + 1]) : std::nullopt;

    StepRecord rec;
    rec.n = i + 1;
    rec.filter = filter_name;
    rec.seed = seed;
    rec.pred_loglik = predictive_loglik(ps, model, y);

    try {
      if (filter_name == "smc") {
        double ess = 0.0;
        ps = smc_step(ps, y, fc, rng, &ess);
        rec.ess = ess;
      } else if (filter_name == "vpa") {
        ps = vpa_step(ps, y, fc);
      } else {
        ps = mdvpa_step(ps, y, y_next, fc);
      }
    } catch (const DegenerateFilterError& e) {
      return {std::move(records), "filter=" + filter_name + " seed=" + std::to_string(seed) +
                                      " degenerated: " + e.what()};
    }

    if (!ps.is_normalized(1e-10))
      throw std::logic_error("weights do not sum to 1 after step " + std::to_string(i + 1));

    if (y_next) rec.loss = loss_term(ps, model, *y_next);
    rec.free_energy = free_energy(ps);
    rec.mean_state_count = ps.mean_state_count();
    records.push_back(std::move(rec));
  }
  return {std::move(records), std::nullopt};
}

// Run every (filter, seed) pair over the configured dataset and write
// records.csv, summary.csv, meta.txt and optionally plot.tsv into out_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.data = detail::build_dataset(cfg, result.notes);

  const ModelConfig model = ModelConfig::nonparametric(result.data.vocab_size, cfg.alpha,
                                                       cfg.gamma, cfg.emission_beta);

  std::vector<std::string> filters = cfg.filters;
  std::sort(filters.begin(), filters.end());
  filters.erase(std::unique(filters.begin(), filters.end()), filters.end());
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  for (const std::string& filter : filters) {
    for (std::uint64_t seed : seeds) {
      auto [records, note] = run_single(filter, seed, result.data, cfg, model);
      result.records.insert(result.records.end(), records.begin(), records.end());
      if (note) result.notes.push_back(*note);
    }
  }
  result.summary = aggregate_runs(result.records);

  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  detail::write_file_atomic(dir / "records.csv", detail::render_records_csv(result.records));
  detail::write_file_atomic(dir / "summary.csv", detail::render_summary_csv(result.summary));
  detail::write_file_atomic(dir / "meta.txt", detail::render_meta(cfg, result));
  if (cfg.plot) {
    const bool variance = cfg.dataset != DatasetKind::msnbc || cfg.plot_variance;
    detail::write_file_atomic(dir / "plot.tsv", detail::render_plot_tsv(result.summary, variance));
  }
  return result;
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

inline double parse_double_field(const std::string& s, const std::string& path, std::size_t row) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty())
    throw DataError(path + " row " + std::to_string(row) + ": bad numeric field '" + s + "'");
  return v;
}

}  // namespace detail

// Re-read a records.csv and write the per-filter plot blocks. Malformed rows
// are reported with their row number (the header is row 1).
inline void emit_plot_data(const std::string& records_path, const std::string& out_path,
                           bool include_variance = true) {
  std::ifstream in(records_path);
  if (!in) throw DataError("cannot open records file: " + records_path);
  std::string line;
  std::size_t row = 0;
  std::vector<StepRecord> records;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1) {
      if (line != "n,filter,seed,pred_loglik,loss,free_energy,mean_M,ess")
        throw DataError(records_path + " row 1: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_row(line);
    if (f.size() != 8)
      throw DataError(records_path + " row " + std::to_string(row) + ": expected 8 fields, got " +
                      std::to_string(f.size()));
    StepRecord rec;
    rec.n = static_cast<std::size_t>(detail::parse_int_token(f[0], records_path, row));
    rec.filter = f[1];
    rec.seed = static_cast<std::uint64_t>(detail::parse_int_token(f[2], records_path, row));
    rec.pred_loglik = detail::parse_double_field(f[3], records_path, row);
    if (!f[4].empty()) rec.loss = detail::parse_double_field(f[4], records_path, row);
    rec.free_energy = detail::parse_double_field(f[5], records_path, row);
    rec.mean_state_count = detail::parse_double_field(f[6], records_path, row);
    if (!f[7].empty()) rec.ess = detail::parse_double_field(f[7], records_path, row);
    records.push_back(std::move(rec));
  }
  detail::write_file_atomic(out_path, detail::render_plot_tsv(aggregate_runs(records), include_variance));
}

}  // namespace mdvpa

#endif  // MDVPA_EXPERIMENT_HPP
