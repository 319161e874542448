#ifndef MDVPA_DATASETS_HPP
#define MDVPA_DATASETS_HPP

// Data generation and ingestion: the synthetic changepoint stream, character
// streams from concatenated texts, the MSNBC web-click log, and a plain
// internal sequence format.

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mdvpa/common.hpp"
#include "mdvpa/ihmm.hpp"

namespace mdvpa {

inline constexpr int kTextVocab = 27;    // 'a'..'z' plus a catch-all
inline constexpr int kMsnbcVocab = 17;

// A symbol stream with the step indices where the generating source changes.
// A boundary b means the segment starting at step b (1-based).
struct LabeledSequence {
  std::vector<Symbol> symbols;
  std::vector<std::size_t> segment_boundaries;
  int vocab_size = 0;

  void validate() const {
    if (vocab_size < 1) throw std::invalid_argument("LabeledSequence: vocab_size must be >= 1");
    if (symbols.empty()) throw std::invalid_argument("LabeledSequence: empty symbol stream");
    for (Symbol y : symbols)
      if (y < 1 || y > vocab_size)
        throw std::invalid_argument("LabeledSequence: symbol out of range");
    std::size_t prev = 1;
    for (std::size_t b : segment_boundaries) {
      if (b <= prev || b > symbols.size())
        throw std::invalid_argument("LabeledSequence: boundary outside (1, length]");
      prev = b;
    }
  }

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

struct GeneratedSequence {
  std::vector<State> states;
  std::vector<Symbol> symbols;
};

// Ancestral sampling: x_1 ~ initial, x_t ~ transition row, y_t ~ emission row.
inline GeneratedSequence generate_hmm(const HmmSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("generate_hmm: n must be >= 1");
  GeneratedSequence out;
  out.states.reserve(n);
  out.symbols.reserve(n);
  State x = static_cast<State>(rng.next_categorical(spec.initial)) + 1;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) x = static_cast<State>(rng.next_categorical(spec.transition[x - 1])) + 1;
    out.states.push_back(x);
    out.symbols.push_back(static_cast<Symbol>(rng.next_categorical(spec.emission[x - 1])) + 1);
  }
  return out;
}

// The two generating HMMs of the synthetic changepoint stream. The first is
// 3 states over 3 symbols, the second 4 states over 8 symbols; both start
// uniformly at random.
inline HmmSpec synthetic_hmm_first() {
  HmmSpec spec;
  spec.transition = {{0.0, 0.5, 0.5}, {0.5, 0.5, 0.0}, {0.5, 0.0, 0.5}};
  spec.emission = {{0.5, 0.0, 0.5}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.0, 0.5, 0.5}};
  spec.initial = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  spec.validate();
  return spec;
}

inline HmmSpec synthetic_hmm_second() {
  const double t = 1.0 / 3;
  HmmSpec spec;
  spec.transition = {{0.0, 0.5, 0.5, 0.0},
                     {0.0, 0.0, 0.5, 0.5},
                     {0.5, 0.0, 0.0, 0.5},
                     {0.5, 0.5, 0.0, 0.0}};
  spec.emission = {{t, 0.0, 0.0, 0.0, 0.0, 0.0, t, t},
                   {t, t, t, 0.0, 0.0, 0.0, 0.0, 0.0},
                   {0.0, 0.0, t, t, t, 0.0, 0.0, 0.0},
                   {0.0, 0.0, 0.0, 0.0, t, t, t, 0.0}};
  spec.initial = {0.25, 0.25, 0.25, 0.25};
  spec.validate();
  return spec;
}

// 150 steps from the first source followed by 150 from the second, on the
// union alphabet of 8 symbols (the first source only ever emits 1..3).
inline LabeledSequence build_synthetic_experiment(Rng& rng) {
  LabeledSequence seq;
  seq.vocab_size = 8;
  const GeneratedSequence a = generate_hmm(synthetic_hmm_first(), 150, rng);
  const GeneratedSequence b = generate_hmm(synthetic_hmm_second(), 150, rng);
  seq.symbols = a.symbols;
  seq.symbols.insert(seq.symbols.end(), b.symbols.begin(), b.symbols.end());
  seq.segment_boundaries = {151};
  seq.validate();
  return seq;
}

inline Symbol text_symbol(unsigned char c) {
  const int lower = std::tolower(c);
  if (lower >= 'a' && lower <= 'z') return lower - 'a' + 1;
  return kTextVocab;
}

// The first chars_per_source characters of each file, lowercased and mapped
// onto the 27-symbol alphabet (every byte counts, unmapped bytes become the
// catch-all), concatenated with boundaries at each source change.
inline LabeledSequence load_text_chars(const std::vector<std::string>& paths,
                                       std::size_t chars_per_source) {
  if (chars_per_source < 1)
    throw std::invalid_argument("load_text_chars: chars_per_source must be >= 1");
  LabeledSequence seq;
  seq.vocab_size = kTextVocab;
  for (const std::string& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open text file: " + path);
    if (!seq.symbols.empty()) seq.segment_boundaries.push_back(seq.symbols.size() + 1);
    std::size_t taken = 0;
    char c;
    while (taken < chars_per_source && in.get(c)) {
      seq.symbols.push_back(text_symbol(static_cast<unsigned char>(c)));
      ++taken;
    }
    if (taken < chars_per_source)
      throw DataError("text file too short: " + path + " has " + std::to_string(taken) +
                      " characters, need " + std::to_string(chars_per_source));
  }
  seq.validate();
  return seq;
}

namespace detail {

inline long parse_int_token(const std::string& tok, const std::string& path, std::size_t line_no) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw DataError(path + ":" + std::to_string(line_no) + ": not an integer: '" + tok + "'");
  return value;
}

}  // namespace detail

// The MSNBC anonymous-web-data format: '%' lines are metadata, every other
// non-blank line is one user session of whitespace-separated page categories
// in 1..17.
inline std::vector<std::vector<Symbol>> parse_msnbc(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open MSNBC file: " + path);
  std::vector<std::vector<Symbol>> sessions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '%') continue;
    std::istringstream tokens(line);
    std::vector<Symbol> session;
    std::string tok;
    while (tokens >> tok) {
      const long value = detail::parse_int_token(tok, path, line_no);
      if (value < 1 || value > kMsnbcVocab)
        throw DataError(path + ":" + std::to_string(line_no) + ": category " +
                        std::to_string(value) + " out of range 1.." + std::to_string(kMsnbcVocab));
      session.push_back(static_cast<Symbol>(value));
    }
    if (!session.empty()) sessions.push_back(std::move(session));
  }
  return sessions;
}

inline void save_msnbc(const std::vector<std::vector<Symbol>>& sessions, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write MSNBC file: " + path);
  for (const std::vector<Symbol>& session : sessions) {
    for (std::size_t i = 0; i < session.size(); ++i) {
      if (i > 0) out << ' ';
      out << session[i];
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

// Sessions concatenated in file order into one stream, boundaries at each
// session start, truncated to max_events symbols (0 = no cap).
inline LabeledSequence concat_sessions(const std::vector<std::vector<Symbol>>& sessions,
                                       std::size_t max_events, int vocab) {
  LabeledSequence seq;
  seq.vocab_size = vocab;
  for (const std::vector<Symbol>& session : sessions) {
    if (max_events > 0 && seq.symbols.size() >= max_events) break;
    if (!seq.symbols.empty()) seq.segment_boundaries.push_back(seq.symbols.size() + 1);
    for (Symbol y : session) {
      if (max_events > 0 && seq.symbols.size() >= max_events) break;
      seq.symbols.push_back(y);
    }
  }
  seq.validate();
  return seq;
}

// Internal sequence format: a `vocab=<V> boundaries=<comma-list>` header,
// '#' comment lines, then whitespace-separated symbols.
inline void save_sequence(const LabeledSequence& seq, const std::string& path) {
  seq.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write sequence file: " + path);
  out << "vocab=" << seq.vocab_size << " boundaries=";
  for (std::size_t i = 0; i < seq.segment_boundaries.size(); ++i) {
    if (i > 0) out << ',';
    out << seq.segment_boundaries[i];
  }
  out << '\n';
  for (std::size_t i = 0; i < seq.symbols.size(); ++i) {
    out << seq.symbols[i];
    out << ((i + 1) % 20 == 0 || i + 1 == seq.symbols.size() ? '\n' : ' ');
  }
  if (!out) throw DataError("write failed: " + path);
}

inline LabeledSequence load_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sequence file: " + path);
  LabeledSequence seq;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream tokens(line);
    if (!have_header) {
      std::string vocab_tok, bounds_tok;
      tokens >> vocab_tok >> bounds_tok;
      if (vocab_tok.rfind("vocab=", 0) != 0 || bounds_tok.rfind("boundaries=", 0) != 0)
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": expected header 'vocab=<V> boundaries=<list>'");
      seq.vocab_size =
          static_cast<int>(detail::parse_int_token(vocab_tok.substr(6), path, line_no));
      std::string bounds = bounds_tok.substr(11);
      std::size_t pos = 0;
      while (pos < bounds.size()) {
        std::size_t comma = bounds.find(',', pos);
        if (comma == std::string::npos) comma = bounds.size();
        seq.segment_boundaries.push_back(static_cast<std::size_t>(
            detail::parse_int_token(bounds.substr(pos, comma - pos), path, line_no)));
        pos = comma + 1;
      }
      have_header = true;
      continue;
    }
    std::string tok;
    while (tokens >> tok)
      seq.symbols.push_back(static_cast<Symbol>(detail::parse_int_token(tok, path, line_no)));
  }
  if (!have_header) throw DataError(path + ": missing header line");
  try {
    seq.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(path + ": " + e.what());
  }
  return seq;
}

}  // namespace mdvpa

#endif  // MDVPA_DATASETS_HPP
