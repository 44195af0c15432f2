#pragma once

// Corpus ingestion (tab-separated, one annotated sentence per row), the
// subword vocabulary, tokenization, balanced sampling and split carving.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "headprune/errors.hpp"
#include "headprune/nn.hpp"
#include "headprune/rng.hpp"

namespace headprune {

class SchemaError : public DataError {
 public:
  explicit SchemaError(const std::string& what) : DataError("schema: " + what) {}
};

enum class Split { kTrain, kTest };

inline const char* to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

struct CorpusRecord {
  std::string id;
  std::string expression;
  std::string sentence;
  bool idiom = false;
  std::optional<bool> metaphor;
  Split split = Split::kTrain;

  friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

enum class LabelColumn { kIdiom, kMetaphor };

struct TaskSpec {
  LabelColumn label_column = LabelColumn::kIdiom;
  std::string positive_value = "Yes";

  std::string name() const { return label_column == LabelColumn::kIdiom ? "idiom" : "metaphor"; }

  static TaskSpec parse(const std::string& name) {
    if (name == "idiom") return {LabelColumn::kIdiom};
    if (name == "metaphor") return {LabelColumn::kMetaphor};
    throw UsageError("unknown task '" + name + "' (expected idiom or metaphor)");
  }

  std::optional<int> label_of(const CorpusRecord& r) const {
    if (label_column == LabelColumn::kIdiom) return r.idiom ? 1 : 0;
    if (!r.metaphor) return std::nullopt;
    return *r.metaphor ? 1 : 0;
  }

  /// Label of `r`, or a DataError if the record lacks this task's column.
  int require_label(const CorpusRecord& r) const {
    auto label = label_of(r);
    if (!label) throw DataError("record " + r.id + " has no " + name() + " label");
    return *label;
  }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

inline std::optional<bool> parse_yes_no(const std::string& raw) {
  const std::string v = lower(trim(raw));
  if (v == "yes") return true;
  if (v == "no") return false;
  return std::nullopt;
}

}  // namespace detail

inline constexpr const char* kCorpusColumns[] = {"id", "expression", "sentence", "idiom", "metaphor", "split"};

/// Parses corpus text. Header names are matched case-insensitively and may
/// appear in any order; the metaphor column is optional.
inline std::vector<CorpusRecord> parse_corpus(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::map<std::string, std::size_t> col;
  const auto header = detail::split_tabs(line);
  for (std::size_t i = 0; i < header.size(); ++i) col[detail::lower(detail::trim(header[i]))] = i;
  for (const char* name : kCorpusColumns) {
    if (std::string(name) != "metaphor" && !col.count(name)) throw SchemaError(std::string("missing column '") + name + "'");
  }
  const bool has_metaphor = col.count("metaphor") > 0;

  std::vector<CorpusRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    CorpusRecord r;
    r.id = detail::trim(fields[col["id"]]);
    if (r.id.empty()) throw DataError("row " + std::to_string(row) + ": empty id");
    const std::string where = "row " + std::to_string(row) + " (id " + r.id + ")";
    r.expression = fields[col["expression"]];
    r.sentence = fields[col["sentence"]];
    if (detail::trim(r.sentence).empty()) throw DataError(where + ": empty sentence");
    auto idiom = detail::parse_yes_no(fields[col["idiom"]]);
    if (!idiom) throw DataError(where + ": bad idiom label '" + fields[col["idiom"]] + "'");
    r.idiom = *idiom;
    if (has_metaphor) {
      const std::string& raw = fields[col["metaphor"]];
      if (!detail::trim(raw).empty()) {
        r.metaphor = detail::parse_yes_no(raw);
        if (!r.metaphor) throw DataError(where + ": bad metaphor label '" + raw + "'");
      }
    }
    const std::string split = detail::lower(detail::trim(fields[col["split"]]));
    if (split == "train") {
      r.split = Split::kTrain;
    } else if (split == "test") {
      r.split = Split::kTest;
    } else {
      throw DataError(where + ": bad split '" + fields[col["split"]] + "'");
    }
    if (!seen.emplace(r.id, row).second) throw DataError(where + ": duplicate id");
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<CorpusRecord> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path);
  return parse_corpus(in);
}

inline std::string format_corpus(const std::vector<CorpusRecord>& records) {
  std::string out = "id\texpression\tsentence\tidiom\tmetaphor\tsplit\n";
  for (const auto& r : records) {
    out += r.id + '\t' + r.expression + '\t' + r.sentence + '\t' + (r.idiom ? "Yes" : "No") + '\t' +
           (r.metaphor ? (*r.metaphor ? "Yes" : "No") : "") + '\t' + to_string(r.split) + '\n';
  }
  return out;
}

inline void write_corpus(const std::vector<CorpusRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus " + path);
  out << format_corpus(records);
  if (!out) throw IoError("failed writing corpus " + path);
}

inline std::uint64_t corpus_fingerprint(const std::vector<CorpusRecord>& records) {
  const std::string text = format_corpus(records);
  return fnv1a(text.data(), text.size());
}

/// Exactly n/2 positives and n/2 negatives drawn without replacement, in a
/// seed-determined order.
inline std::vector<CorpusRecord> balanced_subset(const std::vector<CorpusRecord>& records, const TaskSpec& task,
                                                 std::size_t n, std::uint64_t seed) {
  if (n % 2 != 0) throw UsageError("balanced subset size must be even, got " + std::to_string(n));
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto label = task.label_of(records[i]);
    if (!label) continue;
    (*label ? pos : neg).push_back(i);
  }
  const std::size_t half = n / 2;
  if (pos.size() < half || neg.size() < half) {
    throw DataError("balanced subset of " + std::to_string(n) + " needs " + std::to_string(half) +
                    " per class; available positive=" + std::to_string(pos.size()) +
                    " negative=" + std::to_string(neg.size()));
  }
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<std::size_t> chosen(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(half));
  chosen.insert(chosen.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(half));
  rng.shuffle(chosen);
  std::vector<CorpusRecord> out;
  out.reserve(n);
  for (auto i : chosen) out.push_back(records[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and tokenization
// ---------------------------------------------------------------------------

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr std::size_t kReservedPieces = 4;

class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// `pieces` excludes the reserved entries, which always occupy ids 0-3.
  explicit Vocabulary(const std::vector<std::string>& pieces) {
    for (const char* r : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) append(r);
    for (const auto& p : pieces) {
      if (p.empty()) throw DataError("vocabulary: empty piece");
      if (!append(p)) throw DataError("vocabulary: duplicate piece '" + p + "'");
    }
  }

  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }

  std::optional<int> find(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Pieces after the reserved block, as stored in checkpoints.
  std::vector<std::string> learned_pieces() const {
    return {pieces_.begin() + static_cast<std::ptrdiff_t>(kReservedPieces), pieces_.end()};
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a(nullptr, 0);
    for (const auto& p : pieces_) {
      h = fnv1a(p.data(), p.size(), h);
      h = fnv1a("\n", 1, h);
    }
    return h;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.pieces_ == b.pieces_; }

 private:
  bool append(const std::string& p) {
    if (!index_.emplace(p, static_cast<int>(pieces_.size())).second) return false;
    pieces_.push_back(p);
    return true;
  }

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
};

namespace detail {

inline std::vector<std::string> whitespace_words(std::string_view s) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) words.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return words;
}

/// Byte length of the UTF-8 sequence starting at s[i]; 1 for invalid lead bytes.
inline std::size_t utf8_length(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  std::size_t n = 1;
  if ((c & 0xE0) == 0xC0) n = 2;
  else if ((c & 0xF0) == 0xE0) n = 3;
  else if ((c & 0xF8) == 0xF0) n = 4;
  return std::min(n, s.size() - i);
}

template <class Pairs>
void sort_by_count(Pairs& items) {
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
}

}  // namespace detail

/// Reserved pieces, then whole words by descending frequency (ties by byte
/// order), then single characters by frequency while room remains.
inline Vocabulary build_vocab(const std::vector<std::string>& sentences, std::size_t target_size) {
  if (target_size <= kReservedPieces) {
    throw UsageError("vocabulary target size must exceed " + std::to_string(kReservedPieces));
  }
  std::map<std::string, std::size_t> word_counts, char_counts;
  for (const auto& s : sentences) {
    for (const auto& w : detail::whitespace_words(s)) {
      ++word_counts[w];
      for (std::size_t i = 0; i < w.size();) {
        const auto n = detail::utf8_length(w, i);
        ++char_counts[w.substr(i, n)];
        i += n;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> words(word_counts.begin(), word_counts.end());
  std::vector<std::pair<std::string, std::size_t>> chars(char_counts.begin(), char_counts.end());
  detail::sort_by_count(words);
  detail::sort_by_count(chars);

  const Vocabulary reserved;
  std::vector<std::string> pieces;
  std::unordered_map<std::string, bool> taken;
  const std::size_t budget = target_size - kReservedPieces;
  for (const auto* list : {&words, &chars}) {
    for (const auto& [piece, count] : *list) {
      if (pieces.size() == budget) break;
      if (reserved.find(piece) || taken.count(piece)) continue;
      taken[piece] = true;
      pieces.push_back(piece);
    }
  }
  return Vocabulary(pieces);
}

inline Vocabulary build_vocab(const std::vector<CorpusRecord>& records, std::size_t target_size) {
  std::vector<std::string> sentences;
  sentences.reserve(records.size());
  for (const auto& r : records) sentences.push_back(r.sentence);
  return build_vocab(sentences, target_size);
}

/// Piece ids for one word: whole-word hit, else greedy longest prefix
/// matching; characters no piece covers become UNK.
inline std::vector<int> word_pieces(std::string_view word, const Vocabulary& vocab) {
  if (auto id = vocab.find(word)) return {*id};
  std::vector<int> ids;
  std::size_t i = 0;
  while (i < word.size()) {
    std::optional<int> best;
    std::size_t best_end = i;
    for (std::size_t end = i; end < word.size();) {
      end += detail::utf8_length(word, end);
      if (auto id = vocab.find(word.substr(i, end - i))) {
        best = id;
        best_end = end;
      }
    }
    if (best) {
      ids.push_back(*best);
      i = best_end;
    } else {
      ids.push_back(kUnkId);
      i += detail::utf8_length(word, i);
    }
  }
  return ids;
}

/// [CLS] pieces... [SEP] padded with [PAD] to exactly max_len. Overlong
/// input keeps [SEP] in the last slot.
inline EncodedInput tokenize(std::string_view sentence, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 2) throw UsageError("max_len must be >= 2 to hold [CLS] and [SEP]");
  EncodedInput out;
  out.ids.reserve(max_len);
  out.ids.push_back(kClsId);
  for (const auto& w : detail::whitespace_words(sentence)) {
    for (int id : word_pieces(w, vocab)) out.ids.push_back(id);
  }
  if (out.ids.size() > max_len - 1) out.ids.resize(max_len - 1);
  out.ids.push_back(kSepId);
  out.mask.assign(out.ids.size(), 1);
  out.ids.resize(max_len, kPadId);
  out.mask.resize(max_len, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Labeled examples and splits
// ---------------------------------------------------------------------------

struct Example {
  std::string id;
  EncodedInput input;
  int label = 0;
};

inline std::vector<Example> encode_examples(const std::vector<CorpusRecord>& records, const Vocabulary& vocab,
                                            const TaskSpec& task, std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id, tokenize(r.sentence, vocab, max_len), task.require_label(r)});
  return out;
}

enum class DataSplit { kTrain, kValidation, kTest };

inline DataSplit parse_data_split(const std::string& s) {
  if (s == "train") return DataSplit::kTrain;
  if (s == "validation") return DataSplit::kValidation;
  if (s == "test") return DataSplit::kTest;
  throw UsageError("unknown split '" + s + "' (expected train, validation or test)");
}

inline const char* to_string(DataSplit s) {
  switch (s) {
    case DataSplit::kTrain: return "train";
    case DataSplit::kValidation: return "validation";
    case DataSplit::kTest: return "test";
  }
  return "?";
}

struct CorpusSplits {
  std::vector<CorpusRecord> train, validation, test;

  const std::vector<CorpusRecord>& get(DataSplit s) const {
    return s == DataSplit::kTrain ? train : s == DataSplit::kValidation ? validation : test;
  }
};

/// Test rows stay test; 10% of train rows (at least one when there are two
/// or more) become validation, chosen by seed. Corpus order is preserved.
inline CorpusSplits carve_splits(const std::vector<CorpusRecord>& records, std::uint64_t seed) {
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == Split::kTrain) train_rows.push_back(i);
  std::size_t n_val = train_rows.size() / 10;
  if (n_val == 0 && train_rows.size() >= 2) n_val = 1;
  std::vector<std::size_t> shuffled = train_rows;
  Rng::derive(seed, 0x5eed5).shuffle(shuffled);
  std::vector<char> is_val(records.size(), 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[shuffled[i]] = 1;

  CorpusSplits s;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == Split::kTest) s.test.push_back(records[i]);
    else if (is_val[i]) s.validation.push_back(records[i]);
    else s.train.push_back(records[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

inline constexpr const char* kMarkerPhrase = "zor kava";

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "amo",  "bela", "cudi", "dosa", "eka",  "fani", "gosu", "hira", "inu",  "jalo", "kemi", "lavo",
      "mina", "nodi", "opa",  "pola", "quri", "rasa", "sima", "tavi", "ura",  "veni", "wadu", "yeti",
      "bago", "cilo", "dema", "feso", "gari", "hopu", "juna", "kiro", "lemu", "moti", "nira", "pesu",
      "rilo", "sunu", "timo", "vada", "wemi", "yalo", "doru", "fima", "gela", "nusa", "pari", "tesa"};
  return words;
}

/// Random filler sentences; a positive row contains the marker phrase and
/// no negative row does. `marker_rate` is the positive fraction. Each class
/// is split 80/20 train/test.
inline std::vector<CorpusRecord> make_synthetic_corpus(std::size_t n, double marker_rate, std::uint64_t seed) {
  if (n % 2 != 0) throw UsageError("synthetic corpus size must be even, got " + std::to_string(n));
  if (!(marker_rate >= 0.0 && marker_rate <= 1.0)) throw UsageError("marker_rate must be in [0,1]");
  Rng rng(seed);
  const auto& words = filler_words();
  const std::size_t n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * marker_rate));

  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
  rng.shuffle(labels);

  std::vector<CorpusRecord> records(n);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    CorpusRecord& r = records[i];
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", i + 1);
    r.id = id;
    const std::size_t len = 5 + static_cast<std::size_t>(rng.below(8));
    std::vector<std::string> tokens;
    for (std::size_t t = 0; t < len; ++t) tokens.push_back(words[rng.below(words.size())]);
    if (labels[i]) {
      const auto at = static_cast<std::ptrdiff_t>(rng.below(len + 1));
      tokens.insert(tokens.begin() + at, "kava");
      tokens.insert(tokens.begin() + at, "zor");
      r.expression = kMarkerPhrase;
    } else {
      r.expression = words[rng.below(words.size())] + " " + words[rng.below(words.size())];
    }
    for (std::size_t t = 0; t < tokens.size(); ++t) r.sentence += (t ? " " : "") + tokens[t];
    r.idiom = labels[i] == 1;
    r.metaphor = labels[i] == 1;
    (labels[i] ? pos : neg).push_back(i);
  }
  for (auto* group : {&pos, &neg}) {
    rng.shuffle(*group);
    const std::size_t n_test = group->size() / 5;
    for (std::size_t k = 0; k < group->size(); ++k) records[(*group)[k]].split = k < n_test ? Split::kTest : Split::kTrain;
  }
  return records;
}

}  // namespace headprune
