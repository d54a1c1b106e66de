// Corpus handling: the bracketed transcript grammar, the CoNLL-style file
// format, train/dev/test split routing, gazetteer NER tagging, the synthetic
// corpus generator, corpus statistics and batch index encoding.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dfl {

// ---------------------------------------------------------------------------
// Tokens and sentences

enum class Fluency : uint8_t { Fluent, Disfluent };

inline char fluency_char(Fluency f) { return f == Fluency::Disfluent ? 'D' : 'F'; }
std::optional<Fluency> fluency_from_char(char c);

struct Token {
  std::string text;        // surface form, non-empty, no whitespace
  std::string pos = "UNK";
  std::string ner = "O";   // O | (B|I)-(LOC|MISC|ORG|PER)
  Fluency disfl = Fluency::Fluent;
};

struct Sentence {
  std::vector<Token> tokens;
  std::string source_id;
  size_t size() const { return tokens.size(); }
};

bool is_valid_ner_tag(const std::string& tag);

// Every I-X tag must directly follow B-X or I-X of the same type.
bool is_bio_valid(const Sentence& s);

// Raised by all text parsers. `position` is a 0-based character offset for
// single-line inputs and a 1-based line number for file-shaped inputs; the
// formatted message already includes it.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, size_t position);
  size_t position() const { return position_; }

 private:
  size_t position_;
};

// ---------------------------------------------------------------------------
// Tagsets

enum class Task : uint8_t { Disfl = 0, Ner = 1, Pos = 2 };
const char* task_name(Task t);
std::optional<Task> task_from_name(const std::string& name);

// Reserved fallback label for part-of-speech tags unseen in training.
inline constexpr const char* kUnkPos = "UNK";

class Tagset {
 public:
  Tagset() = default;
  Tagset(Task task, std::vector<std::string> labels);

  static Tagset disfl();  // exactly {F, D}
  static Tagset ner();    // O plus B/I x {LOC, MISC, ORG, PER}
  // Labels observed in the training split, sorted, with UNK always present.
  static Tagset pos_from(const std::vector<Sentence>& train);

  Task task() const { return task_; }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::string& label(int idx) const { return labels_.at(static_cast<size_t>(idx)); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<int> find(const std::string& label) const;
  int index_of(const std::string& label) const;  // throws std::out_of_range
  // Lookup with fallback to UNK; only valid for tagsets containing UNK.
  int index_or_unk(const std::string& label) const;

 private:
  Task task_ = Task::Disfl;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Parsing and serialization

// Parses one bracket-annotated transcript line:
//   tokens separated by spaces, optional /pos suffix per token,
//   disfluency group = "[" RM + [ "{" IM "}" ] RP "]", groups nest.
// Tokens inside any reparandum region come out Disfluent, everything else
// (interregnum and repair included) Fluent.
Sentence parse_bracketed(const std::string& line, const std::string& source_id = "");

// 4-column TAB-separated format: text pos ner disfl, one token per line,
// sentences separated by one blank line. Leading '#' lines are skipped.
std::vector<Sentence> parse_conll(std::istream& in, const std::string& source_id = "");

// Inverse of parse_conll; byte-exact round trip modulo one trailing newline.
void write_conll(std::ostream& out, const std::vector<Sentence>& sentences);

enum class Split : uint8_t { Train, Dev, Test, Other };
const char* split_name(Split s);

// Switchboard file-name convention: sw[23]*.dff -> TRAIN,
// sw4[5-9]*.dff -> DEV, sw4[0-1]*.dff -> TEST, anything else -> OTHER.
Split split_of_filename(const std::string& name);

// ---------------------------------------------------------------------------
// Gazetteer NER tagging

class Gazetteer {
 public:
  // Phrases are lowercased; a phrase may map to only one entity type.
  void add(const std::string& phrase, const std::string& entity_type);
  static Gazetteer load(std::istream& in);  // lines: phrase<TAB>TYPE
  void write(std::ostream& out) const;

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  size_t max_phrase_words() const { return max_words_; }
  // nullptr when the exact lowercased phrase is absent.
  const std::string* lookup(const std::string& phrase_lower) const;
  // Entries in deterministic (sorted-phrase) order.
  std::vector<std::pair<std::string, std::string>> sorted_entries() const;

 private:
  std::unordered_map<std::string, std::string> entries_;
  size_t max_words_ = 0;
};

// Longest-leftmost case-insensitive phrase matching; matched spans get
// B-X/I-X, everything else O. The result is always BIO-valid.
Sentence gazetteer_tag(const Sentence& sentence, const Gazetteer& g);

// ---------------------------------------------------------------------------
// Synthetic corpus generation

struct LexEntry {
  std::string word;
  std::string pos;
};

struct SynthConfig {
  uint64_t seed = 1;
  int num_sentences = 0;
  std::vector<LexEntry> vocab;
  Gazetteer gazetteer;
  double p_repeat = 0.25;   // reparandum duplicated verbatim as the repair
  double p_correct = 0.15;  // reparandum replaced by a same-POS repair
  double p_filler = 0.5;    // filler interregnum between reparandum and repair

  void validate() const;  // probabilities in [0,1], p_repeat + p_correct <= 1
};

// Word list and gazetteer used by `synth` when the caller supplies none.
SynthConfig default_synth_config(uint64_t seed, int num_sentences);

// Pure function of the config: one seed, one byte-identical corpus.
// Repetition and correction patterns keep the reparandum and repair POS
// sequences identical; fillers ("um"/"uh", POS "uh") are always fluent.
std::vector<Sentence> synth_generate(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Corpus statistics

struct CorpusStats {
  size_t num_sentences = 0;
  size_t num_tokens = 0;
  size_t num_disfluent = 0;
  double disfluency_rate = 0.0;  // disfluent / total tokens
  // POS histogram over disfluent tokens only; fractions sum to 1.
  // Sorted by descending fraction, ties alphabetically.
  std::vector<std::pair<std::string, double>> pos_histogram;
  double comma_prp_fraction = 0.0;  // share of disfluent tokens tagged "," or "prp"
  size_t entity_disfluent_overlap = 0;  // tokens both disfluent and inside an entity
};

CorpusStats corpus_stats(const std::vector<Sentence>& corpus);
void write_stats_report(std::ostream& out, const CorpusStats& stats);

// ---------------------------------------------------------------------------
// Vocabulary and batch encoding

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  // Lowercased words with frequency >= min_freq in the training split,
  // sorted; ids 0 and 1 are reserved for <pad> and <unk>.
  static Vocab build(const std::vector<Sentence>& train, int min_freq = 2);
  static Vocab from_words(const std::vector<std::string>& words);  // full list incl. reserved

  int size() const { return static_cast<int>(words_.size()); }
  int id_of(const std::string& word) const;  // lowercased lookup, kUnk fallback
  const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

std::string to_lower(const std::string& s);

struct EncodedBatch {
  // One row per sentence, padded to the width of the longest (truncated)
  // sentence in the batch. Label -1 marks padding.
  std::vector<std::vector<int>> token_ids;
  std::vector<std::vector<uint8_t>> mask;  // 1 = real token
  std::map<Task, std::vector<std::vector<int>>> labels;
  std::vector<int> lengths;
  int width = 0;
  int truncated = 0;  // sentences cut down to max_len
};

// Encodes gold labels for every tagset in `tagsets`; POS falls back to UNK.
EncodedBatch encode_batch(const std::vector<Sentence>& sentences,
                          const std::map<Task, Tagset>& tagsets,
                          const Vocab& vocab, int max_len);

}  // namespace dfl
