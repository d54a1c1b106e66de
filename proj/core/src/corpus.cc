#include "dfl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "dfl/tensor.hpp"

namespace dfl {

namespace {

ParseError offset_error(const std::string& msg, size_t offset) {
  return ParseError(msg + " at offset " + std::to_string(offset), offset);
}

ParseError line_error(const std::string& msg, size_t line_no) {
  return ParseError(msg + " at line " + std::to_string(line_no), line_no);
}

}  // namespace

std::optional<Fluency> fluency_from_char(char c) {
  if (c == 'F') return Fluency::Fluent;
  if (c == 'D') return Fluency::Disfluent;
  return std::nullopt;
}

ParseError::ParseError(const std::string& msg, size_t position)
    : std::runtime_error(msg), position_(position) {}

bool is_valid_ner_tag(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') return false;
  const std::string type = tag.substr(2);
  return type == "LOC" || type == "MISC" || type == "ORG" || type == "PER";
}

bool is_bio_valid(const Sentence& s) {
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    const std::string& tag = s.tokens[i].ner;
    if (!is_valid_ner_tag(tag)) return false;
    if (tag.size() > 1 && tag[0] == 'I') {
      if (i == 0) return false;
      const std::string& prev = s.tokens[i - 1].ner;
      if (prev == "O" || prev.substr(1) != tag.substr(1)) return false;
    }
  }
  return true;
}

const char* task_name(Task t) {
  switch (t) {
    case Task::Disfl: return "disfl";
    case Task::Ner: return "ner";
    case Task::Pos: return "pos";
  }
  return "?";
}

std::optional<Task> task_from_name(const std::string& name) {
  if (name == "disfl") return Task::Disfl;
  if (name == "ner") return Task::Ner;
  if (name == "pos") return Task::Pos;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tagset

Tagset::Tagset(Task task, std::vector<std::string> labels)
    : task_(task), labels_(std::move(labels)) {
  for (size_t i = 0; i < labels_.size(); ++i) {
    auto [it, inserted] = index_.emplace(labels_[i], static_cast<int>(i));
    if (!inserted) throw std::invalid_argument("duplicate label '" + labels_[i] + "' in tagset");
  }
}

Tagset Tagset::disfl() { return Tagset(Task::Disfl, {"F", "D"}); }

Tagset Tagset::ner() {
  return Tagset(Task::Ner, {"O", "B-LOC", "I-LOC", "B-MISC", "I-MISC", "B-ORG", "I-ORG",
                            "B-PER", "I-PER"});
}

Tagset Tagset::pos_from(const std::vector<Sentence>& train) {
  std::vector<std::string> labels;
  for (const Sentence& s : train)
    for (const Token& t : s.tokens) labels.push_back(t.pos);
  labels.push_back(kUnkPos);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return Tagset(Task::Pos, std::move(labels));
}

std::optional<int> Tagset::find(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Tagset::index_of(const std::string& label) const {
  auto idx = find(label);
  if (!idx)
    throw std::out_of_range("label '" + label + "' not in " + task_name(task_) + " tagset");
  return *idx;
}

int Tagset::index_or_unk(const std::string& label) const {
  auto idx = find(label);
  if (idx) return *idx;
  return index_of(kUnkPos);
}

// ---------------------------------------------------------------------------
// Bracketed transcript grammar

namespace {

struct Field {
  std::string text;
  size_t offset;
};

bool is_brace_symbol(char c) { return c == '[' || c == ']' || c == '{' || c == '}'; }

// Whitespace-separated fields; "[ ] { }" split off even when glued to a
// token (interregna are conventionally written "{um}").
std::vector<Field> split_fields(const std::string& line) {
  std::vector<Field> out;
  size_t i = 0;
  while (i < line.size()) {
    unsigned char c = static_cast<unsigned char>(line[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_brace_symbol(line[i])) {
      out.push_back({std::string(1, line[i]), i});
      ++i;
      continue;
    }
    size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) &&
           !is_brace_symbol(line[i]))
      ++i;
    out.push_back({line.substr(start, i - start), start});
  }
  return out;
}

class BracketParser {
 public:
  explicit BracketParser(std::vector<Field> fields) : fields_(std::move(fields)) {}

  std::vector<Token> parse() {
    std::vector<Token> out;
    parse_region(out, /*inside_group=*/false);
    return out;
  }

 private:
  bool done() const { return pos_ >= fields_.size(); }
  const Field& peek() const { return fields_[pos_]; }
  void advance() { ++pos_; }

  static Token make_token(const Field& f) {
    Token t;
    size_t slash = f.text.rfind('/');
    if (slash == std::string::npos) {
      t.text = f.text;
    } else {
      t.text = f.text.substr(0, slash);
      t.pos = f.text.substr(slash + 1);
      if (t.pos.empty()) t.pos = "UNK";
    }
    if (t.text.empty()) throw offset_error("empty token text", f.offset);
    return t;
  }

  // Appends tokens and groups until a terminator symbol ("]", "}", "+") or
  // end of line. The terminator is left unconsumed for the caller.
  void parse_region(std::vector<Token>& out, bool inside_group) {
    while (!done()) {
      const Field& f = peek();
      if (f.text == "[") {
        parse_group(out);
      } else if (f.text == "]" || f.text == "}" || f.text == "+") {
        if (!inside_group) throw offset_error("unexpected '" + f.text + "'", f.offset);
        return;
      } else if (f.text == "{") {
        throw offset_error("unexpected '{'", f.offset);
      } else {
        out.push_back(make_token(f));
        advance();
      }
    }
  }

  void parse_group(std::vector<Token>& out) {
    const size_t open_offset = peek().offset;
    advance();  // '['

    const size_t rm_begin = out.size();
    parse_region(out, true);
    if (done()) throw offset_error("unclosed '['", open_offset);
    if (peek().text == "]") throw offset_error("group without '+'", peek().offset);
    if (peek().text == "}") throw offset_error("unexpected '}'", peek().offset);
    if (out.size() == rm_begin) throw offset_error("empty reparandum", peek().offset);
    const size_t rm_end = out.size();
    advance();  // '+'

    if (!done() && peek().text == "{") {
      const size_t brace_offset = peek().offset;
      advance();
      while (!done() && peek().text != "}") {
        const Field& f = peek();
        if (f.text == "[" || f.text == "{" || f.text == "+" || f.text == "]")
          throw offset_error("unexpected '" + f.text + "' in interregnum", f.offset);
        out.push_back(make_token(f));
        advance();
      }
      if (done()) throw offset_error("unclosed '{'", brace_offset);
      advance();  // '}'
    }

    const size_t rp_begin = out.size();
    parse_region(out, true);
    if (done()) throw offset_error("unclosed '['", open_offset);
    if (peek().text == "+") throw offset_error("multiple '+' in group", peek().offset);
    if (peek().text == "}") throw offset_error("unexpected '}'", peek().offset);
    if (out.size() == rp_begin) throw offset_error("empty repair", peek().offset);
    advance();  // ']'

    // Everything left of this group's '+', nested groups included, is
    // reparandum under the binary labeling.
    for (size_t i = rm_begin; i < rm_end; ++i) out[i].disfl = Fluency::Disfluent;
  }

  std::vector<Field> fields_;
  size_t pos_ = 0;
};

}  // namespace

Sentence parse_bracketed(const std::string& line, const std::string& source_id) {
  BracketParser parser(split_fields(line));
  Sentence s;
  s.tokens = parser.parse();
  s.source_id = source_id;
  if (s.tokens.empty()) throw offset_error("empty sentence", 0);
  return s;
}

// ---------------------------------------------------------------------------
// CoNLL-style format

std::vector<Sentence> parse_conll(std::istream& in, const std::string& source_id) {
  std::vector<Sentence> out;
  Sentence cur;
  cur.source_id = source_id;
  bool seen_token = false;
  std::string line;
  size_t line_no = 0;

  auto flush = [&] {
    if (!cur.tokens.empty()) {
      out.push_back(std::move(cur));
      cur = Sentence{};
      cur.source_id = source_id;
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (!seen_token && line[0] == '#') continue;  // generator header

    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        cols.push_back(line.substr(start));
        break;
      }
      cols.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (cols.size() != 4)
      throw line_error("expected 4 tab-separated columns, got " + std::to_string(cols.size()),
                       line_no);

    Token t;
    t.text = cols[0];
    t.pos = cols[1];
    t.ner = cols[2];
    if (t.text.empty()) throw line_error("empty token text", line_no);
    for (char c : t.text)
      if (std::isspace(static_cast<unsigned char>(c)))
        throw line_error("token text contains whitespace", line_no);
    if (t.pos.empty()) throw line_error("empty pos tag", line_no);
    if (!is_valid_ner_tag(t.ner)) throw line_error("invalid ner tag '" + t.ner + "'", line_no);
    if (t.ner[0] == 'I') {
      const std::string* prev = cur.tokens.empty() ? nullptr : &cur.tokens.back().ner;
      if (!prev || *prev == "O" || prev->substr(1) != t.ner.substr(1))
        throw line_error("ner tag '" + t.ner + "' breaks BIO validity", line_no);
    }
    if (cols[3].size() != 1 || !fluency_from_char(cols[3][0]))
      throw line_error("invalid disfl tag '" + cols[3] + "'", line_no);
    t.disfl = *fluency_from_char(cols[3][0]);

    seen_token = true;
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return out;
}

void write_conll(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (i > 0) out << '\n';
    for (const Token& t : sentences[i].tokens)
      out << t.text << '\t' << t.pos << '\t' << t.ner << '\t' << fluency_char(t.disfl) << '\n';
  }
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    case Split::Other: return "other";
  }
  return "?";
}

Split split_of_filename(const std::string& name) {
  if (name.size() < 7) return Split::Other;  // shortest match is "swX?.dff"
  if (name.compare(0, 2, "sw") != 0) return Split::Other;
  if (name.compare(name.size() - 4, 4, ".dff") != 0) return Split::Other;
  const std::string mid = name.substr(2, name.size() - 6);
  if (mid.empty()) return Split::Other;
  if (mid[0] == '2' || mid[0] == '3') return Split::Train;
  if (mid[0] == '4' && mid.size() >= 2) {
    if (mid[1] >= '5' && mid[1] <= '9') return Split::Dev;
    if (mid[1] == '0' || mid[1] == '1') return Split::Test;
  }
  return Split::Other;
}

// ---------------------------------------------------------------------------
// Gazetteer

std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

namespace {

std::string normalize_phrase(const std::string& phrase) {
  std::string out;
  bool in_space = true;
  for (char c : phrase) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      in_space = false;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool is_entity_type(const std::string& t) {
  return t == "LOC" || t == "MISC" || t == "ORG" || t == "PER";
}

}  // namespace

void Gazetteer::add(const std::string& phrase, const std::string& entity_type) {
  const std::string key = normalize_phrase(phrase);
  if (key.empty()) throw std::invalid_argument("empty gazetteer phrase");
  if (!is_entity_type(entity_type))
    throw std::invalid_argument("unknown entity type '" + entity_type + "'");
  auto [it, inserted] = entries_.emplace(key, entity_type);
  if (!inserted && it->second != entity_type)
    throw std::invalid_argument("gazetteer phrase '" + key + "' maps to two types");
  max_words_ = std::max(max_words_, static_cast<size_t>(std::count(key.begin(), key.end(), ' ') + 1));
}

Gazetteer Gazetteer::load(std::istream& in) {
  Gazetteer g;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) throw line_error("expected phrase<TAB>TYPE", line_no);
    try {
      g.add(line.substr(0, tab), line.substr(tab + 1));
    } catch (const std::invalid_argument& e) {
      throw line_error(e.what(), line_no);
    }
  }
  return g;
}

void Gazetteer::write(std::ostream& out) const {
  for (const auto& [phrase, type] : sorted_entries()) out << phrase << '\t' << type << '\n';
}

const std::string* Gazetteer::lookup(const std::string& phrase_lower) const {
  auto it = entries_.find(phrase_lower);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::pair<std::string, std::string>> Gazetteer::sorted_entries() const {
  std::vector<std::pair<std::string, std::string>> out(entries_.begin(), entries_.end());
  std::sort(out.begin(), out.end());
  return out;
}

Sentence gazetteer_tag(const Sentence& sentence, const Gazetteer& g) {
  Sentence out = sentence;
  for (Token& t : out.tokens) t.ner = "O";
  if (g.empty()) return out;

  const size_t n = out.tokens.size();
  std::vector<std::string> lower(n);
  for (size_t i = 0; i < n; ++i) lower[i] = to_lower(out.tokens[i].text);

  size_t i = 0;
  while (i < n) {
    size_t best_len = 0;
    const std::string* best_type = nullptr;
    const size_t cap = std::min(g.max_phrase_words(), n - i);
    std::string phrase;
    for (size_t len = 1; len <= cap; ++len) {
      if (len == 1) {
        phrase = lower[i];
      } else {
        phrase += ' ';
        phrase += lower[i + len - 1];
      }
      if (const std::string* type = g.lookup(phrase)) {
        best_len = len;
        best_type = type;
      }
    }
    if (best_len > 0) {
      out.tokens[i].ner = "B-" + *best_type;
      for (size_t k = 1; k < best_len; ++k) out.tokens[i + k].ner = "I-" + *best_type;
      i += best_len;
    } else {
      ++i;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SynthConfig::validate() const {
  auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in01(p_repeat) || !in01(p_correct) || !in01(p_filler))
    throw std::invalid_argument("synth pattern probabilities must lie in [0, 1]");
  if (p_repeat + p_correct > 1.0)
    throw std::invalid_argument("p_repeat + p_correct must not exceed 1");
  if (num_sentences < 0) throw std::invalid_argument("num_sentences must be >= 0");
}

SynthConfig default_synth_config(uint64_t seed, int num_sentences) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.num_sentences = num_sentences;
  cfg.vocab = {
      {"i", "prp"},       {"you", "prp"},    {"we", "prp"},      {"they", "prp"},
      {"he", "prp"},      {"she", "prp"},    {"it", "prp"},      {"want", "vbp"},
      {"need", "vbp"},    {"go", "vbp"},     {"know", "vbp"},    {"think", "vbp"},
      {"see", "vbp"},     {"like", "vbp"},   {"take", "vbp"},    {"mean", "vbp"},
      {"get", "vbp"},     {"a", "dt"},       {"the", "dt"},      {"this", "dt"},
      {"that", "dt"},     {"flight", "nn"},  {"car", "nn"},      {"house", "nn"},
      {"meeting", "nn"},  {"dog", "nn"},     {"book", "nn"},     {"day", "nn"},
      {"way", "nn"},      {"thing", "nn"},   {"time", "nn"},     {"to", "in"},
      {"in", "in"},       {"on", "in"},      {"with", "in"},     {"at", "in"},
      {"really", "rb"},   {"just", "rb"},    {"there", "rb"},    {"so", "rb"},
      {"good", "jj"},     {"big", "jj"},     {"nice", "jj"},     {"right", "jj"},
      {",", ","},         {"and", "cc"},     {"but", "cc"},
  };
  cfg.gazetteer.add("new york", "LOC");
  cfg.gazetteer.add("new york city", "LOC");
  cfg.gazetteer.add("boston", "LOC");
  cfg.gazetteer.add("john", "PER");
  cfg.gazetteer.add("mary", "PER");
  cfg.gazetteer.add("john smith", "PER");
  cfg.gazetteer.add("mceneil", "PER");
  cfg.gazetteer.add("acme", "ORG");
  cfg.gazetteer.add("acme corporation", "ORG");
  cfg.gazetteer.add("monopoly", "MISC");
  return cfg;
}

namespace {

const char* const kFillers[] = {"um", "uh"};

struct Lexicon {
  std::vector<LexEntry> entries;
  std::map<std::string, std::vector<const LexEntry*>> by_pos;

  explicit Lexicon(const std::vector<LexEntry>& vocab) : entries(vocab) {
    for (const LexEntry& e : entries) by_pos[e.pos].push_back(&e);
  }

  const LexEntry& draw(Rng& rng) const {
    return entries[static_cast<size_t>(rng.uniform_int(static_cast<int>(entries.size())))];
  }

  // A uniform word with the given POS; falls back to any word when the POS
  // pool is missing (custom vocabularies).
  const LexEntry& draw_pos(const std::string& pos, Rng& rng) const {
    auto it = by_pos.find(pos);
    if (it == by_pos.end() || it->second.empty()) return draw(rng);
    return *it->second[static_cast<size_t>(rng.uniform_int(static_cast<int>(it->second.size())))];
  }

  // A word with the given POS, preferring one different from `not_this`.
  const LexEntry& draw_pos_other(const std::string& pos, const std::string& not_this,
                                 Rng& rng) const {
    auto it = by_pos.find(pos);
    if (it == by_pos.end() || it->second.empty()) return draw(rng);
    const auto& pool = it->second;
    int idx = rng.uniform_int(static_cast<int>(pool.size()));
    if (pool[static_cast<size_t>(idx)]->word == not_this && pool.size() > 1)
      idx = (idx + 1) % static_cast<int>(pool.size());
    return *pool[static_cast<size_t>(idx)];
  }
};

const std::vector<std::vector<std::string>>& sentence_templates() {
  static const std::vector<std::vector<std::string>> templates = {
      {"prp", "vbp", "dt", "nn"},
      {"prp", "vbp", "in", "dt", "nn"},
      {"prp", "rb", "vbp", "dt", "jj", "nn"},
      {"dt", "nn", "vbp", "rb", "jj"},
      {"prp", "vbp", "dt", "nn", "cc", "prp", "vbp", "dt", "nn"},
      {"prp", "vbp", ",", "prp", "vbp", "dt", "nn"},
      {"prp", "rb", "vbp", "in", "dt", "nn"},
      {"prp", "vbp", "dt", "jj", "nn", "in", "dt", "nn"},
  };
  return templates;
}

Token make_word(const LexEntry& e, Fluency f = Fluency::Fluent) {
  Token t;
  t.text = e.word;
  t.pos = e.pos;
  t.disfl = f;
  return t;
}

Sentence synth_sentence(const SynthConfig& cfg, const Lexicon& lex, Rng& rng, int index) {
  Sentence s;
  s.source_id = "synth-" + std::to_string(index);

  const auto& templates = sentence_templates();
  const auto& pattern =
      templates[static_cast<size_t>(rng.uniform_int(static_cast<int>(templates.size())))];
  for (const std::string& pos : pattern) s.tokens.push_back(make_word(lex.draw_pos(pos, rng)));

  // Occasional named-entity mention.
  if (!cfg.gazetteer.empty() && rng.bernoulli(0.3)) {
    const auto entries = cfg.gazetteer.sorted_entries();
    const auto& [phrase, type] =
        entries[static_cast<size_t>(rng.uniform_int(static_cast<int>(entries.size())))];
    (void)type;
    std::vector<Token> words;
    std::istringstream ps(phrase);
    std::string w;
    while (ps >> w) {
      LexEntry e{w, "nnp"};
      words.push_back(make_word(e));
    }
    const size_t at = static_cast<size_t>(rng.uniform_int(static_cast<int>(s.tokens.size()) + 1));
    s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(at), words.begin(),
                    words.end());
  }

  const double u = rng.uniform();
  const bool repeat = u < cfg.p_repeat;
  const bool correct = !repeat && u < cfg.p_repeat + cfg.p_correct;
  if (repeat || correct) {
    const int len = static_cast<int>(s.tokens.size());
    // Reparanda cluster at the sentence start, like real restarts do.
    const int start = rng.bernoulli(0.5) ? 0 : rng.uniform_int(len);
    const int span = 1 + rng.uniform_int(std::min(3, len - start));

    std::vector<Token> rm;
    for (int k = 0; k < span; ++k) {
      const Token& orig = s.tokens[static_cast<size_t>(start + k)];
      if (repeat) {
        Token copy = orig;
        copy.disfl = Fluency::Disfluent;
        rm.push_back(copy);
      } else {
        rm.push_back(make_word(lex.draw_pos_other(orig.pos, orig.text, rng),
                               Fluency::Disfluent));
        rm.back().pos = orig.pos;  // correction keeps the POS sequence
      }
    }
    if (rng.bernoulli(cfg.p_filler)) {
      LexEntry filler{kFillers[rng.uniform_int(2)], "uh"};
      rm.push_back(make_word(filler));  // interregnum, fluent
    }
    s.tokens.insert(s.tokens.begin() + start, rm.begin(), rm.end());
  }

  return gazetteer_tag(s, cfg.gazetteer);
}

}  // namespace

std::vector<Sentence> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  if (cfg.vocab.empty()) throw std::invalid_argument("synth vocabulary is empty");
  Lexicon lex(cfg.vocab);
  Rng rng(cfg.seed);
  std::vector<Sentence> out;
  out.reserve(static_cast<size_t>(cfg.num_sentences));
  for (int i = 0; i < cfg.num_sentences; ++i) out.push_back(synth_sentence(cfg, lex, rng, i));
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

CorpusStats corpus_stats(const std::vector<Sentence>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
  CorpusStats st;
  st.num_sentences = corpus.size();
  std::map<std::string, size_t> pos_counts;
  for (const Sentence& s : corpus) {
    st.num_tokens += s.tokens.size();
    for (const Token& t : s.tokens) {
      if (t.disfl != Fluency::Disfluent) continue;
      ++st.num_disfluent;
      ++pos_counts[t.pos];
      if (t.ner != "O") ++st.entity_disfluent_overlap;
    }
  }
  if (st.num_tokens > 0)
    st.disfluency_rate =
        static_cast<double>(st.num_disfluent) / static_cast<double>(st.num_tokens);
  if (st.num_disfluent > 0) {
    const double total = static_cast<double>(st.num_disfluent);
    for (const auto& [pos, count] : pos_counts)
      st.pos_histogram.emplace_back(pos, static_cast<double>(count) / total);
    std::sort(st.pos_histogram.begin(), st.pos_histogram.end(),
              [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
              });
    double comma_prp = 0.0;
    if (auto it = pos_counts.find(","); it != pos_counts.end())
      comma_prp += static_cast<double>(it->second);
    if (auto it = pos_counts.find("prp"); it != pos_counts.end())
      comma_prp += static_cast<double>(it->second);
    st.comma_prp_fraction = comma_prp / total;
  }
  return st;
}

namespace {

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find(',') == std::string::npos && s.find('"') == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += "\"\"";
    else quoted.push_back(c);
  }
  quoted += '"';
  return quoted;
}

}  // namespace

void write_stats_report(std::ostream& out, const CorpusStats& st) {
  out << "sentences=" << st.num_sentences << '\n';
  out << "tokens=" << st.num_tokens << '\n';
  out << "disfluent_tokens=" << st.num_disfluent << '\n';
  out << "disfluency_rate=" << fixed6(st.disfluency_rate) << '\n';
  out << "comma_prp_fraction=" << fixed6(st.comma_prp_fraction) << '\n';
  out << "entity_disfluent_overlap=" << st.entity_disfluent_overlap << '\n';
  out << "pos_histogram\n";
  out << "pos,fraction\n";
  for (const auto& [pos, fraction] : st.pos_histogram)
    out << csv_field(pos) << ',' << fixed6(fraction) << '\n';
}

// ---------------------------------------------------------------------------
// Vocabulary and encoding

Vocab Vocab::build(const std::vector<Sentence>& train, int min_freq) {
  std::map<std::string, int> counts;
  for (const Sentence& s : train)
    for (const Token& t : s.tokens) ++counts[to_lower(t.text)];
  std::vector<std::string> words = {"<pad>", "<unk>"};
  for (const auto& [word, count] : counts)
    if (count >= min_freq) words.push_back(word);
  return from_words(words);
}

Vocab Vocab::from_words(const std::vector<std::string>& words) {
  if (words.size() < 2 || words[0] != "<pad>" || words[1] != "<unk>")
    throw std::invalid_argument("vocabulary must start with <pad> and <unk>");
  Vocab v;
  v.words_ = words;
  for (size_t i = 0; i < words.size(); ++i) {
    auto [it, inserted] = v.index_.emplace(words[i], static_cast<int>(i));
    if (!inserted) throw std::invalid_argument("duplicate vocabulary word '" + words[i] + "'");
  }
  return v;
}

int Vocab::id_of(const std::string& word) const {
  auto it = index_.find(to_lower(word));
  return it == index_.end() ? kUnk : it->second;
}

EncodedBatch encode_batch(const std::vector<Sentence>& sentences,
                          const std::map<Task, Tagset>& tagsets, const Vocab& vocab,
                          int max_len) {
  if (max_len < 1) throw std::invalid_argument("encode_batch: max_len must be >= 1");
  EncodedBatch b;
  for (const Sentence& s : sentences) {
    int len = static_cast<int>(s.tokens.size());
    if (len > max_len) {
      len = max_len;
      ++b.truncated;
    }
    b.lengths.push_back(len);
    b.width = std::max(b.width, len);
  }
  for (const auto& [task, tagset] : tagsets) {
    (void)tagset;
    b.labels[task].reserve(sentences.size());
  }

  for (size_t r = 0; r < sentences.size(); ++r) {
    const Sentence& s = sentences[r];
    const int len = b.lengths[r];
    std::vector<int> ids(static_cast<size_t>(b.width), Vocab::kPad);
    std::vector<uint8_t> mask(static_cast<size_t>(b.width), 0);
    for (int i = 0; i < len; ++i) {
      ids[static_cast<size_t>(i)] = vocab.id_of(s.tokens[static_cast<size_t>(i)].text);
      mask[static_cast<size_t>(i)] = 1;
    }
    b.token_ids.push_back(std::move(ids));
    b.mask.push_back(std::move(mask));

    for (const auto& [task, tagset] : tagsets) {
      std::vector<int> row(static_cast<size_t>(b.width), -1);
      for (int i = 0; i < len; ++i) {
        const Token& t = s.tokens[static_cast<size_t>(i)];
        int idx = 0;
        switch (task) {
          case Task::Disfl:
            idx = tagset.index_of(t.disfl == Fluency::Disfluent ? "D" : "F");
            break;
          case Task::Ner:
            idx = tagset.index_of(t.ner);
            break;
          case Task::Pos:
            idx = tagset.index_or_unk(t.pos);
            break;
        }
        row[static_cast<size_t>(i)] = idx;
      }
      b.labels[task].push_back(std::move(row));
    }
  }
  return b;
}

}  // namespace dfl
