#include "tpr/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tpr/errors.hpp"
#include "tpr/rng.hpp"

namespace tpr::data {

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) add(t);
}

int Vocab::add(std::string_view token) {
  std::string key(token);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("vocab: cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("vocab: cannot read " + path.string());
  Vocab v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n < 4) {
      if (line != v.tokens_[n]) {
        throw DataError("vocab: " + path.string() + " line " + std::to_string(n + 1) +
                        " must be reserved token " + v.tokens_[n]);
      }
    } else if (!line.empty()) {
      v.add(line);
    }
    ++n;
  }
  return v;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

std::string_view heuristic_name(HeuristicClass h) {
  switch (h) {
    case HeuristicClass::lexical_overlap: return "lexical_overlap";
    case HeuristicClass::subsequence: return "subsequence";
    case HeuristicClass::constituent: return "constituent";
  }
  return "?";
}

HeuristicClass parse_heuristic(std::string_view name) {
  for (auto h : {HeuristicClass::lexical_overlap, HeuristicClass::subsequence,
                 HeuristicClass::constituent}) {
    if (heuristic_name(h) == name) return h;
  }
  throw DataError("unknown heuristic class '" + std::string(name) + "'");
}

std::size_t packed_length(const LabeledPair& p) {
  std::size_t n = p.sentence1.size() + 2;
  if (p.sentence2) n += p.sentence2->size() + 1;
  return n;
}

std::vector<int> pack(const LabeledPair& p, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(packed_length(p));
  ids.push_back(Vocab::kCls);
  for (const auto& w : p.sentence1) ids.push_back(vocab.id(w));
  ids.push_back(Vocab::kSep);
  if (p.sentence2) {
    for (const auto& w : *p.sentence2) ids.push_back(vocab.id(w));
    ids.push_back(Vocab::kSep);
  }
  return ids;
}

void extend_vocab(Vocab& vocab, const Corpus& corpus) {
  for (const auto& p : corpus.pairs) {
    for (const auto& w : p.sentence1) vocab.add(w);
    if (p.sentence2)
      for (const auto& w : *p.sentence2) vocab.add(w);
  }
}

// TSV ----------------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::filesystem::path tags_sidecar(const std::filesystem::path& tsv) {
  auto p = tsv;
  p.replace_extension(".tags.tsv");
  return p;
}

LoadResult load_tsv(const std::filesystem::path& path, const TsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_tsv: cannot open " + path.string());
  const std::size_t min_len = schema.paired ? 3 : 2;
  if (schema.max_len < min_len) throw ConfigError("load_tsv: max_len too small");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header (line 1)", 1);
  strip_cr(line);
  const auto header = split_tabs(line);
  std::vector<std::string> required{"sentence1"};
  if (schema.paired) required.push_back("sentence2");
  required.push_back("label");
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& r : required) {
    if (!col.count(r)) {
      throw SchemaError(path.string() + ": line 1: header lacks column '" + r + "'", 1);
    }
  }
  const bool has_heur = col.count("heuristic_class") != 0;
  const bool has_parse = col.count("parse") != 0;
  std::size_t needed = 0;
  for (const auto& [name, idx] : col) needed = std::max(needed, idx + 1);

  LoadResult result;
  result.corpus.paired = schema.paired;
  result.corpus.labels = schema.labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() < needed) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": expected " +
                            std::to_string(needed) + " columns, found " +
                            std::to_string(f.size()),
                        lineno);
    }
    LabeledPair p;
    p.sentence1 = split_words(f[col["sentence1"]]);
    if (schema.paired) p.sentence2 = split_words(f[col["sentence2"]]);
    const auto& label = f[col["label"]];
    auto it = std::find(schema.labels.begin(), schema.labels.end(), label);
    if (it == schema.labels.end()) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) +
                      ": unknown label '" + label + "'");
    }
    p.label = static_cast<int>(it - schema.labels.begin());
    if (has_heur && !f[col["heuristic_class"]].empty()) {
      p.heuristic = parse_heuristic(f[col["heuristic_class"]]);
    }
    if (has_parse) p.parse = f[col["parse"]];
    result.corpus.pairs.push_back(std::move(p));
  }

  const auto sidecar = tags_sidecar(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream tin(sidecar, std::ios::binary);
    std::size_t row = 0;
    while (std::getline(tin, line)) {
      strip_cr(line);
      if (row >= result.corpus.pairs.size()) {
        throw DataError(sidecar.string() + ": more tag lines than data rows");
      }
      auto& p = result.corpus.pairs[row];
      p.tags = split_words(line);
      if (p.tags.size() != p.sentence1.size()) {
        throw DataError(sidecar.string() + ": line " + std::to_string(row + 1) + ": " +
                        std::to_string(p.tags.size()) + " tags for " +
                        std::to_string(p.sentence1.size()) + " tokens");
      }
      ++row;
    }
    if (row != result.corpus.pairs.size()) {
      throw DataError(sidecar.string() + ": fewer tag lines than data rows");
    }
  }

  for (auto& p : result.corpus.pairs) {
    if (packed_length(p) <= schema.max_len) continue;
    ++result.truncated;
    while (packed_length(p) > schema.max_len && p.sentence2 && !p.sentence2->empty()) {
      p.sentence2->pop_back();
    }
    while (packed_length(p) > schema.max_len && !p.sentence1.empty()) {
      p.sentence1.pop_back();
      if (!p.tags.empty()) p.tags.pop_back();
    }
  }
  return result;
}

void write_tsv(const std::filesystem::path& path, const Corpus& corpus) {
  const bool probes = corpus.labels == probe_labels() ||
                      std::any_of(corpus.pairs.begin(), corpus.pairs.end(),
                                  [](const LabeledPair& p) { return p.heuristic.has_value(); });
  const bool tagged = std::any_of(corpus.pairs.begin(), corpus.pairs.end(),
                                  [](const LabeledPair& p) { return !p.tags.empty(); });
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_tsv: cannot write " + path.string());
  out << "sentence1";
  if (corpus.paired) out << "\tsentence2";
  out << "\tlabel";
  if (probes) out << "\theuristic_class\tparse";
  out << '\n';
  for (const auto& p : corpus.pairs) {
    out << join(p.sentence1);
    if (corpus.paired) out << '\t' << (p.sentence2 ? join(*p.sentence2) : std::string());
    out << '\t' << corpus.labels.at(p.label);
    if (probes) {
      out << '\t' << (p.heuristic ? heuristic_name(*p.heuristic) : std::string_view{}) << '\t'
          << p.parse;
    }
    out << '\n';
  }
  if (tagged) {
    std::ofstream tout(tags_sidecar(path), std::ios::binary);
    for (const auto& p : corpus.pairs) tout << join(p.tags) << '\n';
  }
}

// Structured tasks -----------------------------------------------------------

std::string_view rule_name(Rule r) {
  switch (r) {
    case Rule::identity: return "identity";
    case Rule::reversal: return "reversal";
    case Rule::rotation: return "rotation";
    case Rule::substitution: return "substitution";
  }
  return "?";
}

Rule parse_rule(std::string_view name) {
  for (auto r : {Rule::identity, Rule::reversal, Rule::rotation, Rule::substitution}) {
    if (rule_name(r) == name) return r;
  }
  throw ConfigError("unknown rule '" + std::string(name) + "'");
}

std::vector<std::string> apply_rule(Rule rule, const std::vector<std::string>& words,
                                    const std::vector<std::string>& tags,
                                    const std::vector<std::vector<std::string>>& lexicon,
                                    const std::vector<std::string>& tag_names) {
  std::vector<std::string> out = words;
  switch (rule) {
    case Rule::identity:
      break;
    case Rule::reversal:
      std::reverse(out.begin(), out.end());
      break;
    case Rule::rotation:
      if (!out.empty()) std::rotate(out.begin(), out.begin() + 1, out.end());
      break;
    case Rule::substitution:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto t = std::find(tag_names.begin(), tag_names.end(), tags.at(i)) - tag_names.begin();
        const auto& cls = lexicon.at(t);
        const auto w = std::find(cls.begin(), cls.end(), words[i]) - cls.begin();
        out[i] = cls[(w + 1) % cls.size()];
      }
      break;
  }
  return out;
}

void StructuredTaskConfig::validate() const {
  if (num_tags == 0 || words_per_tag == 0) throw ConfigError("structured: sizes must be >= 1");
  if (min_len == 0 || max_len < min_len) throw ConfigError("structured: bad length range");
  if (source_train == 0 || source_dev == 0 || target_train == 0 || target_dev == 0) {
    throw ConfigError("structured: corpus sizes must be >= 1");
  }
  if (balance < 0.0 || balance > 1.0) throw ConfigError("structured: balance must be in [0,1]");
  if (word_pool_per_tag > 0) {
    const std::size_t needed = disjoint ? 2 * words_per_tag : words_per_tag;
    if (needed > word_pool_per_tag) {
      throw ConfigError("structured: disjoint vocabularies need " + std::to_string(needed) +
                        " words per tag but the pool has " + std::to_string(word_pool_per_tag));
    }
  }
  if (rule == Rule::substitution && words_per_tag < 2) {
    throw ConfigError("structured: substitution needs at least 2 words per tag");
  }
}

namespace {

const std::vector<std::string>& grammar_tags() {
  static const std::vector<std::string> tags{"det", "adj", "noun", "pron",
                                             "verb", "adv", "prep", "punct"};
  return tags;
}

std::vector<std::string> make_tag_names(std::size_t n) {
  if (n == grammar_tags().size()) return grammar_tags();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("t" + std::to_string(i));
  return out;
}

// Tag sequence from a tiny phrase grammar (8 tags) or i.i.d. tags otherwise.
std::vector<std::size_t> sample_tag_sequence(const StructuredTaskConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::size_t> seq;
    if (cfg.num_tags == grammar_tags().size()) {
      enum { det, adj, noun, pron, verb, adv, prep, punct };
      auto np = [&] {
        if (rng.bernoulli(0.25)) {
          seq.push_back(pron);
          return;
        }
        seq.push_back(det);
        if (rng.bernoulli(0.4)) seq.push_back(adj);
        seq.push_back(noun);
      };
      np();
      seq.push_back(verb);
      if (rng.bernoulli(0.6)) np();
      if (rng.bernoulli(0.3)) seq.push_back(adv);
      if (rng.bernoulli(0.3)) {
        seq.push_back(prep);
        np();
      }
      seq.push_back(punct);
    } else {
      const std::size_t len = cfg.min_len + rng.index(cfg.max_len - cfg.min_len + 1);
      for (std::size_t i = 0; i < len; ++i) seq.push_back(rng.index(cfg.num_tags));
    }
    if (seq.size() >= cfg.min_len && seq.size() <= cfg.max_len) return seq;
  }
  throw ConfigError("structured: grammar cannot produce sentences of length " +
                    std::to_string(cfg.min_len) + ".." + std::to_string(cfg.max_len));
}

Corpus gen_split(std::size_t n, const StructuredTaskConfig& cfg,
                 const std::vector<std::vector<std::string>>& lexicon,
                 const std::vector<std::string>& tag_names, bool flip, Rng& rng) {
  Corpus c;
  c.paired = true;
  c.labels = {"0", "1"};
  const auto n_pos = static_cast<std::size_t>(std::llround(cfg.balance * static_cast<double>(n)));
  std::vector<char> positive(n, 0);
  std::fill(positive.begin(), positive.begin() + n_pos, 1);
  rng.shuffle(positive);

  for (std::size_t i = 0; i < n; ++i) {
    LabeledPair p;
    std::vector<std::string> b;
    while (true) {
      const auto tag_seq = sample_tag_sequence(cfg, rng);
      p.sentence1.clear();
      p.tags.clear();
      for (auto t : tag_seq) {
        p.tags.push_back(tag_names[t]);
        p.sentence1.push_back(lexicon[t][rng.index(lexicon[t].size())]);
      }
      b = apply_rule(cfg.rule, p.sentence1, p.tags, lexicon, tag_names);
      if (positive[i]) break;
      // Negatives shuffle the transformed sentence; need two distinct tokens.
      if (std::adjacent_find(b.begin(), b.end(), std::not_equal_to<>()) == b.end()) continue;
      auto shuffled = b;
      do {
        rng.shuffle(shuffled);
      } while (shuffled == b);
      b = std::move(shuffled);
      break;
    }
    p.sentence2 = std::move(b);
    const bool follows = positive[i] != 0;
    p.label = (follows != flip) ? 1 : 0;
    c.pairs.push_back(std::move(p));
  }
  return c;
}

}  // namespace

StructuredTasks gen_structured_tasks(std::uint64_t seed, const StructuredTaskConfig& cfg) {
  cfg.validate();
  const auto tag_names = make_tag_names(cfg.num_tags);
  std::vector<std::vector<std::string>> src_lex(cfg.num_tags), tgt_lex(cfg.num_tags);
  for (std::size_t t = 0; t < cfg.num_tags; ++t) {
    for (std::size_t i = 0; i < cfg.words_per_tag; ++i) {
      if (cfg.word_pool_per_tag > 0) {
        src_lex[t].push_back("w" + tag_names[t] + std::to_string(i));
        tgt_lex[t].push_back("w" + tag_names[t] +
                             std::to_string(cfg.disjoint ? i + cfg.words_per_tag : i));
      } else if (cfg.disjoint) {
        src_lex[t].push_back("x" + tag_names[t] + std::to_string(i));
        tgt_lex[t].push_back("y" + tag_names[t] + std::to_string(i));
      } else {
        src_lex[t].push_back("w" + tag_names[t] + std::to_string(i));
        tgt_lex[t].push_back("w" + tag_names[t] + std::to_string(i));
      }
    }
  }

  Rng master(seed);
  Rng src_rng = master.fork(1);
  Rng tgt_rng = master.fork(2);
  StructuredTasks out;
  out.source.train = gen_split(cfg.source_train, cfg, src_lex, tag_names, false, src_rng);
  out.source.dev = gen_split(cfg.source_dev, cfg, src_lex, tag_names, false, src_rng);
  out.target.train =
      gen_split(cfg.target_train, cfg, tgt_lex, tag_names, cfg.flip_target_labels, tgt_rng);
  out.target.dev =
      gen_split(cfg.target_dev, cfg, tgt_lex, tag_names, cfg.flip_target_labels, tgt_rng);
  for (const auto& cls : src_lex) {
    for (const auto& w : cls) {
      out.source_words.push_back(w);
      out.vocab.add(w);
    }
  }
  for (const auto& cls : tgt_lex) {
    for (const auto& w : cls) {
      out.target_words.push_back(w);
      out.vocab.add(w);
    }
  }
  return out;
}

BinaryLabel collapse_to_two_class(NliLabel pred) {
  return pred == NliLabel::entailment ? BinaryLabel::entailment : BinaryLabel::non_entailment;
}

BinaryLabel collapse_label(std::string_view label) {
  if (label == "entailment") return BinaryLabel::entailment;
  if (label == "neutral") return collapse_to_two_class(NliLabel::neutral);
  if (label == "contradiction") return collapse_to_two_class(NliLabel::contradiction);
  if (label == "non-entailment" || label == "not_entailment") return BinaryLabel::non_entailment;
  throw DataError("collapse_label: '" + std::string(label) + "' is not an NLI label");
}

}  // namespace tpr::data
