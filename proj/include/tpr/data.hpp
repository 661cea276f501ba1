#pragma once

// Tokenization, GLUE-style TSV ingestion, synthetic structured transfer tasks,
// and heuristic probe generation with validators.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tpr::data {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;

  Vocab();

  int add(std::string_view token);
  // kUnk for unknown tokens.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, reserved tokens first.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercased whitespace split.
std::vector<std::string> split_words(std::string_view text);
std::vector<int> tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

enum class HeuristicClass { lexical_overlap, subsequence, constituent };
std::string_view heuristic_name(HeuristicClass h);
HeuristicClass parse_heuristic(std::string_view name);

struct LabeledPair {
  std::vector<std::string> sentence1;
  std::optional<std::vector<std::string>> sentence2;
  int label = 0;
  std::vector<std::string> tags;  // empty or one per sentence1 token
  std::optional<HeuristicClass> heuristic;
  std::string parse;  // bracketed parse of sentence1 (probes only)

  bool operator==(const LabeledPair&) const = default;
};

struct Corpus {
  bool paired = true;
  std::vector<std::string> labels;  // label id -> label string
  std::vector<LabeledPair> pairs;

  bool operator==(const Corpus&) const = default;
};

// Packed sequence: [CLS] s1 [SEP] (s2 [SEP]).
std::size_t packed_length(const LabeledPair& p);
std::vector<int> pack(const LabeledPair& p, const Vocab& vocab);

// Adds every token of the corpus to vocab.
void extend_vocab(Vocab& vocab, const Corpus& corpus);

struct TsvSchema {
  bool paired = true;
  std::vector<std::string> labels;
  std::size_t max_len = 32;
};

struct LoadResult {
  Corpus corpus;
  std::size_t truncated = 0;
};

std::filesystem::path tags_sidecar(const std::filesystem::path& tsv);

// Reads a header-first TSV. Pairs whose packed length exceeds max_len are
// trimmed from the end (sentence2 first) and counted in `truncated`. Tags are
// read from the .tags.tsv sidecar when present.
LoadResult load_tsv(const std::filesystem::path& path, const TsvSchema& schema);

// Writes corpus as TSV plus a tags sidecar when any pair carries tags. Probe
// corpora get heuristic_class and parse columns.
void write_tsv(const std::filesystem::path& path, const Corpus& corpus);

// Structured transfer tasks ------------------------------------------------

enum class Rule { identity, reversal, rotation, substitution };
std::string_view rule_name(Rule r);
Rule parse_rule(std::string_view name);

// Applies rule to a sentence over a vocabulary whose words are grouped by tag.
std::vector<std::string> apply_rule(Rule rule, const std::vector<std::string>& words,
                                    const std::vector<std::string>& tags,
                                    const std::vector<std::vector<std::string>>& lexicon,
                                    const std::vector<std::string>& tag_names);

struct StructuredTaskConfig {
  Rule rule = Rule::reversal;
  std::size_t num_tags = 8;
  std::size_t words_per_tag = 6;
  std::size_t word_pool_per_tag = 0;  // 0: each corpus gets fresh words
  bool disjoint = true;
  std::size_t min_len = 3;
  std::size_t max_len = 6;
  std::size_t source_train = 2000;
  std::size_t source_dev = 400;
  std::size_t target_train = 200;
  std::size_t target_dev = 400;
  double balance = 0.5;          // fraction of rule-following pairs
  bool flip_target_labels = true;

  void validate() const;
};

struct TaskSplits {
  Corpus train;
  Corpus dev;
};

struct StructuredTasks {
  TaskSplits source;
  TaskSplits target;
  Vocab vocab;
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;
};

StructuredTasks gen_structured_tasks(std::uint64_t seed, const StructuredTaskConfig& cfg);

// Heuristic probes ---------------------------------------------------------

struct ProbeSpec {
  std::size_t vocab_size = 10;  // nouns available to the grammar
  std::size_t depth = 2;        // max prepositional modifiers + 1
  std::size_t lexical_overlap = 100;
  std::size_t subsequence = 100;
  std::size_t constituent = 100;
  double balance = 0.5;  // fraction labelled entailment

  void validate() const;
  std::size_t count(HeuristicClass h) const;
};

inline const std::vector<std::string>& probe_labels() {
  static const std::vector<std::string> labels{"entailment", "non-entailment"};
  return labels;
}

Corpus gen_heuristic_probes(const ProbeSpec& spec, std::uint64_t seed);

bool words_subset(const std::vector<std::string>& hypothesis,
                  const std::vector<std::string>& premise);
bool contiguous_subsequence(const std::vector<std::string>& hypothesis,
                            const std::vector<std::string>& premise);
// True when hypothesis is the yield of a complete subtree of the bracketed parse.
bool complete_subtree(const std::vector<std::string>& hypothesis, std::string_view parse);
// Dispatches on the pair's heuristic class.
bool validate_probe(const LabeledPair& p);

enum class NliLabel { entailment, neutral, contradiction };
enum class BinaryLabel { entailment, non_entailment };

BinaryLabel collapse_to_two_class(NliLabel pred);
// Accepts entailment/neutral/contradiction and the two-class label strings.
BinaryLabel collapse_label(std::string_view label);

}  // namespace tpr::data
