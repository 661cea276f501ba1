// Heuristic probe grammar. Every premise is built as a small tree so the
// bracketed parse and the word sequence come from the same structure.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "tpr/data.hpp"
#include "tpr/errors.hpp"
#include "tpr/rng.hpp"

namespace tpr::data {

void ProbeSpec::validate() const {
  if (vocab_size < 3) throw ConfigError("probes: vocab_size must be at least 3");
  if (depth < 1) throw ConfigError("probes: depth must be at least 1");
  if (!(balance >= 0.0 && balance <= 1.0)) throw ConfigError("probes: balance must be in [0,1]");
}

std::size_t ProbeSpec::count(HeuristicClass h) const {
  switch (h) {
    case HeuristicClass::lexical_overlap: return lexical_overlap;
    case HeuristicClass::subsequence: return subsequence;
    case HeuristicClass::constituent: return constituent;
  }
  return 0;
}

namespace {

struct Phrase {
  std::vector<std::string> words;
  std::string parse;
};

Phrase leaf(const std::string& w) { return {{w}, w}; }

Phrase node(const std::string& label, std::initializer_list<Phrase> parts) {
  Phrase out;
  out.parse = "(" + label;
  for (const auto& p : parts) {
    out.words.insert(out.words.end(), p.words.begin(), p.words.end());
    out.parse += " " + p.parse;
  }
  out.parse += ")";
  return out;
}

const std::vector<std::string> kNouns{"doctor", "lawyer",  "artist",    "student", "judge",
                                      "senator", "banker", "actor",     "author",  "manager",
                                      "tourist", "clerk",  "scientist", "athlete", "professor"};
const std::vector<std::string> kTransitive{"saw",    "helped",  "called",  "paid",
                                           "thanked", "advised", "admired", "avoided"};
const std::vector<std::string> kIntransitive{"slept", "arrived", "waited", "laughed", "danced",
                                             "left"};
const std::vector<std::string> kPreps{"near", "behind", "beside"};

class Grammar {
 public:
  Grammar(const ProbeSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  std::string noun(std::size_t i) const {
    return i < kNouns.size() ? kNouns[i] : "noun" + std::to_string(i);
  }

  // k distinct noun indices.
  std::vector<std::size_t> distinct_nouns(std::size_t k) {
    std::vector<std::size_t> idx(spec_.vocab_size);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng_.shuffle(idx);
    idx.resize(k);
    return idx;
  }

  std::string vt() { return kTransitive[rng_.index(kTransitive.size())]; }
  std::string vi() { return kIntransitive[rng_.index(kIntransitive.size())]; }

  Phrase np(std::size_t n) { return node("NP", {leaf("the"), leaf(noun(n))}); }

  // NP with 0..depth-1 prepositional modifiers.
  Phrase np_mod(std::size_t n) {
    Phrase out = np(n);
    const std::size_t mods = rng_.index(spec_.depth);
    for (std::size_t i = 0; i < mods; ++i) {
      Phrase pp = node("PP", {leaf(kPreps[rng_.index(kPreps.size())]),
                              np(rng_.index(spec_.vocab_size))});
      out = node("NP", {out, pp});
    }
    return out;
  }

  Phrase clause() {
    if (rng_.bernoulli(0.5)) return node("S", {np_mod(rng_.index(spec_.vocab_size)), node("VP", {leaf(vi())})});
    const auto n = distinct_nouns(2);
    return node("S", {np_mod(n[0]), node("VP", {leaf(vt()), np(n[1])})});
  }

 private:
  const ProbeSpec& spec_;
  Rng& rng_;
};

LabeledPair make_pair(HeuristicClass h, const Phrase& premise, const Phrase& hypothesis,
                      bool entails) {
  LabeledPair p;
  p.sentence1 = premise.words;
  p.sentence2 = hypothesis.words;
  p.label = entails ? 0 : 1;
  p.heuristic = h;
  p.parse = premise.parse;
  return p;
}

LabeledPair lexical_overlap(Grammar& g, bool entails) {
  const auto n = g.distinct_nouns(3);
  if (entails) {
    // Dropping a relative clause keeps the main clause.
    const auto v1 = g.vt();
    const auto v2 = g.vt();
    Phrase subj = node("NP", {g.np_mod(n[0]),
                              node("SBAR", {leaf("who"), node("S", {g.np(n[1]), node("VP", {leaf(v1)})})})});
    Phrase obj = g.np(n[2]);
    Phrase premise = node("S", {subj, node("VP", {leaf(v2), obj})});
    Phrase hyp = node("S", {g.np(n[0]), node("VP", {leaf(v2), g.np(n[2])})});
    return make_pair(HeuristicClass::lexical_overlap, premise, hyp, true);
  }
  // Swapping subject and object reuses every word but changes the meaning.
  const auto v = g.vt();
  Phrase premise = node("S", {g.np_mod(n[0]), node("VP", {leaf(v), g.np(n[1])})});
  Phrase hyp = node("S", {g.np(n[1]), node("VP", {leaf(v), g.np(n[0])})});
  return make_pair(HeuristicClass::lexical_overlap, premise, hyp, false);
}

LabeledPair subsequence(Grammar& g, bool entails) {
  if (entails) {
    // Second conjunct of a coordination.
    const auto n = g.distinct_nouns(3);
    Phrase first = node("S", {g.np_mod(n[0]), node("VP", {leaf(g.vt()), g.np(n[1])})});
    Phrase second = node("S", {g.np(n[2]), node("VP", {leaf(g.vi())})});
    Phrase premise = node("S", {first, leaf("and"), second});
    return make_pair(HeuristicClass::subsequence, premise, second, true);
  }
  // The noun inside a PP modifier is not the subject.
  const auto n = g.distinct_nouns(2);
  const auto v = g.vi();
  Phrase subj = node("NP", {g.np(n[0]), node("PP", {leaf(kPreps[0]), g.np(n[1])})});
  Phrase premise = node("S", {subj, node("VP", {leaf(v)})});
  Phrase hyp = node("S", {g.np(n[1]), node("VP", {leaf(v)})});
  return make_pair(HeuristicClass::subsequence, premise, hyp, false);
}

LabeledPair constituent(Grammar& g, bool entails, bool adverb_form) {
  if (adverb_form) {
    Phrase s = g.clause();
    Phrase premise = node("S", {node("ADVP", {leaf(entails ? "certainly" : "maybe")}), s});
    return make_pair(HeuristicClass::constituent, premise, s, entails);
  }
  Phrase s1 = g.clause();
  Phrase s2 = g.clause();
  Phrase premise =
      node("S", {node("SBAR", {leaf(entails ? "since" : "if"), s1}), leaf(","), s2});
  return make_pair(HeuristicClass::constituent, premise, s1, entails);
}

}  // namespace

Corpus gen_heuristic_probes(const ProbeSpec& spec, std::uint64_t seed) {
  spec.validate();
  Corpus c;
  c.paired = true;
  c.labels = probe_labels();
  Rng master(seed);
  std::uint64_t salt = 0;
  for (auto h : {HeuristicClass::lexical_overlap, HeuristicClass::subsequence,
                 HeuristicClass::constituent}) {
    Rng rng = master.fork(++salt);
    Grammar g(spec, rng);
    const std::size_t n = spec.count(h);
    const auto n_ent = static_cast<std::size_t>(std::llround(spec.balance * static_cast<double>(n)));
    std::vector<char> ent(n, 0);
    std::fill(ent.begin(), ent.begin() + n_ent, 1);
    rng.shuffle(ent);
    for (std::size_t i = 0; i < n; ++i) {
      switch (h) {
        case HeuristicClass::lexical_overlap:
          c.pairs.push_back(lexical_overlap(g, ent[i]));
          break;
        case HeuristicClass::subsequence:
          c.pairs.push_back(subsequence(g, ent[i]));
          break;
        case HeuristicClass::constituent:
          c.pairs.push_back(constituent(g, ent[i], rng.bernoulli(0.5)));
          break;
      }
    }
  }
  return c;
}

bool words_subset(const std::vector<std::string>& hypothesis,
                  const std::vector<std::string>& premise) {
  const std::set<std::string> pw(premise.begin(), premise.end());
  return std::all_of(hypothesis.begin(), hypothesis.end(),
                     [&](const std::string& w) { return pw.count(w) != 0; });
}

bool contiguous_subsequence(const std::vector<std::string>& hypothesis,
                            const std::vector<std::string>& premise) {
  if (hypothesis.empty()) return true;
  return std::search(premise.begin(), premise.end(), hypothesis.begin(), hypothesis.end()) !=
         premise.end();
}

bool complete_subtree(const std::vector<std::string>& hypothesis, std::string_view parse) {
  // Recursive descent over "(LABEL child ...)"; collects the yield of each node.
  std::vector<std::vector<std::string>> yields;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < parse.size() && parse[pos] == ' ') ++pos;
  };
  auto read_atom = [&] {
    const std::size_t start = pos;
    while (pos < parse.size() && parse[pos] != ' ' && parse[pos] != '(' && parse[pos] != ')') ++pos;
    return std::string(parse.substr(start, pos - start));
  };
  std::function<std::vector<std::string>()> read_node = [&]() -> std::vector<std::string> {
    if (pos >= parse.size() || parse[pos] != '(') throw DataError("parse: expected '('");
    ++pos;
    read_atom();  // label
    std::vector<std::string> y;
    while (true) {
      skip_ws();
      if (pos >= parse.size()) throw DataError("parse: unbalanced brackets");
      if (parse[pos] == ')') {
        ++pos;
        break;
      }
      if (parse[pos] == '(') {
        auto child = read_node();
        y.insert(y.end(), child.begin(), child.end());
      } else {
        y.push_back(read_atom());
      }
    }
    yields.push_back(y);
    return y;
  };
  skip_ws();
  if (parse.empty()) return false;
  read_node();
  return std::find(yields.begin(), yields.end(), hypothesis) != yields.end();
}

bool validate_probe(const LabeledPair& p) {
  if (!p.heuristic || !p.sentence2) return false;
  switch (*p.heuristic) {
    case HeuristicClass::lexical_overlap: return words_subset(*p.sentence2, p.sentence1);
    case HeuristicClass::subsequence: return contiguous_subsequence(*p.sentence2, p.sentence1);
    case HeuristicClass::constituent: return complete_subtree(*p.sentence2, p.parse);
  }
  return false;
}

}  // namespace tpr::data
