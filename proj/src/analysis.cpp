#include "tpr/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "tpr/errors.hpp"

namespace tpr::analysis {

RoleTuple top_k_roles(std::span<const double> a, std::size_t K) {
  if (K < 1 || K > a.size()) {
    throw ParameterError("top_k_roles: K=" + std::to_string(K) + " outside [1, " +
                         std::to_string(a.size()) + "]");
  }
  RoleTuple idx(a.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return a[x] > a[y]; });
  idx.resize(K);
  return idx;
}

std::vector<std::size_t> tag_positions(const data::LabeledPair& p) {
  std::vector<std::size_t> pos(p.sentence1.size());
  std::iota(pos.begin(), pos.end(), 1);
  return pos;
}

std::vector<RoleAssignment> role_assignments(const Model& model, const data::LabeledPair& p,
                                             const data::Vocab& vocab, std::size_t K) {
  if (!has_tpr_layer(model.config().family)) {
    throw ContractError("role analysis needs a model with a TPR layer");
  }
  if (p.tags.size() != p.sentence1.size()) {
    throw DataError("role analysis: pair is not tagged one-to-one");
  }
  NoGradGuard guard;
  const auto out = model.forward(data::pack(p, vocab));
  const Tensor& a = out.role_attn;
  const std::size_t n_role = a.cols();
  const auto pos = tag_positions(p);
  std::vector<RoleAssignment> res;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    res.push_back({pos[i], p.tags[i], top_k_roles(a.values().subspan(pos[i] * n_role, n_role), K)});
  }
  return res;
}

void TagRoleHistogram::add(const std::string& tag, const RoleTuple& roles, std::size_t n) {
  counts[tag][roles] += n;
}

void TagRoleHistogram::merge(const TagRoleHistogram& other) {
  for (const auto& [tag, row] : other.counts)
    for (const auto& [t, n] : row) add(tag, t, n);
}

std::size_t TagRoleHistogram::total() const {
  std::size_t n = 0;
  for (const auto& [tag, row] : counts)
    for (const auto& [t, c] : row) n += c;
  return n;
}

TagRoleHistogram tag_role_histogram(const Model& model, const data::Corpus& corpus,
                                    const data::Vocab& vocab, std::size_t K) {
  TagRoleHistogram h;
  for (const auto& p : corpus.pairs) {
    if (p.tags.empty()) throw DataError("tag_role_histogram: corpus carries no tags");
    for (const auto& ra : role_assignments(model, p, vocab, K)) h.add(ra.tag, ra.roles);
  }
  return h;
}

std::string tuple_string(const RoleTuple& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(t[i]);
  }
  return s;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_analysis_csv(const std::filesystem::path& path, const TagRoleHistogram& h) {
  auto out = open_out(path);
  out << "tag,role_tuple,count\n";
  for (const auto& [tag, row] : h.counts)
    for (const auto& [t, n] : row) out << tag << ',' << tuple_string(t) << ',' << n << '\n';
}

void write_histogram_dat(const std::filesystem::path& path, const TagRoleHistogram& h,
                         bool normalize) {
  std::set<RoleTuple> tuples;
  for (const auto& [tag, row] : h.counts)
    for (const auto& [t, n] : row) tuples.insert(t);
  auto out = open_out(path);
  out << "# plot with: set style histogram rowstacked; plot for [i=2:" << tuples.size() + 1
      << "] '" << path.filename().string() << "' using i:xtic(1) title columnhead\n";
  out << "tag";
  for (const auto& t : tuples) out << ' ' << tuple_string(t);
  out << '\n';
  for (const auto& [tag, row] : h.counts) {
    std::size_t total = 0;
    for (const auto& [t, n] : row) total += n;
    out << tag;
    for (const auto& t : tuples) {
      auto it = row.find(t);
      const std::size_t n = it == row.end() ? 0 : it->second;
      if (normalize) {
        out << ' ' << fixed(total ? static_cast<double>(n) / static_cast<double>(total) : 0.0, 6);
      } else {
        out << ' ' << n;
      }
    }
    out << '\n';
  }
}

const ProbeCell& ProbeReport::cell(data::HeuristicClass h, data::BinaryLabel label) const {
  for (const auto& c : cells)
    if (c.heuristic == h && c.correct_label == label) return c;
  throw ContractError("probe report: missing cell");
}

ProbeReport evaluate_probes(const ProbePredictor& predict, const data::Corpus& probes) {
  using data::BinaryLabel;
  using data::HeuristicClass;
  ProbeReport r;
  for (auto h : {HeuristicClass::lexical_overlap, HeuristicClass::subsequence,
                 HeuristicClass::constituent})
    for (auto l : {BinaryLabel::entailment, BinaryLabel::non_entailment})
      r.cells.push_back({h, l, 0, 0, 0.0});

  std::size_t total = 0, hit = 0;
  for (const auto& p : probes.pairs) {
    if (!p.heuristic) throw DataError("evaluate_probes: pair without heuristic class");
    const BinaryLabel gold = data::collapse_label(probes.labels.at(p.label));
    // Cells are heuristic-major with entailment first.
    auto& c = r.cells[2 * static_cast<std::size_t>(*p.heuristic) + static_cast<std::size_t>(gold)];
    const bool ok = predict(p) == gold;
    ++c.n;
    c.correct += ok;
    ++total;
    hit += ok;
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (auto& c : r.cells) {
    if (c.n == 0) continue;
    c.accuracy = 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.n);
    sum += c.accuracy;
    ++used;
  }
  r.overall = used ? sum / static_cast<double>(used) : 0.0;
  r.weighted_overall = total ? 100.0 * static_cast<double>(hit) / static_cast<double>(total) : 0.0;
  return r;
}

ProbeReport evaluate_probes(const Model& model, const data::Vocab& vocab,
                            const std::vector<std::string>& model_labels,
                            const data::Corpus& probes) {
  if (model_labels.size() != model.config().num_classes) {
    throw DataError("evaluate_probes: label list does not match the model's class count");
  }
  std::vector<data::BinaryLabel> collapsed;
  for (const auto& l : model_labels) collapsed.push_back(data::collapse_label(l));
  return evaluate_probes(
      [&](const data::LabeledPair& p) {
        NoGradGuard guard;
        const Tensor out = model.forward(data::pack(p, vocab)).logits;
        const auto logits = out.values();
        const auto k = std::max_element(logits.begin(), logits.end()) - logits.begin();
        return collapsed[static_cast<std::size_t>(k)];
      },
      probes);
}

void write_probes_csv(const std::filesystem::path& path, const ProbeReport& r) {
  auto out = open_out(path);
  out << "heuristic_class,correct_label,accuracy\n";
  for (const auto& c : r.cells) {
    out << data::heuristic_name(c.heuristic) << ','
        << (c.correct_label == data::BinaryLabel::entailment ? "entailment" : "non-entailment")
        << ',' << fixed(c.accuracy, 2) << '\n';
  }
  out << "overall,all," << fixed(r.overall, 2) << '\n';
}

}  // namespace tpr::analysis
