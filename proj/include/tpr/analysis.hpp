#pragma once

// Role-attention interpretation against token tags, and diagnostic accuracy
// over heuristic probes.

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tpr/data.hpp"
#include "tpr/model.hpp"

namespace tpr::analysis {

using RoleTuple = std::vector<std::size_t>;

// Indices of the K largest weights, descending by weight, ties by index.
RoleTuple top_k_roles(std::span<const double> a_role, std::size_t K);

struct RoleAssignment {
  std::size_t token = 0;  // position in the packed sequence
  std::string tag;
  RoleTuple roles;
};

// Packed position of each sentence1 word's last sub-token. Tokens are whole
// words here, so word i sits at position i + 1 (after [CLS]).
std::vector<std::size_t> tag_positions(const data::LabeledPair& p);

std::vector<RoleAssignment> role_assignments(const Model& model, const data::LabeledPair& p,
                                             const data::Vocab& vocab, std::size_t K);

struct TagRoleHistogram {
  std::map<std::string, std::map<RoleTuple, std::size_t>> counts;

  void add(const std::string& tag, const RoleTuple& roles, std::size_t n = 1);
  void merge(const TagRoleHistogram& other);
  std::size_t total() const;
  bool operator==(const TagRoleHistogram&) const = default;
};

// Requires a TPR model and a tagged corpus (DataError otherwise).
TagRoleHistogram tag_role_histogram(const Model& model, const data::Corpus& corpus,
                                    const data::Vocab& vocab, std::size_t K = 2);

std::string tuple_string(const RoleTuple& t);  // dash-joined

// analysis.csv: tag, role_tuple, count.
void write_analysis_csv(const std::filesystem::path& path, const TagRoleHistogram& h);
// Gnuplot stacked-histogram table: one row per tag, one column per role tuple.
// With normalize, each row is divided by its total.
void write_histogram_dat(const std::filesystem::path& path, const TagRoleHistogram& h,
                         bool normalize);

struct ProbeCell {
  data::HeuristicClass heuristic;
  data::BinaryLabel correct_label;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // percent; 0 for an empty cell
};

struct ProbeReport {
  std::vector<ProbeCell> cells;   // heuristic-major, entailment first
  double overall = 0.0;           // mean of the non-empty cells
  double weighted_overall = 0.0;  // correct / total

  const ProbeCell& cell(data::HeuristicClass h, data::BinaryLabel label) const;
};

using ProbePredictor = std::function<data::BinaryLabel(const data::LabeledPair&)>;

ProbeReport evaluate_probes(const ProbePredictor& predict, const data::Corpus& probes);
// model_labels maps the model's class ids to label strings (2- or 3-class NLI
// labels); predictions are collapsed to two classes.
ProbeReport evaluate_probes(const Model& model, const data::Vocab& vocab,
                            const std::vector<std::string>& model_labels,
                            const data::Corpus& probes);

// probes.csv: heuristic_class, correct_label, accuracy.
void write_probes_csv(const std::filesystem::path& path, const ProbeReport& r);

}  // namespace tpr::analysis
