#pragma once

// Parameter-subset transfer from a source-task checkpoint and the full
// 7-plan transfer matrix with gain accounting.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tpr/checkpoint.hpp"
#include "tpr/data.hpp"
#include "tpr/model.hpp"
#include "tpr/train.hpp"

namespace tpr::xfer {

struct TransferPlan {
  bool transfer_backbone = false;
  bool transfer_fillers = false;
  bool transfer_roles = false;
  std::filesystem::path source_checkpoint;
  bool include_tprenc = true;  // backbone subset also covers tprenc.*

  bool any() const { return transfer_backbone || transfer_fillers || transfer_roles; }
  std::string label() const;
};

// The truth table minus all-false, ordered by (backbone, fillers, roles) as a
// binary number.
std::vector<TransferPlan> all_plans();

// Names in `params` that the plan copies.
std::vector<std::string> transferred_names(const ParamStore& params, const TransferPlan& plan);

// Copies the plan's subsets from source into model; head.* is never copied and
// copied tensors stay trainable. Missing or mis-shaped source entries raise
// TransferError naming the parameter.
void apply_transfer(Model& model, const ckpt::Checkpoint& source, const TransferPlan& plan);
// Loads plan.source_checkpoint first.
void apply_transfer(Model& model, const TransferPlan& plan);

// Fine-tuned minus baseline, rounded to 0.01 accuracy points.
double gain(double baseline_acc, double finetuned_acc);

struct TransferConfig {
  ModelConfig model;
  train::TrainConfig source_train;
  train::TrainConfig target_train;
  std::uint64_t seed = 1;
  std::size_t baseline_runs = 3;
  std::size_t jobs = 1;
  bool include_tprenc = true;
  std::optional<double> source_scale_init;  // per-source override of scale_init
  std::optional<ckpt::Checkpoint> source;   // skip source training when set
  std::string target_name = "target";
};

struct PlanResult {
  TransferPlan plan;
  double dev_acc = 0.0;
};

struct TransferTable {
  std::string model;
  std::string target;
  std::vector<double> baseline_runs;  // dev accuracy per baseline seed
  double baseline_acc = 0.0;          // best of baseline_runs
  double source_dev_acc = 0.0;
  ckpt::Checkpoint source;
  std::vector<PlanResult> plans;      // 7 rows in all_plans() order

  std::size_t best_plan() const;
  double finetuned_acc() const { return plans.at(best_plan()).dev_acc; }
  const PlanResult& plan(bool backbone, bool fillers, bool roles) const;
};

TransferTable run_transfer_matrix(const data::TaskSplits& source, const data::TaskSplits& target,
                                  const data::Vocab& vocab, const TransferConfig& cfg);

// Columns: model, target, transfer_backbone, transfer_fillers, transfer_roles,
// baseline_acc, finetuned_acc, gain. One baseline row then the plan rows.
void write_gain_csv(const std::filesystem::path& path, const std::vector<TransferTable>& tables);

}  // namespace tpr::xfer
