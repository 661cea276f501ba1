#include "tpr/transfer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "tpr/errors.hpp"

namespace tpr::xfer {

std::string TransferPlan::label() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += '+';
    s += name;
  };
  add(transfer_backbone, "backbone");
  add(transfer_fillers, "fillers");
  add(transfer_roles, "roles");
  return s.empty() ? "none" : s;
}

std::vector<TransferPlan> all_plans() {
  std::vector<TransferPlan> out;
  for (int bits = 1; bits < 8; ++bits) {
    TransferPlan p;
    p.transfer_backbone = bits & 4;
    p.transfer_fillers = bits & 2;
    p.transfer_roles = bits & 1;
    out.push_back(p);
  }
  return out;
}

namespace {

bool starts_with(const std::string& s, std::string_view prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

std::vector<std::string> transferred_names(const ParamStore& params, const TransferPlan& plan) {
  std::vector<std::string> out;
  for (const auto& [name, p] : params) {
    const bool hit =
        (plan.transfer_backbone &&
         (starts_with(name, "backbone.") || (plan.include_tprenc && starts_with(name, "tprenc.")))) ||
        (plan.transfer_fillers && name == "tpr.S") || (plan.transfer_roles && name == "tpr.R");
    if (hit) out.push_back(name);
  }
  return out;
}

void apply_transfer(Model& model, const ckpt::Checkpoint& source, const TransferPlan& plan) {
  for (const auto& name : transferred_names(model.params(), plan)) {
    Tensor& p = model.params().at(name);
    const ckpt::Entry* e = source.find(name);
    if (!e) throw TransferError("transfer: source checkpoint has no parameter " + name);
    if (e->shape != p.shape()) {
      throw TransferError("transfer: parameter " + name + " is " + shape_str(e->shape) +
                          " in the source but " + shape_str(p.shape()) + " in the target");
    }
    std::copy(e->values.begin(), e->values.end(), p.mutable_values().begin());
  }
}

void apply_transfer(Model& model, const TransferPlan& plan) {
  if (!plan.any()) return;
  apply_transfer(model, ckpt::load(plan.source_checkpoint), plan);
}

double gain(double baseline_acc, double finetuned_acc) {
  // Adding 0.0 folds a rounded -0 into +0.
  return std::round((finetuned_acc - baseline_acc) * 100.0) / 100.0 + 0.0;
}

std::size_t TransferTable::best_plan() const {
  if (plans.empty()) throw ContractError("transfer table has no plans");
  std::size_t best = 0;
  for (std::size_t i = 1; i < plans.size(); ++i)
    if (plans[i].dev_acc > plans[best].dev_acc) best = i;
  return best;
}

const PlanResult& TransferTable::plan(bool backbone, bool fillers, bool roles) const {
  for (const auto& p : plans) {
    if (p.plan.transfer_backbone == backbone && p.plan.transfer_fillers == fillers &&
        p.plan.transfer_roles == roles)
      return p;
  }
  throw ContractError("transfer table: no such plan");
}

namespace {

void run_parallel(std::vector<std::function<void()>>& tasks, std::size_t jobs) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

TransferTable run_transfer_matrix(const data::TaskSplits& source, const data::TaskSplits& target,
                                  const data::Vocab& vocab, const TransferConfig& cfg) {
  if ((!cfg.source && source.train.pairs.empty()) || target.train.pairs.empty()) {
    throw DataError("transfer: source and target training corpora must be non-empty");
  }
  const auto src_train = train::encode(source.train, vocab);
  const auto src_dev = train::encode(source.dev, vocab);
  const auto tgt_train = train::encode(target.train, vocab);
  const auto tgt_dev = train::encode(target.dev, vocab);

  TransferTable table;
  table.model = std::string(family_name(cfg.model.family));
  table.target = cfg.target_name;
  table.baseline_runs.assign(cfg.baseline_runs, 0.0);

  ModelConfig src_cfg = cfg.model;
  if (cfg.source_scale_init) src_cfg.tpr_opt.scale_init = *cfg.source_scale_init;
  ckpt::Checkpoint source_ckpt;

  std::vector<std::function<void()>> phase1;
  for (std::size_t k = 0; k < cfg.baseline_runs; ++k) {
    phase1.push_back([&, k] {
      Model m(cfg.model, cfg.seed + k);
      auto tc = cfg.target_train;
      tc.seed = cfg.seed + k;
      table.baseline_runs[k] = train::train(m, tgt_train, tgt_dev, tc).best_dev_acc;
    });
  }
  if (cfg.source) {
    source_ckpt = *cfg.source;
  } else {
    phase1.push_back([&] {
      Model m(src_cfg, cfg.seed);
      auto tc = cfg.source_train;
      tc.seed = cfg.seed;
      const auto r = train::train(m, src_train, src_dev, tc);
      table.source_dev_acc = r.best_dev_acc;
      source_ckpt = ckpt::snapshot(m, vocab, cfg.seed, r.history);
    });
  }
  run_parallel(phase1, cfg.jobs);
  for (double a : table.baseline_runs) table.baseline_acc = std::max(table.baseline_acc, a);

  // All plans share one seed. Plans that copy the same parameter set (possible
  // for families without a TPR layer) are trained once.
  auto plans = all_plans();
  for (auto& p : plans) p.include_tprenc = cfg.include_tprenc;
  const Model probe(cfg.model, cfg.seed);
  std::map<std::vector<std::string>, std::size_t> unique;
  std::vector<std::size_t> slot(plans.size());
  std::vector<TransferPlan> to_run;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    auto key = transferred_names(probe.params(), plans[i]);
    auto [it, fresh] = unique.emplace(std::move(key), to_run.size());
    if (fresh) to_run.push_back(plans[i]);
    slot[i] = it->second;
  }
  std::vector<double> acc(to_run.size(), 0.0);
  std::vector<std::function<void()>> phase2;
  for (std::size_t j = 0; j < to_run.size(); ++j) {
    phase2.push_back([&, j] {
      Model m(cfg.model, cfg.seed);
      apply_transfer(m, source_ckpt, to_run[j]);
      auto tc = cfg.target_train;
      tc.seed = cfg.seed;
      acc[j] = train::train(m, tgt_train, tgt_dev, tc).best_dev_acc;
    });
  }
  run_parallel(phase2, cfg.jobs);
  for (std::size_t i = 0; i < plans.size(); ++i) table.plans.push_back({plans[i], acc[slot[i]]});
  table.source = std::move(source_ckpt);
  return table;
}

void write_gain_csv(const std::filesystem::path& path, const std::vector<TransferTable>& tables) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  out << "model,target,transfer_backbone,transfer_fillers,transfer_roles,baseline_acc,"
         "finetuned_acc,gain\n";
  for (const auto& t : tables) {
    out << t.model << ',' << t.target << ",0,0,0," << fmt(t.baseline_acc) << ','
        << fmt(t.baseline_acc) << ',' << fmt(0.0) << '\n';
    for (const auto& p : t.plans) {
      out << t.model << ',' << t.target << ',' << p.plan.transfer_backbone << ','
          << p.plan.transfer_fillers << ',' << p.plan.transfer_roles << ','
          << fmt(t.baseline_acc) << ',' << fmt(p.dev_acc) << ','
          << fmt(gain(t.baseline_acc, p.dev_acc)) << '\n';
    }
  }
}

}  // namespace tpr::xfer
