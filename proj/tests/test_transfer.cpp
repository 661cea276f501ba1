#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "tpr/errors.hpp"
#include "tpr/gradcheck.hpp"
#include "tpr/transfer.hpp"

using namespace tpr;
using namespace tpr::xfer;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model(std::size_t vocab) {
  ModelConfig c;
  c.family = Family::tpr_transformer;
  c.backbone = {vocab, 8, 1, 2, 12, 16, 0.1};
  c.tpr = {4, 3, 6, 5};
  c.proj_dim = 8;
  return c;
}

bool same_values(const Tensor& a, const Tensor& b) {
  return std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// Names whose values differ between two models.
std::set<std::string> changed(const Model& a, const Model& b) {
  std::set<std::string> out;
  for (const auto& [n, t] : a.params())
    if (!same_values(t, b.params().at(n))) out.insert(n);
  return out;
}

struct Fixture {
  data::StructuredTasks tasks;
  ModelConfig model;
  ckpt::Checkpoint source;

  Fixture() {
    data::StructuredTaskConfig st;
    st.source_train = 40;
    st.source_dev = 20;
    st.target_train = 30;
    st.target_dev = 20;
    tasks = data::gen_structured_tasks(1, st);
    model = small_model(tasks.vocab.size());
    Model src(model, 99);  // differs from every target seed used below
    source = ckpt::snapshot(src, tasks.vocab, 99, {});
  }
};

}  // namespace

TEST_CASE("seven plans, the truth table minus all-false") {
  const auto plans = all_plans();
  REQUIRE(plans.size() == 7);
  std::set<std::string> labels;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    CHECK(p.any());
    const int bits = 4 * p.transfer_backbone + 2 * p.transfer_fillers + p.transfer_roles;
    CHECK(bits == static_cast<int>(i) + 1);
    labels.insert(p.label());
  }
  CHECK(labels.size() == 7);
}

TEST_CASE("gain bookkeeping") {
  CHECK(gain(61.73, 74.01) == 12.28);
  CHECK(gain(80.0, 79.995) == 0.0);
  CHECK_FALSE(std::signbit(gain(80.0, 79.999)));
  CHECK(gain(70.0, 65.5) == -4.5);
}

TEST_CASE("plans copy exactly their named subsets") {
  Fixture f;
  const Model fresh(f.model, 1);

  SUBCASE("all-false leaves the model unchanged") {
    Model m(f.model, 1);
    apply_transfer(m, f.source, TransferPlan{});
    CHECK(changed(m, fresh).empty());
  }
  SUBCASE("roles only") {
    Model m(f.model, 1);
    TransferPlan p;
    p.transfer_roles = true;
    apply_transfer(m, f.source, p);
    CHECK(changed(m, fresh) == std::set<std::string>{"tpr.R"});
    CHECK(m.params().at("tpr.R").requires_grad());
    CHECK(same_values(m.params().at("tpr.R"), Tensor::from(f.source.find("tpr.R")->shape,
                                                           f.source.find("tpr.R")->values)));
  }
  SUBCASE("fillers only") {
    Model m(f.model, 1);
    TransferPlan p;
    p.transfer_fillers = true;
    apply_transfer(m, f.source, p);
    CHECK(changed(m, fresh) == std::set<std::string>{"tpr.S"});
  }
  SUBCASE("backbone covers backbone and selector encoders unless excluded") {
    Model m(f.model, 1);
    TransferPlan p;
    p.transfer_backbone = true;
    apply_transfer(m, f.source, p);
    for (const auto& n : changed(m, fresh))
      CHECK((n.rfind("backbone.", 0) == 0 || n.rfind("tprenc.", 0) == 0));
    for (const auto& [n, t] : m.params()) {
      const bool in = n.rfind("backbone.", 0) == 0 || n.rfind("tprenc.", 0) == 0;
      if (in) CHECK(same_values(t, Tensor::from(f.source.find(n)->shape, f.source.find(n)->values)));
      else CHECK(same_values(t, fresh.params().at(n)));
    }
    Model k(f.model, 1);
    p.include_tprenc = false;
    apply_transfer(k, f.source, p);
    for (const auto& n : changed(k, fresh)) CHECK(n.rfind("backbone.", 0) == 0);
  }
  SUBCASE("no plan touches the classifier") {
    for (const auto& plan : all_plans()) {
      Model m(f.model, 1);
      apply_transfer(m, f.source, plan);
      CHECK(same_values(m.params().at("head.W_f"), fresh.params().at("head.W_f")));
      CHECK(same_values(m.params().at("head.proj"), fresh.params().at("head.proj")));
    }
  }
}

TEST_CASE("shape mismatches name the parameter") {
  Fixture f;
  auto other = f.model;
  other.tpr.d_role = 4;
  Model m(other, 1);
  TransferPlan p;
  p.transfer_roles = true;
  try {
    apply_transfer(m, f.source, p);
    FAIL("expected TransferError");
  } catch (const TransferError& e) {
    CHECK(std::string(e.what()).find("tpr.R") != std::string::npos);
  }
}

TEST_CASE("transfer from a checkpoint file") {
  Fixture f;
  const auto path = fs::temp_directory_path() / "tpr_test_transfer_src.ckpt";
  ckpt::save(path, f.source);
  Model m(f.model, 1);
  TransferPlan p;
  p.transfer_fillers = true;
  p.source_checkpoint = path;
  apply_transfer(m, p);
  CHECK(same_values(m.params().at("tpr.S"),
                    Tensor::from(f.source.find("tpr.S")->shape, f.source.find("tpr.S")->values)));
}

namespace {

TransferConfig quick_config(const ModelConfig& model) {
  TransferConfig c;
  c.model = model;
  c.source_train.learning_rate = 3e-3;
  c.source_train.epochs = 2;
  c.source_train.batch_size = 8;
  c.source_train.accumulation_steps = 1;
  c.target_train = c.source_train;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("the matrix runs seven plans, deterministically, serial or parallel") {
  Fixture f;
  auto cfg = quick_config(f.model);
  const auto a = run_transfer_matrix(f.tasks.source, f.tasks.target, f.tasks.vocab, cfg);
  REQUIRE(a.plans.size() == 7);
  CHECK(a.baseline_runs.size() == 3);
  CHECK(a.baseline_acc == *std::max_element(a.baseline_runs.begin(), a.baseline_runs.end()));
  CHECK(a.finetuned_acc() == a.plans[a.best_plan()].dev_acc);
  for (const auto& p : a.plans) {
    CHECK(p.dev_acc >= 0.0);
    CHECK(p.dev_acc <= 100.0);
  }

  cfg.jobs = 4;
  const auto b = run_transfer_matrix(f.tasks.source, f.tasks.target, f.tasks.vocab, cfg);
  CHECK(b.baseline_runs == a.baseline_runs);
  CHECK(b.source == a.source);
  for (std::size_t i = 0; i < 7; ++i) CHECK(b.plans[i].dev_acc == a.plans[i].dev_acc);

  const auto csv = fs::temp_directory_path() / "tpr_test_gains.csv";
  write_gain_csv(csv, {a});
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "model,target,transfer_backbone,transfer_fillers,transfer_roles,baseline_acc,"
                "finetuned_acc,gain");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].rfind("tpr-transformer,target,0,0,0,", 0) == 0);
  CHECK(rows[0].substr(rows[0].size() - 5) == ",0.00");
}

TEST_CASE("a supplied source checkpoint skips source training") {
  Fixture f;
  auto cfg = quick_config(f.model);
  cfg.source = f.source;
  const auto t = run_transfer_matrix({}, f.tasks.target, f.tasks.vocab, cfg);
  CHECK(t.source == f.source);
  CHECK(t.plans.size() == 7);
}

TEST_CASE("self-transfer of the backbone does not hurt") {
  data::StructuredTaskConfig st;
  st.target_train = 200;
  st.target_dev = 200;
  st.source_train = 1;
  st.source_dev = 1;
  const auto tasks = data::gen_structured_tasks(3, st);
  ModelConfig m;
  m.backbone = {tasks.vocab.size(), 16, 1, 2, 32, 16, 0.1};
  m.tpr = {8, 8, 12, 8};
  m.proj_dim = 32;
  TransferConfig cfg;
  cfg.model = m;
  cfg.seed = 3;
  cfg.source_train.learning_rate = 3e-3;
  cfg.source_train.epochs = 15;
  cfg.source_train.batch_size = 8;
  cfg.source_train.accumulation_steps = 1;
  cfg.target_train = cfg.source_train;
  const auto t = run_transfer_matrix(tasks.target, tasks.target, tasks.vocab, cfg);
  const double bb = t.plan(true, false, false).dev_acc;
  MESSAGE("baseline " << t.baseline_acc << " backbone self-transfer " << bb);
  CHECK(bb >= t.baseline_acc - 2.0);
}
