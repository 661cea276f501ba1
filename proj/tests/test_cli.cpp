#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tpr/data.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "tpr_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(TPRLAB_PATH) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> contents, for every file under dir.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

const std::string kSmallModel =
    " --model tpr-transformer --hidden 8 --ff 16 --heads 2 --layers 1 --max-len 16"
    " --d-sym 4 --d-role 4 --n-sym 6 --n-role 5 --proj-dim 8 --scale-init 10";

// One shared small corpus for the commands that need data.
const fs::path& corpus() {
  static const fs::path dir = [] {
    const auto d = kRoot / "corpus";
    fs::remove_all(d);
    const int rc = run("gen-data --task structured --seed 3 --source-train 60 --source-dev 20"
                       " --target-train 40 --target-dev 200 --out " + d.string());
    REQUIRE(rc == 0);
    return d;
  }();
  return dir;
}

std::string dev_flags() {
  return " --dev " + (corpus() / "target" / "dev.tsv").string() + " --vocab " +
         (corpus() / "vocab.txt").string();
}

std::string target_flags() {
  return " --train " + (corpus() / "target" / "train.tsv").string() + dev_flags();
}

}  // namespace

TEST_CASE("gen-data is deterministic") {
  const auto a = kRoot / "gen_a", b = kRoot / "gen_b";
  fs::remove_all(a);
  fs::remove_all(b);
  REQUIRE(run("gen-data --task structured --seed 7 --out " + a.string()) == 0);
  REQUIRE(run("gen-data --task structured --seed 7 --out " + b.string()) == 0);
  const auto ta = tree(a);
  CHECK(ta.size() == 10);
  CHECK(ta == tree(b));
  CHECK(ta.count("config.resolved") == 1);

  const auto pa = kRoot / "probes_a", pb = kRoot / "probes_b";
  REQUIRE(run("gen-data --task probes --count 50 --seed 2 --out " + pa.string()) == 0);
  REQUIRE(run("gen-data --task probes --count 50 --seed 2 --out " + pb.string()) == 0);
  CHECK(tree(pa) == tree(pb));
}

TEST_CASE("zero probes writes a header-only file") {
  const auto d = kRoot / "probes0";
  fs::remove_all(d);
  REQUIRE(run("gen-data --task probes --count 0 --out " + d.string()) == 0);
  const auto ls = lines(d / "probes.tsv");
  REQUIRE(ls.size() == 1);
  CHECK(ls[0].rfind("sentence1\tsentence2\tlabel", 0) == 0);
}

TEST_CASE("generated corpora survive a load and rewrite") {
  const auto src = corpus() / "source" / "train.tsv";
  const auto loaded = tpr::data::load_tsv(src, {true, {"0", "1"}, 64});
  CHECK(loaded.truncated == 0);
  CHECK(loaded.corpus.pairs.size() == 60);
  for (const auto& p : loaded.corpus.pairs) CHECK(p.tags.size() == p.sentence1.size());
  const auto copy = kRoot / "rewrite" / "train.tsv";
  tpr::data::write_tsv(copy, loaded.corpus);
  CHECK(slurp(copy) == slurp(src));
  CHECK(slurp(tpr::data::tags_sidecar(copy)) == slurp(tpr::data::tags_sidecar(src)));

  const auto pd = kRoot / "probes_rt";
  REQUIRE(run("gen-data --task probes --count 30 --seed 4 --out " + pd.string()) == 0);
  const auto probes = tpr::data::load_tsv(pd / "probes.tsv", {true, tpr::data::probe_labels(), 64});
  CHECK(probes.corpus.pairs.size() == 90);
  for (const auto& p : probes.corpus.pairs) CHECK(tpr::data::validate_probe(p));
}

TEST_CASE("exit codes") {
  CHECK(run("gradcheck --model tpr-transformer --seed 1") == 0);
  CHECK(run("train --model no-such-family" + target_flags()) == 2);
  CHECK(run("train" + kSmallModel + " --dev /nonexistent.tsv --train /nonexistent.tsv") == 2);
  CHECK(run("train" + kSmallModel + " --lr -1" + target_flags()) == 2);
  CHECK(run("frobnicate") == 2);

  const auto bad = kRoot / "bad.tsv";
  std::ofstream(bad) << "sentence1\tsentence2\tlabel\na b\tc d\t7\n";
  CHECK(run("eval" + kSmallModel + " --dev " + bad.string() + " --out " +
            (kRoot / "bad_eval").string()) == 3);
}

TEST_CASE("an untrained model evaluates at chance") {
  const auto d = kRoot / "eval_untrained";
  fs::remove_all(d);
  REQUIRE(run("eval" + kSmallModel + dev_flags() + " --seed 5 --out " + d.string()) == 0);
  const auto ls = lines(d / "eval.csv");
  REQUIRE(ls.size() == 2);
  CHECK(ls[0] == "examples,correct,accuracy");
  CHECK(ls[1].rfind("200,", 0) == 0);
  const double acc = std::stod(ls[1].substr(ls[1].rfind(',') + 1));
  MESSAGE("untrained accuracy " << acc);
  CHECK(acc >= 40.0);
  CHECK(acc <= 60.0);
  CHECK(lines(d / "predictions.csv").size() == 201);
}

TEST_CASE("config files compose with flags, flags winning") {
  const auto cfg = kRoot / "run.cfg";
  std::ofstream(cfg) << "# trial\nepochs=3\nlr=0.004\nbatch=4\n";
  const auto d = kRoot / "cfg_run";
  fs::remove_all(d);
  REQUIRE(run("train --config " + cfg.string() + kSmallModel + target_flags() +
              " --epochs 1 --out " + d.string()) == 0);
  const auto resolved = slurp(d / "config.resolved");
  CHECK(resolved.find("\nepochs=1\n") != std::string::npos);
  CHECK(resolved.find("\nlr=0.004\n") != std::string::npos);
  CHECK(resolved.find("\nbatch=4\n") != std::string::npos);
  CHECK(lines(d / "history.csv").size() == 2);
  CHECK(fs::exists(d / "model.ckpt"));
}

TEST_CASE("train, eval, analyze and transfer rerun byte-identically") {
  auto twice = [](const std::string& args, const std::string& name) {
    const auto a = kRoot / (name + "_a"), b = kRoot / (name + "_b");
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run(args + " --out " + a.string()) == 0);
    REQUIRE(run(args + " --out " + b.string()) == 0);
    const auto ta = tree(a);
    CHECK_FALSE(ta.empty());
    CHECK(ta == tree(b));
    return a;
  };

  const auto tr = twice("train" + kSmallModel + target_flags() + " --epochs 2 --batch 8 --seed 4",
                        "train");
  const auto ckpt = (tr / "model.ckpt").string();
  twice("eval --ckpt " + ckpt + " --dev " + (corpus() / "target" / "dev.tsv").string(), "eval");

  const auto pd = kRoot / "probes_an";
  REQUIRE(run("gen-data --task probes --count 20 --seed 5 --out " + pd.string()) == 0);
  const auto an = twice("analyze --ckpt " + ckpt + " --data " +
                            (corpus() / "target" / "dev.tsv").string() + " --probes " +
                            (pd / "probes.tsv").string() + " --normalize --model-labels entailment,non-entailment",
                        "analyze");
  CHECK(fs::exists(an / "analysis.csv"));
  CHECK(fs::exists(an / "analysis_normalized.dat"));
  CHECK(lines(an / "probes.csv").size() == 8);

  const auto xf = twice("transfer" + kSmallModel + target_flags() + " --source-train " +
                            (corpus() / "source" / "train.tsv").string() + " --source-dev " +
                            (corpus() / "source" / "dev.tsv").string() +
                            " --epochs 1 --source-epochs 1 --batch 8 --source-batch 8 --seed 2",
                        "transfer");
  const auto rows = lines(xf / "gains.csv");
  REQUIRE(rows.size() == 9);
  CHECK(rows[1].rfind("tpr-transformer,target,0,0,0,", 0) == 0);
  for (std::size_t i = 2; i < rows.size(); ++i) CHECK(rows[i].rfind("tpr-transformer,target,", 0) == 0);
}
