// tprlab: data generation, training, transfer, evaluation, analysis and
// gradient checks for TPR sequence models.
//
// Exit codes: 0 ok, 1 gradient check failed, 2 config error, 3 data error,
// 4 runtime error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tpr/analysis.hpp"
#include "tpr/checkpoint.hpp"
#include "tpr/data.hpp"
#include "tpr/errors.hpp"
#include "tpr/gradcheck.hpp"
#include "tpr/kv.hpp"
#include "tpr/model.hpp"
#include "tpr/simd.hpp"
#include "tpr/train.hpp"
#include "tpr/transfer.hpp"

namespace fs = std::filesystem;
using namespace tpr;

namespace {

enum Exit { kOk = 0, kGradFail = 1, kConfig = 2, kData = 3, kRuntime = 4 };

// Options shared by the model-building commands.
struct ModelOpts {
  std::string family = "tpr-transformer";
  std::size_t hidden = 64, layers = 2, heads = 4, ff = 128, max_len = 32;
  double dropout = 0.1;
  std::size_t d_sym = 32, d_role = 32, n_sym = 50, n_role = 35;
  double temp = 1.0;
  std::optional<double> temp_sym, temp_role;
  double lambda = 1e-3;
  double scale_init = 1000.0;
  bool selector_bias = false;
  std::string agg = "concat_project";
  std::size_t proj_dim = 128;
  std::size_t lstm_hidden = 0;
  bool post_layer = false;
  std::size_t post_heads = 1;

  void add(CLI::App* app) {
    app->add_option("--model", family, "baseline | baseline+lstm | tpr-lstm | tpr-transformer");
    app->add_option("--hidden", hidden, "backbone hidden size");
    app->add_option("--layers", layers, "backbone layers");
    app->add_option("--heads", heads, "attention heads");
    app->add_option("--ff", ff, "feed-forward size");
    app->add_option("--max-len", max_len, "maximum packed sequence length");
    app->add_option("--dropout", dropout, "dropout probability");
    app->add_option("--d-sym", d_sym, "filler dimension");
    app->add_option("--d-role", d_role, "role dimension");
    app->add_option("--n-sym", n_sym, "number of fillers");
    app->add_option("--n-role", n_role, "number of roles");
    app->add_option("--temp", temp, "selector softmax temperature (both selectors)");
    app->add_option("--temp-sym", temp_sym, "filler selector temperature override");
    app->add_option("--temp-role", temp_role, "role selector temperature override");
    app->add_option("--lambda", lambda, "orthogonality penalty weight");
    app->add_option("--scale-init", scale_init, "initial output scale");
    app->add_flag("--selector-bias", selector_bias, "add bias terms to the selectors");
    app->add_option("--agg", agg, "max_pool | mean_pool | cls_only | concat_project");
    app->add_option("--proj-dim", proj_dim, "concat_project output size");
    app->add_option("--lstm-hidden", lstm_hidden, "baseline+lstm hidden size (0: backbone size)");
    app->add_flag("--post-layer", post_layer, "extra encoder layer over the bound tensors");
    app->add_option("--post-heads", post_heads, "heads of the post layer");
  }

  ModelConfig build(std::size_t vocab, std::size_t classes) const {
    ModelConfig c;
    c.family = parse_family(family);
    c.backbone = {vocab, hidden, layers, heads, ff, max_len, dropout};
    c.tpr = {d_sym, d_role, n_sym, n_role};
    c.tpr_opt.temp_sym = temp_sym.value_or(temp);
    c.tpr_opt.temp_role = temp_role.value_or(temp);
    c.tpr_opt.scale_init = scale_init;
    c.tpr_opt.lambda = lambda;
    c.tpr_opt.selector_bias = selector_bias;
    c.aggregation = head::parse_aggregation(agg);
    c.proj_dim = proj_dim;
    c.num_classes = classes;
    c.lstm_hidden = lstm_hidden;
    c.post_layer = post_layer;
    c.post_heads = post_heads;
    c.validate();
    return c;
  }
};

struct TrainOpts {
  train::TrainConfig cfg;

  void add(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "lr", cfg.learning_rate, "learning rate");
    app->add_option("--" + prefix + "epochs", cfg.epochs, "training epochs");
    app->add_option("--" + prefix + "batch", cfg.batch_size, "micro-batch size");
    app->add_option("--" + prefix + "accum", cfg.accumulation_steps, "accumulation steps");
    app->add_option("--" + prefix + "warmup", cfg.warmup_proportion, "warm-up proportion");
  }
  train::TrainConfig build(std::uint64_t seed, bool dropout) const {
    auto c = cfg;
    c.seed = seed;
    c.dropout = dropout;
    c.validate();
    return c;
  }
};

struct CorpusOpts {
  std::string labels = "0,1";
  bool single = false;

  void add(CLI::App* app) {
    app->add_option("--labels", labels, "comma-separated label strings, in class-id order");
    app->add_flag("--single", single, "single-sentence corpora (no sentence2 column)");
  }
  data::TsvSchema schema(std::size_t max_len) const {
    data::TsvSchema s;
    s.paired = !single;
    std::stringstream ss(labels);
    std::string item;
    while (std::getline(ss, item, ',')) s.labels.push_back(item);
    if (s.labels.size() < 2) throw ConfigError("--labels needs at least two labels");
    s.max_len = max_len;
    return s;
  }
};

std::string join(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError(flag + ": no such file " + path);
}

fs::path out_dir(const std::string& out, std::uint64_t seed) {
  if (!out.empty()) return out;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return fs::path("runs") / (std::string(buf) + "-seed" + std::to_string(seed));
}

void write_resolved(const fs::path& dir, const CLI::App* app) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.resolved", std::ios::binary);
  out << "# " << app->get_name() << "\n";
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config" || name == "out") continue;
    std::string value = opt->count() > 0 ? join(opt->reduced_results(), ',') : opt->get_default_str();
    // Flags take no argument and have no captured default.
    if (opt->get_expected_min() == 0 && value.empty()) value = "false";
    out << name << '=' << value << '\n';
  }
}

data::Vocab resolve_vocab(const std::string& vocab_path,
                          const std::vector<const data::Corpus*>& corpora) {
  if (!vocab_path.empty()) return data::Vocab::load(vocab_path);
  data::Vocab v;
  for (const auto* c : corpora) data::extend_vocab(v, *c);
  return v;
}

void write_history(const fs::path& path, const std::vector<train::EpochRecord>& h) {
  std::ofstream out(path, std::ios::binary);
  out << "epoch,train_loss,dev_acc\n";
  for (const auto& r : h) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.2f\n", r.epoch, r.train_loss, r.dev_acc);
    out << buf;
  }
}

// Replays `key=value` lines of the --config file as `--key=value` arguments
// ahead of the command-line flags, so explicit flags win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::vector<std::string> out;
  std::vector<std::string> injected;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("--config: cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_kv(ss.str())) injected.push_back("--" + k + "=" + v);
  }
  if (out.empty()) return out;
  // Subcommand name stays first.
  out.insert(out.begin() + 1, injected.begin(), injected.end());
  return out;
}

// -- commands -----------------------------------------------------------------

struct GenDataCmd {
  std::string task = "structured";
  std::uint64_t seed = 1;
  std::string out;
  data::StructuredTaskConfig st;
  std::string rule = "reversal";
  bool overlap = false, no_flip = false;
  data::ProbeSpec probes;
  std::optional<std::size_t> count;

  void add(CLI::App* app) {
    app->add_option("--task", task, "structured | probes");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--out", out, "output directory");
    app->add_option("--rule", rule, "identity | reversal | rotation | substitution");
    app->add_option("--num-tags", st.num_tags, "tag count");
    app->add_option("--words-per-tag", st.words_per_tag, "words per tag per corpus");
    app->add_option("--word-pool", st.word_pool_per_tag, "shared word pool per tag (0: none)");
    app->add_flag("--overlap", overlap, "let source and target share words");
    app->add_option("--min-words", st.min_len, "minimum sentence length");
    app->add_option("--max-words", st.max_len, "maximum sentence length");
    app->add_option("--source-train", st.source_train, "source training pairs");
    app->add_option("--source-dev", st.source_dev, "source dev pairs");
    app->add_option("--target-train", st.target_train, "target training pairs");
    app->add_option("--target-dev", st.target_dev, "target dev pairs");
    app->add_option("--balance", st.balance, "fraction of positive (or entailment) pairs");
    app->add_flag("--no-flip", no_flip, "keep the source label mapping on the target task");
    app->add_option("--count", count, "probes per heuristic class");
    app->add_option("--vocab-size", probes.vocab_size, "probe grammar noun count");
    app->add_option("--depth", probes.depth, "probe grammar depth");
  }

  int run(const CLI::App* app) {
    const fs::path dir = out_dir(out, seed);
    if (task == "structured") {
      st.rule = data::parse_rule(rule);
      st.disjoint = !overlap;
      st.flip_target_labels = !no_flip;
      const auto tasks = data::gen_structured_tasks(seed, st);
      data::write_tsv(dir / "source" / "train.tsv", tasks.source.train);
      data::write_tsv(dir / "source" / "dev.tsv", tasks.source.dev);
      data::write_tsv(dir / "target" / "train.tsv", tasks.target.train);
      data::write_tsv(dir / "target" / "dev.tsv", tasks.target.dev);
      tasks.vocab.save(dir / "vocab.txt");
    } else if (task == "probes") {
      if (count) probes.lexical_overlap = probes.subsequence = probes.constituent = *count;
      probes.balance = st.balance;
      const auto c = data::gen_heuristic_probes(probes, seed);
      data::write_tsv(dir / "probes.tsv", c);
      data::Vocab v;
      data::extend_vocab(v, c);
      v.save(dir / "vocab.txt");
    } else {
      throw ConfigError("--task must be structured or probes");
    }
    write_resolved(dir, app);
    std::cout << "wrote " << dir.string() << "\n";
    return kOk;
  }
};

struct TrainCmd {
  ModelOpts model;
  TrainOpts tr;
  CorpusOpts corpus;
  std::string train_path, dev_path, vocab_path, out, source_ckpt;
  bool t_backbone = false, t_fillers = false, t_roles = false, no_tprenc = false;
  std::uint64_t seed = 1;
  bool no_dropout = false;

  void add(CLI::App* app) {
    model.add(app);
    tr.add(app);
    corpus.add(app);
    app->add_option("--train", train_path, "training TSV");
    app->add_option("--dev", dev_path, "dev TSV");
    app->add_option("--vocab", vocab_path, "vocabulary file (default: built from the data)");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "random seed");
    app->add_flag("--no-dropout", no_dropout, "disable dropout while training");
    app->add_option("--source-ckpt", source_ckpt, "checkpoint to transfer parameters from");
    app->add_flag("--transfer-backbone", t_backbone, "copy backbone.* and tprenc.*");
    app->add_flag("--transfer-fillers", t_fillers, "copy tpr.S");
    app->add_flag("--transfer-roles", t_roles, "copy tpr.R");
    app->add_flag("--no-tprenc-transfer", no_tprenc, "backbone transfer skips tprenc.*");
  }

  int run(const CLI::App* app) {
    require_file("--train", train_path);
    if (!dev_path.empty()) require_file("--dev", dev_path);
    if (!vocab_path.empty()) require_file("--vocab", vocab_path);
    xfer::TransferPlan plan{t_backbone, t_fillers, t_roles, source_ckpt, !no_tprenc};
    if (plan.any()) require_file("--source-ckpt", source_ckpt);
    const auto schema = corpus.schema(model.max_len);
    const auto tcfg = tr.build(seed, !no_dropout);

    const auto train_c = data::load_tsv(train_path, schema);
    data::LoadResult dev_c;
    if (!dev_path.empty()) dev_c = data::load_tsv(dev_path, schema);
    const auto vocab = resolve_vocab(vocab_path, {&train_c.corpus, &dev_c.corpus});
    Model m(model.build(vocab.size(), schema.labels.size()), seed);
    if (plan.any()) xfer::apply_transfer(m, plan);

    const fs::path dir = out_dir(out, seed);
    const auto res = train::train(m, train::encode(train_c.corpus, vocab),
                                  train::encode(dev_c.corpus, vocab), tcfg);
    auto c = ckpt::snapshot(m, vocab, seed, res.history);
    c.meta["labels"] = join(schema.labels, ',');
    ckpt::save(dir / "model.ckpt", c);
    write_history(dir / "history.csv", res.history);
    write_resolved(dir, app);
    std::printf("best_dev_acc=%.2f epoch=%zu truncated=%zu\n", res.best_dev_acc, res.best_epoch,
                train_c.truncated + dev_c.truncated);
    return kOk;
  }
};

struct TransferCmd {
  ModelOpts model;
  TrainOpts target_tr, source_tr;
  CorpusOpts corpus;
  std::string source_train, source_dev, train_path, dev_path, vocab_path, out, source_ckpt;
  std::string target_name = "target";
  std::uint64_t seed = 1;
  std::size_t jobs = 1, baseline_runs = 3;
  std::optional<double> source_scale;
  bool no_tprenc = false, no_dropout = false;

  void add(CLI::App* app) {
    model.add(app);
    target_tr.add(app);
    source_tr.add(app, "source-");
    corpus.add(app);
    app->add_option("--source-train", source_train, "source-task training TSV");
    app->add_option("--source-dev", source_dev, "source-task dev TSV");
    app->add_option("--source-ckpt", source_ckpt, "use this source checkpoint instead of training one");
    app->add_option("--train", train_path, "target-task training TSV");
    app->add_option("--dev", dev_path, "target-task dev TSV");
    app->add_option("--vocab", vocab_path, "joint vocabulary file");
    app->add_option("--target-name", target_name, "name written to the target column");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--jobs", jobs, "concurrent training runs");
    app->add_option("--baseline-runs", baseline_runs, "baseline seeds (best is kept)");
    app->add_option("--source-scale", source_scale, "scale_init override for the source model");
    app->add_flag("--no-tprenc-transfer", no_tprenc, "backbone transfer skips tprenc.*");
    app->add_flag("--no-dropout", no_dropout, "disable dropout while training");
  }

  int run(const CLI::App* app) {
    if (source_ckpt.empty()) require_file("--source-train", source_train);
    if (source_ckpt.empty() && !source_dev.empty()) require_file("--source-dev", source_dev);
    if (!source_ckpt.empty()) require_file("--source-ckpt", source_ckpt);
    require_file("--train", train_path);
    require_file("--dev", dev_path);
    if (!vocab_path.empty()) require_file("--vocab", vocab_path);
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    const auto schema = corpus.schema(model.max_len);

    data::TaskSplits src, tgt;
    if (source_ckpt.empty()) {
      src.train = data::load_tsv(source_train, schema).corpus;
      if (!source_dev.empty()) src.dev = data::load_tsv(source_dev, schema).corpus;
    }
    tgt.train = data::load_tsv(train_path, schema).corpus;
    tgt.dev = data::load_tsv(dev_path, schema).corpus;

    xfer::TransferConfig cfg;
    std::optional<ckpt::Checkpoint> given;
    data::Vocab vocab;
    if (!source_ckpt.empty()) {
      given = ckpt::load(source_ckpt);
      vocab = ckpt::vocab(*given);
    } else {
      vocab = resolve_vocab(vocab_path, {&src.train, &src.dev, &tgt.train, &tgt.dev});
    }
    cfg.model = model.build(vocab.size(), schema.labels.size());
    cfg.source_train = source_tr.build(seed, !no_dropout);
    cfg.target_train = target_tr.build(seed, !no_dropout);
    cfg.seed = seed;
    cfg.baseline_runs = baseline_runs;
    cfg.jobs = jobs;
    cfg.include_tprenc = !no_tprenc;
    cfg.source_scale_init = source_scale;
    cfg.source = given;
    cfg.target_name = target_name;

    const auto table = xfer::run_transfer_matrix(src, tgt, vocab, cfg);
    const fs::path dir = out_dir(out, seed);
    xfer::write_gain_csv(dir / "gains.csv", {table});
    if (!given) ckpt::save(dir / "source.ckpt", table.source);
    write_resolved(dir, app);
    const auto& best = table.plans[table.best_plan()];
    std::printf("baseline=%.2f best=%.2f plan=%s gain=%+.2f\n", table.baseline_acc, best.dev_acc,
                best.plan.label().c_str(), xfer::gain(table.baseline_acc, best.dev_acc));
    return kOk;
  }
};

struct EvalCmd {
  ModelOpts model;
  CorpusOpts corpus;
  std::string ckpt_path, dev_path, vocab_path, out;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    model.add(app);
    corpus.add(app);
    app->add_option("--ckpt", ckpt_path, "trained checkpoint (default: untrained model from flags)");
    app->add_option("--dev", dev_path, "evaluation TSV");
    app->add_option("--vocab", vocab_path, "vocabulary for an untrained model");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "initialization seed for an untrained model");
  }

  int run(const CLI::App* app) {
    require_file("--dev", dev_path);
    if (!ckpt_path.empty()) require_file("--ckpt", ckpt_path);
    if (!vocab_path.empty()) require_file("--vocab", vocab_path);
    std::optional<ckpt::Checkpoint> c;
    std::size_t max_len = model.max_len;
    if (!ckpt_path.empty()) {
      c = ckpt::load(ckpt_path);
      max_len = ckpt::model_config(*c).backbone.max_len;
    }
    const auto schema = corpus.schema(max_len);
    const auto dev = data::load_tsv(dev_path, schema);
    data::Vocab vocab = c ? ckpt::vocab(*c) : resolve_vocab(vocab_path, {&dev.corpus});
    Model m = c ? ckpt::load_model(*c) : Model(model.build(vocab.size(), schema.labels.size()), seed);
    const auto examples = train::encode(dev.corpus, vocab);
    const auto pred = train::predict(m, examples);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == examples[i].label;
    const double acc =
        examples.empty() ? 0.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(examples.size());

    const fs::path dir = out_dir(out, seed);
    fs::create_directories(dir);
    std::ofstream csv(dir / "predictions.csv", std::ios::binary);
    csv << "index,label,prediction\n";
    for (std::size_t i = 0; i < pred.size(); ++i) {
      csv << i << ',' << schema.labels[examples[i].label] << ',' << schema.labels.at(pred[i]) << '\n';
    }
    std::ofstream summary(dir / "eval.csv", std::ios::binary);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", acc);
    summary << "examples,correct,accuracy\n" << examples.size() << ',' << hit << ',' << buf << '\n';
    write_resolved(dir, app);
    std::printf("accuracy=%s n=%zu\n", buf, examples.size());
    return kOk;
  }
};

struct AnalyzeCmd {
  std::string ckpt_path, data_path, probes_path, out, model_labels;
  std::size_t k = 2;
  bool normalize = false, single = false;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
    app->add_option("--data", data_path, "tagged TSV for the role histogram");
    app->add_option("--probes", probes_path, "heuristic probe TSV");
    app->add_option("--model-labels", model_labels,
                    "label strings of the model's classes (default: from the checkpoint)");
    app->add_option("-k,--top-k", k, "roles per token tuple");
    app->add_flag("--normalize", normalize, "also write row-normalized histogram data");
    app->add_flag("--single", single, "--data is a single-sentence corpus");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "seed used in the default output directory name");
  }

  int run(const CLI::App* app) {
    require_file("--ckpt", ckpt_path);
    if (data_path.empty() && probes_path.empty()) {
      throw ConfigError("analyze needs --data and/or --probes");
    }
    if (!data_path.empty()) require_file("--data", data_path);
    if (!probes_path.empty()) require_file("--probes", probes_path);
    const auto c = ckpt::load(ckpt_path);
    const Model m = ckpt::load_model(c);
    const auto vocab = ckpt::vocab(c);
    const std::size_t max_len = m.config().backbone.max_len;
    auto split = [](const std::string& spec) {
      std::vector<std::string> v;
      std::stringstream ss(spec);
      std::string item;
      while (std::getline(ss, item, ',')) v.push_back(item);
      return v;
    };
    // The tagged corpus uses the training label set; --model-labels only
    // renames classes for the probe collapse.
    auto it = c.meta.find("labels");
    const auto labels = split(it == c.meta.end() ? "0,1" : it->second);
    const auto probe_names = model_labels.empty() ? labels : split(model_labels);
    const fs::path dir = out_dir(out, seed);
    fs::create_directories(dir);
    if (!data_path.empty()) {
      const auto corpus = data::load_tsv(data_path, {!single, labels, max_len}).corpus;
      const auto h = analysis::tag_role_histogram(m, corpus, vocab, k);
      analysis::write_analysis_csv(dir / "analysis.csv", h);
      analysis::write_histogram_dat(dir / "analysis.dat", h, false);
      if (normalize) analysis::write_histogram_dat(dir / "analysis_normalized.dat", h, true);
      std::printf("tokens=%zu tags=%zu\n", h.total(), h.counts.size());
    }
    if (!probes_path.empty()) {
      const auto probes = data::load_tsv(probes_path, {true, data::probe_labels(), max_len}).corpus;
      const auto r = analysis::evaluate_probes(m, vocab, probe_names, probes);
      analysis::write_probes_csv(dir / "probes.csv", r);
      std::printf("probes_overall=%.2f\n", r.overall);
    }
    write_resolved(dir, app);
    return kOk;
  }
};

struct GradcheckCmd {
  std::string family = "all";
  std::uint64_t seed = 1;
  double tol = 1e-4;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--model", family, "model family or 'all'");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--tol", tol, "relative error tolerance");
    app->add_option("--out", out, "optional directory for gradcheck.csv");
  }

  int run(const CLI::App* app) {
    std::vector<Family> fams;
    if (family == "all") {
      fams = {Family::baseline, Family::baseline_lstm, Family::tpr_lstm, Family::tpr_transformer};
    } else {
      fams = {parse_family(family)};
    }
    bool ok = true;
    std::ostringstream csv;
    csv << "model,parameter,size,rel_error,pass\n";
    for (auto f : fams) {
      const auto r = gradcheck::check_family(f, seed, tol);
      for (const auto& e : r.entries) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.3e,%d\n", std::string(family_name(f)).c_str(),
                      e.name.c_str(), e.size, e.rel_error, e.pass ? 1 : 0);
        csv << buf;
      }
      std::printf("%-16s %s max_rel_error=%.3e (%zu tensors)\n", std::string(family_name(f)).c_str(),
                  r.pass ? "PASS" : "FAIL", r.max_rel_error, r.entries.size());
      ok = ok && r.pass;
    }
    if (!out.empty()) {
      fs::create_directories(out);
      std::ofstream(fs::path(out) / "gradcheck.csv", std::ios::binary) << csv.str();
      write_resolved(out, app);
    }
    return ok ? kOk : kGradFail;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tprlab: TPR sequence models, transfer and analysis"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.add_flag_callback("--scalar", [] { simd::set_backend(simd::Backend::scalar); },
                        "force the scalar reference kernels");

  GenDataCmd gen;
  TrainCmd tr;
  TransferCmd xf;
  EvalCmd ev;
  AnalyzeCmd an;
  GradcheckCmd gc;
  auto* s_gen = app.add_subcommand("gen-data", "generate synthetic corpora");
  auto* s_tr = app.add_subcommand("train", "train one model");
  auto* s_xf = app.add_subcommand("transfer", "run the 7-plan transfer matrix");
  auto* s_ev = app.add_subcommand("eval", "accuracy of a model on a TSV");
  auto* s_an = app.add_subcommand("analyze", "role histogram and probe report");
  auto* s_gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  for (auto* s : {s_gen, s_tr, s_xf, s_ev, s_an, s_gc}) {
    s->add_option("--config", "key=value file; explicit flags override it");
  }
  gen.add(s_gen);
  tr.add(s_tr);
  xf.add(s_xf);
  ev.add(s_ev);
  an.add(s_an);
  gc.add(s_gc);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // Global flags before the subcommand are left in place.
    std::size_t sub = 0;
    while (sub < args.size() && args[sub].rfind("--", 0) == 0) ++sub;
    std::vector<std::string> head(args.begin(), args.begin() + static_cast<long>(sub));
    std::vector<std::string> rest(args.begin() + static_cast<long>(sub), args.end());
    rest = expand_config(rest);
    head.insert(head.end(), rest.begin(), rest.end());
    std::reverse(head.begin(), head.end());  // CLI11 takes the vector in reverse
    app.parse(head);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }

  try {
    if (s_gen->parsed()) return gen.run(s_gen);
    if (s_tr->parsed()) return tr.run(s_tr);
    if (s_xf->parsed()) return xf.run(s_xf);
    if (s_ev->parsed()) return ev.run(s_ev);
    if (s_an->parsed()) return an.run(s_an);
    if (s_gc->parsed()) return gc.run(s_gc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
