#include "fgted/cli/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "fgted/cli/predict.hpp"
#include "fgted/cli/pretrain.hpp"
#include "fgted/cli/run_config.hpp"
#include "fgted/cli/trainer.hpp"
#include "fgted/eval/ablation.hpp"
#include "fgted/eval/report.hpp"
#include "fgted/model/checkpoint.hpp"
#include "fgted/numerics/errors.hpp"
#include "fgted/synthgen/pipeline.hpp"

namespace fgted::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using dataio::Side;

namespace {

using Settings = std::map<std::string, std::string>;

struct Command {
  std::string name;
  std::string help;
  Settings defaults;
  std::function<int(const RunConfig&)> run;
};

model::EncoderConfig model_config(const RunConfig& c, std::size_t vocab_size) {
  model::EncoderConfig m;
  m.n_layers = c.count("layers");
  m.n_heads = c.count("heads");
  m.d_model = c.count("d-model");
  m.d_ff = c.count("d-ff");
  m.dropout_rate = c.real("dropout");
  m.max_positions = c.count("max-positions");
  m.vocab_size = vocab_size;
  m.classifier_hidden = {3 * m.d_model, m.d_model, 2};
  m.seed = c.u64("seed");
  m.validate();
  return m;
}

synthgen::CipherCorpus load_corpus_dir(const fs::path& dir) {
  synthgen::CipherCorpus c;
  c.pairs = synthgen::read_corpus(dir / "corpus.jsonl");
  c.alignment = synthgen::read_alignment(dir / "alignment.json");
  return c;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.slr = c.flag("slr");
  t.alpha = c.real("alpha");
  t.baseline = parse_baseline(c.str("baseline"));
  t.keep_fraction = c.real("keep-fraction");
  t.steps = c.count("steps");
  t.batch = c.count("batch");
  t.seed = c.u64("seed");
  t.adam.lr_scale = c.real("lr-scale");
  t.share_dropout = c.flag("share-dropout");
  t.dfl_gamma = c.real("gamma");
  t.grl_lambda = c.real("lambda");
  t.validate();
  return t;
}

json loss_summary(const std::vector<double>& losses) {
  json j;
  j["steps"] = losses.size();
  if (losses.empty()) return j;
  const std::size_t tail = std::min<std::size_t>(100, losses.size());
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < tail; ++i) {
    first += losses[i];
    last += losses[losses.size() - 1 - i];
  }
  j["mean_loss_first"] = first / static_cast<double>(tail);
  j["mean_loss_last"] = last / static_cast<double>(tail);
  return j;
}

eval::EvalReport fgted_report(const model::Checkpoint& ck,
                              std::span<const dataio::AnnotatedExample> gold, double threshold) {
  const auto preds = predict_examples(ck, gold, threshold);
  eval::EvalReport r;
  r.fgted = eval::score_fgted(gold, preds);
  r.wordqe = eval::score_wordqe(gold, preds);
  return r;
}

// ---- subcommands --------------------------------------------------------

int run_gen_corpus(const RunConfig& c) {
  const fs::path out = c.str("out");
  const auto corpus = synthgen::cipher_corpus(c.count("n"), c.count("vocab"), c.u64("seed"));
  write_run_config(out, c);
  synthgen::write_corpus(out / "corpus.jsonl", corpus.pairs);
  synthgen::write_alignment(out / "alignment.json", corpus.alignment);
  return kExitOk;
}

int run_synth(const RunConfig& c) {
  const fs::path out = c.str("out");
  const auto corpus = load_corpus_dir(c.str("corpus"));
  const auto filler = model::load_checkpoint(c.str("filler-model"));
  const auto reranker = model::load_checkpoint(c.str("rerank-model"));

  synthgen::SynthConfig sc;
  sc.beam = c.count("beam");
  sc.top_k = c.count("topk");
  sc.max_consecutive_masks = c.count("max-consecutive");
  sc.filter_threshold = c.real("filter-threshold");
  sc.seed = c.u64("seed");
  const std::string policy = c.str("side-policy");
  if (policy == "random") {
    sc.side_policy = synthgen::SidePolicy::kRandomUniform;
  } else if (policy == "hyp") {
    sc.side_policy = synthgen::SidePolicy::kHypOnly;
  } else if (policy == "src") {
    sc.side_policy = synthgen::SidePolicy::kSrcOnly;
  } else {
    throw UsageError("--side-policy expects random, hyp or src");
  }
  sc.validate();

  const synthgen::MlmFiller hyp_f(filler.params, filler.vocab, Side::kHyp,
                                  synthgen::single_token_words(corpus.alignment, true));
  const synthgen::MlmFiller src_f(filler.params, filler.vocab, Side::kSrc,
                                  synthgen::single_token_words(corpus.alignment, false));
  const synthgen::SynthModels models{
      &hyp_f, &src_f, synthgen::mlm_perplexity(reranker.params, reranker.vocab, Side::kHyp),
      synthgen::mlm_perplexity(reranker.params, reranker.vocab, Side::kSrc)};
  const auto result = synthgen::generate_dataset(
      corpus.pairs, synthgen::alignment_scorer(corpus.alignment), models, sc, c.count("n"));

  write_run_config(out, c);
  synthgen::write_bilingual(out / "synthetic.jsonl", result.examples);
  const json stats = result.stats.to_json();
  write_json_file(out / "metrics.json", stats);
  if (c.has("stats-out")) {
    write_json_file(c.str("stats-out"), stats);
  } else {
    std::cout << stats.dump() << '\n';
  }
  if (result.stats.partial) {
    std::cerr << "warning: corpus exhausted after " << result.stats.generated << " of "
              << result.stats.requested << " examples\n";
  }
  return kExitOk;
}

int run_pretrain(const RunConfig& c) {
  const fs::path out = c.str("out");
  const auto corpus = load_corpus_dir(c.str("corpus"));
  PretrainConfig pc;
  pc.objectives = parse_objectives(c.str("objective"));
  pc.steps = c.count("steps");
  pc.batch = c.count("batch");
  pc.lr = c.real("lr");
  pc.temperature = c.real("temperature");
  pc.seed = c.u64("seed");
  pc.validate();

  std::optional<model::Checkpoint> init;
  if (c.has("init")) init = model::load_checkpoint(c.str("init"));
  const dataio::Vocabulary vocab = init ? init->vocab : corpus_vocabulary(corpus.pairs);
  model::EncoderParams params =
      init ? std::move(init->params) : model::init_params(model_config(c, vocab.size()));

  std::vector<double> losses;
  params = pretrain(std::move(params), vocab, corpus.pairs, pc, &losses);
  write_run_config(out, c);
  model::save_checkpoint(out / "model.ckpt", params, vocab);
  json m = loss_summary(losses);
  m["objective"] = objectives_name(pc.objectives);
  write_json_file(out / "metrics.json", m);
  return kExitOk;
}

model::EncoderParams train_from(const RunConfig& c, const model::Checkpoint& init,
                                const std::vector<synthgen::BilingualExample>& data,
                                const TrainConfig& tc, json* summary) {
  std::vector<StepLog> log;
  auto params = train(init.params.clone(), init.vocab, data, tc, &log);
  if (summary) {
    std::vector<double> losses;
    for (const auto& l : log) losses.push_back(l.loss);
    *summary = loss_summary(losses);
  }
  (void)c;
  return params;
}

int run_train(const RunConfig& c) {
  const fs::path out = c.str("out");
  const auto data = synthgen::read_bilingual(c.str("data"));
  const auto init = model::load_checkpoint(c.str("init"));
  const TrainConfig tc = train_config(c);
  json summary;
  const auto params = train_from(c, init, data, tc, &summary);
  write_run_config(out, c);
  model::save_checkpoint(out / "model.ckpt", params, init.vocab);
  write_json_file(out / "metrics.json", summary);
  return kExitOk;
}

int run_eval(const RunConfig& c) {
  const std::string task = c.str("task");
  const auto gold = read_any_examples(c.str("gold"));
  const double threshold = c.real("threshold");
  const bool with_model = c.has("model");
  if (with_model == c.has("preds")) throw UsageError("eval needs exactly one of --model or --preds");

  eval::EvalReport r;
  std::optional<model::Checkpoint> ck;
  if (with_model) ck = model::load_checkpoint(c.str("model"));
  if (task == "fgted" || task == "wordqe") {
    const auto preds = with_model ? predict_examples(*ck, gold, threshold)
                                  : dataio::read_predictions(c.str("preds"), threshold);
    if (task == "fgted") {
      r.fgted = eval::score_fgted(gold, preds);
    } else {
      r.wordqe = eval::score_wordqe(gold, preds);
    }
  } else if (task == "ced") {
    if (!with_model) throw UsageError("--task ced scores sentence variants and needs --model");
    const auto pairs = ced_score_pairs(*ck, gold);
    if (pairs.empty()) throw DataError("no addition examples to build critical-error pairs from");
    r.tau = eval::kendall_tau_like(pairs);
    r.ced_pairs = pairs.size();
  } else {
    throw UsageError("--task expects fgted, wordqe or ced");
  }

  const auto style = c.str("style") == "machine" ? eval::ReportStyle::kMachine
                                                 : eval::ReportStyle::kHuman;
  const std::string format = c.str("format");
  if (format == "json") {
    std::cout << eval::report_json(r, style).dump(2) << '\n';
  } else if (format == "tsv") {
    std::cout << eval::report_tsv(r, style);
  } else {
    throw UsageError("--format expects json or tsv");
  }
  if (c.has("out")) {
    write_run_config(c.str("out"), c);
    write_json_file(fs::path(c.str("out")) / "metrics.json",
                    eval::report_json(r, eval::ReportStyle::kMachine));
  }
  return kExitOk;
}

int run_ablate(const RunConfig& c) {
  const fs::path out = c.str("out");
  const auto ck = model::load_checkpoint(c.str("model"));
  const auto data = read_any_examples(c.str("data"));
  const auto r = eval::ablation_run(ck.params, ck.vocab, data, c.count("buckets"));
  write_run_config(out, c);
  json h;
  h["buckets"] = r.histogram.proportions.size();
  h["proportions"] = r.histogram.proportions;
  h["counts"] = r.histogram.counts;
  write_json_file(out / "histogram.json", h);
  json m;
  m["words"] = r.probs.size();
  m["top_bucket"] = r.histogram.proportions.back();
  m["bottom_bucket"] = r.histogram.proportions.front();
  write_json_file(out / "metrics.json", m);
  return kExitOk;
}

int run_sweep(const RunConfig& c) {
  const fs::path out = c.str("out");
  const auto data = synthgen::read_bilingual(c.str("data"));
  const auto gold = read_any_examples(c.str("gold"));
  const auto init = model::load_checkpoint(c.str("init"));
  const double threshold = c.real("threshold");
  json rows = json::array();
  for (double alpha : c.reals("values")) {
    TrainConfig tc = train_config(c);
    tc.slr = true;
    tc.alpha = alpha;
    const model::Checkpoint trained{train_from(c, init, data, tc, nullptr), init.vocab};
    json row = eval::report_json(fgted_report(trained, gold, threshold), eval::ReportStyle::kMachine);
    row["alpha"] = alpha;
    rows.push_back(row);
  }
  write_run_config(out, c);
  json m;
  m["rows"] = rows;
  write_json_file(out / "metrics.json", m);
  for (const auto& row : rows) {
    std::cout << row["alpha"].get<double>() << '\t' << row["avg_f1"].get<double>() << '\n';
  }
  return kExitOk;
}

int run_predict(const RunConfig& c) {
  const fs::path out = c.str("out");
  const auto ck = model::load_checkpoint(c.str("model"));
  const auto examples = read_any_examples(c.str("input"));
  const auto preds = predict_examples(ck, examples, c.real("threshold"));
  write_run_config(out, c);
  dataio::write_predictions(out / "predictions.jsonl", preds);
  return kExitOk;
}

Settings model_defaults() {
  return {{"d-model", "64"}, {"layers", "2"},  {"heads", "4"},
          {"d-ff", "128"},   {"dropout", "0.1"}, {"max-positions", "32"}};
}

Settings train_defaults() {
  return {{"slr", "off"},     {"alpha", "0.05"},        {"baseline", "none"},
          {"keep-fraction", "0.1"}, {"steps", "3000"}, {"batch", "16"},
          {"lr-scale", "100"}, {"share-dropout", "off"}, {"gamma", "2"},
          {"lambda", "0.1"},   {"seed", "0"}};
}

std::vector<Command> commands() {
  std::vector<Command> cmds;
  cmds.push_back({"gen-corpus", "Generate the toy cipher parallel corpus",
                  {{"n", "10000"}, {"vocab", "40"}, {"seed", "0"}, {"out", ""}}, run_gen_corpus});
  cmds.push_back({"synth", "Generate synthetic addition/omission examples",
                  {{"corpus", ""},
                   {"filler-model", ""},
                   {"rerank-model", ""},
                   {"beam", "8"},
                   {"topk", "8"},
                   {"max-consecutive", "5"},
                   {"n", "30000"},
                   {"seed", "0"},
                   {"side-policy", "random"},
                   {"filter-threshold", "0"},
                   {"out", ""},
                   {"stats-out", ""}},
                  run_synth});
  Settings pre{{"objective", "mlm"}, {"corpus", ""},  {"steps", "3000"}, {"batch", "16"},
               {"lr", "0.001"},      {"temperature", "0.1"}, {"seed", "0"}, {"init", ""},
               {"out", ""}};
  pre.merge(model_defaults());
  cmds.push_back({"pretrain", "Pretrain a backbone (mlm, tlm, mlm+tlm, mlm+tlm+xlco)", pre, run_pretrain});
  Settings tr = train_defaults();
  tr.merge(Settings{{"data", ""}, {"init", ""}, {"out", ""}});
  cmds.push_back({"train", "Fine-tune a word-level error detector", tr, run_train});
  cmds.push_back({"eval", "Score predictions or a model against gold",
                  {{"task", "fgted"},
                   {"model", ""},
                   {"preds", ""},
                   {"gold", ""},
                   {"format", "json"},
                   {"style", "human"},
                   {"threshold", "0.5"},
                   {"out", ""}},
                  run_eval});
  cmds.push_back({"ablate", "Error-probability histogram with cross-segment attention removed",
                  {{"model", ""}, {"data", ""}, {"buckets", "20"}, {"out", ""}},
                  run_ablate});
  Settings sw = train_defaults();
  sw.merge(Settings{{"values", "0.01,0.05,0.1,0.2"},
                    {"data", ""},
                    {"init", ""},
                    {"gold", ""},
                    {"threshold", "0.5"},
                    {"out", ""}});
  cmds.push_back({"sweep-alpha", "Train and evaluate once per alpha value", sw, run_sweep});
  cmds.push_back({"predict", "Word-level error probabilities for pairs",
                  {{"model", ""}, {"input", ""}, {"threshold", "0.5"}, {"out", ""}},
                  run_predict});
  return cmds;
}

int run(const std::vector<std::string>& argv) {
  CLI::App app{"Fine-grained translation error detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string seed_flag;
  app.add_option("--config", config_path, "key=value file; explicit flags override it");
  auto* seed_opt = app.add_option("--seed", seed_flag, "Global seed (fallback: FGTED_SEED)");

  auto cmds = commands();
  std::vector<std::pair<CLI::App*, std::map<std::string, std::pair<CLI::Option*, std::string>>>> subs;
  subs.reserve(cmds.size());
  for (auto& cmd : cmds) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    subs.emplace_back(sub, std::map<std::string, std::pair<CLI::Option*, std::string>>{});
    auto& bound = subs.back().second;
    for (const auto& [key, def] : cmd.defaults) {
      if (key == "seed") continue;  // global option
      auto& slot = bound[key];
      std::string help = def.empty() ? "" : "default: " + def;
      slot.first = sub->add_option("--" + key, slot.second, help);
    }
  }

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return kExitOk;
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i].first->parsed()) continue;
    Settings given;
    for (const auto& [key, slot] : subs[i].second) {
      if (slot.first->count() > 0) given[key] = slot.second;
    }
    if (seed_opt->count() > 0) {
      if (!cmds[i].defaults.count("seed")) throw UsageError(cmds[i].name + " takes no --seed");
      given["seed"] = seed_flag;
    }
    const Settings file = config_path.empty() ? Settings{} : read_config_file(config_path);
    const RunConfig rc =
        resolve_config(cmds[i].name, cmds[i].defaults, given, file, std::getenv("FGTED_SEED"));
    return cmds[i].run(rc);
  }
  return kExitUsage;
}

}  // namespace

int dispatch(const std::vector<std::string>& argv) {
  try {
    return run(argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

int dispatch(int argc, char** argv) { return dispatch(std::vector<std::string>(argv, argv + argc)); }

}  // namespace fgted::cli
