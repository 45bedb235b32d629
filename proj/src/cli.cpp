#include "lpr/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "lpr/checkpoint.hpp"
#include "lpr/diagnostics.hpp"
#include "lpr/errors.hpp"
#include "lpr/rescale.hpp"
#include "lpr/vocab.hpp"

namespace lpr::cli {
namespace fs = std::filesystem;
namespace {

constexpr const char* kResolvedConfig = "resolved_config.json";

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw InputError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

struct DataDir {
  AnswerVocabulary vocab;
  TypeCountTable counts;
};

DataDir load_data_dir(const fs::path& dir) {
  DataDir d;
  d.vocab = vocab_from_json(read_json(dir / "vocab.json"));
  d.counts = counts_from_json(read_json(dir / "counts.json"));
  if (d.counts.num_answers() != d.vocab.size()) {
    throw InputError("counts.json does not match vocab.json");
  }
  return d;
}

Dataset load_split(const fs::path& dir, const std::string& split, const DataDir& d) {
  if (split != "train" && split != "test") throw InputError("split must be train or test");
  return read_jsonl(dir / (split + ".jsonl"), d.counts.num_types(), d.vocab.size());
}

// Shared state for the global flags.
struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve(const Globals& g) {
  RunConfig rc = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) {
    rc.data.seed = *g.seed;
    rc.train.seed = *g.seed;
  }
  return rc;
}

int cmd_gen_data(const Globals& g) {
  RunConfig rc = resolve(g);
  if (!g.out.empty()) rc.data_dir = g.out;
  rc.data.validate();
  SyntheticData data = generate(rc.data);
  const TypeCountTable counts = count_answers(data.train.typed_labels(), data.types, data.vocab.size());

  ensure_dir(rc.data_dir);
  write_jsonl(rc.data_dir / "train.jsonl", data.train);
  write_jsonl(rc.data_dir / "test.jsonl", data.test);
  write_json(rc.data_dir / "vocab.json", to_json(data.vocab));
  write_json(rc.data_dir / "counts.json", to_json(data.vocab, counts));
  write_json(rc.data_dir / kResolvedConfig, to_json(rc));
  std::cout << "wrote " << data.train.size() << " train / " << data.test.size()
            << " test instances to " << rc.data_dir.string() << '\n';
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir) {
  RunConfig rc = resolve(g);
  if (!data_dir.empty()) rc.data_dir = data_dir;
  if (!g.out.empty()) rc.checkpoint = g.out;
  rc.train.validate();

  const DataDir d = load_data_dir(rc.data_dir);
  const Dataset train_set = load_split(rc.data_dir, "train", d);
  std::optional<WeightTable> weights;
  if (rc.train.use_rescale) weights = build_weight_table(d.counts);

  TrainResult result = train(train_set, rc.train, weights ? &*weights : nullptr, d.counts);

  const fs::path out_dir = rc.checkpoint.parent_path();
  ensure_dir(out_dir);
  Checkpoint ckpt{result.params, d.vocab.answers(), d.counts.types(), nlohmann::json(rc.train)};
  save_checkpoint(rc.checkpoint, ckpt);
  auto trace_out = open_out(out_dir / "trace.csv");
  write_trace_csv(trace_out, result.trace);
  write_json(out_dir / kResolvedConfig, to_json(rc));
  std::cout << "trained " << result.trace.rows.size() << " iterations ("
            << result.trace.mask_epochs << " mask epochs); final loss "
            << (result.trace.rows.empty() ? 0.0 : result.trace.rows.back().loss_total) << '\n';
  return kOk;
}

Checkpoint load_matching_checkpoint(const fs::path& path, const DataDir& d) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.answers != d.vocab.answers()) {
    throw InputError("checkpoint vocabulary does not match the data directory");
  }
  if (ckpt.types != d.counts.types()) {
    throw InputError("checkpoint question types do not match the data directory");
  }
  return ckpt;
}

int cmd_eval(const Globals& g, const std::string& ckpt_path, const std::string& data_dir,
             const std::string& split) {
  RunConfig rc = resolve(g);
  if (!data_dir.empty()) rc.data_dir = data_dir;
  if (!ckpt_path.empty()) rc.checkpoint = ckpt_path;
  if (!g.out.empty()) rc.report_dir = g.out;

  const DataDir d = load_data_dir(rc.data_dir);
  const Checkpoint ckpt = load_matching_checkpoint(rc.checkpoint, d);
  const Dataset ds = load_split(rc.data_dir, split, d);
  const Evaluation ev = evaluate(ds, ckpt.params);
  const auto labels = hard_labels(ds);
  const StatsReport pred_stats = prediction_stats(ds, ev.predictions, d.counts);

  nlohmann::ordered_json metrics;
  metrics["split"] = split;
  metrics["instances"] = ds.size();
  metrics["overall_acc"] = vqa_accuracy(ev.predictions, ds);
  metrics["kappa"] = cohens_kappa(ev.predictions, labels);
  metrics["out_of_type_rate"] = pred_stats.out_of_type_rate;
  nlohmann::ordered_json per_type = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < d.counts.num_types(); ++j) {
    std::vector<std::size_t> preds;
    std::vector<std::vector<int>> votes;
    for (std::size_t n = 0; n < ds.size(); ++n) {
      if (ds.instances[n].type_id != j) continue;
      preds.push_back(ev.predictions[n]);
      votes.push_back(ds.instances[n].label.counts);
    }
    nlohmann::ordered_json row;
    row["type"] = d.counts.types()[j];
    row["instances"] = preds.size();
    row["acc"] = preds.empty() ? 0.0 : vqa_accuracy(preds, votes);
    row["out_of_type_rate"] = pred_stats.per_type[j].out_of_type_rate;
    per_type.push_back(row);
  }
  metrics["per_type"] = per_type;

  ensure_dir(rc.report_dir);
  auto out = open_out(rc.report_dir / "metrics.json");
  out << metrics.dump(2) << '\n';
  write_json(rc.report_dir / kResolvedConfig, to_json(rc));
  std::cout << "acc " << metrics["overall_acc"].get<double>() << " kappa "
            << metrics["kappa"].get<double>() << '\n';
  return kOk;
}

int cmd_diagnose(const Globals& g, const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& report_dir, const std::string& trace_path) {
  RunConfig rc = resolve(g);
  if (!data_dir.empty()) rc.data_dir = data_dir;
  if (!ckpt_path.empty()) rc.checkpoint = ckpt_path;
  if (!report_dir.empty()) rc.report_dir = report_dir;
  else if (!g.out.empty()) rc.report_dir = g.out;

  const DataDir d = load_data_dir(rc.data_dir);
  const Checkpoint ckpt = load_matching_checkpoint(rc.checkpoint, d);
  const Dataset train_set = load_split(rc.data_dir, "train", d);
  LossKind kind = LossKind::soft_ce;
  FocalParams focal_params;
  if (ckpt.config.is_object()) {
    TrainConfig tc = ckpt.config.get<TrainConfig>();
    kind = tc.loss_kind;
    focal_params = tc.focal;
  }

  ensure_dir(rc.report_dir);
  nlohmann::ordered_json summary;
  summary["loss_kind"] = to_string(kind);
  nlohmann::ordered_json types = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < d.counts.num_types(); ++j) {
    nlohmann::ordered_json row;
    row["type"] = d.counts.types()[j];
    if (d.counts.answer_set(j).size() < 2) {
      row["status"] = "fewer than two in-type answers";
      types.push_back(row);
      continue;
    }
    const LossConfusion conf = loss_confusion(ckpt.params, train_set, j, kind, d.counts, focal_params);
    auto csv = open_out(rc.report_dir / ("confusion_" + d.counts.types()[j] + ".csv"));
    write_confusion_csv(csv, conf, d.vocab);
    row["mispredicted"] = conf.total();
    try {
      const TriangleAsymmetry t = triangle_asymmetry(conf);
      row["status"] = "ok";
      row["upper_mean"] = t.upper_mean;
      row["lower_mean"] = t.lower_mean;
      row["ratio"] = t.ratio;
      row["upper_count"] = t.upper_count;
      row["lower_count"] = t.lower_count;
    } catch (const InputError& e) {
      row["status"] = e.what();
    }
    types.push_back(row);
  }
  summary["loss_confusion"] = types;

  const fs::path trace_file =
      trace_path.empty() ? rc.checkpoint.parent_path() / "trace.csv" : fs::path(trace_path);
  std::ifstream trace_in(trace_file, std::ios::binary);
  if (!trace_in) throw InputError("cannot open trace " + trace_file.string());
  const GradientNormSeries series = gradient_norm_trace(read_trace_csv(trace_in));
  auto norms_out = open_out(rc.report_dir / "grad_norms.csv");
  write_gradient_norm_csv(norms_out, series);

  // mean norm over the first and last tenth of joint-training iterations
  std::vector<std::size_t> joint;
  for (std::size_t k = 0; k < series.phases.size(); ++k) {
    if (series.phases[k] == 2) joint.push_back(k);
  }
  nlohmann::ordered_json norm_summary;
  if (!joint.empty()) {
    const std::size_t tenth = std::max<std::size_t>(1, joint.size() / 10);
    for (std::size_t gi = 0; gi < kNumGroups; ++gi) {
      double early = 0.0, late = 0.0;
      for (std::size_t k = 0; k < tenth; ++k) {
        early += series.norms[gi][joint[k]];
        late += series.norms[gi][joint[joint.size() - tenth + k]];
      }
      norm_summary[std::string(kGroupNames[gi])] = {{"early_mean", early / tenth},
                                                    {"late_mean", late / tenth}};
    }
  }
  summary["grad_norms"] = norm_summary;
  auto summary_out = open_out(rc.report_dir / "summary.json");
  summary_out << summary.dump(2) << '\n';
  write_json(rc.report_dir / kResolvedConfig, to_json(rc));
  std::cout << "wrote diagnostics to " << rc.report_dir.string() << '\n';
  return kOk;
}

int cmd_weights(const Globals& g, const std::string& counts_path) {
  if (counts_path.empty()) throw InputError("--counts is required");
  if (g.out.empty()) throw InputError("--out is required");
  const auto j = read_json(counts_path);
  const TypeCountTable counts = counts_from_json(j);
  const AnswerVocabulary vocab = vocab_from_json(j);
  const fs::path out(g.out);
  ensure_dir(out.parent_path());
  write_weights_csv(out, counts, vocab);
  if (!out.parent_path().empty()) {
    RunConfig rc = resolve(g);
    write_json(out.parent_path() / kResolvedConfig, to_json(rc));
  }
  return kOk;
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  return {{"data", nlohmann::json(c.data)},
          {"train", nlohmann::json(c.train)},
          {"paths",
           {{"data_dir", c.data_dir.string()},
            {"checkpoint", c.checkpoint.string()},
            {"report_dir", c.report_dir.string()}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw InputError("run config must be a JSON object");
    if (j.contains("data")) c.data = j.at("data").get<SyntheticConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.data_dir = p.value("data_dir", c.data_dir.string());
      c.checkpoint = p.value("checkpoint", c.checkpoint.string());
      c.report_dir = p.value("report_dir", c.report_dir.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json(path)); }

int run(const std::vector<std::string>& args) {
  CLI::App app{"Loss re-scaling and answer-mask experiments on synthetic changing-priors data",
               "lpr"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--seed", g.seed, "Seed override for data generation and training");
  app.add_option("--out", g.out, "Output location (directory or file, per subcommand)");

  auto* gen = app.add_subcommand("gen-data", "Generate train/test JSONL, vocab.json, counts.json");
  gen->fallthrough();

  std::string data_dir, ckpt_path, report_dir, trace_path, counts_path, split = "test";
  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint and trace.csv");
  tr->fallthrough();
  tr->add_option("--data", data_dir, "Data directory");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics.json");
  ev->fallthrough();
  ev->add_option("--ckpt", ckpt_path, "Checkpoint file");
  ev->add_option("--data", data_dir, "Data directory");
  ev->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--report", g.out, "Report directory (alias of --out)");

  auto* dg = app.add_subcommand("diagnose", "Loss confusion matrices and gradient-norm traces");
  dg->fallthrough();
  dg->add_option("--ckpt", ckpt_path, "Checkpoint file");
  dg->add_option("--data", data_dir, "Data directory");
  dg->add_option("--report", report_dir, "Report directory");
  dg->add_option("--trace", trace_path, "trace.csv (default: next to the checkpoint)");

  auto* wt = app.add_subcommand("weights", "Dump the re-scaling weight table as CSV");
  wt->fallthrough();
  wt->add_option("--counts", counts_path, "counts.json");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*gen) return cmd_gen_data(g);
    if (*tr) return cmd_train(g, data_dir);
    if (*ev) return cmd_eval(g, ckpt_path, data_dir, split);
    if (*dg) return cmd_diagnose(g, ckpt_path, data_dir, report_dir, trace_path);
    if (*wt) return cmd_weights(g, counts_path);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kInputError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace lpr::cli
