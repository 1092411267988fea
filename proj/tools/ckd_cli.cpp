// ckd: dataset preparation, synthetic data, teacher/student training,
// evaluation and imbalance diagnostics.
//
// Exit codes: 0 ok, 1 usage/config, 2 data, 3 divergence, 4 I/O.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ckd/checkpoint.hpp"
#include "ckd/config.hpp"
#include "ckd/data.hpp"
#include "ckd/diagnostics.hpp"
#include "ckd/errors.hpp"
#include "ckd/eval.hpp"
#include "ckd/synth.hpp"
#include "ckd/trainer.hpp"

namespace fs = std::filesystem;
using namespace ckd;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3, kIo = 4 };

// Flag values; unset options leave the config file / defaults untouched.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> dataset;
  std::vector<std::string> features;  // modality=path
  std::vector<std::string> teachers;  // modality=path
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> dim, batch_size, max_epochs, patience, k;
  std::optional<double> lr, l2, lambda_kd, lambda_g, tau;
  std::optional<std::string> sd_variant;
  bool no_generic = false;
  bool no_reweight = false;
  bool log_causal = false;
  std::optional<std::string> channels;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--dataset", o.dataset, "prepared dataset directory");
  cmd->add_option("--feature", o.features, "modality=path feature file (repeatable, ordered)");
  cmd->add_option("--teacher", o.teachers, "modality=path teacher checkpoint (repeatable)");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--dim", o.dim, "embedding dimension (default 64)");
  cmd->add_option("--batch-size", o.batch_size, "BPR triples per batch (default 1024)");
  cmd->add_option("--max-epochs", o.max_epochs, "epoch cap");
  cmd->add_option("--patience", o.patience, "early-stopping patience (default 10)");
  cmd->add_option("--k", o.k, "cutoff for Recall/NDCG/Precision (default 20)");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--l2", o.l2, "L2 coefficient");
  cmd->add_option("--lambda-kd", o.lambda_kd, "distillation weight");
  cmd->add_option("--lambda-g", o.lambda_g, "generic distillation weight");
  cmd->add_option("--tau", o.tau, "generic distillation temperature (default 0.1)");
  cmd->add_option("--sd-variant", o.sd_variant, "specific distillation loss")
      ->check(CLI::IsMember({"hinge", "kl", "mse"}));
  cmd->add_flag("--no-generic", o.no_generic, "drop the generic distillation loss");
  cmd->add_flag("--no-reweight", o.no_reweight, "uniform modality weights");
  cmd->add_flag("--log-causal", o.log_causal, "write per-batch causal reports");
  cmd->add_option("--channels", o.channels, "comma-separated channels, e.g. full,visual,textual");
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
    throw ConfigError("expected modality=path, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

RunConfig resolve(const Overrides& o) {
  RunConfig c;
  if (o.config) c = load_run_config(*o.config);
  if (o.dataset) c.dataset = *o.dataset;
  if (!o.features.empty()) {
    c.features.clear();
    for (const auto& f : o.features) {
      auto [m, p] = split_assignment(f);
      c.features.push_back({m, p});
    }
  }
  for (const auto& t : o.teachers) {
    auto [m, p] = split_assignment(t);
    c.teachers[m] = p;
  }
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.seed) c.train.seed = *o.seed;
  if (o.dim) c.train.dim = *o.dim;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.max_epochs) c.train.max_epochs = *o.max_epochs;
  if (o.patience) c.train.patience = *o.patience;
  if (o.k) c.train.eval_k = *o.k;
  if (o.lr) c.train.lr = *o.lr;
  if (o.l2) c.train.l2 = *o.l2;
  if (o.lambda_kd) c.train.loss.lambda_kd = *o.lambda_kd;
  if (o.lambda_g) c.train.loss.lambda_g = *o.lambda_g;
  if (o.tau) c.train.loss.tau = *o.tau;
  if (o.sd_variant) c.train.loss.sd_variant = parse_sd_variant(*o.sd_variant);
  if (o.no_generic) c.train.enable_generic = false;
  if (o.no_reweight) c.train.enable_reweight = false;
  if (o.log_causal) c.log_causal = true;
  if (o.channels) c.channels = split_csv(*o.channels);
  c.train.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::json dataset_summary(const InteractionData& d) {
  const std::size_t tr = d.count(Split::train), va = d.count(Split::val), te = d.count(Split::test);
  const std::size_t total = tr + va + te;
  return {{"n_users", d.n_users},
          {"n_items", d.n_items},
          {"n_interactions", total},
          {"train", tr},
          {"val", va},
          {"test", te},
          {"density", static_cast<double>(total) /
                          (static_cast<double>(d.n_users) * static_cast<double>(d.n_items))}};
}

// ---------------------------------------------------------------------------

int cmd_prepare(const std::string& input, const fs::path& out_dir, std::size_t min_core,
                std::uint64_t seed) {
  const auto raw = load_interactions(input);
  const auto filtered = five_core_filter(raw, min_core);
  const InteractionData data = split(filtered, SplitRatios{}, derive_seed(seed, "data"));
  data.save(out_dir);
  nlohmann::json summary = dataset_summary(data);
  summary["min_core"] = min_core;
  summary["raw_interactions"] = raw.size();
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << std::endl;
  return kOk;
}

int cmd_synth(const std::optional<std::string>& config_path, const fs::path& out_dir,
              const std::optional<std::uint64_t>& seed) {
  SynthConfig sc;
  if (config_path) sc = load_synth_config(*config_path);
  if (seed) sc.seed = *seed;
  const SynthDataset ds = synth_generate(sc);
  ds.data.save(out_dir / "data");
  RunConfig run;
  run.dataset = out_dir / "data";
  run.out_dir = out_dir;
  nlohmann::json manifest;
  manifest["synth"] = synth_to_json(sc);
  manifest["summary"] = dataset_summary(ds.data);
  for (const auto& f : ds.features) {
    const fs::path p = out_dir / "features" / (f.id + ".txt");
    fs::create_directories(p.parent_path());
    save_features(p, f.matrix);
    run.features.push_back({f.id, p});
    manifest["features"].push_back({{"modality", f.id}, {"path", p.string()}, {"dim", f.dim()}});
  }
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  nlohmann::json run_json{{"dataset", run.dataset.string()}, {"out_dir", out_dir.string()}};
  run_json["features"] = manifest["features"];
  for (auto& f : run_json["features"]) f.erase("dim");
  write_text(out_dir / "run.json", run_json.dump(2) + "\n");
  std::cout << manifest.dump(2) << std::endl;
  return kOk;
}

TrainOutputs outputs_for(const RunConfig& c, const std::string& stem) {
  TrainOutputs o;
  o.checkpoint = c.out_dir / (stem + ".ckpt");
  o.trace_csv = c.out_dir / (stem + "_trace.csv");
  o.trace_jsonl = c.out_dir / (stem + "_trace.jsonl");
  o.on_epoch = [](const EpochTrace& t) {
    std::cerr << "epoch " << t.epoch << " loss " << t.total;
    for (const auto& ch : t.val) std::cerr << "  " << ch.label << " R@k " << ch.recall;
    std::cerr << '\n';
  };
  return o;
}

nlohmann::json result_summary(const TrainResult& r, const fs::path& ckpt) {
  return {{"best_epoch", r.best_epoch},
          {"best_recall", r.best_recall},
          {"selection_channel", r.selection_channel},
          {"epochs", r.trace.size()},
          {"early_stopped", r.early_stopped},
          {"checkpoint", ckpt.string()}};
}

int cmd_train_teacher(const RunConfig& c, const std::string& modality) {
  const LoadedData ld = load_run_data(c);
  std::size_t m = ld.features.size();
  for (std::size_t k = 0; k < ld.features.size(); ++k)
    if (ld.features[k].id == modality) m = k;
  if (m == ld.features.size()) throw ConfigError("unknown modality '" + modality + "'");
  const std::string stem = "teacher_" + modality;
  const TrainOutputs out = outputs_for(c, stem);
  const TrainResult r = train_teacher(ld.data, ld.features, m, c.train, out);
  const auto summary = result_summary(r, *out.checkpoint);
  write_text(c.out_dir / (stem + "_summary.json"), summary.dump(2) + "\n");
  std::cout << summary.dump(2) << std::endl;
  return kOk;
}

int cmd_train_student(const RunConfig& c) {
  const LoadedData ld = load_run_data(c);
  std::vector<ModelParams> teachers;
  for (const auto& f : ld.features) {
    const fs::path p = c.teacher_path(f.id);
    if (!fs::exists(p))
      throw IoError("missing teacher checkpoint for modality '" + f.id + "': " + p.string());
    Checkpoint ck = load_checkpoint(p);
    teachers.push_back(std::move(ck.params));
  }
  TrainOutputs out = outputs_for(c, "student");
  if (c.log_causal) out.causal_jsonl = c.out_dir / "causal.jsonl";
  const TrainResult r = train_student(ld.data, ld.features, teachers, c.train, out);
  auto summary = result_summary(r, *out.checkpoint);
  summary["config"] = c.train.to_json();
  write_text(c.out_dir / "student_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << std::endl;
  return kOk;
}

int cmd_eval(const RunConfig& c, const fs::path& checkpoint, const std::string& split_name) {
  const LoadedData ld = load_run_data(c);
  if (split_name != "val" && split_name != "test")
    throw ConfigError("--split must be val or test");
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto channels = c.channels.empty() ? default_channels(ld.features)
                                           : parse_channels(c.channels, ld.features);
  const MetricsReport report =
      evaluate(ck.params, ld.features, ld.data, split_name == "val" ? Split::val : Split::test,
               c.train.eval_k, channels);
  nlohmann::json j = report.to_json();
  j["checkpoint"] = checkpoint.string();
  const std::string text = j.dump(2) + "\n";
  write_text(c.out_dir / ("eval_" + split_name + ".json"), text);
  write_text(c.out_dir / ("eval_" + split_name + ".csv"),
             MetricsReport::csv_header() + "\n" + report.csv_rows());
  std::cout << text;
  return kOk;
}

int cmd_pilot(const RunConfig& c) {
  const LoadedData ld = load_run_data(c);
  const PilotTrace trace = run_pilot(ld.data, ld.features, c.train);
  write_text(c.out_dir / "pilot.csv", trace.to_csv());
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : trace.series)
    summary.push_back({{"run", s.run},
                       {"channel", s.channel},
                       {"epochs", s.recall.size()},
                       {"best_epoch", s.best_epoch},
                       {"recall_at_best", s.at_best()}});
  write_text(c.out_dir / "pilot_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << std::endl;
  return kOk;
}

int cmd_bridge(const RunConfig& c) {
  const BridgeComparison cmp = run_bridge_comparison(c.bridge);
  write_text(c.out_dir / "bridge.csv", bridge_csv(cmp));
  const auto& j = cmp.joint.steps.back();
  const auto& s = cmp.solo.steps.back();
  nlohmann::json summary{{"steps", c.bridge.steps},
                         {"joint_bridge", j.bridge},
                         {"solo_bridge", s.bridge},
                         {"joint_update_norm_B", j.update_norm[1]},
                         {"solo_update_norm_B", s.update_norm[1]}};
  std::cout << summary.dump(2) << std::endl;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ckd: counterfactual knowledge distillation for multimodal recommendation"};
  app.require_subcommand(1);

  std::string prepare_input;
  std::string prepare_out = "data";
  std::size_t min_core = 5;
  std::uint64_t prepare_seed = 0;
  auto* prepare = app.add_subcommand("prepare", "k-core filter and split an interaction file");
  prepare->add_option("--input", prepare_input, "user_id<TAB>item_id file")->required();
  prepare->add_option("--out-dir", prepare_out, "output dataset directory");
  prepare->add_option("--min-core", min_core, "minimum interactions per user and item (1 disables)");
  prepare->add_option("--seed", prepare_seed, "split seed");

  std::optional<std::string> synth_config;
  std::string synth_out = "synth";
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
  synth->add_option("--config", synth_config, "synthetic dataset JSON config");
  synth->add_option("--out-dir", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "overrides the config seed");

  Overrides teacher_o, student_o, eval_o, pilot_o, bridge_o;
  std::string teacher_modality;
  auto* teacher = app.add_subcommand("train-teacher", "train a uni-modal teacher");
  add_common(teacher, teacher_o);
  teacher->add_option("--modality", teacher_modality, "modality the teacher keeps")->required();

  auto* student = app.add_subcommand("train-student", "train the distilled multimodal student");
  add_common(student, student_o);

  std::string eval_checkpoint;
  std::string eval_split = "test";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "val or test")->check(CLI::IsMember({"val", "test"}));

  auto* pilot = app.add_subcommand("pilot", "joint vs uni-modal training curves");
  add_common(pilot, pilot_o);
  auto* bridge = app.add_subcommand("bridge", "gradient-bridge update-suppression experiment");
  add_common(bridge, bridge_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare) return cmd_prepare(prepare_input, prepare_out, min_core, prepare_seed);
    if (*synth) return cmd_synth(synth_config, synth_out, synth_seed);
    if (*teacher) return cmd_train_teacher(resolve(teacher_o), teacher_modality);
    if (*student) return cmd_train_student(resolve(student_o));
    if (*eval) return cmd_eval(resolve(eval_o), eval_checkpoint, eval_split);
    if (*pilot) return cmd_pilot(resolve(pilot_o));
    if (*bridge) {
      RunConfig c = resolve(bridge_o);
      if (bridge_o.seed) c.bridge.seed = *bridge_o.seed;
      return cmd_bridge(c);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
