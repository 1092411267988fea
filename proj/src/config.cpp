#include "ckd/config.hpp"

#include <fstream>
#include <set>

#include "ckd/errors.hpp"

namespace ckd {
namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void merge_bridge(BridgeConfig& c, const nlohmann::json& j) {
  reject_unknown(j, {"n_users", "n_items", "feature_dim", "strong_scale", "steps", "lr", "seed"},
                 "bridge");
  take(j, "n_users", c.n_users);
  take(j, "n_items", c.n_items);
  take(j, "feature_dim", c.feature_dim);
  take(j, "strong_scale", c.strong_scale);
  take(j, "steps", c.steps);
  take(j, "lr", c.lr);
  take(j, "seed", c.seed);
}

}  // namespace

void RunConfig::merge_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"dataset", "features", "out_dir", "teachers", "seed", "dim", "lr", "l2",
                  "batch_size", "max_epochs", "patience", "k", "lambda_kd", "lambda_g", "tau",
                  "sd_variant", "generic", "reweight", "channels", "log_causal", "bridge"},
                 "run config");
  if (j.contains("dataset")) dataset = j.at("dataset").get<std::string>();
  if (j.contains("out_dir")) out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("features")) {
    features.clear();
    for (const auto& f : j.at("features")) {
      reject_unknown(f, {"modality", "path"}, "features entry");
      features.push_back({f.at("modality").get<std::string>(), f.at("path").get<std::string>()});
    }
  }
  if (j.contains("teachers")) {
    teachers.clear();
    for (const auto& [m, p] : j.at("teachers").items()) teachers[m] = p.get<std::string>();
  }
  take(j, "seed", train.seed);
  take(j, "dim", train.dim);
  take(j, "lr", train.lr);
  take(j, "l2", train.l2);
  take(j, "batch_size", train.batch_size);
  take(j, "max_epochs", train.max_epochs);
  take(j, "patience", train.patience);
  take(j, "k", train.eval_k);
  take(j, "lambda_kd", train.loss.lambda_kd);
  take(j, "lambda_g", train.loss.lambda_g);
  take(j, "tau", train.loss.tau);
  if (j.contains("sd_variant")) train.loss.sd_variant = parse_sd_variant(j.at("sd_variant").get<std::string>());
  take(j, "generic", train.enable_generic);
  take(j, "reweight", train.enable_reweight);
  take(j, "channels", channels);
  take(j, "log_causal", log_causal);
  if (j.contains("bridge")) merge_bridge(bridge, j.at("bridge"));
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = train.to_json();
  j.erase("reweight");
  j.erase("generic");
  j["reweight"] = train.enable_reweight;
  j["generic"] = train.enable_generic;
  j["dataset"] = dataset.string();
  j["out_dir"] = out_dir.string();
  j["features"] = nlohmann::json::array();
  for (const auto& f : features) j["features"].push_back({{"modality", f.modality}, {"path", f.path.string()}});
  j["teachers"] = nlohmann::json::object();
  for (const auto& [m, p] : teachers) j["teachers"][m] = p.string();
  j["channels"] = channels;
  j["log_causal"] = log_causal;
  j["bridge"] = {{"n_users", bridge.n_users},   {"n_items", bridge.n_items},
                 {"feature_dim", bridge.feature_dim}, {"strong_scale", bridge.strong_scale},
                 {"steps", bridge.steps},       {"lr", bridge.lr},
                 {"seed", bridge.seed}};
  return j;
}

std::filesystem::path RunConfig::teacher_path(const std::string& modality) const {
  const auto it = teachers.find(modality);
  if (it != teachers.end()) return it->second;
  return out_dir / ("teacher_" + modality + ".ckpt");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  c.merge_json(read_json(path));
  return c;
}

void merge_synth_json(SynthConfig& c, const nlohmann::json& j) {
  reject_unknown(j,
                 {"n_users", "n_items", "latent_dim", "modalities", "noise_scale",
                  "interactions_per_user", "seed"},
                 "synth config");
  take(j, "n_users", c.n_users);
  take(j, "n_items", c.n_items);
  take(j, "latent_dim", c.latent_dim);
  take(j, "noise_scale", c.noise_scale);
  take(j, "interactions_per_user", c.interactions_per_user);
  take(j, "seed", c.seed);
  if (j.contains("modalities")) {
    c.modalities.clear();
    for (const auto& m : j.at("modalities")) {
      reject_unknown(m, {"id", "signal_fraction", "dim"}, "synth modality");
      SynthModality s;
      take(m, "id", s.id);
      take(m, "signal_fraction", s.signal_fraction);
      take(m, "dim", s.dim);
      c.modalities.push_back(s);
    }
  }
}

nlohmann::json synth_to_json(const SynthConfig& c) {
  nlohmann::json j{{"n_users", c.n_users},
                   {"n_items", c.n_items},
                   {"latent_dim", c.latent_dim},
                   {"noise_scale", c.noise_scale},
                   {"interactions_per_user", c.interactions_per_user},
                   {"seed", c.seed}};
  j["modalities"] = nlohmann::json::array();
  for (const auto& m : c.modalities)
    j["modalities"].push_back({{"id", m.id}, {"signal_fraction", m.signal_fraction}, {"dim", m.dim}});
  return j;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  SynthConfig c;
  merge_synth_json(c, read_json(path));
  return c;
}

LoadedData load_run_data(const RunConfig& config) {
  if (config.dataset.empty()) throw ConfigError("no dataset directory configured (--dataset)");
  if (config.features.empty()) throw ConfigError("no feature files configured (--feature)");
  LoadedData out;
  out.data = InteractionData::load(config.dataset);
  for (const auto& f : config.features) {
    if (!std::filesystem::exists(f.path))
      throw IoError("feature file for " + f.modality + " not found: " + f.path.string());
    out.features.push_back(load_features(f.path, f.modality, out.data.n_items));
  }
  return out;
}

}  // namespace ckd
