#include "ckd/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ckd/counterfactual.hpp"
#include "ckd/errors.hpp"
#include "ckd/format.hpp"
#include "ckd/kernels.hpp"
#include "ckd/rng.hpp"

namespace ckd {

void TrainConfig::validate() const {
  if (dim == 0) throw ConfigError("dim must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be nonnegative");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (eval_k == 0) throw ConfigError("k must be >= 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  loss.validate();
}

nlohmann::json TrainConfig::model_hyperparameters() const {
  return {{"dim", dim}, {"lr", lr}, {"batch_size", batch_size}, {"l2", l2}};
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = model_hyperparameters();
  j["lambda_g"] = loss.lambda_g;
  j["lambda_kd"] = loss.lambda_kd;
  j["tau"] = loss.tau;
  j["sd_variant"] = std::string(to_string(loss.sd_variant));
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["k"] = eval_k;
  j["seed"] = seed;
  j["reweight"] = enable_reweight;
  j["generic"] = enable_generic;
  return j;
}

StopDecision early_stop_check(std::span<const double> history, std::size_t patience) {
  StopDecision d;
  if (history.empty()) return d;
  for (std::size_t e = 1; e < history.size(); ++e)
    if (history[e] > history[d.best_epoch]) d.best_epoch = e;
  d.stop = (history.size() - 1) - d.best_epoch >= patience;
  return d;
}

double l2_penalty(const ModelParams& params, const TripleBatch& batch, ModalityMask prefs,
                  double coeff, ModelParams* grads) {
  if (coeff == 0.0) return 0.0;
  const auto& k = kernels::active();
  const std::size_t d = params.dim;
  double total = 0.0;
  auto visit = [&](const Matrix& p, Matrix* g, Index row) {
    const double* v = p.row(row).data();
    total += k.sum_squares(v, d);
    if (g != nullptr) k.axpy(2.0 * coeff, v, g->row(row).data(), d);
  };
  for (const auto& [u, a, b] : batch.triples) {
    visit(params.user_id, grads ? &grads->user_id : nullptr, u);
    visit(params.item_id, grads ? &grads->item_id : nullptr, a);
    visit(params.item_id, grads ? &grads->item_id : nullptr, b);
    for (std::size_t m = 0; m < params.n_modalities(); ++m)
      if (prefs.contains(m)) visit(params.user_pref[m], grads ? &grads->user_pref[m] : nullptr, u);
  }
  return coeff * total;
}

CheckpointMeta checkpoint_meta(std::span<const ModalityFeatures> features,
                               const TrainConfig& config) {
  CheckpointMeta meta;
  for (const auto& f : features) meta.modality_ids.push_back(f.id);
  meta.seed = config.seed;
  meta.hyperparameters = config.model_hyperparameters();
  return meta;
}

std::string trace_csv_header(std::span<const ModalityFeatures> features,
                             std::span<const std::string> channel_labels, bool with_kd) {
  std::string h = "epoch,bpr,l2,total";
  if (with_kd) {
    for (const char* part : {"sd", "gd", "lambda"})
      for (const auto& f : features) h += std::string(",") + part + "/" + f.id;
  }
  for (const auto& c : channel_labels) h += "," + c + "/recall," + c + "/ndcg," + c + "/precision";
  return h;
}

std::string trace_csv_row(const EpochTrace& t, bool with_kd) {
  std::string r = std::to_string(t.epoch) + "," + format_double(t.bpr) + "," +
                  format_double(t.l2) + "," + format_double(t.total);
  if (with_kd) {
    for (const auto* v : {&t.sd, &t.gd, &t.lambda})
      for (double x : *v) r += "," + format_double(x);
  }
  for (const auto& c : t.val)
    r += "," + format_double(c.recall) + "," + format_double(c.ndcg) + "," +
         format_double(c.precision);
  return r;
}

nlohmann::json trace_json(const EpochTrace& t, std::span<const ModalityFeatures> features) {
  nlohmann::json j;
  j["epoch"] = t.epoch;
  j["bpr"] = t.bpr;
  j["l2"] = t.l2;
  j["total"] = t.total;
  if (!t.sd.empty()) {
    for (std::size_t m = 0; m < features.size(); ++m) {
      j["sd"][features[m].id] = t.sd[m];
      j["gd"][features[m].id] = t.gd[m];
      j["lambda"][features[m].id] = t.lambda[m];
    }
  }
  for (const auto& c : t.val)
    j["val"][c.label] = {{"recall", c.recall}, {"ndcg", c.ndcg}, {"precision", c.precision}};
  return j;
}

namespace {

std::ofstream open_sink(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void require_finite(double v, const char* what, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string("non-finite ") + what + " at epoch " +
                          std::to_string(epoch) + ", batch " + std::to_string(batch));
}

struct RunSpec {
  ModalityMask train_mask;              // modalities kept informative in the student forward
  std::span<const ModelParams> teachers;  // empty: no distillation
  std::vector<Channel> channels;        // evaluated every epoch
  std::string selection_channel;        // early stopping / best checkpoint
};

// Teacher margins on one batch, keeping only the teacher's own modality.
std::vector<std::vector<double>> teacher_margins(std::span<const ModelParams> teachers,
                                                 std::span<const ModalityFeatures> features,
                                                 const TripleBatch& batch) {
  std::vector<std::vector<double>> out;
  for (std::size_t m = 0; m < teachers.size(); ++m) {
    const ModalityMask own = ModalityMask::only(m);
    out.push_back(forward_batch(teachers[m], features, batch, own).delta);
  }
  return out;
}

TrainResult run_training(const InteractionData& data, std::span<const ModalityFeatures> features,
                         const RunSpec& spec, const TrainConfig& config,
                         const TrainOutputs& outputs) {
  config.validate();
  const std::size_t n_mod = features.size();
  const bool with_kd = !spec.teachers.empty();
  const LossConfig& lc = config.loss;

  ModelParams params = init_xavier(ModelShape::of(data, features, config.dim),
                                   derive_seed(config.seed, "init"));
  check_compatible(params, features);
  for (const auto& t : spec.teachers) {
    if (!(t.shape() == params.shape()))
      throw ConfigError("teacher shape does not match the student");
  }
  AdamState adam = AdamState::for_params(params);
  ModelParams grads = ModelParams::zeros(params.shape());
  Rng sampler(derive_seed(config.seed, "sampling"));
  Rng generic_sampler(derive_seed(config.seed, "generic"));

  std::vector<std::string> ids;
  for (const auto& f : features) ids.push_back(f.id);
  std::vector<std::string> channel_labels;
  std::size_t selection = spec.channels.size();
  for (std::size_t c = 0; c < spec.channels.size(); ++c) {
    channel_labels.push_back(spec.channels[c].label);
    if (spec.channels[c].label == spec.selection_channel) selection = c;
  }
  if (selection == spec.channels.size()) throw ConfigError("selection channel is not evaluated");

  std::ofstream csv, jsonl, causal;
  if (outputs.trace_csv) {
    csv = open_sink(*outputs.trace_csv);
    csv << trace_csv_header(features, channel_labels, with_kd) << '\n';
  }
  if (outputs.trace_jsonl) jsonl = open_sink(*outputs.trace_jsonl);
  if (outputs.causal_jsonl && with_kd) causal = open_sink(*outputs.causal_jsonl);

  const std::size_t n_train = data.count(Split::train);
  const std::size_t batches = (n_train + config.batch_size - 1) / config.batch_size;
  const CheckpointMeta meta = checkpoint_meta(features, config);
  const ModalityMask all = ModalityMask::all(n_mod);

  TrainResult result;
  result.selection_channel = spec.selection_channel;
  std::vector<double> history;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    EpochTrace trace;
    trace.epoch = epoch;
    if (with_kd) {
      trace.sd.assign(n_mod, 0.0);
      trace.gd.assign(n_mod, 0.0);
      trace.lambda.assign(n_mod, 0.0);
    }
    std::size_t seen = 0;

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t bs = std::min(config.batch_size, n_train - b * config.batch_size);
      const TripleBatch batch = sample_bpr_batch(data, bs, sampler);
      const BatchMargins margins = forward_batch(params, features, batch, spec.train_mask);

      MarginGradient plan(batch.size(), n_mod);
      const LossValue bpr = bpr_loss(margins.delta);
      require_finite(bpr.value, "bpr loss", epoch, b);
      plan.add(spec.train_mask, bpr.grad);
      double total = bpr.value;

      std::optional<TripleBatch> generic_batch;
      std::optional<MarginGradient> generic_plan;
      if (with_kd) {
        const auto teacher_bpr = teacher_margins(spec.teachers, features, batch);
        std::vector<std::vector<double>> teacher_gen;
        std::optional<BatchMargins> student_gen;
        if (config.enable_generic) {
          generic_batch = sample_generic_batch(data, bs, generic_sampler);
          student_gen = forward_batch(params, features, *generic_batch, all);
          teacher_gen = teacher_margins(spec.teachers, features, *generic_batch);
          generic_plan.emplace(bs, n_mod);
        }

        // Counterfactual effects: ablate exactly one modality at a time.
        const std::vector<double> full = margins.delta_for(all);
        std::vector<std::vector<double>> without;
        for (std::size_t m = 0; m < n_mod; ++m)
          without.push_back(margins.delta_for(ModalityMask::all_except(n_mod, m)));
        const CausalReport report = estimate_effects(ids, full, without, teacher_bpr);
        std::vector<double> lambda = report.lambdas();
        if (!config.enable_reweight)
          lambda.assign(n_mod, static_cast<double>(n_mod - 1) / static_cast<double>(n_mod));
        if (causal.is_open()) {
          nlohmann::json rec = report.to_json();
          rec["epoch"] = epoch;
          rec["batch"] = b;
          rec["applied_lambda"] = lambda;
          causal << rec.dump() << '\n';
        }

        std::vector<double> modality_losses(n_mod);
        for (std::size_t m = 0; m < n_mod; ++m) {
          const ModalityMask own = ModalityMask::only(m);
          const std::vector<double> student_m = margins.delta_for(own);
          const LossValue sd = specific_loss(lc, teacher_bpr[m], student_m);
          const double weight = lc.lambda_kd * lambda[m];
          plan.add(own, sd.grad, weight);
          double gd_value = 0.0;
          if (config.enable_generic) {
            const LossValue gd =
                generic_distill(teacher_gen[m], student_gen->delta_for(own), lc.tau);
            generic_plan->add(own, gd.grad, weight * lc.lambda_g);
            gd_value = gd.value;
          }
          require_finite(sd.value + gd_value, "distillation loss", epoch, b);
          modality_losses[m] = modality_loss(sd.value, gd_value, lc.lambda_g);
          trace.sd[m] += sd.value;
          trace.gd[m] += gd_value;
          trace.lambda[m] += lambda[m];
        }
        total = total_loss(bpr.value, modality_losses, lambda, lc.lambda_kd);
      }

      grads = ModelParams::zeros(params.shape());
      const double reg = l2_penalty(params, batch, spec.train_mask, config.l2, &grads);
      total += reg;
      require_finite(total, "total loss", epoch, b);
      backward(params, features, batch, plan, grads);
      if (generic_plan) backward(params, features, *generic_batch, *generic_plan, grads);
      adam_step(params, grads, adam, config.lr);

      trace.bpr += bpr.value;
      trace.l2 += reg;
      trace.total += total;
      seen += bs;
    }

    const double denom = static_cast<double>(std::max<std::size_t>(seen, 1));
    trace.bpr /= denom;
    trace.l2 /= denom;
    trace.total /= denom;
    for (auto& v : trace.sd) v /= denom;
    for (auto& v : trace.gd) v /= denom;
    for (auto& v : trace.lambda) v /= static_cast<double>(std::max<std::size_t>(batches, 1));

    trace.val = evaluate(params, features, data, Split::val, config.eval_k, spec.channels).channels;
    history.push_back(trace.val[selection].recall);
    const StopDecision decision = early_stop_check(history, config.patience);
    if (decision.best_epoch == epoch) {
      result.params = params;
      result.best_epoch = epoch;
      result.best_recall = history.back();
      if (outputs.checkpoint) save_checkpoint(*outputs.checkpoint, params, meta);
    }
    if (csv.is_open()) csv << trace_csv_row(trace, with_kd) << '\n';
    if (jsonl.is_open()) jsonl << trace_json(trace, features).dump() << '\n';
    if (outputs.on_epoch) outputs.on_epoch(trace);
    result.trace.push_back(std::move(trace));
    if (decision.stop) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace

TrainResult train_teacher(const InteractionData& data, std::span<const ModalityFeatures> features,
                          std::size_t modality, const TrainConfig& config,
                          const TrainOutputs& outputs) {
  if (modality >= features.size())
    throw ConfigError("teacher modality index " + std::to_string(modality) + " out of range");
  RunSpec spec;
  spec.train_mask = ModalityMask::only(modality);
  spec.channels = {{features[modality].id, ModalityMask::only(modality)}};
  spec.selection_channel = features[modality].id;
  return run_training(data, features, spec, config, outputs);
}

TrainResult train_backbone(const InteractionData& data,
                           std::span<const ModalityFeatures> features, const TrainConfig& config,
                           const TrainOutputs& outputs) {
  RunSpec spec;
  spec.train_mask = ModalityMask::all(features.size());
  spec.channels = default_channels(features);
  spec.selection_channel = "full";
  return run_training(data, features, spec, config, outputs);
}

TrainResult train_student(const InteractionData& data, std::span<const ModalityFeatures> features,
                          std::span<const ModelParams> teachers, const TrainConfig& config,
                          const TrainOutputs& outputs) {
  if (features.size() < 2) throw ConfigError("student training needs at least two modalities");
  if (teachers.size() != features.size())
    throw ConfigError("missing teacher for modality " +
                      (teachers.size() < features.size() ? features[teachers.size()].id
                                                         : std::string("<extra>")));
  RunSpec spec;
  spec.train_mask = ModalityMask::all(features.size());
  spec.teachers = teachers;
  spec.channels = default_channels(features);
  spec.selection_channel = "full";
  return run_training(data, features, spec, config, outputs);
}

}  // namespace ckd
