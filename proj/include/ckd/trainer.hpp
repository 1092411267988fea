#pragma once
// Teacher and student training loops.
//
// Teachers: a fresh backbone trained under BPR with every modality except one
// ablated. Student: the multimodal backbone trained under
//   L = L_bpr + lambda_kd * sum_m lambda_m (lambda_g * L_gd^m + L_sd^m) + L2
// where lambda_m comes from per-batch counterfactual effect estimates.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckd/backbone.hpp"
#include "ckd/checkpoint.hpp"
#include "ckd/data.hpp"
#include "ckd/eval.hpp"
#include "ckd/losses.hpp"
#include "json.hpp"

namespace ckd {

struct TrainConfig {
  std::size_t dim = 64;
  double lr = 1e-3;
  std::size_t batch_size = 1024;
  double l2 = 1e-4;
  LossConfig loss;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::size_t eval_k = 20;
  std::uint64_t seed = 0;
  bool enable_reweight = true;
  bool enable_generic = true;

  void validate() const;
  // Hyperparameters that determine the trained parameters of a plain
  // backbone run; recorded in checkpoint headers.
  nlohmann::json model_hyperparameters() const;
  nlohmann::json to_json() const;
};

struct EpochTrace {
  std::size_t epoch = 0;
  // Per-triple means over the epoch.
  double bpr = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  std::vector<double> sd;      // per modality (empty without teachers)
  std::vector<double> gd;      // per modality
  std::vector<double> lambda;  // mean lambda_m per modality
  std::vector<ChannelMetrics> val;
};

struct StopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;
};

// Stops when (last index - index of the earliest maximum) >= patience.
StopDecision early_stop_check(std::span<const double> history, std::size_t patience);

// coeff * sum of squared norms of the embeddings a batch touches (x_u, x_a,
// x_b and p_u^m for m in `prefs`), counted once per triple. Adds the gradient
// to `grads` when given.
double l2_penalty(const ModelParams& params, const TripleBatch& batch, ModalityMask prefs,
                  double coeff, ModelParams* grads);

// Optional artifacts written while training.
struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;    // rewritten at every new best
  std::optional<std::filesystem::path> trace_csv;
  std::optional<std::filesystem::path> trace_jsonl;
  std::optional<std::filesystem::path> causal_jsonl;  // one CausalReport per batch
  std::function<void(const EpochTrace&)> on_epoch;
};

struct TrainResult {
  ModelParams params;  // best-validation parameters
  std::vector<EpochTrace> trace;
  std::size_t best_epoch = 0;
  double best_recall = 0.0;
  std::string selection_channel;
  bool early_stopped = false;
};

TrainResult train_teacher(const InteractionData& data, std::span<const ModalityFeatures> features,
                          std::size_t modality, const TrainConfig& config,
                          const TrainOutputs& outputs = {});

// Joint multimodal BPR training with no distillation.
TrainResult train_backbone(const InteractionData& data,
                           std::span<const ModalityFeatures> features, const TrainConfig& config,
                           const TrainOutputs& outputs = {});

// `teachers[m]` is the frozen teacher of modality m.
TrainResult train_student(const InteractionData& data, std::span<const ModalityFeatures> features,
                          std::span<const ModelParams> teachers, const TrainConfig& config,
                          const TrainOutputs& outputs = {});

CheckpointMeta checkpoint_meta(std::span<const ModalityFeatures> features,
                               const TrainConfig& config);

std::string trace_csv_header(std::span<const ModalityFeatures> features,
                             std::span<const std::string> channel_labels, bool with_kd);
std::string trace_csv_row(const EpochTrace& t, bool with_kd);
nlohmann::json trace_json(const EpochTrace& t, std::span<const ModalityFeatures> features);

}  // namespace ckd
