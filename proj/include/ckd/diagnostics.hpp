#pragma once
// Desk-scale reproductions of the modality-imbalance diagnostics:
//  - pilot: joint multimodal training vs. uni-modal training, per-epoch
//    validation Recall@K for every run and ablated channel;
//  - bridge: plain gradient descent on a two-modality toy problem, logging
//    the shared BPR factor 1 / (1 + e^{margin}) and per-modality step sizes.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckd/data.hpp"
#include "ckd/trainer.hpp"

namespace ckd {

struct PilotSeries {
  std::string run;      // "multimodal" or "<modality>-only"
  std::string channel;  // "full" or a modality id
  std::vector<double> recall;
  std::size_t best_epoch = 0;  // the run's selected epoch
  double at_best() const { return recall.at(best_epoch); }
};

struct PilotTrace {
  std::vector<PilotSeries> series;

  const PilotSeries& find(const std::string& run, const std::string& channel) const;
  // Columns: epoch,run,channel,recall
  std::string to_csv() const;
};

// Trains a joint model with no distillation plus one uni-modal teacher per
// modality, all under `config` (lambda_kd is ignored).
PilotTrace run_pilot(const InteractionData& data, std::span<const ModalityFeatures> features,
                     const TrainConfig& config);

struct BridgeConfig {
  std::size_t n_users = 8;
  std::size_t n_items = 16;
  std::size_t feature_dim = 4;
  double strong_scale = 10.0;  // feature scale of modality "A"; "B" has scale 1
  std::size_t steps = 200;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

struct BridgeStep {
  std::size_t step = 0;
  std::vector<double> modality_diff;  // mean S^m over triples
  double margin = 0.0;                // mean total margin
  double bridge = 0.0;                // mean 1 / (1 + e^{margin}) over triples
  std::vector<double> bridge_per_modality;  // triple 0: -dL/dS^m, one entry per modality
  double first_margin = 0.0;          // triple 0 total margin
  double first_bridge = 0.0;          // triple 0 bridge factor
  std::vector<double> update_norm;    // ||lr * sum_t (dL/dS^m_t)(e_i^m - e_j^m)|| per modality
};

struct BridgeTrace {
  std::vector<std::string> modalities;  // {"A", "B"}
  std::vector<bool> active;
  std::vector<BridgeStep> steps;
};

// `active[m] == false` ablates modality m (its S stays 0 and its parameters
// are not updated). Parameters start at zero.
BridgeTrace run_bridge_experiment(const BridgeConfig& config, std::vector<bool> active);

struct BridgeComparison {
  BridgeTrace joint;  // A and B
  BridgeTrace solo;   // B only
};

BridgeComparison run_bridge_comparison(const BridgeConfig& config);

// Columns: step,run,series,value
std::string bridge_csv(const BridgeComparison& comparison);

}  // namespace ckd
