#pragma once
// Synthetic implicit-feedback datasets whose modalities carry a controllable
// share of the ground-truth preference signal.

#include <cstdint>
#include <string>
#include <vector>

#include "ckd/data.hpp"

namespace ckd {

struct SynthModality {
  std::string id;
  double signal_fraction = 1.0;  // in [0, 1]
  std::size_t dim = 32;
};

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 300;
  std::size_t latent_dim = 16;
  std::vector<SynthModality> modalities = {{"visual", 0.2, 32}, {"textual", 0.9, 32}};
  double noise_scale = 1.0;
  std::size_t interactions_per_user = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  InteractionData data;
  std::vector<ModalityFeatures> features;
};

// Draws unit-norm item latents and gaussian user latents; each user interacts
// with its top `interactions_per_user` items by latent dot product. Modality m
// features are signal_fraction_m * A_m v_i + noise_scale * N(0, 1) with a
// random gaussian map A_m. Deterministic in `seed`.
SynthDataset synth_generate(const SynthConfig& config);

}  // namespace ckd
