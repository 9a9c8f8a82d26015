#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/encoder.hpp"
#include "core/model.hpp"

namespace cl {

// Desk-scale defaults for the toy encoder.
struct WeldConfig {
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  int epochs = 30;
  int warmup_steps = 50;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::vector<std::string> corpus;

  // Throws invalid_configuration on lr <= 0, batch_size < 1, epochs < 0,
  // warmup_steps < 0.
  void validate() const;
};

struct WeldReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // full-corpus loss after each epoch
  double final_loss = 0.0;
};

// Sum over layers [first_layer, L) of the per-layer mean squared difference
// between pooled vectors.
double layer_distance(std::span<const Vector> conceptualized, std::span<const Vector> original,
                      int first_layer);

// Mean over texts of layer_distance(model, original, first concept slice).
// Throws invalid_batch on an empty batch.
double distillation_loss(const LayeredEncoder& original, const Model& conceptualized,
                         std::span<const std::string> batch);

struct WeldGradient {
  double loss = 0.0;
  int train_from = 0;               // first trainable encoder layer
  std::vector<AffineLayer> layers;  // gradients for layers [train_from, L)

  double norm() const;
};

// Analytic gradient of distillation_loss with respect to the trainable
// suffix: every encoder layer at or after the deepest concept layer.
WeldGradient distillation_gradient(const LayeredEncoder& original, const Model& conceptualized,
                                   std::span<const std::string> batch);

// Fingerprint of everything welding must not touch: encoder layers before
// the deepest slice and every concept layer matrix.
std::uint64_t frozen_fingerprint(const Model& model);

// Feature distillation of the trainable suffix against `original`.
// Throws divergence on a non-finite loss and frozen_prefix_violation when
// the frozen fingerprint changes.
WeldReport weld(const LayeredEncoder& original, Model& conceptualized, const WeldConfig& config);

}  // namespace cl
