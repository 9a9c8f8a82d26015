#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/encoder.hpp"
#include "core/model.hpp"

namespace cl {

struct HeadConfig {
  int hidden_width = 0;  // 0 means 2 * input_dim
  double learning_rate = 1e-2;
  int max_epochs = 400;
  int patience = 5;      // epochs without validation improvement
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct LabeledSet {
  std::vector<Vector> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

// Standardize -> tanh hidden layer -> softmax.
class ClassificationHead {
 public:
  ClassificationHead(Vector input_mean, Vector input_scale, Matrix hidden_weight,
                     Vector hidden_bias, Matrix output_weight, Vector output_bias);

  int input_dim() const noexcept { return static_cast<int>(input_mean_.size()); }
  int hidden_width() const noexcept { return static_cast<int>(hidden_bias_.size()); }
  int class_count() const noexcept { return static_cast<int>(output_bias_.size()); }

  Vector logits(const Vector& x) const;
  Vector probabilities(const Vector& x) const;
  int predict(const Vector& x) const;

  const Vector& input_mean() const noexcept { return input_mean_; }
  const Vector& input_scale() const noexcept { return input_scale_; }
  const Matrix& hidden_weight() const noexcept { return hidden_weight_; }
  const Vector& hidden_bias() const noexcept { return hidden_bias_; }
  const Matrix& output_weight() const noexcept { return output_weight_; }
  const Vector& output_bias() const noexcept { return output_bias_; }

 private:
  friend ClassificationHead train_head(const LabeledSet&, const LabeledSet&, const HeadConfig&);

  Vector input_mean_;
  Vector input_scale_;
  Matrix hidden_weight_;
  Vector hidden_bias_;
  Matrix output_weight_;
  Vector output_bias_;
};

// Adam on cross-entropy with early stopping on validation loss; returns the
// best-validation parameters. Throws degenerate_task for fewer than two
// classes, invalid_split for an empty split.
ClassificationHead train_head(const LabeledSet& train, const LabeledSet& validation,
                              const HeadConfig& config = {});

double accuracy(std::span<const int> predictions, std::span<const int> labels);
// Per-class F1 weighted by true-label support.
double weighted_f1(std::span<const int> predictions, std::span<const int> labels);
// Mean -log p(true class).
double xent_loss(std::span<const Vector> probabilities, std::span<const int> labels);
double agreement(std::span<const int> a, std::span<const int> b);

struct EvalReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double loss = 0.0;
  std::optional<double> agreement;  // vs a reference pipeline, when given

  std::string to_key_value() const;
  std::string to_json() const;
};

struct Predictions {
  std::vector<int> labels;
  std::vector<Vector> probabilities;
};

Predictions predict_all(const ClassificationHead& head, std::span<const Vector> features);

EvalReport evaluate(const ClassificationHead& head, std::span<const Vector> features,
                    std::span<const int> labels,
                    std::optional<std::span<const int>> reference = std::nullopt);

// Applies a head trained on `original` outputs to `conceptualized` outputs.
// Throws shape when the head does not match the model output dimension.
EvalReport backward_compat_eval(const ClassificationHead& head, const Model& original,
                                const Model& conceptualized, std::span<const std::string> texts,
                                std::span<const int> labels);

// Final pooled outputs for every text.
std::vector<Vector> model_outputs(const Model& model, std::span<const std::string> texts,
                                  const InterventionPlan* plan = nullptr);

// Seeded keyword-template topic classification data.
struct SyntheticTaskConfig {
  int classes = 4;
  std::size_t count = 200;
  int min_tokens = 24;
  int max_tokens = 48;
  double topic_probability = 0.8;
  std::uint64_t seed = 0;
};

struct SyntheticTask {
  std::vector<std::string> class_names;
  std::vector<std::string> texts;
  std::vector<int> labels;
};

inline constexpr int kMaxSyntheticClasses = 6;

SyntheticTask generate_synthetic_task(const SyntheticTaskConfig& config);
const std::vector<std::string>& synthetic_keywords(int topic);
const std::vector<std::string>& synthetic_filler();
const std::vector<std::string>& synthetic_topic_names();

}  // namespace cl
