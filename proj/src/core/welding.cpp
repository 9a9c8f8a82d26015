#include "core/welding.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "core/error.hpp"
#include "core/random.hpp"

namespace cl {

namespace {


// Loss for one text; when `grads` is non-null, accumulates scale * dLoss.
double text_loss(const Model& model, std::string_view text, const std::vector<Vector>& original,
                 int first_layer, int train_from, std::vector<AffineLayer>* grads,
                 double scale) {
  const LayeredEncoder& enc = model.encoder();
  const int layer_count = enc.layer_count();
  const double h = static_cast<double>(enc.hidden_dim());

  std::vector<TokenStates> inputs(static_cast<std::size_t>(layer_count));
  std::vector<TokenStates> outputs(static_cast<std::size_t>(layer_count));
  TokenStates x = enc.embed_tokens(text);
  double loss = 0.0;
  for (int i = 0; i < layer_count; ++i) {
    TokenStates in = std::move(x);
    if (i >= 1) {
      if (const ConceptLayer* layer = model.layer_at_slice(i)) in = layer->apply(in);
    }
    x = enc.apply_layer(i, in);
    if (i >= first_layer) {
      const Vector diff = mean_pool(x) - original[static_cast<std::size_t>(i)];
      loss += diff.squaredNorm() / h;
    }
    inputs[static_cast<std::size_t>(i)] = std::move(in);
    outputs[static_cast<std::size_t>(i)] = x;
  }
  if (grads == nullptr) return loss;

  const Eigen::Index tokens = x.cols();
  if (tokens == 0) return loss;
  TokenStates upstream = TokenStates::Zero(enc.hidden_dim(), tokens);
  for (int i = layer_count - 1; i >= train_from; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const TokenStates& out = outputs[idx];
    if (i >= first_layer) {
      const Vector diff = mean_pool(out) - original[idx];
      const Vector per_token = diff * (2.0 / (h * static_cast<double>(tokens)));
      upstream.colwise() += per_token;
    }
    const TokenStates dz = upstream.cwiseProduct((1.0 - out.array().square()).matrix());
    AffineLayer& g = (*grads)[static_cast<std::size_t>(i - train_from)];
    g.weight.noalias() += scale * dz * inputs[idx].transpose();
    g.bias.noalias() += scale * dz.rowwise().sum();
    if (i == train_from) break;
    upstream = enc.layer(i).weight.transpose() * dz;
    if (const ConceptLayer* layer = model.layer_at_slice(i)) {
      upstream = layer->projection().transpose() * (layer->pseudo_inverse().transpose() * upstream);
    }
  }
  return loss;
}

std::vector<AffineLayer> zero_grads(const Model& model, int train_from) {
  std::vector<AffineLayer> grads;
  const int h = model.hidden_dim();
  for (int i = train_from; i < model.layer_count(); ++i) {
    grads.push_back({Matrix::Zero(h, h), Vector::Zero(h)});
  }
  return grads;
}

void require_conceptualized(const Model& model) {
  if (!model.is_conceptualized()) {
    fail(ErrorCode::kInvalidArgument, "model has no concept layer installed");
  }
}

void require_compatible(const LayeredEncoder& original, const Model& model) {
  if (original.layer_count() != model.layer_count() ||
      original.hidden_dim() != model.hidden_dim()) {
    fail(ErrorCode::kShape, "original and conceptualized models do not share layer indexing");
  }
}

template <typename Hash>
void hash_matrix(Hash& hash, const Matrix& m) {
  hash(reinterpret_cast<const unsigned char*>(m.data()),
       static_cast<std::size_t>(m.size()) * sizeof(double));
}

class AdamW {
 public:
  AdamW(const WeldConfig& config, const std::vector<AffineLayer>& shape)
      : config_(config), m_(shape), v_(shape) {
    for (auto& l : m_) {
      l.weight.setZero();
      l.bias.setZero();
    }
    v_ = m_;
  }

  void step(std::vector<AffineLayer*> params, const std::vector<AffineLayer>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      update(params[i]->weight, m_[i].weight, v_[i].weight, grads[i].weight, lr, bc1, bc2);
      update(params[i]->bias, m_[i].bias, v_[i].bias, grads[i].bias, lr, bc1, bc2);
    }
  }

 private:
  template <typename T>
  void update(T& param, T& m, T& v, const T& g, double lr, double bc1, double bc2) const {
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    param *= (1.0 - lr * config_.weight_decay);
    param.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.adam_epsilon);
  }

  const WeldConfig& config_;
  std::vector<AffineLayer> m_;
  std::vector<AffineLayer> v_;
  long t_ = 0;
};

double scheduled_lr(const WeldConfig& config, long step, long total_steps) {
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    return config.learning_rate * static_cast<double>(step + 1) /
           static_cast<double>(config.warmup_steps);
  }
  const long decay_span = std::max<long>(1, total_steps - config.warmup_steps);
  const long remaining = total_steps - step;
  return config.learning_rate * static_cast<double>(std::max<long>(0, remaining)) /
         static_cast<double>(decay_span);
}

}  // namespace

void WeldConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::kInvalidConfiguration, "learning_rate must be > 0");
  }
  if (batch_size < 1) fail(ErrorCode::kInvalidConfiguration, "batch_size must be >= 1");
  if (epochs < 0) fail(ErrorCode::kInvalidConfiguration, "epochs must be >= 0");
  if (warmup_steps < 0) fail(ErrorCode::kInvalidConfiguration, "warmup_steps must be >= 0");
  if (weight_decay < 0.0) fail(ErrorCode::kInvalidConfiguration, "weight_decay must be >= 0");
}

double layer_distance(std::span<const Vector> conceptualized, std::span<const Vector> original,
                      int first_layer) {
  if (conceptualized.size() != original.size()) {
    fail(ErrorCode::kShape, "layer lists differ in length");
  }
  double total = 0.0;
  for (std::size_t i = static_cast<std::size_t>(std::max(first_layer, 0)); i < original.size();
       ++i) {
    if (conceptualized[i].size() != original[i].size() || original[i].size() == 0) {
      fail(ErrorCode::kShape, "layer vectors differ in dimension");
    }
    total += (conceptualized[i] - original[i]).squaredNorm() /
             static_cast<double>(original[i].size());
  }
  return total;
}

double distillation_loss(const LayeredEncoder& original, const Model& conceptualized,
                         std::span<const std::string> batch) {
  if (batch.empty()) fail(ErrorCode::kInvalidBatch, "distillation batch is empty");
  require_conceptualized(conceptualized);
  require_compatible(original, conceptualized);
  const int first = conceptualized.first_slice();
  double total = 0.0;
  for (const auto& text : batch) {
    const auto target = original.forward(text);
    const auto current = conceptualized.forward_layers(text);
    total += layer_distance(current, target, first);
  }
  return total / static_cast<double>(batch.size());
}

double WeldGradient::norm() const {
  double sq = 0.0;
  for (const auto& l : layers) sq += l.weight.squaredNorm() + l.bias.squaredNorm();
  return std::sqrt(sq);
}

WeldGradient distillation_gradient(const LayeredEncoder& original, const Model& conceptualized,
                                   std::span<const std::string> batch) {
  if (batch.empty()) fail(ErrorCode::kInvalidBatch, "distillation batch is empty");
  require_conceptualized(conceptualized);
  require_compatible(original, conceptualized);
  WeldGradient out;
  out.train_from = conceptualized.last_slice();
  out.layers = zero_grads(conceptualized, out.train_from);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const int first = conceptualized.first_slice();
  for (const auto& text : batch) {
    out.loss += scale * text_loss(conceptualized, text, original.forward(text), first,
                                  out.train_from, &out.layers, scale);
  }
  return out;
}

std::uint64_t frozen_fingerprint(const Model& model) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto feed = [&hash](const unsigned char* data, std::size_t size) {
    for (std::size_t i = 0; i < size; ++i) {
      hash ^= data[i];
      hash *= 0x100000001b3ULL;
    }
  };
  const int train_from = model.is_conceptualized() ? model.last_slice() : model.layer_count();
  for (int i = 0; i < train_from; ++i) {
    hash_matrix(feed, model.encoder().layer(i).weight);
    hash_matrix(feed, model.encoder().layer(i).bias);
  }
  for (const auto& layer : model.concept_layers()) {
    hash_matrix(feed, layer.projection());
    hash_matrix(feed, layer.pseudo_inverse());
  }
  return hash;
}

WeldReport weld(const LayeredEncoder& original, Model& conceptualized, const WeldConfig& config) {
  config.validate();
  if (config.corpus.empty()) fail(ErrorCode::kInvalidBatch, "welding corpus is empty");
  require_conceptualized(conceptualized);
  require_compatible(original, conceptualized);

  const std::uint64_t frozen_before = frozen_fingerprint(conceptualized);
  const int first = conceptualized.first_slice();
  const int train_from = conceptualized.last_slice();

  std::vector<std::vector<Vector>> targets;
  targets.reserve(config.corpus.size());
  for (const auto& text : config.corpus) targets.push_back(original.forward(text));

  auto corpus_loss = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < config.corpus.size(); ++i) {
      total += text_loss(conceptualized, config.corpus[i], targets[i], first, train_from,
                         nullptr, 0.0);
    }
    return total / static_cast<double>(config.corpus.size());
  };

  WeldReport report;
  report.initial_loss = corpus_loss();
  report.final_loss = report.initial_loss;
  if (!std::isfinite(report.initial_loss)) fail(ErrorCode::kDivergence, "initial loss is not finite");
  if (config.epochs == 0) return report;

  std::vector<AffineLayer*> params;
  for (int i = train_from; i < conceptualized.layer_count(); ++i) {
    params.push_back(&conceptualized.encoder().mutable_layer(i));
  }
  AdamW optimizer(config, zero_grads(conceptualized, train_from));

  const std::size_t n = config.corpus.size();
  const long steps_per_epoch = static_cast<long>((n + config.batch_size - 1) / config.batch_size);
  const long total_steps = steps_per_epoch * config.epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Xoshiro256 rng(config.seed ^ 0x77656c64ULL);

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      auto grads = zero_grads(conceptualized, train_from);
      double batch_loss = 0.0;
      // Fixed summation order: batch members in shuffled order.
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        batch_loss += scale * text_loss(conceptualized, config.corpus[idx], targets[idx], first,
                                        train_from, &grads, scale);
      }
      if (!std::isfinite(batch_loss)) {
        fail(ErrorCode::kDivergence, "distillation loss diverged at step " + std::to_string(step));
      }
      optimizer.step(params, grads, scheduled_lr(config, step, total_steps));
      ++step;
    }
    const double loss = corpus_loss();
    if (!std::isfinite(loss)) {
      fail(ErrorCode::kDivergence, "distillation loss diverged in epoch " + std::to_string(epoch));
    }
    report.epoch_losses.push_back(loss);
  }
  report.final_loss = report.epoch_losses.back();

  if (frozen_fingerprint(conceptualized) != frozen_before) {
    fail(ErrorCode::kFrozenPrefixViolation, "frozen prefix or concept matrices changed during welding");
  }
  return report;
}

}  // namespace cl
