#include "core/encoder.hpp"

#include <cmath>
#include <string>

#include "core/error.hpp"
#include "core/random.hpp"

namespace cl {

namespace {

constexpr std::uint64_t kLayerStream = 0x6c61796572730000ULL;  // "layers"

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string_view> tokenize(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

Vector mean_pool(const TokenStates& states) {
  if (states.cols() == 0) return Vector::Zero(states.rows());
  return states.rowwise().sum() / static_cast<double>(states.cols());
}

LayeredEncoder LayeredEncoder::build_toy(int hidden_dim, int layer_count, std::uint64_t seed) {
  if (hidden_dim < kMinHiddenDim) {
    fail(ErrorCode::kInvalidConfiguration,
         "hidden_dim must be >= 2, got " + std::to_string(hidden_dim));
  }
  if (layer_count < kMinLayerCount) {
    fail(ErrorCode::kInvalidConfiguration,
         "layer_count must be >= 2, got " + std::to_string(layer_count));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::vector<AffineLayer> layers;
  layers.reserve(static_cast<std::size_t>(layer_count));
  for (int l = 0; l < layer_count; ++l) {
    Xoshiro256 rng(seed ^ (kLayerStream + static_cast<std::uint64_t>(l)));
    AffineLayer layer{Matrix(hidden_dim, hidden_dim), Vector(hidden_dim)};
    // Column-major fill order is part of the determinism contract.
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        layer.weight(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
  }
  return LayeredEncoder(hidden_dim, seed, std::move(layers));
}

LayeredEncoder::LayeredEncoder(int hidden_dim, std::uint64_t seed, std::vector<AffineLayer> layers)
    : hidden_dim_(hidden_dim), seed_(seed), layers_(std::move(layers)) {
  if (hidden_dim_ < kMinHiddenDim || static_cast<int>(layers_.size()) < kMinLayerCount) {
    fail(ErrorCode::kInvalidConfiguration, "encoder needs hidden_dim >= 2 and >= 2 layers");
  }
  for (const auto& layer : layers_) {
    if (layer.weight.rows() != hidden_dim_ || layer.weight.cols() != hidden_dim_ ||
        layer.bias.size() != hidden_dim_) {
      fail(ErrorCode::kShape, "encoder layer weights do not match hidden_dim");
    }
  }
}

Vector LayeredEncoder::token_embedding(std::string_view token) const {
  // Unit-variance entries: uniform on [-sqrt(3), sqrt(3)].
  static const double kBound = std::sqrt(3.0);
  Xoshiro256 rng(fnv1a64(token) ^ seed_);
  Vector embedding(hidden_dim_);
  for (Eigen::Index i = 0; i < embedding.size(); ++i) embedding(i) = rng.uniform(-kBound, kBound);
  return embedding;
}

TokenStates LayeredEncoder::embed_tokens(std::string_view text) const {
  const auto tokens = tokenize(text);
  TokenStates states(hidden_dim_, static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    states.col(static_cast<Eigen::Index>(t)) = token_embedding(tokens[t]);
  }
  return states;
}

TokenStates LayeredEncoder::apply_layer(int index, const TokenStates& input) const {
  const AffineLayer& l = layer(index);
  if (input.rows() != hidden_dim_) fail(ErrorCode::kShape, "token states have wrong dimension");
  TokenStates pre = l.weight * input;
  pre.colwise() += l.bias;
  return pre.array().tanh().matrix();
}

std::vector<Vector> LayeredEncoder::forward(std::string_view text) const {
  std::vector<Vector> pooled;
  pooled.reserve(layers_.size());
  TokenStates x = embed_tokens(text);
  for (int i = 0; i < layer_count(); ++i) {
    x = apply_layer(i, x);
    pooled.push_back(mean_pool(x));
  }
  return pooled;
}

}  // namespace cl
