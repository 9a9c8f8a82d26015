#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Per-token hidden states, one column per token (h x T).
using TokenStates = Matrix;

struct AffineLayer {
  Matrix weight;  // h x h
  Vector bias;    // h
};

std::vector<std::string_view> tokenize(std::string_view text);

// Mean over token columns; zero tokens pool to the zero vector.
Vector mean_pool(const TokenStates& states);

// A stack of per-token affine+tanh layers over hashed token embeddings.
// Each layer's sentence vector is the mean of its token outputs.
class LayeredEncoder {
 public:
  static constexpr int kMinHiddenDim = 2;
  static constexpr int kMinLayerCount = 2;

  // Deterministic toy encoder. Throws invalid_configuration when
  // hidden_dim < 2 or layer_count < 2.
  static LayeredEncoder build_toy(int hidden_dim, int layer_count, std::uint64_t seed);

  // Restores an encoder from explicit weights (e.g. after welding).
  LayeredEncoder(int hidden_dim, std::uint64_t seed, std::vector<AffineLayer> layers);

  int hidden_dim() const noexcept { return hidden_dim_; }
  int layer_count() const noexcept { return static_cast<int>(layers_.size()); }
  std::uint64_t seed() const noexcept { return seed_; }

  const AffineLayer& layer(int index) const { return layers_.at(static_cast<std::size_t>(index)); }
  AffineLayer& mutable_layer(int index) { return layers_.at(static_cast<std::size_t>(index)); }
  std::span<const AffineLayer> layers() const noexcept { return layers_; }

  Vector token_embedding(std::string_view token) const;
  TokenStates embed_tokens(std::string_view text) const;
  TokenStates apply_layer(int index, const TokenStates& input) const;

  // Pooled sentence vector of every layer, in order.
  std::vector<Vector> forward(std::string_view text) const;

 private:
  int hidden_dim_;
  std::uint64_t seed_;
  std::vector<AffineLayer> layers_;
};

}  // namespace cl
