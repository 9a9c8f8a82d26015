#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/encoder.hpp"

namespace cl {

struct Concept {
  std::string id;
  std::string tau;  // textual representation fed to the prefix
  Vector c_hat;     // unit-norm latent embedding
};

enum class ConceptSource { kManual, kOntologySearch };

const char* concept_source_name(ConceptSource source) noexcept;
ConceptSource parse_concept_source(const std::string& name);

// Ordered concepts; position i is coordinate i of the conceptual space.
class ConceptSet {
 public:
  ConceptSet() = default;
  ConceptSet(std::vector<Concept> concepts, ConceptSource source);

  std::size_t size() const noexcept { return concepts_.size(); }
  bool empty() const noexcept { return concepts_.empty(); }
  const Concept& operator[](std::size_t i) const { return concepts_.at(i); }
  const std::vector<Concept>& concepts() const noexcept { return concepts_; }
  ConceptSource source() const noexcept { return source_; }

 private:
  std::vector<Concept> concepts_;
  ConceptSource source_ = ConceptSource::kManual;
};

// Multiplicative factors per concept id. Absent ids mean factor 1.
class InterventionSpec {
 public:
  InterventionSpec() = default;

  // Throws invalid_argument for negative or non-finite factors.
  void set(const std::string& concept_id, double factor);
  double factor(const std::string& concept_id) const;
  bool empty() const noexcept { return factors_.empty(); }
  const std::map<std::string, double>& factors() const noexcept { return factors_; }

 private:
  std::map<std::string, double> factors_;
};

struct ConceptualVector {
  Vector values;                // c_hat_i . l
  double norm_of_source = 0.0;  // ||l|| at projection time
};

struct ScoredConcept {
  std::string id;
  double score;  // cosine similarity
};

// Relative singular-value cutoff used when none is given.
inline constexpr double kDefaultPinvTolerance = 1e-10;

struct PseudoInverse {
  Matrix matrix;
  std::size_t rank = 0;
  double condition_number = 0.0;  // sigma_max / sigma_min over min(n, h) values
};

// Moore-Penrose pseudo-inverse via SVD, dropping singular values below
// relative_cutoff * sigma_max.
PseudoInverse pseudo_inverse(const Matrix& m, double relative_cutoff);

// Non-trainable projection (M_C, rows are c_hat_i) plus its pseudo-inverse.
class ConceptLayer {
 public:
  // Throws degenerate_layer when M_C has rank 0, degenerate_concept when a
  // row is not unit norm.
  static ConceptLayer build(const ConceptSet& concepts, int slice_index,
                            double pinv_tolerance = kDefaultPinvTolerance);

  // Restores a serialized layer verbatim; no recomputation.
  static ConceptLayer restore(std::vector<std::string> ids, std::vector<std::string> taus,
                              ConceptSource source, int slice_index, double pinv_tolerance,
                              Matrix projection, Matrix pseudo_inverse);

  const Matrix& projection() const noexcept { return projection_; }
  const Matrix& pseudo_inverse() const noexcept { return pinv_; }
  int slice_index() const noexcept { return slice_index_; }
  double pinv_tolerance() const noexcept { return pinv_tolerance_; }
  ConceptSource source() const noexcept { return source_; }
  std::size_t size() const noexcept { return ids_.size(); }
  int hidden_dim() const noexcept { return static_cast<int>(projection_.cols()); }
  std::size_t rank() const noexcept { return rank_; }
  double condition_number() const noexcept { return condition_number_; }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<std::string>& taus() const noexcept { return taus_; }
  std::optional<std::size_t> index_of(const std::string& id) const;

  // Per-concept factor vector; throws unknown_concept for ids not in the layer.
  Vector resolve(const InterventionSpec& spec) const;

  // Projection, optional scaling, reconstruction for every token column.
  TokenStates apply(const TokenStates& states, const Vector* factors = nullptr) const;

 private:
  ConceptLayer() = default;

  std::vector<std::string> ids_;
  std::vector<std::string> taus_;
  std::map<std::string, std::size_t> index_;
  ConceptSource source_ = ConceptSource::kManual;
  int slice_index_ = 0;
  double pinv_tolerance_ = kDefaultPinvTolerance;
  Matrix projection_;
  Matrix pinv_;
  std::size_t rank_ = 0;
  double condition_number_ = 0.0;
};

ConceptualVector project(const ConceptLayer& layer, const Vector& latent);

// Cosine scores values / norm_of_source; throws uninterpretable_input on a
// zero-norm source.
Vector cosine_scores(const ConceptualVector& cv);

// Top-k concepts by cosine score, descending, ties by concept order.
std::vector<ScoredConcept> interpret(const ConceptLayer& layer, const ConceptualVector& cv,
                                     std::size_t k);

ConceptualVector intervene(const ConceptLayer& layer, const ConceptualVector& cv,
                           const InterventionSpec& spec);

Vector reconstruct(const ConceptLayer& layer, const ConceptualVector& cv);

}  // namespace cl
