#include "core/concept_layer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "core/error.hpp"

namespace cl {

namespace {

constexpr double kUnitNormTolerance = 1e-9;

}  // namespace

const char* concept_source_name(ConceptSource source) noexcept {
  return source == ConceptSource::kOntologySearch ? "ontology-search" : "manual";
}

ConceptSource parse_concept_source(const std::string& name) {
  if (name == "manual") return ConceptSource::kManual;
  if (name == "ontology-search") return ConceptSource::kOntologySearch;
  fail(ErrorCode::kParse, "unknown concept source '" + name + "'");
}

ConceptSet::ConceptSet(std::vector<Concept> concepts, ConceptSource source)
    : concepts_(std::move(concepts)), source_(source) {
  std::set<std::string> seen;
  for (const auto& c : concepts_) {
    if (!seen.insert(c.id).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate concept id '" + c.id + "'");
    }
  }
}

void InterventionSpec::set(const std::string& concept_id, double factor) {
  if (!std::isfinite(factor) || factor < 0.0) {
    fail(ErrorCode::kInvalidArgument,
         "intervention factor for '" + concept_id + "' must be finite and >= 0");
  }
  factors_[concept_id] = factor;
}

double InterventionSpec::factor(const std::string& concept_id) const {
  const auto it = factors_.find(concept_id);
  return it == factors_.end() ? 1.0 : it->second;
}

PseudoInverse pseudo_inverse(const Matrix& m, double relative_cutoff) {
  PseudoInverse out;
  out.matrix = Matrix::Zero(m.cols(), m.rows());
  if (m.size() == 0) return out;
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
  const double sigma_min = sigma.size() > 0 ? sigma(sigma.size() - 1) : 0.0;
  out.condition_number =
      sigma_min > 0.0 ? sigma_max / sigma_min : std::numeric_limits<double>::infinity();
  if (!(sigma_max > 0.0)) return out;
  const double cutoff = relative_cutoff * sigma_max;
  Vector inv_sigma = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff) {
      inv_sigma(i) = 1.0 / sigma(i);
      ++out.rank;
    }
  }
  out.matrix = svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
  return out;
}

ConceptLayer ConceptLayer::build(const ConceptSet& concepts, int slice_index,
                                 double pinv_tolerance) {
  if (concepts.empty()) fail(ErrorCode::kDegenerateLayer, "concept set is empty");
  if (slice_index < 1) fail(ErrorCode::kSliceIndex, "concept layer slice index must be >= 1");
  if (!(pinv_tolerance >= 0.0)) fail(ErrorCode::kInvalidArgument, "pinv tolerance must be >= 0");

  const auto h = concepts[0].c_hat.size();
  ConceptLayer layer;
  layer.source_ = concepts.source();
  layer.slice_index_ = slice_index;
  layer.pinv_tolerance_ = pinv_tolerance;
  layer.projection_.resize(static_cast<Eigen::Index>(concepts.size()), h);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const Concept& c = concepts[i];
    if (c.c_hat.size() != h) fail(ErrorCode::kShape, "concept '" + c.id + "' has wrong dimension");
    if (std::abs(c.c_hat.norm() - 1.0) > kUnitNormTolerance) {
      fail(ErrorCode::kDegenerateConcept, "concept '" + c.id + "' is not unit norm");
    }
    layer.projection_.row(static_cast<Eigen::Index>(i)) = c.c_hat.transpose();
    layer.ids_.push_back(c.id);
    layer.taus_.push_back(c.tau);
    layer.index_[c.id] = i;
  }
  PseudoInverse pinv = cl::pseudo_inverse(layer.projection_, pinv_tolerance);
  if (pinv.rank == 0) fail(ErrorCode::kDegenerateLayer, "concept matrix has rank 0");
  layer.pinv_ = std::move(pinv.matrix);
  layer.rank_ = pinv.rank;
  layer.condition_number_ = pinv.condition_number;
  return layer;
}

ConceptLayer ConceptLayer::restore(std::vector<std::string> ids, std::vector<std::string> taus,
                                   ConceptSource source, int slice_index, double pinv_tolerance,
                                   Matrix projection, Matrix pseudo_inverse) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (ids.empty() || taus.size() != ids.size()) {
    fail(ErrorCode::kShape, "concept layer metadata is inconsistent");
  }
  if (projection.rows() != n || pseudo_inverse.cols() != n ||
      pseudo_inverse.rows() != projection.cols()) {
    fail(ErrorCode::kShape, "concept layer matrices do not match concept count");
  }
  ConceptLayer layer;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!layer.index_.emplace(ids[i], i).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate concept id '" + ids[i] + "'");
    }
  }
  layer.ids_ = std::move(ids);
  layer.taus_ = std::move(taus);
  layer.source_ = source;
  layer.slice_index_ = slice_index;
  layer.pinv_tolerance_ = pinv_tolerance;
  layer.projection_ = std::move(projection);
  layer.pinv_ = std::move(pseudo_inverse);
  // Rank and conditioning are diagnostics only; recomputing them does not
  // touch the stored matrices.
  const PseudoInverse diag = cl::pseudo_inverse(layer.projection_, pinv_tolerance);
  layer.rank_ = diag.rank;
  layer.condition_number_ = diag.condition_number;
  return layer;
}

std::optional<std::size_t> ConceptLayer::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vector ConceptLayer::resolve(const InterventionSpec& spec) const {
  Vector factors = Vector::Ones(static_cast<Eigen::Index>(size()));
  for (const auto& [id, factor] : spec.factors()) {
    const auto idx = index_of(id);
    if (!idx) fail(ErrorCode::kUnknownConcept, "unknown concept id '" + id + "'");
    factors(static_cast<Eigen::Index>(*idx)) = factor;
  }
  return factors;
}

TokenStates ConceptLayer::apply(const TokenStates& states, const Vector* factors) const {
  if (states.rows() != projection_.cols()) {
    fail(ErrorCode::kShape, "token states do not match concept layer dimension");
  }
  Matrix conceptual = projection_ * states;
  if (factors != nullptr) {
    if (factors->size() != conceptual.rows()) fail(ErrorCode::kShape, "factor vector size mismatch");
    for (Eigen::Index r = 0; r < conceptual.rows(); ++r) conceptual.row(r) *= (*factors)(r);
  }
  return pinv_ * conceptual;
}

ConceptualVector project(const ConceptLayer& layer, const Vector& latent) {
  if (latent.size() != layer.hidden_dim()) {
    fail(ErrorCode::kShape, "latent has dimension " + std::to_string(latent.size()) +
                                ", concept layer expects " + std::to_string(layer.hidden_dim()));
  }
  return ConceptualVector{layer.projection() * latent, latent.norm()};
}

Vector cosine_scores(const ConceptualVector& cv) {
  if (!(cv.norm_of_source > 0.0)) {
    fail(ErrorCode::kUninterpretableInput, "latent has zero norm; cosine scores are undefined");
  }
  return cv.values / cv.norm_of_source;
}

std::vector<ScoredConcept> interpret(const ConceptLayer& layer, const ConceptualVector& cv,
                                     std::size_t k) {
  if (static_cast<std::size_t>(cv.values.size()) != layer.size()) {
    fail(ErrorCode::kShape, "conceptual vector does not match concept layer");
  }
  if (k < 1 || k > layer.size()) {
    fail(ErrorCode::kInvalidArgument, "k must be in [1, " + std::to_string(layer.size()) + "]");
  }
  const Vector scores = cosine_scores(cv);
  std::vector<std::size_t> order(layer.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  std::vector<ScoredConcept> top;
  top.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    top.push_back({layer.ids()[order[i]], scores(static_cast<Eigen::Index>(order[i]))});
  }
  return top;
}

ConceptualVector intervene(const ConceptLayer& layer, const ConceptualVector& cv,
                           const InterventionSpec& spec) {
  if (static_cast<std::size_t>(cv.values.size()) != layer.size()) {
    fail(ErrorCode::kShape, "conceptual vector does not match concept layer");
  }
  const Vector factors = layer.resolve(spec);
  ConceptualVector out = cv;
  for (Eigen::Index i = 0; i < out.values.size(); ++i) out.values(i) *= factors(i);
  return out;
}

Vector reconstruct(const ConceptLayer& layer, const ConceptualVector& cv) {
  if (static_cast<std::size_t>(cv.values.size()) != layer.size()) {
    fail(ErrorCode::kShape, "conceptual vector does not match concept layer");
  }
  return layer.pseudo_inverse() * cv.values;
}

}  // namespace cl
