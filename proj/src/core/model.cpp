#include "core/model.hpp"

#include <algorithm>
#include <string>

#include "core/error.hpp"

namespace cl {

Model::Model(LayeredEncoder encoder) : encoder_(std::move(encoder)) {}

const ConceptLayer* Model::layer_at_slice(int slice_index) const {
  for (const auto& layer : layers_) {
    if (layer.slice_index() == slice_index) return &layer;
  }
  return nullptr;
}

int Model::first_slice() const {
  if (layers_.empty()) fail(ErrorCode::kInvalidArgument, "model has no concept layer");
  return layers_.front().slice_index();
}

int Model::last_slice() const {
  if (layers_.empty()) fail(ErrorCode::kInvalidArgument, "model has no concept layer");
  return layers_.back().slice_index();
}

void Model::check_new_slice(int slice_index) const {
  if (slice_index < 1 || slice_index >= layer_count()) {
    fail(ErrorCode::kSliceIndex, "slice index " + std::to_string(slice_index) +
                                     " outside [1, " + std::to_string(layer_count()) + ")");
  }
  if (!layers_.empty() && slice_index <= layers_.back().slice_index()) {
    fail(ErrorCode::kSliceOrdering,
         "new concept layer at slice " + std::to_string(slice_index) +
             " must be deeper than existing slice " +
             std::to_string(layers_.back().slice_index()));
  }
}

void Model::install(ConceptLayer layer) {
  check_new_slice(layer.slice_index());
  if (layer.hidden_dim() != hidden_dim()) {
    fail(ErrorCode::kShape, "concept layer dimension " + std::to_string(layer.hidden_dim()) +
                                " does not match encoder hidden_dim " +
                                std::to_string(hidden_dim()));
  }
  layers_.push_back(std::move(layer));
}

void Model::validate_plan(const InterventionPlan& plan) const {
  for (const auto& [slice, spec] : plan) {
    const ConceptLayer* layer = layer_at_slice(slice);
    if (layer == nullptr) {
      fail(ErrorCode::kUnknownConcept,
           "no concept layer at slice " + std::to_string(slice) + " for intervention");
    }
    (void)layer->resolve(spec);
  }
}

TokenStates Model::run(TokenStates states, int from, int to, const InterventionPlan* plan) const {
  if (from < 0 || to > layer_count() || from > to) {
    fail(ErrorCode::kSliceIndex, "layer range out of bounds");
  }
  for (int i = from; i < to; ++i) {
    if (i >= 1) {
      if (const ConceptLayer* layer = layer_at_slice(i)) {
        if (plan != nullptr) {
          if (auto it = plan->find(i); it != plan->end()) {
            const Vector factors = layer->resolve(it->second);
            states = layer->apply(states, &factors);
          } else {
            states = layer->apply(states);
          }
        } else {
          states = layer->apply(states);
        }
      }
    }
    states = encoder_.apply_layer(i, states);
  }
  return states;
}

std::vector<Vector> Model::forward_layers(std::string_view text,
                                          const InterventionPlan* plan) const {
  if (plan != nullptr) validate_plan(*plan);
  std::vector<Vector> pooled;
  pooled.reserve(static_cast<std::size_t>(layer_count()));
  TokenStates x = encoder_.embed_tokens(text);
  for (int i = 0; i < layer_count(); ++i) {
    x = run(std::move(x), i, i + 1, plan);
    pooled.push_back(mean_pool(x));
  }
  return pooled;
}

Vector Model::forward(std::string_view text, const InterventionPlan* plan) const {
  if (plan != nullptr) validate_plan(*plan);
  return mean_pool(run(encoder_.embed_tokens(text), 0, layer_count(), plan));
}

ModelSlice Model::slice_at(int k) const { return ModelSlice(*this, k); }

ModelSlice::ModelSlice(const Model& model, int k) : model_(&model), k_(k) {
  if (k < 1 || k >= model.layer_count()) {
    fail(ErrorCode::kSliceIndex, "slice index " + std::to_string(k) + " outside [1, " +
                                     std::to_string(model.layer_count()) + ")");
  }
}

TokenStates ModelSlice::prefix(std::string_view text) const {
  return model_->run(model_->encoder().embed_tokens(text), 0, k_);
}

Vector ModelSlice::encode_prefix(std::string_view text) const { return mean_pool(prefix(text)); }

TokenStates ModelSlice::suffix_states(const TokenStates& states,
                                      const InterventionPlan* plan) const {
  return model_->run(states, k_, model_->layer_count(), plan);
}

Vector ModelSlice::suffix(const TokenStates& states, const InterventionPlan* plan) const {
  return mean_pool(suffix_states(states, plan));
}

ModelSlice slice_at(const Model& model, int k) { return ModelSlice(model, k); }

Vector embed_concept(const ModelSlice& slice, std::string_view tau) {
  const Vector latent = slice.encode_prefix(tau);
  const double norm = latent.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    fail(ErrorCode::kDegenerateConcept,
         "concept text '" + std::string(tau) + "' has a zero-norm latent");
  }
  return latent / norm;
}

ConceptLayer build_concept_layer(const ModelSlice& slice,
                                 const std::vector<std::pair<std::string, std::string>>& concepts,
                                 ConceptSource source, double pinv_tolerance) {
  std::vector<Concept> embedded;
  embedded.reserve(concepts.size());
  for (const auto& [id, tau] : concepts) {
    try {
      embedded.push_back({id, tau, embed_concept(slice, tau)});
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateConcept) {
        fail(ErrorCode::kDegenerateConcept, "concept '" + id + "': " + e.what());
      }
      throw;
    }
  }
  return ConceptLayer::build(ConceptSet(std::move(embedded), source), slice.index(),
                             pinv_tolerance);
}

Vector conceptualized_forward(const ModelSlice& slice, const ConceptLayer& layer,
                              std::string_view text, const InterventionSpec* spec) {
  TokenStates states = slice.prefix(text);
  if (spec != nullptr) {
    const Vector factors = layer.resolve(*spec);
    states = layer.apply(states, &factors);
  } else {
    states = layer.apply(states);
  }
  return slice.suffix(states);
}

Model compose_multilayer(Model model, int new_slice_index,
                         const std::vector<std::pair<std::string, std::string>>& new_concepts,
                         ConceptSource source) {
  model.check_new_slice(new_slice_index);
  ConceptLayer layer = build_concept_layer(model.slice_at(new_slice_index), new_concepts, source);
  model.install(std::move(layer));
  return model;
}

}  // namespace cl
