#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core/concept_layer.hpp"
#include "core/encoder.hpp"

namespace cl {

// Interventions keyed by the slice index of the concept layer they target.
using InterventionPlan = std::map<int, InterventionSpec>;

class ModelSlice;

// An encoder with zero or more concept layers installed between its layers.
// A concept layer with slice index k runs on the input of encoder layer k.
class Model {
 public:
  explicit Model(LayeredEncoder encoder);

  const LayeredEncoder& encoder() const noexcept { return encoder_; }
  LayeredEncoder& encoder() noexcept { return encoder_; }
  int hidden_dim() const noexcept { return encoder_.hidden_dim(); }
  int layer_count() const noexcept { return encoder_.layer_count(); }

  // Ascending by slice index.
  std::span<const ConceptLayer> concept_layers() const noexcept { return layers_; }
  const ConceptLayer* layer_at_slice(int slice_index) const;
  bool is_conceptualized() const noexcept { return !layers_.empty(); }
  int first_slice() const;  // throws when no concept layer is installed
  int last_slice() const;

  // Throws slice_ordering unless slice_index is deeper than every installed
  // layer, slice_index when outside [1, layer_count).
  void check_new_slice(int slice_index) const;
  void install(ConceptLayer layer);

  // Runs encoder layers [from, to) on `states`, applying any concept layer
  // whose slice index lies in [max(from, 1), to) just before its encoder layer.
  TokenStates run(TokenStates states, int from, int to,
                  const InterventionPlan* plan = nullptr) const;

  // Pooled output of every encoder layer.
  std::vector<Vector> forward_layers(std::string_view text,
                                     const InterventionPlan* plan = nullptr) const;
  // Pooled output of the last encoder layer.
  Vector forward(std::string_view text, const InterventionPlan* plan = nullptr) const;

  ModelSlice slice_at(int k) const;

 private:
  void validate_plan(const InterventionPlan& plan) const;

  LayeredEncoder encoder_;
  std::vector<ConceptLayer> layers_;
};

// Non-owning view splitting a model into prefix [0, k) and suffix [k, L).
// The referenced model must outlive the slice.
class ModelSlice {
 public:
  ModelSlice(const Model& model, int k);

  int index() const noexcept { return k_; }
  const Model& model() const noexcept { return *model_; }

  TokenStates prefix(std::string_view text) const;
  // Pooled output of layer k-1 (before any concept layer at slice k).
  Vector encode_prefix(std::string_view text) const;
  TokenStates suffix_states(const TokenStates& states,
                            const InterventionPlan* plan = nullptr) const;
  // Pooled final output.
  Vector suffix(const TokenStates& states, const InterventionPlan* plan = nullptr) const;

 private:
  const Model* model_;
  int k_;
};

ModelSlice slice_at(const Model& model, int k);

// Normalized prefix latent of `tau`; throws degenerate_concept on zero norm.
Vector embed_concept(const ModelSlice& slice, std::string_view tau);

// (id, tau) pairs embedded through the slice prefix, then built into a layer
// at the slice index.
ConceptLayer build_concept_layer(const ModelSlice& slice,
                                 const std::vector<std::pair<std::string, std::string>>& concepts,
                                 ConceptSource source = ConceptSource::kManual,
                                 double pinv_tolerance = kDefaultPinvTolerance);

// suffix(reconstruct(intervene(project(prefix(text))))) for a layer that is
// not installed in the slice's model.
Vector conceptualized_forward(const ModelSlice& slice, const ConceptLayer& layer,
                              std::string_view text, const InterventionSpec* spec = nullptr);

// Adds a deeper concept layer whose concepts are embedded through the already
// conceptualized prefix.
Model compose_multilayer(Model model, int new_slice_index,
                         const std::vector<std::pair<std::string, std::string>>& new_concepts,
                         ConceptSource source = ConceptSource::kManual);

}  // namespace cl
