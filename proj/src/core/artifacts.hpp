#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "core/concept_layer.hpp"
#include "core/evaluation.hpp"
#include "core/model.hpp"
#include "core/ontology.hpp"
#include "core/search_report.hpp"
#include "core/welding.hpp"

namespace cl {

// Every artifact is a text manifest plus a "<manifest>.bin" sidecar of
// little-endian row-major floats. Matrices are stored as f64 so that a
// reload reproduces them bit-exactly.

void save_concept_layer(const std::filesystem::path& path, const ConceptLayer& layer,
                        const std::string& run_manifest = {});
ConceptLayer load_concept_layer(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const Model& model,
                const std::string& run_manifest = {});
Model load_model(const std::filesystem::path& path);

void save_head(const std::filesystem::path& path, const ClassificationHead& head,
               const std::vector<std::string>& class_names = {},
               const std::string& run_manifest = {});
struct LoadedHead {
  ClassificationHead head;
  std::vector<std::string> class_names;
};
LoadedHead load_head(const std::filesystem::path& path);

struct EncoderConfig {
  int hidden_dim = 16;
  int layer_count = 4;
  std::uint64_t seed = 0;
};
// key=value lines: hidden_dim, layer_count, seed.
EncoderConfig load_encoder_config(const std::filesystem::path& path);

// key=value lines for every WeldConfig scalar; corpus is not read here.
WeldConfig load_weld_config(const std::filesystem::path& path);

// "epoch<TAB>loss" lines followed by "initial_loss=..." and "final_loss=...".
std::string format_weld_report(const WeldReport& report);
WeldReport parse_weld_report(const std::string& text);

// parent<TAB>child lines; '#' starts a comment.
OntologyGraph load_ontology(const std::filesystem::path& edges,
                            const std::filesystem::path& concepts = {});
// id<TAB>tau lines (tau defaults to id).
std::vector<std::pair<std::string, std::string>> load_concepts(const std::filesystem::path& path);
// One text per line; blank lines skipped.
std::vector<std::string> load_corpus(const std::filesystem::path& path);

struct LabeledTexts {
  std::vector<std::string> texts;
  std::vector<int> labels;
};
// label<TAB>text lines.
LabeledTexts load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const LabeledTexts& data);

// index<TAB>pred<TAB>label lines.
std::string format_predictions(const std::vector<int>& predictions, const std::vector<int>& labels);

}  // namespace cl
