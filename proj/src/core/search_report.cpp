#include "core/search_report.hpp"

#include "json.hpp"

namespace cl {

std::string format_concept_list(const SearchResult& result) {
  std::string out;
  for (const auto& id : result.concepts) out += id + '\n';
  return out;
}

std::string format_search_manifest(const SearchResult& result, const SearchParameters& params,
                                   const std::string& run_manifest) {
  nlohmann::json j;
  j["format"] = "clsearch-v1";
  j["target_size"] = params.target_size;
  j["initial_threshold"] = params.initial_threshold;
  j["threshold_step"] = params.threshold_step;
  j["slice_index"] = params.slice_index;
  j["concepts"] = result.concepts;
  j["thresholds"] = result.thresholds;
  j["trimmed"] = result.trimmed;
  auto& expansions = j["expansions"] = nlohmann::json::array();
  for (const auto& e : result.expansions) {
    expansions.push_back({{"round", e.round},
                          {"threshold", e.threshold},
                          {"concept", e.concept_id},
                          {"avg", e.avg},
                          {"added", e.added}});
  }
  if (!run_manifest.empty()) j["run_manifest"] = run_manifest;
  return j.dump(2) + "\n";
}

}  // namespace cl
