#pragma once

#include <string>

#include "core/ontology.hpp"

namespace cl {

struct SearchParameters {
  std::size_t target_size = 0;
  double initial_threshold = 0.0;
  double threshold_step = 0.0;
  int slice_index = 0;
};

// One concept id per line.
std::string format_concept_list(const SearchResult& result);

// JSON manifest: parameters, threshold history, expansions with their AVG.
std::string format_search_manifest(const SearchResult& result, const SearchParameters& params,
                                   const std::string& run_manifest = {});

}  // namespace cl
