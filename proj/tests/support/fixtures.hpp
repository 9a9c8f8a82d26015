#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/concept_layer.hpp"
#include "core/evaluation.hpp"
#include "core/model.hpp"
#include "core/ontology.hpp"
#include "core/random.hpp"
#include "oracles.hpp"

namespace fixtures {

// Seeded texts over the synthetic vocabulary, 3..14 tokens each.
std::vector<std::string> random_texts(std::size_t count, std::uint64_t seed);

cl::Vector random_unit(int h, cl::Xoshiro256& rng);
cl::Matrix random_orthonormal(int h, cl::Xoshiro256& rng);

// n = h orthonormal concepts at `slice`: a lossless concept layer.
cl::ConceptLayer orthonormal_layer(int h, int slice, std::uint64_t seed);

// Concept layer over the given unit rows, ids "c0", "c1", ...
cl::ConceptLayer layer_from_rows(const cl::Matrix& rows, int slice);

// Rows of rank `rank` (<= min(n, h)) normalized to unit length.
cl::Matrix random_rank_rows(int n, int h, int rank, cl::Xoshiro256& rng);

// Concepts used by the standard welding fixture: one per synthetic topic
// (tau = all topic keywords) plus two halves of the filler vocabulary.
std::vector<std::pair<std::string, std::string>> standard_concepts();

// Model, concept layer at slice 2 and a two-class head whose decision is
// carried by the most active concept coordinate of `text`: with that
// coordinate intact the head predicts class 0, with it zeroed class 1.
struct DominantConceptFixture {
  cl::Model model;
  cl::ClassificationHead head;
  std::string text;
  std::string dominant_id;
};
DominantConceptFixture dominant_concept_fixture();

// Random ontology with `nodes` concepts (<= 25) and unit embeddings in h
// dims, plus a small corpus of latents.
oracle::SearchProblem random_search_problem(int nodes, int h, std::uint64_t seed);

// Graph, oracle-compatible embedder and corpus for a SearchProblem.
struct SearchSetup {
  cl::OntologyGraph graph;
  cl::ContextCorpus corpus;
};
SearchSetup search_setup(const oracle::SearchProblem& problem);

}  // namespace fixtures
