#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "core/encoder.hpp"

namespace cl {

class ModelSlice;

// Directed "type-of" graph: an edge (parent, child) means child is a type of
// parent. Successor order is edge insertion order.
class OntologyGraph {
 public:
  // Adds the node if missing; an empty tau keeps any existing text and
  // defaults to the id.
  void add_concept(const std::string& id, const std::string& tau = {});
  // Throws invalid_argument on self-loops; duplicate edges are ignored.
  void add_edge(const std::string& parent, const std::string& child);

  bool contains(const std::string& id) const { return tau_.count(id) != 0; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  // Throws unknown_concept.
  const std::vector<std::string>& successors(const std::string& id) const;
  const std::string& tau(const std::string& id) const;
  // Nodes without parents, in insertion order.
  std::vector<std::string> roots() const;
  std::size_t edge_count() const noexcept { return edges_; }

 private:
  std::vector<std::string> nodes_;
  std::map<std::string, std::string> tau_;
  std::map<std::string, std::vector<std::string>> succ_;
  std::set<std::string> has_parent_;
  std::size_t edges_ = 0;
};

// Texts plus their cached prefix latents, one-to-one.
class ContextCorpus {
 public:
  ContextCorpus(std::vector<std::string> texts, std::vector<Vector> latents);
  static ContextCorpus encode(const ModelSlice& slice, std::vector<std::string> texts);

  std::size_t size() const noexcept { return latents_.size(); }
  bool empty() const noexcept { return latents_.empty(); }
  const std::vector<std::string>& texts() const noexcept { return texts_; }
  const std::vector<Vector>& latents() const noexcept { return latents_; }

 private:
  std::vector<std::string> texts_;
  std::vector<Vector> latents_;
};

// Linear schedule thr_k = initial - k * step with no floor.
class ThresholdScheduler {
 public:
  ThresholdScheduler(double initial, double step);
  double next();
  double step() const noexcept { return step_; }

 private:
  double initial_;
  double step_;
  long calls_ = 0;
};

// Population variance of c_hat . latent over the corpus. Throws
// invalid_corpus when the corpus is empty.
double variance(const ContextCorpus& corpus, const Vector& c_hat);

double variance_gain(const ContextCorpus& corpus, const Vector& parent, const Vector& child);

using ConceptEmbedder = std::function<Vector(const std::string& id)>;

// Memoizes per-concept embeddings and corpus variances.
class VarianceOracle {
 public:
  VarianceOracle(const ContextCorpus& corpus, ConceptEmbedder embedder);

  double variance_of(const std::string& id);
  double gain(const std::string& parent, const std::string& child);
  // Smallest gain computed so far, if any.
  std::optional<double> min_gain() const noexcept { return min_gain_; }

 private:
  const ContextCorpus& corpus_;
  ConceptEmbedder embedder_;
  std::map<std::string, double> variances_;
  std::optional<double> min_gain_;
};

// Successors of `concept_id` with gain strictly above `thr` that are not in
// `selected`, in successor order.
std::vector<std::string> eligible_successors(VarianceOracle& oracle, const OntologyGraph& graph,
                                             const std::string& concept_id, double thr,
                                             const std::set<std::string>& selected);

// Mean gain over the eligible successors; nullopt when there are none.
std::optional<double> avg_gain(VarianceOracle& oracle, const OntologyGraph& graph,
                               const std::string& concept_id, double thr,
                               const std::set<std::string>& selected);

struct Expansion {
  int round = 0;
  double threshold = 0.0;
  std::string concept_id;
  double avg = 0.0;
  std::vector<std::string> added;
};

struct SearchResult {
  std::vector<std::string> concepts;     // insertion order, trimmed
  std::vector<double> thresholds;        // one per outer round
  std::vector<Expansion> expansions;
  std::vector<std::string> trimmed;      // removed by the final trim, latest first
};

// Variance-guided best-first search. Throws exhausted when a round below
// (min observed gain - step) adds nothing, unknown_concept for initial
// concepts outside the graph.
SearchResult conceptual_search(VarianceOracle& oracle, const OntologyGraph& graph,
                               const std::vector<std::string>& initial,
                               ThresholdScheduler& scheduler, std::size_t target_size);

}  // namespace cl
