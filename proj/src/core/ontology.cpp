#include "core/ontology.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/model.hpp"

namespace cl {

void OntologyGraph::add_concept(const std::string& id, const std::string& tau) {
  if (id.empty()) fail(ErrorCode::kInvalidArgument, "concept id is empty");
  auto it = tau_.find(id);
  if (it == tau_.end()) {
    nodes_.push_back(id);
    tau_.emplace(id, tau.empty() ? id : tau);
    succ_.emplace(id, std::vector<std::string>{});
  } else if (!tau.empty()) {
    it->second = tau;
  }
}

void OntologyGraph::add_edge(const std::string& parent, const std::string& child) {
  if (parent == child) fail(ErrorCode::kInvalidArgument, "self-loop on concept '" + parent + "'");
  add_concept(parent);
  add_concept(child);
  auto& succ = succ_[parent];
  if (std::find(succ.begin(), succ.end(), child) != succ.end()) return;
  succ.push_back(child);
  has_parent_.insert(child);
  ++edges_;
}

const std::vector<std::string>& OntologyGraph::successors(const std::string& id) const {
  const auto it = succ_.find(id);
  if (it == succ_.end()) fail(ErrorCode::kUnknownConcept, "concept '" + id + "' is not in the ontology");
  return it->second;
}

const std::string& OntologyGraph::tau(const std::string& id) const {
  const auto it = tau_.find(id);
  if (it == tau_.end()) fail(ErrorCode::kUnknownConcept, "concept '" + id + "' is not in the ontology");
  return it->second;
}

std::vector<std::string> OntologyGraph::roots() const {
  std::vector<std::string> out;
  for (const auto& id : nodes_) {
    if (has_parent_.count(id) == 0) out.push_back(id);
  }
  return out;
}

ContextCorpus::ContextCorpus(std::vector<std::string> texts, std::vector<Vector> latents)
    : texts_(std::move(texts)), latents_(std::move(latents)) {
  if (texts_.size() != latents_.size()) {
    fail(ErrorCode::kInvalidCorpus, "corpus texts and latents differ in count");
  }
  for (std::size_t i = 1; i < latents_.size(); ++i) {
    if (latents_[i].size() != latents_[0].size()) {
      fail(ErrorCode::kShape, "corpus latents differ in dimension");
    }
  }
}

ContextCorpus ContextCorpus::encode(const ModelSlice& slice, std::vector<std::string> texts) {
  std::vector<Vector> latents;
  latents.reserve(texts.size());
  for (const auto& t : texts) latents.push_back(slice.encode_prefix(t));
  return ContextCorpus(std::move(texts), std::move(latents));
}

ThresholdScheduler::ThresholdScheduler(double initial, double step)
    : initial_(initial), step_(step) {
  if (!(step > 0.0) || !std::isfinite(step) || !std::isfinite(initial)) {
    fail(ErrorCode::kInvalidConfiguration, "threshold step must be a positive finite number");
  }
}

double ThresholdScheduler::next() {
  return initial_ - static_cast<double>(calls_++) * step_;
}

double variance(const ContextCorpus& corpus, const Vector& c_hat) {
  if (corpus.empty()) fail(ErrorCode::kInvalidCorpus, "context corpus is empty");
  const auto n = static_cast<double>(corpus.size());
  std::vector<double> projections;
  projections.reserve(corpus.size());
  for (const auto& latent : corpus.latents()) {
    if (latent.size() != c_hat.size()) fail(ErrorCode::kShape, "concept and corpus dimensions differ");
    projections.push_back(c_hat.dot(latent));
  }
  double mean = 0.0;
  for (double p : projections) mean += p;
  mean /= n;
  double sq = 0.0;
  for (double p : projections) sq += (p - mean) * (p - mean);
  return sq / n;
}

double variance_gain(const ContextCorpus& corpus, const Vector& parent, const Vector& child) {
  return variance(corpus, child) - variance(corpus, parent);
}

VarianceOracle::VarianceOracle(const ContextCorpus& corpus, ConceptEmbedder embedder)
    : corpus_(corpus), embedder_(std::move(embedder)) {
  if (corpus_.empty()) fail(ErrorCode::kInvalidCorpus, "context corpus is empty");
}

double VarianceOracle::variance_of(const std::string& id) {
  if (auto it = variances_.find(id); it != variances_.end()) return it->second;
  const double v = variance(corpus_, embedder_(id));
  variances_.emplace(id, v);
  return v;
}

double VarianceOracle::gain(const std::string& parent, const std::string& child) {
  const double g = variance_of(child) - variance_of(parent);
  if (!min_gain_ || g < *min_gain_) min_gain_ = g;
  return g;
}

namespace {

struct Scored {
  std::vector<std::string> eligible;
  std::vector<double> gains;
};

Scored score_successors(VarianceOracle& oracle, const OntologyGraph& graph,
                        const std::string& concept_id, double thr,
                        const std::set<std::string>& selected) {
  Scored out;
  for (const auto& s : graph.successors(concept_id)) {
    const double g = oracle.gain(concept_id, s);
    if (g > thr && selected.count(s) == 0) {
      out.eligible.push_back(s);
      out.gains.push_back(g);
    }
  }
  return out;
}

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Max-priority queue on (score desc, id asc) with membership lookup.
class OpenList {
 public:
  struct Entry {
    double score;
    std::string id;
    std::vector<std::string> successors;
  };

  bool empty() const noexcept { return order_.empty(); }
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }

  void push(Entry entry) {
    order_.insert({entry.score, entry.id});
    entries_.emplace(entry.id, std::move(entry));
  }

  Entry pop() {
    const auto top = *order_.begin();
    order_.erase(order_.begin());
    auto node = entries_.extract(top.id);
    return std::move(node.mapped());
  }

 private:
  struct Key {
    double score;
    std::string id;
    bool operator<(const Key& other) const {
      if (score != other.score) return score > other.score;
      return id < other.id;
    }
  };
  std::set<Key> order_;
  std::map<std::string, Entry> entries_;
};

}  // namespace

std::vector<std::string> eligible_successors(VarianceOracle& oracle, const OntologyGraph& graph,
                                             const std::string& concept_id, double thr,
                                             const std::set<std::string>& selected) {
  return score_successors(oracle, graph, concept_id, thr, selected).eligible;
}

std::optional<double> avg_gain(VarianceOracle& oracle, const OntologyGraph& graph,
                               const std::string& concept_id, double thr,
                               const std::set<std::string>& selected) {
  const Scored s = score_successors(oracle, graph, concept_id, thr, selected);
  if (s.eligible.empty()) return std::nullopt;
  return mean_of(s.gains);
}

SearchResult conceptual_search(VarianceOracle& oracle, const OntologyGraph& graph,
                               const std::vector<std::string>& initial,
                               ThresholdScheduler& scheduler, std::size_t target_size) {
  if (initial.empty()) fail(ErrorCode::kInvalidArgument, "initial concept set is empty");
  if (target_size < initial.size()) {
    fail(ErrorCode::kInvalidArgument, "target_size is smaller than the initial concept set");
  }
  SearchResult result;
  std::set<std::string> selected;
  for (const auto& c : initial) {
    if (!graph.contains(c)) fail(ErrorCode::kUnknownConcept, "initial concept '" + c + "' is not in the ontology");
    if (!selected.insert(c).second) fail(ErrorCode::kInvalidArgument, "duplicate initial concept '" + c + "'");
    result.concepts.push_back(c);
  }

  int round = 0;
  while (result.concepts.size() < target_size) {
    const double thr = scheduler.next();
    result.thresholds.push_back(thr);
    OpenList open;
    std::set<std::string> close;

    for (const auto& c : result.concepts) {
      Scored s = score_successors(oracle, graph, c, thr, selected);
      if (s.eligible.empty()) continue;
      open.push({mean_of(s.gains), c, std::move(s.eligible)});
    }

    std::size_t added_this_round = 0;
    while (!open.empty()) {
      OpenList::Entry entry = open.pop();
      Expansion expansion{round, thr, entry.id, entry.score, {}};
      for (const auto& s : entry.successors) {
        // Entries pushed earlier in the round may name concepts selected since.
        if (selected.insert(s).second) {
          result.concepts.push_back(s);
          expansion.added.push_back(s);
        }
      }
      close.insert(entry.id);
      added_this_round += expansion.added.size();
      for (const auto& s : expansion.added) {
        if (close.count(s) != 0 || open.contains(s)) continue;
        Scored scored = score_successors(oracle, graph, s, thr, selected);
        if (scored.eligible.empty()) continue;
        open.push({mean_of(scored.gains), s, std::move(scored.eligible)});
      }
      result.expansions.push_back(std::move(expansion));
    }

    if (added_this_round == 0 && result.concepts.size() < target_size) {
      const auto min_gain = oracle.min_gain();
      if (!min_gain || thr < *min_gain - scheduler.step()) {
        fail(ErrorCode::kExhausted,
             "ontology exhausted: only " + std::to_string(result.concepts.size()) +
                 " concepts reachable, target_size is " + std::to_string(target_size));
      }
    }
    ++round;
  }

  while (result.concepts.size() > target_size) {
    result.trimmed.push_back(result.concepts.back());
    result.concepts.pop_back();
  }
  return result;
}

}  // namespace cl
