#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/QR>

namespace fixtures {

std::vector<std::string> random_texts(std::size_t count, std::uint64_t seed) {
  std::vector<std::string> vocab = cl::synthetic_filler();
  for (int t = 0; t < cl::kMaxSyntheticClasses; ++t) {
    const auto& k = cl::synthetic_keywords(t);
    vocab.insert(vocab.end(), k.begin(), k.end());
  }
  cl::Xoshiro256 rng(seed);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = 3 + rng.below(12);
    std::string text;
    for (std::uint64_t j = 0; j < len; ++j) {
      if (j > 0) text += ' ';
      text += vocab[rng.below(vocab.size())];
    }
    texts.push_back(std::move(text));
  }
  return texts;
}

cl::Vector random_unit(int h, cl::Xoshiro256& rng) {
  cl::Vector v(h);
  do {
    for (int i = 0; i < h; ++i) v(i) = rng.uniform(-1.0, 1.0);
  } while (v.norm() < 1e-3);
  return v.normalized();
}

cl::Matrix random_orthonormal(int h, cl::Xoshiro256& rng) {
  cl::Matrix a(h, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < h; ++c) a(r, c) = rng.uniform(-1.0, 1.0);
  Eigen::HouseholderQR<cl::Matrix> qr(a);
  return qr.householderQ() * cl::Matrix::Identity(h, h);
}

cl::ConceptLayer layer_from_rows(const cl::Matrix& rows, int slice) {
  std::vector<cl::Concept> concepts;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const std::string id = "c" + std::to_string(i);
    concepts.push_back({id, id, rows.row(i).transpose()});
  }
  return cl::ConceptLayer::build(cl::ConceptSet(std::move(concepts), cl::ConceptSource::kManual),
                                 slice);
}

cl::ConceptLayer orthonormal_layer(int h, int slice, std::uint64_t seed) {
  cl::Xoshiro256 rng(seed);
  return layer_from_rows(random_orthonormal(h, rng), slice);
}

cl::Matrix random_rank_rows(int n, int h, int rank, cl::Xoshiro256& rng) {
  if (rank < 1 || rank > std::min(n, h)) throw std::invalid_argument("bad rank");
  cl::Matrix basis(rank, h);
  for (int r = 0; r < rank; ++r) basis.row(r) = random_unit(h, rng).transpose();
  cl::Matrix rows(n, h);
  for (int i = 0; i < n; ++i) {
    cl::Vector coeff(rank);
    if (i < rank) {
      coeff = cl::Vector::Unit(rank, i);
    } else {
      do {
        for (int r = 0; r < rank; ++r) coeff(r) = rng.uniform(-1.0, 1.0);
      } while (coeff.norm() < 1e-3);
    }
    cl::Vector row = basis.transpose() * coeff;
    rows.row(i) = row.normalized().transpose();
  }
  return rows;
}

std::vector<std::pair<std::string, std::string>> standard_concepts() {
  std::vector<std::pair<std::string, std::string>> out;
  const auto join = [](auto begin, auto end) {
    std::string s;
    for (auto it = begin; it != end; ++it) s += (s.empty() ? "" : " ") + *it;
    return s;
  };
  for (int t = 0; t < cl::kMaxSyntheticClasses; ++t) {
    const auto& k = cl::synthetic_keywords(t);
    out.emplace_back(cl::synthetic_topic_names()[static_cast<std::size_t>(t)],
                     join(k.begin(), k.end()));
  }
  const auto& f = cl::synthetic_filler();
  const auto half = f.begin() + static_cast<std::ptrdiff_t>(f.size() / 2);
  out.emplace_back("filler_a", join(f.begin(), half));
  out.emplace_back("filler_b", join(half, f.end()));
  return out;
}

DominantConceptFixture dominant_concept_fixture() {
  cl::Model model(cl::LayeredEncoder::build_toy(8, 3, 11));
  const auto concepts = standard_concepts();
  std::vector<std::pair<std::string, std::string>> four(concepts.begin(), concepts.begin() + 4);
  model.install(cl::build_concept_layer(model.slice_at(2), four));
  const cl::ConceptLayer& layer = *model.layer_at_slice(2);

  const std::string text = "the striker scored a late goal as the league season ended";
  const auto cv = cl::project(layer, model.slice_at(2).encode_prefix(text));
  Eigen::Index dominant = 0;
  cl::cosine_scores(cv).maxCoeff(&dominant);
  const std::string dominant_id = layer.ids()[static_cast<std::size_t>(dominant)];

  cl::InterventionSpec zero;
  zero.set(dominant_id, 0.0);
  const cl::InterventionPlan plan{{2, zero}};
  const cl::Vector y1 = model.forward(text);
  const cl::Vector y0 = model.forward(text, &plan);
  const cl::Vector d = y1 - y0;
  if (!(d.squaredNorm() > 0.0)) throw std::logic_error("intervention had no effect");

  // Hidden unit h = tanh(4 d.(y - mid)/|d|^2) is +tanh(2) at y1 and -tanh(2) at y0.
  const int h = model.hidden_dim();
  cl::Matrix w1 = (4.0 / d.squaredNorm()) * d.transpose();
  cl::Matrix w2(2, 1);
  w2 << 4.0, -4.0;
  cl::ClassificationHead head((y1 + y0) / 2.0, cl::Vector::Ones(h), w1, cl::Vector::Zero(1), w2,
                              cl::Vector::Zero(2));
  return {std::move(model), std::move(head), text, dominant_id};
}

oracle::SearchProblem random_search_problem(int nodes, int h, std::uint64_t seed) {
  if (nodes < 2 || nodes > 25) throw std::invalid_argument("fixture ontologies have 2..25 nodes");
  cl::Xoshiro256 rng(seed);
  oracle::SearchProblem p;
  for (int i = 0; i < nodes; ++i) p.nodes.push_back("n" + std::to_string(i));
  for (int i = 1; i < nodes; ++i) {
    const auto parent = rng.below(static_cast<std::uint64_t>(i));
    p.edges.emplace_back(p.nodes[parent], p.nodes[static_cast<std::size_t>(i)]);
  }
  // A few cross edges keep it a DAG (parent index < child index).
  for (int e = 0; e < nodes / 4; ++e) {
    const auto child = 2 + rng.below(static_cast<std::uint64_t>(nodes - 2));
    const auto parent = rng.below(child);
    p.edges.emplace_back(p.nodes[parent], p.nodes[child]);
  }
  for (const auto& n : p.nodes) p.embedding[n] = random_unit(h, rng);
  for (int t = 0; t < 6; ++t) {
    oracle::Vec l(h);
    for (int i = 0; i < h; ++i) l(i) = rng.uniform(-1.0, 1.0);
    p.corpus.push_back(l);
  }
  p.initial = {p.nodes[0]};
  p.thr0 = 0.2;
  p.step = 0.1;
  p.target_size = 2 + rng.below(static_cast<std::uint64_t>(nodes - 1));
  return p;
}

SearchSetup search_setup(const oracle::SearchProblem& problem) {
  cl::OntologyGraph graph;
  for (const auto& n : problem.nodes) graph.add_concept(n);
  for (const auto& [parent, child] : problem.edges) graph.add_edge(parent, child);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < problem.corpus.size(); ++i) texts.push_back("t" + std::to_string(i));
  return {std::move(graph), cl::ContextCorpus(std::move(texts), problem.corpus)};
}

}  // namespace fixtures
