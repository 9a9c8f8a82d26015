// Acceptance run: one PASS/FAIL line per headline criterion, then an
// informational seed sweep of the welding fixture. Exit status is nonzero
// when any criterion fails; the sweep never affects it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "core/concept_layer.hpp"
#include "core/error.hpp"
#include "core/evaluation.hpp"
#include "core/model.hpp"
#include "core/ontology.hpp"
#include "core/welding.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(const char* name, double budget_s, const std::function<Outcome()>& criterion) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = criterion();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += fmt(" (over time budget %.0fs)", budget_s);
  }
  if (!o.pass) ++failures;
  std::printf("%s %-28s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

double max_abs(const cl::Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Outcome cosine_semantics() {
  cl::Model model(cl::LayeredEncoder::build_toy(16, 4, 0));
  const auto slice = model.slice_at(2);
  const auto layer = cl::build_concept_layer(slice, fixtures::standard_concepts());
  double worst = 0.0;
  for (const auto& text : fixtures::random_texts(100, 7)) {
    const cl::Vector l = slice.encode_prefix(text);
    const auto scores = cl::interpret(layer, cl::project(layer, l), layer.size());
    for (const auto& s : scores) {
      const cl::Vector c = layer.projection().row(static_cast<Eigen::Index>(*layer.index_of(s.id))).transpose();
      worst = std::max(worst, std::abs(s.score - oracle::cosine(c, l)));
    }
  }
  return {worst <= 1e-6, fmt("max |interpret - direct cosine| = %.2e over 100 texts (tol 1e-6)", worst)};
}

Outcome lossless_identity() {
  cl::Model model(cl::LayeredEncoder::build_toy(16, 4, 0));
  const auto layer = fixtures::orthonormal_layer(16, 2, 5);
  const auto texts = fixtures::random_texts(100, 8);
  double worst = 0.0;
  for (const auto& text : texts) {
    const cl::Vector a = cl::conceptualized_forward(model.slice_at(2), layer, text);
    worst = std::max(worst, (a - model.forward(text)).cwiseAbs().maxCoeff());
  }
  cl::Model conceptualized = model;
  conceptualized.install(layer);
  const double loss = cl::distillation_loss(model.encoder(), conceptualized, texts);
  return {worst <= 1e-6 && loss < 1e-10,
          fmt("max output diff = %.2e (tol 1e-6), distillation loss = %.2e (< 1e-10)", worst, loss)};
}

Outcome pinv_properties() {
  cl::Xoshiro256 rng(2024);
  double mp = 0.0, idem = 0.0, vs_oracle = 0.0;
  int deficient = 0;
  for (int t = 0; t < 50; ++t) {
    const int h = 3 + static_cast<int>(rng.below(10));
    const int n = 1 + static_cast<int>(rng.below(16));
    const int full = std::min(n, h);
    const int rank = (t % 2 == 0) ? full : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(full)));
    if (rank < full) ++deficient;
    const auto layer = fixtures::layer_from_rows(fixtures::random_rank_rows(n, h, rank, rng), 1);
    const cl::Matrix& m = layer.projection();
    const cl::Matrix& p = layer.pseudo_inverse();
    mp = std::max({mp, max_abs(m * p * m - m), max_abs(p * m * p - p)});
    mp = std::max({mp, max_abs((m * p).transpose() - m * p), max_abs((p * m).transpose() - p * m)});
    vs_oracle = std::max(vs_oracle, max_abs(p - oracle::jacobi_pinv(m, 1e-10)));
    for (int k = 0; k < 3; ++k) {
      cl::Vector l(h);
      for (int i = 0; i < h; ++i) l(i) = rng.uniform(-2.0, 2.0);
      const cl::Vector r1 = cl::reconstruct(layer, cl::project(layer, l));
      const cl::Vector r2 = cl::reconstruct(layer, cl::project(layer, r1));
      idem = std::max(idem, (r2 - r1).cwiseAbs().maxCoeff());
    }
  }
  return {mp <= 1e-6 && idem <= 1e-6 && vs_oracle <= 1e-6,
          fmt("50 sets (%d rank-deficient): Moore-Penrose %.2e, idempotence %.2e, vs Jacobi oracle %.2e (tol 1e-6)",
              deficient, mp, idem, vs_oracle)};
}

Outcome gradient_check() {
  const auto enc = cl::LayeredEncoder::build_toy(4, 3, 21);
  cl::Model model(enc);
  cl::Xoshiro256 rng(121);
  model.install(fixtures::layer_from_rows(fixtures::random_rank_rows(2, 4, 2, rng), 1));
  const auto batch = fixtures::random_texts(6, 5);
  const auto grad = cl::distillation_gradient(enc, model, batch);
  std::vector<double*> params;
  std::vector<double> analytic;
  for (int i = grad.train_from; i < model.layer_count(); ++i) {
    auto& layer = model.encoder().mutable_layer(i);
    const auto& g = grad.layers[static_cast<std::size_t>(i - grad.train_from)];
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k) {
      params.push_back(layer.weight.data() + k);
      analytic.push_back(g.weight.data()[k]);
    }
    for (Eigen::Index k = 0; k < layer.bias.size(); ++k) {
      params.push_back(layer.bias.data() + k);
      analytic.push_back(g.bias(k));
    }
  }
  const auto numeric = oracle::central_differences(
      params, [&] { return cl::distillation_loss(enc, model, batch); }, 1e-6);
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    ref += numeric[i] * numeric[i];
  }
  const double rel = std::sqrt(diff / ref);
  return {rel < 1e-4, fmt("%zu parameters, relative error %.2e (< 1e-4)", params.size(), rel)};
}

// The standard welding fixture. Seeds are offsets so the sweep can vary them.
struct WeldOutcome {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double agreement = 0.0;
  double original_accuracy = 0.0;
  double welded_accuracy = 0.0;
  double loss_ratio() const { return final_loss / initial_loss; }
  double drop_points() const { return 100.0 * (original_accuracy - welded_accuracy); }
};

cl::LabeledSet labeled(const cl::Model& model, const cl::SyntheticTask& task, std::size_t stride,
                       bool held_out) {
  cl::LabeledSet set;
  for (std::size_t i = 0; i < task.texts.size(); ++i) {
    if (stride != 0 && ((i % stride == stride - 1) != held_out)) continue;
    set.features.push_back(model.forward(task.texts[i]));
    set.labels.push_back(task.labels[i]);
  }
  return set;
}

WeldOutcome standard_weld(std::uint64_t seed) {
  const cl::Model original(cl::LayeredEncoder::build_toy(16, 4, seed));
  cl::Model welded = original;
  welded.install(cl::build_concept_layer(welded.slice_at(3), fixtures::standard_concepts()));

  cl::SyntheticTaskConfig data;
  data.classes = 4;
  data.count = 200;
  data.seed = 1 + 10 * seed;
  cl::WeldConfig config;
  config.learning_rate = 0.01;
  config.epochs = 30;
  config.batch_size = 8;
  config.warmup_steps = 20;
  config.weight_decay = 0.01;
  config.corpus = cl::generate_synthetic_task(data).texts;
  const auto weld = cl::weld(original.encoder(), welded, config);

  data.count = 600;
  data.seed = 2 + 10 * seed;
  const auto head_task = cl::generate_synthetic_task(data);
  const auto head = cl::train_head(labeled(original, head_task, 5, false),
                                   labeled(original, head_task, 5, true));
  data.seed = 3 + 10 * seed;
  const auto test = cl::generate_synthetic_task(data);

  const auto reference = cl::predict_all(head, cl::model_outputs(original, test.texts)).labels;
  const auto compat = cl::backward_compat_eval(head, original, welded, test.texts, test.labels);
  WeldOutcome out;
  out.initial_loss = weld.initial_loss;
  out.final_loss = weld.final_loss;
  out.agreement = *compat.agreement;
  out.original_accuracy = cl::accuracy(reference, test.labels);
  out.welded_accuracy = compat.accuracy;
  return out;
}

const WeldOutcome& canonical_weld() {
  static const WeldOutcome outcome = standard_weld(0);
  return outcome;
}

Outcome welding_recovers() {
  const auto& w = canonical_weld();
  return {w.loss_ratio() < 0.5 && w.agreement >= 0.90,
          fmt("loss %.4g -> %.4g (ratio %.3f < 0.5), agreement %.3f (>= 0.90)", w.initial_loss,
              w.final_loss, w.loss_ratio(), w.agreement)};
}

Outcome backward_compat() {
  const auto& w = canonical_weld();
  return {w.drop_points() <= 3.0,
          fmt("accuracy original %.3f, welded %.3f, drop %.2f points (<= 3)", w.original_accuracy,
              w.welded_accuracy, w.drop_points())};
}

Outcome search_oracle() {
  int matched = 0, exhausted = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int nodes = std::min(25, 8 + 2 * static_cast<int>(seed));
    const auto problem = fixtures::random_search_problem(nodes, 5, 300 + seed);
    const auto trace = oracle::conceptual_search(problem);
    auto setup = fixtures::search_setup(problem);
    cl::VarianceOracle vo(setup.corpus, [&](const std::string& id) { return problem.embedding.at(id); });
    cl::ThresholdScheduler sched(problem.thr0, problem.step);
    try {
      const auto r = cl::conceptual_search(vo, setup.graph, problem.initial, sched, problem.target_size);
      std::vector<std::string> untrimmed = r.concepts;
      for (auto it = r.trimmed.rbegin(); it != r.trimmed.rend(); ++it) untrimmed.push_back(*it);
      if (!trace.exhausted && r.concepts == trace.concepts && untrimmed == trace.untrimmed &&
          r.thresholds == trace.thresholds) {
        ++matched;
      }
    } catch (const cl::Error& e) {
      if (trace.exhausted && e.code() == cl::ErrorCode::kExhausted) {
        ++matched;
        ++exhausted;
      }
    }
  }
  return {matched == 10,
          fmt("%d/10 ontologies (8..25 nodes) identical to the oracle trace, %d by exhaustion",
              matched, exhausted)};
}

double cosine_error(const cl::Model& model, const cl::ConceptLayer& layer, const std::string& text) {
  const cl::Vector l = model.slice_at(layer.slice_index()).encode_prefix(text);
  const cl::Vector scores = cl::cosine_scores(cl::project(layer, l));
  double worst = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    worst = std::max(worst, std::abs(scores(i) - oracle::cosine(layer.projection().row(i).transpose(), l)));
  }
  return worst;
}

Outcome multilayer_constraint() {
  const cl::Model original(cl::LayeredEncoder::build_toy(16, 4, 0));
  const auto concepts = fixtures::standard_concepts();
  cl::Model model = original;
  model.install(cl::build_concept_layer(model.slice_at(1), concepts));
  const cl::Matrix m1 = model.concept_layers()[0].projection();
  const cl::Matrix p1 = model.concept_layers()[0].pseudo_inverse();

  cl::SyntheticTaskConfig data;
  data.count = 200;
  data.seed = 1;
  cl::WeldConfig config;
  config.learning_rate = 0.01;
  config.warmup_steps = 20;
  config.epochs = 10;
  config.corpus = cl::generate_synthetic_task(data).texts;
  cl::weld(original.encoder(), model, config);

  bool ordering_error = false;
  try {
    cl::compose_multilayer(model, 1, concepts);
  } catch (const cl::Error& e) {
    ordering_error = e.code() == cl::ErrorCode::kSliceOrdering;
  }
  model = cl::compose_multilayer(model, 3, concepts);
  cl::weld(original.encoder(), model, config);

  const auto& first = model.concept_layers()[0];
  const auto& second = model.concept_layers()[1];
  const bool untouched = first.projection() == m1 && first.pseudo_inverse() == p1;
  double worst_first = 0.0, worst_second = 0.0;
  for (const auto& text : fixtures::random_texts(50, 3)) {
    worst_first = std::max(worst_first, cosine_error(model, first, text));
    worst_second = std::max(worst_second, cosine_error(model, second, text));
  }
  return {ordering_error && untouched && worst_first <= 1e-6 && worst_second <= 1e-6,
          fmt("slice_ordering on shallower: %s, first CL matrices bit-identical: %s, cosine err %.1e / %.1e",
              ordering_error ? "yes" : "no", untouched ? "yes" : "no", worst_first, worst_second)};
}

Outcome intervention_flip() {
  const auto fx = fixtures::dominant_concept_fixture();
  const int slice = fx.model.first_slice();
  const cl::Vector base = fx.model.forward(fx.text);
  cl::InterventionSpec zero, ones;
  zero.set(fx.dominant_id, 0.0);
  for (const auto& id : fx.model.layer_at_slice(slice)->ids()) ones.set(id, 1.0);
  const cl::InterventionPlan zero_plan{{slice, zero}}, ones_plan{{slice, ones}};
  const int before = fx.head.predict(base);
  const int after = fx.head.predict(fx.model.forward(fx.text, &zero_plan));
  const bool noop = fx.model.forward(fx.text, &ones_plan) == base;
  return {before != after && noop,
          fmt("label %d -> %d with '%s' zeroed, all-ones output bit-identical: %s", before, after,
              fx.dominant_id.c_str(), noop ? "yes" : "no")};
}

void seed_sweep() {
  std::printf("\ninfo: welding fixture across encoder/data seeds (not pass/fail)\n");
  std::printf("info: %4s %10s %10s %12s\n", "seed", "loss_ratio", "agreement", "drop_points");
  int ratio_ok = 0, agree_ok = 0, drop_ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto w = seed == 0 ? canonical_weld() : standard_weld(seed);
    ratio_ok += w.loss_ratio() < 0.5;
    agree_ok += w.agreement >= 0.90;
    drop_ok += w.drop_points() <= 3.0;
    std::printf("info: %4llu %10.3f %10.3f %12.2f\n", static_cast<unsigned long long>(seed),
                w.loss_ratio(), w.agreement, w.drop_points());
  }
  std::printf("info: ratio < 0.5 in %d/10, agreement >= 0.90 in %d/10, drop <= 3 in %d/10\n",
              ratio_ok, agree_ok, drop_ok);
}

}  // namespace

int main() {
  report("cosine_semantics", 1, cosine_semantics);
  report("lossless_identity", 1, lossless_identity);
  report("pseudo_inverse_properties", 5, pinv_properties);
  report("gradient_check", 10, gradient_check);
  report("welding_recovers", 60, welding_recovers);
  report("backward_compatibility", 60, backward_compat);
  report("search_oracle_equivalence", 5, search_oracle);
  report("multilayer_constraint", 30, multilayer_constraint);
  report("intervention_flip", 5, intervention_flip);
  std::printf("%d/9 criteria passed\n", 9 - failures);
  seed_sweep();
  return failures == 0 ? 0 : 1;
}
