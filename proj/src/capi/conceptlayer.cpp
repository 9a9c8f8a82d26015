#include "conceptlayer/conceptlayer.h"

#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "core/artifacts.hpp"
#include "core/concept_layer.hpp"
#include "core/error.hpp"
#include "core/evaluation.hpp"
#include "core/latent_store.hpp"
#include "core/model.hpp"
#include "core/ontology.hpp"
#include "core/search_report.hpp"
#include "core/service.hpp"
#include "core/text_io.hpp"
#include "core/welding.hpp"

struct cl_model {
  cl::Model model;
};

struct cl_layer {
  cl::ConceptLayer layer;
};

struct cl_head {
  cl::ClassificationHead head;
  std::vector<std::string> class_names;
};

struct cl_texts {
  std::vector<std::string> texts;
  std::vector<int> labels;  // -1 when unlabeled
};

struct cl_search_result {
  cl::SearchResult result;
  cl::SearchParameters params;
  std::vector<std::string> taus;
};

struct cl_weld_report {
  cl::WeldReport report;
};

struct cl_eval_report {
  cl::EvalReport report;
  std::vector<int> predictions;
  std::vector<int> labels;
};

struct cl_service {
  cl::Service service;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

template <typename F>
cl_status guarded(F&& body) noexcept {
  try {
    body();
    g_last_error.clear();
    return CL_OK;
  } catch (const cl::Error& e) {
    set_error(e.what());
    return static_cast<cl_status>(e.code());
  } catch (const std::bad_alloc&) {
    set_error("out of memory");
    return CL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    set_error(e.what());
    return CL_ERR_INTERNAL;
  } catch (...) {
    set_error("unknown failure");
    return CL_ERR_INTERNAL;
  }
}

void require(const void* ptr, const char* what) {
  if (ptr == nullptr) cl::fail(cl::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

void require_len(std::size_t got, std::size_t expected, const char* what) {
  if (got != expected) {
    cl::fail(cl::ErrorCode::kShape, std::string(what) + " must have length " +
                                        std::to_string(expected) + ", got " + std::to_string(got));
  }
}

void copy_out(const cl::Vector& v, double* out, std::size_t len, const char* what) {
  require(out, what);
  require_len(len, static_cast<std::size_t>(v.size()), what);
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v(i);
}

void copy_out(const cl::Matrix& m, double* out, std::size_t len, const char* what) {
  require(out, what);
  require_len(len, static_cast<std::size_t>(m.size()), what);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[k++] = m(r, c);
}

const cl::ConceptLayer& select_layer(const cl::Model& model, int slice_index) {
  if (!model.is_conceptualized()) {
    cl::fail(cl::ErrorCode::kInvalidArgument, "model has no concept layer");
  }
  const int slice = slice_index == 0 ? model.first_slice() : slice_index;
  const cl::ConceptLayer* layer = model.layer_at_slice(slice);
  if (layer == nullptr) {
    cl::fail(cl::ErrorCode::kSliceIndex, "no concept layer at slice " + std::to_string(slice));
  }
  return *layer;
}

std::vector<int> require_labels(const cl_texts& texts, const char* what) {
  for (int label : texts.labels) {
    if (label < 0) cl::fail(cl::ErrorCode::kInvalidArgument, std::string(what) + " is unlabeled");
  }
  return texts.labels;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::string optional_string(const char* s) { return s == nullptr ? std::string() : std::string(s); }

cl_search_result* make_search_result(cl::SearchResult result, const cl_search_params& params,
                                      const cl::OntologyGraph& graph) {
  auto* out = new cl_search_result{std::move(result),
                                   {params.target_size, params.threshold, params.threshold_step,
                                    params.slice_index},
                                   {}};
  for (const auto& id : out->result.concepts) out->taus.push_back(graph.tau(id));
  return out;
}

std::vector<std::string> initial_concepts(const cl::OntologyGraph& graph,
                                          const char* const* initial, std::size_t count) {
  std::vector<std::string> ids;
  if (count == 0) return graph.roots();
  require(initial, "initial");
  for (std::size_t i = 0; i < count; ++i) {
    require(initial[i], "initial concept");
    ids.emplace_back(initial[i]);
  }
  return ids;
}

}  // namespace

extern "C" {

const char* cl_version(void) { return "0.1.0"; }

const char* cl_status_name(cl_status status) {
  if (status == CL_OK) return "ok";
  if (status < CL_ERR_INVALID_CONFIGURATION || status > CL_ERR_INTERNAL) return "unknown";
  return cl::error_code_name(static_cast<cl::ErrorCode>(status));
}

const char* cl_last_error(void) { return g_last_error.c_str(); }

/* ---- texts ---- */

cl_status cl_texts_create(const char* const* texts, const int* labels, size_t count,
                          cl_texts** out) {
  return guarded([&] {
    require(out, "out");
    if (count > 0) require(texts, "texts");
    auto result = std::make_unique<cl_texts>();
    for (std::size_t i = 0; i < count; ++i) {
      require(texts[i], "text");
      result->texts.emplace_back(texts[i]);
      result->labels.push_back(labels == nullptr ? -1 : labels[i]);
    }
    *out = result.release();
  });
}

cl_status cl_texts_load_corpus(const char* path, cl_texts** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto result = std::make_unique<cl_texts>();
    result->texts = cl::load_corpus(path);
    result->labels.assign(result->texts.size(), -1);
    *out = result.release();
  });
}

cl_status cl_texts_load_dataset(const char* path, cl_texts** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto data = cl::load_dataset(path);
    *out = new cl_texts{std::move(data.texts), std::move(data.labels)};
  });
}

cl_status cl_texts_synthetic(int classes, size_t count, uint64_t seed, cl_texts** out) {
  return guarded([&] {
    require(out, "out");
    cl::SyntheticTaskConfig config;
    config.classes = classes;
    config.count = count;
    config.seed = seed;
    auto task = cl::generate_synthetic_task(config);
    *out = new cl_texts{std::move(task.texts), std::move(task.labels)};
  });
}

cl_status cl_texts_save_dataset(const cl_texts* texts, const char* path) {
  return guarded([&] {
    require(texts, "texts");
    require(path, "path");
    cl::save_dataset(path, {texts->texts, require_labels(*texts, "dataset")});
  });
}

cl_status cl_texts_save_corpus(const cl_texts* texts, const char* path) {
  return guarded([&] {
    require(texts, "texts");
    require(path, "path");
    std::string body;
    for (const auto& t : texts->texts) {
      if (t.find('\n') != std::string::npos) {
        cl::fail(cl::ErrorCode::kInvalidArgument, "corpus texts must not contain newlines");
      }
      body += t + '\n';
    }
    cl::write_file(path, body);
  });
}

size_t cl_texts_count(const cl_texts* texts) { return texts == nullptr ? 0 : texts->texts.size(); }

const char* cl_texts_text(const cl_texts* texts, size_t index) {
  if (texts == nullptr || index >= texts->texts.size()) return nullptr;
  return texts->texts[index].c_str();
}

int cl_texts_label(const cl_texts* texts, size_t index) {
  if (texts == nullptr || index >= texts->labels.size()) return -1;
  return texts->labels[index];
}

cl_status cl_texts_split(const cl_texts* texts, size_t stride, size_t offset, cl_texts** kept,
                         cl_texts** held_out) {
  return guarded([&] {
    require(texts, "texts");
    require(kept, "kept");
    require(held_out, "held_out");
    if (stride < 2 || offset >= stride) {
      cl::fail(cl::ErrorCode::kInvalidArgument, "split needs stride >= 2 and offset < stride");
    }
    auto a = std::make_unique<cl_texts>();
    auto b = std::make_unique<cl_texts>();
    for (std::size_t i = 0; i < texts->texts.size(); ++i) {
      auto& dst = (i % stride == offset) ? *b : *a;
      dst.texts.push_back(texts->texts[i]);
      dst.labels.push_back(texts->labels[i]);
    }
    *kept = a.release();
    *held_out = b.release();
  });
}

void cl_texts_free(cl_texts* texts) { delete texts; }

/* ---- models ---- */

cl_status cl_model_create_toy(int hidden_dim, int layer_count, uint64_t seed, cl_model** out) {
  return guarded([&] {
    require(out, "out");
    *out = new cl_model{cl::Model(cl::LayeredEncoder::build_toy(hidden_dim, layer_count, seed))};
  });
}

cl_status cl_model_from_encoder_config(const char* path, cl_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    const auto config = cl::load_encoder_config(path);
    *out = new cl_model{cl::Model(
        cl::LayeredEncoder::build_toy(config.hidden_dim, config.layer_count, config.seed))};
  });
}

cl_status cl_model_load(const char* path, cl_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new cl_model{cl::load_model(path)};
  });
}

cl_status cl_model_save(const cl_model* model, const char* path, const char* run_manifest) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    cl::save_model(path, model->model, optional_string(run_manifest));
  });
}

cl_status cl_model_clone(const cl_model* model, cl_model** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new cl_model{model->model};
  });
}

cl_status cl_model_strip_layers(const cl_model* model, cl_model** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new cl_model{cl::Model(model->model.encoder())};
  });
}

void cl_model_free(cl_model* model) { delete model; }

int cl_model_hidden_dim(const cl_model* model) {
  return model == nullptr ? 0 : model->model.hidden_dim();
}

int cl_model_layer_count(const cl_model* model) {
  return model == nullptr ? 0 : model->model.layer_count();
}

size_t cl_model_concept_layer_count(const cl_model* model) {
  return model == nullptr ? 0 : model->model.concept_layers().size();
}

int cl_model_concept_layer_slice(const cl_model* model, size_t index) {
  if (model == nullptr || index >= model->model.concept_layers().size()) return -1;
  return model->model.concept_layers()[index].slice_index();
}

cl_status cl_model_get_layer(const cl_model* model, int slice_index, cl_layer** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new cl_layer{select_layer(model->model, slice_index)};
  });
}

cl_status cl_model_forward(const cl_model* model, const char* text, double* out, size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(text, "text");
    copy_out(model->model.forward(text), out, out_len, "output");
  });
}

cl_status cl_model_encode_prefix(const cl_model* model, int slice_index, const char* text,
                                 double* out, size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(text, "text");
    copy_out(model->model.slice_at(slice_index).encode_prefix(text), out, out_len, "output");
  });
}

cl_status cl_model_install_layer(cl_model* model, const cl_layer* layer) {
  return guarded([&] {
    require(model, "model");
    require(layer, "layer");
    model->model.install(layer->layer);
  });
}

/* ---- layers ---- */

cl_status cl_layer_build(const cl_model* model, int slice_index, const char* const* ids,
                         const char* const* taus, size_t count, cl_layer** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    if (count == 0) cl::fail(cl::ErrorCode::kDegenerateLayer, "concept list is empty");
    require(ids, "ids");
    std::vector<std::pair<std::string, std::string>> concepts;
    for (std::size_t i = 0; i < count; ++i) {
      require(ids[i], "concept id");
      const char* tau = (taus != nullptr && taus[i] != nullptr) ? taus[i] : ids[i];
      concepts.emplace_back(ids[i], tau);
    }
    model->model.check_new_slice(slice_index);
    *out = new cl_layer{
        cl::build_concept_layer(model->model.slice_at(slice_index), concepts)};
  });
}

cl_status cl_layer_build_from_vectors(int slice_index, const char* const* ids, const double* rows,
                                      size_t count, size_t hidden_dim, cl_layer** out) {
  return guarded([&] {
    require(out, "out");
    if (count == 0) cl::fail(cl::ErrorCode::kDegenerateLayer, "concept list is empty");
    require(ids, "ids");
    require(rows, "rows");
    std::vector<cl::Concept> concepts;
    for (std::size_t i = 0; i < count; ++i) {
      require(ids[i], "concept id");
      cl::Vector v(static_cast<Eigen::Index>(hidden_dim));
      for (std::size_t j = 0; j < hidden_dim; ++j) v(static_cast<Eigen::Index>(j)) = rows[i * hidden_dim + j];
      concepts.push_back({ids[i], ids[i], std::move(v)});
    }
    *out = new cl_layer{cl::ConceptLayer::build(
        cl::ConceptSet(std::move(concepts), cl::ConceptSource::kManual), slice_index)};
  });
}

cl_status cl_layer_load(const char* path, cl_layer** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new cl_layer{cl::load_concept_layer(path)};
  });
}

cl_status cl_layer_save(const cl_layer* layer, const char* path, const char* run_manifest) {
  return guarded([&] {
    require(layer, "layer");
    require(path, "path");
    cl::save_concept_layer(path, layer->layer, optional_string(run_manifest));
  });
}

void cl_layer_free(cl_layer* layer) { delete layer; }

size_t cl_layer_size(const cl_layer* layer) { return layer == nullptr ? 0 : layer->layer.size(); }

int cl_layer_hidden_dim(const cl_layer* layer) {
  return layer == nullptr ? 0 : layer->layer.hidden_dim();
}

int cl_layer_slice_index(const cl_layer* layer) {
  return layer == nullptr ? 0 : layer->layer.slice_index();
}

size_t cl_layer_rank(const cl_layer* layer) { return layer == nullptr ? 0 : layer->layer.rank(); }

double cl_layer_condition_number(const cl_layer* layer) {
  return layer == nullptr ? 0.0 : layer->layer.condition_number();
}

const char* cl_layer_concept_id(const cl_layer* layer, size_t index) {
  if (layer == nullptr || index >= layer->layer.size()) return nullptr;
  return layer->layer.ids()[index].c_str();
}

const char* cl_layer_concept_tau(const cl_layer* layer, size_t index) {
  if (layer == nullptr || index >= layer->layer.size()) return nullptr;
  return layer->layer.taus()[index].c_str();
}

cl_status cl_layer_projection(const cl_layer* layer, double* out, size_t out_len) {
  return guarded([&] {
    require(layer, "layer");
    copy_out(layer->layer.projection(), out, out_len, "projection");
  });
}

cl_status cl_layer_pseudo_inverse(const cl_layer* layer, double* out, size_t out_len) {
  return guarded([&] {
    require(layer, "layer");
    copy_out(layer->layer.pseudo_inverse(), out, out_len, "pseudo-inverse");
  });
}

int cl_layer_equal(const cl_layer* a, const cl_layer* b) {
  if (a == nullptr || b == nullptr) return 0;
  const auto& x = a->layer;
  const auto& y = b->layer;
  const auto same_bits = [](const cl::Matrix& p, const cl::Matrix& q) {
    return p.rows() == q.rows() && p.cols() == q.cols() &&
           std::memcmp(p.data(), q.data(), static_cast<std::size_t>(p.size()) * sizeof(double)) == 0;
  };
  return x.ids() == y.ids() && x.taus() == y.taus() && x.slice_index() == y.slice_index() &&
                 x.source() == y.source() && x.pinv_tolerance() == y.pinv_tolerance() &&
                 same_bits(x.projection(), y.projection()) &&
                 same_bits(x.pseudo_inverse(), y.pseudo_inverse())
             ? 1
             : 0;
}

/* ---- interpretation ---- */

cl_status cl_project(const cl_model* model, int slice_index, const char* text, double* scores,
                     size_t scores_len, double* norm) {
  return guarded([&] {
    require(model, "model");
    require(text, "text");
    const cl::ConceptLayer& layer = select_layer(model->model, slice_index);
    const auto cv = cl::project(layer, model->model.slice_at(layer.slice_index()).encode_prefix(text));
    copy_out(cl::cosine_scores(cv), scores, scores_len, "scores");
    if (norm != nullptr) *norm = cv.norm_of_source;
  });
}

cl_status cl_interpret(const cl_model* model, int slice_index, const char* text, size_t k,
                       cl_scored_concept* out, size_t* count) {
  return guarded([&] {
    require(model, "model");
    require(text, "text");
    require(out, "out");
    require(count, "count");
    const cl::ConceptLayer& layer = select_layer(model->model, slice_index);
    const auto cv = cl::project(layer, model->model.slice_at(layer.slice_index()).encode_prefix(text));
    const auto top = cl::interpret(layer, cv, k);
    for (std::size_t i = 0; i < top.size(); ++i) {
      const std::size_t idx = *layer.index_of(top[i].id);
      out[i] = {layer.ids()[idx].c_str(), top[i].score, idx};
    }
    *count = top.size();
  });
}

cl_status cl_classify(const cl_model* model, const cl_head* head, int slice_index,
                      const char* text, const cl_intervention* interventions,
                      size_t intervention_count, int* label, double* probs, size_t probs_len) {
  return guarded([&] {
    require(model, "model");
    require(head, "head");
    require(text, "text");
    require(label, "label");
    const cl::ConceptLayer& layer = select_layer(model->model, slice_index);
    cl::InterventionSpec spec;
    if (intervention_count > 0) require(interventions, "interventions");
    for (std::size_t i = 0; i < intervention_count; ++i) {
      require(interventions[i].concept_id, "concept_id");
      spec.set(interventions[i].concept_id, interventions[i].factor);
    }
    const cl::InterventionPlan plan{{layer.slice_index(), spec}};
    const cl::Vector p = head->head.probabilities(model->model.forward(text, &plan));
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    *label = static_cast<int>(best);
    if (probs != nullptr) copy_out(p, probs, probs_len, "probabilities");
  });
}

/* ---- search ---- */

cl_status cl_search_run(const cl_model* model, const cl_search_params* params,
                        const char* ontology_path, const char* concepts_path,
                        const cl_texts* corpus, const char* const* initial, size_t initial_count,
                        cl_search_result** out) {
  return guarded([&] {
    require(model, "model");
    require(params, "params");
    require(ontology_path, "ontology_path");
    require(corpus, "corpus");
    require(out, "out");
    const cl::OntologyGraph graph =
        cl::load_ontology(ontology_path, concepts_path == nullptr ? "" : concepts_path);
    const cl::ModelSlice slice = model->model.slice_at(params->slice_index);
    const cl::ContextCorpus context = cl::ContextCorpus::encode(slice, corpus->texts);
    cl::VarianceOracle oracle(context, [&](const std::string& id) {
      return cl::embed_concept(slice, graph.tau(id));
    });
    cl::ThresholdScheduler scheduler(params->threshold, params->threshold_step);
    auto result = cl::conceptual_search(oracle, graph, initial_concepts(graph, initial, initial_count),
                                        scheduler, params->target_size);
    *out = make_search_result(std::move(result), *params, graph);
  });
}

cl_status cl_search_run_latents(const char* latent_store_path, const cl_search_params* params,
                                const char* ontology_path, const cl_texts* corpus_ids,
                                const char* const* initial, size_t initial_count,
                                cl_search_result** out) {
  return guarded([&] {
    require(latent_store_path, "latent_store_path");
    require(params, "params");
    require(ontology_path, "ontology_path");
    require(corpus_ids, "corpus_ids");
    require(out, "out");
    const cl::LatentStore store = cl::LatentStore::load(latent_store_path);
    const int layer = params->slice_index - 1;
    if (layer < 0 || layer >= store.layer_count()) {
      cl::fail(cl::ErrorCode::kSliceIndex, "slice index does not match the latent store layers");
    }
    const cl::OntologyGraph graph = cl::load_ontology(ontology_path);
    std::vector<cl::Vector> latents;
    for (const auto& id : corpus_ids->texts) latents.push_back(store.get(id, layer));
    const cl::ContextCorpus context(corpus_ids->texts, std::move(latents));
    cl::VarianceOracle oracle(context, [&](const std::string& id) {
      const cl::Vector& v = store.get(id, layer);
      const double norm = v.norm();
      if (!(norm > 0.0)) cl::fail(cl::ErrorCode::kDegenerateConcept, "concept '" + id + "' has a zero latent");
      return cl::Vector(v / norm);
    });
    cl::ThresholdScheduler scheduler(params->threshold, params->threshold_step);
    auto result = cl::conceptual_search(oracle, graph, initial_concepts(graph, initial, initial_count),
                                        scheduler, params->target_size);
    *out = make_search_result(std::move(result), *params, graph);
  });
}

size_t cl_search_result_size(const cl_search_result* result) {
  return result == nullptr ? 0 : result->result.concepts.size();
}

const char* cl_search_result_concept(const cl_search_result* result, size_t index) {
  if (result == nullptr || index >= result->result.concepts.size()) return nullptr;
  return result->result.concepts[index].c_str();
}

const char* cl_search_result_tau(const cl_search_result* result, size_t index) {
  if (result == nullptr || index >= result->taus.size()) return nullptr;
  return result->taus[index].c_str();
}

size_t cl_search_result_rounds(const cl_search_result* result) {
  return result == nullptr ? 0 : result->result.thresholds.size();
}

cl_status cl_search_result_write(const cl_search_result* result, const char* list_path,
                                 const char* manifest_path, const char* run_manifest) {
  return guarded([&] {
    require(result, "result");
    if (list_path != nullptr) cl::write_file(list_path, cl::format_concept_list(result->result));
    if (manifest_path != nullptr) {
      cl::write_file(manifest_path, cl::format_search_manifest(result->result, result->params,
                                                               optional_string(run_manifest)));
    }
  });
}

void cl_search_result_free(cl_search_result* result) { delete result; }

/* ---- welding ---- */

void cl_weld_config_default(cl_weld_config* config) {
  if (config == nullptr) return;
  const cl::WeldConfig d;
  *config = {d.batch_size, d.learning_rate, d.epochs, d.warmup_steps, d.weight_decay, d.seed};
}

cl_status cl_weld_config_load(const char* path, cl_weld_config* config) {
  return guarded([&] {
    require(path, "path");
    require(config, "config");
    const cl::WeldConfig c = cl::load_weld_config(path);
    *config = {c.batch_size, c.learning_rate, c.epochs, c.warmup_steps, c.weight_decay, c.seed};
  });
}

cl_status cl_distillation_loss(const cl_model* original, const cl_model* conceptualized,
                               const cl_texts* batch, double* loss) {
  return guarded([&] {
    require(original, "original");
    require(conceptualized, "conceptualized");
    require(batch, "batch");
    require(loss, "loss");
    *loss = cl::distillation_loss(original->model.encoder(), conceptualized->model, batch->texts);
  });
}

cl_status cl_weld(const cl_model* original, cl_model* conceptualized,
                  const cl_weld_config* config, const cl_texts* corpus, cl_weld_report** out) {
  return guarded([&] {
    require(original, "original");
    require(conceptualized, "conceptualized");
    require(corpus, "corpus");
    require(out, "out");
    cl::WeldConfig c;
    if (config != nullptr) {
      c.batch_size = config->batch_size;
      c.learning_rate = config->learning_rate;
      c.epochs = config->epochs;
      c.warmup_steps = config->warmup_steps;
      c.weight_decay = config->weight_decay;
      c.seed = config->seed;
    }
    c.corpus = corpus->texts;
    // Work on a copy so a failed weld leaves the caller's model untouched.
    cl::Model working = conceptualized->model;
    cl::WeldReport report = cl::weld(original->model.encoder(), working, c);
    conceptualized->model = std::move(working);
    *out = new cl_weld_report{std::move(report)};
  });
}

size_t cl_weld_report_epochs(const cl_weld_report* report) {
  return report == nullptr ? 0 : report->report.epoch_losses.size();
}

double cl_weld_report_epoch_loss(const cl_weld_report* report, size_t epoch) {
  if (report == nullptr || epoch >= report->report.epoch_losses.size()) return 0.0;
  return report->report.epoch_losses[epoch];
}

double cl_weld_report_initial_loss(const cl_weld_report* report) {
  return report == nullptr ? 0.0 : report->report.initial_loss;
}

double cl_weld_report_final_loss(const cl_weld_report* report) {
  return report == nullptr ? 0.0 : report->report.final_loss;
}

cl_status cl_weld_report_write(const cl_weld_report* report, const char* path) {
  return guarded([&] {
    require(report, "report");
    require(path, "path");
    cl::write_file(path, cl::format_weld_report(report->report));
  });
}

cl_status cl_weld_report_read(const char* path, cl_weld_report** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new cl_weld_report{cl::parse_weld_report(cl::read_file(path))};
  });
}

void cl_weld_report_free(cl_weld_report* report) { delete report; }

/* ---- heads and evaluation ---- */

void cl_head_config_default(cl_head_config* config) {
  if (config == nullptr) return;
  const cl::HeadConfig d;
  *config = {d.hidden_width, d.learning_rate, d.max_epochs, d.patience, d.seed};
}

cl_status cl_head_train(const cl_model* model, const cl_texts* train, const cl_texts* validation,
                        const cl_head_config* config, cl_head** out) {
  return guarded([&] {
    require(model, "model");
    require(train, "train");
    require(validation, "validation");
    require(out, "out");
    cl::HeadConfig c;
    if (config != nullptr) {
      c.hidden_width = config->hidden_width;
      c.learning_rate = config->learning_rate;
      c.max_epochs = config->max_epochs;
      c.patience = config->patience;
      c.seed = config->seed;
    }
    cl::LabeledSet train_set{cl::model_outputs(model->model, train->texts),
                             require_labels(*train, "training split")};
    cl::LabeledSet val_set{cl::model_outputs(model->model, validation->texts),
                           require_labels(*validation, "validation split")};
    *out = new cl_head{cl::train_head(train_set, val_set, c), {}};
  });
}

cl_status cl_head_load(const char* path, cl_head** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto loaded = cl::load_head(path);
    *out = new cl_head{std::move(loaded.head), std::move(loaded.class_names)};
  });
}

cl_status cl_head_save(const cl_head* head, const char* path, const char* const* class_names,
                       size_t class_name_count, const char* run_manifest) {
  return guarded([&] {
    require(head, "head");
    require(path, "path");
    std::vector<std::string> names = head->class_names;
    if (class_names != nullptr) {
      names.clear();
      for (std::size_t i = 0; i < class_name_count; ++i) {
        require(class_names[i], "class name");
        names.emplace_back(class_names[i]);
      }
    }
    cl::save_head(path, head->head, names, optional_string(run_manifest));
  });
}

void cl_head_free(cl_head* head) { delete head; }

int cl_head_input_dim(const cl_head* head) { return head == nullptr ? 0 : head->head.input_dim(); }

int cl_head_class_count(const cl_head* head) {
  return head == nullptr ? 0 : head->head.class_count();
}

const char* cl_head_class_name(const cl_head* head, size_t index) {
  if (head == nullptr || index >= head->class_names.size()) return nullptr;
  return head->class_names[index].c_str();
}

cl_status cl_eval(const cl_model* model, const cl_head* head, const cl_texts* dataset,
                  const cl_model* reference, cl_eval_report** out) {
  return guarded([&] {
    require(model, "model");
    require(head, "head");
    require(dataset, "dataset");
    require(out, "out");
    if (head->head.input_dim() != model->model.hidden_dim()) {
      cl::fail(cl::ErrorCode::kShape,
               "head input dimension " + std::to_string(head->head.input_dim()) +
                   " does not match model output dimension " +
                   std::to_string(model->model.hidden_dim()));
    }
    const auto labels = require_labels(*dataset, "dataset");
    const auto features = cl::model_outputs(model->model, dataset->texts);
    auto result = std::make_unique<cl_eval_report>();
    result->predictions = cl::predict_all(head->head, features).labels;
    result->labels = labels;
    if (reference != nullptr) {
      if (reference->model.hidden_dim() != head->head.input_dim()) {
        cl::fail(cl::ErrorCode::kShape, "reference model output does not match head input");
      }
      const auto ref = cl::predict_all(head->head, cl::model_outputs(reference->model, dataset->texts)).labels;
      result->report = cl::evaluate(head->head, features, labels, std::span<const int>(ref));
    } else {
      result->report = cl::evaluate(head->head, features, labels);
    }
    *out = result.release();
  });
}

size_t cl_eval_report_count(const cl_eval_report* report) {
  return report == nullptr ? 0 : report->report.count;
}

double cl_eval_report_accuracy(const cl_eval_report* report) {
  return report == nullptr ? 0.0 : report->report.accuracy;
}

double cl_eval_report_weighted_f1(const cl_eval_report* report) {
  return report == nullptr ? 0.0 : report->report.weighted_f1;
}

double cl_eval_report_loss(const cl_eval_report* report) {
  return report == nullptr ? 0.0 : report->report.loss;
}

int cl_eval_report_agreement(const cl_eval_report* report, double* agreement) {
  if (report == nullptr || !report->report.agreement) return 0;
  if (agreement != nullptr) *agreement = *report->report.agreement;
  return 1;
}

cl_status cl_eval_report_write(const cl_eval_report* report, const char* kv_path,
                               const char* json_path, const char* predictions_path) {
  return guarded([&] {
    require(report, "report");
    if (kv_path != nullptr) cl::write_file(kv_path, report->report.to_key_value());
    if (json_path != nullptr) cl::write_file(json_path, report->report.to_json() + "\n");
    if (predictions_path != nullptr) {
      cl::write_file(predictions_path, cl::format_predictions(report->predictions, report->labels));
    }
  });
}

void cl_eval_report_free(cl_eval_report* report) { delete report; }

/* ---- service ---- */

cl_status cl_service_create(cl_service** out) {
  return guarded([&] {
    require(out, "out");
    *out = new cl_service();
  });
}

cl_status cl_service_load(cl_service* service, const cl_model* model, const cl_head* head,
                          int slice_index, size_t top_k) {
  return guarded([&] {
    require(service, "service");
    require(model, "model");
    require(head, "head");
    service->service.load(cl::ServiceBundle{model->model, head->head, head->class_names,
                                            slice_index, top_k == 0 ? 10 : top_k});
  });
}

cl_status cl_service_bind(cl_service* service, const char* host, int port, int* bound_port) {
  return guarded([&] {
    require(service, "service");
    const int bound = service->service.bind(host == nullptr ? "127.0.0.1" : host, port);
    if (bound_port != nullptr) *bound_port = bound;
  });
}

cl_status cl_service_listen(cl_service* service) {
  return guarded([&] {
    require(service, "service");
    service->service.listen();
  });
}

void cl_service_stop(cl_service* service) {
  if (service != nullptr) service->service.stop();
}

cl_status cl_service_handle(const cl_service* service, const char* method, const char* path,
                            const char* body, int* http_status, char** response) {
  return guarded([&] {
    require(service, "service");
    require(method, "method");
    require(path, "path");
    require(http_status, "http_status");
    require(response, "response");
    const std::string m(method), p(path), b = optional_string(body);
    cl::HttpResult r;
    if (m == "GET" && p == "/health") {
      r = service->service.health();
    } else if (m == "GET" && p == "/concepts") {
      r = service->service.concepts();
    } else if (m == "POST" && p == "/project") {
      r = service->service.project(b);
    } else if (m == "POST" && p == "/classify") {
      r = service->service.classify(b);
    } else {
      r = {404, R"({"code":"not_found","message":"no such endpoint"})"};
    }
    *http_status = r.status;
    *response = dup_string(r.body);
  });
}

void cl_service_free(cl_service* service) { delete service; }

void cl_string_free(char* text) { std::free(text); }

}  // extern "C"
