// clayer: pipeline driver over the conceptlayer C API.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "conceptlayer/conceptlayer.h"
#include "json.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr double kConditioningWarning = 1e6;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(cl_status status) {
  switch (status) {
    case CL_ERR_INVALID_CONFIGURATION:
    case CL_ERR_INVALID_ARGUMENT:
    case CL_ERR_SLICE_INDEX:
    case CL_ERR_SLICE_ORDERING:
      return kExitUsage;
    case CL_ERR_DIVERGENCE:
    case CL_ERR_DEGENERATE_LAYER:
    case CL_ERR_FROZEN_PREFIX:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

void check(cl_status status) {
  if (status != CL_OK) {
    throw Failure{exit_code_for(status),
                  std::string(cl_status_name(status)) + ": " + cl_last_error()};
  }
}

[[noreturn]] void usage(const std::string& message) { throw Failure{kExitUsage, message}; }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Model = std::unique_ptr<cl_model, Deleter<cl_model, cl_model_free>>;
using Layer = std::unique_ptr<cl_layer, Deleter<cl_layer, cl_layer_free>>;
using Head = std::unique_ptr<cl_head, Deleter<cl_head, cl_head_free>>;
using Texts = std::unique_ptr<cl_texts, Deleter<cl_texts, cl_texts_free>>;
using SearchResult = std::unique_ptr<cl_search_result, Deleter<cl_search_result, cl_search_result_free>>;
using WeldReport = std::unique_ptr<cl_weld_report, Deleter<cl_weld_report, cl_weld_report_free>>;
using EvalReport = std::unique_ptr<cl_eval_report, Deleter<cl_eval_report, cl_eval_report_free>>;

Model load_model(const std::string& model_path, const std::string& encoder_config) {
  cl_model* m = nullptr;
  if (!model_path.empty()) {
    check(cl_model_load(model_path.c_str(), &m));
  } else if (!encoder_config.empty()) {
    check(cl_model_from_encoder_config(encoder_config.c_str(), &m));
  } else {
    usage("one of --model or --encoder-config is required");
  }
  return Model(m);
}

Texts load_corpus(const std::string& path) {
  cl_texts* t = nullptr;
  check(cl_texts_load_corpus(path.c_str(), &t));
  return Texts(t);
}

Texts load_dataset(const std::string& path) {
  cl_texts* t = nullptr;
  check(cl_texts_load_dataset(path.c_str(), &t));
  return Texts(t);
}

Head load_head(const std::string& path) {
  cl_head* h = nullptr;
  check(cl_head_load(path.c_str(), &h));
  return Head(h);
}

// id<TAB>tau lines, '#' comments and blank lines skipped.
std::vector<std::pair<std::string, std::string>> read_concepts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{kExitData, "io: cannot open '" + path + "'"};
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.emplace_back(line, line);
    } else {
      out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
  }
  if (out.empty()) throw Failure{kExitData, "degenerate_layer: concepts file '" + path + "' is empty"};
  return out;
}

// Recorded next to every artifact and referenced from it.
class RunManifest {
 public:
  RunManifest(std::string subcommand, std::uint64_t seed) {
    doc_["tool"] = "clayer";
    doc_["version"] = cl_version();
    doc_["subcommand"] = std::move(subcommand);
    doc_["seed"] = seed;
    doc_["files"] = nlohmann::json::object();
    doc_["parameters"] = nlohmann::json::object();
  }

  void file(const std::string& role, const std::string& path) {
    if (!path.empty()) doc_["files"][role] = path;
  }
  template <typename T>
  void param(const std::string& key, const T& value) {
    doc_["parameters"][key] = value;
  }

  // Writes "<out>.run.json" and returns its path.
  std::string write(const std::string& out) const {
    const std::string path = out + ".run.json";
    std::ofstream f(path, std::ios::binary);
    f << doc_.dump(2) << '\n';
    if (!f) throw Failure{kExitData, "io: cannot write '" + path + "'"};
    return path;
  }

 private:
  nlohmann::json doc_;
};

void warn_conditioning(const cl_layer* layer) {
  const double cond = cl_layer_condition_number(layer);
  if (cond > kConditioningWarning) {
    std::cerr << "warning: concept matrix is ill-conditioned (condition number " << cond
              << ", rank " << cl_layer_rank(layer) << " of " << cl_layer_size(layer) << ")\n";
  }
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

struct Options {
  std::uint64_t seed = 0;
  std::string ontology, corpus, encoder_config, concepts, model, base, head, dataset, reference,
      reference_config, latents, weld_config, out, text, host = "127.0.0.1";
  std::vector<std::string> layers, init, intervene;
  int slice = 0;
  std::size_t target_size = 0;
  double thr = 0.0, thr_step = 0.0;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  int port = 8080;
  std::size_t k = 5;
  int classes = 4;
  std::size_t count = 200;
  std::size_t val_stride = 5;
};

void run_search(const Options& o) {
  if (o.target_size == 0) usage("--target-size must be positive");
  cl_search_params params{o.target_size, o.thr, o.thr_step, o.slice};
  std::vector<const char*> init;
  for (const auto& id : o.init) init.push_back(id.c_str());
  cl_search_result* raw = nullptr;
  if (!o.latents.empty()) {
    // Corpus lines are text ids into the latent store.
    Texts ids = load_corpus(o.corpus);
    check(cl_search_run_latents(o.latents.c_str(), &params, o.ontology.c_str(), ids.get(),
                                init.data(), init.size(), &raw));
  } else {
    Model model = load_model(o.model, o.encoder_config);
    Texts corpus = load_corpus(o.corpus);
    check(cl_search_run(model.get(), &params, o.ontology.c_str(),
                        o.concepts.empty() ? nullptr : o.concepts.c_str(), corpus.get(),
                        init.data(), init.size(), &raw));
  }
  SearchResult result(raw);

  RunManifest run("search", o.seed);
  run.file("ontology", o.ontology);
  run.file("concepts", o.concepts);
  run.file("corpus", o.corpus);
  run.file("encoder_config", o.encoder_config);
  run.file("model", o.model);
  run.file("latents", o.latents);
  run.param("target_size", o.target_size);
  run.param("thr", o.thr);
  run.param("thr_step", o.thr_step);
  run.param("slice", o.slice);
  run.param("init", o.init);
  const std::string run_path = run.write(o.out);
  const std::string manifest = o.out + ".manifest.json";
  check(cl_search_result_write(result.get(), o.out.c_str(), manifest.c_str(), run_path.c_str()));
  std::cout << "concepts=" << o.out << "\nmanifest=" << manifest << "\nrun_manifest=" << run_path
            << "\nrounds=" << cl_search_result_rounds(result.get()) << '\n';
}

void run_build(const Options& o) {
  Model model = load_model(o.model, o.encoder_config);
  const auto concepts = read_concepts(o.concepts);
  std::vector<const char*> ids, taus;
  for (const auto& [id, tau] : concepts) {
    ids.push_back(id.c_str());
    taus.push_back(tau.c_str());
  }
  cl_layer* raw = nullptr;
  check(cl_layer_build(model.get(), o.slice, ids.data(), taus.data(), ids.size(), &raw));
  Layer layer(raw);
  warn_conditioning(layer.get());

  RunManifest run("build", o.seed);
  run.file("encoder_config", o.encoder_config);
  run.file("model", o.model);
  run.file("concepts", o.concepts);
  run.param("slice", o.slice);
  const std::string run_path = run.write(o.out);
  check(cl_layer_save(layer.get(), o.out.c_str(), run_path.c_str()));
  std::cout << "layer=" << o.out << "\nrun_manifest=" << run_path << "\nrank="
            << cl_layer_rank(layer.get()) << "\ncondition_number="
            << cl_layer_condition_number(layer.get()) << '\n';
}

void run_weld(const Options& o) {
  Model original = load_model(o.base, o.encoder_config);
  Model conceptualized;
  if (!o.model.empty()) {
    conceptualized = load_model(o.model, {});
  } else {
    cl_model* copy = nullptr;
    check(cl_model_clone(original.get(), &copy));
    conceptualized.reset(copy);
  }
  for (const auto& path : o.layers) {
    cl_layer* raw = nullptr;
    check(cl_layer_load(path.c_str(), &raw));
    Layer layer(raw);
    warn_conditioning(layer.get());
    check(cl_model_install_layer(conceptualized.get(), layer.get()));
  }
  if (cl_model_concept_layer_count(conceptualized.get()) == 0) {
    usage("weld needs --layers or a conceptualized --model");
  }

  cl_weld_config config;
  cl_weld_config_default(&config);
  if (!o.weld_config.empty()) check(cl_weld_config_load(o.weld_config.c_str(), &config));
  if (o.epochs) config.epochs = *o.epochs;
  if (o.batch_size) config.batch_size = *o.batch_size;
  if (o.lr) config.learning_rate = *o.lr;
  config.seed = o.seed;

  Texts corpus = load_corpus(o.corpus);
  cl_weld_report* raw = nullptr;
  check(cl_weld(original.get(), conceptualized.get(), &config, corpus.get(), &raw));
  WeldReport report(raw);

  RunManifest run("weld", o.seed);
  run.file("base", o.base);
  run.file("encoder_config", o.encoder_config);
  run.file("model", o.model);
  run.file("corpus", o.corpus);
  run.file("weld_config", o.weld_config);
  run.param("layers", o.layers);
  run.param("epochs", config.epochs);
  run.param("batch_size", config.batch_size);
  run.param("lr", config.learning_rate);
  run.param("warmup_steps", config.warmup_steps);
  run.param("weight_decay", config.weight_decay);
  const std::string run_path = run.write(o.out);
  check(cl_model_save(conceptualized.get(), o.out.c_str(), run_path.c_str()));
  const std::string report_path = o.out + ".report.tsv";
  check(cl_weld_report_write(report.get(), report_path.c_str()));
  std::cout << "model=" << o.out << "\nreport=" << report_path << "\nrun_manifest=" << run_path
            << "\ninitial_loss=" << cl_weld_report_initial_loss(report.get())
            << "\nfinal_loss=" << cl_weld_report_final_loss(report.get()) << '\n';
}

void run_train_head(const Options& o) {
  if (o.val_stride < 2) usage("--val-stride must be at least 2");
  Model model = load_model(o.model, o.encoder_config);
  Texts data = load_dataset(o.dataset);
  cl_texts *train = nullptr, *val = nullptr;
  check(cl_texts_split(data.get(), o.val_stride, 0, &train, &val));
  Texts train_set(train), val_set(val);
  cl_head_config config;
  cl_head_config_default(&config);
  config.seed = o.seed;
  cl_head* raw = nullptr;
  check(cl_head_train(model.get(), train_set.get(), val_set.get(), &config, &raw));
  Head head(raw);

  RunManifest run("train-head", o.seed);
  run.file("model", o.model);
  run.file("encoder_config", o.encoder_config);
  run.file("dataset", o.dataset);
  run.param("val_stride", o.val_stride);
  const std::string run_path = run.write(o.out);
  check(cl_head_save(head.get(), o.out.c_str(), nullptr, 0, run_path.c_str()));
  std::cout << "head=" << o.out << "\nrun_manifest=" << run_path << '\n';
}

void run_eval(const Options& o) {
  Model model = load_model(o.model, o.encoder_config);
  Head head = load_head(o.head);
  Texts data = load_dataset(o.dataset);
  Model reference;
  if (!o.reference.empty() || !o.reference_config.empty()) {
    reference = load_model(o.reference, o.reference_config);
  }
  cl_eval_report* raw = nullptr;
  check(cl_eval(model.get(), head.get(), data.get(), reference.get(), &raw));
  EvalReport report(raw);

  RunManifest run("eval", o.seed);
  run.file("model", o.model);
  run.file("encoder_config", o.encoder_config);
  run.file("head", o.head);
  run.file("dataset", o.dataset);
  run.file("reference", o.reference);
  run.file("reference_encoder_config", o.reference_config);
  const std::string run_path = run.write(o.out);
  const std::string json_path = o.out + ".json";
  const std::string pred_path = o.out + ".predictions.tsv";
  check(cl_eval_report_write(report.get(), o.out.c_str(), json_path.c_str(), pred_path.c_str()));
  std::cout << "report=" << o.out << "\njson=" << json_path << "\npredictions=" << pred_path
            << "\nrun_manifest=" << run_path << "\naccuracy=" << cl_eval_report_accuracy(report.get())
            << "\nweighted_f1=" << cl_eval_report_weighted_f1(report.get()) << '\n';
  double agree = 0.0;
  if (cl_eval_report_agreement(report.get(), &agree)) std::cout << "agreement=" << agree << '\n';
}

void run_project(const Options& o) {
  Model model = load_model(o.model, {});
  std::vector<cl_scored_concept> top(o.k);
  std::size_t n = 0;
  check(cl_interpret(model.get(), o.slice, o.text.c_str(), o.k, top.data(), &n));
  for (std::size_t i = 0; i < n; ++i) std::cout << top[i].id << '\t' << top[i].score << '\n';
}

std::vector<std::pair<std::string, double>> parse_interventions(const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& s : specs) {
    const auto eq = s.rfind('=');
    if (eq == std::string::npos || eq == 0) usage("--intervene expects id=factor, got '" + s + "'");
    try {
      std::size_t used = 0;
      const double factor = std::stod(s.substr(eq + 1), &used);
      if (used != s.size() - eq - 1) throw std::invalid_argument(s);
      out.emplace_back(s.substr(0, eq), factor);
    } catch (const std::logic_error&) {
      usage("--intervene factor is not a number in '" + s + "'");
    }
  }
  return out;
}

void run_classify(const Options& o) {
  Model model = load_model(o.model, {});
  Head head = load_head(o.head);
  const auto parsed = parse_interventions(o.intervene);
  std::vector<cl_intervention> iv;
  for (const auto& [id, factor] : parsed) iv.push_back({id.c_str(), factor});
  const auto classes = static_cast<std::size_t>(cl_head_class_count(head.get()));
  std::vector<double> probs(classes);
  int label = -1;
  check(cl_classify(model.get(), head.get(), o.slice, o.text.c_str(), iv.data(), iv.size(), &label,
                    probs.data(), probs.size()));
  const char* name = cl_head_class_name(head.get(), static_cast<std::size_t>(label));
  std::cout << "label=" << label << '\n';
  if (name != nullptr) std::cout << "label_name=" << name << '\n';
  for (std::size_t i = 0; i < classes; ++i) std::cout << "p" << i << '=' << probs[i] << '\n';
}

void run_synth(const Options& o) {
  cl_texts* raw = nullptr;
  check(cl_texts_synthetic(o.classes, o.count, o.seed, &raw));
  Texts data(raw);
  check(cl_texts_save_dataset(data.get(), o.out.c_str()));
  const std::string corpus = o.out + ".corpus.txt";
  check(cl_texts_save_corpus(data.get(), corpus.c_str()));
  std::cout << "dataset=" << o.out << "\ncorpus=" << corpus << '\n';
}

void run_serve(const Options& o) {
  Model model = load_model(o.model, {});
  Head head = load_head(o.head);
  cl_service* raw = nullptr;
  check(cl_service_create(&raw));
  std::unique_ptr<cl_service, Deleter<cl_service, cl_service_free>> service(raw);
  check(cl_service_load(service.get(), model.get(), head.get(), o.slice, o.k));
  int bound = 0;
  check(cl_service_bind(service.get(), o.host.c_str(), o.port, &bound));
  std::cout << "listening=" << o.host << ':' << bound << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&] {
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    cl_service_stop(service.get());
  });
  const cl_status status = cl_service_listen(service.get());
  g_interrupted = true;
  watcher.join();
  check(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept layer pipeline: search, build, weld, eval, serve"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--seed", o.seed, "Seed recorded in every run manifest")->capture_default_str();

  auto* search = app.add_subcommand("search", "Variance-guided concept search over an ontology");
  search->add_option("--ontology", o.ontology, "parent<TAB>child edge file")->required();
  search->add_option("--concepts", o.concepts, "Optional id<TAB>tau file");
  search->add_option("--corpus", o.corpus, "One text (or latent id) per line")->required();
  search->add_option("--encoder-config", o.encoder_config, "Toy encoder key=value file");
  search->add_option("--model", o.model, "Model artifact instead of an encoder config");
  search->add_option("--latents", o.latents, "Latent store instead of a model");
  search->add_option("--slice", o.slice, "Prefix slice index")->required();
  search->add_option("--target-size", o.target_size)->required();
  search->add_option("--thr", o.thr, "Initial variance-gain threshold")->required();
  search->add_option("--thr-step", o.thr_step, "Threshold decrement per round")->required();
  search->add_option("--init", o.init, "Initial concepts (default: ontology roots)");
  search->add_option("--out", o.out, "Concept list path")->required();

  auto* build = app.add_subcommand("build", "Build a concept layer from a concept list");
  build->add_option("--encoder-config", o.encoder_config);
  build->add_option("--model", o.model, "Conceptualized model for a deeper layer");
  build->add_option("--slice", o.slice)->required();
  build->add_option("--concepts", o.concepts, "id<TAB>tau lines")->required();
  build->add_option("--out", o.out, "Concept layer artifact path")->required();

  auto* weld = app.add_subcommand("weld", "Distill the original model into a conceptualized one");
  weld->add_option("--encoder-config", o.encoder_config, "Original toy encoder");
  weld->add_option("--base", o.base, "Original model artifact");
  weld->add_option("--model", o.model, "Conceptualized model to continue from");
  weld->add_option("--layers", o.layers, "Concept layer artifacts to install");
  weld->add_option("--corpus", o.corpus)->required();
  weld->add_option("--weld-config", o.weld_config, "key=value optimizer settings");
  weld->add_option("--epochs", o.epochs);
  weld->add_option("--batch-size", o.batch_size);
  weld->add_option("--lr", o.lr);
  weld->add_option("--out", o.out, "Welded model artifact path")->required();

  auto* train = app.add_subcommand("train-head", "Train a classification head on model outputs");
  train->add_option("--encoder-config", o.encoder_config);
  train->add_option("--model", o.model);
  train->add_option("--dataset", o.dataset, "label<TAB>text lines")->required();
  train->add_option("--val-stride", o.val_stride, "Every n-th example is held out")
      ->capture_default_str();
  train->add_option("--out", o.out)->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a head on a model's outputs");
  eval->add_option("--encoder-config", o.encoder_config);
  eval->add_option("--model", o.model);
  eval->add_option("--head", o.head)->required();
  eval->add_option("--dataset", o.dataset)->required();
  eval->add_option("--reference", o.reference, "Model artifact for agreement");
  eval->add_option("--reference-encoder-config", o.reference_config,
                   "Toy encoder config for agreement");
  eval->add_option("--out", o.out, "Report path")->required();

  auto* project = app.add_subcommand("project", "Top-k concepts for a text");
  project->add_option("--model", o.model)->required();
  project->add_option("--slice", o.slice, "0 selects the first concept layer");
  project->add_option("--text", o.text)->required();
  project->add_option("--k", o.k)->capture_default_str();

  auto* classify = app.add_subcommand("classify", "Classify a text, optionally with interventions");
  classify->add_option("--model", o.model)->required();
  classify->add_option("--head", o.head)->required();
  classify->add_option("--slice", o.slice, "0 selects the first concept layer");
  classify->add_option("--text", o.text)->required();
  classify->add_option("--intervene", o.intervene, "id=factor, repeatable");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP inference API");
  serve->add_option("--model", o.model)->required();
  serve->add_option("--head", o.head)->required();
  serve->add_option("--slice", o.slice, "0 selects the first concept layer");
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--port", o.port)->capture_default_str();
  serve->add_option("--k", o.k, "Default top-k")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write a synthetic topic classification dataset");
  synth->add_option("--classes", o.classes)->capture_default_str();
  synth->add_option("--count", o.count)->capture_default_str();
  synth->add_option("--out", o.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*search) run_search(o);
    else if (*build) run_build(o);
    else if (*weld) run_weld(o);
    else if (*train) run_train_head(o);
    else if (*eval) run_eval(o);
    else if (*project) run_project(o);
    else if (*classify) run_classify(o);
    else if (*serve) run_serve(o);
    else if (*synth) run_synth(o);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.exit_code;
  }
  return 0;
}
