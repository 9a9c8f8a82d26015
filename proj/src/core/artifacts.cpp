#include "core/artifacts.hpp"

#include <map>
#include <sstream>

#include "core/error.hpp"
#include "core/latent_store.hpp"
#include "core/text_io.hpp"

namespace cl {

namespace {

namespace fs = std::filesystem;

fs::path sidecar_path(const fs::path& manifest) { return fs::path(manifest.string() + ".bin"); }

void check_field_text(const std::string& value, const std::string& what) {
  if (value.find('\n') != std::string::npos || value.find('\t') != std::string::npos) {
    fail(ErrorCode::kInvalidArgument, what + " must not contain tabs or newlines");
  }
}

// "key value" scalars plus tab-separated records keyed by their first field.
struct Manifest {
  fs::path path;
  std::string magic;
  std::map<std::string, std::pair<std::string, std::size_t>> scalars;
  std::vector<std::pair<std::vector<std::string>, std::size_t>> records;

  static Manifest read(const fs::path& path, const std::string& magic) {
    Manifest m;
    m.path = path;
    m.magic = magic;
    const auto lines = read_lines(path);
    if (lines.empty() || trim(lines.front().text) != magic + " v1") {
      fail(ErrorCode::kParse, location(path, 1) + ": expected '" + magic + " v1' header");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const Line& line = lines[i];
      if (trim(line.text).empty()) continue;
      if (line.text.find('\t') != std::string::npos) {
        std::vector<std::string> fields;
        for (auto f : split(line.text, '\t')) fields.emplace_back(f);
        m.records.emplace_back(std::move(fields), line.number);
        continue;
      }
      const auto space = line.text.find(' ');
      if (space == std::string::npos) {
        fail(ErrorCode::kParse, location(path, line.number) + ": expected 'key value'");
      }
      m.scalars[line.text.substr(0, space)] = {std::string(trim(line.text.substr(space + 1))),
                                               line.number};
    }
    return m;
  }

  const std::string& get(const std::string& key) const {
    const auto it = scalars.find(key);
    if (it == scalars.end()) fail(ErrorCode::kParse, path.string() + ": missing '" + key + "'");
    return it->second.first;
  }

  std::string where(const std::string& key) const {
    const auto it = scalars.find(key);
    return location(path, it == scalars.end() ? 0 : it->second.second);
  }

  long long get_int(const std::string& key) const { return parse_int(get(key), where(key)); }
  double get_double(const std::string& key) const { return parse_double(get(key), where(key)); }
  std::uint64_t get_uint(const std::string& key) const {
    return parse_uint64(get(key), where(key));
  }
};

std::istringstream open_sidecar(const Manifest& m) {
  fs::path data = m.path.parent_path() / m.get("data");
  return std::istringstream(read_file(data), std::ios::binary);
}

void require_consumed(std::istringstream& in, const Manifest& m) {
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorCode::kParse, m.path.string() + ": binary sidecar has trailing data");
  }
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> out;
  for (const auto& line : read_lines(path)) {
    const auto body = trim(line.text);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::kParse, location(path, line.number) + ": expected key=value");
    }
    out[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
  }
  return out;
}

}  // namespace

void save_concept_layer(const fs::path& path, const ConceptLayer& layer,
                        const std::string& run_manifest) {
  std::ostringstream manifest;
  manifest << "CLAYER v1\n";
  manifest << "slice_index " << layer.slice_index() << '\n';
  manifest << "n " << layer.size() << '\n';
  manifest << "h " << layer.hidden_dim() << '\n';
  manifest << "pinv_tolerance " << format_double(layer.pinv_tolerance()) << '\n';
  manifest << "source " << concept_source_name(layer.source()) << '\n';
  manifest << "dtype f64\n";
  manifest << "data " << sidecar_path(path).filename().string() << '\n';
  if (!run_manifest.empty()) manifest << "run_manifest " << run_manifest << '\n';
  for (std::size_t i = 0; i < layer.size(); ++i) {
    check_field_text(layer.ids()[i], "concept id");
    check_field_text(layer.taus()[i], "concept text");
    manifest << "concept\t" << layer.ids()[i] << '\t' << layer.taus()[i] << '\n';
  }
  std::ostringstream data(std::ios::binary);
  write_matrix(data, layer.projection(), FloatType::kF64);
  write_matrix(data, layer.pseudo_inverse(), FloatType::kF64);
  write_file(sidecar_path(path), data.str());
  write_file(path, manifest.str());
}

ConceptLayer load_concept_layer(const fs::path& path) {
  const Manifest m = Manifest::read(path, "CLAYER");
  const auto n = m.get_int("n");
  const auto h = m.get_int("h");
  if (n < 1 || h < 1) fail(ErrorCode::kParse, path.string() + ": n and h must be positive");
  const FloatType dtype = parse_float_type(m.get("dtype"));
  std::vector<std::string> ids, taus;
  for (const auto& [fields, line] : m.records) {
    if (fields.front() != "concept" || fields.size() != 3) {
      fail(ErrorCode::kParse, location(path, line) + ": expected 'concept<TAB>id<TAB>tau'");
    }
    ids.push_back(fields[1]);
    taus.push_back(fields[2]);
  }
  if (static_cast<long long>(ids.size()) != n) {
    fail(ErrorCode::kParse, path.string() + ": manifest lists " + std::to_string(ids.size()) +
                                " concepts but n is " + std::to_string(n));
  }
  auto data = open_sidecar(m);
  Matrix projection = read_matrix(data, n, h, dtype);
  Matrix pinv = read_matrix(data, h, n, dtype);
  require_consumed(data, m);
  return ConceptLayer::restore(std::move(ids), std::move(taus),
                               parse_concept_source(m.get("source")),
                               static_cast<int>(m.get_int("slice_index")),
                               m.get_double("pinv_tolerance"), std::move(projection),
                               std::move(pinv));
}

void save_model(const fs::path& path, const Model& model, const std::string& run_manifest) {
  const LayeredEncoder& enc = model.encoder();
  std::ostringstream manifest;
  manifest << "CLMODEL v1\n";
  manifest << "hidden_dim " << enc.hidden_dim() << '\n';
  manifest << "layer_count " << enc.layer_count() << '\n';
  manifest << "seed " << enc.seed() << '\n';
  manifest << "concept_layers " << model.concept_layers().size() << '\n';
  manifest << "dtype f64\n";
  manifest << "data " << sidecar_path(path).filename().string() << '\n';
  if (!run_manifest.empty()) manifest << "run_manifest " << run_manifest << '\n';
  std::ostringstream data(std::ios::binary);
  for (const auto& layer : enc.layers()) {
    write_matrix(data, layer.weight, FloatType::kF64);
    write_vector(data, layer.bias, FloatType::kF64);
  }
  std::size_t index = 0;
  for (const auto& cl : model.concept_layers()) {
    manifest << "layer\t" << index << '\t' << cl.slice_index() << '\t' << cl.size() << '\t'
             << format_double(cl.pinv_tolerance()) << '\t' << concept_source_name(cl.source())
             << '\n';
    for (std::size_t i = 0; i < cl.size(); ++i) {
      check_field_text(cl.ids()[i], "concept id");
      check_field_text(cl.taus()[i], "concept text");
      manifest << "concept\t" << index << '\t' << cl.ids()[i] << '\t' << cl.taus()[i] << '\n';
    }
    write_matrix(data, cl.projection(), FloatType::kF64);
    write_matrix(data, cl.pseudo_inverse(), FloatType::kF64);
    ++index;
  }
  write_file(sidecar_path(path), data.str());
  write_file(path, manifest.str());
}

Model load_model(const fs::path& path) {
  const Manifest m = Manifest::read(path, "CLMODEL");
  const auto h = m.get_int("hidden_dim");
  const auto layer_count = m.get_int("layer_count");
  const auto cl_count = m.get_int("concept_layers");
  if (h < LayeredEncoder::kMinHiddenDim || layer_count < LayeredEncoder::kMinLayerCount ||
      cl_count < 0) {
    fail(ErrorCode::kParse, path.string() + ": invalid model dimensions");
  }
  const FloatType dtype = parse_float_type(m.get("dtype"));

  struct LayerMeta {
    int slice = 0;
    long long n = 0;
    double tolerance = kDefaultPinvTolerance;
    ConceptSource source = ConceptSource::kManual;
    std::vector<std::string> ids, taus;
  };
  std::vector<LayerMeta> metas(static_cast<std::size_t>(cl_count));
  for (const auto& [fields, line] : m.records) {
    const std::string where = location(path, line);
    if (fields.front() == "layer" && fields.size() == 6) {
      const auto idx = parse_int(fields[1], where);
      if (idx < 0 || idx >= cl_count) fail(ErrorCode::kParse, where + ": layer index out of range");
      LayerMeta& meta = metas[static_cast<std::size_t>(idx)];
      meta.slice = static_cast<int>(parse_int(fields[2], where));
      meta.n = parse_int(fields[3], where);
      meta.tolerance = parse_double(fields[4], where);
      meta.source = parse_concept_source(fields[5]);
    } else if (fields.front() == "concept" && fields.size() == 4) {
      const auto idx = parse_int(fields[1], where);
      if (idx < 0 || idx >= cl_count) fail(ErrorCode::kParse, where + ": layer index out of range");
      metas[static_cast<std::size_t>(idx)].ids.push_back(fields[2]);
      metas[static_cast<std::size_t>(idx)].taus.push_back(fields[3]);
    } else {
      fail(ErrorCode::kParse, where + ": unrecognized record '" + fields.front() + "'");
    }
  }

  auto data = open_sidecar(m);
  std::vector<AffineLayer> layers;
  for (long long i = 0; i < layer_count; ++i) {
    Matrix w = read_matrix(data, h, h, dtype);
    Vector b = read_vector(data, h, dtype);
    layers.push_back({std::move(w), std::move(b)});
  }
  Model model(LayeredEncoder(static_cast<int>(h), m.get_uint("seed"), std::move(layers)));
  for (auto& meta : metas) {
    if (meta.n < 1 || static_cast<long long>(meta.ids.size()) != meta.n) {
      fail(ErrorCode::kParse, path.string() + ": concept layer metadata is incomplete");
    }
    Matrix projection = read_matrix(data, meta.n, h, dtype);
    Matrix pinv = read_matrix(data, h, meta.n, dtype);
    model.install(ConceptLayer::restore(std::move(meta.ids), std::move(meta.taus), meta.source,
                                        meta.slice, meta.tolerance, std::move(projection),
                                        std::move(pinv)));
  }
  require_consumed(data, m);
  return model;
}

void save_head(const fs::path& path, const ClassificationHead& head,
               const std::vector<std::string>& class_names, const std::string& run_manifest) {
  std::ostringstream manifest;
  manifest << "CLHEAD v1\n";
  manifest << "input_dim " << head.input_dim() << '\n';
  manifest << "hidden_width " << head.hidden_width() << '\n';
  manifest << "classes " << head.class_count() << '\n';
  manifest << "dtype f64\n";
  manifest << "data " << sidecar_path(path).filename().string() << '\n';
  if (!run_manifest.empty()) manifest << "run_manifest " << run_manifest << '\n';
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    check_field_text(class_names[i], "class name");
    manifest << "class\t" << i << '\t' << class_names[i] << '\n';
  }
  std::ostringstream data(std::ios::binary);
  write_vector(data, head.input_mean(), FloatType::kF64);
  write_vector(data, head.input_scale(), FloatType::kF64);
  write_matrix(data, head.hidden_weight(), FloatType::kF64);
  write_vector(data, head.hidden_bias(), FloatType::kF64);
  write_matrix(data, head.output_weight(), FloatType::kF64);
  write_vector(data, head.output_bias(), FloatType::kF64);
  write_file(sidecar_path(path), data.str());
  write_file(path, manifest.str());
}

LoadedHead load_head(const fs::path& path) {
  const Manifest m = Manifest::read(path, "CLHEAD");
  const auto in = m.get_int("input_dim");
  const auto hidden = m.get_int("hidden_width");
  const auto classes = m.get_int("classes");
  if (in < 1 || hidden < 1 || classes < 2) {
    fail(ErrorCode::kParse, path.string() + ": invalid head dimensions");
  }
  const FloatType dtype = parse_float_type(m.get("dtype"));
  std::vector<std::string> names;
  for (const auto& [fields, line] : m.records) {
    if (fields.front() != "class" || fields.size() != 3) {
      fail(ErrorCode::kParse, location(path, line) + ": expected 'class<TAB>index<TAB>name'");
    }
    names.push_back(fields[2]);
  }
  auto data = open_sidecar(m);
  Vector mean = read_vector(data, in, dtype);
  Vector scale = read_vector(data, in, dtype);
  Matrix w1 = read_matrix(data, hidden, in, dtype);
  Vector b1 = read_vector(data, hidden, dtype);
  Matrix w2 = read_matrix(data, classes, hidden, dtype);
  Vector b2 = read_vector(data, classes, dtype);
  require_consumed(data, m);
  return {ClassificationHead(std::move(mean), std::move(scale), std::move(w1), std::move(b1),
                             std::move(w2), std::move(b2)),
          std::move(names)};
}

EncoderConfig load_encoder_config(const fs::path& path) {
  EncoderConfig config;
  for (const auto& [key, value] : read_key_values(path)) {
    const std::string where = path.string() + " [" + key + "]";
    if (key == "hidden_dim") {
      config.hidden_dim = static_cast<int>(parse_int(value, where));
    } else if (key == "layer_count") {
      config.layer_count = static_cast<int>(parse_int(value, where));
    } else if (key == "seed") {
      config.seed = parse_uint64(value, where);
    } else {
      fail(ErrorCode::kParse, where + ": unknown encoder config key");
    }
  }
  return config;
}

WeldConfig load_weld_config(const fs::path& path) {
  WeldConfig config;
  for (const auto& [key, value] : read_key_values(path)) {
    const std::string where = path.string() + " [" + key + "]";
    if (key == "batch_size") {
      const auto v = parse_int(value, where);
      if (v < 1) fail(ErrorCode::kInvalidConfiguration, where + ": batch_size must be >= 1");
      config.batch_size = static_cast<std::size_t>(v);
    } else if (key == "learning_rate" || key == "lr") {
      config.learning_rate = parse_double(value, where);
    } else if (key == "epochs") {
      config.epochs = static_cast<int>(parse_int(value, where));
    } else if (key == "warmup_steps") {
      config.warmup_steps = static_cast<int>(parse_int(value, where));
    } else if (key == "weight_decay") {
      config.weight_decay = parse_double(value, where);
    } else if (key == "beta1") {
      config.beta1 = parse_double(value, where);
    } else if (key == "beta2") {
      config.beta2 = parse_double(value, where);
    } else if (key == "adam_epsilon") {
      config.adam_epsilon = parse_double(value, where);
    } else if (key == "seed") {
      config.seed = parse_uint64(value, where);
    } else {
      fail(ErrorCode::kParse, where + ": unknown weld config key");
    }
  }
  config.validate();
  return config;
}

std::string format_weld_report(const WeldReport& report) {
  std::ostringstream out;
  for (std::size_t i = 0; i < report.epoch_losses.size(); ++i) {
    out << i << '\t' << format_double(report.epoch_losses[i]) << '\n';
  }
  out << "initial_loss=" << format_double(report.initial_loss)
      << " final_loss=" << format_double(report.final_loss)
      << " epochs=" << report.epoch_losses.size() << '\n';
  return out.str();
}

WeldReport parse_weld_report(const std::string& text) {
  WeldReport report;
  bool summary = false;
  std::size_t number = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = "weld report line " + std::to_string(number);
    if (trim(line).empty()) continue;
    if (line.find('\t') != std::string::npos) {
      const auto fields = split(line, '\t');
      if (fields.size() != 2) fail(ErrorCode::kParse, where + ": expected epoch<TAB>loss");
      const auto epoch = parse_int(fields[0], where);
      if (epoch != static_cast<long long>(report.epoch_losses.size())) {
        fail(ErrorCode::kParse, where + ": epochs out of order");
      }
      report.epoch_losses.push_back(parse_double(fields[1], where));
      continue;
    }
    for (auto token : split(trim(line), ' ')) {
      const auto eq = token.find('=');
      if (eq == std::string_view::npos) fail(ErrorCode::kParse, where + ": expected key=value");
      const auto key = token.substr(0, eq);
      const auto value = token.substr(eq + 1);
      if (key == "initial_loss") {
        report.initial_loss = parse_double(value, where);
      } else if (key == "final_loss") {
        report.final_loss = parse_double(value, where);
      } else if (key == "epochs") {
        if (parse_int(value, where) != static_cast<long long>(report.epoch_losses.size())) {
          fail(ErrorCode::kParse, where + ": epoch count does not match records");
        }
      }
    }
    summary = true;
  }
  if (!summary) fail(ErrorCode::kParse, "weld report has no summary line");
  return report;
}

OntologyGraph load_ontology(const fs::path& edges, const fs::path& concepts) {
  OntologyGraph graph;
  if (!concepts.empty()) {
    for (const auto& [id, tau] : load_concepts(concepts)) graph.add_concept(id, tau);
  }
  for (const auto& line : read_lines(edges)) {
    const auto body = trim(line.text);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split(body, '\t');
    if (fields.size() != 2 || trim(fields[0]).empty() || trim(fields[1]).empty()) {
      fail(ErrorCode::kParse, location(edges, line.number) + ": expected parent<TAB>child");
    }
    try {
      graph.add_edge(std::string(trim(fields[0])), std::string(trim(fields[1])));
    } catch (const Error& e) {
      fail(ErrorCode::kParse, location(edges, line.number) + ": " + e.what());
    }
  }
  return graph;
}

std::vector<std::pair<std::string, std::string>> load_concepts(const fs::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& line : read_lines(path)) {
    const auto body = trim(line.text);
    if (body.empty() || body.front() == '#') continue;
    const auto tab = body.find('\t');
    if (tab == std::string_view::npos) {
      out.emplace_back(std::string(body), std::string(body));
    } else {
      const auto id = trim(body.substr(0, tab));
      auto tau = trim(body.substr(tab + 1));
      if (id.empty()) fail(ErrorCode::kParse, location(path, line.number) + ": empty concept id");
      out.emplace_back(std::string(id), std::string(tau.empty() ? id : tau));
    }
  }
  return out;
}

std::vector<std::string> load_corpus(const fs::path& path) {
  std::vector<std::string> texts;
  for (const auto& line : read_lines(path)) {
    if (!trim(line.text).empty()) texts.push_back(line.text);
  }
  return texts;
}

LabeledTexts load_dataset(const fs::path& path) {
  LabeledTexts data;
  for (const auto& line : read_lines(path)) {
    if (trim(line.text).empty()) continue;
    const auto tab = line.text.find('\t');
    const std::string where = location(path, line.number);
    if (tab == std::string::npos) fail(ErrorCode::kParse, where + ": expected label<TAB>text");
    const auto label = parse_int(std::string_view(line.text).substr(0, tab), where);
    if (label < 0) fail(ErrorCode::kParse, where + ": labels must be non-negative");
    data.labels.push_back(static_cast<int>(label));
    data.texts.push_back(line.text.substr(tab + 1));
  }
  return data;
}

void save_dataset(const fs::path& path, const LabeledTexts& data) {
  std::ostringstream out;
  for (std::size_t i = 0; i < data.texts.size(); ++i) {
    check_field_text(data.texts[i], "dataset text");
    out << data.labels[i] << '\t' << data.texts[i] << '\n';
  }
  write_file(path, out.str());
}

std::string format_predictions(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) fail(ErrorCode::kShape, "prediction/label count mismatch");
  std::ostringstream out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i << '\t' << predictions[i] << '\t' << labels[i] << '\n';
  }
  return out.str();
}

}  // namespace cl
