#include "core/service.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cl {

namespace {

using nlohmann::json;

HttpResult error_result(int status, const std::string& code, const std::string& message) {
  return {status, json{{"code", code}, {"message", message}}.dump()};
}

HttpResult from_error(const Error& e) {
  const int status = e.code() == ErrorCode::kInternal ? 500 : 400;
  return error_result(status, error_code_name(e.code()), e.what());
}

HttpResult not_ready() { return error_result(503, "not_ready", "no model loaded"); }

json parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  }
  return j;
}

std::string require_text(const json& j) {
  const auto it = j.find("text");
  if (it == j.end() || !it->is_string()) fail(ErrorCode::kInvalidArgument, "'text' must be a string");
  return it->get<std::string>();
}

std::size_t requested_k(const json& j, const ServiceBundle& b, const ConceptLayer& layer) {
  std::size_t k = std::min(b.top_k, layer.size());
  if (const auto it = j.find("k"); it != j.end()) {
    if (!it->is_number_integer() || it->get<long long>() < 1) {
      fail(ErrorCode::kInvalidArgument, "'k' must be a positive integer");
    }
    k = std::min(static_cast<std::size_t>(it->get<long long>()), layer.size());
  }
  return std::max<std::size_t>(k, 1);
}

const ConceptLayer& exposed_layer(const ServiceBundle& b) {
  const ConceptLayer* layer = b.model.layer_at_slice(b.slice_index);
  if (layer == nullptr) fail(ErrorCode::kInternal, "exposed concept layer is missing");
  return *layer;
}

json top_k_json(const ConceptLayer& layer, const ConceptualVector& cv, std::size_t k) {
  json out = json::array();
  for (const auto& s : interpret(layer, cv, k)) {
    out.push_back({{"id", s.id}, {"score", s.score},
                   {"index", *layer.index_of(s.id)}});
  }
  return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

InterventionSpec parse_interventions(const json& j) {
  InterventionSpec spec;
  const auto it = j.find("interventions");
  if (it == j.end() || it->is_null()) return spec;
  if (!it->is_array()) fail(ErrorCode::kInvalidArgument, "'interventions' must be an array");
  for (const auto& item : *it) {
    if (!item.is_object() || !item.contains("concept_id") || !item["concept_id"].is_string() ||
        !item.contains("factor") || !item["factor"].is_number()) {
      fail(ErrorCode::kInvalidArgument,
           "each intervention needs a string 'concept_id' and a numeric 'factor'");
    }
    spec.set(item["concept_id"].get<std::string>(), item["factor"].get<double>());
  }
  return spec;
}

}  // namespace

struct Service::Impl {
  httplib::Server server;
  bool bound = false;
};

Service::Service() : impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->server;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  svr.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, health());
  });
  svr.Get("/concepts", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, concepts());
  });
  svr.Post("/project", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, project(req.body));
  });
  svr.Post("/classify", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, classify(req.body));
  });
  svr.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

Service::~Service() { stop(); }

void Service::load(ServiceBundle bundle) {
  if (!bundle.model.is_conceptualized()) {
    fail(ErrorCode::kInvalidArgument, "service needs a model with a concept layer");
  }
  if (bundle.slice_index == 0) bundle.slice_index = bundle.model.first_slice();
  if (bundle.model.layer_at_slice(bundle.slice_index) == nullptr) {
    fail(ErrorCode::kInvalidArgument,
         "model has no concept layer at slice " + std::to_string(bundle.slice_index));
  }
  if (bundle.head.input_dim() != bundle.model.hidden_dim()) {
    fail(ErrorCode::kShape, "head input dimension does not match model output dimension");
  }
  if (bundle.top_k < 1) bundle.top_k = 1;
  auto shared = std::make_shared<const ServiceBundle>(std::move(bundle));
  std::lock_guard lock(mutex_);
  bundle_ = std::move(shared);
}

bool Service::loaded() const { return bundle() != nullptr; }

std::shared_ptr<const ServiceBundle> Service::bundle() const {
  std::lock_guard lock(mutex_);
  return bundle_;
}

HttpResult Service::health() const {
  if (!loaded()) return not_ready();
  return {200, json{{"status", "ok"}}.dump()};
}

HttpResult Service::concepts() const {
  const auto b = bundle();
  if (!b) return not_ready();
  const ConceptLayer& layer = exposed_layer(*b);
  json list = json::array();
  for (std::size_t i = 0; i < layer.size(); ++i) {
    list.push_back({{"index", i}, {"id", layer.ids()[i]}, {"tau", layer.taus()[i]}});
  }
  return {200, json{{"slice_index", layer.slice_index()}, {"concepts", list}}.dump()};
}

HttpResult Service::project(const std::string& request_body) const {
  const auto b = bundle();
  if (!b) return not_ready();
  try {
    const json req = parse_body(request_body);
    const std::string text = require_text(req);
    const ConceptLayer& layer = exposed_layer(*b);
    const ConceptualVector cv =
        cl::project(layer, b->model.slice_at(layer.slice_index()).encode_prefix(text));
    const Vector scores = cosine_scores(cv);
    json out{{"scores", to_std(scores)},
             {"norm", cv.norm_of_source},
             {"top_k", top_k_json(layer, cv, requested_k(req, *b, layer))}};
    return {200, out.dump()};
  } catch (const Error& e) {
    return from_error(e);
  }
}

HttpResult Service::classify(const std::string& request_body) const {
  const auto b = bundle();
  if (!b) return not_ready();
  try {
    const json req = parse_body(request_body);
    const std::string text = require_text(req);
    const InterventionSpec spec = parse_interventions(req);
    const ConceptLayer& layer = exposed_layer(*b);
    (void)layer.resolve(spec);

    const ConceptualVector before =
        cl::project(layer, b->model.slice_at(layer.slice_index()).encode_prefix(text));
    const Vector before_scores = cosine_scores(before);
    const Vector after_scores = cosine_scores(intervene(layer, before, spec));

    const InterventionPlan plan{{layer.slice_index(), spec}};
    const Vector output = b->model.forward(text, &plan);
    const Vector probs = b->head.probabilities(output);
    Eigen::Index label = 0;
    probs.maxCoeff(&label);

    json out{{"label", static_cast<int>(label)},
             {"probabilities", to_std(probs)},
             {"concepts_before", to_std(before_scores)},
             {"concepts_after", to_std(after_scores)},
             {"top_k", top_k_json(layer, before, requested_k(req, *b, layer))}};
    if (static_cast<std::size_t>(label) < b->class_names.size()) {
      out["label_name"] = b->class_names[static_cast<std::size_t>(label)];
    }
    return {200, out.dump()};
  } catch (const Error& e) {
    return from_error(e);
  }
}

int Service::bind(const std::string& host, int port) {
  int bound = 0;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) fail(ErrorCode::kIo, "could not bind any port on " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      fail(ErrorCode::kIo, "port " + std::to_string(port) + " on " + host + " is unavailable");
    }
    bound = port;
  }
  impl_->bound = true;
  return bound;
}

void Service::listen() {
  if (!impl_->bound) fail(ErrorCode::kInvalidArgument, "service is not bound to a port");
  impl_->server.listen_after_bind();
}

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace cl
