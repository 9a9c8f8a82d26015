#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "core/evaluation.hpp"
#include "core/model.hpp"

namespace cl {

struct ServiceBundle {
  Model model;
  ClassificationHead head;
  std::vector<std::string> class_names;
  int slice_index = 0;  // concept layer exposed by the API; 0 selects the first
  std::size_t top_k = 10;
};

struct HttpResult {
  int status = 200;
  std::string body;  // JSON
};

// Inference endpoints over an immutable loaded bundle. Handlers are pure
// functions of (request, bundle) and safe to call concurrently.
class Service {
 public:
  Service();
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Validates and publishes the bundle; throws on a head/model mismatch.
  void load(ServiceBundle bundle);
  bool loaded() const;

  HttpResult health() const;
  HttpResult concepts() const;
  HttpResult project(const std::string& request_body) const;
  HttpResult classify(const std::string& request_body) const;

  // Binds host:port (port 0 picks a free port) and returns the bound port.
  // Throws io when the port is unavailable.
  int bind(const std::string& host, int port);
  // Serves until stop(); requires a prior bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::shared_ptr<const ServiceBundle> bundle() const;

  mutable std::mutex mutex_;
  std::shared_ptr<const ServiceBundle> bundle_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cl
