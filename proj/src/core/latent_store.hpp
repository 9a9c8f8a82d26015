#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "core/encoder.hpp"

namespace cl {

enum class FloatType { kF32, kF64 };

const char* float_type_name(FloatType type) noexcept;
FloatType parse_float_type(const std::string& name);
std::size_t float_type_size(FloatType type) noexcept;

// Little-endian, row-major float blocks.
void write_matrix(std::ostream& out, const Matrix& m, FloatType type);
Matrix read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, FloatType type);
void write_vector(std::ostream& out, const Vector& v, FloatType type);
Vector read_vector(std::istream& in, Eigen::Index size, FloatType type);

// Externally computed per-layer sentence vectors keyed by text id.
//
// Text form:   CLSTORE v1 <hidden_dim> <layer_count>
//              <text_id>\t<layer_index>\t<comma-separated floats>
// Binary form: same header; records are <text_id>\t<layer_index>\t@<row>
//              and rows live in "<index path>.bin" as little-endian f32.
class LatentStore {
 public:
  LatentStore(int hidden_dim, int layer_count);

  int hidden_dim() const noexcept { return hidden_dim_; }
  int layer_count() const noexcept { return layer_count_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  std::vector<std::string> ids() const;

  void put(const std::string& id, int layer, const Vector& vector);
  // Throws unknown_concept when the id or layer is missing.
  const Vector& get(const std::string& id, int layer) const;

  // Throws parse when an entry lacks a layer.
  void check_complete() const;

  void save_text(const std::filesystem::path& path) const;
  void save_binary(const std::filesystem::path& index_path) const;
  // Detects the text or binary record form per line.
  static LatentStore load(const std::filesystem::path& path);

 private:
  int hidden_dim_;
  int layer_count_;
  std::map<std::string, std::vector<Vector>> entries_;
  std::vector<std::string> order_;
};

}  // namespace cl
