#include "core/latent_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "core/error.hpp"
#include "core/text_io.hpp"

namespace cl {

namespace {

constexpr const char* kStoreMagic = "CLSTORE";

void put_le(std::ostream& out, std::uint64_t bits, std::size_t bytes) {
  char buf[8];
  for (std::size_t i = 0; i < bytes; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  out.write(buf, static_cast<std::streamsize>(bytes));
}

std::uint64_t get_le(std::istream& in, std::size_t bytes) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(bytes));
  if (!in) fail(ErrorCode::kParse, "binary data ended early");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < bytes; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return bits;
}

void write_scalar(std::ostream& out, double value, FloatType type) {
  if (type == FloatType::kF32) {
    put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)), 4);
  } else {
    put_le(out, std::bit_cast<std::uint64_t>(value), 8);
  }
}

double read_scalar(std::istream& in, FloatType type) {
  if (type == FloatType::kF32) {
    return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, 4))));
  }
  return std::bit_cast<double>(get_le(in, 8));
}

struct Header {
  int hidden_dim;
  int layer_count;
};

Header parse_header(const Line& line, const std::filesystem::path& path) {
  std::istringstream in(line.text);
  std::string magic, version;
  long long h = 0, l = 0;
  if (!(in >> magic >> version >> h >> l) || magic != kStoreMagic || version != "v1") {
    fail(ErrorCode::kParse, location(path, line.number) +
                                ": expected 'CLSTORE v1 <hidden_dim> <layer_count>'");
  }
  if (h < 1 || l < 1) fail(ErrorCode::kParse, location(path, line.number) + ": bad dimensions");
  return {static_cast<int>(h), static_cast<int>(l)};
}

}  // namespace

const char* float_type_name(FloatType type) noexcept {
  return type == FloatType::kF32 ? "f32" : "f64";
}

FloatType parse_float_type(const std::string& name) {
  if (name == "f32") return FloatType::kF32;
  if (name == "f64") return FloatType::kF64;
  fail(ErrorCode::kParse, "unknown float type '" + name + "'");
}

std::size_t float_type_size(FloatType type) noexcept { return type == FloatType::kF32 ? 4 : 8; }

void write_matrix(std::ostream& out, const Matrix& m, FloatType type) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_scalar(out, m(r, c), type);
}

Matrix read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, FloatType type) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_scalar(in, type);
  return m;
}

void write_vector(std::ostream& out, const Vector& v, FloatType type) {
  for (Eigen::Index i = 0; i < v.size(); ++i) write_scalar(out, v(i), type);
}

Vector read_vector(std::istream& in, Eigen::Index size, FloatType type) {
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = read_scalar(in, type);
  return v;
}

LatentStore::LatentStore(int hidden_dim, int layer_count)
    : hidden_dim_(hidden_dim), layer_count_(layer_count) {
  if (hidden_dim < 1 || layer_count < 1) {
    fail(ErrorCode::kInvalidConfiguration, "latent store needs positive dimensions");
  }
}

std::vector<std::string> LatentStore::ids() const { return order_; }

void LatentStore::put(const std::string& id, int layer, const Vector& vector) {
  if (id.empty() || id.find('\t') != std::string::npos || id.find('\n') != std::string::npos) {
    fail(ErrorCode::kInvalidArgument, "latent store ids must be nonempty and tab-free");
  }
  if (layer < 0 || layer >= layer_count_) {
    fail(ErrorCode::kShape, "layer index " + std::to_string(layer) + " out of range");
  }
  if (vector.size() != hidden_dim_) {
    fail(ErrorCode::kShape, "latent for '" + id + "' has dimension " +
                                std::to_string(vector.size()) + ", expected " +
                                std::to_string(hidden_dim_));
  }
  auto [it, inserted] = entries_.try_emplace(id);
  if (inserted) {
    it->second.resize(static_cast<std::size_t>(layer_count_));
    order_.push_back(id);
  }
  it->second[static_cast<std::size_t>(layer)] = vector;
}

const Vector& LatentStore::get(const std::string& id, int layer) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) fail(ErrorCode::kUnknownConcept, "no latent stored for '" + id + "'");
  if (layer < 0 || layer >= layer_count_ || it->second[static_cast<std::size_t>(layer)].size() == 0) {
    fail(ErrorCode::kUnknownConcept,
         "no latent stored for '" + id + "' at layer " + std::to_string(layer));
  }
  return it->second[static_cast<std::size_t>(layer)];
}

void LatentStore::check_complete() const {
  for (const auto& [id, layers] : entries_) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].size() == 0) {
        fail(ErrorCode::kParse, "entry '" + id + "' has no vector for layer " + std::to_string(l));
      }
    }
  }
}

void LatentStore::save_text(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << kStoreMagic << " v1 " << hidden_dim_ << ' ' << layer_count_ << '\n';
  for (const auto& id : order_) {
    const auto& layers = entries_.at(id);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].size() == 0) continue;
      out << id << '\t' << l << '\t';
      for (Eigen::Index i = 0; i < layers[l].size(); ++i) {
        if (i > 0) out << ',';
        out << format_double(layers[l](i));
      }
      out << '\n';
    }
  }
  write_file(path, out.str());
}

void LatentStore::save_binary(const std::filesystem::path& index_path) const {
  std::ostringstream index;
  std::ostringstream rows(std::ios::binary);
  index << kStoreMagic << " v1 " << hidden_dim_ << ' ' << layer_count_ << '\n';
  std::size_t row = 0;
  for (const auto& id : order_) {
    const auto& layers = entries_.at(id);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].size() == 0) continue;
      index << id << '\t' << l << "\t@" << row++ << '\n';
      write_vector(rows, layers[l], FloatType::kF32);
    }
  }
  write_file(index_path, index.str());
  write_file(index_path.string() + ".bin", rows.str());
}

LatentStore LatentStore::load(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) fail(ErrorCode::kParse, path.string() + ": empty latent store");
  const Header header = parse_header(lines.front(), path);
  LatentStore store(header.hidden_dim, header.layer_count);

  std::string sidecar;
  bool sidecar_loaded = false;
  const std::size_t row_bytes = static_cast<std::size_t>(header.hidden_dim) * 4;

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& line = lines[i];
    if (trim(line.text).empty()) continue;
    const std::string where = location(path, line.number);
    const auto fields = split(line.text, '\t');
    if (fields.size() != 3) fail(ErrorCode::kParse, where + ": expected 3 tab-separated fields");
    const std::string id(fields[0]);
    const int layer = static_cast<int>(parse_int(fields[1], where));
    Vector v(header.hidden_dim);
    if (!fields[2].empty() && fields[2].front() == '@') {
      if (!sidecar_loaded) {
        sidecar = read_file(path.string() + ".bin");
        sidecar_loaded = true;
      }
      const auto row = parse_uint64(fields[2].substr(1), where);
      if ((row + 1) * row_bytes > sidecar.size()) {
        fail(ErrorCode::kParse, where + ": row offset beyond end of binary sidecar");
      }
      std::istringstream in(sidecar.substr(row * row_bytes, row_bytes), std::ios::binary);
      v = read_vector(in, header.hidden_dim, FloatType::kF32);
    } else {
      const auto values = split(fields[2], ',');
      if (static_cast<int>(values.size()) != header.hidden_dim) {
        fail(ErrorCode::kParse, where + ": expected " + std::to_string(header.hidden_dim) +
                                    " values, got " + std::to_string(values.size()));
      }
      for (std::size_t k = 0; k < values.size(); ++k) {
        v(static_cast<Eigen::Index>(k)) = parse_double(values[k], where);
      }
    }
    try {
      store.put(id, layer, v);
    } catch (const Error& e) {
      fail(ErrorCode::kParse, where + ": " + e.what());
    }
  }
  store.check_complete();
  return store;
}

}  // namespace cl
