#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssg/image.hpp"
#include "ssg/matrix.hpp"
#include "ssg/random.hpp"

namespace ssg {

struct EmbeddingVector {
  std::vector<double> values;
  int dim() const { return static_cast<int>(values.size()); }
};

// Vision/text encoder pair the pipeline consumes. Implementations must be
// deterministic: same input, bit-identical output within one process.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual bool has_vision() const = 0;
  virtual bool has_text() const = 0;
  virtual EmbeddingVector embed_image(const Image& image) const = 0;
  virtual EmbeddingVector embed_text(const std::string& text) const = 0;
};

// Unit-normalized pseudo-random vector seeded by a stable 64-bit hash of the
// seed string. Content-sensitive and reproducible across runs.
inline EmbeddingVector synthetic_embed(const std::string& seed_string, int dim) {
  if (dim <= 0) throw std::invalid_argument("synthetic_embed: dim must be positive");
  Rng rng(fnv1a64(seed_string));
  EmbeddingVector v;
  v.values.resize(dim);
  double norm_sq = 0.0;
  for (double& x : v.values) {
    x = rng.next_gaussian();
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) throw std::runtime_error("synthetic_embed: degenerate norm");
  for (double& x : v.values) x /= norm;
  return v;
}

// Test backend: hashes image bytes / text codepoints, then draws a
// unit-normalized vector. Stateless, so safe for concurrent calls.
class SyntheticBackend final : public EmbeddingBackend {
 public:
  explicit SyntheticBackend(int dim = 512) : dim_(dim) {
    if (dim <= 0) throw std::invalid_argument("SyntheticBackend: dim must be positive");
  }
  std::string name() const override { return "synthetic"; }
  int dim() const override { return dim_; }
  bool has_vision() const override { return true; }
  bool has_text() const override { return true; }

  EmbeddingVector embed_image(const Image& image) const override {
    if (image.empty()) throw std::invalid_argument("embed_image: malformed image");
    std::ostringstream key;
    key << "v1:image:" << image_content_hash(image);
    return synthetic_embed(key.str(), dim_);
  }

  EmbeddingVector embed_text(const std::string& text) const override {
    if (text.empty()) throw std::invalid_argument("embed_text: EMPTY_TEXT");
    return synthetic_embed("v1:text:" + text, dim_);  // case preserved as-is
  }

 private:
  int dim_;
};

// Adapter seam for a pretrained joint vision-language model. Embeddings are
// exported offline into a JSON store; images are keyed by content hash and
// texts by the exact string. Vectors pass through unchanged (no
// re-normalization).
class PrecomputedBackend final : public EmbeddingBackend {
 public:
  explicit PrecomputedBackend(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding store: " + path);
    nlohmann::json j;
    in >> j;
    dim_ = j.at("dim").get<int>();
    if (dim_ <= 0) throw std::runtime_error("embedding store: bad dim");
    name_ = j.value("name", std::string("external"));
    if (j.contains("images"))
      for (auto& [k, v] : j.at("images").items()) images_[k] = parse_vec(v);
    if (j.contains("texts"))
      for (auto& [k, v] : j.at("texts").items()) texts_[k] = parse_vec(v);
  }

  std::string name() const override { return name_; }
  int dim() const override { return dim_; }
  bool has_vision() const override { return !images_.empty(); }
  bool has_text() const override { return !texts_.empty(); }

  EmbeddingVector embed_image(const Image& image) const override {
    if (!has_vision()) throw std::runtime_error("backend has no vision capability");
    if (image.empty()) throw std::invalid_argument("embed_image: malformed image");
    const std::string key = std::to_string(image_content_hash(image));
    auto it = images_.find(key);
    if (it == images_.end())
      throw std::runtime_error("embedding store: no vector for image hash " + key);
    return it->second;
  }

  EmbeddingVector embed_text(const std::string& text) const override {
    if (!has_text()) throw std::runtime_error("backend has no text capability");
    if (text.empty()) throw std::invalid_argument("embed_text: EMPTY_TEXT");
    auto it = texts_.find(text);
    if (it == texts_.end())
      throw std::runtime_error("embedding store: no vector for text \"" + text + "\"");
    return it->second;
  }

 private:
  EmbeddingVector parse_vec(const nlohmann::json& v) const {
    EmbeddingVector e;
    e.values = v.get<std::vector<double>>();
    if (e.dim() != dim_) throw std::runtime_error("embedding store: vector dim mismatch");
    return e;
  }

  int dim_ = 0;
  std::string name_;
  std::map<std::string, EmbeddingVector> images_;
  std::map<std::string, EmbeddingVector> texts_;
};

// Backend selection: "synthetic" or "external:<store.json>".
inline std::unique_ptr<EmbeddingBackend> make_backend(const std::string& spec, int dim) {
  if (spec == "synthetic") return std::make_unique<SyntheticBackend>(dim);
  const std::string prefix = "external:";
  if (spec.rfind(prefix, 0) == 0) {
    auto b = std::make_unique<PrecomputedBackend>(spec.substr(prefix.size()));
    if (b->dim() != dim)
      throw std::runtime_error("backend dim " + std::to_string(b->dim()) +
                               " does not match requested " + std::to_string(dim));
    return b;
  }
  throw std::invalid_argument("unknown backend spec: " + spec);
}

inline Matrix to_row(const EmbeddingVector& v) { return row_vector(v.values); }

}  // namespace ssg
