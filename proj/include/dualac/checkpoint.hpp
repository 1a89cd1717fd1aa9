#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualac/mdp.hpp"

namespace dualac {

/// A dense array with an explicit shape; data is row-major.
struct NamedArray {
  std::vector<long> shape;
  std::vector<double> data;
};

/**
 * Flat collection of named arrays plus string metadata. Serialized as JSON:
 *   {"meta": {...}, "arrays": {"name": {"shape": [...], "data": [...]}, ...}}
 * Doubles are written with round-trip precision, so save/load is lossless.
 */
struct NamedArrays {
  std::map<std::string, std::string> meta;
  std::map<std::string, NamedArray> arrays;

  void put(const std::string& name, const Vector& v);
  void put(const std::string& name, const Matrix& m);
  void put_scalar(const std::string& name, double x);

  Vector vector(const std::string& name) const;
  Matrix matrix(const std::string& name) const;
  double scalar(const std::string& name) const;
  bool contains(const std::string& name) const { return arrays.count(name) != 0; }

  /// Copies every array of `other` in under `prefix` + name.
  void merge(const NamedArrays& other, const std::string& prefix);
  /// Arrays whose names start with `prefix`, with the prefix stripped.
  NamedArrays subset(const std::string& prefix) const;

  nlohmann::json to_json() const;
  static NamedArrays from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static NamedArrays load(const std::filesystem::path& path);
};

}  // namespace dualac
