#include "dualac/checkpoint.hpp"

#include <fstream>

#include "dualac/errors.hpp"

namespace dualac {

void NamedArrays::put(const std::string& name, const Vector& v) {
  arrays[name] = NamedArray{{static_cast<long>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

void NamedArrays::put(const std::string& name, const Matrix& m) {
  NamedArray a{{static_cast<long>(m.rows()), static_cast<long>(m.cols())}, {}};
  a.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.data.push_back(m(r, c));
  }
  arrays[name] = std::move(a);
}

void NamedArrays::put_scalar(const std::string& name, double x) { arrays[name] = NamedArray{{}, {x}}; }

Vector NamedArrays::vector(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw InvalidArgument("checkpoint has no array named " + name);
  return Eigen::Map<const Vector>(it->second.data.data(), static_cast<Eigen::Index>(it->second.data.size()));
}

Matrix NamedArrays::matrix(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw InvalidArgument("checkpoint has no array named " + name);
  const auto& a = it->second;
  if (a.shape.size() != 2) throw InvalidArgument("checkpoint array " + name + " is not a matrix");
  Matrix m(a.shape[0], a.shape[1]);
  if (static_cast<std::size_t>(m.size()) != a.data.size()) throw InvalidArgument("checkpoint array " + name + " has inconsistent shape");
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a.data[i++];
  }
  return m;
}

double NamedArrays::scalar(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end() || it->second.data.size() != 1) throw InvalidArgument("checkpoint has no scalar named " + name);
  return it->second.data.front();
}

void NamedArrays::merge(const NamedArrays& other, const std::string& prefix) {
  for (const auto& [name, a] : other.arrays) arrays[prefix + name] = a;
  for (const auto& [key, value] : other.meta) meta[prefix + key] = value;
}

NamedArrays NamedArrays::subset(const std::string& prefix) const {
  NamedArrays out;
  for (const auto& [name, a] : arrays) {
    if (name.rfind(prefix, 0) == 0) out.arrays[name.substr(prefix.size())] = a;
  }
  for (const auto& [key, value] : meta) {
    if (key.rfind(prefix, 0) == 0) out.meta[key.substr(prefix.size())] = value;
  }
  return out;
}

nlohmann::json NamedArrays::to_json() const {
  nlohmann::json arr = nlohmann::json::object();
  for (const auto& [name, a] : arrays) arr[name] = {{"shape", a.shape}, {"data", a.data}};
  return {{"meta", meta}, {"arrays", arr}};
}

NamedArrays NamedArrays::from_json(const nlohmann::json& j) {
  NamedArrays out;
  try {
    if (j.contains("meta")) out.meta = j.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& [name, a] : j.at("arrays").items()) {
      out.arrays[name] = NamedArray{a.at("shape").get<std::vector<long>>(), a.at("data").get<std::vector<double>>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed checkpoint: ") + e.what());
  }
  return out;
}

void NamedArrays::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write checkpoint " + path.string());
  out << to_json().dump() << '\n';
}

NamedArrays NamedArrays::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("cannot parse checkpoint " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace dualac
