#include "gmp/json_util.hpp"

#include "gmp/error.hpp"

namespace gmp::json_util {

using nlohmann::json;

const json& require_field(const json& obj, const std::string& ptr, const char* key) {
  if (!obj.is_object()) throw ParseError(ptr, "expected object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(ptr + "/" + key, "missing required field");
  return *it;
}

const json& require_array(const json& v, const std::string& ptr) {
  if (!v.is_array()) throw ParseError(ptr, "expected array");
  return v;
}

std::size_t require_index(const json& v, const std::string& ptr) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ParseError(ptr, "expected non-negative integer");
  return v.get<std::size_t>();
}

double require_number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw ParseError(ptr, "expected number");
  return v.get<double>();
}

std::vector<double> read_vector(const json& v, const std::string& ptr) {
  require_array(v, ptr);
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(require_number(v[i], ptr + "/" + std::to_string(i)));
  return out;
}

Mat read_matrix(const json& v, const std::string& ptr, std::size_t rows_if_empty) {
  require_array(v, ptr);
  if (v.empty()) return Mat(rows_if_empty, 0);
  std::vector<std::vector<double>> rows;
  rows.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = ptr + "/" + std::to_string(i);
    rows.push_back(read_vector(v[i], p));
    if (rows.back().size() != rows.front().size()) throw ParseError(p, "row length differs from row 0");
  }
  if (rows.front().empty()) return Mat(rows.size(), 0);
  return Mat::from_rows(rows);
}

}  // namespace gmp::json_util
