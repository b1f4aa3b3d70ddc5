#pragma once

// Schema helpers shared by the JSON readers. Every failure is a ParseError
// carrying the JSON pointer of the offending value.

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmp/dense.hpp"

namespace gmp::json_util {

const nlohmann::json& require_field(const nlohmann::json& obj, const std::string& ptr, const char* key);
const nlohmann::json& require_array(const nlohmann::json& v, const std::string& ptr);
std::size_t require_index(const nlohmann::json& v, const std::string& ptr);
double require_number(const nlohmann::json& v, const std::string& ptr);
std::vector<double> read_vector(const nlohmann::json& v, const std::string& ptr);
/// Rectangular array of rows. An empty array yields 0 x 0, or rows_if_empty x 0.
Mat read_matrix(const nlohmann::json& v, const std::string& ptr, std::size_t rows_if_empty = 0);

}  // namespace gmp::json_util
