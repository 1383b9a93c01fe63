#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "fslqa/image.hpp"
#include "json.hpp"

namespace fslqa {

// JSON has no infinity; +INF travels as the string "inf" (and -INF as "-inf").
inline nlohmann::json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

inline double real_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error("invalid real value in JSON: " + s);
  }
  return j.get<double>();
}

}  // namespace fslqa
