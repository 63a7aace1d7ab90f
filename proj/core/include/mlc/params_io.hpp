#pragma once

#include "mlc/param_vector.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mlc {

// Text format, one file per parameter set:
//
//   MLC-PARAMS 1
//   meta <count>
//   <key> <value>            (config echo, one pair per line)
//   segments <count>
//   segment <name> <rank> <dim...>
//   <all values of the segment, space-separated, %.17g>
//
// Values round-trip bit-exactly through the %.17g encoding.

using ParamsMeta = std::vector<std::pair<std::string, std::string>>;

struct LoadedParams {
    ParamVector params;
    ParamsMeta meta;
};

void save_params(const std::string& path, const ParamVector& params, const ParamsMeta& meta);
LoadedParams load_params(const std::string& path);

} // namespace mlc
