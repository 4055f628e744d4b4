#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "sharpiv/covariate.hpp"
#include "sharpiv/dgp.hpp"
#include "sharpiv/errors.hpp"
#include "sharpiv/finite_sample.hpp"
#include "sharpiv/sharp_test.hpp"

/* JSON views of every result type.  Serialized fields are pure functions of
 * the inputs and the seed: anything environment-dependent (wall time,
 * thread count, hostnames) belongs in the envelope's meta object so that the
 * result object is byte-identical across reruns and thread counts. */

namespace sharpiv {

using json = nlohmann::ordered_json;

json to_json(const CubeRow& row);
json to_json(const TestResult& res);
json to_json(const PartialLinearFit& plf);
json to_json(const AdjustedTestResult& res);
json to_json(const ConditionalTestResult& res);
json to_json(const JudgeSummary& js);
json to_json(const PairDecision& pd);
json to_json(const FiniteResult& res);
json to_json(const SimReport& rep);

/* {"result": ..., "meta": ...} */
json envelope(json result, json meta);

/* {"error": {"kind": ..., "message": ...}} */
json error_json(const Error& err);
json error_json(const std::string& kind, const std::string& message);

/* Two-space indented dump with a trailing newline. */
std::string render(const json& j);

}  // namespace sharpiv
