#include "sharpiv/report.hpp"

namespace sharpiv {

json to_json(const CubeRow& row) {
  json j;
  j["qy"] = row.cube.qy;
  j["ky"] = row.cube.ky;
  j["qp"] = row.cube.qp;
  j["kp1"] = row.cube.kp1;
  j["kp2"] = row.cube.kp2;
  j["y"] = row.cube.y;
  j["y_hi"] = row.cube.y_hi;
  j["p1"] = row.cube.p1;
  j["p1_hi"] = row.cube.p1_hi;
  j["p2"] = row.cube.p2;
  j["p2_hi"] = row.cube.p2_hi;
  j["omega"] = row.cube.omega;
  j["d"] = row.d;
  j["nu"] = row.nu;
  j["sigma"] = row.sigma;
  j["tstd"] = row.tstd;
  j["gms"] = row.gms;
  return j;
}

json to_json(const TestResult& res) {
  json j;
  j["kind"] = "sharp";
  j["reject"] = res.reject;
  j["statistic"] = res.statistic;
  j["critical_value"] = res.critical_value;
  j["p_value"] = res.p_value;
  j["n"] = res.n;
  j["alpha"] = res.alpha;
  j["B"] = res.B;
  j["QY"] = res.QY;
  j["QP"] = res.QP;
  j["grid_count"] = res.grid_count;
  j["eps"] = res.eps;
  j["eta"] = res.eta;
  j["a_n"] = res.a_n;
  j["b_n"] = res.b_n;
  j["pscore"] = pscore_method_name(res.pscore);
  j["weights"] = weight_dist_name(res.weights);
  j["normalize"] = normalize_mode_name(res.normalize_resolved);
  j["seed"] = res.seed;
  j["degenerate_redraws"] = res.degenerate_redraws;
  json cubes = json::array();
  for (const CubeRow& row : res.cubes) cubes.push_back(to_json(row));
  j["cubes"] = std::move(cubes);
  return j;
}

json to_json(const PartialLinearFit& plf) {
  json j;
  j["beta1"] = plf.beta1;
  j["beta0"] = plf.beta0;
  j["poly_degree"] = plf.poly_degree;
  j["n1"] = plf.n1;
  j["n0"] = plf.n0;
  j["r2_y1"] = plf.r2_y1;
  j["r2_y0"] = plf.r2_y0;
  j["r2_x1"] = plf.r2_x1;
  j["r2_x0"] = plf.r2_x0;
  return j;
}

json to_json(const AdjustedTestResult& res) {
  json j;
  j["kind"] = "sharp_adjusted";
  j["test"] = to_json(res.test);
  j["partial_linear"] = to_json(res.partial_linear);
  json norm;
  norm["mode"] = normalize_mode_name(res.normalize_mode);
  norm["a"] = res.norm_a;
  norm["b"] = res.norm_b;
  norm["mean"] = res.norm_mean;
  norm["sd"] = res.norm_sd;
  j["normalization"] = std::move(norm);
  return j;
}

json to_json(const ConditionalTestResult& res) {
  json j;
  j["kind"] = "sharp_conditional";
  j["reject"] = res.reject;
  j["n_tested"] = res.n_tested;
  j["alpha_per_cell"] = res.alpha_per_cell;
  json cells = json::array();
  for (const CellResult& cell : res.cells) {
    json c;
    c["label"] = cell.label;
    c["n"] = cell.n;
    c["skipped"] = cell.skipped;
    if (cell.skipped) {
      c["skip_reason"] = cell.skip_reason;
    } else if (cell.result.has_value()) {
      c["result"] = to_json(*cell.result);
    }
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j;
}

json to_json(const JudgeSummary& js) {
  json j;
  j["judge"] = js.judge;
  j["n"] = js.n;
  j["p_hat"] = js.p_hat;
  j["q1_hat"] = js.q1_hat;
  j["q0_hat"] = js.q0_hat;
  return j;
}

json to_json(const PairDecision& pd) {
  json j;
  j["j"] = pd.j;
  j["jp"] = pd.jp;
  j["delta_p"] = pd.delta_p;
  j["delta_q1"] = pd.delta_q1;
  j["delta_q0"] = pd.delta_q0;
  j["c_hat"] = pd.c_hat;
  j["cs_p"] = json::array({pd.cs_p_lo, pd.cs_p_hi});
  j["cs_q1"] = json::array({pd.cs_q1_lo, pd.cs_q1_hi});
  j["cs_q0"] = json::array({pd.cs_q0_lo, pd.cs_q0_hi});
  j["rejected"] = pd.rejected;
  j["events"] = pd.events;
  return j;
}

json to_json(const FiniteResult& res) {
  json j;
  j["kind"] = "finite";
  j["reject"] = res.reject;
  j["alpha"] = res.alpha;
  j["alpha_pair"] = res.alpha_pair;
  j["alpha_width"] = res.alpha_width;
  j["n"] = res.n;
  j["n_judges"] = res.n_judges;
  j["b_sim"] = res.b_sim;
  j["seed"] = res.seed;
  json judges = json::array();
  for (const JudgeSummary& js : res.judges) judges.push_back(to_json(js));
  j["judges"] = std::move(judges);
  json pairs = json::array();
  for (const PairDecision& pd : res.pairs) pairs.push_back(to_json(pd));
  j["pairs"] = std::move(pairs);
  return j;
}

json to_json(const SimReport& rep) {
  json j;
  j["kind"] = "simulation";
  j["reps"] = rep.reps;
  j["completed"] = rep.completed;
  j["rejections"] = rep.rejections;
  j["rejection_rate"] = rep.rejection_rate;
  j["seed"] = rep.seed;
  json decisions = json::array();
  for (std::int8_t v : rep.decisions) decisions.push_back(static_cast<int>(v));
  j["decisions"] = std::move(decisions);
  json failures = json::array();
  for (const RepFailure& f : rep.failures) {
    json fj;
    fj["rep"] = f.rep;
    fj["kind"] = f.kind;
    fj["message"] = f.message;
    failures.push_back(std::move(fj));
  }
  j["failures"] = std::move(failures);
  return j;
}

json envelope(json result, json meta) {
  json j;
  j["result"] = std::move(result);
  j["meta"] = std::move(meta);
  return j;
}

json error_json(const Error& err) {
  return error_json(err.kind_name(), err.what());
}

json error_json(const std::string& kind, const std::string& message) {
  json inner;
  inner["kind"] = kind;
  inner["message"] = message;
  json j;
  j["error"] = std::move(inner);
  return j;
}

std::string render(const json& j) { return j.dump(2) + "\n"; }

}  // namespace sharpiv
