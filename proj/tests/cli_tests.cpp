#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sharpiv/dataset.hpp"
#include "sharpiv/report.hpp"
#include "test_util.hpp"

using sharpiv::json;
using testutil::JudgeBlock;
using testutil::make_blocks;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

const std::string& workdir() {
  static const std::string dir = [] {
    char tmpl[] = "/tmp/sharpiv_cli_XXXXXX";
    const char* d = mkdtemp(tmpl);
    REQUIRE(d != nullptr);
    return std::string(d);
  }();
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  REQUIRE(f.good());
  f << text;
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const std::string base = workdir() + "/run" + std::to_string(counter++);
  const std::string cmd = std::string(SHARPIV_CLI_PATH) + " " + args + " >" +
                          base + ".out 2>" + base + ".err";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  RunResult r;
  r.code = WEXITSTATUS(status);
  r.out = slurp(base + ".out");
  r.err = slurp(base + ".err");
  return r;
}

/* two-judge binary fixture with exactly representable treated shares */
const std::string& data_csv() {
  static const std::string path = [] {
    const std::string p = workdir() + "/two_judges.csv";
    sharpiv::write_csv(
        make_blocks({{1.0, 40, 10, 5, 5}, {2.0, 40, 30, 15, 5}}), p);
    return p;
  }();
  return path;
}

/* same judges plus a discrete grouping column */
const std::string& grouped_csv() {
  static const std::string path = [] {
    sharpiv::Dataset ds =
        make_blocks({{1.0, 40, 10, 5, 5}, {2.0, 40, 30, 15, 5}});
    ds.x_names = {"g"};
    ds.x.resize(1);
    for (std::size_t i = 0; i < ds.n(); ++i)
      ds.x[0].push_back(i % 2 == 0 ? 1.0 : 2.0);
    const std::string p = workdir() + "/grouped.csv";
    sharpiv::write_csv(ds, p);
    return p;
  }();
  return path;
}

std::string result_bytes(const std::string& envelope_text) {
  return sharpiv::render(json::parse(envelope_text).at("result"));
}

}  // namespace

TEST_CASE("help and version exit zero") {
  const RunResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("test") != std::string::npos);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(help.out.find("diagnose") != std::string::npos);

  const RunResult version = run_cli("--version");
  CHECK(version.code == 0);
  CHECK(version.out.find("sharpiv ") != std::string::npos);

  CHECK(run_cli("test --help").code == 0);
}

TEST_CASE("parse problems exit two") {
  CHECK(run_cli("").code == 2);

  const RunResult missing = run_cli("test sharp");
  CHECK(missing.code == 2);
  CHECK_FALSE(missing.err.empty());

  CHECK(run_cli("test sharp --data " + data_csv() + " --nope").code == 2);
  CHECK(run_cli("test sharp --data " + data_csv() + " --pscore banana").code ==
        2);
  CHECK(run_cli("simulate fll --reps 2").code == 2);  /* seed is required */

  const RunResult jsonerr = run_cli("--json-errors test sharp");
  CHECK(jsonerr.code == 2);
  const json parsed = json::parse(jsonerr.err);
  CHECK(parsed.at("error").at("kind") == "usage");
}

TEST_CASE("domain errors exit one") {
  const RunResult plain = run_cli("test sharp --data " + data_csv() +
                                  " --col-y nope --seed 1 --threads 1");
  CHECK(plain.code == 1);
  CHECK(plain.err.find("error (schema)") != std::string::npos);

  const RunResult as_json =
      run_cli("--json-errors test sharp --data " + data_csv() +
              " --col-y nope --seed 1 --threads 1");
  CHECK(as_json.code == 1);
  CHECK(json::parse(as_json.err).at("error").at("kind") == "schema");
}

TEST_CASE("sharp test emits a reproducible envelope") {
  const std::string args = "test sharp --data " + data_csv() +
                           " --boot 50 --qp 2 --seed 7 --threads 1";
  const RunResult a = run_cli(args);
  REQUIRE(a.code == 0);
  const json env = json::parse(a.out);
  CHECK(env.at("result").at("kind") == "sharp");
  CHECK(env.at("result").at("seed").get<std::uint64_t>() == 7);
  CHECK(env.at("meta").at("tool") == "sharpiv");
  CHECK(env.at("meta").at("command") == "test sharp");
  CHECK(env.at("meta").at("threads").get<int>() == 1);

  const RunResult b = run_cli(args);
  REQUIRE(b.code == 0);
  CHECK(result_bytes(b.out) == result_bytes(a.out));

  const RunResult wide = run_cli("test sharp --data " + data_csv() +
                                 " --boot 50 --qp 2 --seed 7 --threads 4");
  REQUIRE(wide.code == 0);
  CHECK(result_bytes(wide.out) == result_bytes(a.out));
  CHECK(json::parse(wide.out).at("meta").at("threads").get<int>() == 4);
}

TEST_CASE("omitting the seed draws one and records it") {
  const std::string args = "test sharp --data " + data_csv() +
                           " --boot 20 --qp 2 --threads 1";
  const RunResult a = run_cli(args);
  const RunResult b = run_cli(args);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto seed_a = json::parse(a.out).at("result").at("seed");
  const auto seed_b = json::parse(b.out).at("result").at("seed");
  REQUIRE(seed_a.is_number_unsigned());
  CHECK(seed_a.get<std::uint64_t>() != seed_b.get<std::uint64_t>());
}

TEST_CASE("finite test through the CLI") {
  const std::string args = "test finite --data " + data_csv() +
                           " --bsim 2000 --seed 9 --threads 1";
  const RunResult a = run_cli(args);
  REQUIRE(a.code == 0);
  const json res = json::parse(a.out).at("result");
  CHECK(res.at("kind") == "finite");
  CHECK(res.at("b_sim").get<std::int64_t>() == 2000);
  CHECK(res.at("seed").get<std::uint64_t>() == 9);

  const RunResult wide = run_cli("test finite --data " + data_csv() +
                                 " --bsim 2000 --seed 9 --threads 4");
  REQUIRE(wide.code == 0);
  CHECK(result_bytes(wide.out) == result_bytes(a.out));
}

TEST_CASE("covariate columns route to the adjusted and conditional pipelines") {
  const RunResult adjusted =
      run_cli("test sharp --data " + grouped_csv() +
              " --cols-x g --boot 20 --qp 2 --seed 3 --threads 1");
  REQUIRE(adjusted.code == 0);
  CHECK(json::parse(adjusted.out).at("result").at("kind") == "sharp_adjusted");

  const RunResult conditional = run_cli(
      "test sharp --data " + grouped_csv() +
      " --cols-x g --condition-on g --min-cell-n 10 --boot 20 --qp 2 "
      "--seed 3 --threads 1");
  REQUIRE(conditional.code == 0);
  const json res = json::parse(conditional.out).at("result");
  CHECK(res.at("kind") == "sharp_conditional");
  CHECK(res.at("cells").size() == 2);
}

TEST_CASE("emit-config resolves flags without touching the data") {
  const std::string garbage = workdir() + "/garbage.csv";
  write_file(garbage, "not,a,valid\n1,2\n");

  /* the real run rejects the file, the config run never reads it */
  CHECK(run_cli("test sharp --data " + garbage + " --seed 1 --threads 1")
            .code == 1);
  const RunResult cfg = run_cli("test sharp --data " + garbage +
                                " --boot 99 --seed 8 --emit-config");
  REQUIRE(cfg.code == 0);
  const json j = json::parse(cfg.out);
  CHECK(j.at("command") == "test sharp");
  CHECK(j.at("data") == garbage);
  CHECK(j.at("boot").get<int>() == 99);
  CHECK(j.at("seed").get<std::uint64_t>() == 8);

  const RunResult sim =
      run_cli("simulate fll --seed 3 --reps 2 --emit-config");
  REQUIRE(sim.code == 0);
  const json sj = json::parse(sim.out);
  CHECK(sj.at("command") == "simulate fll");
  CHECK(sj.at("test") == "sharp");
  CHECK(sj.at("reps").get<int>() == 2);
  /* per-replication seeds and threads are derived, not configured */
  CHECK_FALSE(sj.at("sharp").contains("seed"));
  CHECK_FALSE(sj.at("sharp").contains("threads"));
}

TEST_CASE("simulation runs are seed deterministic") {
  const std::string args =
      "simulate fll --seed 21 --reps 3 --J 4 --n 80 --boot 30 --qp 2 "
      "--threads 1";
  const RunResult a = run_cli(args);
  REQUIRE(a.code == 0);
  const json res = json::parse(a.out).at("result");
  CHECK(res.at("kind") == "simulation");
  CHECK(res.at("reps").get<int>() == 3);
  CHECK(res.at("decisions").size() == 3);
  CHECK(json::parse(a.out).at("meta").at("command") == "simulate fll");

  const RunResult b = run_cli(args);
  CHECK(result_bytes(b.out) == result_bytes(a.out));

  const RunResult wide = run_cli(
      "simulate fll --seed 21 --reps 3 --J 4 --n 80 --boot 30 --qp 2 "
      "--threads 4");
  CHECK(result_bytes(wide.out) == result_bytes(a.out));
}

TEST_CASE("diagnostics emit CSV and wald JSON") {
  const RunResult curves = run_cli("diagnose curves --data " + data_csv());
  REQUIRE(curves.code == 0);
  CHECK(curves.out.rfind("p,m1,m0_neg,n_cell\n", 0) == 0);
  CHECK(std::count(curves.out.begin(), curves.out.end(), '\n') == 3);

  const RunResult banded = run_cli("diagnose curves --data " + data_csv() +
                                   " --g interval:0.35,0.65");
  CHECK(banded.code == 0);
  CHECK(run_cli("diagnose curves --data " + data_csv() + " --g interval:oops")
            .code == 2);

  const RunResult slopes =
      run_cli("diagnose slopes --data " + data_csv() + " --variant yd");
  REQUIRE(slopes.code == 0);
  CHECK(slopes.out.rfind("p_lo,p_hi,slope,bound_lo,bound_hi,violated,note\n",
                         0) == 0);
  CHECK(std::count(slopes.out.begin(), slopes.out.end(), '\n') == 2);

  const RunResult wald = run_cli("diagnose wald --data " + data_csv());
  REQUIRE(wald.code == 0);
  const json wres = json::parse(wald.out).at("result");
  CHECK(wres.at("kind") == "wald_bound");
  CHECK(wres.contains("wald"));
  CHECK(wres.contains("within_bound"));

  const RunResult pair =
      run_cli("diagnose wald --data " + data_csv() + " --pair 0.25 0.75");
  REQUIRE(pair.code == 0);
  const json pres = json::parse(pair.out).at("result");
  CHECK(pres.at("kind") == "conditional_wald");
  CHECK(pres.at("p").get<double>() == 0.25);
  CHECK(pres.at("p_prime").get<double>() == 0.75);
  CHECK(pres.contains("value"));
}

TEST_CASE("output lands in the requested file") {
  const std::string out = workdir() + "/result.json";
  const RunResult r = run_cli("test sharp --data " + data_csv() +
                              " --boot 20 --qp 2 --seed 4 --threads 1 --out " +
                              out);
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  const std::string text = slurp(out);
  CHECK(json::parse(text).at("result").at("kind") == "sharp");

  const RunResult bad = run_cli("test sharp --data " + data_csv() +
                                " --boot 20 --qp 2 --seed 4 --threads 1 " +
                                "--out /nonexistent_dir_xyz/out.json");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("cannot open output file") != std::string::npos);
}
