#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rse/errors.hpp"
#include "rse/runner.hpp"

using namespace rse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "rse_runner_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

const char* kProblems =
    "{\"id\": \"alpha\"}\n"
    "{\"id\": \"beta\", \"mock\": {\"conclusions\": 1, \"p\": 0.9}}\n";

std::string base_config(const std::string& strategy) {
  return std::string("{\n")
      + "  \"strategy\": \"" + strategy + "\",\n"
      + "  \"seed\": 99,\n"
      + "  \"batch_sizes\": [2, 2],\n"
      + "  \"groups\": 2,\n"
      + "  \"tau\": 0.8,\n"
      + "  \"workers\": 4,\n"
      + "  \"problems\": \"problems.jsonl\",\n"
      + "  \"output_dir\": \"out\",\n"
      + "  \"backend\": {\"name\": \"mock-oracle\", \"kind\": \"mock\","
        " \"max_tokens\": 4096, \"context_window\": 65536},\n"
      + "  \"embedder\": {\"kind\": \"test_hash\", \"dimension\": 128},\n"
      + "  \"mock_world\": {\"seed\": 7, \"conclusions\": 2, \"p\": [0.5, 0.5]}\n"
      + "}\n";
}

fs::path setup_run(const std::string& name, const std::string& strategy = "rse",
                   const std::string& extra_config = "") {
  fs::path dir = fresh_dir(name);
  std::string config = base_config(strategy);
  if (!extra_config.empty()) {
    // splice extra keys right after the opening brace
    config.insert(config.find('\n') + 1, extra_config);
  }
  write_file(dir / "run.json", config);
  write_file(dir / "problems.jsonl", kProblems);
  return dir;
}

std::vector<json> read_records(const fs::path& records_path) {
  std::vector<json> records;
  std::ifstream in(records_path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(json::parse(line));
  }
  return records;
}

}  // namespace

TEST_CASE("run specs load with relative paths and strict keys") {
  fs::path dir = setup_run("spec");
  runner::RunSpec spec = runner::load_run_spec((dir / "run.json").string());
  CHECK(spec.config.strategy == core::Strategy::rse);
  CHECK(spec.config.rounds == 2);  // inferred from batch_sizes
  CHECK(spec.config.groups == 2);
  CHECK(spec.config.seed == 99);
  CHECK(spec.profile.kind == backend::Kind::mock);
  CHECK(spec.profile.model == "mock-oracle");  // defaulted from name
  CHECK(spec.embedder.dimension == 128);
  CHECK(spec.embedder.seed == 99);  // defaulted from the run seed
  CHECK(fs::path(spec.problems_path).parent_path() == dir);
  CHECK(fs::path(spec.output_dir) == dir / "out");
  REQUIRE(spec.mock.has_value());
  CHECK(spec.mock->conclusions == 2);
  CHECK(spec.mock->p == std::vector<double>{0.5, 0.5});

  // unknown keys anywhere are rejected
  write_file(dir / "bad1.json", "{\"strategy\": \"rse\", \"batch_sizes\": [1], "
                                "\"problems\": \"p\", \"output_dir\": \"o\", "
                                "\"backend\": {\"name\": \"m\"}, \"typo\": 1}");
  CHECK_THROWS_AS(runner::load_run_spec((dir / "bad1.json").string()), ConfigError);

  // a mock backend demands a mock_world section
  write_file(dir / "bad2.json", "{\"strategy\": \"rse\", \"batch_sizes\": [1], "
                                "\"problems\": \"p\", \"output_dir\": \"o\", "
                                "\"backend\": {\"name\": \"m\", \"kind\": \"mock\"}}");
  CHECK_THROWS_AS(runner::load_run_spec((dir / "bad2.json").string()), ConfigError);

  // http backends carry their endpoint through and need no world
  write_file(dir / "http.json", "{\"strategy\": \"standard\", \"batch_sizes\": [4], "
                                "\"problems\": \"p\", \"output_dir\": \"o\", "
                                "\"backend\": {\"name\": \"svc\", \"kind\": \"http\", "
                                "\"endpoint\": \"http://host:8000/v1\", \"params\": 7e9}}");
  runner::RunSpec http_spec = runner::load_run_spec((dir / "http.json").string());
  CHECK(http_spec.profile.kind == backend::Kind::http);
  CHECK(http_spec.profile.endpoint == "http://host:8000/v1");
  REQUIRE(http_spec.profile.params.has_value());
  CHECK(!http_spec.mock.has_value());

  CHECK_THROWS_AS(runner::load_run_spec((dir / "missing.json").string()), ConfigError);
}

TEST_CASE("problem files accept arrays and line format, and reject duplicates") {
  fs::path dir = fresh_dir("problems");

  write_file(dir / "lines.jsonl",
             "{\"id\": \"a\", \"statement\": \"Find x.\", \"gold_answer\": \"4\"}\n"
             "\n"
             "{\"id\": \"b\"}\n");
  std::vector<core::Problem> lines = runner::load_problems((dir / "lines.jsonl").string());
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].id == "a");
  CHECK(lines[0].statement == "Find x.");
  CHECK(lines[0].gold_answer == "4");
  CHECK(lines[1].statement.empty());
  CHECK(!lines[1].gold_answer.has_value());

  write_file(dir / "array.json",
             "[{\"id\": \"a\", \"statement\": \"Find x.\", \"gold_answer\": \"4\"},"
             " {\"id\": \"b\"}]");
  std::vector<core::Problem> arr = runner::load_problems((dir / "array.json").string());
  REQUIRE(arr.size() == 2);
  CHECK(arr[0].id == lines[0].id);
  CHECK(arr[0].gold_answer == lines[0].gold_answer);

  write_file(dir / "dup.jsonl", "{\"id\": \"a\"}\n{\"id\": \"a\"}\n");
  CHECK_THROWS_AS(runner::load_problems((dir / "dup.jsonl").string()), ConfigError);
  write_file(dir / "empty.jsonl", "\n\n");
  CHECK_THROWS_AS(runner::load_problems((dir / "empty.jsonl").string()), ConfigError);
  write_file(dir / "unkeyed.jsonl", "{\"id\": \"a\", \"answer\": \"4\"}\n");
  CHECK_THROWS_AS(runner::load_problems((dir / "unkeyed.jsonl").string()), ConfigError);
}

TEST_CASE("a full run writes canonical, deterministic, resumable records") {
  fs::path dir = setup_run("run");
  const std::string config = (dir / "run.json").string();
  const fs::path records_path = dir / "out" / "records.jsonl";

  std::ostringstream log;
  CHECK(runner::cmd_run(config, log) == 0);
  CHECK(log.str().find("4 task(s) executed, 0 already recorded") != std::string::npos);

  std::string first_bytes = read_file(records_path);
  std::vector<json> records = read_records(records_path);
  REQUIRE(records.size() == 8);  // 2 problems x 2 groups x 2 rounds

  // canonical order: problem file order, groups ascending, rounds ascending
  std::vector<std::tuple<std::string, int, int>> expected = {
      {"alpha", 0, 0}, {"alpha", 0, 1}, {"alpha", 1, 0}, {"alpha", 1, 1},
      {"beta", 0, 0},  {"beta", 0, 1},  {"beta", 1, 0},  {"beta", 1, 1},
  };
  for (int i = 0; i < 8; ++i) {
    CHECK(records[i]["problem"] == std::get<0>(expected[i]));
    CHECK(records[i]["group"] == std::get<1>(expected[i]));
    CHECK(records[i]["round"] == std::get<2>(expected[i]));
  }

  const json& rec = records[0];
  CHECK(rec["schema_version"] == 1);
  CHECK(rec["strategy"] == "rse");
  CHECK(rec["gold"].is_string());  // the mock world synthesized one
  REQUIRE(rec["rollouts"].is_array());
  CHECK(rec["rollouts"].size() == 2);
  CHECK(rec["rollouts"][0].contains("final"));  // persist_finals defaults on
  CHECK(rec["report"]["ledger"].contains("t_in"));
  CHECK(rec["report"]["ledger"]["flops"].is_null());  // no params configured
  CHECK(rec.contains("bank"));

  // the beta override (one conclusion) bounds its bank at a single positive
  for (const json& r : records) {
    if (r["problem"] == "beta") {
      CHECK(r["report"]["bank_positives"].get<int>() <= 1);
    }
  }

  // rerunning a finished run is a no-op
  std::ostringstream relog;
  CHECK(runner::cmd_run(config, relog) == 0);
  CHECK(relog.str().find("0 task(s) executed, 4 already recorded") != std::string::npos);
  CHECK(read_file(records_path) == first_bytes);

  // a fresh run reproduces the bytes exactly
  fs::remove_all(dir / "out");
  std::ostringstream fresh;
  CHECK(runner::cmd_run(config, fresh) == 0);
  CHECK(read_file(records_path) == first_bytes);

  // resume: keep 3 records plus a torn partial line, rerun, compare bytes
  std::istringstream all(first_bytes);
  std::string line, kept;
  for (int i = 0; i < 3 && std::getline(all, line); ++i) kept += line + "\n";
  write_file(records_path, kept + "{\"torn");
  std::ostringstream resumed;
  CHECK(runner::cmd_run(config, resumed) == 0);
  CHECK(resumed.str().find("3 task(s) executed, 1 already recorded") != std::string::npos);
  CHECK(read_file(records_path) == first_bytes);

  // a malformed line before the end is an error, not a silent truncation
  write_file(records_path, "{\"torn\n" + first_bytes);
  CHECK_THROWS_AS(runner::cmd_run(config, log), ParseError);

  // records from another strategy refuse to mix
  write_file(records_path, first_bytes);
  write_file(dir / "run.json", base_config("standard"));
  CHECK_THROWS_AS(runner::cmd_run(config, log), ConfigError);
}

TEST_CASE("bank audits attach to the final recycling round on request") {
  fs::path dir = setup_run("validate", "rse", "  \"validate_experiences\": true,\n");
  std::ostringstream log;
  CHECK(runner::cmd_run((dir / "run.json").string(), log) == 0);

  int audited = 0;
  for (const json& rec : read_records(dir / "out" / "records.jsonl")) {
    if (!rec.contains("validation")) continue;
    ++audited;
    CHECK(rec["round"] == 1);  // only the last round carries the audit
    // the mock bank holds canonical sentences and pitfalls: all pass
    if (rec["validation"]["positive_accuracy"].is_number()) {
      CHECK(rec["validation"]["positive_accuracy"].get<double>() == 1.0);
    }
    if (rec["validation"]["negative_accuracy"].is_number()) {
      CHECK(rec["validation"]["negative_accuracy"].get<double>() == 1.0);
    }
  }
  CHECK(audited > 0);
}

TEST_CASE("reference strategies cannot resume without persisted finals") {
  fs::path dir = setup_run("nofinals", "pacore",
                           "  \"persist_finals\": false,\n  \"refs_per_group\": 4,\n");
  const std::string config = (dir / "run.json").string();
  const fs::path records_path = dir / "out" / "records.jsonl";

  std::ostringstream log;
  CHECK(runner::cmd_run(config, log) == 0);
  std::vector<json> records = read_records(records_path);
  REQUIRE(records.size() == 8);
  CHECK(!records[0]["rollouts"][0].contains("final"));

  // keep only round 0 of the first task: the next round needs its finals
  std::string first_line = records[0].dump() + "\n";
  write_file(records_path, first_line);
  CHECK_THROWS_AS(runner::cmd_run(config, log), ConfigError);
}

TEST_CASE("the report aggregates per problem and pools across them") {
  fs::path dir = setup_run("report");
  std::ostringstream log;
  REQUIRE(runner::cmd_run((dir / "run.json").string(), log) == 0);

  std::ostringstream out;
  CHECK(runner::cmd_report((dir / "out").string(), out) == 0);
  std::string csv = read_file(dir / "out" / "summary.csv");
  CHECK(csv == out.str());

  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "strategy,problem,round,rollouts,pass1,non_truncated_pass1,truncation_rate,"
        "answer_entropy,majority_correct,bank_positives,bank_negatives,t_in,t_out,flops");

  struct Row {
    std::string strategy, problem;
    int round = 0, rollouts = 0;
    long long t_in = 0;
  };
  std::vector<Row> rows;
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    Row row;
    std::istringstream fields(line);
    std::string field;
    std::getline(fields, row.strategy, ',');
    std::getline(fields, row.problem, ',');
    std::getline(fields, field, ',');
    row.round = std::stoi(field);
    std::getline(fields, field, ',');
    row.rollouts = std::stoi(field);
    for (int skip = 0; skip < 7; ++skip) std::getline(fields, field, ',');
    std::getline(fields, field, ',');
    row.t_in = std::stoll(field);
    rows.push_back(row);
  }
  // 2 problems x 2 rounds plus 2 pooled rounds
  CHECK(rows.size() == 6);

  long long alpha_t_in = 0, beta_t_in = 0, all_t_in = 0;
  for (const Row& row : rows) {
    CHECK(row.strategy == "rse");
    if (row.problem == "ALL") {
      CHECK(row.rollouts == 8);  // 2 problems x 2 groups x batch 2
      all_t_in += row.t_in;
    } else {
      CHECK(row.rollouts == 4);  // 2 groups x batch 2
      (row.problem == "alpha" ? alpha_t_in : beta_t_in) += row.t_in;
    }
  }
  CHECK(all_t_in == alpha_t_in + beta_t_in);  // pooled ledgers are pure sums

  // an empty tree reports an empty table; a missing one is an error
  fs::path empty = fresh_dir("report_empty");
  std::ostringstream empty_out;
  CHECK(runner::cmd_report(empty.string(), empty_out) == 0);
  CHECK(empty_out.str().find("strategy,problem") == 0);
  CHECK_THROWS_AS(runner::cmd_report((empty / "nope").string(), empty_out), ConfigError);
}

TEST_CASE("the analytical command prints curves, bounds, and optional CSV") {
  runner::TheoryArgs args;
  args.conclusions = 4;
  args.p = 0.3;
  args.n_max = 6;
  args.trials = 3000;
  args.delta = 0.05;
  args.seed = 7;
  fs::path dir = fresh_dir("theory");
  args.out_path = (dir / "curve.csv").string();

  std::ostringstream out;
  CHECK(runner::cmd_theory(args, out) == 0);
  const std::string text = out.str();
  CHECK(text.find("budget,closed_base,closed_rse,mc_base,mc_rse,se_base,se_rse") !=
        std::string::npos);
  CHECK(text.find("# delta = 0.05") != std::string::npos);
  CHECK(text.find("# n_rse = 15") != std::string::npos);
  CHECK(text.find("# n_base = 370") != std::string::npos);
  CHECK(text.find("# closed_rse(n_rse) = 0.98114") != std::string::npos);

  // the CSV file holds the curve alone, not the commentary
  std::string csv = read_file(dir / "curve.csv");
  CHECK(csv.find("budget,") == 0);
  CHECK(csv.find('#') == std::string::npos);
  int rows = 0;
  std::istringstream lines(csv);
  for (std::string line; std::getline(lines, line);) rows += !line.empty();
  CHECK(rows == 7);  // header + budgets 1..6

  args.n_max = 0;
  CHECK_THROWS_AS(runner::cmd_theory(args, out), ConfigError);
}
