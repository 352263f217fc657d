#include "doctest.h"

#include <sstream>

#include "dinf/cli.hpp"
#include "dinf/serialize.hpp"
#include "support.hpp"

using namespace dinf;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Shared generated benchmark, built once per process.
const fs::path& bench() {
  static const fs::path dir = [] {
    const fs::path d = oracle::scratch_dir("cli_bench");
    const Run r = run({"generate", "--n", "400", "--dim", "4", "--seed", "3", "--out-dir", (d / "data").string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

std::vector<std::string> data_flags() {
  return {"--train", (bench() / "data" / "train.csv").string(), "--test",
          (bench() / "data" / "test.csv").string()};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("generate writes splits and a manifest") {
  const fs::path dir = oracle::scratch_dir("cli_generate");
  const Run r = run({"generate", "--n", "2000", "--dim", "8", "--epsilon", "0.15", "--seed", "7", "--out-dir",
                     (dir / "a").string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"train.csv", "val.csv", "test.csv", "manifest.json"}) CHECK(fs::exists(dir / "a" / f));
  const Json m = read_json(dir / "a" / "manifest.json");
  CHECK(m["command"] == "generate");
  CHECK(m["schema_version"] == kSchemaVersion);
  CHECK(m["config"]["seed"] == 7);
  CHECK(m["epsilon"] == 0.15);
  CHECK(std::abs(m["minority_fraction"].get<double>() - 0.30) < 0.02);
  CHECK(m["sizes"]["train"] == 1120);

  REQUIRE(run({"generate", "--n", "2000", "--dim", "8", "--epsilon", "0.15", "--seed", "7", "--out-dir",
               (dir / "b").string()}).code == 0);
  for (const char* f : {"train.csv", "val.csv", "test.csv"}) {
    CHECK(oracle::slurp(dir / "a" / f) == oracle::slurp(dir / "b" / f));
  }
  Json second = read_json(dir / "b" / "manifest.json");
  second["config"]["out_dir"] = (dir / "a").string();
  CHECK(second == m);
}

TEST_CASE("generate rejects epsilon 0.6 before writing") {
  const fs::path dir = oracle::scratch_dir("cli_reject") / "out";
  const Run r = run({"generate", "--epsilon", "0.6", "--out-dir", dir.string()});
  CHECK(r.code == kExitConfig);
  CHECK_FALSE(fs::exists(dir));
  CHECK(r.err.find("epsilon") != std::string::npos);
}

TEST_CASE("exit codes") {
  const fs::path dir = oracle::scratch_dir("cli_exit");
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"bogus"}).code == kExitConfig);
  CHECK(run({"train", "--ridge", "abc"}).code == kExitConfig);
  CHECK(run({"train", "--train", "x.csv"}).code == kExitConfig);  // missing --out
  CHECK(run(with({"train", "--out", (dir / "t.json").string(), "--threads", "0"}, data_flags())).code ==
        kExitConfig);
  const std::string test_csv = (bench() / "data" / "test.csv").string();
  CHECK(run({"train", "--train", (dir / "none.csv").string(), "--test", test_csv, "--out",
             (dir / "t.json").string()}).code == kExitData);

  oracle::spit(dir / "bad.csv", "x,label,group\n1,7,0\n");
  CHECK(run({"train", "--train", (dir / "bad.csv").string(), "--test", test_csv, "--out",
             (dir / "t.json").string()}).code == kExitData);

  CHECK(run(with({"train", "--max-iterations", "1", "--out", (dir / "t.json").string()}, data_flags())).code ==
        kExitConvergence);

  // Group 1 filtered to positives only leaves gFPR undefined.
  std::string pos = "x,label,group\n";
  for (int i = 0; i < 20; ++i) pos += std::to_string(i % 5) + "," + std::to_string(i % 2) + ",0\n";
  pos += "1,1,1\n2,1,1\n";
  oracle::spit(dir / "pos.csv", pos);
  CHECK(run({"audit", "--train", (dir / "pos.csv").string(), "--test", (dir / "pos.csv").string(), "--metric",
             "gfpr", "--audit-group", "1", "--out", (dir / "a.json").string()})
            .code == kExitUndefinedMetric);

  const Run help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("sensitivity") != std::string::npos);
}

TEST_CASE("train, audit and rank reports") {
  const fs::path dir = oracle::scratch_dir("cli_reports");
  const std::string train_json = (dir / "train.json").string();
  REQUIRE(run(with({"train", "--ridge", "0.01", "--out", train_json}, data_flags())).code == 0);
  const Json t = read_json(train_json);
  CHECK(t["command"] == "train");
  CHECK(t["config"]["ridge"] == 0.01);
  CHECK(t["config"]["threads"] == 1);
  CHECK(t["grad_norm"].get<double>() <= 1e-10);

  const std::string audit_json = (dir / "audit.json").string();
  REQUIRE(run(with({"audit", "--model", train_json, "--ridge", "0.01", "--out", audit_json}, data_flags())).code ==
          0);
  CHECK(read_json(audit_json)["config"]["metric"] == "ece");

  const std::string loss_json = (dir / "loss.json").string();
  const std::string label_json = (dir / "label.json").string();
  const auto rank_flags = with(data_flags(), {"--flip-fraction", "0.2", "--flip-seed", "1", "--k", "20,40"});
  REQUIRE(run(with({"rank", "--method", "loss", "--out", loss_json}, rank_flags)).code == 0);
  REQUIRE(run(with({"rank", "--out", label_json, "--csv", (dir / "r.csv").string(), "--scores-csv",
                    (dir / "s.csv").string()},
                   rank_flags))
              .code == 0);
  const Json label = read_json(label_json);
  CHECK(label["config"]["method"] == "if-disparity-label");
  CHECK(label["config"]["k"] == Json::array({20, 40}));
  const std::string csv = oracle::slurp(dir / "r.csv");
  CHECK(csv.rfind("rank,train_index,method,score,group,label,flipped\n", 0) == 0);
  CHECK(oracle::slurp(dir / "s.csv").rfind("train_index,estimator,raw_value,canonical_score,group,label\n", 0) ==
        0);

  // Refuses to overwrite its own input.
  CHECK(run(with({"train", "--out", (bench() / "data" / "train.csv").string()}, data_flags())).code ==
        kExitConfig);
}

TEST_CASE("sensitivity report shape") {
  const fs::path dir = oracle::scratch_dir("cli_sens");
  const std::string out = (dir / "s.json").string();
  REQUIRE(run(with({"sensitivity", "--mode", "test", "--metric", "ece", "--fractions", "0,0.1,0.3", "--seeds", "5",
                    "--out", out, "--csv", (dir / "s.csv").string()},
                   data_flags()))
              .code == 0);
  const Json r = read_json(out);
  CHECK(r["config"]["fractions"].size() == 3);
  std::size_t lines = 0;
  for (char ch : oracle::slurp(dir / "s.csv")) lines += ch == '\n';
  // Header plus one row per (fraction, seed, group).
  CHECK(lines == 1 + 3 * 5 * 2);
}

TEST_CASE("reports regenerate byte-identically from their own config") {
  const fs::path dir = oracle::scratch_dir("cli_regen");
  const std::string a = (dir / "a.json").string();
  const auto flags = with(data_flags(), {"--mode", "train", "--fractions", "0,0.2", "--seeds", "2", "--metric",
                                         "brier", "--threads", "1"});
  REQUIRE(run(with({"sensitivity", "--out", a}, flags)).code == 0);
  const std::string first = oracle::slurp(a);
  REQUIRE(run(with({"sensitivity", "--out", a}, flags)).code == 0);
  CHECK(oracle::slurp(a) == first);

  // Feeding the report back as a config with only --out overridden.
  Json cfg = read_json(a);
  cfg["config"]["out"] = (dir / "c.json").string();
  oracle::spit(dir / "cfg.json", cfg.dump(2));
  REQUIRE(run({"sensitivity", "--config", (dir / "cfg.json").string()}).code == 0);
  Json c = read_json(dir / "c.json");
  c["config"]["out"] = a;
  CHECK(c.dump(2) + "\n" == oracle::slurp(a));

  // Flags override the file; a config from another command is refused.
  REQUIRE(run({"sensitivity", "--config", (dir / "cfg.json").string(), "--seeds", "1", "--out",
               (dir / "d.json").string()})
              .code == 0);
  CHECK(read_json(dir / "d.json")["config"]["seeds"] == 1);
  CHECK(run({"train", "--config", a, "--out", (dir / "e.json").string()}).code == kExitConfig);
  oracle::spit(dir / "unknown.json", R"({"nonsense": 1})");
  CHECK(run({"sensitivity", "--config", (dir / "unknown.json").string()}).code == kExitConfig);
}

TEST_CASE("inputs are not modified") {
  const std::string before = oracle::slurp(bench() / "data" / "train.csv");
  const fs::path dir = oracle::scratch_dir("cli_inputs");
  REQUIRE(run(with({"relabel", "--flip-fraction", "0.2", "--out", (dir / "r.json").string()}, data_flags())).code ==
          0);
  CHECK(oracle::slurp(bench() / "data" / "train.csv") == before);
}

TEST_CASE("oracle-check prints rank correlations") {
  const Run r = run({"oracle-check", "--n", "200", "--dim", "4", "--ridge", "0.01", "--seed", "1"});
  CHECK(r.out.find("spearman up_loss") != std::string::npos);
  CHECK(r.out.find("spearman up_disparity") != std::string::npos);
  CHECK((r.code == kExitOk || r.code == kExitInvariant));
  const Run strict = run({"oracle-check", "--n", "60", "--dim", "4", "--min-spearman", "1.01"});
  CHECK(strict.code == kExitInvariant);
}

}  // TEST_SUITE
