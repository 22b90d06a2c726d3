#include "mwcnp/errors.hpp"
#include "mwcnp/harness/config.hpp"
#include "mwcnp/harness/pipeline.hpp"
#include "mwcnp/harness/report.hpp"
#include "mwcnp/seeding.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mwcnp;
using namespace mwcnp::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mwcnp_unit_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_config(const fs::path& out, envs::EnvKind kind = envs::EnvKind::point) {
  ExperimentConfig c = default_config(kind);
  c.seed = 5;
  c.meta_tasks = 6;
  c.meta_iterations = 2;
  c.meta_batch = 2;
  c.train_rollouts = 2;
  c.test_rollouts = 2;
  c.hidden = 8;
  c.depth = 1;
  c.cnp_steps = 5;
  c.cnp_hidden = 8;
  c.cnp_depth = 1;
  c.cnp_latent = 4;
  c.cnp_queries = 4;
  c.cnp_tasks_per_step = 2;
  c.eval_tasks = 3;
  c.oracle_rollouts = 3;
  c.halluc_rollouts = 2;
  c.eval_episodes = 2;
  if (kind == envs::EnvKind::cartpole) {
    c.train_horizon = 20;
    c.test_horizon = 20;
  }
  c.out_dir = out;
  return c;
}

EvalRecord rec(int task, Mode mode, double post) {
  return EvalRecord{task, 0.1 * task, mode, 1, 0, -10.0, post};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config: text round-trip and defaults per environment") {
  ExperimentConfig c = default_config(envs::EnvKind::cartpole);
  c.seed = 99;
  c.outer_lr = 3.5e-4;
  c.modes = {Mode::mwcnp, Mode::norml1};
  c.conditioning_tuples = 5;
  c.halluc_mode = cnp::HallucinationMode::mean;
  c.out_dir = "some/where";
  CHECK(parse_config(to_text(c)) == c);
  const ExperimentConfig d = default_config(envs::EnvKind::point);
  CHECK(parse_config(to_text(d)) == d);
  CHECK(d.meta_tasks == 500);
  CHECK(d.eval_tasks == 10);
  CHECK(default_config(envs::EnvKind::cartpole).meta_tasks == 40);
  CHECK(default_config(envs::EnvKind::cartpole).eval_tasks == 17);

  const auto path = fresh_dir("config") / "c.txt";
  save_config(c, path);
  CHECK(load_config(path) == c);
}

TEST_CASE("config: parsing comments, overrides and errors") {
  const ExperimentConfig c = parse_config("# comment\nenv=cartpole\n\nseed = 7  # trailing\nmeta_iterations=3\n");
  CHECK(c.env_kind == envs::EnvKind::cartpole);
  CHECK(c.seed == 7);
  CHECK(c.meta_iterations == 3);
  CHECK(c.meta_tasks == 40);

  CHECK_THROWS_WITH_AS(parse_config("env=point\nbogus_key=1\n"), doctest::Contains("bogus_key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("env=mujoco\n"), doctest::Contains("unknown environment 'mujoco'"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed=abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("meta_batch=0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);

  ExperimentConfig s = default_config(envs::EnvKind::point);
  set_key(s, "halluc_rollouts", "3");
  CHECK(s.halluc_rollouts == 3);
  CHECK_THROWS_AS(set_key(s, "nope", "1"), ConfigError);
}

TEST_CASE("config: derived seeds and task lists") {
  const ExperimentConfig c = default_config(envs::EnvKind::point);
  const auto eval = c.eval_task_list();
  REQUIRE(eval.size() == 10);
  for (std::size_t i = 1; i < eval.size(); ++i) CHECK(eval[i].hidden_param > eval[i - 1].hidden_param);
  CHECK(c.meta_train_tasks().size() == 500);
  CHECK(c.meta_train_config().seed != c.cnp_train_config().seed);
  const auto cart = default_config(envs::EnvKind::cartpole).eval_task_list();
  REQUIRE(cart.size() == 17);
  CHECK(cart.front().hidden_param == doctest::Approx(envs::deg_to_rad(-8.0)));
  CHECK(cart[1].hidden_param - cart[0].hidden_param == doctest::Approx(envs::deg_to_rad(1.0)));
}

TEST_CASE("metrics: format and parse round-trip exactly") {
  std::vector<EvalRecord> rs{rec(0, Mode::norml1, -3.25), rec(0, Mode::oracle25, 0.1 + 0.2),
                             rec(1, Mode::mwcnp, -1e-300)};
  rs[1].real_rollouts = 25;
  rs[2].halluc_rollouts = 24;
  rs[2].hidden_param = -3.141592653589793;
  CHECK(parse_metrics(format_metrics(rs)) == rs);
  CHECK(format_metrics(rs).rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
}

TEST_CASE("metrics: malformed rows name the line") {
  const std::string h = std::string(kMetricsHeader) + "\n";
  CHECK_THROWS_WITH(parse_metrics("wrong,header\n"), doctest::Contains("line 1"));
  CHECK_THROWS_WITH(parse_metrics(h + "0,0.1,norml1,1,0,-1,-2\n0,0.1,norml1,1\n"), doctest::Contains("line 3"));
  CHECK_THROWS_WITH(parse_metrics(h + "0,0.1,teleport,1,0,-1,-2\n"), doctest::Contains("line 2"));
  CHECK_THROWS_WITH(parse_metrics(h + "0,0.1,norml1,1,0,abc,-2\n"), doctest::Contains("line 2"));
  CHECK_THROWS_WITH(parse_metrics(h + "0,0.1,norml1,1,0,-1,-2\n1,0.2,norml1,1,0,-1,-2\n0,0.1,norml1,1,0,-5,-6\n"),
                    doctest::Contains("metrics lines 2 and 4: duplicate"));
}

TEST_CASE("summary: exact mean, median and sample std; empty mode warns") {
  const std::vector<EvalRecord> rs{rec(0, Mode::norml1, 1.0), rec(1, Mode::norml1, 2.0), rec(2, Mode::norml1, 3.0),
                                   rec(3, Mode::norml1, 10.0), rec(0, Mode::mwcnp, -4.0)};
  const Summary s = summarize(rs);
  REQUIRE(s.modes.size() == 2);
  CHECK(s.modes[0].mode == Mode::norml1);
  CHECK(s.modes[0].count == 4);
  CHECK(s.modes[0].mean == 4.0);
  CHECK(s.modes[0].median == 2.5);
  CHECK(s.modes[0].stddev == doctest::Approx(std::sqrt(50.0 / 3.0)).epsilon(1e-14));
  CHECK(s.modes[0].pre_mean == -10.0);
  CHECK(s.modes[1].mode == Mode::mwcnp);
  CHECK(s.modes[1].median == -4.0);
  CHECK(s.modes[1].stddev == 0.0);
  REQUIRE(s.warnings.size() == 1);
  CHECK(s.warnings[0].find("oracle25") != std::string::npos);
  const std::string table = format_summary(s);
  CHECK(table.find("warning") != std::string::npos);
  std::istringstream lines(table);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("warning", 0) != 0) CHECK(line.rfind("oracle25", 0) == std::string::npos);
  }
}

TEST_CASE("report: writes the table and standalone SVG plots") {
  const auto dir = fresh_dir("report");
  write_metrics({rec(0, Mode::norml1, -2.0), rec(0, Mode::oracle25, -1.0), rec(1, Mode::norml1, -3.0),
                 rec(1, Mode::oracle25, -1.5)},
                dir / "metrics.csv");
  const ReportOutputs out = cmd_report(dir / "metrics.csv", dir / "report");
  CHECK(fs::exists(out.table));
  for (const auto& p : {out.per_task_plot, out.distribution_plot}) {
    const std::string svg = slurp(p);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  CHECK(out.summary.modes.size() == 2);
}

TEST_CASE("pipeline: norml1-only evaluation on a tiny run") {
  const auto dir = fresh_dir("norml_only");
  ExperimentConfig c = tiny_config(dir);
  c.modes = {Mode::norml1};
  const auto meta = cmd_meta_train(c);
  CHECK(fs::exists(meta.checkpoint));
  CHECK(fs::exists(meta.replay));
  CHECK(fs::exists(dir / "meta-train.config.txt"));
  CHECK(load_config(dir / "meta-train.config.txt") == c);
  const auto recs = cmd_evaluate(c);
  REQUIRE(recs.size() == 3);
  for (const auto& r : recs) {
    CHECK(r.mode == Mode::norml1);
    CHECK(r.real_rollouts == 1);
    CHECK(r.halluc_rollouts == 0);
  }
  CHECK(read_metrics(dir / "metrics.csv") == recs);
}

TEST_CASE("pipeline: missing checkpoint and mismatched replay") {
  const auto dir = fresh_dir("errors");
  ExperimentConfig c = tiny_config(dir);
  CHECK_THROWS_WITH(cmd_evaluate(c), doctest::Contains("missing meta-policy checkpoint"));

  ExperimentConfig cart = tiny_config(fresh_dir("errors_cart"), envs::EnvKind::cartpole);
  cart.meta_iterations = 2;
  const auto cart_meta = cmd_meta_train(cart);
  CHECK_THROWS_AS(cmd_cnp_train(c, cart_meta.replay), DimensionError);
}

TEST_CASE("pipeline: zero-step world model equals its initialization; mode accounting") {
  const auto dir = fresh_dir("full");
  ExperimentConfig c = tiny_config(dir);
  c.cnp_steps = 0;
  const auto meta = cmd_meta_train(c);
  const auto cnp_out = cmd_cnp_train(c, meta.replay);
  Rng init_rng(derive_seed(c.seed, {20}));
  const cnp::CnpModel init = cnp::init_model(2, 2, c.cnp_config(), init_rng);
  CHECK(cnp::from_checkpoint(nnkit::load_checkpoint(cnp_out.checkpoint)).params == init.params);

  const auto recs = cmd_evaluate(c);
  REQUIRE(recs.size() == 9);
  CHECK(slurp(dir / artifacts::kTrajectories).rfind("<svg", 0) == 0);
  for (const auto& r : recs) {
    switch (r.mode) {
      case Mode::norml1:
        CHECK(r.real_rollouts == 1);
        CHECK(r.halluc_rollouts == 0);
        break;
      case Mode::oracle25:
        CHECK(r.real_rollouts == c.oracle_rollouts);
        CHECK(r.halluc_rollouts == 0);
        break;
      case Mode::mwcnp:
        CHECK(r.real_rollouts == 1);
        CHECK(r.halluc_rollouts == c.halluc_rollouts);
        break;
    }
  }
  // every mode starts from the same meta-policy and task seeds
  for (int t = 0; t < 3; ++t) {
    CHECK(recs[static_cast<std::size_t>(3 * t)].pre_return == recs[static_cast<std::size_t>(3 * t + 1)].pre_return);
    CHECK(recs[static_cast<std::size_t>(3 * t)].pre_return == recs[static_cast<std::size_t>(3 * t + 2)].pre_return);
  }
}

TEST_CASE("pipeline: logged hidden params change only the log column") {
  const auto dir = fresh_dir("firewall");
  ExperimentConfig c = tiny_config(dir);
  const auto meta = cmd_meta_train(c);
  cmd_cnp_train(c, meta.replay);
  EvalOptions opts;
  opts.write_csv = false;
  const auto base = cmd_evaluate(c, opts);
  opts.logged_hidden_params = std::vector<double>{9.0, 8.0, 7.0};
  const auto swapped = cmd_evaluate(c, opts);
  REQUIRE(base.size() == swapped.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(swapped[i].hidden_param == 9.0 - static_cast<double>(base[i].task_id));
    EvalRecord x = swapped[i];
    x.hidden_param = base[i].hidden_param;
    CHECK(x == base[i]);
  }
  opts.logged_hidden_params = std::vector<double>{1.0};
  CHECK_THROWS_AS(cmd_evaluate(c, opts), DimensionError);
}

}  // TEST_SUITE
