// mwcnp: meta-train / cnp-train / evaluate / report.

#include "mwcnp/harness/config.hpp"
#include "mwcnp/harness/pipeline.hpp"
#include "mwcnp/harness/report.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace mwcnp;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value config file");
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--set", c.overrides, "extra key=value overrides")->take_all();
}

harness::ExperimentConfig resolve(const Common& c) {
  harness::ExperimentConfig cfg = c.config_path.empty() ? harness::ExperimentConfig{} : harness::load_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw harness::ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    if (key == "env") {
      // switching env re-bases the defaults, as in a config file
      harness::ExperimentConfig base = harness::default_config(envs::env_kind_from_string(kv.substr(eq + 1)));
      base.seed = cfg.seed;
      base.out_dir = cfg.out_dir;
      cfg = base;
    } else {
      harness::set_key(cfg, key, kv.substr(eq + 1));
    }
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-world conditional neural process experiments"};
  app.require_subcommand(1);

  Common common;
  std::string replay_path;
  std::string meta_ckpt;
  std::string cnp_ckpt;
  std::string metrics_path;

  auto* meta = app.add_subcommand("meta-train", "meta-train the policy and advantage; log a replay store");
  add_common(meta, common);
  auto* cnp_train = app.add_subcommand("cnp-train", "train the world model on a replay store");
  add_common(cnp_train, common);
  cnp_train->add_option("--replay", replay_path, "replay file (default OUT/replay.bin)");
  auto* evaluate = app.add_subcommand("evaluate", "fine-tune per mode on held-out tasks; write metrics.csv");
  add_common(evaluate, common);
  evaluate->add_option("--meta", meta_ckpt, "meta-policy checkpoint (default OUT/meta.ckpt)");
  evaluate->add_option("--cnp", cnp_ckpt, "world-model checkpoint (default OUT/cnp.ckpt)");
  auto* report = app.add_subcommand("report", "summary table and plots from a metrics CSV");
  add_common(report, common);
  report->add_option("--metrics", metrics_path, "metrics CSV (default OUT/metrics.csv)");

  CLI11_PARSE(app, argc, argv);

  harness::ExperimentConfig cfg;
  try {
    cfg = resolve(common);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (meta->parsed()) {
      const auto out = harness::cmd_meta_train(cfg, [](const norml::IterationStats& s) {
        if (s.iteration % 10 == 0) {
          std::cout << "iter " << s.iteration << " pre " << s.pre_return << " post " << s.post_return << " alpha "
                    << s.alpha << std::endl;
        }
      });
      std::cout << "wrote " << out.checkpoint.string() << ", " << out.replay.string() << " (" << out.task_batches
                << " task batches)\n";
    } else if (cnp_train->parsed()) {
      const auto replay = replay_path.empty() ? cfg.out_dir / harness::artifacts::kReplay : std::filesystem::path(replay_path);
      const auto out = harness::cmd_cnp_train(cfg, replay, [](const cnp::TrainStats& s) {
        if (s.step % 1000 == 0) std::cout << "step " << s.step << " nll " << s.nll << std::endl;
      });
      std::cout << "nll " << out.initial_nll << " -> " << out.final_nll << "; wrote " << out.checkpoint.string() << '\n';
    } else if (evaluate->parsed()) {
      harness::EvalOptions opts;
      opts.meta_checkpoint = meta_ckpt;
      opts.cnp_checkpoint = cnp_ckpt;
      const auto records = harness::cmd_evaluate(cfg, opts);
      std::cout << harness::format_summary(harness::summarize(records));
    } else if (report->parsed()) {
      const auto csv = metrics_path.empty() ? cfg.out_dir / harness::artifacts::kMetrics : std::filesystem::path(metrics_path);
      const auto out = harness::cmd_report(csv, cfg.out_dir);
      std::cout << harness::format_summary(out.summary);
      for (const auto& w : out.summary.warnings) std::cerr << "warning: " << w << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
