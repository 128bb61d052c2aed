// igb: experiment runner. Exit codes: 0 success, 2 invalid configuration,
// 1 any other failure. Errors are reported on stderr as one JSON object.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "igb/error.hpp"
#include "igb/experiment.hpp"
#include "igb/io.hpp"

namespace {

using nlohmann::json;
namespace ex = igb::experiment;

int report(const std::string& type, const std::string& message, const json& details, int code,
           const char* key = "details") {
  json err = {{"error", type}, {"message", message}};
  if (!details.is_null()) err[key] = details;
  std::cerr << err.dump() << '\n';
  return code;
}

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "Experiment config (JSON) or manifest.json");
  if (config_required) opt->required();
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--seed", c.seed, "Base seed");
  sub->add_option("--runs", c.runs, "Number of runs");
  sub->add_option("--threads", c.threads, "Worker threads (0 = hardware concurrency)");
}

ex::Overrides overrides(const Common& c) {
  ex::Overrides o;
  if (c.out) o.out = *c.out;
  o.seed = c.seed;
  o.runs = c.runs;
  o.threads = c.threads;
  ex::apply_env(o);
  return o;
}

int execute(const Common& c, std::optional<ex::Kind> kind) {
  json cfg = c.config.empty() ? json::object() : ex::load_config(c.config);
  const json resolved = ex::resolve(cfg, overrides(c), kind);
  const ex::Outcome out = ex::run(resolved);
  const json msg = {{"status", "ok"},
                    {"kind", resolved["kind"]},
                    {"out_dir", out.out_dir.string()},
                    {"files", out.files}};
  std::cout << msg.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Initial guessing bias experiments"};
  app.set_version_flag("--version", std::string(ex::kVersion));
  app.require_subcommand(1);

  struct Entry {
    ex::Kind kind;
    const char* help;
  };
  const Entry entries[] = {
      {ex::Kind::StaticEnsemble, "G0 ensembles over random initializations"},
      {ex::Kind::GammaScan, "Layer-wise variance ratio gamma"},
      {ex::Kind::TheoryTable, "Closed-form predictions per architecture"},
      {ex::Kind::FilteredDynamics, "Screen inits by G0 and train each group"},
      {ex::Kind::DistributionTest, "Normalized batch samples vs closed-form density"},
  };
  Common common;
  std::optional<ex::Kind> chosen;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(ex::to_string(e.kind), e.help);
    const bool needs_config = e.kind != ex::Kind::TheoryTable && e.kind != ex::Kind::DistributionTest;
    add_common(sub, common, needs_config);
    const ex::Kind k = e.kind;
    sub->callback([&chosen, k] { chosen = k; });
  }
  bool run_any = false;
  auto* run = app.add_subcommand("run", "Run any config or re-run a manifest");
  add_common(run, common, true);
  run->callback([&run_any] { run_any = true; });

  std::string cmp_a, cmp_b, cmp_out;
  auto* cmp = app.add_subcommand("compare", "Diff two result directories of the same kind");
  cmp->add_option("a", cmp_a, "First result directory")->required();
  cmp->add_option("b", cmp_b, "Second result directory")->required();
  cmp->add_option("--out", cmp_out, "Write the diff to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("UsageError", e.what(), nullptr, 2);
  }

  try {
    if (cmp->parsed()) {
      const json diff = ex::compare(cmp_a, cmp_b);
      if (cmp_out.empty()) {
        std::cout << diff.dump(2) << '\n';
      } else {
        igb::io::write_text(cmp_out, diff.dump(2) + "\n");
      }
      return 0;
    }
    return execute(common, run_any ? std::nullopt : chosen);
  } catch (const igb::ConfigError& e) {
    return report("ConfigError", "invalid configuration", e.violations(), 2, "violations");
  } catch (const igb::DivergenceError& e) {
    return report("DivergenceError", e.what(), {{"step", e.step()}, {"loss", e.loss()}}, 1);
  } catch (const igb::Error& e) {
    return report("Error", e.what(), nullptr, 1);
  } catch (const std::exception& e) {
    return report("InternalError", e.what(), nullptr, 1);
  }
}
