#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "menv/menv.h"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<size_t> jobs;
  bool print_config = false;
};

struct PlotFlags {
  std::optional<std::string> sentence, signer;
  std::optional<size_t> dimension, t_start, t_end;
};

using Command = menv_status (*)(const menv_config*);

int fail(menv_status status) {
  std::fprintf(stderr, "assess: %s: %s\n", menv_status_name(status), menv_last_error());
  return menv_exit_code(status);
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

int execute(const Common& common, const PlotFlags& plot, Command command) {
  std::vector<std::string> sets = common.overrides;
  if (plot.sentence) sets.push_back("plot.sentence=" + quoted(*plot.sentence));
  if (plot.signer) sets.push_back("plot.signer=" + quoted(*plot.signer));
  if (plot.dimension) sets.push_back("plot.dimension=" + std::to_string(*plot.dimension));
  if (plot.t_start) sets.push_back("plot.t_start=" + std::to_string(*plot.t_start));
  if (plot.t_end) sets.push_back("plot.t_end=" + std::to_string(*plot.t_end));
  if (common.jobs) sets.push_back("jobs=" + std::to_string(*common.jobs));

  std::vector<const char*> argv;
  for (const auto& s : sets) argv.push_back(s.c_str());
  menv_config* config = nullptr;
  menv_status st =
      menv_config_load(common.config.empty() ? nullptr : common.config.c_str(), argv.data(), argv.size(), &config);
  if (st != MENV_OK) return fail(st);

  if (common.print_config) {
    char* text = nullptr;
    st = menv_config_dump(config, &text);
    if (st == MENV_OK) {
      std::fputs(text, stdout);
      menv_string_free(text);
    }
  }
  if (st == MENV_OK) st = command(config);
  menv_config_free(config);
  return st == MENV_OK ? 0 : fail(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-envelope assessment of signed productions"};
  app.require_subcommand(1);

  Common common;
  PlotFlags plot;
  Command command = nullptr;

  const std::vector<std::pair<const char*, std::pair<const char*, Command>>> table = {
      {"synth", {"generate the synthetic corpus", menv_cmd_synth}},
      {"train-vae", {"train the pose VAE on native poses", menv_cmd_train_vae}},
      {"encode", {"encode every production into latent space", menv_cmd_encode}},
      {"fit-envelope", {"select references, align natives and fit envelopes", menv_cmd_fit_envelope}},
      {"score", {"score learner productions against the envelopes", menv_cmd_score}},
      {"evaluate", {"correlate scores with ratings", menv_cmd_evaluate}},
      {"plot", {"render an envelope plot as SVG", menv_cmd_plot}},
      {"run", {"run the whole pipeline", menv_cmd_run}},
  };

  for (const auto& [name, entry] : table) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config,-c", common.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set,-s", common.overrides, "override a config value, key.path=value")
        ->allow_extra_args(false)
        ->take_all();
    sub->add_option("--jobs,-j", common.jobs, "worker cap")->check(CLI::PositiveNumber);
    sub->add_flag("--print-config", common.print_config, "echo the resolved configuration");
    if (std::string(name) == "plot") {
      sub->add_option("--sentence", plot.sentence, "sentence id (default: first)");
      sub->add_option("--signer", plot.signer, "overlay this learner's scored production");
      sub->add_option("--dimension,-d", plot.dimension, "latent dimension");
      sub->add_option("--t-start", plot.t_start, "first frame");
      sub->add_option("--t-end", plot.t_end, "one past the last frame");
    }
    const Command fn = entry.second;
    sub->callback([&command, fn] { command = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return execute(common, plot, command);
}
