#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "menv/envelope.hpp"
#include "menv/evaluation.hpp"
#include "menv/scoring.hpp"
#include "menv/synth.hpp"
#include "menv/vae.hpp"

namespace menv {

struct PlotRequest {
  std::string sentence;  // empty: first sentence of the corpus
  std::string signer;    // empty: envelope only
  std::size_t dimension = 0;
  std::size_t t_start = 0;
  std::optional<std::size_t> t_end;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::filesystem::path corpus_dir;  // holds manifest.json (and truth.json when synthetic)
  std::filesystem::path ratings;     // optional ratings JSON
  std::size_t jobs = 1;
  CorpusSpec synth;
  VaeConfig vae;
  GpConfig gp;
  ScoringOptions scoring;
  PlotRequest plot;
  nlohmann::json resolved;  // fully merged configuration, echoed into reports

  std::filesystem::path manifest_path() const { return corpus_dir / "manifest.json"; }
  std::filesystem::path truth_path() const { return corpus_dir / "truth.json"; }
  std::filesystem::path vae_path() const { return output_dir / "vae.json"; }
  std::filesystem::path latent_path(const std::string& sentence, const std::string& signer) const;
  std::filesystem::path aligned_path(const std::string& sentence, const std::string& signer) const;
  std::filesystem::path envelope_path(const std::string& sentence) const;
  std::filesystem::path score_path(const std::string& sentence, const std::string& signer) const;
  std::filesystem::path points_path(const std::string& sentence, const std::string& signer) const;
  std::filesystem::path plot_path(const std::string& sentence, std::size_t dimension) const;
};

// Built-in defaults; "seed" is deliberately absent.
nlohmann::json default_config_json();

// Applies "a.b.c=value" to j. The value is read as JSON when it parses as
// JSON, otherwise as a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// defaults <- file (when given) <- overrides, without validation.
nlohmann::json merge_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);
// merge_config followed by config_from_json.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);
RunConfig config_from_json(const nlohmann::json& merged);

// Canonical text: sorted keys, two-space indent, trailing newline.
std::string canonical_json(const nlohmann::json& j);

void cmd_synth(const RunConfig& config);
void cmd_train_vae(const RunConfig& config);
void cmd_encode(const RunConfig& config);
void cmd_fit_envelope(const RunConfig& config);
void cmd_score(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_plot(const RunConfig& config);
// synth (when the corpus is missing) through evaluate.
void cmd_run(const RunConfig& config);

}  // namespace menv
