#include "menv/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "menv/alignment.hpp"
#include "menv/error.hpp"
#include "menv/parallel.hpp"
#include "menv/plot.hpp"
#include "menv/reference.hpp"
#include "menv/text_io.hpp"

namespace menv {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& section, const std::set<std::string>& allowed, const std::string& name) {
  if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + (name.empty() ? key : name + "." + key) + "'");
}

json learner_json(const DeviationSpec& d) {
  return json{{"delta", d.delta}, {"mode", to_string(d.mode)}, {"window", {d.start, d.end}}};
}

DeviationSpec learner_from_json(const json& j) {
  reject_unknown(j, {"delta", "mode", "window"}, "synth.learners[]");
  DeviationSpec d;
  if (j.contains("delta")) d.delta = j.at("delta").get<double>();
  if (j.contains("mode")) d.mode = deviation_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("window")) {
    auto w = j.at("window").get<std::vector<double>>();
    if (w.size() != 2) throw ConfigError("learner window must be [start, end]");
    d.start = w[0];
    d.end = w[1];
  }
  if (!(d.delta >= 0.0)) throw ConfigError("learner delta must be >= 0");
  if (!(d.start >= 0.0 && d.start < d.end && d.end <= 1.0))
    throw ConfigError("learner window must satisfy 0 <= start < end <= 1");
  return d;
}

std::vector<DeviationSpec> default_learners() {
  std::vector<DeviationSpec> out;
  for (double delta : {0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 2.0, 2.0}) out.push_back(default_deviation(delta));
  for (DeviationMode mode : {DeviationMode::kFreeze, DeviationMode::kWrongChannel})
    out.push_back(DeviationSpec{1.0, 0.4, 0.6, mode});
  return out;
}

fs::path path_or_empty(const json& j) { return j.is_null() ? fs::path{} : fs::path(j.get<std::string>()); }

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw IoError("missing " + what + ": " + path.string());
}

CorpusManifest load_valid_manifest(const RunConfig& c) {
  require_file(c.manifest_path(), "corpus manifest (run `synth` or set paths.corpus)");
  CorpusManifest m = load_manifest(c.manifest_path());
  const auto problems = validate_corpus(m);
  if (!problems.empty()) {
    std::string msg = "corpus is invalid (" + std::to_string(problems.size()) + " problems): " + problems.front();
    throw ConfigError(msg);
  }
  return m;
}

std::vector<ManifestEntry> entries_of(const CorpusManifest& m, const std::string& sentence, SignerRole role) {
  std::vector<ManifestEntry> out;
  for (const auto& e : m.entries_with_role(role))
    if (e.sentence == sentence) out.push_back(e);
  return out;
}

json loss_json(const VaeLoss& l) {
  return json{{"total", l.total}, {"l1_hands", l.l1_hands}, {"l1_body", l.l1_body}, {"kld", l.kld}};
}

}  // namespace

fs::path RunConfig::latent_path(const std::string& sentence, const std::string& signer) const {
  return output_dir / "latents" / (sentence + "_" + signer + ".csv");
}
fs::path RunConfig::aligned_path(const std::string& sentence, const std::string& signer) const {
  return output_dir / "aligned" / (sentence + "_" + signer + ".csv");
}
fs::path RunConfig::envelope_path(const std::string& sentence) const {
  return output_dir / ("envelope_" + sentence + ".json");
}
fs::path RunConfig::score_path(const std::string& sentence, const std::string& signer) const {
  return output_dir / ("scores_" + sentence + "_" + signer + ".json");
}
fs::path RunConfig::points_path(const std::string& sentence, const std::string& signer) const {
  return output_dir / ("scores_" + sentence + "_" + signer + "_points.csv");
}
fs::path RunConfig::plot_path(const std::string& sentence, std::size_t dimension) const {
  return output_dir / ("plot_" + sentence + "_" + std::to_string(dimension) + ".svg");
}

json default_config_json() {
  json learners = json::array();
  for (const auto& d : default_learners()) learners.push_back(learner_json(d));
  const CorpusSpec spec;
  json vae = to_json(VaeConfig{});
  vae.erase("seed");
  json scoring = to_json(ScoringOptions{});
  scoring.erase("dtw_radius");
  return json{{"paths", {{"output", "out"}, {"corpus", nullptr}, {"ratings", nullptr}}},
              {"jobs", 1},
              {"synth",
               {{"sentences", spec.sentences},
                {"natives", spec.natives},
                {"duration", spec.duration},
                {"channels", spec.channels},
                {"noise_std", spec.noise_std},
                {"frame_rate", spec.frame_rate},
                {"learners", learners}}},
              {"vae", vae},
              {"gp", to_json(GpConfig{})},
              {"dtw", {{"radius", kDefaultDtwRadius}}},
              {"scoring", scoring},
              {"plot", {{"sentence", ""}, {"signer", ""}, {"dimension", 0}, {"t_start", 0}, {"t_end", nullptr}}}};
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig config_from_json(const json& merged) {
  try {
    reject_unknown(merged, {"seed", "paths", "jobs", "synth", "vae", "gp", "dtw", "scoring", "plot"}, "");
    RunConfig c;
    if (!merged.contains("seed") || merged.at("seed").is_null())
      throw ConfigError("seed is required (set it in the config file or with --set seed=N)");
    c.seed = json_count(merged.at("seed"), "seed");

    const json& paths = merged.at("paths");
    reject_unknown(paths, {"output", "corpus", "ratings"}, "paths");
    c.output_dir = path_or_empty(paths.value("output", json("out")));
    if (c.output_dir.empty()) throw ConfigError("paths.output must be set");
    c.corpus_dir = path_or_empty(paths.value("corpus", json(nullptr)));
    if (c.corpus_dir.empty()) c.corpus_dir = c.output_dir / "corpus";
    c.ratings = path_or_empty(paths.value("ratings", json(nullptr)));

    c.jobs = json_count(merged.at("jobs"), "jobs");
    if (c.jobs < 1) throw ConfigError("jobs must be >= 1");

    const json& s = merged.at("synth");
    reject_unknown(s, {"sentences", "natives", "duration", "channels", "noise_std", "frame_rate", "learners"}, "synth");
    c.synth.seed = c.seed;
    c.synth.sentences = json_count(s.at("sentences"), "synth.sentences");
    c.synth.natives = json_count(s.at("natives"), "synth.natives");
    c.synth.duration = json_count(s.at("duration"), "synth.duration");
    c.synth.channels = json_count(s.at("channels"), "synth.channels");
    c.synth.noise_std = s.at("noise_std").get<double>();
    c.synth.frame_rate = s.at("frame_rate").get<double>();
    for (const auto& l : s.at("learners")) c.synth.learners.push_back(learner_from_json(l));
    if (c.synth.sentences < 1) throw ConfigError("synth.sentences must be >= 1");
    if (c.synth.natives < 3) throw ConfigError("synth.natives must be >= 3");
    if (c.synth.duration < 20) throw ConfigError("synth.duration must be >= 20");
    if (c.synth.channels < 4) throw ConfigError("synth.channels must be >= 4");
    if (!(c.synth.noise_std >= 0.0)) throw ConfigError("synth.noise_std must be >= 0");
    if (!(c.synth.frame_rate > 0.0)) throw ConfigError("synth.frame_rate must be positive");

    const json& v = merged.at("vae");
    reject_unknown(v, {"input_dim", "hidden", "latent_dim", "alpha", "beta", "lr", "batch_size", "epochs",
                       "noise_scale", "seed"},
                   "vae");
    VaeConfig vdef;
    vdef.seed = c.seed;
    c.vae = vae_config_from_json(v, vdef);
    c.vae.validate();

    c.gp = gp_config_from_json(merged.at("gp"));

    const json& d = merged.at("dtw");
    reject_unknown(d, {"radius"}, "dtw");
    c.scoring = scoring_options_from_json(merged.at("scoring"));
    c.scoring.dtw_radius = json_count(d.at("radius"), "dtw.radius");

    const json& p = merged.at("plot");
    reject_unknown(p, {"sentence", "signer", "dimension", "t_start", "t_end"}, "plot");
    c.plot.sentence = p.value("sentence", "");
    c.plot.signer = p.value("signer", "");
    if (p.contains("dimension")) c.plot.dimension = json_count(p.at("dimension"), "plot.dimension");
    if (p.contains("t_start")) c.plot.t_start = json_count(p.at("t_start"), "plot.t_start");
    if (p.contains("t_end") && !p.at("t_end").is_null()) c.plot.t_end = json_count(p.at("t_end"), "plot.t_end");

    c.resolved = merged;
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

json merge_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  json merged = default_config_json();
  if (file) {
    if (!fs::exists(*file)) throw ConfigError("config file not found: " + file->string());
    json user;
    try {
      user = json::parse(read_text_file(*file));
    } catch (const json::exception& e) {
      throw ConfigError(file->string() + ": " + e.what());
    }
    if (!user.is_object()) throw ConfigError(file->string() + ": top level must be an object");
    merged.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(merged, o);
  return merged;
}

RunConfig resolve_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  return config_from_json(merge_config(file, overrides));
}

std::string canonical_json(const json& j) { return j.dump(2) + "\n"; }

void cmd_synth(const RunConfig& c) {
  CorpusSpec spec = c.synth;
  spec.seed = c.seed;
  gen_corpus(spec, c.corpus_dir);
}

void cmd_train_vae(const RunConfig& c) {
  const CorpusManifest m = load_valid_manifest(c);
  const Eigen::MatrixXd pool = native_pose_pool(m);
  TrainResult r = train_vae(pool, m.partition, c.vae, nullptr);
  save_model(r.model, c.vae_path());
  std::string csv = "epoch,total,l1_hands,l1_body,kld\n";
  for (std::size_t e = 0; e < r.epoch_means.size(); ++e) {
    const auto& l = r.epoch_means[e];
    csv += std::to_string(e + 1) + ',' + format_double(l.total) + ',' + format_double(l.l1_hands) + ',' +
           format_double(l.l1_body) + ',' + format_double(l.kld) + '\n';
  }
  write_text_file(c.output_dir / "vae_loss.csv", csv);
  json summary{{"initial", loss_json(r.initial)},
               {"final", loss_json(r.final)},
               {"pool_size", pool.cols()},
               {"epochs", c.vae.epochs}};
  write_text_file(c.output_dir / "vae_train.json", canonical_json(summary));
}

void cmd_encode(const RunConfig& c) {
  const CorpusManifest m = load_valid_manifest(c);
  require_file(c.vae_path(), "VAE model (run `train-vae` first)");
  const VaeModel model = load_model(c.vae_path());
  const LatentCorpus latents = encode_corpus(model, m, c.jobs);
  for (const auto& [key, seq] : latents) save_latents(seq, c.latent_path(key.first, key.second));
}

void cmd_fit_envelope(const RunConfig& c) {
  const CorpusManifest m = load_valid_manifest(c);
  for (const auto& e : m.entries) require_file(c.latent_path(e.sentence, e.signer), "latents (run `encode` first)");
  LatentCorpus latents;
  for (const auto& e : m.entries) {
    LatentSequence seq = load_latents(c.latent_path(e.sentence, e.signer));
    seq.sentence_id = e.sentence;
    seq.signer_id = e.signer;
    latents.emplace(EntryKey{e.sentence, e.signer}, std::move(seq));
  }

  std::vector<ReferenceChoice> refs;
  json ref_list = json::array();
  for (const auto& sentence : m.sentences) {
    std::vector<const LatentSequence*> natives;
    for (const auto& e : entries_of(m, sentence, SignerRole::kNative)) natives.push_back(&latents.at({e.sentence, e.signer}));
    if (natives.size() < 3)
      throw ConfigError("sentence '" + sentence + "' has " + std::to_string(natives.size()) +
                        " native productions; at least 3 are needed");
    refs.push_back(select_reference(natives));
    ref_list.push_back(to_json(refs.back()));
  }
  write_text_file(c.output_dir / "references.json", canonical_json(json{{"references", ref_list}}));

  const AlignedCorpus aligned = align_corpus(latents, refs, c.scoring.dtw_radius, c.jobs);
  for (const auto& [key, seq] : aligned) save_aligned(seq, c.aligned_path(key.first, key.second));

  json fits = json::object();
  for (const auto& ref : refs) {
    std::vector<const AlignedLatentSequence*> natives;
    for (const auto& e : entries_of(m, ref.sentence_id, SignerRole::kNative))
      natives.push_back(&aligned.at({e.sentence, e.signer}));
    std::vector<GpFitTrace> traces;
    const MotionEnvelope env = fit_envelope(ref.sentence_id, ref.reference_signer, natives, c.gp, c.jobs, &traces);
    save_envelope(env, c.envelope_path(ref.sentence_id));
    json dims = json::array();
    for (std::size_t d = 0; d < traces.size(); ++d) {
      const auto& hp = env.models[d].hyperparams();
      dims.push_back(json{{"dimension", d},
                          {"iterations", traces[d].iterations},
                          {"converged", traces[d].converged},
                          {"final_loss", traces[d].best_losses.back()},
                          {"lengthscale", hp.lengthscale},
                          {"outputscale", hp.outputscale},
                          {"noise", hp.noise}});
    }
    fits[ref.sentence_id] = dims;
  }
  write_text_file(c.output_dir / "envelope_fit.json", canonical_json(fits));
}

void cmd_score(const RunConfig& c) {
  const CorpusManifest m = load_valid_manifest(c);
  const auto learners = m.entries_with_role(SignerRole::kLearner);
  for (const auto& s : m.sentences) require_file(c.envelope_path(s), "envelope (run `fit-envelope` first)");
  for (const auto& e : learners) require_file(c.latent_path(e.sentence, e.signer), "latents (run `encode` first)");

  for (const auto& sentence : m.sentences) {
    const MotionEnvelope env = load_envelope(c.envelope_path(sentence));
    const EnvelopeGrid grid = envelope_grid(env);
    std::vector<ManifestEntry> todo = entries_of(m, sentence, SignerRole::kLearner);
    std::vector<ScoreBreakdown> results(todo.size());
    parallel_for(todo.size(), c.jobs, [&](std::size_t i) {
      LatentSequence seq = load_latents(c.latent_path(todo[i].sentence, todo[i].signer));
      seq.sentence_id = todo[i].sentence;
      seq.signer_id = todo[i].signer;
      results[i] = assess(env, grid, seq, c.scoring);
    });
    for (std::size_t i = 0; i < todo.size(); ++i) {
      const auto anomalies = locate_anomalies(results[i], c.scoring.min_run);
      write_text_file(c.score_path(sentence, todo[i].signer),
                      canonical_json(to_json(results[i], anomalies, c.scoring)));
      write_text_file(c.points_path(sentence, todo[i].signer), points_csv(results[i]));
    }
  }
}

void cmd_evaluate(const RunConfig& c) {
  const CorpusManifest m = load_valid_manifest(c);
  const auto learners = m.entries_with_role(SignerRole::kLearner);
  for (const auto& e : learners) require_file(c.score_path(e.sentence, e.signer), "scores (run `score` first)");

  std::map<EntryKey, double> manual;
  std::string source;
  if (!c.ratings.empty()) {
    require_file(c.ratings, "ratings file");
    json j;
    try {
      j = json::parse(read_text_file(c.ratings));
    } catch (const json::exception& e) {
      throw ParseError(c.ratings.string() + ": " + e.what());
    }
    manual = rater_standardized_ratings(ratings_from_json(j));
    source = "ratings";
  } else {
    require_file(c.truth_path(), "truth file or paths.ratings");
    manual = proxy_ratings(load_truth(c.truth_path()));
    source = "synthetic_proxy";
  }

  std::vector<SystemScore> scores;
  json score_list = json::array();
  for (const auto& e : learners) {
    json s;
    try {
      s = json::parse(read_text_file(c.score_path(e.sentence, e.signer)));
      scores.push_back(SystemScore{e.sentence, e.signer, s.at("pd_measure").get<double>(),
                                   static_cast<double>(s.at("ood_count").get<std::size_t>())});
    } catch (const json::exception& ex) {
      throw ParseError(c.score_path(e.sentence, e.signer).string() + ": " + ex.what());
    }
    score_list.push_back(json{{"sentence", e.sentence},
                              {"signer", e.signer},
                              {"pd_measure", scores.back().pd_measure},
                              {"ood_count", s.at("ood_count")},
                              {"rating", manual.count({e.sentence, e.signer}) ? json(manual.at({e.sentence, e.signer}))
                                                                              : json(nullptr)}});
  }
  const EvaluationReport report = evaluate_run(scores, manual);
  json out{{"config", c.resolved}, {"rating_source", source}, {"scores", score_list}, {"evaluation", to_json(report)}};
  write_text_file(c.output_dir / "report.json", canonical_json(out));
}

void cmd_plot(const RunConfig& c) {
  std::string sentence = c.plot.sentence;
  if (sentence.empty()) {
    const CorpusManifest m = load_valid_manifest(c);
    sentence = m.sentences.front();
  }
  require_file(c.envelope_path(sentence), "envelope (run `fit-envelope` first)");
  std::optional<ScoreBreakdown> test;
  if (!c.plot.signer.empty()) {
    const fs::path points = c.points_path(sentence, c.plot.signer);
    require_file(points, "per-point scores (run `score` first)");
    test = breakdown_from_points_csv(read_text_file(points));
    test->sentence_id = sentence;
    test->signer_id = c.plot.signer;
  }
  const MotionEnvelope env = load_envelope(c.envelope_path(sentence));
  PlotOptions o;
  o.dimension = c.plot.dimension;
  o.t_start = c.plot.t_start;
  o.t_end = c.plot.t_end;
  o.band_variance = c.scoring.ood_variance;
  o.z = c.scoring.z;
  const std::string svg = plot_envelope_svg(env, test ? &*test : nullptr, o);
  write_text_file(c.plot_path(sentence, c.plot.dimension), svg);
}

void cmd_run(const RunConfig& c) {
  if (!fs::exists(c.manifest_path())) cmd_synth(c);
  cmd_train_vae(c);
  cmd_encode(c);
  cmd_fit_envelope(c);
  cmd_score(c);
  cmd_evaluate(c);
}

}  // namespace menv
