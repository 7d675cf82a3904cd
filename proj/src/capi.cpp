#include "menv/menv.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "menv/envelope.hpp"
#include "menv/error.hpp"
#include "menv/pipeline.hpp"
#include "menv/scoring.hpp"
#include "menv/vae.hpp"

struct menv_config {
  nlohmann::json merged;
  menv::RunConfig resolved;
};

struct menv_vae {
  menv::VaeModel model;
};

struct menv_envelope {
  menv::MotionEnvelope envelope;
  menv::EnvelopeGrid grid;
};

namespace {

thread_local std::string last_error;

menv_status status_of(menv::ErrorKind kind) {
  switch (kind) {
    case menv::ErrorKind::kInvalidArgument: return MENV_E_INVALID_ARGUMENT;
    case menv::ErrorKind::kParse: return MENV_E_PARSE;
    case menv::ErrorKind::kDimension: return MENV_E_DIMENSION;
    case menv::ErrorKind::kRange: return MENV_E_RANGE;
    case menv::ErrorKind::kDegenerate: return MENV_E_DEGENERATE;
    case menv::ErrorKind::kConfig: return MENV_E_CONFIG;
    case menv::ErrorKind::kNumeric: return MENV_E_NUMERIC;
    case menv::ErrorKind::kIo: return MENV_E_IO;
  }
  return MENV_E_INTERNAL;
}

template <class Fn>
menv_status guarded(const char* where, Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return MENV_OK;
  } catch (const menv::Error& e) {
    last_error = std::string(where) + ": " + e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = std::string(where) + ": " + e.what();
    return MENV_E_IO;
  } catch (const std::bad_alloc&) {
    last_error = std::string(where) + ": out of memory";
    return MENV_E_INTERNAL;
  } catch (const std::exception& e) {
    last_error = std::string(where) + ": " + e.what();
    return MENV_E_INTERNAL;
  }
}

menv_status null_arg(const char* where) {
  last_error = std::string(where) + ": null argument";
  return MENV_E_INVALID_ARGUMENT;
}

template <void (*Cmd)(const menv::RunConfig&)>
menv_status run_command(const menv_config* config, const char* where) {
  if (!config) return null_arg(where);
  return guarded(where, [&] { Cmd(config->resolved); });
}

}  // namespace

extern "C" {

const char* menv_last_error(void) { return last_error.c_str(); }

const char* menv_status_name(menv_status status) {
  switch (status) {
    case MENV_OK: return "ok";
    case MENV_E_INVALID_ARGUMENT: return "invalid_argument";
    case MENV_E_PARSE: return "parse_error";
    case MENV_E_DIMENSION: return "dimension_error";
    case MENV_E_RANGE: return "range_error";
    case MENV_E_DEGENERATE: return "degenerate_input";
    case MENV_E_CONFIG: return "config_error";
    case MENV_E_NUMERIC: return "numeric_error";
    case MENV_E_IO: return "io_error";
    case MENV_E_INTERNAL: return "internal_error";
  }
  return "unknown";
}

int menv_exit_code(menv_status status) {
  switch (status) {
    case MENV_OK: return 0;
    case MENV_E_NUMERIC: return 3;
    case MENV_E_IO: return 4;
    case MENV_E_INTERNAL: return 1;
    default: return 2;
  }
}

menv_status menv_config_load(const char* path, const char* const* overrides, size_t n_overrides, menv_config** out) {
  if (!out || (n_overrides && !overrides)) return null_arg("menv_config_load");
  *out = nullptr;
  return guarded("config", [&] {
    std::vector<std::string> list;
    for (size_t i = 0; i < n_overrides; ++i) {
      if (!overrides[i]) throw menv::InvalidArgument("null override");
      list.emplace_back(overrides[i]);
    }
    std::optional<std::filesystem::path> file;
    if (path) file = std::filesystem::path(path);
    auto cfg = std::make_unique<menv_config>();
    cfg->merged = menv::merge_config(file, list);
    cfg->resolved = menv::config_from_json(cfg->merged);
    *out = cfg.release();
  });
}

menv_status menv_config_set(menv_config* config, const char* assignment) {
  if (!config || !assignment) return null_arg("menv_config_set");
  return guarded("config", [&] {
    nlohmann::json next = config->merged;
    menv::apply_override(next, assignment);
    config->resolved = menv::config_from_json(next);
    config->merged = std::move(next);
  });
}

menv_status menv_config_set_jobs(menv_config* config, size_t jobs) {
  if (!config) return null_arg("menv_config_set_jobs");
  return menv_config_set(config, ("jobs=" + std::to_string(jobs)).c_str());
}

menv_status menv_config_dump(const menv_config* config, char** out) {
  if (!config || !out) return null_arg("menv_config_dump");
  *out = nullptr;
  return guarded("config", [&] {
    const std::string text = menv::canonical_json(config->resolved.resolved);
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
  });
}

void menv_config_free(menv_config* config) { delete config; }
void menv_string_free(char* text) { std::free(text); }

menv_status menv_cmd_synth(const menv_config* c) { return run_command<menv::cmd_synth>(c, "synth"); }
menv_status menv_cmd_train_vae(const menv_config* c) { return run_command<menv::cmd_train_vae>(c, "train-vae"); }
menv_status menv_cmd_encode(const menv_config* c) { return run_command<menv::cmd_encode>(c, "encode"); }
menv_status menv_cmd_fit_envelope(const menv_config* c) {
  return run_command<menv::cmd_fit_envelope>(c, "fit-envelope");
}
menv_status menv_cmd_score(const menv_config* c) { return run_command<menv::cmd_score>(c, "score"); }
menv_status menv_cmd_evaluate(const menv_config* c) { return run_command<menv::cmd_evaluate>(c, "evaluate"); }
menv_status menv_cmd_plot(const menv_config* c) { return run_command<menv::cmd_plot>(c, "plot"); }
menv_status menv_cmd_run(const menv_config* c) { return run_command<menv::cmd_run>(c, "run"); }

menv_status menv_vae_load(const char* path, menv_vae** out) {
  if (!path || !out) return null_arg("menv_vae_load");
  *out = nullptr;
  return guarded("vae", [&] { *out = new menv_vae{menv::load_model(path)}; });
}

size_t menv_vae_latent_dim(const menv_vae* vae) { return vae ? vae->model.config.latent_dim : 0; }

menv_status menv_vae_encode(const menv_vae* vae, const double* pose, double* mu, double* logvar) {
  if (!vae || !pose || !mu || !logvar) return null_arg("menv_vae_encode");
  return guarded("vae", [&] {
    menv::SkeletonPose p;
    std::memcpy(p.coords.data(), pose, sizeof(double) * menv::kPoseDim);
    const menv::LatentFrame f = menv::encode(vae->model, p);
    std::memcpy(mu, f.mu.data(), sizeof(double) * static_cast<size_t>(f.mu.size()));
    std::memcpy(logvar, f.logvar.data(), sizeof(double) * static_cast<size_t>(f.logvar.size()));
  });
}

menv_status menv_vae_decode(const menv_vae* vae, const double* z, double* pose) {
  if (!vae || !z || !pose) return null_arg("menv_vae_decode");
  return guarded("vae", [&] {
    const auto n = static_cast<Eigen::Index>(vae->model.config.latent_dim);
    const menv::SkeletonPose p = menv::decode(vae->model, Eigen::Map<const Eigen::VectorXd>(z, n));
    std::memcpy(pose, p.coords.data(), sizeof(double) * menv::kPoseDim);
  });
}

void menv_vae_free(menv_vae* vae) { delete vae; }

menv_status menv_envelope_load(const char* path, menv_envelope** out) {
  if (!path || !out) return null_arg("menv_envelope_load");
  *out = nullptr;
  return guarded("envelope", [&] {
    auto e = std::make_unique<menv_envelope>();
    e->envelope = menv::load_envelope(path);
    e->grid = menv::envelope_grid(e->envelope);
    *out = e.release();
  });
}

menv_status menv_envelope_shape(const menv_envelope* envelope, size_t* length, size_t* dims) {
  if (!envelope || !length || !dims) return null_arg("menv_envelope_shape");
  *length = envelope->envelope.length;
  *dims = envelope->envelope.dims();
  last_error.clear();
  return MENV_OK;
}

menv_status menv_envelope_posterior(const menv_envelope* envelope, size_t dimension, double* mean, double* var_f,
                                    double* var_pred) {
  if (!envelope || !mean || !var_f || !var_pred) return null_arg("menv_envelope_posterior");
  return guarded("envelope", [&] {
    if (dimension >= envelope->envelope.dims())
      throw menv::InvalidArgument("dimension " + std::to_string(dimension) + " out of range");
    const auto d = static_cast<Eigen::Index>(dimension);
    for (Eigen::Index t = 0; t < envelope->grid.mean.rows(); ++t) {
      mean[t] = envelope->grid.mean(t, d);
      var_f[t] = envelope->grid.var_f(t, d);
      var_pred[t] = envelope->grid.var_pred(t, d);
    }
  });
}

menv_status menv_envelope_score(const menv_envelope* envelope, const double* mu, const double* logvar, size_t frames,
                                size_t dims, menv_score* out) {
  if (!envelope || !mu || !logvar || !out) return null_arg("menv_envelope_score");
  return guarded("score", [&] {
    if (dims != envelope->envelope.dims())
      throw menv::DimensionError("expected " + std::to_string(envelope->envelope.dims()) + " latent dimensions");
    if (frames < 1) throw menv::InvalidArgument("empty latent sequence");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    menv::LatentSequence seq;
    seq.sentence_id = envelope->envelope.sentence_id;
    seq.signer_id = "test";
    seq.mu = Eigen::Map<const RowMajor>(mu, static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(dims));
    seq.logvar = Eigen::Map<const RowMajor>(logvar, static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(dims));
    const menv::ScoreBreakdown b = menv::assess(envelope->envelope, envelope->grid, seq);
    *out = menv_score{b.pd_measure, b.ood_count, b.length(), b.dims()};
  });
}

void menv_envelope_free(menv_envelope* envelope) { delete envelope; }

}  // extern "C"
