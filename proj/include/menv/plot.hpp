#pragma once

#include <optional>
#include <string>

#include "menv/envelope.hpp"
#include "menv/scoring.hpp"

namespace menv {

struct PlotOptions {
  std::size_t dimension = 0;
  std::size_t t_start = 0;
  std::optional<std::size_t> t_end;  // exclusive; defaults to the envelope length
  VarianceKind band_variance = VarianceKind::kPredictive;
  double z = 1.96;
  int width = 800;
  int height = 360;
};

// SVG of one latent dimension: shaded band, posterior mean, the native
// trajectories and, if given, the test trajectory. Runs of outside points are
// drawn as separate elements with class "outside". Output bytes depend only on
// the inputs.
std::string plot_envelope_svg(const MotionEnvelope& envelope, const ScoreBreakdown* test, const PlotOptions& options);

}  // namespace menv
