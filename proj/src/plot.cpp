#include "menv/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <vector>

#include "menv/error.hpp"

namespace menv {

namespace {

std::string fixed(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  std::string s(buf, res.ptr);
  return s == "-0.00" ? "0.00" : s;
}

struct Frame {
  double x0, x1, y0, y1;  // pixel box
  double t0, t1, v0, v1;  // data box

  double x(double t) const { return x0 + (t - t0) / (t1 - t0) * (x1 - x0); }
  double y(double v) const { return y1 - (v - v0) / (v1 - v0) * (y1 - y0); }
};

std::string points(const Frame& f, std::size_t from, std::size_t to, const std::vector<double>& values) {
  std::string out;
  for (std::size_t t = from; t < to; ++t) {
    if (!out.empty()) out += ' ';
    out += fixed(f.x(static_cast<double>(t))) + ',' + fixed(f.y(values[t]));
  }
  return out;
}

}  // namespace

std::string plot_envelope_svg(const MotionEnvelope& env, const ScoreBreakdown* test, const PlotOptions& o) {
  if (o.dimension >= env.dims())
    throw InvalidArgument("dimension " + std::to_string(o.dimension) + " is outside [0, " + std::to_string(env.dims()) +
                          ")");
  const std::size_t t_start = o.t_start;
  const std::size_t t_end = o.t_end.value_or(env.length);
  if (t_end > env.length) throw InvalidArgument("t-range ends past the envelope length " + std::to_string(env.length));
  if (t_start >= t_end) throw InvalidArgument("empty t-range");
  if (test && test->length() != env.length) throw InvalidArgument("test trajectory length differs from the envelope");
  if (test && test->dims() != env.dims()) throw InvalidArgument("test trajectory dimension count differs");
  if (o.width < 100 || o.height < 100) throw InvalidArgument("plot is too small");

  const GpModel& model = env.models[o.dimension];
  const GpPosterior post = model.posterior(model.times());
  const Eigen::VectorXd& band_var = o.band_variance == VarianceKind::kPredictive ? post.var_pred : post.var_f;
  const auto d = static_cast<Eigen::Index>(o.dimension);

  std::vector<double> mean(env.length), lower(env.length), upper(env.length), value;
  for (std::size_t t = 0; t < env.length; ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    mean[t] = post.mean(i);
    std::tie(lower[t], upper[t]) = confidence_region(post.mean(i), band_var(i), o.z);
  }
  std::vector<std::vector<double>> natives;
  for (Eigen::Index r = 0; r < model.targets().rows(); ++r) {
    natives.emplace_back(env.length);
    for (std::size_t t = 0; t < env.length; ++t) natives.back()[t] = model.targets()(r, static_cast<Eigen::Index>(t));
  }
  if (test) {
    value.resize(env.length);
    for (std::size_t t = 0; t < env.length; ++t) value[t] = test->value(static_cast<Eigen::Index>(t), d);
  }

  double lo = lower[t_start], hi = upper[t_start];
  auto widen = [&](const std::vector<double>& v) {
    for (std::size_t t = t_start; t < t_end; ++t) {
      lo = std::min(lo, v[t]);
      hi = std::max(hi, v[t]);
    }
  };
  widen(lower);
  widen(upper);
  for (const auto& n : natives) widen(n);
  if (test) widen(value);
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  const double margin = 40.0;
  const double span_t = t_end - t_start > 1 ? static_cast<double>(t_end - 1 - t_start) : 1.0;
  const Frame f{margin, o.width - margin, margin, o.height - margin,
                static_cast<double>(t_start), static_cast<double>(t_start) + span_t, lo - pad, hi + pad};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(o.width) + "\" height=\"" +
         std::to_string(o.height) + "\" viewBox=\"0 0 " + std::to_string(o.width) + ' ' + std::to_string(o.height) +
         "\">\n";
  svg += "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" + std::to_string(o.width) + "\" height=\"" +
         std::to_string(o.height) + "\" fill=\"#ffffff\"/>\n";
  svg += "<text class=\"title\" x=\"" + fixed(margin) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" +
         env.sentence_id + " dimension " + std::to_string(o.dimension) + (test ? " " + test->signer_id : "") +
         "</text>\n";
  svg += "<line class=\"axis\" x1=\"" + fixed(f.x0) + "\" y1=\"" + fixed(f.y1) + "\" x2=\"" + fixed(f.x1) +
         "\" y2=\"" + fixed(f.y1) + "\" stroke=\"#444444\"/>\n";
  svg += "<line class=\"axis\" x1=\"" + fixed(f.x0) + "\" y1=\"" + fixed(f.y0) + "\" x2=\"" + fixed(f.x0) +
         "\" y2=\"" + fixed(f.y1) + "\" stroke=\"#444444\"/>\n";
  svg += "<text class=\"label\" x=\"" + fixed(f.x0) + "\" y=\"" + fixed(f.y1 + 16) +
         "\" font-family=\"sans-serif\" font-size=\"11\">t=" + std::to_string(t_start) + "</text>\n";
  svg += "<text class=\"label\" x=\"" + fixed(f.x1 - 40) + "\" y=\"" + fixed(f.y1 + 16) +
         "\" font-family=\"sans-serif\" font-size=\"11\">t=" + std::to_string(t_end - 1) + "</text>\n";

  std::string band = points(f, t_start, t_end, upper);
  for (std::size_t t = t_end; t-- > t_start;) band += ' ' + fixed(f.x(static_cast<double>(t))) + ',' + fixed(f.y(lower[t]));
  svg += "<polygon class=\"band\" points=\"" + band + "\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";
  for (const auto& n : natives)
    svg += "<polyline class=\"native\" points=\"" + points(f, t_start, t_end, n) +
           "\" fill=\"none\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
  svg += "<polyline class=\"mean\" points=\"" + points(f, t_start, t_end, mean) +
         "\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\"/>\n";
  if (test) {
    svg += "<polyline class=\"test\" points=\"" + points(f, t_start, t_end, value) +
           "\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1.5\"/>\n";
    for (std::size_t t = t_start; t < t_end;) {
      if (!test->outside(static_cast<Eigen::Index>(t), d)) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end + 1 < t_end && test->outside(static_cast<Eigen::Index>(end + 1), d)) ++end;
      if (end == t) {
        svg += "<circle class=\"outside\" cx=\"" + fixed(f.x(static_cast<double>(t))) + "\" cy=\"" +
               fixed(f.y(value[t])) + "\" r=\"3\" fill=\"#d62728\"/>\n";
      } else {
        svg += "<polyline class=\"outside\" points=\"" + points(f, t, end + 1, value) +
               "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"3\"/>\n";
      }
      t = end + 1;
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace menv
