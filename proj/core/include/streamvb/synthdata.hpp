#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "streamvb/design.hpp"
#include "streamvb/model.hpp"

namespace streamvb::synth {

/// Sub-seed of stream `index`: splitmix64 applied to seed + (index + 1) times
/// the 64-bit golden ratio. Hosts and other independent substreams all draw
/// their generators this way.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index);

/// Standard normal distribution function.
double normal_cdf(double x);

/// Piecewise parameter path: each segment holds `count` samples. With step
/// interpolation a segment's parameters apply unchanged; with linear
/// interpolation they move towards the next segment's values across the
/// segment (the last segment stays constant).
struct DriftSchedule {
  enum class Interpolation { step, linear };
  struct Segment {
    Eigen::VectorXd params;
    std::size_t count = 0;
  };
  std::vector<Segment> segments;
  Interpolation interpolation = Interpolation::step;

  /// Throws SpecError for empty schedules, zero counts or mixed dimensions.
  void validate() const;
  std::size_t total() const;
  /// Parameters at sample index i (0-based).
  Eigen::VectorXd at(std::size_t i) const;
};

// --- Additive model with three binary and three smooth effects ------------

double additive_f4(double x);
double additive_f5(double x);
double additive_f6(double x);
/// Mean of y given predictors x1..x6.
double additive_mean(std::span<const double> x);
inline constexpr double kAdditiveBeta[3] = {0.2, -0.3, 0.6};

/// Intercept, x1..x6 linear, penalized splines of x4..x6 on [-3, 3] (K = 24).
ModelSpec additive_spec();

/// One stream per host, predictors x1..x6; host g uses split_seed(seed, g).
std::vector<Stream> gen_additive_stream(std::uint64_t seed, std::size_t hosts, std::size_t per_host);

// --- Drifting simple linear regression ------------------------------------

/// (beta0, beta1, sigma_eps^2) over segments of 300, 500 and 400 samples.
DriftSchedule drifting_linear_schedule();
/// Predictor "x".
Stream gen_drifting_linear(std::uint64_t seed);
/// Intercept and slope of x.
ModelSpec drifting_linear_spec();

// --- Drifting sine --------------------------------------------------------

/// (alpha0, alpha1, alpha2, sigma_eps^2): ten combinations of 600 samples.
DriftSchedule drifting_sine_schedule();
double sine_mean(double x, const Eigen::VectorXd& params);
Stream gen_drifting_sine(std::uint64_t seed);
/// Intercept, slope of x and a spline of x on [0, 1] with K = 24.
ModelSpec drifting_sine_spec();

// --- Drifting penalized spline --------------------------------------------

/// Intercept, slope of x and a spline of x on [0, 1] with K = 24.
ModelSpec drifting_spline_spec();

/// Truth of the drifting spline stream: coefficient vectors
/// (beta0, beta1, u_1..u_24) at anchor steps 0, every, 2 every, ... with
/// linear interpolation in between. The anchors are fixed data; step s uses
/// anchors (s / every) and (s / every + 1), cycling after the last anchor.
class DriftingSplineTruth {
 public:
  explicit DriftingSplineTruth(std::size_t anchor_every);

  static std::size_t anchor_count();
  static Eigen::VectorXd anchor(std::size_t a);
  static constexpr double kNoiseVariance = 0.25;

  std::size_t anchor_every() const { return every_; }
  Eigen::VectorXd coefficients(std::size_t step) const;
  double mean(double x, std::size_t step) const;
  const Design& design() const { return design_; }

 private:
  std::size_t every_;
  Design design_;
};

/// B host streams of `steps` rows each (one row per host per step), predictor
/// "x" ~ Uniform(0, 1).
std::vector<Stream> gen_drifting_spline(std::uint64_t seed, std::size_t hosts, std::size_t steps,
                                        std::size_t anchor_every);

// --- Grouped data ---------------------------------------------------------

struct GroupedConfig {
  std::size_t n = 5000;
  std::size_t groups = 20;
  std::size_t spline_K = 10;
  double group_sd = 0.7;
  double noise_sd = 0.5;
};

/// Intercept, x1 and x2 linear, splines of x1 and x2 on [0, 1] and a
/// random intercept for column "group".
ModelSpec grouped_spec(const GroupedConfig& cfg = {});

/// Predictors x1, x2 ~ Uniform(0, 1), group uniform over cfg.groups ids.
Stream gen_grouped_stream(std::uint64_t seed, const GroupedConfig& cfg = {});

/// Model of a named generator: additive, drifting_linear, drifting_sine,
/// drifting_spline or grouped. Throws SpecError for other names.
ModelSpec generator_spec(const std::string& name);
bool is_generator(const std::string& name);

/// Splits a stream into `parts` contiguous pieces of near-equal size after a
/// seeded shuffle of the rows (seed 0 keeps the original order).
std::vector<Stream> random_split(const Stream& stream, std::size_t parts, std::uint64_t seed);

}  // namespace streamvb::synth
