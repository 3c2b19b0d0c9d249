#include "streamvb/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "streamvb/error.hpp"

namespace streamvb::synth {

namespace {

// (beta0, beta1, u_1..u_24) per anchor.
constexpr std::size_t kAnchorDim = 26;
#include "drift_anchors.inc"

constexpr std::size_t kAnchorCount = sizeof(kDriftAnchors) / sizeof(kDriftAnchors[0]);

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

BlockSpec spline_block(const std::string& name, const std::string& source, double lo, double hi, std::size_t K) {
  BlockSpec b;
  b.kind = BlockKind::spline;
  b.name = name;
  b.source = source;
  b.K = K;
  b.knots = KnotConfig{lo, hi, K - 2};
  b.out_of_range = OutOfRangePolicy::clamp;
  return b;
}

Record scalar_record(double x, double y) {
  Record r;
  r.x = {x};
  r.y = y;
  return r;
}

Stream from_schedule(std::uint64_t seed, const DriftSchedule& schedule,
                     double (*mean)(double, const Eigen::VectorXd&)) {
  schedule.validate();
  std::mt19937_64 rng(split_seed(seed, 0));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Stream s;
  s.predictors = {"x"};
  const std::size_t n = schedule.total();
  s.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd p = schedule.at(i);
    const double x = unif(rng);
    const double var = p(p.size() - 1);
    s.records.push_back(scalar_record(x, mean(x, p) + std::sqrt(var) * normal(rng)));
  }
  return s;
}

double linear_mean(double x, const Eigen::VectorXd& p) { return p(0) + p(1) * x; }

}  // namespace

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

void DriftSchedule::validate() const {
  if (segments.empty()) throw SpecError("drift schedule has no segments");
  for (const auto& s : segments) {
    if (s.count == 0) throw SpecError("drift segment with zero samples");
    if (s.params.size() != segments.front().params.size()) throw SpecError("drift segments differ in dimension");
  }
}

std::size_t DriftSchedule::total() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.count;
  return n;
}

Eigen::VectorXd DriftSchedule::at(std::size_t i) const {
  std::size_t start = 0;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    if (i < start + seg.count || k + 1 == segments.size()) {
      if (interpolation == Interpolation::step || k + 1 == segments.size()) return seg.params;
      const double frac = static_cast<double>(i - start) / static_cast<double>(seg.count);
      return (1.0 - frac) * seg.params + frac * segments[k + 1].params;
    }
    start += seg.count;
  }
  return segments.back().params;
}

// ---------------------------------------------------------------------------

double additive_f4(double x) { return 2.0 * normal_cdf(6.0 * x - 3.0); }
double additive_f5(double x) { return std::sin(3.0 * std::numbers::pi * x * x * x); }
double additive_f6(double x) { return std::cos(4.0 * std::numbers::pi * x); }

double additive_mean(std::span<const double> x) {
  if (x.size() != 6) throw DimensionError("additive model takes six predictors");
  return kAdditiveBeta[0] * x[0] + kAdditiveBeta[1] * x[1] + kAdditiveBeta[2] * x[2] + additive_f4(x[3]) +
         additive_f5(x[4]) + additive_f6(x[5]);
}

ModelSpec additive_spec() {
  ModelSpec spec;
  spec.intercept = true;
  spec.linear = {"x1", "x2", "x3", "x4", "x5", "x6"};
  for (const char* v : {"x4", "x5", "x6"}) spec.blocks.push_back(spline_block(std::string("f_") + v, v, -3.0, 3.0, 24));
  return with_default_priors(spec);
}

std::vector<Stream> gen_additive_stream(std::uint64_t seed, std::size_t hosts, std::size_t per_host) {
  if (hosts == 0) throw SpecError("need at least one host");
  std::vector<Stream> out(hosts);
  for (std::size_t g = 0; g < hosts; ++g) {
    std::mt19937_64 rng(split_seed(seed, g));
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> normal(0.0, 1.0);
    Stream& s = out[g];
    s.predictors = {"x1", "x2", "x3", "x4", "x5", "x6"};
    s.records.reserve(per_host);
    for (std::size_t i = 0; i < per_host; ++i) {
      Record r;
      r.x.resize(6);
      for (int j = 0; j < 3; ++j) r.x[j] = coin(rng) ? 1.0 : 0.0;
      for (int j = 3; j < 6; ++j) r.x[j] = normal(rng);
      r.y = additive_mean(r.x) + normal(rng);
      s.records.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

DriftSchedule drifting_linear_schedule() {
  DriftSchedule d;
  d.segments = {{Eigen::Vector3d(4.0, 3.0, 0.350), 300},
                {Eigen::Vector3d(3.665, 2.72, 0.325), 500},
                {Eigen::Vector3d(3.33, 2.44, 0.300), 400}};
  return d;
}

Stream gen_drifting_linear(std::uint64_t seed) { return from_schedule(seed, drifting_linear_schedule(), linear_mean); }

ModelSpec drifting_linear_spec() {
  ModelSpec spec;
  spec.linear = {"x"};
  return with_default_priors(spec);
}

DriftSchedule drifting_sine_schedule() {
  DriftSchedule d;
  for (int k = 0; k < 10; ++k) {
    const double f = k / 9.0;
    Eigen::Vector4d p(4.0, 0.5 + 2.5 * f, 5.0 * f, 0.1 + 0.3 * f);
    d.segments.push_back({p, 600});
  }
  return d;
}

double sine_mean(double x, const Eigen::VectorXd& p) {
  return p(0) + p(1) * std::sin(6.0 * std::numbers::pi * x + p(2));
}

Stream gen_drifting_sine(std::uint64_t seed) { return from_schedule(seed, drifting_sine_schedule(), sine_mean); }

ModelSpec drifting_sine_spec() {
  ModelSpec spec;
  spec.linear = {"x"};
  spec.blocks.push_back(spline_block("f", "x", 0.0, 1.0, 24));
  return with_default_priors(spec);
}

// ---------------------------------------------------------------------------

ModelSpec drifting_spline_spec() { return drifting_sine_spec(); }

DriftingSplineTruth::DriftingSplineTruth(std::size_t anchor_every)
    : every_(anchor_every), design_(drifting_spline_spec()) {
  if (anchor_every == 0) throw SpecError("anchor spacing must be positive");
}

std::size_t DriftingSplineTruth::anchor_count() { return kAnchorCount; }

Eigen::VectorXd DriftingSplineTruth::anchor(std::size_t a) {
  if (a >= kAnchorCount) throw RangeError("anchor index out of range");
  return Eigen::Map<const Eigen::VectorXd>(kDriftAnchors[a], kAnchorDim);
}

Eigen::VectorXd DriftingSplineTruth::coefficients(std::size_t step) const {
  const std::size_t seg = step / every_;
  const double frac = static_cast<double>(step % every_) / static_cast<double>(every_);
  const auto a = anchor(seg % kAnchorCount);
  const auto b = anchor((seg + 1) % kAnchorCount);
  return (1.0 - frac) * a + frac * b;
}

double DriftingSplineTruth::mean(double x, std::size_t step) const {
  return design_.row(std::map<std::string, double>{{"x", x}}).dot(coefficients(step));
}

std::vector<Stream> gen_drifting_spline(std::uint64_t seed, std::size_t hosts, std::size_t steps,
                                        std::size_t anchor_every) {
  if (hosts == 0) throw SpecError("need at least one host");
  const DriftingSplineTruth truth(anchor_every);
  const double sd = std::sqrt(DriftingSplineTruth::kNoiseVariance);
  std::vector<Stream> out(hosts);
  std::vector<std::mt19937_64> rngs;
  for (std::size_t b = 0; b < hosts; ++b) {
    rngs.emplace_back(split_seed(seed, b));
    out[b].predictors = {"x"};
    out[b].records.reserve(steps);
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Design& design = truth.design();
  Eigen::VectorXd c(static_cast<Eigen::Index>(design.columns()));
  const Binding binding = design.bind(out[0]);
  for (std::size_t s = 0; s < steps; ++s) {
    const Eigen::VectorXd coef = truth.coefficients(s);
    for (std::size_t b = 0; b < hosts; ++b) {
      Record r;
      r.x = {unif(rngs[b])};
      design.fill_row(binding, r, c);
      r.y = c.dot(coef) + sd * normal(rngs[b]);
      out[b].records.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ModelSpec grouped_spec(const GroupedConfig& cfg) {
  ModelSpec spec;
  spec.linear = {"x1", "x2"};
  spec.blocks.push_back(spline_block("f1", "x1", 0.0, 1.0, cfg.spline_K));
  spec.blocks.push_back(spline_block("f2", "x2", 0.0, 1.0, cfg.spline_K));
  BlockSpec g;
  g.kind = BlockKind::random_intercept;
  g.name = "group";
  g.source = "group";
  g.K = cfg.groups;
  spec.blocks.push_back(g);
  return with_default_priors(spec);
}

Stream gen_grouped_stream(std::uint64_t seed, const GroupedConfig& cfg) {
  if (cfg.groups == 0) throw SpecError("need at least one group");
  std::mt19937_64 rng(split_seed(seed, 0));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(cfg.groups) - 1);
  std::vector<double> effect(cfg.groups);
  for (auto& e : effect) e = cfg.group_sd * normal(rng);
  Stream s;
  s.predictors = {"x1", "x2"};
  s.group_columns = {"group"};
  s.records.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Record r;
    r.x = {unif(rng), unif(rng)};
    r.groups = {pick(rng)};
    const double mean = 1.0 + 0.5 * r.x[0] - r.x[1] + std::sin(2.0 * std::numbers::pi * r.x[0]) +
                        0.5 * std::cos(3.0 * std::numbers::pi * r.x[1]) + effect[static_cast<std::size_t>(r.groups[0])];
    r.y = mean + cfg.noise_sd * normal(rng);
    s.records.push_back(std::move(r));
  }
  return s;
}

ModelSpec generator_spec(const std::string& name) {
  if (name == "additive") return additive_spec();
  if (name == "drifting_linear") return drifting_linear_spec();
  if (name == "drifting_sine") return drifting_sine_spec();
  if (name == "drifting_spline") return drifting_spline_spec();
  if (name == "grouped") return grouped_spec();
  throw SpecError("unknown generator '" + name + "'");
}

bool is_generator(const std::string& name) {
  return name == "additive" || name == "drifting_linear" || name == "drifting_sine" || name == "drifting_spline" ||
         name == "grouped";
}

std::vector<Stream> random_split(const Stream& stream, std::size_t parts, std::uint64_t seed) {
  if (parts == 0) throw SpecError("cannot split into zero parts");
  std::vector<std::size_t> order(stream.size());
  std::iota(order.begin(), order.end(), 0);
  if (seed != 0) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Stream> out(parts);
  std::size_t next = 0;
  for (std::size_t k = 0; k < parts; ++k) {
    out[k].predictors = stream.predictors;
    out[k].group_columns = stream.group_columns;
    const std::size_t size = stream.size() / parts + (k < stream.size() % parts ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) out[k].records.push_back(stream.records[order[next++]]);
  }
  return out;
}

}  // namespace streamvb::synth
