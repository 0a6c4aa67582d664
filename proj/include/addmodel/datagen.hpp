#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace addmodel {

/// Uncentered component shapes; the scenario subtracts their means.
struct TruthShapes {
  std::function<double(double)> f;
  std::function<double(double)> g;
  std::string name;
};

/// f(x) = -10 sin(1.9x + 0.2 pi), g(z) = 3 exp(-500 (z - 0.1)^2).
TruthShapes default_truths();

struct Scenario {
  double rho = 0.0;
  double a = 0.0;
  double snr = 0.0;
  double sigma = 0.0;
  double mean_f = 0.0;  // E[f shape(X)], X ~ U(0,1)
  double mean_g = 0.0;  // E[g shape(Z)], Z = aX + (1-a)U
  double signal_variance = 0.0;
  TruthShapes shapes;

  /// Centered truths f0 = f shape - mean_f and g0 = g shape - mean_g.
  double f0(double x) const { return shapes.f(x) - mean_f; }
  double g0(double z) const { return shapes.g(z) - mean_g; }
};

/// a in [0,1) with a / sqrt(a^2 + (1-a)^2) = rho, so corr(X, aX + (1-a)U) = rho.
double solve_mixing_coefficient(double rho);

/// (E[10 sin(1.9X + 0.2 pi)], E[3 exp(-500 (Z - 0.1)^2)]) for Z = aX + (1-a)U.
/// The expectation over Z uses `nodes_per_axis` tensor Gauss–Legendre nodes,
/// or refinement to 1e-10 when that is 0.
std::pair<double, double> centering_constants(double a, int nodes_per_axis = 0);

/// Var(f0(X) + g0(Z)) by refined tensor quadrature over (X, U).
double signal_variance(const Scenario& scenario);

/// Scenario with sigma^2 = signal variance / snr. snr = +inf gives sigma = 0.
Scenario make_scenario(double rho, double snr, TruthShapes shapes = default_truths());

/// Splittable counter-based generator: output k of stream s is a SplitMix64
/// finalizer applied to (key, s, k). No state, so any draw is addressable.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const;
  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t counter) const;
  /// Standard normal by inverse-CDF transform of uniform().
  double normal(std::uint64_t stream, std::uint64_t counter) const;

 private:
  std::uint64_t key_;
};

std::uint64_t mix64(std::uint64_t v);

struct Dataset {
  std::vector<double> x;
  std::vector<double> z;
  std::vector<double> y;
  std::uint64_t seed = 0;
  std::string scenario_ref;

  std::size_t size() const { return y.size(); }
};

Dataset simulate(const Scenario& scenario, std::size_t n, std::uint64_t seed);

/// Identifier string for a scenario (shape name, rho, snr).
std::string scenario_id(const Scenario& scenario);

nlohmann::json scenario_to_json(const Scenario& scenario);

/// CSV with header x,z,y (columns may appear in any order on read).
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(const std::filesystem::path& path);

/// Sidecar metadata: scenario parameters plus seed and n.
void write_dataset_metadata(const std::filesystem::path& path, const Dataset& data,
                            const Scenario& scenario);

}  // namespace addmodel
