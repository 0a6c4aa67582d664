#include "addmodel/datagen.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>
#include <fmt/format.h>

#include "addmodel/errors.hpp"
#include "addmodel/quadrature.hpp"

namespace addmodel {

TruthShapes default_truths() {
  return {
      [](double x) { return -10.0 * std::sin(1.9 * x + 0.2 * std::numbers::pi); },
      [](double z) { return 3.0 * std::exp(-500.0 * (z - 0.1) * (z - 0.1)); },
      "sine_bump",
  };
}

double solve_mixing_coefficient(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw InputError(fmt::format("solve_mixing_coefficient: rho={} outside [0, 1)", rho));
  }
  // With t = a / (1 - a): rho = t / sqrt(1 + t^2).
  return rho / (rho + std::sqrt(1.0 - rho * rho));
}

namespace {

double integrate_unit_interval_refined(const std::function<double(double)>& integrand) {
  auto at = [&](int nodes) {
    const QuadratureRule rule = composite_gauss_legendre(0.0, 1.0, nodes / 16, 16);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * integrand(rule.nodes[i]);
    return sum;
  };
  int nodes = 64;
  double previous = at(nodes);
  for (nodes *= 2; nodes <= 1 << 16; nodes *= 2) {
    const double current = at(nodes);
    if (std::abs(current - previous) < 1e-12) return current;
    previous = current;
  }
  throw NumericalError("integrate_unit_interval_refined: no convergence");
}

double expectation_over_z(const std::function<double(double)>& h, double a, int nodes_per_axis) {
  auto integrand = [&](double x, double u) { return h(a * x + (1.0 - a) * u); };
  return nodes_per_axis > 0 ? integrate_unit_square(integrand, nodes_per_axis)
                            : integrate_unit_square_refined(integrand);
}

}  // namespace

std::pair<double, double> centering_constants(double a, int nodes_per_axis) {
  if (!(a >= 0.0 && a < 1.0)) throw InputError("centering_constants: a outside [0, 1)");
  const TruthShapes shapes = default_truths();
  const double center_f = -integrate_unit_interval_refined(shapes.f);
  const double center_g = expectation_over_z(shapes.g, a, nodes_per_axis);
  return {center_f, center_g};
}

double signal_variance(const Scenario& scenario) {
  const double a = scenario.a;
  auto signal = [&](double x, double u) { return scenario.f0(x) + scenario.g0(a * x + (1.0 - a) * u); };
  const double mean = integrate_unit_square_refined(signal);
  const double second = integrate_unit_square_refined([&](double x, double u) {
    const double s = signal(x, u);
    return s * s;
  });
  return std::max(0.0, second - mean * mean);
}

Scenario make_scenario(double rho, double snr, TruthShapes shapes) {
  if (!(snr > 0.0)) throw InputError(fmt::format("make_scenario: snr={} must be positive", snr));
  Scenario s;
  s.rho = rho;
  s.a = solve_mixing_coefficient(rho);
  s.snr = snr;
  s.shapes = std::move(shapes);
  s.mean_f = integrate_unit_interval_refined(s.shapes.f);
  s.mean_g = expectation_over_z(s.shapes.g, s.a, 0);
  s.signal_variance = signal_variance(s);
  s.sigma = std::isinf(snr) ? 0.0 : std::sqrt(s.signal_variance / snr);
  return s;
}

std::uint64_t mix64(std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return v ^ (v >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t counter) const {
  return mix64(mix64(key_ ^ (stream * 0xd1b54a32d192ed03ULL)) + counter * 0x9e3779b97f4a7c15ULL);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t counter) const {
  return (static_cast<double>(bits(stream, counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t stream, std::uint64_t counter) const {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * uniform(stream, counter));
}

namespace {
constexpr std::uint64_t kStreamX = 0;
constexpr std::uint64_t kStreamU = 1;
constexpr std::uint64_t kStreamNoise = 2;
}  // namespace

std::string scenario_id(const Scenario& scenario) {
  return fmt::format("{}_rho{:g}_snr{:g}", scenario.shapes.name, scenario.rho, scenario.snr);
}

Dataset simulate(const Scenario& scenario, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw InputError("simulate: need n >= 2");
  const CounterRng rng(seed);
  Dataset data;
  data.seed = seed;
  data.scenario_ref = scenario_id(scenario);
  data.x.resize(n);
  data.z.resize(n);
  data.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(kStreamX, i);
    const double u = rng.uniform(kStreamU, i);
    const double z = scenario.a * x + (1.0 - scenario.a) * u;
    double y = scenario.f0(x) + scenario.g0(z);
    if (scenario.sigma > 0.0) y += scenario.sigma * rng.normal(kStreamNoise, i);
    data.x[i] = x;
    data.z[i] = z;
    data.y[i] = y;
  }
  return data;
}

nlohmann::json scenario_to_json(const Scenario& scenario) {
  return {
      {"truths", scenario.shapes.name},
      {"rho", scenario.rho},
      {"a", scenario.a},
      {"snr", std::isinf(scenario.snr) ? nlohmann::json("inf") : nlohmann::json(scenario.snr)},
      {"sigma", scenario.sigma},
      {"mean_f", scenario.mean_f},
      {"mean_g", scenario.mean_g},
      {"signal_variance", scenario.signal_variance},
  };
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot open {} for writing", path.string()));
  out << "x,z,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << fmt::format("{:.17g},{:.17g},{:.17g}\n", data.x[i], data.z[i], data.y[i]);
  }
  if (!out) throw InputError(fmt::format("write failed for {}", path.string()));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream stream(line);
  std::string cell;
  while (std::getline(stream, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

double parse_number(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InputError(fmt::format("{}:{}: '{}' is not a number", path.string(), line, text));
  }
  return value;
}

}  // namespace

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw InputError(fmt::format("{}: empty file", path.string()));
  const std::vector<std::string> header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw InputError(fmt::format("{}: missing column '{}'", path.string(), name));
  };
  const std::size_t cx = column("x");
  const std::size_t cz = column("z");
  const std::size_t cy = column("y");

  Dataset data;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InputError(fmt::format("{}:{}: expected {} fields, found {}", path.string(),
                                   line_number, header.size(), cells.size()));
    }
    data.x.push_back(parse_number(cells[cx], path, line_number));
    data.z.push_back(parse_number(cells[cz], path, line_number));
    data.y.push_back(parse_number(cells[cy], path, line_number));
  }
  return data;
}

void write_dataset_metadata(const std::filesystem::path& path, const Dataset& data,
                            const Scenario& scenario) {
  nlohmann::json meta = scenario_to_json(scenario);
  meta["seed"] = data.seed;
  meta["n"] = data.size();
  meta["scenario_ref"] = data.scenario_ref;
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot open {} for writing", path.string()));
  out << meta.dump(2) << '\n';
}

}  // namespace addmodel
