#include "vecrep/traffic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vecrep/rng.hpp"

namespace vecrep::traffic {

namespace {

const std::vector<std::string> kLinearColumns = {"time_s",    "vehicle_id", "role",
                                                 "pos_m",     "speed_mps",  "direction"};
const std::vector<std::string> kPlanarColumns = {"time_s", "vehicle_id", "role",      "x_m",
                                                 "y_m",    "speed_mps",  "heading_deg"};

double wrap_position(double x, double length) {
  double w = std::fmod(x, length);
  if (w < 0) w += length;
  return w;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("load_trace: line " + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& tok, std::size_t line_no, const std::string& col) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  double value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last || !std::isfinite(value))
    fail_line(line_no, "invalid value for " + col + ": '" + tok + "'");
  return value;
}

std::int64_t parse_int(const std::string& tok, std::size_t line_no, const std::string& col) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last)
    fail_line(line_no, "invalid value for " + col + ": '" + tok + "'");
  return value;
}

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

double heading_difference_deg(double a, double b) {
  double diff = std::fabs(std::fmod(a - b, 360.0));
  return std::min(diff, 360.0 - diff);
}

}  // namespace

void ChannelParams::validate() const {
  if (!(bandwidth_hz > 0)) throw std::invalid_argument("ChannelParams: bandwidth_hz must be positive");
  if (!(tx_power_w > 0)) throw std::invalid_argument("ChannelParams: tx_power_w must be positive");
  if (noise_w < 0) throw std::invalid_argument("ChannelParams: noise_w must be non-negative");
  if (interference_w < 0)
    throw std::invalid_argument("ChannelParams: interference_w must be non-negative");
  if (pathloss_exponent < 0)
    throw std::invalid_argument("ChannelParams: pathloss_exponent must be non-negative");
  if (input_bits < 0) throw std::invalid_argument("ChannelParams: input_bits must be non-negative");
  if (output_bits < 0)
    throw std::invalid_argument("ChannelParams: output_bits must be non-negative");
}

Frame generate_ppp_snapshot(double road_km, double gamma_t, double gamma_s,
                            std::uint64_t seed) {
  if (!(road_km > 0)) throw std::invalid_argument("generate_ppp_snapshot: road_km must be positive");
  if (gamma_t < 0 || gamma_s < 0)
    throw std::invalid_argument("generate_ppp_snapshot: densities must be non-negative");
  SplitMix64 gen(seed);
  const std::int64_t n_tav = rpois(gen, gamma_t * road_km);
  const std::int64_t n_sev = rpois(gen, gamma_s * road_km);
  const double length_m = road_km * 1000.0;

  Frame f;
  f.time_s = 0.0;
  f.vehicles.reserve(static_cast<std::size_t>(n_tav + n_sev));
  std::int64_t next_id = 0;
  for (std::int64_t i = 0; i < n_tav; ++i) {
    VehicleSnapshot v;
    v.vehicle_id = next_id++;
    v.role = Role::TaV;
    v.pos_m = runif(gen, 0.0, length_m);
    f.vehicles.push_back(v);
  }
  for (std::int64_t i = 0; i < n_sev; ++i) {
    VehicleSnapshot v;
    v.vehicle_id = next_id++;
    v.role = Role::SeV;
    v.pos_m = runif(gen, 0.0, length_m);
    f.vehicles.push_back(v);
  }
  return f;
}

Trace generate_synthetic_trace(const Frame& initial, const RoadGeometry& geometry,
                               double duration_s, const SpeedLaw& law, double timestep_s,
                               std::uint64_t seed) {
  if (!(timestep_s > 0))
    throw std::invalid_argument("generate_synthetic_trace: timestep_s must be positive");
  if (duration_s < 0)
    throw std::invalid_argument("generate_synthetic_trace: duration_s must be non-negative");
  if (geometry.planar)
    throw std::invalid_argument("generate_synthetic_trace: synthetic motion is one-dimensional");
  if (law.mps < 0)
    throw std::invalid_argument("generate_synthetic_trace: speed law must be non-negative");

  SplitMix64 gen(seed);
  std::vector<double> speeds(initial.vehicles.size());
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    speeds[i] = law.kind == SpeedLaw::Kind::constant ? law.mps : runif(gen, 0.0, law.mps);
  }

  const auto steps = static_cast<std::size_t>(std::floor(duration_s / timestep_s + 1e-9));
  Trace trace;
  trace.geometry = geometry;
  trace.frames.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * timestep_s;
    Frame f;
    f.time_s = t;
    f.vehicles = initial.vehicles;
    for (std::size_t i = 0; i < f.vehicles.size(); ++i) {
      VehicleSnapshot& v = f.vehicles[i];
      v.time_s = t;
      v.speed_mps = speeds[i];
      double x = initial.vehicles[i].pos_m + speeds[i] * v.direction * t;
      v.pos_m = geometry.ring && geometry.length_m > 0 ? wrap_position(x, geometry.length_m) : x;
    }
    trace.frames.push_back(std::move(f));
  }
  return trace;
}

Trace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_trace: cannot open '" + path + "'");

  std::string line;
  std::size_t line_no = 0;

  // header
  if (!std::getline(in, line)) throw std::runtime_error("load_trace: empty file '" + path + "'");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv(line);

  bool planar = false;
  for (const auto& tok : header) {
    if (tok == "x_m" || tok == "y_m" || tok == "heading_deg") planar = true;
  }
  if (header.size() == kPlanarColumns.size()) planar = true;
  const auto& schema = planar ? kPlanarColumns : kLinearColumns;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i >= header.size()) fail_line(1, "missing column '" + schema[i] + "'");
    if (header[i] != schema[i])
      fail_line(1, "expected column '" + schema[i] + "', got '" + header[i] + "'");
  }
  if (header.size() > schema.size())
    fail_line(1, "unexpected column '" + header[schema.size()] + "'");

  Trace trace;
  trace.geometry.planar = planar;
  double prev_time = -std::numeric_limits<double>::infinity();

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv(line);
    if (f.size() != schema.size())
      fail_line(line_no, "expected " + std::to_string(schema.size()) + " fields, got " +
                             std::to_string(f.size()));

    VehicleSnapshot v;
    v.time_s = parse_double(f[0], line_no, "time_s");
    v.vehicle_id = parse_int(f[1], line_no, "vehicle_id");
    if (f[2] == "TAV") {
      v.role = Role::TaV;
    } else if (f[2] == "SEV") {
      v.role = Role::SeV;
    } else {
      fail_line(line_no, "invalid value for role: '" + f[2] + "' (must be TAV or SEV)");
    }
    if (planar) {
      v.pos_m = parse_double(f[3], line_no, "x_m");
      v.y_m = parse_double(f[4], line_no, "y_m");
      v.speed_mps = parse_double(f[5], line_no, "speed_mps");
      v.heading_deg = parse_double(f[6], line_no, "heading_deg");
    } else {
      v.pos_m = parse_double(f[3], line_no, "pos_m");
      v.speed_mps = parse_double(f[4], line_no, "speed_mps");
      std::int64_t dir = parse_int(f[5], line_no, "direction");
      if (dir != 1 && dir != -1)
        fail_line(line_no, "invalid value for direction: '" + f[5] + "' (must be 1 or -1)");
      v.direction = static_cast<int>(dir);
    }
    if (v.speed_mps < 0) fail_line(line_no, "speed_mps must be non-negative");

    if (v.time_s < prev_time) fail_line(line_no, "non-monotone time_s");
    if (trace.frames.empty() || v.time_s > prev_time) {
      Frame frame;
      frame.time_s = v.time_s;
      trace.frames.push_back(frame);
      prev_time = v.time_s;
    }
    trace.frames.back().vehicles.push_back(v);
  }
  return trace;
}

void write_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace: cannot open '" + path + "'");
  const auto& schema = trace.geometry.planar ? kPlanarColumns : kLinearColumns;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    out << schema[i] << (i + 1 == schema.size() ? "\n" : ",");
  }
  double prev_time = -std::numeric_limits<double>::infinity();
  for (const auto& frame : trace.frames) {
    if (frame.time_s < prev_time)
      throw std::runtime_error("write_trace: frames are not sorted by time_s");
    prev_time = frame.time_s;
    for (const auto& v : frame.vehicles) {
      out << format_double(frame.time_s) << ',' << v.vehicle_id << ','
          << (v.role == Role::TaV ? "TAV" : "SEV") << ',';
      if (trace.geometry.planar) {
        out << format_double(v.pos_m) << ',' << format_double(v.y_m) << ','
            << format_double(v.speed_mps) << ',' << format_double(v.heading_deg) << '\n';
      } else {
        out << format_double(v.pos_m) << ',' << format_double(v.speed_mps) << ','
            << v.direction << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write_trace: write failed for '" + path + "'");
}

double distance_m(const VehicleSnapshot& a, const VehicleSnapshot& b,
                  const RoadGeometry& geometry) {
  if (geometry.planar) return std::hypot(a.pos_m - b.pos_m, a.y_m - b.y_m);
  double d = std::fabs(a.pos_m - b.pos_m);
  if (geometry.ring && geometry.length_m > 0) {
    d = std::fmod(d, geometry.length_m);
    d = std::min(d, geometry.length_m - d);
  }
  return d;
}

std::vector<std::int64_t> candidate_set(const VehicleSnapshot& tav, const Frame& frame,
                                        const RoadGeometry& geometry, double range_m) {
  if (tav.role != Role::TaV)
    throw std::invalid_argument("candidate_set: the focal vehicle must be a TaV");
  if (range_m < 0) throw std::invalid_argument("candidate_set: range_m must be non-negative");
  std::vector<std::int64_t> ids;
  for (const auto& v : frame.vehicles) {
    if (v.role != Role::SeV) continue;
    bool same_heading = geometry.planar
                            ? heading_difference_deg(tav.heading_deg, v.heading_deg) < 90.0
                            : v.direction == tav.direction;
    if (!same_heading) continue;
    if (distance_m(tav, v, geometry) <= range_m) ids.push_back(v.vehicle_id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

double uplink_rate_from_distance(double d_m, const ChannelParams& params) {
  params.validate();
  double denom = params.noise_w + params.interference_w;
  if (!(denom > 0))
    throw std::domain_error("uplink_rate: noise plus interference must be positive");
  double d = std::max(d_m, 1.0);
  double snr = params.tx_power_w * std::pow(d, -params.pathloss_exponent) / denom;
  // log1p keeps precision when the SNR underflows the 1 + snr sum
  return params.bandwidth_hz * std::log1p(snr) / std::log(2.0);
}

double uplink_rate(const VehicleSnapshot& tav, const VehicleSnapshot& sev,
                   const ChannelParams& params, const RoadGeometry& geometry) {
  return uplink_rate_from_distance(distance_m(tav, sev, geometry), params);
}

UploadPlan multicast_rate_and_upload_delay(const VehicleSnapshot& tav,
                                           const std::vector<VehicleSnapshot>& selected,
                                           const ChannelParams& params,
                                           const RoadGeometry& geometry) {
  if (selected.empty())
    throw std::invalid_argument("multicast_rate_and_upload_delay: empty selection");
  double rate = std::numeric_limits<double>::infinity();
  for (const auto& sev : selected) {
    rate = std::min(rate, uplink_rate(tav, sev, params, geometry));
  }
  UploadPlan plan;
  plan.rate_bps = rate;
  plan.delay_s = rate > 0 ? params.input_bits / rate : std::numeric_limits<double>::infinity();
  return plan;
}

}  // namespace vecrep::traffic
