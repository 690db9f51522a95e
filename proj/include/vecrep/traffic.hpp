#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vecrep::traffic {

enum class Role { TaV, SeV };

// One vehicle's state at one instant — one CSV row. Linear-road records use
// pos_m/direction; planar records use pos_m as x plus y_m/heading_deg.
struct VehicleSnapshot {
  double time_s = 0;
  std::int64_t vehicle_id = 0;
  Role role = Role::SeV;
  double pos_m = 0;        // road coordinate (m), or x for planar traces
  double y_m = 0;          // planar traces only
  double speed_mps = 0;
  int direction = 1;       // +1 / -1 along the road
  double heading_deg = 0;  // planar heading, degrees
  bool operator==(const VehicleSnapshot&) const = default;
};

// All vehicles at one timestamp.
struct Frame {
  double time_s = 0;
  std::vector<VehicleSnapshot> vehicles;
  bool operator==(const Frame&) const = default;
};

// Road context for distance computations. A ring of length L wraps
// coordinates modulo L; length_m = 0 with ring = false means an unbounded
// straight road. planar switches to 2-D Euclidean distances and headings.
struct RoadGeometry {
  double length_m = 0;
  bool ring = false;
  bool planar = false;
};

// Ordered frames plus the geometry they were generated under. The CSV form
// carries only the frames; geometry is run configuration.
struct Trace {
  RoadGeometry geometry;
  std::vector<Frame> frames;
};

struct SpeedLaw {
  enum class Kind { constant, uniform_max };
  Kind kind = Kind::constant;
  double mps = 0;  // the fixed speed, or the cap for uniform draws

  static SpeedLaw constant(double v) { return {Kind::constant, v}; }
  static SpeedLaw uniform_max(double cap) { return {Kind::uniform_max, cap}; }
};

struct ChannelParams {
  double bandwidth_hz = 1e7;       // W_u
  double tx_power_w = 0.5;         // P
  double noise_w = 1e-13;          // N0
  double interference_w = 0;       // I
  double pathloss_exponent = 2.0;
  double input_bits = 1e6;         // task input size L_i
  double output_bits = 0;          // result size L_o (feedback leg)

  void validate() const;  // throws std::invalid_argument naming the field
};

struct UploadPlan {
  double rate_bps = 0;
  double delay_s = 0;
};

// Independent Poisson populations of the two roles on [0, road_km) km,
// positions i.i.d. uniform (meters in the output), all headings forward,
// speeds zero (motion laws assign them). TaVs get ids 0..Nt-1, SeVs follow.
Frame generate_ppp_snapshot(double road_km, double gamma_t, double gamma_s,
                            std::uint64_t seed);

// Constant-velocity motion from the initial frame: per-vehicle speed drawn
// once from the law (deterministic per seed), direction kept, positions
// advanced each timestep with ring wrap-around. Frames at 0, dt, ..., up to
// and including duration when it is a multiple of dt.
Trace generate_synthetic_trace(const Frame& initial, const RoadGeometry& geometry,
                               double duration_s, const SpeedLaw& law, double timestep_s,
                               std::uint64_t seed);

// CSV trace I/O. Header and columns are fixed:
//   time_s,vehicle_id,role,pos_m,speed_mps,direction        (linear roads)
//   time_s,vehicle_id,role,x_m,y_m,speed_mps,heading_deg    (planar)
// Role is TAV or SEV; direction is 1 or -1; rows sorted by time_s. Numeric
// fields are written in shortest round-trip form, so load_trace(write_trace(t))
// reproduces the frames exactly. Malformed input raises std::runtime_error
// naming the line (and column where applicable); timestamps must be
// non-decreasing, and equal timestamps merge into one frame.
Trace load_trace(const std::string& path);
void write_trace(const Trace& trace, const std::string& path);

// Distance between two vehicles under the geometry: ring distance on rings,
// |difference| on lines, Euclidean when planar.
double distance_m(const VehicleSnapshot& a, const VehicleSnapshot& b,
                  const RoadGeometry& geometry);

// Service candidates for a task vehicle: SeVs heading the same way (equal
// direction, or planar heading difference < 90 degrees) within distance R
// inclusive. Returns sorted vehicle ids. Throws std::invalid_argument if tav
// is not a TaV.
std::vector<std::int64_t> candidate_set(const VehicleSnapshot& tav, const Frame& frame,
                                        const RoadGeometry& geometry, double range_m);

// Shannon-style uplink rate W * log2(1 + P * d^-a / (N0 + I)) in bits/s,
// with the distance floored at 1 m.
double uplink_rate_from_distance(double d_m, const ChannelParams& params);
double uplink_rate(const VehicleSnapshot& tav, const VehicleSnapshot& sev,
                   const ChannelParams& params,
                   const RoadGeometry& geometry = RoadGeometry{});

// Multicast to every selected SeV: rate is the minimum member rate, upload
// delay is input_bits / rate. Throws std::invalid_argument on an empty set.
UploadPlan multicast_rate_and_upload_delay(const VehicleSnapshot& tav,
                                           const std::vector<VehicleSnapshot>& selected,
                                           const ChannelParams& params,
                                           const RoadGeometry& geometry = RoadGeometry{});

}  // namespace vecrep::traffic
