#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "vecrep/rng.hpp"
#include "vecrep/traffic.hpp"

using namespace vecrep;
using namespace vecrep::traffic;

namespace {

VehicleSnapshot veh(std::int64_t id, Role role, double pos, int dir = 1, double speed = 0,
                    double t = 0) {
  VehicleSnapshot v;
  v.time_s = t;
  v.vehicle_id = id;
  v.role = role;
  v.pos_m = pos;
  v.speed_mps = speed;
  v.direction = dir;
  return v;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("poisson placement: moments, independence, determinism") {
  const int draws = 1000;
  double sum_t = 0, sum_s = 0, sum_ts = 0;
  for (int i = 0; i < draws; ++i) {
    Frame f = generate_ppp_snapshot(10.0, 5.0, 20.0, 7000 + i);
    int nt = 0, ns = 0;
    for (const auto& v : f.vehicles) {
      CHECK(v.pos_m >= 0.0);
      CHECK(v.pos_m < 10000.0);
      (v.role == Role::TaV ? nt : ns)++;
    }
    sum_t += nt;
    sum_s += ns;
    sum_ts += static_cast<double>(nt) * ns;
  }
  double mean_t = sum_t / draws, mean_s = sum_s / draws;
  // Poisson(50) and Poisson(200): sample means within 3 sigma/sqrt(n)
  CHECK(std::abs(mean_t - 50.0) < 3.0 * std::sqrt(50.0 / draws));
  CHECK(std::abs(mean_s - 200.0) < 3.0 * std::sqrt(200.0 / draws));
  // independence: sample covariance within 4 sigma of zero
  double cov = sum_ts / draws - mean_t * mean_s;
  CHECK(std::abs(cov) < 4.0 * std::sqrt(50.0 * 200.0 / draws));

  // zero density empties exactly that role
  Frame no_t = generate_ppp_snapshot(10.0, 0.0, 20.0, 3);
  for (const auto& v : no_t.vehicles) CHECK(v.role == Role::SeV);
  Frame no_s = generate_ppp_snapshot(10.0, 5.0, 0.0, 3);
  for (const auto& v : no_s.vehicles) CHECK(v.role == Role::TaV);

  // deterministic per seed; ids are TaVs first, then SeVs, consecutive
  Frame a = generate_ppp_snapshot(5.0, 3.0, 9.0, 42);
  Frame b = generate_ppp_snapshot(5.0, 3.0, 9.0, 42);
  CHECK(a == b);
  Frame c = generate_ppp_snapshot(5.0, 3.0, 9.0, 43);
  CHECK_FALSE(a == c);
  for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
    CHECK(a.vehicles[i].vehicle_id == static_cast<std::int64_t>(i));
    CHECK(a.vehicles[i].direction == 1);
    CHECK(a.vehicles[i].speed_mps == 0.0);
  }
}

TEST_CASE("poisson placement: positions are uniform (Kolmogorov-Smirnov, 1% level)") {
  std::vector<double> pos;
  for (int i = 0; i < 1000; ++i) {
    Frame f = generate_ppp_snapshot(2.0, 5.0, 20.0, 90000 + i);
    for (const auto& v : f.vehicles) pos.push_back(v.pos_m / 2000.0);
  }
  std::sort(pos.begin(), pos.end());
  double n = static_cast<double>(pos.size());
  double d_stat = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    double hi = static_cast<double>(i + 1) / n - pos[i];
    double lo = pos[i] - static_cast<double>(i) / n;
    d_stat = std::max({d_stat, hi, lo});
  }
  // asymptotic Kolmogorov critical value at the 1% level
  CHECK(d_stat * std::sqrt(n) < 1.6276236115189504);
}

TEST_CASE("synthetic trace: kinematics, wrap-around, relative distances") {
  RoadGeometry ring{1000.0, true, false};

  Frame init;
  init.vehicles.push_back(veh(0, Role::TaV, 100.0, 1));
  init.vehicles.push_back(veh(1, Role::SeV, 990.0, 1));
  init.vehicles.push_back(veh(2, Role::SeV, 500.0, -1));

  Trace tr = generate_synthetic_trace(init, ring, 3.0, SpeedLaw::constant(20.0), 1.0, 5);
  REQUIRE(tr.frames.size() == 4);
  CHECK(tr.frames[0].time_s == 0.0);
  CHECK(tr.frames[3].time_s == doctest::Approx(3.0).epsilon(1e-12));
  // 20 m advance per 1 s step, signed by direction, modulo the ring
  CHECK(tr.frames[1].vehicles[0].pos_m == doctest::Approx(120.0).epsilon(1e-12));
  CHECK(tr.frames[1].vehicles[1].pos_m == doctest::Approx(10.0).epsilon(1e-12));  // wraps
  CHECK(tr.frames[1].vehicles[2].pos_m == doctest::Approx(480.0).epsilon(1e-12));
  CHECK(tr.frames[2].vehicles[0].pos_m == doctest::Approx(140.0).epsilon(1e-12));

  // same speed and direction: ring distance is invariant along the trace
  for (const auto& f : tr.frames) {
    CHECK(distance_m(f.vehicles[0], f.vehicles[1], ring) ==
          doctest::Approx(distance_m(init.vehicles[0], init.vehicles[1], ring)).epsilon(1e-9));
  }

  // zero duration: exactly the initial frame
  Trace still = generate_synthetic_trace(init, ring, 0.0, SpeedLaw::constant(20.0), 1.0, 5);
  REQUIRE(still.frames.size() == 1);
  for (std::size_t i = 0; i < init.vehicles.size(); ++i) {
    CHECK(still.frames[0].vehicles[i].pos_m == init.vehicles[i].pos_m);
    CHECK(still.frames[0].vehicles[i].direction == init.vehicles[i].direction);
  }

  // uniform speed law: bounded by the cap, deterministic per seed
  Trace u1 = generate_synthetic_trace(init, ring, 5.0, SpeedLaw::uniform_max(20.0), 1.0, 11);
  Trace u2 = generate_synthetic_trace(init, ring, 5.0, SpeedLaw::uniform_max(20.0), 1.0, 11);
  for (const auto& v : u1.frames[0].vehicles) {
    CHECK(v.speed_mps >= 0.0);
    CHECK(v.speed_mps <= 20.0);
  }
  for (std::size_t k = 0; k < u1.frames.size(); ++k) {
    CHECK(u1.frames[k] == u2.frames[k]);
  }

  CHECK_THROWS_AS(generate_synthetic_trace(init, ring, 1.0, SpeedLaw::constant(20.0), 0.0, 5),
                  std::invalid_argument);
}

TEST_CASE("trace CSV: schema, errors, and write/load inversion") {
  const std::string path = temp_path("vecrep_trace_test.csv");

  write_text(path,
             "time_s,vehicle_id,role,pos_m,speed_mps,direction\n"
             "0,0,TAV,100.5,15,1\n"
             "0,1,SEV,990,20,-1\n"
             "1,0,TAV,115.5,15,1\n");
  Trace tr = load_trace(path);
  REQUIRE(tr.frames.size() == 2);
  REQUIRE(tr.frames[0].vehicles.size() == 2);
  REQUIRE(tr.frames[1].vehicles.size() == 1);
  CHECK(tr.frames[0].vehicles[0].role == Role::TaV);
  CHECK(tr.frames[0].vehicles[0].pos_m == 100.5);
  CHECK(tr.frames[0].vehicles[1].direction == -1);
  CHECK(tr.frames[1].time_s == 1.0);
  CHECK_FALSE(tr.geometry.planar);

  // planar schema
  write_text(path,
             "time_s,vehicle_id,role,x_m,y_m,speed_mps,heading_deg\n"
             "0,0,TAV,10,20,5,45\n"
             "0,1,SEV,11,21,5,50\n");
  Trace planar = load_trace(path);
  CHECK(planar.geometry.planar);
  CHECK(planar.frames[0].vehicles[1].y_m == 21.0);
  CHECK(planar.frames[0].vehicles[1].heading_deg == 50.0);

  // header errors name the offending column
  write_text(path, "time_s,vehicle_id,role,pos_m,speed_mps\n0,0,TAV,1,2\n");
  CHECK_THROWS_WITH_AS(load_trace(path), doctest::Contains("direction"), std::runtime_error);
  write_text(path, "time_s,vehicle_id,role,position,speed_mps,direction\n");
  CHECK_THROWS_WITH_AS(load_trace(path), doctest::Contains("pos_m"), std::runtime_error);

  // malformed rows name the line
  write_text(path,
             "time_s,vehicle_id,role,pos_m,speed_mps,direction\n"
             "0,0,TAV,100,15,1\n"
             "0,1,SEV,abc,20,1\n");
  CHECK_THROWS_WITH_AS(load_trace(path), doctest::Contains("line 3"), std::runtime_error);
  write_text(path,
             "time_s,vehicle_id,role,pos_m,speed_mps,direction\n"
             "0,0,TAV,100,15,1\n"
             "0,1,SEV,5,20\n");
  CHECK_THROWS_WITH_AS(load_trace(path), doctest::Contains("line 3"), std::runtime_error);
  write_text(path,
             "time_s,vehicle_id,role,pos_m,speed_mps,direction\n"
             "0,0,DRONE,100,15,1\n");
  CHECK_THROWS_WITH_AS(load_trace(path), doctest::Contains("role"), std::runtime_error);
  write_text(path,
             "time_s,vehicle_id,role,pos_m,speed_mps,direction\n"
             "0,0,TAV,100,15,2\n");
  CHECK_THROWS_WITH_AS(load_trace(path), doctest::Contains("direction"), std::runtime_error);

  // timestamps must never decrease
  write_text(path,
             "time_s,vehicle_id,role,pos_m,speed_mps,direction\n"
             "1,0,TAV,100,15,1\n"
             "0,1,SEV,5,20,1\n");
  CHECK_THROWS_WITH_AS(load_trace(path), doctest::Contains("line 3"), std::runtime_error);

  CHECK_THROWS_AS(load_trace("/nonexistent/vecrep_missing.csv"), std::runtime_error);

  // inversion on generated traces, including awkward floating-point values
  RoadGeometry ring{1000.0, true, false};
  Frame init = generate_ppp_snapshot(1.0, 4.0, 10.0, 99);
  Trace synth = generate_synthetic_trace(init, ring, 7.0, SpeedLaw::uniform_max(20.0), 0.1, 17);
  write_trace(synth, path);
  Trace back = load_trace(path);
  REQUIRE(back.frames.size() == synth.frames.size());
  for (std::size_t i = 0; i < synth.frames.size(); ++i) {
    CHECK(back.frames[i] == synth.frames[i]);
  }

  // planar inversion
  Trace ptr;
  ptr.geometry.planar = true;
  Frame pf;
  pf.time_s = 0.25;
  VehicleSnapshot pv = veh(0, Role::TaV, 1.0 / 3.0);
  pv.time_s = 0.25;
  pv.y_m = 2.0 / 7.0;
  pv.speed_mps = 19.0 / 11.0;
  pv.heading_deg = 359.123456789;
  pf.vehicles.push_back(pv);
  ptr.frames.push_back(pf);
  write_trace(ptr, path);
  Trace pback = load_trace(path);
  CHECK(pback.geometry.planar);
  REQUIRE(pback.frames.size() == 1);
  CHECK(pback.frames[0] == ptr.frames[0]);

  std::remove(path.c_str());
}

TEST_CASE("candidate selection: range boundary, direction, ring wrap, translation") {
  RoadGeometry ring{1000.0, true, false};
  Frame f;
  f.vehicles.push_back(veh(0, Role::TaV, 990.0, 1));
  f.vehicles.push_back(veh(1, Role::SeV, 10.0, 1));    // ring distance 20
  f.vehicles.push_back(veh(2, Role::SeV, 940.0, 1));   // distance 50 = R exactly
  f.vehicles.push_back(veh(3, Role::SeV, 990.0, -1));  // opposite direction
  f.vehicles.push_back(veh(4, Role::SeV, 500.0, 1));   // too far (ring distance 490)
  f.vehicles.push_back(veh(5, Role::TaV, 991.0, 1));   // other TaVs never join

  auto ids = candidate_set(f.vehicles[0], f, ring, 50.0);
  CHECK(ids == std::vector<std::int64_t>{1, 2});

  CHECK_THROWS_AS(candidate_set(f.vehicles[1], f, ring, 50.0), std::invalid_argument);

  // translation invariance on the ring
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 1000; ++trial) {
    double length = runif(gen, 500.0, 5000.0);
    RoadGeometry g{length, true, false};
    Frame base;
    base.vehicles.push_back(veh(0, Role::TaV, runif(gen, 0.0, length), runif01(gen) < 0.5 ? 1 : -1));
    int n = 1 + static_cast<int>(runif01(gen) * 12);
    for (int i = 1; i <= n; ++i) {
      base.vehicles.push_back(
          veh(i, Role::SeV, runif(gen, 0.0, length), runif01(gen) < 0.5 ? 1 : -1));
    }
    double range = runif(gen, 10.0, length / 2.0);
    auto before = candidate_set(base.vehicles[0], base, g, range);

    double shift = runif(gen, 0.0, length);
    Frame moved = base;
    for (auto& v : moved.vehicles) v.pos_m = std::fmod(v.pos_m + shift, length);
    auto after = candidate_set(moved.vehicles[0], moved, g, range);
    CHECK(before == after);
  }

  // planar: Euclidean distance, heading difference strictly below 90 degrees
  RoadGeometry plane{0.0, false, true};
  Frame pf;
  VehicleSnapshot tav = veh(0, Role::TaV, 0.0);
  tav.heading_deg = 0.0;
  pf.vehicles.push_back(tav);
  VehicleSnapshot near_aligned = veh(1, Role::SeV, 30.0);
  near_aligned.y_m = 40.0;  // distance exactly 50
  near_aligned.heading_deg = 89.0;
  pf.vehicles.push_back(near_aligned);
  VehicleSnapshot perpendicular = veh(2, Role::SeV, 10.0);
  perpendicular.heading_deg = 90.0;
  pf.vehicles.push_back(perpendicular);
  VehicleSnapshot wrapped_heading = veh(3, Role::SeV, 5.0);
  wrapped_heading.heading_deg = 350.0;  // 10 degrees from 0 through the wrap
  pf.vehicles.push_back(wrapped_heading);
  VehicleSnapshot too_far = veh(4, Role::SeV, 30.0);
  too_far.y_m = 40.1;
  too_far.heading_deg = 0.0;
  pf.vehicles.push_back(too_far);

  auto planar_ids = candidate_set(pf.vehicles[0], pf, plane, 50.0);
  CHECK(planar_ids == std::vector<std::int64_t>{1, 3});
}

TEST_CASE("uplink rate: frozen values, pathloss law, monotonicity") {
  ChannelParams p;  // defaults: W=1e7, P=0.5, N0=1e-13, I=0, exponent 2

  CHECK(uplink_rate_from_distance(100.0, p) ==
        doctest::Approx(288973528.5687165).epsilon(1e-12));
  CHECK(uplink_rate_from_distance(1000.0, p) ==
        doctest::Approx(222534969.52750516).epsilon(1e-12));
  // the 1 m clamp: 0, 0.5 and 1 m coincide
  double r1 = uplink_rate_from_distance(1.0, p);
  CHECK(r1 == doctest::Approx(421850652.33536).epsilon(1e-12));
  CHECK(uplink_rate_from_distance(0.0, p) == r1);
  CHECK(uplink_rate_from_distance(0.5, p) == r1);

  // doubling the distance at exponent 2 divides the SNR by 4
  auto snr_of = [&](double rate) { return std::exp2(rate / p.bandwidth_hz) - 1.0; };
  for (double d : {2.0, 10.0, 73.0, 400.0}) {
    double ratio = snr_of(uplink_rate_from_distance(d, p)) /
                   snr_of(uplink_rate_from_distance(2.0 * d, p));
    CHECK(ratio == doctest::Approx(4.0).epsilon(1e-9));
  }

  // heavy interference kills the rate
  ChannelParams noisy = p;
  noisy.interference_w = 1e30;
  CHECK(uplink_rate_from_distance(100.0, noisy) < 1.0);
  CHECK(uplink_rate_from_distance(100.0, noisy) > 0.0);

  // strict monotonicity: decreasing in d, increasing in P
  std::mt19937_64 gen(33);
  for (int trial = 0; trial < 1000; ++trial) {
    double d1 = runif(gen, 1.0, 5000.0);
    double d2 = d1 + runif(gen, 0.1, 1000.0);
    CHECK(uplink_rate_from_distance(d1, p) > uplink_rate_from_distance(d2, p));
    ChannelParams stronger = p;
    stronger.tx_power_w = p.tx_power_w * runif(gen, 1.01, 4.0);
    CHECK(uplink_rate_from_distance(d1, stronger) > uplink_rate_from_distance(d1, p));
  }

  // the geometry-aware overload agrees with explicit distances
  RoadGeometry ring{1000.0, true, false};
  VehicleSnapshot a = veh(0, Role::TaV, 990.0);
  VehicleSnapshot b = veh(1, Role::SeV, 10.0);
  CHECK(uplink_rate(a, b, p, ring) == uplink_rate_from_distance(20.0, p));
  CHECK(uplink_rate(a, b, p) == uplink_rate_from_distance(980.0, p));

  ChannelParams bad = p;
  bad.bandwidth_hz = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ChannelParams bad2 = p;
  bad2.noise_w = -1.0;
  CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("multicast upload: min rate, delay, idempotence") {
  ChannelParams p;
  RoadGeometry line{0.0, false, false};
  VehicleSnapshot tav = veh(0, Role::TaV, 0.0);
  VehicleSnapshot nearby = veh(1, Role::SeV, 100.0);
  VehicleSnapshot distant = veh(2, Role::SeV, 1000.0);

  UploadPlan solo = multicast_rate_and_upload_delay(tav, {nearby}, p, line);
  CHECK(solo.rate_bps == uplink_rate(tav, nearby, p, line));
  CHECK(solo.delay_s == doctest::Approx(1e6 / 288973528.5687165).epsilon(1e-12));

  UploadPlan both = multicast_rate_and_upload_delay(tav, {nearby, distant}, p, line);
  CHECK(both.rate_bps == doctest::Approx(222534969.52750516).epsilon(1e-12));
  CHECK(both.delay_s == doctest::Approx(0.004493675767557964).epsilon(1e-12));

  // duplicate members do not change the minimum
  UploadPlan dup = multicast_rate_and_upload_delay(tav, {nearby, distant, distant}, p, line);
  CHECK(dup.rate_bps == both.rate_bps);

  // adding a farther SeV never increases the rate
  std::mt19937_64 gen(34);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<VehicleSnapshot> group;
    int n = 1 + static_cast<int>(runif01(gen) * 5);
    for (int i = 0; i < n; ++i) group.push_back(veh(i + 1, Role::SeV, runif(gen, 1.0, 2000.0)));
    UploadPlan base = multicast_rate_and_upload_delay(tav, group, p, line);
    group.push_back(veh(99, Role::SeV, runif(gen, 1.0, 4000.0)));
    UploadPlan more = multicast_rate_and_upload_delay(tav, group, p, line);
    CHECK(more.rate_bps <= base.rate_bps + 1e-9);
    CHECK(more.delay_s + 1e-15 >= base.delay_s);
  }

  CHECK_THROWS_AS(multicast_rate_and_upload_delay(tav, {}, p, line), std::invalid_argument);
}
