#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "feddrive/core.hpp"

namespace feddrive::metrics {

/// One 1 Hz telematics record.
struct DrivingRecord {
  double timestamp = 0.0;  // seconds
  double speed = 0.0;      // km/h
  double rpm = 0.0;
  double bearing = 0.0;    // [0, 360)
  double brake = 0.0;      // pedal %
  double mileage = 0.0;    // cumulative km
  double fuel = 0.0;       // instantaneous mL
};

struct Trip {
  std::vector<DrivingRecord> records;

  double distance() const {
    return records.empty() ? 0.0 : records.back().mileage - records.front().mileage;
  }
  double duration() const {
    return records.empty() ? 0.0 : records.back().timestamp - records.front().timestamp;
  }
};

struct EventThresholds {
  double harsh_rate = 3.0;        // km/h per second
  double outlier_rate = 20.0;     // |dv/dt| above this is a sensor glitch
  double turn_min_speed = 40.0;   // km/h
  double turn_rate = 50.0;        // deg/s
  double idle_rpm = 700.0;        // idle is rpm in (0, idle_rpm)
  double engine_off_split_s = 1800.0;
  double data_gap_split_s = 60.0;
  double min_trip_km = 3.0;
  double fuel_cap = std::numeric_limits<double>::infinity();  // per-vehicle 99th pct
};

struct EventCounts {
  int harsh_accel = 0;
  int harsh_decel = 0;
  int sharp_turns = 0;
  int idle_seconds = 0;
  double fuel_total = 0.0;  // capped readings excluded
};

/// Signed angular difference in (-180, 180], wrap-aware: 359 -> 1 is +2.
inline double bearing_delta(double from, double to) {
  double d = std::fmod(to - from + 540.0, 360.0) - 180.0;
  return d == -180.0 ? 180.0 : d;
}

/// 99th percentile by nearest rank; used to cap noisy fuel readings over a
/// vehicle's whole stream before segmentation.
inline double fuel_percentile_cap(const std::vector<DrivingRecord>& stream,
                                  double pct = 0.99) {
  if (stream.empty()) return std::numeric_limits<double>::infinity();
  std::vector<double> fuel;
  fuel.reserve(stream.size());
  for (const auto& r : stream) fuel.push_back(r.fuel);
  std::sort(fuel.begin(), fuel.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(pct * static_cast<double>(fuel.size())));
  rank = std::clamp<std::size_t>(rank, 1, fuel.size());
  return fuel[rank - 1];
}

/// Splits a sorted record stream into trips:
///  - engine off (rpm == 0) for more than 30 minutes ends the trip; the
///    off-time may be a recording hole, so the span is measured from the
///    first rpm==0 record to the next rpm>0 record
///  - a recording gap above 1 minute while the engine was running ends it
///  - trips shorter than 3 km are discarded
inline std::vector<Trip> segment_trips(const std::vector<DrivingRecord>& stream,
                                       const EventThresholds& th = {}) {
  std::vector<Trip> trips;
  Trip current;
  auto flush = [&] {
    if (!current.records.empty() && current.distance() >= th.min_trip_km) {
      trips.push_back(std::move(current));
    }
    current = Trip{};
  };

  std::optional<double> engine_off_since;
  for (const auto& rec : stream) {
    if (!current.records.empty()) {
      const DrivingRecord& prev = current.records.back();
      if (rec.timestamp <= prev.timestamp) {
        throw data_error("record timestamps must be strictly increasing");
      }
      const double dt = rec.timestamp - prev.timestamp;
      const bool long_off = engine_off_since && rec.rpm > 0.0 &&
                            rec.timestamp - *engine_off_since > th.engine_off_split_s;
      const bool gap = prev.rpm > 0.0 && dt > th.data_gap_split_s;
      if (long_off || gap) flush();
    }
    if (rec.rpm > 0.0) {
      engine_off_since.reset();
    } else if (!engine_off_since) {
      engine_off_since = rec.timestamp;
    }
    current.records.push_back(rec);
  }
  flush();
  return trips;
}

/// Counts driving events within one trip. Consecutive samples above a
/// threshold are one event until the rate drops back under it; rate samples
/// above the outlier bound are ignored and close any open event run.
inline EventCounts detect_events(const Trip& trip, const EventThresholds& th = {}) {
  EventCounts ev;
  bool accel_run = false, decel_run = false, turn_run = false;
  const auto& rs = trip.records;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const DrivingRecord& cur = rs[i];
    if (cur.rpm > 0.0 && cur.rpm < th.idle_rpm) ++ev.idle_seconds;
    if (cur.fuel <= th.fuel_cap) ev.fuel_total += cur.fuel;
    if (i == 0) continue;
    const DrivingRecord& prev = rs[i - 1];
    const double dt = cur.timestamp - prev.timestamp;
    if (dt <= 0.0) throw data_error("record timestamps must be strictly increasing");

    const double rate = (cur.speed - prev.speed) / dt;
    if (std::fabs(rate) > th.outlier_rate) {
      accel_run = decel_run = false;  // glitch sample, not an event
    } else if (rate >= th.harsh_rate) {
      if (!accel_run) ++ev.harsh_accel;
      accel_run = true;
      decel_run = false;
    } else if (-rate >= th.harsh_rate) {
      if (!decel_run) ++ev.harsh_decel;
      decel_run = true;
      accel_run = false;
    } else {
      accel_run = decel_run = false;
    }

    const double brate = std::fabs(bearing_delta(prev.bearing, cur.bearing)) / dt;
    if (cur.speed > th.turn_min_speed && brate > th.turn_rate) {
      if (!turn_run) ++ev.sharp_turns;
      turn_run = true;
    } else {
      turn_run = false;
    }
  }
  return ev;
}

/// Maps a trip onto the fleet metric schema. Event metrics are per km, the
/// idle ratio is per second of trip time, and AvgRPM averages the non-idle
/// records only.
inline std::vector<double> extract_metrics(const Trip& trip,
                                           const std::vector<MetricSpec>& specs,
                                           const EventThresholds& th = {}) {
  const double km = trip.distance();
  const double sec = trip.duration();
  if (!(km > 0.0) || !(sec > 0.0)) {
    throw std::domain_error("trip needs positive distance and duration");
  }
  const EventCounts ev = detect_events(trip, th);

  double rpm_sum = 0.0;
  std::size_t rpm_count = 0;
  for (const auto& r : trip.records) {
    if (r.rpm >= th.idle_rpm) {
      rpm_sum += r.rpm;
      ++rpm_count;
    }
  }

  std::vector<double> x;
  x.reserve(specs.size());
  for (const auto& spec : specs) {
    if (spec.name == "#HarshAcc") {
      x.push_back(ev.harsh_accel / km);
    } else if (spec.name == "#HarshDec") {
      x.push_back(ev.harsh_decel / km);
    } else if (spec.name == "#HarshTurn") {
      x.push_back(ev.sharp_turns / km);
    } else if (spec.name == "IdleRatio") {
      x.push_back(ev.idle_seconds / sec);
    } else if (spec.name == "AvgSpd") {
      x.push_back(km / (sec / 3600.0));
    } else if (spec.name == "AvgRPM") {
      x.push_back(rpm_count ? rpm_sum / static_cast<double>(rpm_count) : 0.0);
    } else {
      throw config_error("no extraction rule for metric " + spec.name);
    }
  }
  return x;
}

/// Distance normalization for count-style raw features (UBI-style tables):
/// each raw value divided by trip distance in km.
inline std::vector<double> normalize_by_distance(const std::vector<double>& raw,
                                                 double distance_km) {
  if (!(distance_km > 0.0)) throw std::domain_error("distance must be positive");
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) out[j] = raw[j] / distance_km;
  return out;
}

}  // namespace feddrive::metrics
