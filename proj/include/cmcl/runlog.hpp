#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmcl/sim.hpp"
#include "cmcl/util.hpp"

namespace cmcl {

class LogFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using nlohmann::json;

inline json pose_json(const Pose& p) { return json::array({p.x, p.y, p.theta}); }
inline Pose pose_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
inline json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
inline Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline json odo_json(const OdometryDelta& u) { return json::array({u.dx, u.dy, u.dtheta}); }
inline OdometryDelta odo_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}
inline json det_json(const Detection& d) { return json::array({d.range, d.bearing}); }
inline Detection det_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline std::string to_hex(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xF]);
  }
  return out;
}

inline std::string from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw LogFormatError("odd-length hex string");
  const auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw LogFormatError(std::string("bad hex digit '") + c + "'");
  };
  std::string out(hex.size() / 2, '\0');
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<char>(nibble(hex[2 * i]) * 16 + nibble(hex[2 * i + 1]));
  }
  return out;
}

inline json plan_json(const RobotPlan& p) {
  json path = json::array();
  for (const auto& w : p.path) path.push_back(vec_json(w));
  return {{"start", pose_json(p.start)}, {"goal", pose_json(p.goal)}, {"path", path}};
}

inline RobotPlan plan_from(const json& j) {
  RobotPlan p;
  p.start = pose_from(j.at("start"));
  p.goal = pose_from(j.at("goal"));
  for (const auto& w : j.at("path")) p.path.push_back(vec_from(w));
  return p;
}

}  // namespace detail

inline nlohmann::json scenario_json(const Scenario& sc) {
  return {{"map", sc.map_ref},
          {"seed", sc.seed},
          {"duration", sc.duration},
          {"robot_a", detail::plan_json(sc.robot_a)},
          {"robot_b", detail::plan_json(sc.robot_b)}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario sc;
  sc.map_ref = j.at("map").get<std::string>();
  sc.seed = j.at("seed").get<std::uint64_t>();
  sc.duration = j.at("duration").get<double>();
  sc.robot_a = detail::plan_from(j.at("robot_a"));
  sc.robot_b = detail::plan_from(j.at("robot_b"));
  return sc;
}

/// Scenario file: one JSON document.
inline std::string scenario_document(const Scenario& sc) { return scenario_json(sc).dump(2) + "\n"; }

inline Scenario parse_scenario(std::string_view text) {
  try {
    return scenario_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw LogFormatError(std::string("bad scenario document: ") + e.what());
  }
}

/// Line-delimited JSON: a header object, then one object per tick. Absent optional fields are
/// omitted. Timings are written only when `with_timings` is set.
inline std::string to_jsonl(const RunLog& log, bool with_timings = true) {
  using nlohmann::json;
  const RunHeader& h = log.header;
  std::string out;
  json head = {{"type", "header"},
               {"schema", h.schema},
               {"scenario", scenario_json(h.scenario)},
               {"seed", h.seed},
               {"strategy", h.strategy},
               {"alpha", h.alpha},
               {"n_particles", h.n_particles},
               {"dt", h.dt},
               {"first_detection_time", h.first_detection_time},
               {"lidar_bearings", h.lidar_bearings},
               {"lidar_r_max", h.lidar_r_max}};
  out += head.dump();
  out += '\n';
  for (const auto& r : log.ticks) {
    json j = {{"t", r.t},
              {"gt_a", detail::pose_json(r.gt_a)},
              {"gt_b", detail::pose_json(r.gt_b)},
              {"odo_a", detail::odo_json(r.odo_a)},
              {"odo_b", detail::odo_json(r.odo_b)}};
    if (!r.scan_a.empty()) j["scan_a"] = r.scan_a;
    if (!r.scan_b.empty()) j["scan_b"] = r.scan_b;
    if (r.detection) {
      j["detection"] = {{"truth", detail::det_json(r.detection->truth)},
                        {"measured", detail::det_json(r.detection->measured)}};
    }
    if (r.est_a) j["est_a"] = detail::pose_json(*r.est_a);
    if (r.est_b) j["est_b"] = detail::pose_json(*r.est_b);
    if (r.message) {
      json m = {{"seq", r.message->seq},
                {"bytes", detail::to_hex(r.message->bytes)},
                {"payload_bytes", r.message->payload_bytes},
                {"injected", r.message->injected}};
      if (with_timings) {
        m["compress_ms"] = r.message->compress_ms;
        m["fuse_ms"] = r.message->fuse_ms;
      }
      j["message"] = std::move(m);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline RunLog parse_jsonl(std::string_view text) {
  using nlohmann::json;
  RunLog log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (j.value("type", "") != "header") throw LogFormatError("first record is not a header");
        RunHeader& h = log.header;
        h.schema = j.at("schema").get<int>();
        if (h.schema != kRunLogSchema) {
          throw LogFormatError("schema version " + std::to_string(h.schema) + " is not supported (expected " +
                               std::to_string(kRunLogSchema) + ")");
        }
        h.scenario = scenario_from_json(j.at("scenario"));
        h.seed = j.at("seed").get<std::uint64_t>();
        h.strategy = j.at("strategy").get<std::string>();
        h.alpha = j.at("alpha").get<double>();
        h.n_particles = j.at("n_particles").get<std::size_t>();
        h.dt = j.at("dt").get<double>();
        h.first_detection_time = j.at("first_detection_time").get<double>();
        h.lidar_bearings = j.at("lidar_bearings").get<std::vector<double>>();
        h.lidar_r_max = j.at("lidar_r_max").get<double>();
        have_header = true;
        continue;
      }
      TickRecord r;
      r.t = j.at("t").get<double>();
      r.gt_a = detail::pose_from(j.at("gt_a"));
      r.gt_b = detail::pose_from(j.at("gt_b"));
      r.odo_a = detail::odo_from(j.at("odo_a"));
      r.odo_b = detail::odo_from(j.at("odo_b"));
      if (j.contains("scan_a")) r.scan_a = j.at("scan_a").get<std::vector<double>>();
      if (j.contains("scan_b")) r.scan_b = j.at("scan_b").get<std::vector<double>>();
      if (j.contains("detection")) {
        r.detection = DetectionEvent{detail::det_from(j.at("detection").at("truth")),
                                     detail::det_from(j.at("detection").at("measured"))};
      }
      if (j.contains("est_a")) r.est_a = detail::pose_from(j.at("est_a"));
      if (j.contains("est_b")) r.est_b = detail::pose_from(j.at("est_b"));
      if (j.contains("message")) {
        const json& m = j.at("message");
        MessageEvent ev;
        ev.seq = m.at("seq").get<std::uint32_t>();
        ev.bytes = detail::from_hex(m.at("bytes").get<std::string>());
        ev.payload_bytes = m.at("payload_bytes").get<std::size_t>();
        ev.injected = m.at("injected").get<std::size_t>();
        ev.compress_ms = m.value("compress_ms", 0.0);
        ev.fuse_ms = m.value("fuse_ms", 0.0);
        r.message = std::move(ev);
      }
      if (!log.ticks.empty() && !(r.t > log.ticks.back().t)) throw LogFormatError("timestamps are not increasing");
      log.ticks.push_back(std::move(r));
    } catch (const LogFormatError& e) {
      throw LogFormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw LogFormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw LogFormatError("run log is empty");
  return log;
}

/// Digest over the timing-free serialization.
inline std::string digest(const RunLog& log) { return hex64(fnv1a64(to_jsonl(log, false))); }

// Binary sidecar for belief snapshots, little-endian:
//   "CMCLSNP1" | u32 count | per snapshot: u64 tick, u32 seq, u32 n, n x (x, y, theta, w) f64 before,
//   n x (x, y, theta, w) f64 after fusion.

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

class SnapshotReader {
 public:
  explicit SnapshotReader(std::string_view b) : b_(b) {}
  std::uint64_t u(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > b_.size()) {
      throw LogFormatError("snapshot file truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(b_[pos_++])} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u(8)); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_snapshots(const std::vector<BeliefSnapshot>& snaps) {
  std::string s = "CMCLSNP1";
  detail::put_u32(s, static_cast<std::uint32_t>(snaps.size()));
  for (const auto& sn : snaps) {
    if (sn.before.size() != sn.after_fusion.size()) throw InvalidArgument("snapshot beliefs differ in size");
    detail::put_u64(s, sn.tick);
    detail::put_u32(s, sn.seq);
    detail::put_u32(s, static_cast<std::uint32_t>(sn.before.size()));
    for (const Belief* b : {&sn.before, &sn.after_fusion}) {
      for (const auto& p : b->particles) {
        detail::put_f64(s, p.pose.x);
        detail::put_f64(s, p.pose.y);
        detail::put_f64(s, p.pose.theta);
        detail::put_f64(s, p.weight);
      }
    }
  }
  return s;
}

inline std::vector<BeliefSnapshot> decode_snapshots(std::string_view bytes) {
  if (bytes.substr(0, 8) != "CMCLSNP1") throw LogFormatError("not a snapshot file");
  detail::SnapshotReader r(bytes.substr(8));
  const auto count = r.u(4);
  std::vector<BeliefSnapshot> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    BeliefSnapshot sn;
    sn.tick = r.u(8);
    sn.seq = static_cast<std::uint32_t>(r.u(4));
    const auto n = r.u(4);
    for (Belief* b : {&sn.before, &sn.after_fusion}) {
      for (std::uint64_t i = 0; i < n; ++i) {
        Particle p;
        p.pose.x = r.f64();
        p.pose.y = r.f64();
        p.pose.theta = r.f64();
        p.weight = r.f64();
        b->particles.push_back(p);
      }
    }
    out.push_back(std::move(sn));
  }
  if (r.remaining() != 0) throw LogFormatError("trailing bytes in snapshot file");
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace cmcl
