#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "cmcl/clustering.hpp"
#include "cmcl/det.hpp"
#include "cmcl/geometry.hpp"
#include "cmcl/kernel_thinning.hpp"

namespace cmcl {

/// Exchange strategy; the numeric value is the wire tag.
enum class Method : std::uint8_t {
  kNaive = 0,
  kStdThinning = 1,
  kDet = 2,
  kProrok = 3,
  kKMeans = 4,
  kCompressPP = 5,
};

inline constexpr Method kAllMethods[] = {Method::kNaive, Method::kStdThinning, Method::kDet,
                                         Method::kProrok, Method::kKMeans, Method::kCompressPP};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::kNaive: return "naive";
    case Method::kStdThinning: return "std_thinning";
    case Method::kDet: return "det";
    case Method::kProrok: return "prorok";
    case Method::kKMeans: return "kmeans";
    case Method::kCompressPP: return "compresspp";
  }
  return "unknown";
}

inline Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

/// Sender particle poses (naive and standard thinning).
struct PoseSet {
  std::vector<Pose> poses;
  friend bool operator==(const PoseSet&, const PoseSet&) = default;
};

struct CoresetPayload {
  std::vector<Vec2> points;
  friend bool operator==(const CoresetPayload&, const CoresetPayload&) = default;
};

using Payload = std::variant<PoseSet, std::vector<GaussianCluster>, std::vector<ClusterAbstraction>, DensityTree,
                             CoresetPayload>;

/// A detection message: who saw the receiver, where, and a compressed copy of the sender belief.
struct BeliefSummary {
  Method method = Method::kNaive;
  std::uint8_t sender = 0;
  std::uint32_t seq = 0;
  Detection detection;
  Payload payload;

  /// Number of payload records (particles, clusters, nodes or points).
  std::size_t count() const;
  friend bool operator==(const BeliefSummary&, const BeliefSummary&) = default;
};

inline std::size_t BeliefSummary::count() const {
  return std::visit(
      [](const auto& p) -> std::size_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PoseSet>) {
          return p.poses.size();
        } else if constexpr (std::is_same_v<T, DensityTree>) {
          return p.nodes.size();
        } else if constexpr (std::is_same_v<T, CoresetPayload>) {
          return p.points.size();
        } else {
          return p.size();
        }
      },
      payload);
}

/// Variant alternative each method must carry.
inline bool payload_matches(Method m, const Payload& p) {
  switch (m) {
    case Method::kNaive:
    case Method::kStdThinning: return std::holds_alternative<PoseSet>(p);
    case Method::kKMeans: return std::holds_alternative<std::vector<GaussianCluster>>(p);
    case Method::kProrok: return std::holds_alternative<std::vector<ClusterAbstraction>>(p);
    case Method::kDet: return std::holds_alternative<DensityTree>(p);
    case Method::kCompressPP: return std::holds_alternative<CoresetPayload>(p);
  }
  return false;
}

inline constexpr std::size_t kHeaderBytes = 18;  // tag, sender, seq, range, bearing, count
inline constexpr std::size_t kDetRecordBytes = 50;

/// Bytes per payload record.
inline std::size_t record_bytes(Method m) {
  switch (m) {
    case Method::kNaive:
    case Method::kStdThinning: return 12;
    case Method::kKMeans: return 24;
    case Method::kProrok: return 32;
    case Method::kDet: return kDetRecordBytes;
    case Method::kCompressPP: return 8;
  }
  return 0;
}

class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::size_t offset, const std::string& what)
      : std::runtime_error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Round a double through f32, the wire precision.
inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

/// Heading through f32, kept inside [0, 2pi).
inline double to_f32_heading(double theta) {
  const double q = to_f32(wrap_two_pi(theta));
  return q >= kTwoPi ? 0.0 : q;
}

/// Round every scalar of a summary to wire precision, so decode(encode(quantize(m))) == quantize(m).
inline BeliefSummary quantize(const BeliefSummary& in) {
  BeliefSummary m = in;
  m.detection.range = to_f32(in.detection.range);
  m.detection.bearing = to_f32(in.detection.bearing);
  std::visit(
      [](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PoseSet>) {
          for (auto& q : p.poses) q = {to_f32(q.x), to_f32(q.y), to_f32_heading(q.theta)};
        } else if constexpr (std::is_same_v<T, std::vector<GaussianCluster>>) {
          for (auto& c : p) {
            c.mean = {to_f32(c.mean.x), to_f32(c.mean.y)};
            c.cov = {to_f32(c.cov.xx), to_f32(c.cov.xy), to_f32(c.cov.yy)};
            c.weight = to_f32(c.weight);
          }
        } else if constexpr (std::is_same_v<T, std::vector<ClusterAbstraction>>) {
          for (auto& c : p) {
            c.centroid = {to_f32(c.centroid.x), to_f32(c.centroid.y), to_f32_heading(c.centroid.theta)};
            c.weight = to_f32(c.weight);
            c.detection_mean = {to_f32(c.detection_mean.range), to_f32(c.detection_mean.bearing)};
            c.var_range = to_f32(c.var_range);
            c.var_bearing = to_f32(c.var_bearing);
          }
        } else if constexpr (std::is_same_v<T, DensityTree>) {
          for (auto& n : p.nodes) {
            n.bbox = {to_f32(n.bbox.xmin), to_f32(n.bbox.xmax), to_f32(n.bbox.ymin), to_f32(n.bbox.ymax)};
            n.density = to_f32(n.density);
            n.split_value = to_f32(n.split_value);
          }
        } else {
          for (auto& q : p.points) q = {to_f32(q.x), to_f32(q.y)};
        }
      },
      m.payload);
  return m;
}

namespace detail {

class Writer {
 public:
  explicit Writer(std::string& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void zeros(std::size_t n) { out_.append(n, '\0'); }

 private:
  std::string& out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw DecodeError(pos_, std::string("truncated buffer reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) {
    const std::size_t at = pos_;
    const float f = std::bit_cast<float>(u32(what));
    if (!std::isfinite(f)) throw DecodeError(at, std::string("non-finite float in ") + what);
    return static_cast<double>(f);
  }
  void skip(std::size_t n, const char* what) {
    need(n, what);
    pos_ += n;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Little-endian byte layout:
///   [tag u8][sender u8][seq u32][range f32][bearing f32][count u32] then count records of
///   naive / std_thinning : x, y, theta                               (12 B)
///   kmeans               : cx, cy, cxx, cxy, cyy, w                  (24 B)
///   prorok               : cx, cy, ctheta, w, mu_r, mu_b, var_r, var_b (32 B)
///   det                  : xmin, xmax, ymin, ymax, density, split_dim u8, split_value,
///                          left u32, right u32, leaf u8, 16 zero bytes (50 B)
///   compresspp           : x, y                                      (8 B)
inline std::string encode(const BeliefSummary& m) {
  if (!payload_matches(m.method, m.payload)) throw InvalidArgument("payload does not match method tag");
  const std::size_t count = m.count();
  if (count > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("payload count exceeds u32");
  std::string out;
  out.reserve(kHeaderBytes + count * record_bytes(m.method));
  detail::Writer w(out);
  w.u8(static_cast<std::uint8_t>(m.method));
  w.u8(m.sender);
  w.u32(m.seq);
  w.f32(m.detection.range);
  w.f32(m.detection.bearing);
  w.u32(static_cast<std::uint32_t>(count));
  std::visit(
      [&w](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PoseSet>) {
          for (const auto& q : p.poses) {
            w.f32(q.x);
            w.f32(q.y);
            w.f32(q.theta);
          }
        } else if constexpr (std::is_same_v<T, std::vector<GaussianCluster>>) {
          for (const auto& c : p) {
            w.f32(c.mean.x);
            w.f32(c.mean.y);
            w.f32(c.cov.xx);
            w.f32(c.cov.xy);
            w.f32(c.cov.yy);
            w.f32(c.weight);
          }
        } else if constexpr (std::is_same_v<T, std::vector<ClusterAbstraction>>) {
          for (const auto& c : p) {
            w.f32(c.centroid.x);
            w.f32(c.centroid.y);
            w.f32(c.centroid.theta);
            w.f32(c.weight);
            w.f32(c.detection_mean.range);
            w.f32(c.detection_mean.bearing);
            w.f32(c.var_range);
            w.f32(c.var_bearing);
          }
        } else if constexpr (std::is_same_v<T, DensityTree>) {
          for (const auto& n : p.nodes) {
            w.f32(n.bbox.xmin);
            w.f32(n.bbox.xmax);
            w.f32(n.bbox.ymin);
            w.f32(n.bbox.ymax);
            w.f32(n.density);
            w.u8(n.split_dim);
            w.f32(n.split_value);
            w.u32(n.left);
            w.u32(n.right);
            w.u8(n.leaf ? 1 : 0);
            w.zeros(16);
          }
        } else {
          for (const auto& q : p.points) {
            w.f32(q.x);
            w.f32(q.y);
          }
        }
      },
      m.payload);
  return out;
}

/// Payload size in bytes (excludes the fixed header).
inline std::size_t payload_bytes(const BeliefSummary& m) { return m.count() * record_bytes(m.method); }

inline BeliefSummary decode(std::string_view bytes) {
  detail::Reader r(bytes);
  BeliefSummary m;
  const std::size_t tag_at = r.offset();
  const std::uint8_t tag = r.u8("tag");
  if (tag > static_cast<std::uint8_t>(Method::kCompressPP)) {
    throw DecodeError(tag_at, "unknown method tag " + std::to_string(tag));
  }
  m.method = static_cast<Method>(tag);
  m.sender = r.u8("sender");
  m.seq = r.u32("seq");
  m.detection.range = r.f32("detection range");
  m.detection.bearing = r.f32("detection bearing");
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32("count");
  const std::size_t rec = record_bytes(m.method);
  if (r.remaining() != static_cast<std::size_t>(count) * rec) {
    if (r.remaining() < static_cast<std::size_t>(count) * rec) {
      throw DecodeError(r.offset() + (r.remaining() / rec) * rec,
                        "truncated payload: count " + std::to_string(count) + " needs " +
                            std::to_string(static_cast<std::size_t>(count) * rec) + " bytes");
    }
    throw DecodeError(count_at, "payload length does not match count field");
  }

  switch (m.method) {
    case Method::kNaive:
    case Method::kStdThinning: {
      PoseSet ps;
      ps.poses.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        Pose q;
        q.x = r.f32("x");
        q.y = r.f32("y");
        q.theta = r.f32("theta");
        ps.poses.push_back(q);
      }
      m.payload = std::move(ps);
      break;
    }
    case Method::kKMeans: {
      std::vector<GaussianCluster> cs(count);
      for (auto& c : cs) {
        c.mean.x = r.f32("cx");
        c.mean.y = r.f32("cy");
        c.cov.xx = r.f32("cxx");
        c.cov.xy = r.f32("cxy");
        c.cov.yy = r.f32("cyy");
        c.weight = r.f32("weight");
      }
      m.payload = std::move(cs);
      break;
    }
    case Method::kProrok: {
      std::vector<ClusterAbstraction> cs(count);
      for (auto& c : cs) {
        c.centroid.x = r.f32("cx");
        c.centroid.y = r.f32("cy");
        c.centroid.theta = r.f32("ctheta");
        c.weight = r.f32("weight");
        c.detection_mean.range = r.f32("mu_r");
        c.detection_mean.bearing = r.f32("mu_b");
        c.var_range = r.f32("var_r");
        c.var_bearing = r.f32("var_b");
      }
      m.payload = std::move(cs);
      break;
    }
    case Method::kDet: {
      DensityTree t;
      t.nodes.resize(count);
      for (auto& n : t.nodes) {
        n.bbox.xmin = r.f32("xmin");
        n.bbox.xmax = r.f32("xmax");
        n.bbox.ymin = r.f32("ymin");
        n.bbox.ymax = r.f32("ymax");
        n.density = r.f32("density");
        const std::size_t dim_at = r.offset();
        n.split_dim = r.u8("split_dim");
        if (n.split_dim > 1) throw DecodeError(dim_at, "split_dim must be 0 or 1");
        n.split_value = r.f32("split_value");
        n.left = r.u32("left");
        n.right = r.u32("right");
        const std::size_t leaf_at = r.offset();
        const std::uint8_t leaf = r.u8("leaf");
        if (leaf > 1) throw DecodeError(leaf_at, "leaf flag must be 0 or 1");
        n.leaf = leaf == 1;
        if (!n.leaf && (n.left >= count || n.right >= count)) {
          throw DecodeError(leaf_at, "child index out of range");
        }
        r.skip(16, "padding");
      }
      m.payload = std::move(t);
      break;
    }
    case Method::kCompressPP: {
      CoresetPayload c;
      c.points.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        Vec2 p;
        p.x = r.f32("x");
        p.y = r.f32("y");
        c.points.push_back(p);
      }
      m.payload = std::move(c);
      break;
    }
  }
  return m;
}

}  // namespace cmcl
