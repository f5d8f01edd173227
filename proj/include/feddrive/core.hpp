#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace feddrive {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

// --- error categories (CLI maps config->1, data->2) ---------------------

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct protocol_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct decrypt_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct fit_error : data_error {
  using data_error::data_error;
};

struct degenerate_metric_error : data_error {
  explicit degenerate_metric_error(const std::string& metric)
      : data_error("degenerate metric (max == min or zero variance): " + metric),
        metric_name(metric) {}
  std::string metric_name;
};

// --- metric schema -------------------------------------------------------

enum class Expectation { positive, negative, oscillator };
enum class Distribution { exponential, normal };

inline std::string to_string(Expectation e) {
  switch (e) {
    case Expectation::positive: return "positive";
    case Expectation::negative: return "negative";
    case Expectation::oscillator: return "oscillator";
  }
  return "?";
}

inline std::string to_string(Distribution d) {
  return d == Distribution::exponential ? "exponential" : "normal";
}

inline Expectation expectation_from_string(const std::string& s) {
  if (s == "positive") return Expectation::positive;
  if (s == "negative") return Expectation::negative;
  if (s == "oscillator") return Expectation::oscillator;
  throw config_error("unknown expectation type: " + s);
}

inline Distribution distribution_from_string(const std::string& s) {
  if (s == "exponential") return Distribution::exponential;
  if (s == "normal") return Distribution::normal;
  throw config_error("unknown distribution family: " + s);
}

/// One evaluation metric: its name, direction of merit, and the
/// distribution family used for its CDF-based score.
struct MetricSpec {
  std::string name;
  Expectation expectation = Expectation::negative;
  Distribution distribution = Distribution::exponential;

  bool operator==(const MetricSpec&) const = default;
};

inline void to_json(json& j, const MetricSpec& m) {
  j = json{{"name", m.name},
           {"expectation", to_string(m.expectation)},
           {"distribution", to_string(m.distribution)}};
}

inline void from_json(const json& j, MetricSpec& m) {
  m.name = j.at("name").get<std::string>();
  m.expectation = expectation_from_string(j.at("expectation").get<std::string>());
  m.distribution = distribution_from_string(j.at("distribution").get<std::string>());
}

// --- dense row-major matrix ----------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void append_row(const std::vector<double>& v) {
    if (cols_ == 0) cols_ = v.size();
    if (v.size() != cols_) throw std::domain_error("row width mismatch");
    data_.insert(data_.end(), v.begin(), v.end());
    ++rows_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// --- deterministic randomness --------------------------------------------

/// splitmix64 step; used to derive independent sub-seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Sub-seed for a named module, so one --seed drives every RNG in a run.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = master ^ h;
  return splitmix64(s);
}

/// FNV-1a digest of a byte string, hex-encoded; used for transcript payload
/// digests and key fingerprints.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace feddrive
