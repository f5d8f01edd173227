#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "feddrive/core.hpp"
#include "feddrive/critic.hpp"
#include "feddrive/paillier.hpp"

namespace feddrive::fed {

// ------------------------------------------------------------------------
// configuration
// ------------------------------------------------------------------------

struct RoundConfig {
  int rounds = 300;           // T
  double tau = 0.5;           // client selection rate, (0, 1]
  std::size_t clients = 0;    // K; checked against the simulated fleet
  std::uint64_t seed = 0;
  int histogram_bins = 50;
  unsigned key_bits = 512;
  long fp_scale = 1000000000L;  // protocol fixed-point scale (1e-9 resolution)

  void validate(std::size_t actual_clients) const {
    if (rounds < 1) throw config_error("rounds must be >= 1");
    if (!(tau > 0.0) || tau > 1.0) throw config_error("tau must be in (0, 1]");
    if (clients != 0 && clients != actual_clients) {
      throw config_error("config K does not match the client list");
    }
    if (actual_clients == 0) throw config_error("need at least one client");
    if (histogram_bins < 1) throw config_error("histogram_bins must be positive");
  }

  std::size_t sample_size(std::size_t k) const {
    auto m = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(k)));
    return std::clamp<std::size_t>(m, 1, k);
  }

  json to_json() const {
    return json{{"T", rounds},   {"tau", tau},           {"K", clients},
                {"seed", seed},  {"bins", histogram_bins}, {"key_bits", key_bits},
                {"fp_scale", fp_scale}};
  }

  static RoundConfig from_json(const json& j) {
    RoundConfig c;
    c.rounds = j.at("T").get<int>();
    c.tau = j.at("tau").get<double>();
    c.clients = j.at("K").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("bins")) c.histogram_bins = j.at("bins").get<int>();
    if (j.contains("key_bits")) c.key_bits = j.at("key_bits").get<unsigned>();
    if (j.contains("fp_scale")) c.fp_scale = j.at("fp_scale").get<long>();
    return c;
  }
};

// ------------------------------------------------------------------------
// protocol state
// ------------------------------------------------------------------------

/// Plaintext global statistics as decrypted by the arbiter.
struct GlobalStats {
  long long n = 0;
  std::vector<double> s, o, u, v;
  bool extremes_set = false;
};

struct Moments {
  std::vector<double> mu;
  std::vector<double> sigma2;
};

inline Moments compute_moments(const GlobalStats& g) {
  if (g.n < 2) throw data_error("need at least 2 accumulated samples for moments");
  Moments m;
  const auto d = g.s.size();
  const double n = static_cast<double>(g.n);
  m.mu.resize(d);
  m.sigma2.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    m.mu[j] = g.s[j] / n;
    m.sigma2[j] = (g.o[j] - n * m.mu[j] * m.mu[j]) / (n - 1.0);
  }
  return m;
}

/// A client's encrypted summary {n, s, o, u, v}; everything under the
/// arbiter-issued public key.
struct EncryptedStats {
  he::Ciphertext n;
  std::vector<he::Ciphertext> s, o, u, v;
};

/// Coordinator-side encrypted accumulator. Counts and sums accumulate over
/// rounds; extremes start unset and adopt the first reply, after which the
/// arbiter's sign comparisons decide replacements.
struct EncryptedGlobal {
  he::Ciphertext n;
  std::vector<he::Ciphertext> s, o;
  std::vector<he::Ciphertext> u, v;
  bool extremes_set = false;

  static EncryptedGlobal zero(const he::PublicKey& pk, std::size_t d,
                              he::RandomState& rng) {
    EncryptedGlobal g;
    g.n = he::encrypt(pk, 0, rng);
    g.s.reserve(d);
    g.o.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
      g.s.push_back(he::encrypt(pk, 0, rng));
      g.o.push_back(he::encrypt(pk, 0, rng));
    }
    return g;
  }
};

// ------------------------------------------------------------------------
// transcript
// ------------------------------------------------------------------------

/// The protocol message vocabulary exchanged among coordinator, arbiter,
/// and clients.
enum class MsgKind {
  SelectRequest,
  StatsReply,
  MinMaxQuery,
  MinMaxVerdict,
  MomentsBroadcast,
  CovarianceReply,
  WeightsBroadcast,
  HistogramReply,
  ModelBroadcast,
  ScoreReply,
};

inline std::string to_string(MsgKind k) {
  switch (k) {
    case MsgKind::SelectRequest: return "SelectRequest";
    case MsgKind::StatsReply: return "StatsReply";
    case MsgKind::MinMaxQuery: return "MinMaxQuery";
    case MsgKind::MinMaxVerdict: return "MinMaxVerdict";
    case MsgKind::MomentsBroadcast: return "MomentsBroadcast";
    case MsgKind::CovarianceReply: return "CovarianceReply";
    case MsgKind::WeightsBroadcast: return "WeightsBroadcast";
    case MsgKind::HistogramReply: return "HistogramReply";
    case MsgKind::ModelBroadcast: return "ModelBroadcast";
    case MsgKind::ScoreReply: return "ScoreReply";
  }
  return "?";
}

/// JSON-lines protocol log: one record per message with round, kind, sender
/// and payload byte size. Client replies are stored as digests; broadcasts
/// and id-score pairs are stored in full.
class Transcript {
 public:
  void log(int round, MsgKind kind, std::string_view sender, json payload,
           bool digest_payload = false) {
    const std::string body = payload.dump();
    json rec{{"round", round},
             {"kind", to_string(kind)},
             {"sender", std::string(sender)},
             {"bytes", body.size()}};
    rec["payload"] = digest_payload ? json{{"digest", fnv1a_hex(body)}} : payload;
    records_.push_back(std::move(rec));
  }

  const std::vector<json>& records() const { return records_; }

  void write_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write transcript: " + path);
    for (const auto& r : records_) out << r.dump() << '\n';
  }

 private:
  std::vector<json> records_;
};

inline json cipher_digests(const EncryptedStats& es) {
  auto dig = [](const he::Ciphertext& c) { return fnv1a_hex(c.value.get_str(16)); };
  json s = json::array(), o = json::array(), u = json::array(), v = json::array();
  for (const auto& c : es.s) s.push_back(dig(c));
  for (const auto& c : es.o) o.push_back(dig(c));
  for (const auto& c : es.u) u.push_back(dig(c));
  for (const auto& c : es.v) v.push_back(dig(c));
  return json{{"n", dig(es.n)}, {"s", s}, {"o", o}, {"u", u}, {"v", v}};
}

// ------------------------------------------------------------------------
// arbiter
// ------------------------------------------------------------------------

/// Trusted third party: generates the Paillier key pair, decrypts aggregated
/// statistics, and answers sign queries on encrypted differences. The
/// private key never leaves this class.
class Arbiter {
 public:
  Arbiter(unsigned key_bits, std::uint64_t seed)
      : keys_(he::keygen(key_bits, derive_seed(seed, "arbiter-keys"))) {}

  const he::PublicKey& public_key() const { return keys_.pub; }

  /// Decrypts the difference of two encrypted values and reports only its
  /// sign (-1, 0, +1); the comparison deliberately reveals nothing else.
  int compare_sign(const he::Ciphertext& diff, const he::FixedPointCodec& codec) const {
    check_available();
    return codec.sign_of(he::decrypt(keys_.pub, keys_.priv, diff));
  }

  GlobalStats decrypt_stats(const EncryptedGlobal& enc,
                            const he::FixedPointCodec& codec) const {
    check_available();
    GlobalStats g;
    g.n = mpz_get_si(he::decrypt(keys_.pub, keys_.priv, enc.n).get_mpz_t());
    auto dec = [&](const std::vector<he::Ciphertext>& cs) {
      std::vector<double> out;
      out.reserve(cs.size());
      for (const auto& c : cs) out.push_back(codec.decode(he::decrypt(keys_.pub, keys_.priv, c)));
      return out;
    };
    g.s = dec(enc.s);
    g.o = dec(enc.o);
    if (enc.extremes_set) {
      g.u = dec(enc.u);
      g.v = dec(enc.v);
      g.extremes_set = true;
    }
    return g;
  }

  /// Fault injection for round-rollback tests.
  void fail_next(int count) { fail_countdown_ = count; }

 private:
  void check_available() const {
    if (fail_countdown_ > 0) {
      --fail_countdown_;
      throw protocol_error("arbiter unavailable");
    }
  }

  he::KeyPair keys_;
  mutable int fail_countdown_ = 0;
};

// ------------------------------------------------------------------------
// client
// ------------------------------------------------------------------------

/// A simulated vehicle: holds its private metric matrix, answers protocol
/// requests. Local rows are never placed in a reply; only encrypted
/// summaries, scatter aggregates, bin counts, or id-score pairs leave.
class SimClient {
 public:
  SimClient(std::string id, Matrix data) : id_(std::move(id)), data_(std::move(data)) {}

  const std::string& id() const { return id_; }
  const Matrix& data() const { return data_; }
  std::size_t size() const { return data_.rows(); }

  bool online() const { return online_; }
  void set_online(bool v) { online_ = v; }

  /// Local {n, s, o, u, v}, computed in plaintext and encrypted elementwise.
  /// Empty clients do not reply.
  std::optional<EncryptedStats> round_stats(const he::PublicKey& pk,
                                            const he::FixedPointCodec& codec,
                                            he::RandomState& rng) const {
    if (data_.rows() == 0) return std::nullopt;
    const std::size_t d = data_.cols();
    std::vector<double> s(d, 0.0), o(d, 0.0);
    std::vector<double> u(d, -std::numeric_limits<double>::infinity());
    std::vector<double> v(d, std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < data_.rows(); ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        const double x = data_(r, j);
        s[j] += x;
        o[j] += x * x;
        u[j] = std::max(u[j], x);
        v[j] = std::min(v[j], x);
      }
    }
    EncryptedStats es;
    es.n = he::encrypt(pk, codec.encode_integer(static_cast<long long>(data_.rows())), rng);
    es.s.reserve(d);
    es.o.reserve(d);
    es.u.reserve(d);
    es.v.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
      es.s.push_back(he::encrypt(pk, codec.encode(s[j]), rng));
      es.o.push_back(he::encrypt(pk, codec.encode(o[j]), rng));
      es.u.push_back(he::encrypt(pk, codec.encode(u[j]), rng));
      es.v.push_back(he::encrypt(pk, codec.encode(v[j]), rng));
    }
    return es;
  }

  struct ScatterReply {
    Matrix scatter;      // sum of outer products of globally-centered rows
    std::size_t rows = 0;
  };

  /// Normalizes local data with the broadcast global bounds and returns the
  /// raw scatter about the normalized global mean.
  ScatterReply covariance(const std::vector<double>& u, const std::vector<double>& v,
                          const std::vector<double>& mu,
                          const std::vector<MetricSpec>& specs) const {
    critic::check_normalizable(u, v, &specs);
    Matrix Z = critic::min_max_normalize(data_, u, v);
    std::vector<double> mu_z = critic::normalize_mean(mu, u, v);
    return ScatterReply{critic::raw_scatter(Z, mu_z), data_.rows()};
  }

  /// Per-metric bin counts; out-of-range values clamp into the boundary bins.
  std::vector<std::vector<std::size_t>> histogram(
      const std::vector<std::vector<double>>& edges) const {
    std::vector<std::vector<std::size_t>> counts(edges.size());
    for (std::size_t j = 0; j < edges.size(); ++j) {
      counts[j].assign(edges[j].size() - 1, 0);
    }
    for (std::size_t r = 0; r < data_.rows(); ++r) {
      for (std::size_t j = 0; j < data_.cols(); ++j) {
        const auto& e = edges[j];
        const double x = data_(r, j);
        auto it = std::upper_bound(e.begin(), e.end(), x);
        std::size_t bin;
        if (it == e.begin()) {
          bin = 0;
        } else {
          bin = static_cast<std::size_t>(it - e.begin()) - 1;
          bin = std::min(bin, counts[j].size() - 1);
        }
        ++counts[j][bin];
      }
    }
    return counts;
  }

  /// Locally fitted CRITIC-DM model for the recursive-averaging baseline:
  /// local moments, fitted CDF parameters, and CRITIC weights with the
  /// drop-degenerate policy. Clients with fewer than 2 rows cannot fit.
  struct LocalModel {
    std::size_t rows = 0;
    std::vector<double> mu, sigma, u, v;
    std::vector<double> rate;        // exponential metrics, 1/mu where valid
    std::vector<bool> rate_valid;
    std::vector<double> weights;
  };

  std::optional<LocalModel> local_model(const std::vector<MetricSpec>& specs) const {
    if (data_.rows() < 2) return std::nullopt;
    critic::StatsSummary g = critic::summarize(data_);
    LocalModel lm;
    lm.rows = data_.rows();
    lm.mu = g.mu;
    lm.u = g.u;
    lm.v = g.v;
    lm.sigma.resize(g.sigma2.size());
    for (std::size_t j = 0; j < g.sigma2.size(); ++j) lm.sigma[j] = std::sqrt(g.sigma2[j]);
    lm.rate.assign(specs.size(), 0.0);
    lm.rate_valid.assign(specs.size(), false);
    for (std::size_t j = 0; j < specs.size(); ++j) {
      if (specs[j].distribution == Distribution::exponential && g.mu[j] > 0.0) {
        lm.rate[j] = 1.0 / g.mu[j];
        lm.rate_valid[j] = true;
      }
    }
    try {
      critic::ScoringModel local =
          critic::train_central(data_, specs, critic::DegeneratePolicy::drop);
      lm.weights = local.weights;
    } catch (const data_error&) {
      return std::nullopt;  // all metrics degenerate locally
    }
    return lm;
  }

  /// Scores every local trip with the broadcast model; only id-score pairs
  /// are returned.
  std::vector<std::pair<std::string, double>> score_trips(
      const critic::ScoringModel& model) const {
    std::vector<std::pair<std::string, double>> out;
    out.reserve(data_.rows());
    for (std::size_t r = 0; r < data_.rows(); ++r) {
      out.emplace_back(id_, model.score_row(data_, r));
    }
    return out;
  }

 private:
  std::string id_;
  Matrix data_;
  bool online_ = true;
};

// ------------------------------------------------------------------------
// protocol steps
// ------------------------------------------------------------------------

/// Accumulates encrypted counts, sums and squared sums into the global
/// accumulator (re-sampled clients contribute again by design).
inline void aggregate_encrypted_stats(const he::PublicKey& pk, EncryptedGlobal& acc,
                                      const std::vector<const EncryptedStats*>& replies) {
  for (const auto* es : replies) {
    if (es->n.key_fingerprint != pk.fingerprint) {
      throw protocol_error("reply encrypted under a different public key");
    }
    acc.n = he::hadd(pk, acc.n, es->n);
    for (std::size_t j = 0; j < acc.s.size(); ++j) {
      acc.s[j] = he::hadd(pk, acc.s[j], es->s[j]);
      acc.o[j] = he::hadd(pk, acc.o[j], es->o[j]);
    }
  }
}

/// Updates the encrypted extremes. For each reply the coordinator forms the
/// encrypted difference and asks the arbiter only for its sign; ties keep
/// the incumbent ciphertext.
inline void secure_minmax_update(const he::PublicKey& pk, EncryptedGlobal& acc,
                                 const std::vector<const EncryptedStats*>& replies,
                                 const Arbiter& arbiter, const he::FixedPointCodec& codec,
                                 Transcript* log = nullptr, int round = 0) {
  if (replies.empty()) return;
  const std::size_t d = acc.s.size();
  std::size_t start = 0;
  if (!acc.extremes_set) {
    acc.u = replies[0]->u;
    acc.v = replies[0]->v;
    acc.extremes_set = true;
    start = 1;
  }
  for (std::size_t i = start; i < replies.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      he::Ciphertext du = he::hadd(pk, acc.u[j], he::hneg(pk, replies[i]->u[j]));
      if (log) {
        log->log(round, MsgKind::MinMaxQuery, "coordinator",
                 json{{"metric", j}, {"which", "u"}}, false);
      }
      const int su = arbiter.compare_sign(du, codec);
      if (log) {
        log->log(round, MsgKind::MinMaxVerdict, "arbiter", json{{"sign", su}}, false);
      }
      if (su < 0) acc.u[j] = replies[i]->u[j];

      he::Ciphertext dv = he::hadd(pk, acc.v[j], he::hneg(pk, replies[i]->v[j]));
      if (log) {
        log->log(round, MsgKind::MinMaxQuery, "coordinator",
                 json{{"metric", j}, {"which", "v"}}, false);
      }
      const int sv = arbiter.compare_sign(dv, codec);
      if (log) {
        log->log(round, MsgKind::MinMaxVerdict, "arbiter", json{{"sign", sv}}, false);
      }
      if (sv > 0) acc.v[j] = replies[i]->v[j];
    }
  }
}

/// Recursive aggregation of round weights: w <- (1 - 1/t) w + (1/t) w_round.
/// At t = 1 the result is exactly w_round; after T updates the result equals
/// the arithmetic mean of all round weights.
inline std::vector<double> update_global_weights(const std::vector<double>& w, int t,
                                                 const std::vector<double>& w_round) {
  if (t < 1) throw config_error("weight update index starts at 1");
  std::vector<double> out(w.size());
  const double a = 1.0 - 1.0 / static_cast<double>(t);
  const double b = 1.0 / static_cast<double>(t);
  for (std::size_t j = 0; j < w.size(); ++j) out[j] = a * w[j] + b * w_round[j];
  return out;
}

inline std::vector<std::vector<double>> make_bin_edges(const std::vector<double>& v,
                                                       const std::vector<double>& u,
                                                       int bins) {
  std::vector<std::vector<double>> edges(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) {
    edges[j].resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b) {
      edges[j][static_cast<std::size_t>(b)] =
          v[j] + (u[j] - v[j]) * static_cast<double>(b) / static_cast<double>(bins);
    }
  }
  return edges;
}

/// Global histograms: clients return only bin counts, the coordinator sums
/// them elementwise.
inline std::vector<std::vector<std::size_t>> secure_histogram(
    const std::vector<SimClient>& clients,
    const std::vector<std::vector<double>>& edges, Transcript* log = nullptr,
    int round = 0) {
  std::vector<std::vector<std::size_t>> total(edges.size());
  for (std::size_t j = 0; j < edges.size(); ++j) total[j].assign(edges[j].size() - 1, 0);
  for (const auto& client : clients) {
    auto counts = client.histogram(edges);
    json payload;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      for (std::size_t b = 0; b < counts[j].size(); ++b) total[j][b] += counts[j][b];
      payload.push_back(counts[j]);
    }
    if (log) log->log(round, MsgKind::HistogramReply, client.id(), payload, true);
  }
  return total;
}

// ------------------------------------------------------------------------
// training loops
// ------------------------------------------------------------------------

struct FederatedResult {
  critic::ScoringModel model;
  std::vector<std::vector<double>> weight_history;  // w^t per round
  GlobalStats final_stats;
  Moments final_moments;
};

namespace detail {

inline std::vector<std::size_t> sample_without_replacement(std::mt19937_64& rng,
                                                           std::size_t k,
                                                           std::size_t m) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng() % (k - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());  // replies applied in ascending client order
  return idx;
}

}  // namespace detail

/// One federated round body: stats task then covariance/weights task.
/// Throws protocol_error when the arbiter is down or more than half of the
/// sampled clients are offline; the caller discards the partial state and
/// retries with a fresh sample.
struct RoundOutcome {
  EncryptedGlobal acc;
  GlobalStats stats;
  Moments moments;
  std::vector<double> w_round;  // empty when the covariance task was skipped
};

inline RoundOutcome run_federated_round(
    const std::vector<SimClient>& clients, const std::vector<std::size_t>& sampled,
    const std::vector<MetricSpec>& specs, const EncryptedGlobal& previous,
    const Arbiter& arbiter, const he::FixedPointCodec& codec, he::RandomState& enc_rng,
    const GlobalStats& broadcast_prev, Transcript* log, int round) {
  const he::PublicKey& pk = arbiter.public_key();
  RoundOutcome out;
  out.acc = previous;

  if (log) {
    json sel{{"clients", json::array()}, {"n", broadcast_prev.n}};
    for (auto i : sampled) sel["clients"].push_back(clients[i].id());
    log->log(round, MsgKind::SelectRequest, "coordinator", sel, false);
  }

  std::size_t offline = 0;
  std::vector<EncryptedStats> replies;
  std::vector<std::size_t> responders;
  for (auto i : sampled) {
    if (!clients[i].online()) {
      ++offline;
      continue;
    }
    auto es = clients[i].round_stats(pk, codec, enc_rng);
    if (!es) continue;  // empty client: round proceeds without it
    if (log) log->log(round, MsgKind::StatsReply, clients[i].id(), cipher_digests(*es), false);
    replies.push_back(std::move(*es));
    responders.push_back(i);
  }
  if (2 * offline > sampled.size()) {
    throw protocol_error("more than half of the sampled clients are offline");
  }

  std::vector<const EncryptedStats*> reply_ptrs;
  reply_ptrs.reserve(replies.size());
  for (const auto& r : replies) reply_ptrs.push_back(&r);

  aggregate_encrypted_stats(pk, out.acc, reply_ptrs);
  secure_minmax_update(pk, out.acc, reply_ptrs, arbiter, codec, log, round);

  out.stats = arbiter.decrypt_stats(out.acc, codec);
  if (out.stats.n < 2 || !out.stats.extremes_set) {
    return out;  // not enough data yet; stats keep accumulating
  }
  out.moments = compute_moments(out.stats);
  if (log) {
    log->log(round, MsgKind::MomentsBroadcast, "coordinator",
             json{{"n", out.stats.n},
                  {"u", out.stats.u},
                  {"v", out.stats.v},
                  {"mu", out.moments.mu},
                  {"sigma2", out.moments.sigma2}},
             false);
  }

  // covariance task over the same selected set
  Matrix pooled(specs.size(), specs.size());
  std::size_t pooled_rows = 0;
  for (auto i : responders) {
    auto reply = clients[i].covariance(out.stats.u, out.stats.v, out.moments.mu, specs);
    if (log) {
      log->log(round, MsgKind::CovarianceReply, clients[i].id(),
               json{{"scatter", reply.scatter.data()}, {"rows", reply.rows}}, true);
    }
    for (std::size_t e = 0; e < pooled.data().size(); ++e) {
      pooled.data()[e] += reply.scatter.data()[e];
    }
    pooled_rows += reply.rows;
  }
  if (pooled_rows < 2) return out;

  // pooled covariance of this round's sample, divided once
  for (double& x : pooled.data()) x /= static_cast<double>(pooled_rows - 1);

  // The round Pearson matrix is normalized by the pooled scatter's own
  // diagonal, which keeps it a valid correlation matrix for any skewed
  // round sample; at full participation the diagonal equals the global
  // normalized variance and this reduces to the centralized computation.
  std::vector<double> sigma_round(specs.size());
  for (std::size_t j = 0; j < specs.size(); ++j) {
    sigma_round[j] = std::sqrt(std::max(pooled(j, j), 0.0));
    if (!(sigma_round[j] > 0.0)) throw degenerate_metric_error(specs[j].name);
  }
  Matrix R = critic::pearson_from_cov(pooled, sigma_round);

  std::vector<double> sigma(specs.size());
  for (std::size_t j = 0; j < specs.size(); ++j) sigma[j] = std::sqrt(out.moments.sigma2[j]);
  std::vector<double> sigma_z = critic::normalize_sigma(sigma, out.stats.u, out.stats.v);
  out.w_round = critic::critic_weights(sigma_z, R);
  return out;
}

/// The full consistently-federated training loop: T rounds of the stats and
/// covariance tasks over a seeded client sample, with encrypted aggregation
/// and recursive weight averaging. Failed rounds (arbiter down, majority of
/// sampled clients offline) are discarded and retried with a fresh sample.
inline FederatedResult train_federated(const std::vector<SimClient>& clients,
                                       const std::vector<MetricSpec>& specs,
                                       const RoundConfig& cfg, const Arbiter& arbiter,
                                       Transcript* log = nullptr) {
  cfg.validate(clients.size());
  const std::size_t d = specs.size();
  bool any_data = false;
  for (const auto& c : clients) any_data = any_data || c.size() > 0;
  if (!any_data) throw data_error("all clients are empty");

  const he::PublicKey& pk = arbiter.public_key();
  he::FixedPointCodec codec(pk.n, cfg.fp_scale);
  he::RandomState enc_rng(derive_seed(cfg.seed, "encryption"));
  std::mt19937_64 sampler(derive_seed(cfg.seed, "sampling"));

  EncryptedGlobal acc = EncryptedGlobal::zero(pk, d, enc_rng);
  GlobalStats stats;
  Moments moments;
  std::vector<double> w(d, 1.0 / static_cast<double>(d));
  int weight_updates = 0;
  FederatedResult result;

  const std::size_t m = cfg.sample_size(clients.size());
  for (int t = 1; t <= cfg.rounds; ++t) {
    RoundOutcome outcome;
    int attempts = 0;
    while (true) {
      auto sampled = detail::sample_without_replacement(sampler, clients.size(), m);
      try {
        outcome = run_federated_round(clients, sampled, specs, acc, arbiter, codec,
                                      enc_rng, stats, log, t);
        break;
      } catch (const protocol_error&) {
        // partial round state is discarded; retry with a fresh sample
        if (++attempts > 8) {
          throw data_error("federated round failed repeatedly; aborting training");
        }
      }
    }
    acc = std::move(outcome.acc);
    stats = std::move(outcome.stats);
    if (!outcome.moments.mu.empty()) moments = std::move(outcome.moments);
    if (!outcome.w_round.empty()) {
      ++weight_updates;
      w = update_global_weights(w, weight_updates, outcome.w_round);
      if (log) log->log(t, MsgKind::WeightsBroadcast, "coordinator", json{{"w", w}}, false);
    }
    result.weight_history.push_back(w);
  }

  if (weight_updates == 0) {
    throw data_error("training never accumulated enough data for weights");
  }

  std::vector<double> sigma(d);
  for (std::size_t j = 0; j < d; ++j) sigma[j] = std::sqrt(moments.sigma2[j]);
  result.model = critic::assemble_model(specs, w, moments.mu, sigma, stats.u, stats.v,
                                        critic::ModelMode::federated, cfg.rounds);
  result.final_stats = stats;
  result.final_moments = moments;
  if (log) {
    log->log(cfg.rounds, MsgKind::ModelBroadcast, "coordinator",
             critic::model_to_json(result.model), false);
  }
  return result;
}

/// Recursive-averaging baseline: sampled clients fit entire CRITIC-DM models
/// locally (moments, CDF parameters, weights); the coordinator averages the
/// parameters sample-count weighted within the round and applies the same
/// recursive update across rounds. No encryption is involved.
inline FederatedResult train_fedavg_baseline(const std::vector<SimClient>& clients,
                                             const std::vector<MetricSpec>& specs,
                                             const RoundConfig& cfg,
                                             Transcript* log = nullptr) {
  cfg.validate(clients.size());
  const std::size_t d = specs.size();
  std::mt19937_64 sampler(derive_seed(cfg.seed, "sampling"));

  std::vector<double> mu(d, 0.0), sigma(d, 0.0), u(d, 0.0), v(d, 0.0), w(d, 1.0 / d);
  std::vector<double> rate(d, 0.0);
  std::vector<int> rate_updates(d, 0);
  int updates = 0;
  FederatedResult result;

  const std::size_t m = cfg.sample_size(clients.size());
  for (int t = 1; t <= cfg.rounds; ++t) {
    auto sampled = detail::sample_without_replacement(sampler, clients.size(), m);
    std::vector<SimClient::LocalModel> models;
    for (auto i : sampled) {
      if (!clients[i].online()) continue;
      auto lm = clients[i].local_model(specs);
      if (!lm) continue;
      if (log) {
        log->log(t, MsgKind::StatsReply, clients[i].id(),
                 json{{"mu", lm->mu}, {"sigma", lm->sigma}, {"w", lm->weights}}, true);
      }
      models.push_back(std::move(*lm));
    }
    if (models.empty()) {
      result.weight_history.push_back(w);
      continue;
    }

    double total = 0.0;
    std::vector<double> mu_r(d, 0.0), sig_r(d, 0.0), u_r(d, 0.0), v_r(d, 0.0),
        w_r(d, 0.0), rate_r(d, 0.0), rate_n(d, 0.0);
    for (const auto& lm : models) {
      const double nw = static_cast<double>(lm.rows);
      total += nw;
      for (std::size_t j = 0; j < d; ++j) {
        mu_r[j] += nw * lm.mu[j];
        sig_r[j] += nw * lm.sigma[j];
        u_r[j] += nw * lm.u[j];
        v_r[j] += nw * lm.v[j];
        w_r[j] += nw * lm.weights[j];
        if (lm.rate_valid[j]) {
          rate_r[j] += nw * lm.rate[j];
          rate_n[j] += nw;
        }
      }
    }
    ++updates;
    const double a = 1.0 - 1.0 / static_cast<double>(updates);
    const double b = 1.0 / static_cast<double>(updates);
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] = a * mu[j] + b * mu_r[j] / total;
      sigma[j] = a * sigma[j] + b * sig_r[j] / total;
      u[j] = a * u[j] + b * u_r[j] / total;
      v[j] = a * v[j] + b * v_r[j] / total;
      w[j] = a * w[j] + b * w_r[j] / total;
      if (rate_n[j] > 0.0) {
        const double aj = 1.0 - 1.0 / static_cast<double>(rate_updates[j] + 1);
        const double bj = 1.0 / static_cast<double>(rate_updates[j] + 1);
        rate[j] = aj * rate[j] + bj * rate_r[j] / rate_n[j];
        ++rate_updates[j];
      }
    }
    result.weight_history.push_back(w);
    if (log) log->log(t, MsgKind::WeightsBroadcast, "coordinator", json{{"w", w}}, false);
  }
  if (updates == 0) throw data_error("no client could fit a local model");

  // model mean for exponential metrics comes from the averaged rate so the
  // stored (mu, rate) pair stays self-consistent
  std::vector<double> model_mu = mu;
  for (std::size_t j = 0; j < d; ++j) {
    if (specs[j].distribution == Distribution::exponential && rate_updates[j] > 0 &&
        rate[j] > 0.0) {
      model_mu[j] = 1.0 / rate[j];
    }
  }
  result.model = critic::assemble_model(specs, w, model_mu, sigma, u, v,
                                        critic::ModelMode::fedavg, cfg.rounds);
  result.final_moments.mu = model_mu;
  return result;
}

/// Inference stage: the model is broadcast and every client returns only
/// (driver id, score) pairs; metric vectors never leave the client.
inline std::vector<std::pair<std::string, double>> federated_infer(
    const critic::ScoringModel& model, const std::vector<SimClient>& clients,
    Transcript* log = nullptr) {
  if (log) {
    log->log(0, MsgKind::ModelBroadcast, "coordinator", critic::model_to_json(model), false);
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& client : clients) {
    auto scores = client.score_trips(model);
    if (log) {
      json payload = json::array();
      for (const auto& [id, score] : scores) {
        payload.push_back(json{{"id", id}, {"score", score}});
      }
      log->log(0, MsgKind::ScoreReply, client.id(), payload, false);
    }
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

/// Preliminary encrypted min/max pass over every client (used to fix global
/// histogram bin edges).
inline std::pair<std::vector<double>, std::vector<double>> global_minmax_pass(
    const std::vector<SimClient>& clients, const std::vector<MetricSpec>& specs,
    const Arbiter& arbiter, long fp_scale, std::uint64_t seed,
    Transcript* log = nullptr) {
  const he::PublicKey& pk = arbiter.public_key();
  he::FixedPointCodec codec(pk.n, fp_scale);
  he::RandomState rng(derive_seed(seed, "minmax-pass"));
  EncryptedGlobal acc = EncryptedGlobal::zero(pk, specs.size(), rng);
  std::vector<EncryptedStats> replies;
  for (const auto& c : clients) {
    auto es = c.round_stats(pk, codec, rng);
    if (!es) continue;
    if (log) log->log(0, MsgKind::StatsReply, c.id(), cipher_digests(*es), false);
    replies.push_back(std::move(*es));
  }
  if (replies.empty()) throw data_error("all clients are empty");
  std::vector<const EncryptedStats*> ptrs;
  for (const auto& r : replies) ptrs.push_back(&r);
  secure_minmax_update(pk, acc, ptrs, arbiter, codec, log, 0);
  GlobalStats g = arbiter.decrypt_stats(acc, codec);
  return {g.u, g.v};
}

}  // namespace feddrive::fed
