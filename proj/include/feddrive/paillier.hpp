#pragma once

#include <gmpxx.h>

#include <random>
#include <string>
#include <utility>

#include "feddrive/core.hpp"

namespace feddrive::he {

/// Wrapper around gmp_randstate_t (Mersenne Twister). Seeded construction is
/// deterministic; from_entropy() pulls the seed from the OS.
class RandomState {
 public:
  explicit RandomState(std::uint64_t seed) {
    gmp_randinit_mt(state_);
    gmp_randseed_ui(state_, static_cast<unsigned long>(seed));
  }

  static RandomState from_entropy() {
    std::random_device rd;
    std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    return RandomState(s);
  }

  RandomState(const RandomState&) = delete;
  RandomState& operator=(const RandomState&) = delete;
  RandomState(RandomState&& other) noexcept {
    gmp_randinit_set(state_, other.state_);
  }

  ~RandomState() { gmp_randclear(state_); }

  mpz_class urandomb(unsigned bits) {
    mpz_class r;
    mpz_urandomb(r.get_mpz_t(), state_, bits);
    return r;
  }

  /// Uniform in [0, bound).
  mpz_class urandomm(const mpz_class& bound) {
    mpz_class r;
    mpz_urandomm(r.get_mpz_t(), state_, bound.get_mpz_t());
    return r;
  }

 private:
  gmp_randstate_t state_;
};

struct PublicKey {
  mpz_class n;        // modulus p*q
  mpz_class g;        // generator, fixed to n+1
  mpz_class n_square;
  unsigned bits = 0;
  std::string fingerprint;

  json to_json() const {
    return json{{"n", n.get_str(16)}, {"g", g.get_str(16)}, {"bits", bits}};
  }

  static PublicKey from_json(const json& j) {
    PublicKey pk;
    pk.n = mpz_class(j.at("n").get<std::string>(), 16);
    pk.g = mpz_class(j.at("g").get<std::string>(), 16);
    pk.bits = j.at("bits").get<unsigned>();
    pk.n_square = pk.n * pk.n;
    pk.fingerprint = fnv1a_hex(pk.n.get_str(16));
    return pk;
  }
};

struct PrivateKey {
  mpz_class lambda;  // phi(n)
  mpz_class mu;      // phi(n)^-1 mod n

  json to_json() const {
    return json{{"lambda", lambda.get_str(16)}, {"mu", mu.get_str(16)}};
  }

  static PrivateKey from_json(const json& j) {
    PrivateKey sk;
    sk.lambda = mpz_class(j.at("lambda").get<std::string>(), 16);
    sk.mu = mpz_class(j.at("mu").get<std::string>(), 16);
    return sk;
  }
};

struct KeyPair {
  PublicKey pub;
  PrivateKey priv;
};

/// Paillier ciphertext. Carries the issuing key's fingerprint so that
/// operations under mismatched keys fail loudly instead of producing garbage.
struct Ciphertext {
  mpz_class value;
  std::string key_fingerprint;
};

namespace detail {

inline mpz_class random_prime(RandomState& rng, unsigned bits) {
  mpz_class p = rng.urandomb(bits);
  // Force the top two bits so that p*q has exactly the requested length.
  mpz_setbit(p.get_mpz_t(), bits - 1);
  mpz_setbit(p.get_mpz_t(), bits - 2);
  mpz_nextprime(p.get_mpz_t(), p.get_mpz_t());
  return p;
}

inline mpz_class l_function(const mpz_class& x, const mpz_class& n) {
  return (x - 1) / n;
}

}  // namespace detail

inline KeyPair keygen_with_rng(unsigned bit_length, RandomState& rng) {
  if (bit_length < 64) {
    throw config_error("Paillier key length must be at least 64 bits");
  }
  mpz_class p, q, phi, n;
  while (true) {
    p = detail::random_prime(rng, bit_length / 2);
    q = detail::random_prime(rng, bit_length / 2);
    if (p == q) continue;
    n = p * q;
    phi = (p - 1) * (q - 1);
    mpz_class gcd;
    mpz_gcd(gcd.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
    if (gcd == 1) break;
  }
  KeyPair kp;
  kp.pub.n = n;
  kp.pub.g = n + 1;
  kp.pub.n_square = n * n;
  kp.pub.bits = bit_length;
  kp.pub.fingerprint = fnv1a_hex(n.get_str(16));
  kp.priv.lambda = phi;
  mpz_invert(kp.priv.mu.get_mpz_t(), phi.get_mpz_t(), n.get_mpz_t());
  return kp;
}

/// Deterministic keygen for reproducible runs and tests.
inline KeyPair keygen(unsigned bit_length, std::uint64_t seed) {
  RandomState rng(seed);
  return keygen_with_rng(bit_length, rng);
}

/// Production path: key material from OS entropy.
inline KeyPair keygen(unsigned bit_length) {
  RandomState rng = RandomState::from_entropy();
  return keygen_with_rng(bit_length, rng);
}

inline Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, RandomState& rng) {
  if (m < 0 || m >= pk.n) {
    throw std::domain_error("Paillier plaintext out of range [0, n)");
  }
  mpz_class r;
  do {
    r = rng.urandomm(pk.n);
  } while (r == 0);
  Ciphertext c;
  // g = n+1, so g^m = 1 + m*n (mod n^2); only r^n needs a full power.
  mpz_powm(c.value.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(),
           pk.n_square.get_mpz_t());
  mpz_class gm = (m * pk.n + 1) % pk.n_square;
  c.value = c.value * gm % pk.n_square;
  c.key_fingerprint = pk.fingerprint;
  return c;
}

inline mpz_class decrypt(const PublicKey& pk, const PrivateKey& sk, const Ciphertext& c) {
  if (c.key_fingerprint != pk.fingerprint) {
    throw decrypt_error("ciphertext key fingerprint does not match this key");
  }
  if (c.value < 0 || c.value >= pk.n_square) {
    throw decrypt_error("ciphertext outside [0, n^2)");
  }
  mpz_class gcd;
  mpz_gcd(gcd.get_mpz_t(), c.value.get_mpz_t(), pk.n.get_mpz_t());
  if (gcd != 1) {
    throw decrypt_error("ciphertext not coprime with modulus");
  }
  mpz_class m;
  mpz_powm(m.get_mpz_t(), c.value.get_mpz_t(), sk.lambda.get_mpz_t(),
           pk.n_square.get_mpz_t());
  m = detail::l_function(m, pk.n) * sk.mu % pk.n;
  return m;
}

inline void check_same_key(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  if (a.key_fingerprint != pk.fingerprint || b.key_fingerprint != pk.fingerprint) {
    throw std::domain_error("ciphertext modulus mismatch");
  }
}

/// Homomorphic addition: Dec(hadd(a, b)) = m_a + m_b mod n.
inline Ciphertext hadd(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  check_same_key(pk, a, b);
  return Ciphertext{a.value * b.value % pk.n_square, pk.fingerprint};
}

/// Plaintext multiplication: Dec(hmul_plain(a, k)) = k * m_a mod n, k >= 0.
inline Ciphertext hmul_plain(const PublicKey& pk, const Ciphertext& a, const mpz_class& k) {
  if (a.key_fingerprint != pk.fingerprint) {
    throw std::domain_error("ciphertext modulus mismatch");
  }
  if (k < 0) throw std::domain_error("plaintext factor must be non-negative");
  Ciphertext c;
  mpz_powm(c.value.get_mpz_t(), a.value.get_mpz_t(), k.get_mpz_t(),
           pk.n_square.get_mpz_t());
  c.key_fingerprint = pk.fingerprint;
  return c;
}

/// Dec(hneg(a)) = -m_a mod n, via the modular inverse of the ciphertext
/// (much cheaper than exponentiation by n-1).
inline Ciphertext hneg(const PublicKey& pk, const Ciphertext& a) {
  if (a.key_fingerprint != pk.fingerprint) {
    throw std::domain_error("ciphertext modulus mismatch");
  }
  Ciphertext c;
  mpz_invert(c.value.get_mpz_t(), a.value.get_mpz_t(), pk.n_square.get_mpz_t());
  c.key_fingerprint = pk.fingerprint;
  return c;
}

/// Maps reals to the plaintext space with a decimal scale. Negatives occupy
/// the upper half-range [n - m, n), two's-complement style.
class FixedPointCodec {
 public:
  FixedPointCodec(mpz_class modulus, mpz_class scale = mpz_class(1000000))
      : modulus_(std::move(modulus)), scale_(std::move(scale)) {
    if (scale_ <= 0) throw config_error("fixed-point scale must be positive");
    half_ = modulus_ / 2;
  }

  const mpz_class& scale() const { return scale_; }
  const mpz_class& modulus() const { return modulus_; }

  mpz_class encode(double x) const {
    if (!std::isfinite(x)) throw std::domain_error("cannot encode non-finite value");
    mpf_class scaled(x, 96);
    scaled *= mpf_class(scale_, 96);
    // round half away from zero; mpz_set_f truncates toward zero
    if (scaled >= 0) {
      scaled += 0.5;
    } else {
      scaled -= 0.5;
    }
    mpz_class m;
    mpz_set_f(m.get_mpz_t(), scaled.get_mpf_t());
    if (m >= half_ || -m >= half_) {
      throw std::domain_error("value exceeds fixed-point representable range");
    }
    return m < 0 ? m + modulus_ : m;
  }

  double decode(const mpz_class& m) const {
    mpz_class v = m >= half_ ? m - modulus_ : m;
    // split into integral and fractional parts so the double conversion
    // stays exact for magnitudes up to 2^53 * scale
    mpz_class q, r;
    mpz_tdiv_qr(q.get_mpz_t(), r.get_mpz_t(), v.get_mpz_t(), scale_.get_mpz_t());
    return q.get_d() + r.get_d() / scale_.get_d();
  }

  mpz_class encode_integer(long long v) const {
    mpz_class m(static_cast<long>(v));
    if (m >= half_ || -m >= half_) {
      throw std::domain_error("integer exceeds representable range");
    }
    return m < 0 ? m + modulus_ : m;
  }

  /// Signed interpretation of a decrypted value; used by the arbiter's
  /// comparison replies.
  int sign_of(const mpz_class& m) const {
    if (m == 0) return 0;
    return m >= half_ ? -1 : 1;
  }

 private:
  mpz_class modulus_;
  mpz_class scale_;
  mpz_class half_;
};

}  // namespace feddrive::he
