#pragma once

// AES-128-GCM via OpenSSL EVP. One context per key, reused across packets.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <new>
#include <span>
#include <string>

#include "cvmio/error.hpp"

namespace cvmio {

inline constexpr std::size_t kGcmKeyLen = 16;
inline constexpr std::size_t kGcmNonceLen = 12;
inline constexpr std::size_t kGcmTagLen = 16;

/// AES block-cipher invocations (seal or open) made by the calling thread.
/// Lets tests check which worker did the crypto.
inline std::uint64_t& thread_aead_ops() {
  thread_local std::uint64_t n = 0;
  return n;
}

class Aes128Gcm {
 public:
  explicit Aes128Gcm(std::span<const std::uint8_t, kGcmKeyLen> key)
      : enc_(EVP_CIPHER_CTX_new()), dec_(EVP_CIPHER_CTX_new()) {
    if (!enc_ || !dec_) throw std::bad_alloc();
    if (EVP_EncryptInit_ex(enc_, EVP_aes_128_gcm(), nullptr, key.data(), nullptr) != 1 ||
        EVP_DecryptInit_ex(dec_, EVP_aes_128_gcm(), nullptr, key.data(), nullptr) != 1)
      throw Error(Errc::ConfigInvalid, "AES-GCM key setup failed");
  }
  ~Aes128Gcm() {
    EVP_CIPHER_CTX_free(enc_);
    EVP_CIPHER_CTX_free(dec_);
  }
  Aes128Gcm(const Aes128Gcm&) = delete;
  Aes128Gcm& operator=(const Aes128Gcm&) = delete;

  /// in and out may alias exactly.
  void seal(std::span<const std::uint8_t, kGcmNonceLen> nonce, std::span<const std::uint8_t> aad,
            std::span<const std::uint8_t> in, std::span<std::uint8_t> out,
            std::span<std::uint8_t, kGcmTagLen> tag) {
    if (out.size() != in.size()) throw Error(Errc::OutOfBounds, "seal output size");
    ++thread_aead_ops();
    int len = 0;
    bool ok = EVP_EncryptInit_ex(enc_, nullptr, nullptr, nullptr, nonce.data()) == 1 &&
              (aad.empty() || EVP_EncryptUpdate(enc_, nullptr, &len, aad.data(), int(aad.size())) == 1) &&
              (in.empty() || EVP_EncryptUpdate(enc_, out.data(), &len, in.data(), int(in.size())) == 1) &&
              EVP_EncryptFinal_ex(enc_, out.data() + in.size(), &len) == 1 &&
              EVP_CIPHER_CTX_ctrl(enc_, EVP_CTRL_GCM_GET_TAG, int(kGcmTagLen), tag.data()) == 1;
    if (!ok) throw Error(Errc::ConfigInvalid, "AES-GCM seal failed");
  }

  /// Returns false on tag mismatch; `out` contents are then unspecified.
  bool open(std::span<const std::uint8_t, kGcmNonceLen> nonce, std::span<const std::uint8_t> aad,
            std::span<const std::uint8_t> in, std::span<std::uint8_t> out,
            std::span<const std::uint8_t, kGcmTagLen> tag) {
    if (out.size() != in.size()) throw Error(Errc::OutOfBounds, "open output size");
    ++thread_aead_ops();
    int len = 0;
    std::array<std::uint8_t, kGcmTagLen> t;
    std::copy(tag.begin(), tag.end(), t.begin());
    bool ok = EVP_DecryptInit_ex(dec_, nullptr, nullptr, nullptr, nonce.data()) == 1 &&
              (aad.empty() || EVP_DecryptUpdate(dec_, nullptr, &len, aad.data(), int(aad.size())) == 1) &&
              (in.empty() || EVP_DecryptUpdate(dec_, out.data(), &len, in.data(), int(in.size())) == 1) &&
              EVP_CIPHER_CTX_ctrl(dec_, EVP_CTRL_GCM_SET_TAG, int(kGcmTagLen), t.data()) == 1;
    if (!ok) return false;
    return EVP_DecryptFinal_ex(dec_, out.data() + in.size(), &len) == 1;
  }

 private:
  EVP_CIPHER_CTX* enc_;
  EVP_CIPHER_CTX* dec_;
};

}  // namespace cvmio
