#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qkdauth {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_hex(ByteView b);
// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

Bytes concat(std::initializer_list<ByteView> parts);
void append(Bytes& out, ByteView in);
void put_u32be(Bytes& out, std::uint32_t v);
void put_u64be(Bytes& out, std::uint64_t v);
std::uint32_t get_u32be(ByteView in, std::size_t offset);
std::uint64_t get_u64be(ByteView in, std::size_t offset);
Bytes u64be(std::uint64_t v);

// Length check is not secret; the content comparison is constant time.
bool ct_equal(ByteView a, ByteView b);
void secure_wipe(Bytes& b);

// First 8 octets of SHA-256(b), hex encoded. Safe to print.
std::string fingerprint(ByteView b);

// Zeroizing octet string for key material. Prints as a length only.
class Secret {
 public:
  Secret() = default;
  explicit Secret(Bytes b) : bytes_(std::move(b)) {}
  Secret(const Secret& other) = default;
  Secret(Secret&& other) noexcept : bytes_(std::move(other.bytes_)) { other.bytes_.clear(); }
  Secret& operator=(const Secret& other);
  Secret& operator=(Secret&& other) noexcept;
  ~Secret() { wipe(); }

  ByteView view() const { return bytes_; }
  const Bytes& expose() const { return bytes_; }
  std::size_t size() const { return bytes_.size(); }
  bool empty() const { return bytes_.empty(); }
  void wipe() { secure_wipe(bytes_); }
  std::string fingerprint() const { return qkdauth::fingerprint(bytes_); }

  friend bool operator==(const Secret& a, const Secret& b) { return ct_equal(a.bytes_, b.bytes_); }
  friend std::ostream& operator<<(std::ostream& os, const Secret& s);

 private:
  Bytes bytes_;
};

}  // namespace qkdauth
