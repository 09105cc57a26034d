#pragma once

#include <map>
#include <string>
#include <string_view>

#include "qkdauth/bytes.hpp"
#include "qkdauth/primitives.hpp"
#include "qkdauth/sessions.hpp"

namespace testing {

inline const std::map<std::string, std::string>& vectors() {
  static const std::map<std::string, std::string> v = {
#include "vectors.inc"
  };
  return v;
}

inline qkdauth::Bytes golden(const std::string& name) { return qkdauth::from_hex(vectors().at(name)); }

inline qkdauth::Bytes range_bytes(std::size_t n, std::uint8_t start = 0) {
  qkdauth::Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(start + i);
  return b;
}

inline qkdauth::sessions::MultistageConfig honest(std::string_view plan, std::uint64_t seed = 1) {
  qkdauth::sessions::MultistageConfig cfg;
  cfg.plan = qkdauth::sessions::parse_plan(plan);
  cfg.seed = seed;
  cfg.qkd.seed = seed;
  cfg.clock = std::make_shared<qkdauth::primitives::ManualClock>();
  return cfg;
}

}  // namespace testing
