#pragma once

#include <stdexcept>
#include <string>

namespace qkdauth {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define QKDAUTH_ERROR(name)                   \
  class name : public Error {                 \
   public:                                    \
    explicit name(const std::string& what_arg) \
        : Error(#name ": " + what_arg) {}     \
  }

QKDAUTH_ERROR(InputTooLong);
QKDAUTH_ERROR(KeyTooShort);
QKDAUTH_ERROR(KeyExpired);
QKDAUTH_ERROR(NonceReuse);
QKDAUTH_ERROR(UnknownAlgorithm);
QKDAUTH_ERROR(DomainError);
QKDAUTH_ERROR(ConfigError);
QKDAUTH_ERROR(InsufficientKeyMaterial);
QKDAUTH_ERROR(LabelError);
QKDAUTH_ERROR(StateError);
QKDAUTH_ERROR(PoolExhausted);
QKDAUTH_ERROR(PlanError);
QKDAUTH_ERROR(ChannelClosed);
QKDAUTH_ERROR(FramingError);
QKDAUTH_ERROR(ScriptError);
QKDAUTH_ERROR(QueryError);
QKDAUTH_ERROR(MissingDependency);

#undef QKDAUTH_ERROR

}  // namespace qkdauth
