#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "qkdauth/primitives.hpp"

namespace qkdauth::primitives::detail {

inline constexpr std::size_t kMaxPrfInput = std::size_t{1} << 20;
inline constexpr std::string_view kPrfDomain = "qkdauth/dual-prf/v1";
inline constexpr std::string_view kKemConfirmDomain = "qkdauth/kem-confirm/v1";

void register_symmetric(std::vector<std::unique_ptr<Hash>>& hashes, std::vector<std::unique_ptr<Prf>>& prfs,
                        std::vector<std::unique_ptr<Mac>>& macs, std::vector<std::unique_ptr<Aead>>& aeads);
void register_pqc(std::vector<std::unique_ptr<Signature>>& sigs, std::vector<std::unique_ptr<Kem>>& kems);

}  // namespace qkdauth::primitives::detail
