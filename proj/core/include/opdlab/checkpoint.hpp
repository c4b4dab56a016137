#pragma once

#include <filesystem>
#include <string>

#include "opdlab/policy.hpp"

namespace opdlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned little-endian binary image of a policy; logits round-trip bit-exactly.
std::string encode_checkpoint(const Policy& policy);
Policy decode_checkpoint(std::string_view bytes);

/// JSON form of the same content (doubles printed in shortest round-trip form).
std::string checkpoint_to_json(const Policy& policy);
Policy checkpoint_from_json(std::string_view text);

/// Chooses JSON for a ".json" extension, binary otherwise.
void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
Policy load_checkpoint(const std::filesystem::path& path);

}  // namespace opdlab
