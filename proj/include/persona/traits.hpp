#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace persona {

enum class Trait { kEXT = 0, kNEU, kAGR, kCON, kOPN };

inline constexpr std::size_t kTraitCount = 5;
inline constexpr std::array<Trait, kTraitCount> kAllTraits = {
    Trait::kEXT, Trait::kNEU, Trait::kAGR, Trait::kCON, Trait::kOPN};

std::string_view trait_name(Trait t);
// Accepts "EXT" or "cEXT", case-insensitive.
std::optional<Trait> parse_trait(std::string_view name);
// Like parse_trait but throws UsageError listing the valid names.
Trait trait_from_string(std::string_view name);

inline std::size_t trait_index(Trait t) { return static_cast<std::size_t>(t); }

}  // namespace persona
