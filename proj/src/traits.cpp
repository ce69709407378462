#include "persona/traits.hpp"

#include <algorithm>
#include <cctype>

#include "persona/error.hpp"

namespace persona {

namespace {
constexpr std::array<std::string_view, kTraitCount> kNames = {"EXT", "NEU", "AGR", "CON", "OPN"};
}

std::string_view trait_name(Trait t) { return kNames[trait_index(t)]; }

std::optional<Trait> parse_trait(std::string_view name) {
  if (name.size() == 4 && (name[0] == 'c' || name[0] == 'C')) name.remove_prefix(1);
  if (name.size() != 3) return std::nullopt;
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (std::size_t i = 0; i < kTraitCount; ++i) {
    if (kNames[i] == upper) return static_cast<Trait>(i);
  }
  return std::nullopt;
}

Trait trait_from_string(std::string_view name) {
  if (auto t = parse_trait(name)) return *t;
  throw UsageError("unknown trait '" + std::string(name) + "' (valid: EXT, NEU, AGR, CON, OPN)");
}

}  // namespace persona
