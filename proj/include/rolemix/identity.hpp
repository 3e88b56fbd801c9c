#pragma once

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rolemix {

// Two identity categories. Identities within a category are mutually
// exclusive by default; identities from different categories combine.
enum class IdentityCategory { personality, profession };

constexpr int kCategoryCount = 2;

inline const char* to_string(IdentityCategory c) {
    return c == IdentityCategory::personality ? "personality" : "profession";
}

enum class Polarity { high, low, none };

struct Identity {
    IdentityCategory category = IdentityCategory::personality;
    std::string name;                   // trait ("agreeableness") or profession ("doctor")
    Polarity polarity = Polarity::none; // personalities always carry high/low
    int id = -1;                        // stable index within the category

    // "high-agreeableness" for personalities, "doctor" for professions.
    std::string canonical_name() const;
};

// Catalog of identities, fixed at model construction time: adapter bank and
// router shapes depend on the per-category counts.
class IdentityRegistry {
public:
    // Five traits x {high, low} plus {artist, doctor, programmer}.
    static IdentityRegistry default_registry();

    // Traits expand to high-/low- pairs in the order given.
    static IdentityRegistry make(const std::vector<std::string>& traits,
                                 const std::vector<std::string>& professions);

    const std::vector<IdentityCategory>& categories() const { return categories_; }
    const std::vector<Identity>& identities(IdentityCategory c) const;
    int count(IdentityCategory c) const { return static_cast<int>(identities(c).size()); }

    const Identity* find(std::string_view canonical) const;
    const Identity& resolve(std::string_view canonical) const;  // throws on unknown name

    const std::vector<std::string>& trait_names() const { return traits_; }
    const std::vector<std::string>& profession_names() const { return professions_; }

    nlohmann::json to_json() const;
    static IdentityRegistry from_json(const nlohmann::json& j);

    bool operator==(const IdentityRegistry& other) const;

private:
    std::vector<IdentityCategory> categories_;
    std::vector<std::string> traits_;
    std::vector<std::string> professions_;
    std::vector<Identity> personalities_;
    std::vector<Identity> profession_identities_;
};

// A validated set of active identities plus the per-category masks derived
// from it. At most one polarity per trait; one profession unless the
// multi-profession override is set.
class ActivationSet {
public:
    ActivationSet() = default;

    static ActivationSet from_names(const IdentityRegistry& registry, std::span<const std::string> names,
                                    bool allow_multi_profession = false);
    // Every identity active (soft gating only, no hard mask).
    static ActivationSet all_active(const IdentityRegistry& registry);

    const std::vector<Identity>& active() const { return active_; }
    std::vector<std::string> names() const;

    // Boolean mask over the category's identities, indexed by Identity::id.
    const std::vector<uint8_t>& mask(IdentityCategory c) const;
    // True when the category has no active identity (pass-through blocks).
    bool category_empty(IdentityCategory c) const;
    bool contains(std::string_view canonical) const;

    // Canonical order-independent key: active names sorted, joined with '+'.
    std::string signature() const;

private:
    std::vector<Identity> active_;
    std::vector<uint8_t> personality_mask_;
    std::vector<uint8_t> profession_mask_;
};

// Alternating category assignment: block j hosts categories[j mod n].
// Requires block_count >= categories.size() so every category is hosted.
std::vector<IdentityCategory> assign_categories(int block_count, const std::vector<IdentityCategory>& categories);

}  // namespace rolemix
