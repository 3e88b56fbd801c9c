#include "rolemix/identity.hpp"

#include <algorithm>
#include <stdexcept>

namespace rolemix {

std::string Identity::canonical_name() const {
    if (category == IdentityCategory::profession) return name;
    return (polarity == Polarity::high ? "high-" : "low-") + name;
}

IdentityRegistry IdentityRegistry::default_registry() {
    return make({"agreeableness", "conscientiousness", "extraversion", "emotional-stability", "openness"},
                {"artist", "doctor", "programmer"});
}

IdentityRegistry IdentityRegistry::make(const std::vector<std::string>& traits,
                                        const std::vector<std::string>& professions) {
    IdentityRegistry r;
    r.categories_ = {IdentityCategory::personality, IdentityCategory::profession};
    r.traits_ = traits;
    r.professions_ = professions;
    int id = 0;
    for (const auto& trait : traits) {
        r.personalities_.push_back({IdentityCategory::personality, trait, Polarity::high, id++});
        r.personalities_.push_back({IdentityCategory::personality, trait, Polarity::low, id++});
    }
    id = 0;
    for (const auto& p : professions) {
        r.profession_identities_.push_back({IdentityCategory::profession, p, Polarity::none, id++});
    }
    // Uniqueness within category.
    auto check_unique = [](const std::vector<std::string>& names, const char* what) {
        std::vector<std::string> sorted = names;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw std::invalid_argument(std::string("registry: duplicate ") + what + " name");
        }
    };
    check_unique(traits, "trait");
    check_unique(professions, "profession");
    return r;
}

const std::vector<Identity>& IdentityRegistry::identities(IdentityCategory c) const {
    return c == IdentityCategory::personality ? personalities_ : profession_identities_;
}

const Identity* IdentityRegistry::find(std::string_view canonical) const {
    for (const auto& i : personalities_) {
        if (i.canonical_name() == canonical) return &i;
    }
    for (const auto& i : profession_identities_) {
        if (i.canonical_name() == canonical) return &i;
    }
    return nullptr;
}

const Identity& IdentityRegistry::resolve(std::string_view canonical) const {
    const Identity* found = find(canonical);
    if (!found) {
        throw std::invalid_argument("unknown identity \"" + std::string(canonical) +
                                    "\"; expected a registered name like \"high-openness\" or \"doctor\"");
    }
    return *found;
}

nlohmann::json IdentityRegistry::to_json() const {
    return nlohmann::json{{"traits", traits_}, {"professions", professions_}};
}

IdentityRegistry IdentityRegistry::from_json(const nlohmann::json& j) {
    return make(j.at("traits").get<std::vector<std::string>>(),
                j.at("professions").get<std::vector<std::string>>());
}

bool IdentityRegistry::operator==(const IdentityRegistry& other) const {
    return traits_ == other.traits_ && professions_ == other.professions_;
}

ActivationSet ActivationSet::from_names(const IdentityRegistry& registry, std::span<const std::string> names,
                                        bool allow_multi_profession) {
    ActivationSet set;
    set.personality_mask_.assign(registry.count(IdentityCategory::personality), 0);
    set.profession_mask_.assign(registry.count(IdentityCategory::profession), 0);

    std::vector<std::string> seen_traits;
    int professions = 0;
    for (const auto& name : names) {
        const Identity& ident = registry.resolve(name);
        if (ident.category == IdentityCategory::personality) {
            if (set.personality_mask_[ident.id]) continue;  // exact duplicate name
            if (std::find(seen_traits.begin(), seen_traits.end(), ident.name) != seen_traits.end()) {
                throw std::invalid_argument("exclusivity: both polarities of \"" + ident.name + "\" requested");
            }
            seen_traits.push_back(ident.name);
            set.personality_mask_[ident.id] = 1;
        } else {
            if (set.profession_mask_[ident.id]) continue;
            ++professions;
            if (professions > 1 && !allow_multi_profession) {
                throw std::invalid_argument(
                    "exclusivity: second profession \"" + ident.name +
                    "\" requested without the multi-profession override");
            }
            set.profession_mask_[ident.id] = 1;
        }
        set.active_.push_back(ident);
    }
    // Keep registry order regardless of input order.
    std::sort(set.active_.begin(), set.active_.end(), [](const Identity& a, const Identity& b) {
        if (a.category != b.category) return a.category == IdentityCategory::personality;
        return a.id < b.id;
    });
    return set;
}

ActivationSet ActivationSet::all_active(const IdentityRegistry& registry) {
    ActivationSet set;
    set.personality_mask_.assign(registry.count(IdentityCategory::personality), 1);
    set.profession_mask_.assign(registry.count(IdentityCategory::profession), 1);
    for (const auto& i : registry.identities(IdentityCategory::personality)) set.active_.push_back(i);
    for (const auto& i : registry.identities(IdentityCategory::profession)) set.active_.push_back(i);
    return set;
}

std::vector<std::string> ActivationSet::names() const {
    std::vector<std::string> out;
    out.reserve(active_.size());
    for (const auto& i : active_) out.push_back(i.canonical_name());
    return out;
}

const std::vector<uint8_t>& ActivationSet::mask(IdentityCategory c) const {
    return c == IdentityCategory::personality ? personality_mask_ : profession_mask_;
}

bool ActivationSet::category_empty(IdentityCategory c) const {
    const auto& m = mask(c);
    return std::none_of(m.begin(), m.end(), [](uint8_t v) { return v != 0; });
}

bool ActivationSet::contains(std::string_view canonical) const {
    return std::any_of(active_.begin(), active_.end(),
                       [&](const Identity& i) { return i.canonical_name() == canonical; });
}

std::string ActivationSet::signature() const {
    std::vector<std::string> n = names();
    std::sort(n.begin(), n.end());
    std::string out;
    for (size_t i = 0; i < n.size(); ++i) {
        if (i) out += '+';
        out += n[i];
    }
    return out;
}

std::vector<IdentityCategory> assign_categories(int block_count, const std::vector<IdentityCategory>& categories) {
    if (categories.empty()) throw std::invalid_argument("assign_categories: no categories");
    if (block_count < static_cast<int>(categories.size())) {
        throw std::invalid_argument("assign_categories: " + std::to_string(block_count) +
                                    " blocks cannot host " + std::to_string(categories.size()) +
                                    " categories at least once each");
    }
    std::vector<IdentityCategory> out(block_count);
    for (int j = 0; j < block_count; ++j) out[j] = categories[j % categories.size()];
    return out;
}

}  // namespace rolemix
