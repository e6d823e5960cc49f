#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ade/claims.hpp"

namespace ade {

/// Dense-id dictionary over (code type, code) pairs. Id 0 is the reserved
/// unknown bucket; everything rarer than min_count maps there.
class Vocabulary {
public:
    static constexpr int kUnknownId = 0;
    static constexpr const char* kUnknownKey = "<unk>";

    Vocabulary() { add_entry(kUnknownKey, 0); }

    int id_of(const ClaimCode& c) const { return id_of_key(code_key(c)); }

    int id_of_key(const std::string& key) const {
        auto it = index_.find(key);
        return it == index_.end() ? kUnknownId : it->second;
    }

    const std::string& key_of(int id) const { return keys_.at(static_cast<size_t>(id)); }
    uint64_t count_of(int id) const { return counts_.at(static_cast<size_t>(id)); }
    size_t size() const { return keys_.size(); }

    /// Appends a key with the next free id. Returns the id.
    int add_entry(std::string key, uint64_t count) {
        const int id = static_cast<int>(keys_.size());
        index_.emplace(key, id);
        keys_.push_back(std::move(key));
        counts_.push_back(count);
        return id;
    }

    void set_count(int id, uint64_t count) { counts_.at(static_cast<size_t>(id)) = count; }

private:
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> keys_;
    std::vector<uint64_t> counts_;
};

/// Ids are assigned by descending frequency, ties broken by key string.
inline Vocabulary build_vocabulary(const std::vector<ClaimHistory>& histories,
                                   uint64_t min_count = 1) {
    if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
    std::unordered_map<std::string, uint64_t> counts;
    for (const ClaimHistory& h : histories)
        for (const Encounter& e : h.encounters)
            for (const ClaimCode& c : e.codes) ++counts[code_key(c)];

    std::vector<std::pair<std::string, uint64_t>> kept;
    uint64_t dropped = 0;
    for (auto& [key, count] : counts) {
        if (count >= min_count)
            kept.emplace_back(key, count);
        else
            dropped += count;
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (auto& [key, count] : kept) vocab.add_entry(std::move(key), count);
    // Unknown-bucket count is the mass that fell below min_count.
    vocab.set_count(Vocabulary::kUnknownId, dropped);
    return vocab;
}

}  // namespace ade
