#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rolemix {

// Byte-level tokenizer: ids 0..255 are raw bytes, 256..261 are specials.
// Round-trips any UTF-8 string losslessly; specials are never produced from
// text and are stripped on decode.
class ByteTokenizer {
public:
    static constexpr int kPad = 256;
    static constexpr int kBos = 257;
    static constexpr int kEos = 258;
    static constexpr int kSpeakerA = 259;
    static constexpr int kSpeakerB = 260;
    static constexpr int kSystem = 261;
    static constexpr int kVocabSize = 262;

    std::vector<int> tokenize(std::string_view text) const;

    // Throws std::out_of_range on ids >= kVocabSize; special ids decode to
    // nothing (byte content only).
    std::string detokenize(std::span<const int> ids) const;

    static bool is_special(int id) { return id >= 256 && id < kVocabSize; }
    static const char* special_name(int id);
};

}  // namespace rolemix
