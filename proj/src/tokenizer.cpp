#include "rolemix/tokenizer.hpp"

#include <stdexcept>

namespace rolemix {

std::vector<int> ByteTokenizer::tokenize(std::string_view text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char b : text) ids.push_back(static_cast<int>(b));
    return ids;
}

std::string ByteTokenizer::detokenize(std::span<const int> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= kVocabSize) {
            throw std::out_of_range("detokenize: unknown token id " + std::to_string(id));
        }
        if (id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

const char* ByteTokenizer::special_name(int id) {
    switch (id) {
        case kPad: return "<pad>";
        case kBos: return "<bos>";
        case kEos: return "<eos>";
        case kSpeakerA: return "<spk_a>";
        case kSpeakerB: return "<spk_b>";
        case kSystem: return "<sys>";
        default: return "";
    }
}

}  // namespace rolemix
