#include "odgen/cond/embedder.hpp"

#include <cctype>
#include <cmath>

#include "odgen/core/error.hpp"

namespace odgen {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

std::vector<std::string> tokenize_lower(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

HashEmbedder::HashEmbedder(int rows, int dim, uint64_t seed, int vocab)
    : rows_(rows), dim_(dim), vocab_(vocab) {
    Rng rng(seed);
    table_.resize(static_cast<size_t>(vocab_) * dim_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (auto& v : table_) v = static_cast<float>(rng.gaussian() * scale);
}

void HashEmbedder::set_table(std::vector<float> table) {
    if (table.size() != static_cast<size_t>(vocab_) * dim_) {
        throw ShapeMismatchError("embedder table size mismatch");
    }
    table_ = std::move(table);
}

std::vector<float> HashEmbedder::embed(const std::string& text) const {
    const std::vector<std::string> tokens = tokenize_lower(text);
    std::vector<float> out(static_cast<size_t>(rows_) * dim_);
    for (int l = 0; l < rows_; ++l) {
        // position folded into the hash so token order matters; slots past the
        // last token fall back to a per-position null row
        const uint64_t th =
            l < static_cast<int>(tokens.size()) ? fnv1a(tokens[static_cast<size_t>(l)]) : 0;
        const uint64_t slot = mix(th ^ (0x9E3779B97F4A7C15ull * (static_cast<uint64_t>(l) + 1))) %
                              static_cast<uint64_t>(vocab_);
        const float* row = table_.data() + slot * dim_;
        std::copy(row, row + dim_, out.begin() + static_cast<size_t>(l) * dim_);
    }
    return out;
}

}  // namespace odgen
