#pragma once

#include <memory>
#include <string>
#include <vector>

#include "odgen/core/rng.hpp"

namespace odgen {

// Maps any string to a fixed L x D embedding. Frozen during training, like
// the pretrained text encoders it stands in for.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual int rows() const = 0;  // L
    virtual int dim() const = 0;   // D
    // row-major L*D
    virtual std::vector<float> embed(const std::string& text) const = 0;
    virtual std::string name() const = 0;
};

// Token-hash embedding table: tokens are lowercased words, each hashed
// (mixed with its position) into a fixed table of learned-size rows. The
// empty string yields a deterministic null embedding used for padding.
class HashEmbedder : public TextEmbedder {
public:
    HashEmbedder(int rows, int dim, uint64_t seed, int vocab = 4096);

    int rows() const override { return rows_; }
    int dim() const override { return dim_; }
    std::vector<float> embed(const std::string& text) const override;
    std::string name() const override { return "hash-embedder"; }

    // table is model state; persisted with checkpoints
    const std::vector<float>& table() const { return table_; }
    void set_table(std::vector<float> table);
    int vocab() const { return vocab_; }

private:
    int rows_, dim_, vocab_;
    std::vector<float> table_;  // vocab x dim
};

std::vector<std::string> tokenize_lower(const std::string& text);

}  // namespace odgen
