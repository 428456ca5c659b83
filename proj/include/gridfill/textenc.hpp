#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridfill/tensor.hpp"

namespace gridfill {

constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kTextLen = 32;  // fixed prompt length K

// Tokenized prompt, padded/truncated to kTextLen.
struct TextPrompt {
    std::array<int, kTextLen> token_ids{};
    int length = 0;
    bool empty = true;
};

// Closed vocabulary over the prompt-template language. Ids are stable:
// they follow a fixed construction list.
class TextVocab {
  public:
    TextVocab();

    int id(const std::string &word) const;  // kUnkId when absent
    const std::string &word(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    void dump(const std::string &path) const;  // "word<TAB>id" per line

  private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
};

// Frozen lookup table standing in for a pretrained text encoder. Generated
// once from a fixed seed; training never touches it. The PAD row is zero.
class TextEmbeddingTable {
  public:
    TextEmbeddingTable(int vocab_size, int d_text, uint64_t seed = 0x7ab1e5eedull);

    int d_text() const { return d_text_; }
    int vocab_size() const { return vocab_size_; }
    const std::vector<float> &raw() const { return table_; }

    // [kTextLen x d_text] constant tensor under the active precision
    Tensor embed(const TextPrompt &prompt) const;

  private:
    int vocab_size_, d_text_;
    std::vector<float> table_;
};

// Shared frozen text stack (vocabulary + embedding table).
class TextEncoder {
  public:
    explicit TextEncoder(int d_text = 32);

    TextPrompt tokenize(const std::string &text) const;
    std::string detokenize(const TextPrompt &prompt) const;
    Tensor embed(const TextPrompt &prompt) const { return table_.embed(prompt); }

    const TextVocab &vocab() const { return vocab_; }
    const TextEmbeddingTable &table() const { return table_; }

  private:
    TextVocab vocab_;
    TextEmbeddingTable table_;
};

std::vector<std::string> split_words(const std::string &text);

}  // namespace gridfill
