#include "gridfill/textenc.hpp"

#include <cctype>
#include <fstream>

#include "gridfill/errors.hpp"
#include "gridfill/rng.hpp"

namespace gridfill {

namespace {

// Every word the prompt templates, task names, and class names can produce.
// Order is the id assignment and must stay stable.
const char *kVocabWords[] = {
    "<pad>", "<unk>",
    // template words
    "image", "segmentation", "colorization", "inversion", "outline", "identity", "threshold",
    "left", "input", "right", "black", "and", "white", "foreground", "background", "of", "a",
    "results", "colorized", "color", "inverted", "the", "shape", "identical", "copy",
    "brightness", "on",
    // shape colors
    "red", "green", "blue", "yellow", "cyan", "magenta", "orange", "purple", "gray",
    // shapes
    "circle", "square", "triangle",
    // natural class nouns kept for caption compatibility
    "horse", "cat", "dog", "bird", "car", "airplane",
};

}  // namespace

TextVocab::TextVocab() {
    for (const char *w : kVocabWords) {
        ids_.emplace(w, static_cast<int>(words_.size()));
        words_.emplace_back(w);
    }
}

int TextVocab::id(const std::string &word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string &TextVocab::word(int id) const {
    if (id < 0 || id >= size()) throw index_error("vocab id " + std::to_string(id) + " out of range");
    return words_[static_cast<size_t>(id)];
}

void TextVocab::dump(const std::string &path) const {
    std::ofstream f(path);
    if (!f) throw io_error("cannot open for writing: " + path);
    for (int i = 0; i < size(); i++) f << words_[static_cast<size_t>(i)] << "\t" << i << "\n";
}

std::vector<std::string> split_words(const std::string &text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

TextEmbeddingTable::TextEmbeddingTable(int vocab_size, int d_text, uint64_t seed)
    : vocab_size_(vocab_size), d_text_(d_text), table_(static_cast<size_t>(vocab_size) * d_text) {
    Rng rng(seed);
    for (auto &v : table_) v = static_cast<float>(rng.normal());
    // PAD embeds to zero and is masked out of cross-attention
    for (int j = 0; j < d_text_; j++) table_[static_cast<size_t>(kPadId) * d_text_ + j] = 0.0f;
}

Tensor TextEmbeddingTable::embed(const TextPrompt &prompt) const {
    Tensor out = Tensor::zeros({kTextLen, d_text_});
    for (int i = 0; i < kTextLen; i++) {
        int id = prompt.token_ids[static_cast<size_t>(i)];
        if (id < 0 || id >= vocab_size_)
            throw index_error("embed: token id " + std::to_string(id) + " out of range");
        for (int j = 0; j < d_text_; j++)
            out.set(static_cast<size_t>(i) * d_text_ + j, table_[static_cast<size_t>(id) * d_text_ + j]);
    }
    return out;
}

TextEncoder::TextEncoder(int d_text) : vocab_(), table_(vocab_.size(), d_text) {}

TextPrompt TextEncoder::tokenize(const std::string &text) const {
    TextPrompt p;
    p.token_ids.fill(kPadId);
    auto words = split_words(text);
    for (const auto &w : words) {
        if (p.length >= kTextLen) break;
        p.token_ids[static_cast<size_t>(p.length++)] = vocab_.id(w);
    }
    p.empty = (p.length == 0);
    return p;
}

std::string TextEncoder::detokenize(const TextPrompt &prompt) const {
    std::string out;
    for (int i = 0; i < prompt.length; i++) {
        if (i) out += " ";
        out += vocab_.word(prompt.token_ids[static_cast<size_t>(i)]);
    }
    return out;
}

}  // namespace gridfill
