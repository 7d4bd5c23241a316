#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "aot/rng.hpp"

namespace aot {

struct Review {
  std::vector<std::string> tokens;
  int salience_label = 0;  // 1 = item-related, 0 = noise
  std::string raw;
  bool operator==(const Review&) const = default;
};

struct Item {
  std::string item_id;
  std::vector<Review> reviews;                      // length M
  std::vector<std::vector<std::string>> gold_tags;  // ranked, length N
  bool operator==(const Item&) const = default;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;

  Vocabulary();

  int add(const std::string& token);       // returns existing id if present
  int id(const std::string& token) const;  // kUnk when missing
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(to_token_.size()); }
  std::vector<int> encode(const std::vector<std::string>& tokens) const;

 private:
  std::unordered_map<std::string, int> to_id_;
  std::vector<std::string> to_token_;
};

// Per-item id space on top of the base vocabulary. Out-of-vocabulary source
// words keep their surface identity here so the copy path can emit them even
// though the embedding path sees UNK.
struct ExtendedVocab {
  const Vocabulary* base = nullptr;
  std::vector<std::string> oov_tokens;  // ext id = base->size() + index
  std::unordered_map<std::string, int> oov_to_ext;

  int ext_id(const std::string& token) const;
  int total_size() const;
  const std::string& token(int id) const;
};

ExtendedVocab build_extended_vocab(const Vocabulary& vocab, const Item& item);

struct Aspect {
  std::string noun;
  std::vector<std::string> visible;  // descriptors that appear in reviews
  std::vector<std::string> hidden;   // tag qualifiers kept out of all reviews
};

struct SynthSpec {
  int n_items = 20;
  std::vector<Aspect> aspects;  // empty selects the built-in pool
  int min_aspects = 4;
  int max_aspects = 8;
  int min_reviews = 50;
  int max_reviews = 70;
  double noise_fraction = 0.2;
  double absent_fraction = 0.6;  // chance a gold tag uses a hidden qualifier
  std::uint64_t seed = 1;
};

std::vector<std::string> split_into_sentences(const std::string& raw);
std::vector<std::string> tokenize(const std::string& sentence);
std::vector<Item> filter_items(const std::vector<Item>& items);
Vocabulary build_vocabulary(const std::vector<Item>& items, int cap = 50000);

// Line-delimited records; each line holds item_id, reviews and ranked tags.
// Malformed input raises std::runtime_error naming the line and field.
std::vector<Item> load_dataset(const std::string& path);
void save_dataset(const std::vector<Item>& items, const std::string& path);

std::vector<Item> synthesize_corpus(const SynthSpec& spec);
const std::vector<Aspect>& default_aspect_pool();

// True when the tag occurs verbatim (contiguous token run) in some review.
bool tag_is_present(const Item& item, const std::vector<std::string>& tag);

}  // namespace aot
