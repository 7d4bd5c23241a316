#include "aot/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace aot {

using nlohmann::json;

namespace {

// Sentence-terminating delimiters, ASCII plus their full-width forms.
const std::vector<std::string> kDelims = {
    ".", "!", "?", ";",
    "\xE2\x80\xA6",  // horizontal ellipsis
    "\xE3\x80\x82",  // ideographic full stop
    "\xEF\xBC\x81",  // fullwidth exclamation
    "\xEF\xBC\x9F",  // fullwidth question
    "\xEF\xBC\x9B",  // fullwidth semicolon
};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

[[noreturn]] void record_error(std::size_t line, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<std::string> split_into_sentences(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(std::move(t));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < raw.size()) {
    bool matched = false;
    for (const auto& d : kDelims) {
      if (raw.compare(i, d.size(), d) == 0) {
        flush();
        i += d.size();
        matched = true;
        break;
      }
    }
    if (!matched) cur += raw[i++];
  }
  flush();
  return out;
}

std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> out;
  std::istringstream ss(sentence);
  std::string word;
  while (ss >> word) {
    std::size_t b = 0, e = word.size();
    auto punct = [&](std::size_t i) {
      return std::ispunct(static_cast<unsigned char>(word[i])) != 0;
    };
    while (b < e && punct(b)) ++b;
    while (e > b && punct(e - 1)) --e;
    if (b == e) continue;
    std::string tok = word.substr(b, e - b);
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(tok));
  }
  return out;
}

std::vector<Item> filter_items(const std::vector<Item>& items) {
  std::vector<Item> out;
  for (const auto& it : items) {
    if (it.gold_tags.size() >= 4 && it.reviews.size() >= 50) out.push_back(it);
  }
  return out;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<bos>");
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = to_id_.try_emplace(token, size());
  if (inserted) to_token_.push_back(token);
  return it->second;
}

int Vocabulary::id(const std::string& token) const {
  auto it = to_id_.find(token);
  return it == to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const { return to_token_.at(id); }

bool Vocabulary::contains(const std::string& token) const {
  return to_id_.count(token) > 0;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Vocabulary build_vocabulary(const std::vector<Item>& items, int cap) {
  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& it : items) {
    for (const auto& r : it.reviews)
      for (const auto& t : r.tokens) ++freq[t];
    for (const auto& tag : it.gold_tags)
      for (const auto& t : tag) ++freq[t];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= cap) break;
    v.add(tok);
  }
  return v;
}

int ExtendedVocab::ext_id(const std::string& tok) const {
  if (base->contains(tok)) return base->id(tok);
  auto it = oov_to_ext.find(tok);
  return it == oov_to_ext.end() ? Vocabulary::kUnk : it->second;
}

int ExtendedVocab::total_size() const {
  return base->size() + static_cast<int>(oov_tokens.size());
}

const std::string& ExtendedVocab::token(int id) const {
  if (id < base->size()) return base->token(id);
  return oov_tokens.at(id - base->size());
}

ExtendedVocab build_extended_vocab(const Vocabulary& vocab, const Item& item) {
  ExtendedVocab ev;
  ev.base = &vocab;
  for (const auto& r : item.reviews) {
    for (const auto& t : r.tokens) {
      if (vocab.contains(t) || ev.oov_to_ext.count(t)) continue;
      ev.oov_to_ext.emplace(t, ev.total_size());
      ev.oov_tokens.push_back(t);
    }
  }
  return ev;
}

std::vector<Item> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<Item> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      record_error(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) record_error(lineno, "record is not an object");
    for (const char* field : {"item_id", "reviews", "tags"}) {
      if (!rec.contains(field))
        record_error(lineno, std::string("missing field '") + field + "'");
    }
    Item item;
    if (!rec["item_id"].is_string())
      record_error(lineno, "field 'item_id' must be a string");
    item.item_id = rec["item_id"].get<std::string>();
    if (!rec["reviews"].is_array())
      record_error(lineno, "field 'reviews' must be an array");
    for (const auto& r : rec["reviews"]) {
      if (!r.is_object() || !r.contains("text") || !r.contains("salience"))
        record_error(lineno, "field 'reviews' entries need 'text' and 'salience'");
      if (!r["text"].is_string())
        record_error(lineno, "field 'text' must be a string");
      if (!r["salience"].is_number_integer())
        record_error(lineno, "field 'salience' must be 0 or 1");
      const int label = r["salience"].get<int>();
      if (label != 0 && label != 1)
        record_error(lineno, "field 'salience' must be 0 or 1");
      for (const auto& sentence : split_into_sentences(r["text"].get<std::string>())) {
        Review rev;
        rev.tokens = tokenize(sentence);
        if (rev.tokens.empty()) continue;
        rev.salience_label = label;
        rev.raw = sentence;
        item.reviews.push_back(std::move(rev));
      }
    }
    if (!rec["tags"].is_array())
      record_error(lineno, "field 'tags' must be an array");
    for (const auto& t : rec["tags"]) {
      if (!t.is_string()) record_error(lineno, "field 'tags' entries must be strings");
      auto toks = tokenize(t.get<std::string>());
      if (toks.empty()) record_error(lineno, "field 'tags' has an empty tag");
      item.gold_tags.push_back(std::move(toks));
    }
    items.push_back(std::move(item));
  }
  return items;
}

void save_dataset(const std::vector<Item>& items, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  for (const auto& item : items) {
    json rec;
    rec["item_id"] = item.item_id;
    json reviews = json::array();
    for (const auto& r : item.reviews)
      reviews.push_back({{"text", r.raw}, {"salience", r.salience_label}});
    rec["reviews"] = std::move(reviews);
    json tags = json::array();
    for (const auto& tag : item.gold_tags) tags.push_back(join(tag));
    rec["tags"] = std::move(tags);
    out << rec.dump() << '\n';
  }
}

bool tag_is_present(const Item& item, const std::vector<std::string>& tag) {
  if (tag.empty()) return false;
  for (const auto& r : item.reviews) {
    if (r.tokens.size() < tag.size()) continue;
    for (std::size_t i = 0; i + tag.size() <= r.tokens.size(); ++i) {
      if (std::equal(tag.begin(), tag.end(), r.tokens.begin() + i)) return true;
    }
  }
  return false;
}

namespace {

Aspect make_aspect(std::string noun, std::vector<std::string> visible,
                   std::vector<std::string> hidden) {
  return Aspect{std::move(noun), std::move(visible), std::move(hidden)};
}

// Hidden qualifiers are disjoint from every visible descriptor and template
// word, so tags built from them can never occur verbatim in a review.
const std::vector<Aspect>& builtin_pool() {
  static const std::vector<Aspect> pool = {
      make_aspect("service", {"quick", "friendly", "attentive", "slow", "polite"},
                  {"hospitable", "courteous", "unhurried", "gracious"}),
      make_aspect("delivery", {"fast", "late", "careful", "reliable", "prompt"},
                  {"expedited", "punctual", "dependable", "swift"}),
      make_aspect("packaging", {"sturdy", "neat", "flimsy", "compact", "sealed"},
                  {"robust", "immaculate", "secure", "presentable"}),
      make_aspect("battery", {"lasting", "weak", "solid", "strong", "steady"},
                  {"enduring", "longevous", "resilient", "durable"}),
      make_aspect("screen", {"bright", "sharp", "dim", "vivid", "clear"},
                  {"luminous", "crisp", "radiant", "brilliant"}),
      make_aspect("keyboard", {"clicky", "mushy", "quiet", "firm", "responsive"},
                  {"tactile", "snappy", "silent", "springy"}),
      make_aspect("flavor", {"rich", "bland", "spicy", "fresh", "sweet"},
                  {"savory", "aromatic", "piquant", "delectable"}),
      make_aspect("portion", {"generous", "small", "huge", "fair", "tiny"},
                  {"ample", "abundant", "bountiful", "meager"}),
      make_aspect("seating", {"comfy", "cramped", "roomy", "soft", "stiff"},
                  {"spacious", "plush", "ergonomic", "snug"}),
      make_aspect("lighting", {"warm", "harsh", "cozy", "dark", "gentle"},
                  {"ambient", "mellow", "subdued", "inviting"}),
      make_aspect("staff", {"helpful", "rude", "kind", "patient", "cheerful"},
                  {"accommodating", "amiable", "considerate", "personable"}),
      make_aspect("checkout", {"smooth", "slow", "simple", "confusing", "easy"},
                  {"seamless", "effortless", "streamlined", "frictionless"}),
      make_aspect("warranty", {"long", "short", "generous", "limited", "clear"},
                  {"comprehensive", "extensive", "ironclad", "inclusive"}),
      make_aspect("manual", {"detailed", "vague", "useful", "thin", "readable"},
                  {"thorough", "lucid", "exhaustive", "instructive"}),
      make_aspect("fabric", {"soft", "rough", "thick", "light", "smooth"},
                  {"supple", "velvety", "breathable", "luxurious"}),
      make_aspect("camera", {"sharp", "grainy", "fast", "blurry", "accurate"},
                  {"pristine", "stellar", "exceptional", "refined"}),
      make_aspect("speaker", {"loud", "tinny", "balanced", "muffled", "punchy"},
                  {"resonant", "sonorous", "immersive", "dynamic"}),
      make_aspect("charger", {"compact", "bulky", "fast", "warm", "handy"},
                  {"portable", "efficient", "versatile", "universal"}),
      make_aspect("interface", {"clean", "cluttered", "simple", "modern", "plain"},
                  {"intuitive", "elegant", "minimalist", "polished"}),
      make_aspect("parking", {"free", "tight", "close", "scarce", "easy"},
                  {"convenient", "plentiful", "adjacent", "accessible"}),
  };
  return pool;
}

const std::vector<std::string>& chatter_pool() {
  static const std::vector<std::string> pool = {
      "went there on a rainy tuesday with my cousin",
      "my neighbor recommended this place months ago",
      "arrived just before closing time that evening",
      "ordered the same thing as last month",
      "took the bus across town to get here",
      "bought it as a birthday gift for my brother",
      "watched a movie while waiting for the order",
      "the weather outside made the trip feel longer",
      "stopped by after work without any plan",
      "picked this mostly because of the price tag",
      "saw an advert for it during the game",
      "came back a second time out of habit",
  };
  return pool;
}

struct Template {
  const char* pattern;  // uses %d for descriptor and %n for noun
  bool adjacent;        // descriptor immediately precedes noun
};

const std::vector<Template>& template_pool() {
  static const std::vector<Template> pool = {
      {"the %n was %d", false},
      {"%d %n overall", true},
      {"really %d %n", true},
      {"the %n seemed %d to me", false},
      {"such %d %n honestly", true},
      {"%n felt %d every time", false},
      {"totally %d %n again", true},
      {"found the %n rather %d", false},
  };
  return pool;
}

std::string instantiate(const Template& t, const std::string& desc,
                        const std::string& noun) {
  std::string out;
  for (const char* p = t.pattern; *p; ++p) {
    if (*p == '%' && *(p + 1) == 'd') {
      out += desc;
      ++p;
    } else if (*p == '%' && *(p + 1) == 'n') {
      out += noun;
      ++p;
    } else {
      out += *p;
    }
  }
  return out;
}

// Strictly decreasing counts summing to total: a descending staircase plus a
// geometrically weighted share of the remainder.
std::vector<int> decreasing_counts(int total, int n, double ratio, Rng& rng) {
  std::vector<int> counts(n);
  int base = n * (n + 1) / 2;
  for (int j = 0; j < n; ++j) counts[j] = n - j;
  int rem = total - base;
  std::vector<double> w(n);
  double wsum = 0;
  for (int j = 0; j < n; ++j) {
    w[j] = std::pow(ratio, j);
    wsum += w[j];
  }
  int given = 0;
  std::vector<int> add(n);
  for (int j = 0; j < n; ++j) {
    add[j] = static_cast<int>(std::floor(rem * w[j] / wsum));
    given += add[j];
  }
  for (int j = 0; j < rem - given; ++j) ++add[j];  // leftovers go to top ranks
  for (int j = 0; j < n; ++j) counts[j] += add[j];
  (void)rng;
  return counts;
}

}  // namespace

const std::vector<Aspect>& default_aspect_pool() { return builtin_pool(); }

std::vector<Item> synthesize_corpus(const SynthSpec& spec) {
  const auto& pool = spec.aspects.empty() ? builtin_pool() : spec.aspects;
  if (spec.min_aspects < 1 || spec.max_aspects < spec.min_aspects)
    throw std::runtime_error("aspect count range is empty");
  if (static_cast<int>(pool.size()) < spec.max_aspects)
    throw std::runtime_error("aspect pool smaller than max_aspects");
  Rng root(spec.seed);
  const auto& templates = template_pool();
  const auto& chatter = chatter_pool();

  std::vector<Item> items;
  items.reserve(spec.n_items);
  for (int i = 0; i < spec.n_items; ++i) {
    Rng rng = root.child(static_cast<std::uint64_t>(i));
    Item item;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "item-%04d", i);
      item.item_id = buf;
    }
    const int n_aspects = rng.range(spec.min_aspects, spec.max_aspects);
    std::vector<int> order(pool.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    shuffle(order, rng);
    order.resize(n_aspects);

    int m_target = rng.range(spec.min_reviews, spec.max_reviews);
    const int min_aspect_total = n_aspects * (n_aspects + 1) / 2;
    if (m_target < min_aspect_total) m_target = min_aspect_total;
    int noise = static_cast<int>(std::llround(spec.noise_fraction * m_target));
    if (m_target - noise < min_aspect_total) noise = m_target - min_aspect_total;
    const int aspect_total = m_target - noise;

    const double ratio = rng.uniform(0.55, 0.8);
    const auto counts = decreasing_counts(aspect_total, n_aspects, ratio, rng);

    std::vector<bool> absent(n_aspects);
    bool any_absent = false;
    for (int j = 0; j < n_aspects; ++j) {
      absent[j] = rng.bernoulli(spec.absent_fraction);
      any_absent = any_absent || absent[j];
    }
    if (!any_absent) absent[n_aspects - 1] = true;

    for (int j = 0; j < n_aspects; ++j) {
      const Aspect& a = pool[order[j]];
      const std::string qualifier =
          absent[j] ? a.hidden[rng.index(a.hidden.size())]
                    : a.visible[rng.index(a.visible.size())];
      item.gold_tags.push_back({qualifier, a.noun});

      for (int c = 0; c < counts[j]; ++c) {
        std::string desc;
        const Template* t;
        if (!absent[j] && c == 0) {
          // Guarantee the present tag occurs verbatim in at least one review.
          do {
            t = &templates[rng.index(templates.size())];
          } while (!t->adjacent);
          desc = qualifier;
        } else {
          t = &templates[rng.index(templates.size())];
          desc = a.visible[rng.index(a.visible.size())];
        }
        Review r;
        r.raw = instantiate(*t, desc, a.noun);
        r.tokens = tokenize(r.raw);
        r.salience_label = 1;
        item.reviews.push_back(std::move(r));
      }
    }
    for (int c = 0; c < noise; ++c) {
      Review r;
      r.raw = chatter[rng.index(chatter.size())];
      r.tokens = tokenize(r.raw);
      r.salience_label = 0;
      item.reviews.push_back(std::move(r));
    }
    shuffle(item.reviews, rng);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace aot
