#pragma once

// Deterministic synthetic data: the bundled mini review corpus and clustered
// vectors for quantizer experiments.

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "semid/common.hpp"

namespace semid::synthetic {

struct MiniCorpus {
  std::vector<std::string> review_lines;    // JSON lines, Amazon field names
  std::vector<std::string> metadata_lines;  // JSON lines: asin, title
};

struct MiniCorpusShape {
  std::size_t users = 200;
  std::size_t categories = 10;
  std::size_t items_per_category = 15;
  std::uint64_t seed = 7;
};

namespace detail {

struct Category {
  const char* noun;
  std::array<const char*, 15> variants;
  const char* praise;
};

inline const std::array<Category, 10>& categories() {
  static const std::array<Category, 10> cats = {{
      {"hair dye",
       {"auburn", "copper", "ash", "golden", "burgundy", "chestnut", "platinum", "mahogany", "caramel", "espresso",
        "violet", "honey", "cherry", "mocha", "silver"},
       "the shade lasted through many washes"},
      {"nail polish",
       {"coral", "matte", "glitter", "nude", "crimson", "pastel", "neon", "chrome", "jelly", "lilac", "peach",
        "magenta", "teal", "frosted", "ruby"},
       "the lacquer dries fast without chipping"},
      {"face cream",
       {"hydrating", "retinol", "collagen", "peptide", "overnight", "firming", "brightening", "ceramide", "aloe",
        "vitamin", "squalane", "niacinamide", "soothing", "ginseng", "rosehip"},
       "my skin feels soft and moisturized"},
      {"lip balm",
       {"mint", "vanilla", "cocoa", "berry", "tinted", "unscented", "lanolin", "beeswax", "citrus", "shea",
        "pomegranate", "coconut", "lavender", "spf", "gloss"},
       "keeps my lips from cracking in winter"},
      {"shampoo",
       {"clarifying", "volumizing", "sulfate", "argan", "tea", "biotin", "keratin", "charcoal", "moisture", "dandruff",
        "rosemary", "oat", "repair", "curl", "balancing"},
       "leaves my scalp clean and the hair shiny"},
      {"eye shadow",
       {"smoky", "shimmer", "bronze", "plum", "taupe", "emerald", "champagne", "cobalt", "rose", "graphite", "sand",
        "copperglow", "amethyst", "sunset", "midnight"},
       "the pigment blends smoothly on the lids"},
      {"perfume",
       {"jasmine", "sandalwood", "amber", "oud", "musk", "vetiver", "bergamot", "tuberose", "patchouli", "neroli",
        "iris", "cedar", "fig", "saffron", "orchid"},
       "the fragrance lasts all day"},
      {"sunscreen",
       {"mineral", "zinc", "sport", "waterproof", "tinted", "sheer", "reef", "daily", "matte", "baby", "spray",
        "stick", "gel", "lotion", "broad"},
       "protects without leaving a white cast"},
      {"makeup brush",
       {"kabuki", "angled", "fan", "stippling", "blending", "contour", "flat", "tapered", "spoolie", "buffing",
        "detail", "powder", "foundation", "liner", "concealer"},
       "the bristles are soft and do not shed"},
      {"body lotion",
       {"cocoa", "almond", "oatmeal", "eucalyptus", "cucumber", "grapefruit", "jojoba", "hemp", "marula", "avocado",
        "lemongrass", "sage", "papaya", "olive", "apricot"},
       "absorbs quickly and smells fresh"},
  }};
  return cats;
}

inline std::string item_id(std::size_t index) {
  std::string digits = std::to_string(index + 1);
  return "B0MINI" + std::string(4 - std::min<std::size_t>(4, digits.size()), '0') + digits;
}

inline std::string user_id(std::size_t index) {
  std::string digits = std::to_string(index + 1);
  return "AMINIU" + std::string(4 - std::min<std::size_t>(4, digits.size()), '0') + digits;
}

}  // namespace detail

// Every user follows a walk of 7-10 consecutive items in a home category,
// with 1-3 items from a second category mixed in. Walk starts are spread
// evenly, so every item is visited by at least five users and the corpus is
// already a 5-core. Three extra reviews point at an untitled item and one
// line is not valid JSON.
inline MiniCorpus mini_corpus(const MiniCorpusShape& shape = {}) {
  const auto& cats = detail::categories();
  if (shape.categories > cats.size() || shape.items_per_category > 15)
    throw UsageError("mini corpus: shape exceeds the built-in vocabulary");
  std::mt19937_64 rng(shape.seed);
  MiniCorpus out;

  const std::size_t n_items = shape.categories * shape.items_per_category;
  for (std::size_t c = 0; c < shape.categories; ++c)
    for (std::size_t v = 0; v < shape.items_per_category; ++v) {
      const std::string title = std::string(cats[c].variants[v]) + " " + cats[c].noun;
      out.metadata_lines.push_back(
          nlohmann::json{{"asin", detail::item_id(c * shape.items_per_category + v)}, {"title", title}}.dump());
    }
  const std::string untitled = detail::item_id(n_items);
  out.metadata_lines.push_back(nlohmann::json{{"asin", untitled}, {"title", ""}}.dump());

  const std::size_t per_cat = (shape.users + shape.categories - 1) / shape.categories;
  std::vector<std::string> lines;
  for (std::size_t u = 0; u < shape.users; ++u) {
    const std::size_t home = u % shape.categories;
    const std::size_t other = (home + 1 + (u / shape.categories) % (shape.categories - 1)) % shape.categories;
    const std::size_t rank_in_cat = u / shape.categories;
    const std::size_t start = rank_in_cat * shape.items_per_category / per_cat;
    const std::size_t walk = 7 + rng() % 4;
    const std::size_t noise = 1 + rng() % 3;

    struct Pick {
      std::size_t item;
      bool home;
    };
    std::vector<Pick> seq;
    for (std::size_t s = 0; s < walk; ++s)
      seq.push_back({home * shape.items_per_category + (start + s) % shape.items_per_category, true});
    std::vector<std::size_t> other_items(shape.items_per_category);
    for (std::size_t v = 0; v < other_items.size(); ++v) other_items[v] = other * shape.items_per_category + v;
    std::shuffle(other_items.begin(), other_items.end(), rng);
    for (std::size_t k = 0; k < noise; ++k) {
      const auto pos = 1 + rng() % (seq.size() - 1);  // never first
      seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(pos), Pick{other_items[k], false});
    }

    const std::int64_t base = 1400000000 + static_cast<std::int64_t>(u) * 1000;
    for (std::size_t s = 0; s < seq.size(); ++s) {
      const auto cat = seq[s].item / shape.items_per_category;
      const auto var = seq[s].item % shape.items_per_category;
      const int rating = seq[s].home ? 4 + static_cast<int>(rng() % 2) : 1 + static_cast<int>(rng() % 3);
      std::string text = seq[s].home ? "I keep coming back to this " + std::string(cats[cat].variants[var]) + " " +
                                           cats[cat].noun + ", " + cats[cat].praise + "."
                                     : "Tried this " + std::string(cats[cat].noun) + " once, it was not for me.";
      lines.push_back(nlohmann::json{{"reviewerID", detail::user_id(u)},
                                     {"asin", detail::item_id(seq[s].item)},
                                     {"overall", static_cast<double>(rating)},
                                     {"unixReviewTime", base + static_cast<std::int64_t>(s) * 86400},
                                     {"reviewText", text}}
                          .dump());
    }
    if (u < 3)
      lines.push_back(nlohmann::json{{"reviewerID", detail::user_id(u)},
                                     {"asin", untitled},
                                     {"overall", 3.0},
                                     {"unixReviewTime", base + 5 * 86400 + 1},
                                     {"reviewText", "no title on this one"}}
                          .dump());
  }
  std::shuffle(lines.begin(), lines.end(), rng);
  lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(lines.size() / 2), "{this line is not json");
  out.review_lines = std::move(lines);
  return out;
}

// `n` points around `clusters` unit-norm centers with isotropic noise.
inline std::vector<Vec> gaussian_clusters(std::size_t n, std::size_t dim, std::size_t clusters, double spread,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec> centers(clusters, Vec(dim));
  for (auto& c : centers) {
    for (double& x : c) x = g(rng);
    const double norm = std::sqrt(squared_norm(c));
    for (double& x : c) x /= norm;
  }
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec p = centers[i % clusters];
    for (double& x : p) x += spread * g(rng);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace semid::synthetic
