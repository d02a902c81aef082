#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "semid/embed.hpp"
#include "semid/fusion.hpp"

using namespace semid;

TEST(Fnv, PublishedTestVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(fnv1a64("hair"), oracle::fnv1a("hair"));
}

TEST(Hashing, EmptyTextIsZero) {
  HashingEmbedder e(64);
  EXPECT_EQ(embed_text(e, ""), Vec(64, 0.0));
  EXPECT_EQ(embed_text(e, "  ,, "), Vec(64, 0.0));
}

TEST(Hashing, Deterministic) {
  HashingEmbedder e(64, 3);
  EXPECT_EQ(e.embed("hair dye"), e.embed("hair dye"));
  EXPECT_EQ(e.embed("Hair, DYE!"), e.embed("hair dye"));
}

// Rebuild each vector from raw FNV slots and compare the two cosines.
TEST(Hashing, SharedTokenRaisesCosine) {
  const std::size_t d = 64;
  auto reference = [&](const std::vector<std::string>& tokens) {
    oracle::V v(d, 0.0);
    for (const auto& t : tokens) {
      const auto h = oracle::fnv1a(t);
      v[h % d] += (h >> 63) ? -1.0 : 1.0;
    }
    return v;
  };
  const auto dye = reference({"hair", "dye"});
  const auto color = reference({"hair", "color"});
  const auto xbox = reference({"xbox", "controller"});
  const double near = oracle::cos(dye, color);
  const double far = oracle::cos(dye, xbox);
  ASSERT_GT(near, far);

  HashingEmbedder e(d, 0);
  EXPECT_NEAR(cosine(e.embed("hair dye"), e.embed("hair color")), near, 1e-12);
  EXPECT_NEAR(cosine(e.embed("hair dye"), e.embed("xbox controller")), far, 1e-12);
}

TEST(Hashing, SeedChangesBuckets) {
  HashingEmbedder a(64, 0), b(64, 1);
  EXPECT_NE(a.embed("hair dye shampoo"), b.embed("hair dye shampoo"));
}

TEST(Hashing, UnitNorm) {
  HashingEmbedder e(16);
  EXPECT_NEAR(squared_norm(e.embed("one two three four five six")), 1.0, 1e-12);
}

TEST(EmbeddingTable, LoadsThreeRows) {
  std::stringstream ss("D=2\na\t1,0\nb\t0,1\nc\t0.5,0.5\n");
  const auto t = EmbeddingTable::load(ss);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.at("c"), (Vec{0.5, 0.5}));
}

TEST(EmbeddingTable, WrongRowLengthIsFatal) {
  std::string row;
  for (int i = 0; i < 63; ++i) row += (i ? ",0" : "0");
  std::stringstream ss("D=64\nk\t" + row + "\n");
  EXPECT_THROW(EmbeddingTable::load(ss), DataError);
}

TEST(EmbeddingTable, MissingKeyIsNamed) {
  EmbeddingTable t(2);
  try {
    t.at("ghost");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(EmbeddingTable, RoundTripIsBitwise) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  EmbeddingTable t(8);
  for (int k = 0; k < 10; ++k) {
    Vec v(8);
    for (double& x : v) x = g(rng) * 1e-3;
    t.insert("key" + std::to_string(k), v);
  }
  std::stringstream ss;
  t.save(ss);
  const auto back = EmbeddingTable::load(ss);
  EXPECT_EQ(back.rows(), t.rows());
}

TEST(Precomputed, LooksUpByText) {
  auto t = std::make_shared<EmbeddingTable>(2);
  t->insert("hello world", {0.6, 0.8});
  PrecomputedProvider p(t);
  EXPECT_EQ(embed_text(p, "hello world"), (Vec{0.6, 0.8}));
  EXPECT_THROW(embed_text(p, "missing"), DataError);
}

// --- fusion ------------------------------------------------------------------

TEST(Attention, SingleReview) {
  auto a = init_attention(3, 1);
  const std::vector<Vec> r = {{1, 2, 3}};
  EXPECT_EQ(attention_weights(a, r, {1, 0, 0}), std::vector<double>{1.0});
  EXPECT_EQ(fuse(a, r, {1, 0, 0}), r[0]);
}

TEST(Attention, IdenticalReviewsSplitEvenly) {
  auto a = init_attention(3, 1);
  const std::vector<Vec> r = {{1, 2, 3}, {1, 2, 3}};
  const auto w = attention_weights(a, r, {0.3, 0.1, 0.2});
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
}

TEST(Attention, ZeroMatrixIsUniform) {
  AttentionParams a{Matrix(2, 2), 0};
  const std::vector<Vec> r = {{1, 0}, {0, 1}, {2, 2}, {-1, 3}};
  for (double w : attention_weights(a, r, {1, 1})) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Attention, OppositeReviewsCancel) {
  AttentionParams a{Matrix(2, 2), 0};
  const auto x = fuse(a, std::vector<Vec>{{1, -2}, {-1, 2}}, {1, 1});
  EXPECT_DOUBLE_EQ(x[0], 0.0);
  EXPECT_DOUBLE_EQ(x[1], 0.0);
}

TEST(Attention, EmptyReviewsRejected) {
  auto a = init_attention(2, 0);
  try {
    fuse(a, std::vector<Vec>{}, {1, 1});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "no reviews for user");
  }
}

TEST(Attention, WeightsSumToOneAndStayConvex) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 5;
    auto a = init_attention(d, static_cast<std::uint64_t>(trial), 0.5);
    std::vector<Vec> r(1 + trial % 6, Vec(d));
    double max_norm = 0.0;
    for (auto& v : r) {
      for (double& x : v) x = g(rng);
      max_norm = std::max(max_norm, std::sqrt(squared_norm(v)));
    }
    Vec o(d);
    for (double& x : o) x = g(rng);
    const auto w = attention_weights(a, r, o);
    double s = 0.0;
    for (double x : w) {
      EXPECT_GT(x, 0.0);
      EXPECT_LE(x, 1.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_LE(std::sqrt(squared_norm(fuse(a, r, o))), max_norm + 1e-12);
  }
}

TEST(Attention, MatchesStraightLineRecomputation) {
  auto a = init_attention(4, 9, 0.3);
  const std::vector<Vec> r = {{0.1, -0.4, 0.9, 0.2}, {0.7, 0.7, -0.1, 0.0}, {-0.3, 0.2, 0.5, 1.1}};
  const Vec o = {0.5, -0.5, 0.25, 1.0};
  const auto got = fuse(a, r, o);
  const auto want = oracle::fuse(a.weight, r, o);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got[j], want[j], 1e-14);
}

TEST(Attention, InitIsSeededNearIdentity) {
  const auto a = init_attention(6, 42), b = init_attention(6, 42);
  EXPECT_EQ(a.weight, b.weight);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(a.weight(r, c), r == c ? 1.0 : 0.0, 0.06);
}

TEST(AttentionGrad, SingleReviewIsZero) {
  auto a = init_attention(3, 2, 0.5);
  const auto g = fusion_grad(a, std::vector<Vec>{{1, 2, 3}}, {0.1, 0.2, 0.3}, Vec{1, -1, 2});
  for (double x : g.data) EXPECT_EQ(x, 0.0);
}

TEST(AttentionGrad, SymmetricStationaryPoint) {
  AttentionParams a{Matrix(2, 2), 0};
  const auto g = fusion_grad(a, std::vector<Vec>{{1, 2}, {1, 2}}, {1, 1}, Vec{3, -1});
  for (double x : g.data) EXPECT_EQ(x, 0.0);
}

TEST(AttentionGrad, MatchesCentralDifferences) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    auto a = init_attention(d, static_cast<std::uint64_t>(trial), 0.4);
    std::vector<Vec> r(3, Vec(d));
    for (auto& v : r)
      for (double& x : v) x = g(rng);
    Vec o(d), up(d);
    for (double& x : o) x = g(rng);
    for (double& x : up) x = g(rng);

    const auto analytic = fusion_grad(a, r, o, up);
    const double h = 1e-6;
    for (std::size_t i = 0; i < a.weight.data.size(); ++i) {
      auto plus = a.weight, minus = a.weight;
      plus.data[i] += h;
      minus.data[i] -= h;
      double fp = 0, fm = 0;
      const auto xp = oracle::fuse(plus, r, o), xm = oracle::fuse(minus, r, o);
      for (std::size_t j = 0; j < d; ++j) {
        fp += up[j] * xp[j];
        fm += up[j] * xm[j];
      }
      EXPECT_LT(oracle::relative_error(analytic.data[i], (fp - fm) / (2 * h)), 1e-4) << "entry " << i;
    }
  }
}
