#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "semid/corpus.hpp"
#include "semid/synthetic.hpp"

using namespace semid;

namespace {

std::string review(const std::string& user, const std::string& item, long ts, double rating = 5.0,
                   const std::string& text = "ok") {
  return nlohmann::json{{"reviewerID", user}, {"asin", item}, {"unixReviewTime", ts}, {"overall", rating},
                        {"reviewText", text}}
      .dump();
}

std::string meta(const std::string& item, const std::string& title) {
  return nlohmann::json{{"asin", item}, {"title", title}}.dump();
}

IngestResult ingest_lines(const std::vector<std::string>& reviews, const std::vector<std::string>& metas) {
  std::stringstream r, m;
  for (const auto& l : reviews) r << l << '\n';
  for (const auto& l : metas) m << l << '\n';
  return ingest(r, m);
}

UserSequence seq(const std::string& user, const std::vector<std::string>& items) {
  UserSequence s{user, {}};
  long ts = 1;
  for (const auto& i : items) s.interactions.push_back({user, i, 4.0, ts++, ""});
  return s;
}

std::map<std::string, std::size_t> item_counts(const std::vector<UserSequence>& seqs) {
  std::map<std::string, std::size_t> c;
  for (const auto& s : seqs)
    for (const auto& it : s.interactions) ++c[it.item_id];
  return c;
}

}  // namespace

TEST(Ingest, SortsEachUserChronologically) {
  auto res = ingest_lines({review("u", "a", 30), review("u", "b", 10), review("u", "c", 20)},
                          {meta("a", "A"), meta("b", "B"), meta("c", "C")});
  ASSERT_EQ(res.sequences.size(), 1u);
  std::vector<long long> ts;
  for (const auto& it : res.sequences[0].interactions) ts.push_back(it.timestamp);
  EXPECT_EQ(ts, (std::vector<long long>{10, 20, 30}));
  EXPECT_EQ(res.sequences[0].interactions[0].item_id, "b");
}

TEST(Ingest, DropsItemsWithoutTitle) {
  auto res = ingest_lines({review("u", "a", 1), review("u", "x", 2)}, {meta("a", "A")});
  EXPECT_EQ(res.report.dropped_untitled, 1u);
  ASSERT_EQ(res.sequences.size(), 1u);
  EXPECT_EQ(res.sequences[0].size(), 1u);
}

TEST(Ingest, CountsMalformedLines) {
  auto res = ingest_lines({review("u", "a", 1), "{broken", "[]"}, {meta("a", "A"), "nope"});
  EXPECT_EQ(res.report.malformed_reviews, 2u);
  EXPECT_EQ(res.report.malformed_metadata, 1u);
  EXPECT_EQ(res.sequences.size(), 1u);
}

TEST(Ingest, NoSurvivingUsersIsFatal) {
  EXPECT_THROW(ingest_lines({review("u", "x", 1)}, {meta("a", "A")}), DataError);
}

TEST(Ingest, AcceptsCanonicalFieldNames) {
  auto r = nlohmann::json{{"user_id", "u"}, {"item_id", "a"}, {"timestamp", 5}, {"rating", 3}}.dump();
  auto res = ingest_lines({r}, {nlohmann::json{{"item_id", "a"}, {"title", "Alpha"}}.dump()});
  ASSERT_EQ(res.sequences.size(), 1u);
  EXPECT_EQ(res.sequences[0].interactions[0].rating, 3.0);
  EXPECT_EQ(res.catalog.at("a"), "Alpha");
}

TEST(Ingest, MiniCorpusCountsAreKnownByConstruction) {
  const auto mini = synthetic::mini_corpus();
  auto res = ingest_lines(mini.review_lines, mini.metadata_lines);
  EXPECT_EQ(res.sequences.size(), 200u);
  EXPECT_EQ(res.catalog.size(), 150u);
  EXPECT_EQ(res.report.malformed_reviews, 1u);
  EXPECT_EQ(res.report.dropped_untitled, 3u);
}

TEST(KCore, RemovesShortUsers) {
  std::vector<UserSequence> s = {seq("u1", {"a", "b", "c", "d"})};
  EXPECT_THROW(kcore_filter(s, 5), DataError);
}

TEST(KCore, EmptyResultNamesThreshold) {
  try {
    kcore_filter({seq("u1", {"a"})}, 5);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
  }
}

// k = 2. Pass 1 drops u3 (one interaction). That leaves item c with a single
// interaction, so pass 2 drops c, which in turn leaves u2 with one item; pass
// 3 drops u2, and item b falls to one interaction and goes in pass 4. Only u1
// survives with item a, which now has one interaction too: the result is empty.
// Adding a fourth user who also holds a and b keeps the chain alive.
TEST(KCore, CascadingRemovalMatchesHandSimulation) {
  std::vector<UserSequence> s = {seq("u1", {"a", "b"}), seq("u2", {"b", "c"}), seq("u3", {"c"})};
  EXPECT_THROW(kcore_filter(s, 2), DataError);

  s.push_back(seq("u4", {"a", "b"}));
  const auto out = kcore_filter(s, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].user_id, "u1");
  EXPECT_EQ(out[1].user_id, "u4");
  const auto counts = item_counts(out);
  EXPECT_EQ(counts.size(), 2u);
  EXPECT_EQ(counts.at("a"), 2u);
  EXPECT_EQ(counts.at("b"), 2u);
}

TEST(KCore, FixedPointIsUnchanged) {
  const auto mini = synthetic::mini_corpus();
  std::stringstream r, m;
  for (const auto& l : mini.review_lines) r << l << '\n';
  for (const auto& l : mini.metadata_lines) m << l << '\n';
  const auto seqs = ingest(r, m).sequences;
  const auto once = kcore_filter(seqs, 5);
  const auto twice = kcore_filter(once, 5);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].size(), twice[i].size());
}

TEST(KCore, RejectsZeroThreshold) { EXPECT_THROW(kcore_filter({seq("u", {"a"})}, 0), UsageError); }

TEST(Split, LeaveOneOut) {
  const auto split = split_leave_one_out({seq("u", {"i1", "i2", "i3", "i4", "i5"}), seq("v", {"i1", "i2"})});
  ASSERT_EQ(split.users.size(), 1u);
  const auto& u = split.users[0];
  ASSERT_EQ(u.train.size(), 3u);
  EXPECT_EQ(u.train[2].item_id, "i3");
  EXPECT_EQ(u.valid.item_id, "i4");
  EXPECT_EQ(u.test.item_id, "i5");
  EXPECT_EQ(split.excluded, std::vector<std::string>{"v"});
}

TEST(Serialization, SequencesRoundTrip) {
  std::vector<UserSequence> s = {seq("u1", {"a", "b:c", "d"})};
  s[0].interactions[1].rating = 0.0;  // absent
  s[0].interactions[0].review_text = "tab\there";
  std::stringstream ss, rs;
  write_sequences(ss, s);
  write_reviews(rs, s);
  auto back = read_sequences(ss);
  read_reviews(rs, back);
  ASSERT_EQ(back.size(), 1u);
  ASSERT_EQ(back[0].size(), 3u);
  EXPECT_EQ(back[0].interactions[1].item_id, "b:c");
  EXPECT_FALSE(back[0].interactions[1].has_rating());
  EXPECT_EQ(back[0].interactions[0].review_text, "tab here");
}
