#pragma once

// End-to-end stages behind the command line tool. Every stage reads its
// inputs from the work directory and writes only its own artifacts there.
//
//   prepare      -> sequences.tsv catalog.tsv reviews.tsv prepare.json
//   embed        -> embeddings.tsv
//   train-index  -> model.ckpt loss_trace.tsv fused.tsv assignment_{P,N,O}-ID.tsv
//   gen-prompts  -> summaries.jsonl prompts.jsonl prompts_stats.json
//   rank         -> candidates.tsv rankings.jsonl
//   eval         -> metrics.txt metrics.jsonl
//   ablate-index -> rankings_{mode}.jsonl ablation.txt ablation.jsonl

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "semid/chat_summarizer.hpp"
#include "semid/common.hpp"
#include "semid/corpus.hpp"
#include "semid/embed.hpp"
#include "semid/eval.hpp"
#include "semid/fusion.hpp"
#include "semid/indexer.hpp"
#include "semid/prompts.hpp"
#include "semid/rank.hpp"
#include "semid/rqvae.hpp"

namespace semid {

namespace fs = std::filesystem;
using nlohmann::json;

struct PipelineConfig {
  struct Paths {
    fs::path reviews;
    fs::path metadata;
    fs::path workdir = "work";
  } paths;
  std::size_t kcore = 5;
  struct Embed {
    std::string provider = "hashing";  // hashing | precomputed
    std::size_t dim = 64;
    std::uint64_t seed = 0;
    fs::path precomputed;
    std::size_t max_reviews = 20;
  } embed;
  struct Rqvae {
    std::size_t codebook_size = 256;
    std::size_t levels = 4;
    std::size_t code_dim = 32;
    std::size_t hidden = 128;
    double beta = 0.25;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double momentum = 0.0;
    std::uint64_t seed = 0;
  } rqvae;
  IndexMode index_mode = IndexMode::PID;
  struct Prompts {
    std::map<TaskKind, double> proportions;  // empty = uniform
    std::size_t total = 600;
    std::uint64_t seed = 0;
    std::string summarizer = "extractive";  // extractive | chat
    ChatConfig chat;
  } prompts;
  struct Rank {
    std::string retriever = "cooc";  // cooc | file
    std::string scorer = "toy-overlap";
    std::size_t top_k = 20;
    fs::path candidates_file;
    fs::path logits_file;
    std::uint64_t seed = 0;
  } rank;
  std::vector<std::size_t> ks = {5, 10};

  // Reads the declarative config. "${VAR}" in any string is replaced from the
  // environment; relative paths resolve against `base_dir`.
  static PipelineConfig from_json(json j, const fs::path& base_dir = ".") {
    interpolate_env(j);
    PipelineConfig c;
    auto path = [&](const json& node, const char* key, fs::path& out) {
      if (node.contains(key)) {
        fs::path p = node.at(key).get<std::string>();
        out = p.empty() || p.is_absolute() ? p : base_dir / p;
      }
    };
    try {
      if (j.contains("paths")) {
        const auto& p = j["paths"];
        path(p, "reviews", c.paths.reviews);
        path(p, "metadata", c.paths.metadata);
        path(p, "workdir", c.paths.workdir);
      }
      if (j.contains("corpus")) c.kcore = j["corpus"].value("kcore", c.kcore);
      if (j.contains("embed")) {
        const auto& e = j["embed"];
        c.embed.provider = e.value("provider", c.embed.provider);
        c.embed.dim = e.value("dim", c.embed.dim);
        c.embed.seed = e.value("seed", c.embed.seed);
        c.embed.max_reviews = e.value("max_reviews", c.embed.max_reviews);
        path(e, "precomputed", c.embed.precomputed);
      }
      if (j.contains("rqvae")) {
        const auto& r = j["rqvae"];
        c.rqvae.codebook_size = r.value("K", c.rqvae.codebook_size);
        c.rqvae.levels = r.value("p", c.rqvae.levels);
        c.rqvae.code_dim = r.value("d_code", c.rqvae.code_dim);
        c.rqvae.hidden = r.value("hidden", c.rqvae.hidden);
        c.rqvae.beta = r.value("beta", c.rqvae.beta);
        c.rqvae.epochs = r.value("epochs", c.rqvae.epochs);
        c.rqvae.batch_size = r.value("batch_size", c.rqvae.batch_size);
        c.rqvae.lr = r.value("lr", c.rqvae.lr);
        c.rqvae.momentum = r.value("momentum", c.rqvae.momentum);
        c.rqvae.seed = r.value("seed", c.rqvae.seed);
      }
      if (j.contains("index")) {
        try {
          c.index_mode = parse_index_mode(j["index"].value("mode", std::string("P-ID")));
        } catch (const UsageError& e) {
          throw UsageError(std::string("config field index.mode: ") + e.what());
        }
      }
      if (j.contains("prompts")) {
        const auto& p = j["prompts"];
        if (p.contains("proportions") && p["proportions"].is_object())
          for (const auto& [k, v] : p["proportions"].items()) c.prompts.proportions[parse_task(k)] = v.get<double>();
        c.prompts.total = p.value("total", c.prompts.total);
        c.prompts.seed = p.value("seed", c.prompts.seed);
        c.prompts.summarizer = p.value("summarizer", c.prompts.summarizer);
        if (p.contains("chat")) {
          const auto& ch = p["chat"];
          c.prompts.chat.url = ch.value("url", c.prompts.chat.url);
          c.prompts.chat.model = ch.value("model", c.prompts.chat.model);
          c.prompts.chat.token_env = ch.value("token_env", c.prompts.chat.token_env);
        }
      }
      if (j.contains("rank")) {
        const auto& r = j["rank"];
        c.rank.retriever = r.value("retriever", c.rank.retriever);
        c.rank.scorer = r.value("scorer", c.rank.scorer);
        c.rank.top_k = r.value("top_k", c.rank.top_k);
        c.rank.seed = r.value("seed", c.rank.seed);
        path(r, "candidates_file", c.rank.candidates_file);
        path(r, "logits_file", c.rank.logits_file);
      }
      if (j.contains("eval")) c.ks = j["eval"].value("ks", c.ks);
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    return c;
  }

  static PipelineConfig load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw UsageError("cannot open config file " + file.string());
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw UsageError("config file " + file.string() + " is not valid JSON");
    return from_json(std::move(j), file.parent_path());
  }

  void override_seed(std::uint64_t seed) { embed.seed = rqvae.seed = prompts.seed = rank.seed = seed; }

  // Field-level range checks. File existence is checked by the stage that reads it.
  void validate() const {
    auto need = [](bool ok, const std::string& field, const std::string& why) {
      if (!ok) throw UsageError("config field " + field + ": " + why);
    };
    need(kcore >= 1, "corpus.kcore", "must be >= 1");
    need(embed.provider == "hashing" || embed.provider == "precomputed", "embed.provider",
         "must be 'hashing' or 'precomputed'");
    need(embed.dim >= 1, "embed.dim", "must be >= 1");
    need(embed.max_reviews >= 1, "embed.max_reviews", "must be >= 1");
    need(embed.provider != "precomputed" || !embed.precomputed.empty(), "embed.precomputed",
         "required for the precomputed provider");
    need(rqvae.codebook_size >= 1, "rqvae.K", "must be >= 1");
    need(rqvae.levels >= 1 && rqvae.levels <= SemanticId::kMaxLevels, "rqvae.p", "must be in [1, 26]");
    need(rqvae.code_dim >= 1, "rqvae.d_code", "must be >= 1");
    need(rqvae.hidden >= 1, "rqvae.hidden", "must be >= 1");
    need(rqvae.beta > 0.0, "rqvae.beta", "must be > 0");
    need(rqvae.batch_size >= 1, "rqvae.batch_size", "must be >= 1");
    need(rqvae.lr > 0.0, "rqvae.lr", "must be > 0");
    need(rqvae.momentum >= 0.0 && rqvae.momentum < 1.0, "rqvae.momentum", "must be in [0, 1)");
    need(prompts.summarizer == "extractive" || prompts.summarizer == "chat", "prompts.summarizer",
         "must be 'extractive' or 'chat'");
    if (!prompts.proportions.empty()) {
      double s = 0.0;
      for (const auto& [t, p] : prompts.proportions) {
        need(p >= 0.0, "prompts.proportions." + to_string(t), "must be >= 0");
        s += p;
      }
      need(std::abs(s - 1.0) <= 1e-9, "prompts.proportions", "must sum to 1");
    }
    need(rank.retriever == "cooc" || rank.retriever == "file", "rank.retriever", "must be 'cooc' or 'file'");
    need(rank.retriever != "file" || !rank.candidates_file.empty(), "rank.candidates_file",
         "required for the file retriever");
    static const std::set<std::string> scorers = {"toy-overlap", "random", "oracle", "adversarial", "uniform", "file"};
    need(scorers.contains(rank.scorer), "rank.scorer",
         "must be one of toy-overlap, random, oracle, adversarial, uniform, file");
    need(rank.scorer != "file" || !rank.logits_file.empty(), "rank.logits_file", "required for the file scorer");
    need(rank.top_k >= 1, "rank.top_k", "must be >= 1");
    need(!ks.empty(), "eval.ks", "must not be empty");
    for (auto k : ks) need(k >= 1, "eval.ks", "every cutoff must be >= 1");
  }

  json to_json() const {
    json props = json::object();
    for (const auto& [t, p] : prompts.proportions) props[to_string(t)] = p;
    return {{"paths", {{"reviews", paths.reviews.string()}, {"metadata", paths.metadata.string()}}},
            {"corpus", {{"kcore", kcore}}},
            {"embed",
             {{"provider", embed.provider},
              {"dim", embed.dim},
              {"seed", embed.seed},
              {"precomputed", embed.precomputed.string()},
              {"max_reviews", embed.max_reviews}}},
            {"rqvae",
             {{"K", rqvae.codebook_size},
              {"p", rqvae.levels},
              {"d_code", rqvae.code_dim},
              {"hidden", rqvae.hidden},
              {"beta", rqvae.beta},
              {"epochs", rqvae.epochs},
              {"batch_size", rqvae.batch_size},
              {"lr", rqvae.lr},
              {"momentum", rqvae.momentum},
              {"seed", rqvae.seed}}},
            {"index", {{"mode", semid::to_string(index_mode)}}},
            {"prompts",
             {{"proportions", props},
              {"total", prompts.total},
              {"seed", prompts.seed},
              {"summarizer", prompts.summarizer},
              {"chat", {{"url", prompts.chat.url}, {"model", prompts.chat.model}}}}},
            {"rank",
             {{"retriever", rank.retriever},
              {"scorer", rank.scorer},
              {"top_k", rank.top_k},
              {"seed", rank.seed},
              {"candidates_file", rank.candidates_file.string()},
              {"logits_file", rank.logits_file.string()}}},
            {"eval", {{"ks", ks}}}};
  }

 private:
  static void interpolate_env(json& j) {
    if (j.is_object() || j.is_array()) {
      for (auto& v : j) interpolate_env(v);
    } else if (j.is_string()) {
      static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
      const auto s = j.get<std::string>();
      std::string out;
      auto begin = std::sregex_iterator(s.begin(), s.end(), var);
      std::size_t last = 0;
      for (auto it = begin; it != std::sregex_iterator(); ++it) {
        out += s.substr(last, static_cast<std::size_t>(it->position()) - last);
        const char* val = std::getenv((*it)[1].str().c_str());
        if (val == nullptr) throw UsageError("config: environment variable " + (*it)[1].str() + " is not set");
        out += val;
        last = static_cast<std::size_t>(it->position() + it->length());
      }
      out += s.substr(last);
      j = out;
    }
  }
};

// Sequences, catalog and split as written by `prepare`.
struct PreparedData {
  std::vector<UserSequence> sequences;
  Catalog catalog;
  SplitSet split;

  const std::string& title(const std::string& item) const {
    auto it = catalog.find(item);
    if (it == catalog.end()) throw DataError("item '" + item + "' is missing from the catalog");
    return it->second;
  }
  std::vector<std::string> titles(std::span<const std::string> items) const {
    std::vector<std::string> out;
    for (const auto& i : items) out.push_back(title(i));
    return out;
  }
};

struct AblationRow {
  IndexMode mode;
  MetricsReport report;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::ostream& log = std::cerr, bool verbose = false)
      : cfg_(std::move(cfg)), log_(log), verbose_(verbose) {
    cfg_.validate();
    fs::create_directories(cfg_.paths.workdir);
  }

  const PipelineConfig& config() const { return cfg_; }
  fs::path artifact(const std::string& name) const { return cfg_.paths.workdir / name; }

  // --- prepare ---------------------------------------------------------------
  void prepare() {
    std::ifstream reviews(cfg_.paths.reviews), meta(cfg_.paths.metadata);
    if (!reviews) throw UsageError("config field paths.reviews: cannot open " + cfg_.paths.reviews.string());
    if (!meta) throw UsageError("config field paths.metadata: cannot open " + cfg_.paths.metadata.string());
    auto ing = ingest(reviews, meta);
    const auto raw = corpus_stats(ing.sequences);
    auto filtered = kcore_filter(std::move(ing.sequences), cfg_.kcore);
    const auto catalog = restrict_catalog(ing.catalog, filtered);
    const auto st = corpus_stats(filtered);
    const auto split = split_leave_one_out(filtered);
    if (ing.report.malformed_reviews + ing.report.malformed_metadata + ing.report.dropped_untitled > 0)
      log_ << "prepare: warning: " << ing.report.summary() << '\n';
    if (!split.excluded.empty())
      log_ << "prepare: warning: " << split.excluded.size() << " users too short for leave-one-out\n";

    write_file("sequences.tsv", [&](std::ostream& os) { write_sequences(os, filtered); });
    write_file("catalog.tsv", [&](std::ostream& os) { write_catalog(os, catalog); });
    write_file("reviews.tsv", [&](std::ostream& os) { write_reviews(os, filtered); });
    json stats{{"ingest",
                {{"review_lines", ing.report.review_lines},
                 {"malformed_reviews", ing.report.malformed_reviews},
                 {"metadata_lines", ing.report.metadata_lines},
                 {"malformed_metadata", ing.report.malformed_metadata},
                 {"untitled_items", ing.report.untitled_items},
                 {"dropped_untitled", ing.report.dropped_untitled}}},
               {"before_kcore", {{"users", raw.users}, {"items", raw.items}, {"interactions", raw.interactions}}},
               {"kcore", cfg_.kcore},
               {"after_kcore",
                {{"users", st.users},
                 {"items", st.items},
                 {"interactions", st.interactions},
                 {"avg_length", st.avg_length},
                 {"catalog", catalog.size()}}},
               {"split", {{"users", split.users.size()}, {"excluded", split.excluded.size()}}}};
    write_file("prepare.json", [&](std::ostream& os) { os << stats.dump(2) << '\n'; });
    log_ << "prepare: " << st.users << " users, " << st.items << " items, " << st.interactions
         << " interactions after " << cfg_.kcore << "-core\n";
  }

  PreparedData load_prepared() const {
    PreparedData d;
    {
      auto in = open("sequences.tsv", "prepare");
      d.sequences = read_sequences(in);
    }
    {
      auto in = open("reviews.tsv", "prepare");
      read_reviews(in, d.sequences);
    }
    {
      auto in = open("catalog.tsv", "prepare");
      d.catalog = read_catalog(in);
    }
    d.split = split_leave_one_out(d.sequences);
    return d;
  }

  // --- embed -----------------------------------------------------------------
  std::unique_ptr<EmbeddingProvider> make_provider() const {
    if (cfg_.embed.provider == "precomputed") {
      std::ifstream in(cfg_.embed.precomputed);
      if (!in) throw UsageError("config field embed.precomputed: cannot open " + cfg_.embed.precomputed.string());
      auto table = std::make_shared<EmbeddingTable>(EmbeddingTable::load(in));
      if (table->dimension() != cfg_.embed.dim)
        throw DataError("precomputed embeddings have D=" + std::to_string(table->dimension()) +
                        " but embed.dim is " + std::to_string(cfg_.embed.dim));
      return std::make_unique<PrecomputedProvider>(std::move(table));
    }
    return std::make_unique<HashingEmbedder>(cfg_.embed.dim, cfg_.embed.seed);
  }

  // Review texts used for fusion: the most recent training-split reviews.
  std::vector<std::pair<std::size_t, std::string>> fusion_reviews(const UserSplit& u) const {
    std::vector<std::pair<std::size_t, std::string>> out;
    for (std::size_t i = u.train.size(); i-- > 0 && out.size() < cfg_.embed.max_reviews;)
      if (!u.train[i].review_text.empty()) out.emplace_back(i, u.train[i].review_text);
    std::reverse(out.begin(), out.end());
    return out;
  }

  void embed() {
    const auto data = load_prepared();
    const auto provider = make_provider();
    EmbeddingTable table(provider->dimension());
    for (const auto& u : data.split.users) {
      table.insert("u:" + u.user_id, embed_text(*provider, u.user_id));
      for (const auto& [pos, text] : fusion_reviews(u))
        table.insert("r:" + u.user_id + ":" + std::to_string(pos), embed_text(*provider, text));
    }
    write_file("embeddings.tsv", [&](std::ostream& os) { table.save(os); });
    log_ << "embed: " << table.size() << " vectors (" << provider->name() << ", D=" << provider->dimension() << ")\n";
  }

  std::vector<UserReviews> load_user_reviews(const PreparedData& data) const {
    auto in = open("embeddings.tsv", "embed");
    const auto table = EmbeddingTable::load(in);
    std::vector<UserReviews> out;
    for (const auto& u : data.split.users) {
      UserReviews ur{u.user_id, {}, table.at("u:" + u.user_id)};
      for (const auto& [pos, text] : fusion_reviews(u))
        ur.reviews.push_back(table.at("r:" + u.user_id + ":" + std::to_string(pos)));
      if (ur.reviews.empty()) ur.reviews.push_back(Vec(table.dimension(), 0.0));  // no written reviews
      out.push_back(std::move(ur));
    }
    return out;
  }

  // --- train-index -----------------------------------------------------------
  void train_index() {
    const auto data = load_prepared();
    const auto users = load_user_reviews(data);
    if (users.empty()) throw DataError("train-index: no users");
    const auto dim = users.front().id_vec.size();

    RqvaeConfig mc;
    mc.input_dim = dim;
    mc.hidden_dim = cfg_.rqvae.hidden;
    mc.code_dim = cfg_.rqvae.code_dim;
    mc.codebook_size = cfg_.rqvae.codebook_size;
    mc.levels = cfg_.rqvae.levels;
    mc.beta = cfg_.rqvae.beta;
    mc.seed = cfg_.rqvae.seed;
    const auto capacity = index_capacity(mc.codebook_size, mc.levels);
    if (users.size() > capacity)
      throw DataError("capacity exceeded: " + std::to_string(users.size()) + " users but K^p = " +
                      std::to_string(capacity));

    auto model = make_model(mc);
    auto attention = init_attention(dim, cfg_.rqvae.seed);
    TrainConfig tc;
    tc.epochs = cfg_.rqvae.epochs;
    tc.batch_size = cfg_.rqvae.batch_size;
    tc.lr = cfg_.rqvae.lr;
    tc.momentum = cfg_.rqvae.momentum;
    tc.seed = cfg_.rqvae.seed;
    const auto result = train_joint(model, attention, users, tc);

    write_file("loss_trace.tsv", [&](std::ostream& os) {
      os << "epoch\trecon\trq\treseeded\n";
      for (const auto& e : result.trace)
        os << e.epoch << '\t' << format_double(e.mean_recon) << '\t' << format_double(e.mean_rq) << '\t'
           << e.reseeded << '\n';
    });
    if (result.diverged) throw DivergenceError("train-index: " + result.error);

    write_file("model.ckpt", [&](std::ostream& os) { save_checkpoint(os, model, &attention); });
    std::map<std::string, Vec> fused;
    EmbeddingTable fused_table(dim);
    for (const auto& u : users) {
      auto x = fuse(attention, u.reviews, u.id_vec);
      fused_table.insert(u.user_id, x);
      fused[u.user_id] = std::move(x);
    }
    write_file("fused.tsv", [&](std::ostream& os) { fused_table.save(os); });

    CollisionStats cs;
    const auto pid = assign_pid(model, fused, &cs);
    std::vector<std::string> ids;
    for (const auto& u : users) ids.push_back(u.user_id);
    write_file("assignment_P-ID.tsv", [&](std::ostream& os) { write_assignment(os, pid); });
    write_file("assignment_N-ID.tsv", [&](std::ostream& os) { write_assignment(os, assign_nid(ids)); });
    write_file("assignment_O-ID.tsv", [&](std::ostream& os) { write_assignment(os, assign_oid(ids)); });
    if (!result.trace.empty())
      log_ << "train-index: recon " << result.trace.front().mean_recon << " -> " << result.trace.back().mean_recon
           << ", " << cs.colliding_users << " collisions resolved\n";
  }

  IndexAssignment load_assignment(IndexMode mode) const {
    auto in = open("assignment_" + to_string(mode) + ".tsv", "train-index");
    return read_assignment(in);
  }

  // --- gen-prompts -----------------------------------------------------------
  std::unique_ptr<Summarizer> make_summarizer() const {
    if (cfg_.prompts.summarizer == "chat") {
      auto chat = cfg_.prompts.chat;
      chat.cache_dir = artifact("chat_cache");
      return std::make_unique<ChatSummarizer>(chat);
    }
    return std::make_unique<ExtractiveSummarizer>();
  }

  static std::vector<std::vector<std::string>> item_sequences(const SplitSet& split, bool with_valid) {
    std::vector<std::vector<std::string>> out;
    for (const auto& u : split.users) {
      std::vector<std::string> s;
      for (const auto& it : u.train) s.push_back(it.item_id);
      if (with_valid) s.push_back(u.valid.item_id);
      out.push_back(std::move(s));
    }
    return out;
  }

  std::vector<std::string> catalog_ids(const PreparedData& d) const {
    std::vector<std::string> ids;
    for (const auto& [id, t] : d.catalog) ids.push_back(id);
    return ids;
  }

  std::map<TaskKind, std::vector<PromptInstance>> build_task_instances(const PreparedData& data,
                                                                       const IndexAssignment& assignment,
                                                                       const std::map<std::string, std::string>& prefs,
                                                                       PromptBuilder& builder) const {
    CoocRetriever retriever(item_sequences(data.split, false), catalog_ids(data));
    std::map<TaskKind, std::vector<PromptInstance>> per_task;
    auto keep = [&](TaskKind t, std::optional<PromptInstance> p) {
      if (p) per_task[t].push_back(std::move(*p));
    };
    for (const auto& u : data.split.users) {
      const auto& rid = assignment.id_of(u.user_id);
      std::optional<std::string> summary;
      if (auto it = prefs.find(u.user_id); it != prefs.end()) summary = it->second;

      std::vector<std::string> items, titles;
      std::vector<RatedTitle> rated;
      for (const auto& it : u.train) {
        items.push_back(it.item_id);
        titles.push_back(data.title(it.item_id));
        rated.push_back({titles.back(), it.rating});
      }
      // one next-item / intent example per position of the training prefix
      for (std::size_t t = 1; t < items.size(); ++t) {
        const auto from = t > kMaxHistory ? t - kMaxHistory : 0;
        std::span<const std::string> hist(items.data() + from, t - from);
        const auto cands = retriever.retrieve(u.user_id, hist, cfg_.rank.top_k);
        std::optional<std::size_t> gt;
        for (std::size_t c = 0; c < cands.size(); ++c)
          if (cands[c] == items[t]) gt = c;
        const auto cand_titles = data.titles(cands);
        std::span<const std::string> hist_titles(titles.data() + from, t - from);
        keep(TaskKind::NextItem, builder.next_item(u.user_id, rid, hist_titles, cand_titles, gt));
        keep(TaskKind::IntentItem, builder.intent_item(u.user_id, summary, cand_titles, gt));
      }
      keep(TaskKind::IndexToPref, builder.index_to_pref(u.user_id, rid, summary));
      keep(TaskKind::PrefToIndex, builder.pref_to_index(u.user_id, rid, summary));
      keep(TaskKind::HistoryToIndex, builder.history_to_index(u.user_id, rid, titles));
      keep(TaskKind::RatingPred, builder.rating_pred(u.user_id, rid, summary, rated));
    }
    return per_task;
  }

  void gen_prompts() {
    const auto data = load_prepared();
    const auto assignment = load_assignment(cfg_.index_mode);

    std::map<std::string, std::string> prefs;
    const auto cache = artifact("summaries.jsonl");
    if (std::ifstream in(cache); in) prefs = read_summaries(in);
    const auto summarizer = make_summarizer();
    bool added = false;
    for (const auto& u : data.split.users) {
      if (prefs.contains(u.user_id)) continue;
      std::vector<std::string> texts;
      for (const auto& it : u.train) texts.push_back(it.review_text);
      prefs[u.user_id] = summarize_prefs(*summarizer, u.user_id, texts).text;
      added = true;
    }
    if (added) write_file("summaries.jsonl", [&](std::ostream& os) { write_summaries(os, prefs); });

    PromptBuilder builder;
    const auto per_task = build_task_instances(data, assignment, prefs, builder);
    MixtureConfig mc = cfg_.prompts.proportions.empty()
                           ? MixtureConfig::uniform(cfg_.prompts.total, cfg_.prompts.seed)
                           : MixtureConfig{cfg_.prompts.proportions, cfg_.prompts.total, cfg_.prompts.seed};
    const auto mixed = mix(per_task, mc);
    for (const auto& w : mixed.warnings) log_ << "gen-prompts: warning: " << w << '\n';
    write_file("prompts.jsonl", [&](std::ostream& os) { write_corpus(os, mixed.corpus); });

    json stats{{"template_version", std::string(kPromptTemplateVersion)}, {"index_mode", to_string(cfg_.index_mode)}};
    for (auto t : kAllTasks) {
      const auto avail = per_task.contains(t) ? per_task.at(t).size() : 0;
      const auto used = mixed.counts.contains(t) ? mixed.counts.at(t) : 0;
      stats["tasks"][to_string(t)] = {{"available", avail}, {"skipped", builder.skipped(t)}, {"mixed", used}};
    }
    stats["warnings"] = mixed.warnings;
    write_file("prompts_stats.json", [&](std::ostream& os) { os << stats.dump(2) << '\n'; });
    log_ << "gen-prompts: " << mixed.corpus.size() << " instances\n";
  }

  // --- rank ------------------------------------------------------------------
  std::unique_ptr<Scorer> make_scorer(const PreparedData& data, const std::string& name, std::uint64_t seed) const {
    std::map<std::string, std::string> truth;
    for (const auto& u : data.split.users) truth[u.user_id] = u.test.item_id;
    if (name == "toy-overlap") return std::make_unique<ToyOverlapScorer>();
    if (name == "random") return std::make_unique<RandomScorer>(seed);
    if (name == "oracle") return std::make_unique<OracleScorer>(truth);
    if (name == "adversarial") return std::make_unique<AdversarialScorer>(truth);
    if (name == "uniform") return std::make_unique<UniformScorer>();
    if (name == "file") {
      std::ifstream in(cfg_.rank.logits_file);
      if (!in) throw UsageError("config field rank.logits_file: cannot open " + cfg_.rank.logits_file.string());
      return std::make_unique<FileScorer>(read_logits(in));
    }
    throw UsageError("unknown scorer '" + name + "'");
  }

  // Test-time candidates: history is train + valid, ground truth is the test item.
  CandidateTable retrieve_candidates(const PreparedData& data) const {
    std::unique_ptr<Retriever> retriever;
    if (cfg_.rank.retriever == "file") {
      std::ifstream in(cfg_.rank.candidates_file);
      if (!in) throw UsageError("config field rank.candidates_file: cannot open " + cfg_.rank.candidates_file.string());
      retriever = std::make_unique<FileRetriever>(read_candidates(in));
    } else {
      retriever = std::make_unique<CoocRetriever>(item_sequences(data.split, true), catalog_ids(data));
    }
    CandidateTable table;
    for (const auto& u : data.split.users) {
      const auto hist = test_history(u);
      table[u.user_id] = retriever->retrieve(u.user_id, hist, cfg_.rank.top_k);
    }
    return table;
  }

  static std::vector<std::string> test_history(const UserSplit& u) {
    std::vector<std::string> hist;
    for (const auto& it : u.train) hist.push_back(it.item_id);
    hist.push_back(u.valid.item_id);
    return hist;
  }

  std::vector<RankingResult> rank_users(const PreparedData& data, const IndexAssignment& assignment,
                                        const CandidateTable& candidates, Scorer& scorer) const {
    std::vector<RankingResult> out;
    for (const auto& u : data.split.users) {
      auto hist = test_history(u);
      if (hist.size() > kMaxHistory) hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(kMaxHistory));
      RankQuery q;
      q.user_id = u.user_id;
      q.history_titles = data.titles(hist);
      q.candidate_ids = candidates.at(u.user_id);
      q.candidate_titles = data.titles(q.candidate_ids);
      q.prompt = PromptBuilder::next_item_question(assignment.id_of(u.user_id), q.history_titles,
                                                   q.candidate_titles);
      out.push_back(verbalize_rank(scorer, q, u.test.item_id));
    }
    return out;
  }

  void rank() {
    const auto data = load_prepared();
    const auto assignment = load_assignment(cfg_.index_mode);
    const auto candidates = retrieve_candidates(data);
    write_file("candidates.tsv", [&](std::ostream& os) { write_candidates(os, candidates); });
    auto scorer = make_scorer(data, cfg_.rank.scorer, cfg_.rank.seed);
    const auto results = rank_users(data, assignment, candidates, *scorer);
    write_file("rankings.jsonl", [&](std::ostream& os) { write_rankings(os, results); });
    log_ << "rank: " << results.size() << " users ranked with " << scorer->name() << '\n';
  }

  // --- eval ------------------------------------------------------------------
  MetricsReport evaluate(const std::vector<RankingResult>& results) const {
    auto report = aggregate(results, cfg_.ks);
    const auto issues = oracle_check(results, report);
    if (!issues.empty())
      throw DataError("eval: metric oracle disagrees on " + issues.front().scope + " " + issues.front().field);
    return report;
  }

  MetricsReport eval() {
    auto in = open("rankings.jsonl", "rank");
    const auto results = read_rankings(in);
    const auto report = evaluate(results);
    write_file("metrics.txt", [&](std::ostream& os) { os << format_report(report); });
    write_file("metrics.jsonl", [&](std::ostream& os) { write_report_jsonl(os, report); });
    return report;
  }

  MetricsReport all() {
    prepare();
    embed();
    train_index();
    gen_prompts();
    rank();
    return eval();
  }

  // --- ablate-index ----------------------------------------------------------
  std::vector<AblationRow> ablate_index() {
    const auto data = load_prepared();
    const auto candidates = retrieve_candidates(data);
    std::vector<AblationRow> rows;
    for (auto mode : {IndexMode::NID, IndexMode::OID, IndexMode::PID}) {
      const auto assignment = load_assignment(mode);
      if (!assignment.injective()) throw DataError("assignment " + to_string(mode) + " is not injective");
      auto scorer = make_scorer(data, cfg_.rank.scorer, cfg_.rank.seed);
      const auto results = rank_users(data, assignment, candidates, *scorer);
      write_file("rankings_" + to_string(mode) + ".jsonl", [&](std::ostream& os) { write_rankings(os, results); });
      rows.push_back({mode, evaluate(results)});
    }
    write_file("ablation.txt", [&](std::ostream& os) { os << format_ablation(rows); });
    write_file("ablation.jsonl", [&](std::ostream& os) {
      for (const auto& r : rows) {
        json j{{"mode", to_string(r.mode)}};
        for (const auto& m : r.report.rows) j[m.name] = {{"rank", m.rank_value}, {"overall", m.overall_value}};
        os << j.dump() << '\n';
      }
    });
    return rows;
  }

  static std::string format_ablation(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    if (rows.empty()) return "";
    os << std::left << std::setw(7) << "mode";
    for (const auto& m : rows.front().report.rows) os << std::right << std::setw(10) << (m.name + "/O");
    os << '\n';
    for (const auto& r : rows) {
      os << std::left << std::setw(7) << to_string(r.mode);
      for (const auto& m : r.report.rows)
        os << std::right << std::setw(10) << std::fixed << std::setprecision(4) << m.overall_value;
      os << '\n';
    }
    return os.str();
  }

  // --- manifest --------------------------------------------------------------
  json manifest(const std::string& command) const {
    json j{{"command", command},
           {"config_hash", hex64(fnv1a64(cfg_.to_json().dump()))},
           {"config", cfg_.to_json()},
           {"template_version", std::string(kPromptTemplateVersion)},
           {"seeds",
            {{"embed", cfg_.embed.seed},
             {"rqvae", cfg_.rqvae.seed},
             {"prompts", cfg_.prompts.seed},
             {"rank", cfg_.rank.seed}}}};
    json artifacts = json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg_.paths.workdir))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      artifacts[f.filename().string()] = hex64(fnv1a64(ss.str()));
    }
    j["artifacts"] = artifacts;
    return j;
  }

  void write_manifest(const std::string& command) {
    const auto m = manifest(command);
    write_file("manifest.json", [&](std::ostream& os) { os << m.dump(2) << '\n'; });
  }

 private:
  template <class F>
  void write_file(const std::string& name, F&& body) const {
    const auto path = artifact(name);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    body(os);
    if (verbose_) log_ << "wrote " << path.string() << '\n';
  }

  std::ifstream open(const std::string& name, const std::string& producer) const {
    const auto path = artifact(name);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing artifact " + path.string() + "; run `semid " + producer + "` first");
    return in;
  }

  PipelineConfig cfg_;
  std::ostream& log_;
  bool verbose_;
};

}  // namespace semid
