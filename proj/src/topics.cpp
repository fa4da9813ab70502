#include "avsd/topics.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace avsd::topics {

const char* category_name(DocCategory c) {
  switch (c) {
    case DocCategory::question: return "question";
    case DocCategory::answer: return "answer";
    case DocCategory::qa_pair: return "qa_pair";
    case DocCategory::caption: return "caption";
    case DocCategory::history: return "history";
    case DocCategory::history_caption: return "history_caption";
  }
  return "?";
}

std::optional<DocCategory> category_from_name(const std::string& name) {
  for (int i = 0; i < kNumCategories; ++i) {
    auto c = static_cast<DocCategory>(i);
    if (name == category_name(c)) return c;
  }
  return std::nullopt;
}

std::vector<DocumentView> build_document_views(const std::vector<corpus::Dialog>& dialogs,
                                               DocCategory category) {
  std::vector<DocumentView> views;
  for (const auto& d : dialogs) {
    if (category == DocCategory::caption) {
      views.push_back({category, d.caption.tokens, d.video_id, -1});
      continue;
    }
    std::vector<std::string> running_history;
    for (const auto& turn : d.turns) {
      DocumentView v;
      v.category = category;
      v.dialog_id = d.video_id;
      v.turn_index = turn.turn_index;
      switch (category) {
        case DocCategory::question:
          v.tokens = turn.question.tokens;
          break;
        case DocCategory::answer:
          v.tokens = turn.answer.tokens;
          break;
        case DocCategory::qa_pair:
          v.tokens = turn.question.tokens;
          v.tokens.insert(v.tokens.end(), turn.answer.tokens.begin(), turn.answer.tokens.end());
          break;
        case DocCategory::history:
          v.tokens = running_history;
          break;
        case DocCategory::history_caption:
          v.tokens = d.caption.tokens;
          v.tokens.insert(v.tokens.end(), running_history.begin(), running_history.end());
          break;
        case DocCategory::caption:
          break;
      }
      // turn-0 history is empty: excluded from training docs
      if (category != DocCategory::history || !v.tokens.empty()) views.push_back(std::move(v));
      running_history.insert(running_history.end(), turn.question.tokens.begin(),
                             turn.question.tokens.end());
      running_history.insert(running_history.end(), turn.answer.tokens.begin(),
                             turn.answer.tokens.end());
    }
  }
  return views;
}

SeedLexicon SeedLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open seed lexicon: " + path);
  nlohmann::json j;
  in >> j;
  if (!j.contains("topics") || !j["topics"].is_array())
    throw std::runtime_error(path + ": seed lexicon needs a \"topics\" array");
  SeedLexicon lex;
  std::set<std::string> names;
  for (const auto& t : j["topics"]) {
    Topic topic;
    topic.name = t.at("name").get<std::string>();
    if (!names.insert(topic.name).second)
      throw std::runtime_error(path + ": duplicate topic name \"" + topic.name + "\"");
    for (const auto& s : t.at("seeds")) topic.seeds.insert(s.get<std::string>());
    if (topic.seeds.empty())
      throw std::runtime_error(path + ": topic \"" + topic.name + "\" has no seed words");
    lex.topics.push_back(std::move(topic));
  }
  return lex;
}

void SeedLexicon::save(const std::string& path) const {
  nlohmann::json j;
  j["topics"] = nlohmann::json::array();
  for (const auto& t : topics) j["topics"].push_back({{"name", t.name}, {"seeds", t.seeds}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write seed lexicon: " + path);
  out << j.dump(2) << "\n";
}

std::vector<double> LdaConfig::resolved_alpha() const {
  if (!alpha.empty()) {
    if (static_cast<int>(alpha.size()) != K)
      throw std::invalid_argument("alpha vector length must equal K");
    return alpha;
  }
  return std::vector<double>(static_cast<std::size_t>(K), 0.1);
}

void TopicModelState::check_invariants(const std::vector<std::vector<int>>& docs) const {
  for (std::size_t d = 0; d < docs.size(); ++d) {
    long sum = 0;
    for (int k = 0; k < K; ++k) sum += doc_topic_counts[d][static_cast<std::size_t>(k)];
    if (sum != static_cast<long>(docs[d].size()))
      throw std::logic_error("doc_topic_counts row sum mismatch");
  }
  for (int k = 0; k < K; ++k) {
    long sum = 0;
    for (int w = 0; w < vocab_size; ++w)
      sum += topic_word_counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(w)];
    if (sum != topic_totals[static_cast<std::size_t>(k)])
      throw std::logic_error("topic_word_counts/topic_totals mismatch");
  }
}

TopicModelState init_assignments(const std::vector<std::vector<int>>& docs, int V,
                                 const LdaConfig& cfg, const SeedTopicsByWord* seed_topics,
                                 Rng& rng) {
  if (cfg.K < 2) throw std::invalid_argument("topic count K must be >= 2");
  TopicModelState st;
  st.K = cfg.K;
  st.alpha = cfg.resolved_alpha();
  st.beta = cfg.beta;
  st.seed_confidence = seed_topics ? cfg.seed_confidence : 0.0;
  st.vocab_size = V;
  st.rng_seed = cfg.rng_seed;
  st.doc_topic_counts.assign(docs.size(), std::vector<int>(static_cast<std::size_t>(cfg.K), 0));
  st.topic_word_counts.assign(static_cast<std::size_t>(cfg.K),
                              std::vector<int>(static_cast<std::size_t>(V), 0));
  st.topic_totals.assign(static_cast<std::size_t>(cfg.K), 0);
  st.assignments.resize(docs.size());

  for (std::size_t d = 0; d < docs.size(); ++d) {
    st.assignments[d].reserve(docs[d].size());
    for (int w : docs[d]) {
      if (w < 0 || w >= V) throw std::invalid_argument("token id out of vocab range");
      int topic = -1;
      if (seed_topics && cfg.seed_confidence > 0.0) {
        const auto& owners = (*seed_topics)[static_cast<std::size_t>(w)];
        if (!owners.empty() && rng.uniform() < cfg.seed_confidence) {
          topic = owners.size() == 1
                      ? owners[0]
                      : owners[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(owners.size())))];
        }
      }
      if (topic < 0) topic = rng.uniform_int(cfg.K);
      st.assignments[d].push_back(topic);
      ++st.doc_topic_counts[d][static_cast<std::size_t>(topic)];
      ++st.topic_word_counts[static_cast<std::size_t>(topic)][static_cast<std::size_t>(w)];
      ++st.topic_totals[static_cast<std::size_t>(topic)];
    }
  }
  return st;
}

namespace {

int sample_discrete(const std::vector<double>& weights, double total, Rng& rng) {
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;  // u == total under roundoff
}

}  // namespace

void gibbs_sweep(TopicModelState& st, const std::vector<std::vector<int>>& docs, Rng& rng) {
  const int K = st.K;
  const double vbeta = st.beta * static_cast<double>(st.vocab_size);
  std::vector<double> weights(static_cast<std::size_t>(K));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    auto& dt = st.doc_topic_counts[d];
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      const int w = docs[d][i];
      const int old_topic = st.assignments[d][i];
      --dt[static_cast<std::size_t>(old_topic)];
      --st.topic_word_counts[static_cast<std::size_t>(old_topic)][static_cast<std::size_t>(w)];
      --st.topic_totals[static_cast<std::size_t>(old_topic)];

      double total = 0.0;
      for (int k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const double wgt =
            (dt[ks] + st.alpha[ks]) *
            (st.topic_word_counts[ks][static_cast<std::size_t>(w)] + st.beta) /
            (static_cast<double>(st.topic_totals[ks]) + vbeta);
        weights[ks] = wgt;
        total += wgt;
      }
      const int new_topic = sample_discrete(weights, total, rng);

      st.assignments[d][i] = new_topic;
      ++dt[static_cast<std::size_t>(new_topic)];
      ++st.topic_word_counts[static_cast<std::size_t>(new_topic)][static_cast<std::size_t>(w)];
      ++st.topic_totals[static_cast<std::size_t>(new_topic)];
    }
  }
}

TopicModelState train_lda(const std::vector<std::vector<int>>& docs, int V, const LdaConfig& cfg,
                          const SeedTopicsByWord* seed_topics) {
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  Rng rng(cfg.rng_seed);
  TopicModelState st = init_assignments(docs, V, cfg, seed_topics, rng);
  for (int it = 0; it < cfg.iterations; ++it) gibbs_sweep(st, docs, rng);
  return st;
}

TopicDistribution infer_topics(const TopicModelState& st, const std::vector<int>& doc,
                               int fold_in_iterations, std::uint64_t rng_seed) {
  const int K = st.K;
  TopicDistribution dist;
  dist.probs.assign(static_cast<std::size_t>(K), 0.0);

  double alpha_sum = 0.0;
  for (double a : st.alpha) alpha_sum += a;

  if (doc.empty()) {
    for (auto& p : dist.probs) p = 1.0 / static_cast<double>(K);
    return dist;
  }

  Rng rng(rng_seed);
  const double vbeta = st.beta * static_cast<double>(st.vocab_size);
  std::vector<int> local_counts(static_cast<std::size_t>(K), 0);
  std::vector<int> z(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    z[i] = rng.uniform_int(K);
    ++local_counts[static_cast<std::size_t>(z[i])];
  }
  std::vector<double> weights(static_cast<std::size_t>(K));
  for (int it = 0; it < fold_in_iterations; ++it) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const int w = doc[i];
      --local_counts[static_cast<std::size_t>(z[i])];
      double total = 0.0;
      for (int k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        // topic_word counts frozen: fold-in never mutates the trained model
        const double wgt =
            (local_counts[ks] + st.alpha[ks]) *
            (st.topic_word_counts[ks][static_cast<std::size_t>(w)] + st.beta) /
            (static_cast<double>(st.topic_totals[ks]) + vbeta);
        weights[ks] = wgt;
        total += wgt;
      }
      z[i] = sample_discrete(weights, total, rng);
      ++local_counts[static_cast<std::size_t>(z[i])];
    }
  }

  const double denom = static_cast<double>(doc.size()) + alpha_sum;
  for (int k = 0; k < K; ++k)
    dist.probs[static_cast<std::size_t>(k)] =
        (local_counts[static_cast<std::size_t>(k)] + st.alpha[static_cast<std::size_t>(k)]) / denom;
  return dist;
}

std::vector<std::pair<int, double>> top_k_topics(const TopicDistribution& dist, int k) {
  const int K = dist.K();
  if (k < 1 || k > K) throw std::invalid_argument("top_k_topics: k must be in [1, K]");
  std::vector<std::pair<int, double>> order;
  order.reserve(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) order.emplace_back(i, dist.probs[static_cast<std::size_t>(i)]);
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

// ---------------------------------------------------------------------------

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "the",  "is",  "are",  "was", "were", "be",   "been", "being",
      "do",   "does", "did",  "to",  "of",   "in",  "on",   "at",   "and",  "or",
      "it",   "he",   "she",  "his", "her",  "its", "they", "them", "their", "there",
      "i",    "you",  "we",   "me",  "my",   "your", "our",  "him", "this", "that",
      "these", "those", "what", "who", "how", "can", "could", "with", "for",  "not",
      "no",   "yes",  "any",  "some", "then", "so",  "if",   "but",  "from", "into",
      ".",    ",",    "?",    "!",   "'",    ";",   ":",    "\""};
  return words;
}

TopicVocab TopicVocab::build(const std::vector<DocumentView>& docs,
                             const std::set<std::string>& stopwords, const SeedLexicon* lexicon) {
  std::set<std::string> seeds;
  if (lexicon)
    for (const auto& t : lexicon->topics) seeds.insert(t.seeds.begin(), t.seeds.end());
  std::set<std::string> kept;
  for (const auto& d : docs)
    for (const auto& tok : d.tokens)
      if (!stopwords.count(tok) || seeds.count(tok)) kept.insert(tok);
  TopicVocab v;
  for (const auto& tok : kept) {
    v.index_[tok] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

TopicVocab TopicVocab::from_tokens(std::vector<std::string> tokens) {
  TopicVocab v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i)
    v.index_[v.tokens_[i]] = static_cast<int>(i);
  return v;
}

int TopicVocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> TopicVocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) {
    const int id = this->id(tok);
    if (id >= 0) ids.push_back(id);
  }
  return ids;
}

TopicDistribution TopicModel::infer(const std::vector<std::string>& tokens,
                                    std::uint64_t rng_seed) const {
  return infer_topics(state, vocab.encode(tokens), fold_in_iterations, rng_seed);
}

namespace {
constexpr int kTopicModelFormatVersion = 1;
}

void TopicModel::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "avsd-topic-model";
  j["version"] = kTopicModelFormatVersion;
  j["category"] = category_name(category);
  j["fold_in_iterations"] = fold_in_iterations;
  j["topic_names"] = topic_names;
  j["vocab"] = vocab.tokens();
  j["K"] = state.K;
  j["alpha"] = state.alpha;
  j["beta"] = state.beta;
  j["seed_confidence"] = state.seed_confidence;
  j["vocab_size"] = state.vocab_size;
  j["rng_seed"] = state.rng_seed;
  j["doc_topic_counts"] = state.doc_topic_counts;
  j["topic_word_counts"] = state.topic_word_counts;
  j["topic_totals"] = state.topic_totals;
  j["assignments"] = state.assignments;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write topic model: " + path);
  out << j.dump() << "\n";
}

TopicModel TopicModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topic model: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "avsd-topic-model")
    throw std::runtime_error(path + ": not a topic model file");
  if (j.value("version", -1) != kTopicModelFormatVersion)
    throw std::runtime_error(path + ": unsupported topic model version");
  TopicModel m;
  auto cat = category_from_name(j.at("category").get<std::string>());
  if (!cat) throw std::runtime_error(path + ": unknown category");
  m.category = *cat;
  m.fold_in_iterations = j.at("fold_in_iterations").get<int>();
  m.topic_names = j.at("topic_names").get<std::vector<std::string>>();
  m.vocab = TopicVocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
  m.state.K = j.at("K").get<int>();
  m.state.alpha = j.at("alpha").get<std::vector<double>>();
  m.state.beta = j.at("beta").get<double>();
  m.state.seed_confidence = j.at("seed_confidence").get<double>();
  m.state.vocab_size = j.at("vocab_size").get<int>();
  m.state.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  m.state.doc_topic_counts = j.at("doc_topic_counts").get<std::vector<std::vector<int>>>();
  m.state.topic_word_counts = j.at("topic_word_counts").get<std::vector<std::vector<int>>>();
  m.state.topic_totals = j.at("topic_totals").get<std::vector<long>>();
  m.state.assignments = j.at("assignments").get<std::vector<std::vector<int>>>();
  return m;
}

TopicModel train_topic_model(const std::vector<DocumentView>& docs, const LdaConfig& cfg,
                             const SeedLexicon* lexicon, TrainReport* report) {
  LdaConfig effective = cfg;
  if (lexicon) effective.K = lexicon->size();
  if (effective.K < 2) throw std::invalid_argument("topic count K must be >= 2");

  TopicModel model;
  model.vocab = TopicVocab::build(docs, default_stopwords(), lexicon);
  if (!docs.empty() && model.vocab.size() == 0)
    throw std::invalid_argument("topic training corpus is empty after stopword removal");

  std::vector<std::vector<int>> encoded;
  encoded.reserve(docs.size());
  for (const auto& d : docs) encoded.push_back(model.vocab.encode(d.tokens));

  SeedTopicsByWord seed_topics;
  if (lexicon) {
    seed_topics.assign(static_cast<std::size_t>(model.vocab.size()), {});
    for (int k = 0; k < lexicon->size(); ++k) {
      for (const auto& word : lexicon->topics[static_cast<std::size_t>(k)].seeds) {
        const int id = model.vocab.id(word);
        if (id < 0) {
          if (report) report->ignored_seed_words.push_back(word);
          continue;
        }
        seed_topics[static_cast<std::size_t>(id)].push_back(k);
      }
    }
    for (const auto& t : lexicon->topics) model.topic_names.push_back(t.name);
  } else {
    for (int k = 0; k < effective.K; ++k) model.topic_names.push_back("topic" + std::to_string(k));
  }

  model.state = train_lda(encoded, model.vocab.size(), effective, lexicon ? &seed_topics : nullptr);
  if (!docs.empty()) model.category = docs.front().category;
  return model;
}

// ---------------------------------------------------------------------------

const TopicModel& CategoryModels::require(DocCategory c) const {
  const auto& slot = models[static_cast<std::size_t>(c)];
  if (!slot)
    throw std::invalid_argument(std::string("missing topic model for category \"") +
                                category_name(c) + "\"");
  return *slot;
}

bool CategoryModels::has(DocCategory c) const {
  return static_cast<bool>(models[static_cast<std::size_t>(c)]);
}

void CategoryModels::set(DocCategory c, TopicModel m) {
  models[static_cast<std::size_t>(c)] = std::move(m);
}

TurnTopicContext make_turn_context(const corpus::Dialog& dialog, int turn_index) {
  if (turn_index < 0 || turn_index >= static_cast<int>(dialog.turns.size()))
    throw std::out_of_range("turn_index out of range");
  TurnTopicContext ctx;
  ctx.question = dialog.turns[static_cast<std::size_t>(turn_index)].question.tokens;
  ctx.caption = dialog.caption.tokens;
  if (turn_index > 0) {
    const auto& prev = dialog.turns[static_cast<std::size_t>(turn_index - 1)];
    ctx.prev_answer = prev.answer.tokens;
    ctx.prev_qa = prev.question.tokens;
    ctx.prev_qa.insert(ctx.prev_qa.end(), prev.answer.tokens.begin(), prev.answer.tokens.end());
  }
  for (int t = 0; t < turn_index; ++t) {
    const auto& turn = dialog.turns[static_cast<std::size_t>(t)];
    ctx.history.insert(ctx.history.end(), turn.question.tokens.begin(),
                       turn.question.tokens.end());
    ctx.history.insert(ctx.history.end(), turn.answer.tokens.begin(), turn.answer.tokens.end());
  }
  ctx.history_caption = ctx.caption;
  ctx.history_caption.insert(ctx.history_caption.end(), ctx.history.begin(), ctx.history.end());
  return ctx;
}

TopicFeatures topic_feature_vector(const TurnTopicContext& ctx, const CategoryModels& models,
                                   TopicFeatureMode mode, std::uint64_t rng_seed) {
  auto infer_cat = [&](DocCategory c, const std::vector<std::string>& tokens) {
    const TopicModel& m = models.require(c);
    return m.infer(tokens, mix_seed(rng_seed, category_name(c)));
  };

  TopicFeatures out;
  out.question = infer_cat(DocCategory::question, ctx.question);
  const int K = out.question.K();

  std::vector<TopicDistribution> blocks;
  if (mode == TopicFeatureMode::qa_caption) {
    blocks.push_back(infer_cat(DocCategory::qa_pair, ctx.prev_qa));
    blocks.push_back(infer_cat(DocCategory::caption, ctx.caption));
  } else {
    blocks.push_back(out.question);
    blocks.push_back(infer_cat(DocCategory::answer, ctx.prev_answer));
    blocks.push_back(infer_cat(DocCategory::qa_pair, ctx.prev_qa));
    blocks.push_back(infer_cat(DocCategory::caption, ctx.caption));
    blocks.push_back(infer_cat(DocCategory::history, ctx.history));
    blocks.push_back(infer_cat(DocCategory::history_caption, ctx.history_caption));
  }

  out.history_block.resize(static_cast<Eigen::Index>(blocks.size()) * K);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    if (b.K() != K) throw std::logic_error("category models disagree on K");
    for (int k = 0; k < K; ++k) out.history_block[off + k] = b.probs[static_cast<std::size_t>(k)];
    off += K;
  }
  return out;
}

}  // namespace avsd::topics
