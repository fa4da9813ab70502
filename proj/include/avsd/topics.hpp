#ifndef AVSD_TOPICS_HPP
#define AVSD_TOPICS_HPP

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avsd/corpus.hpp"
#include "avsd/rng.hpp"

namespace avsd::topics {

enum class DocCategory { question, answer, qa_pair, caption, history, history_caption };

const char* category_name(DocCategory c);
std::optional<DocCategory> category_from_name(const std::string& name);
inline constexpr int kNumCategories = 6;

struct DocumentView {
  DocCategory category;
  std::vector<std::string> tokens;
  std::string dialog_id;
  int turn_index = -1;  // -1 for caption docs
};

/// One doc per turn for question/answer/qa_pair/history (turn-0 history is
/// empty and therefore excluded), one per dialog for caption.
std::vector<DocumentView> build_document_views(const std::vector<corpus::Dialog>& dialogs,
                                               DocCategory category);

struct SeedLexicon {
  struct Topic {
    std::string name;
    std::set<std::string> seeds;
  };
  std::vector<Topic> topics;

  int size() const { return static_cast<int>(topics.size()); }
  static SeedLexicon load(const std::string& path);
  void save(const std::string& path) const;
};

struct LdaConfig {
  int K = 9;
  std::vector<double> alpha;     // empty -> symmetric 0.1
  double beta = 0.01;
  int iterations = 300;
  double seed_confidence = 0.15;
  std::uint64_t rng_seed = 1;

  std::vector<double> resolved_alpha() const;
};

struct TopicModelState {
  int K = 0;
  std::vector<double> alpha;  // per-topic
  double beta = 0.01;
  double seed_confidence = 0.0;
  int vocab_size = 0;
  std::vector<std::vector<int>> doc_topic_counts;   // D x K
  std::vector<std::vector<int>> topic_word_counts;  // K x V
  std::vector<long> topic_totals;                   // K
  std::vector<std::vector<int>> assignments;        // per doc, per position
  std::uint64_t rng_seed = 0;

  void check_invariants(const std::vector<std::vector<int>>& docs) const;
};

// seed_topics[w] lists the topics whose seed set contains word w; empty
// vector = unseeded word. Size V when guided, may be empty when unguided.
using SeedTopicsByWord = std::vector<std::vector<int>>;

/// Seed-biased (or uniform) initial assignments. With seed_confidence = 0 the
/// rng stream is identical to the unguided path.
TopicModelState init_assignments(const std::vector<std::vector<int>>& docs, int V,
                                 const LdaConfig& cfg, const SeedTopicsByWord* seed_topics,
                                 Rng& rng);

/// One full collapsed Gibbs sweep over every token position.
void gibbs_sweep(TopicModelState& state, const std::vector<std::vector<int>>& docs, Rng& rng);

/// init + iterations sweeps.
TopicModelState train_lda(const std::vector<std::vector<int>>& docs, int V, const LdaConfig& cfg,
                          const SeedTopicsByWord* seed_topics);

struct TopicDistribution {
  std::vector<double> probs;
  int K() const { return static_cast<int>(probs.size()); }
};

/// Fold-in Gibbs with topic_word_counts frozen; returns smoothed normalized
/// doc-topic proportions. Empty doc -> uniform.
TopicDistribution infer_topics(const TopicModelState& state, const std::vector<int>& doc,
                               int fold_in_iterations, std::uint64_t rng_seed);

/// Descending by probability, ties broken by lower topic id.
std::vector<std::pair<int, double>> top_k_topics(const TopicDistribution& dist, int k);

// ---------------------------------------------------------------------------
// Trained-model artifact: sampler state plus the vocabulary it was encoded
// with, so saved models reproduce inference exactly.

class TopicVocab {
 public:
  static TopicVocab build(const std::vector<DocumentView>& docs,
                          const std::set<std::string>& stopwords,
                          const SeedLexicon* lexicon);  // seeds survive stopword removal

  int id(const std::string& token) const;  // -1 when absent
  const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(tokens_.size()); }
  /// Drops unknown tokens (LDA has no UNK).
  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  static TopicVocab from_tokens(std::vector<std::string> tokens);
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

const std::set<std::string>& default_stopwords();

struct TopicModel {
  TopicModelState state;
  TopicVocab vocab;
  std::vector<std::string> topic_names;  // seeded names, or "topic<k>"
  DocCategory category = DocCategory::qa_pair;
  int fold_in_iterations = 20;

  TopicDistribution infer(const std::vector<std::string>& tokens, std::uint64_t rng_seed) const;

  void save(const std::string& path) const;
  static TopicModel load(const std::string& path);
};

struct TrainReport {
  std::vector<std::string> ignored_seed_words;  // lexicon words absent from the vocab
};

/// Full pipeline: vocab build (stopwords removed, seeds kept), encoding,
/// guided or unguided sampling.
TopicModel train_topic_model(const std::vector<DocumentView>& docs, const LdaConfig& cfg,
                             const SeedLexicon* lexicon, TrainReport* report = nullptr);

// ---------------------------------------------------------------------------
// Turn-level topic features for the dialog model.

enum class TopicFeatureMode { qa_caption, all };

struct CategoryModels {
  // slots indexed by DocCategory order: question, answer, qa_pair, caption,
  // history, history_caption
  std::vector<std::optional<TopicModel>> models{static_cast<std::size_t>(kNumCategories)};

  const TopicModel& require(DocCategory c) const;
  bool has(DocCategory c) const;
  void set(DocCategory c, TopicModel m);
};

/// Token views of everything known before answering one turn. The current
/// answer never participates; answer/qa slots hold the previous turn's text.
struct TurnTopicContext {
  std::vector<std::string> question;
  std::vector<std::string> prev_answer;
  std::vector<std::string> prev_qa;
  std::vector<std::string> caption;
  std::vector<std::string> history;          // QA pairs of turns < t
  std::vector<std::string> history_caption;  // caption ++ history
};

TurnTopicContext make_turn_context(const corpus::Dialog& dialog, int turn_index);

struct TopicFeatures {
  TopicDistribution question;      // K, injected into every decoder step
  Eigen::VectorXd history_block;   // 2K (qa_caption) or 6K (all)
};

/// qa_caption -> concat(QA-pair dist, caption dist); all -> concat of all six
/// category distributions in the order q, a, qa, caption, history,
/// history+caption. Throws when a required category model is missing.
TopicFeatures topic_feature_vector(const TurnTopicContext& ctx, const CategoryModels& models,
                                   TopicFeatureMode mode, std::uint64_t rng_seed);

}  // namespace avsd::topics

#endif
