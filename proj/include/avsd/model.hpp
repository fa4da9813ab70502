#ifndef AVSD_MODEL_HPP
#define AVSD_MODEL_HPP

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "avsd/corpus.hpp"
#include "avsd/nn.hpp"

namespace avsd::model {

enum class AttentionMode { none, word_all, word_last, sent_all, sent_all_multimodal };
enum class TopicMode { none, features_qa_caption, features_all, embeddings_top3, hlstm_topics };
enum class AudioMode { none, vggish128, aclnet50 };
enum class AttentionScoring { additive, dot_product };

const char* to_string(AttentionMode m);
const char* to_string(TopicMode m);
const char* to_string(AudioMode m);
const char* to_string(AttentionScoring m);
std::optional<AttentionMode> attention_mode_from_string(const std::string& s);
std::optional<TopicMode> topic_mode_from_string(const std::string& s);
std::optional<AudioMode> audio_mode_from_string(const std::string& s);
std::optional<AttentionScoring> attention_scoring_from_string(const std::string& s);
std::vector<std::string> attention_mode_names();
std::vector<std::string> topic_mode_names();
std::vector<std::string> audio_mode_names();

struct ModelConfig {
  int embed_dim = 64;
  int hidden_dim = 128;
  int vocab_size = 0;
  AttentionMode attention_mode = AttentionMode::none;
  TopicMode topic_mode = TopicMode::none;
  AudioMode audio_mode = AudioMode::none;
  int video_dim = 0;  // 0 = no video features
  bool use_pretrained_word_vectors = false;
  int topic_embed_dim = 16;
  int topic_k = 9;
  int max_decode_len = 20;
  std::uint64_t rng_seed = 1;
  AttentionScoring attention_scoring = AttentionScoring::additive;
  bool caption_as_first_turn = true;       // caption becomes history pseudo-turn 0
  bool decoder_init_from_question = false; // default: zero initial decoder state

  int audio_dim() const;          // 0 / 128 / 50
  int topic_extra_dim() const;    // appended to every decoder step input
  int context_dim() const { return 4 * hidden_dim; }
  int decoder_input_dim() const { return embed_dim + context_dim() + topic_extra_dim(); }
  int sentence_lstm_input_dim() const;

  void validate() const;  // throws std::invalid_argument
};

// All learnable arrays. Ids below are indices into `store`; -1 means the
// config does not allocate that group (e.g. no attention weights for the
// baseline wiring).
struct Parameters {
  ModelConfig config;
  nn::ParamStore store;

  int embedding = -1;
  int question_W = -1, question_b = -1;
  int hist_word_W = -1, hist_word_b = -1;
  int hist_sent_W = -1, hist_sent_b = -1;
  int decoder_W = -1, decoder_b = -1;
  int attn_query_W = -1, attn_memory_W = -1, attn_score_v = -1;
  int audio_W = -1, audio_b = -1;
  int video_W = -1, video_b = -1;
  int out_W = -1, out_b = -1;
  int topic_embedding = -1;
};

/// Deterministic given rng_seed. Pretrained rows (when a table and vocabulary
/// are supplied) overwrite the random initialization and stay trainable.
Parameters init_parameters(const ModelConfig& cfg, std::uint64_t rng_seed,
                           const corpus::WordVectorTable* word_vectors = nullptr,
                           const corpus::Vocabulary* vocab = nullptr);

// Per-example topic features, precomputed by the topics module.
struct TopicInputs {
  Eigen::VectorXd question_dist;                   // K
  Eigen::VectorXd history_block;                   // 2K or 6K
  std::vector<int> question_top3;                  // topic ids (embeddings mode)
  std::vector<int> caption_top3;
  std::vector<Eigen::VectorXd> per_turn_qa_dist;   // hlstm mode, one per history turn
};

struct ExampleInput {
  std::vector<int> question;                 // token ids, nonempty
  std::vector<std::vector<int>> history;     // past turns (QA-pair ids); may include
                                             // the caption as pseudo-turn 0
  std::shared_ptr<const corpus::FeatureBundle> features;  // may be null when modes are none
  std::shared_ptr<const TopicInputs> topics;              // required when topic_mode != none
};

// ---------------------------------------------------------------------------
// Graph builder: every method appends to one tape so a single backward pass
// covers the whole example.

class Forward {
 public:
  Forward(nn::Tape& tape, const Parameters& params);

  struct SeqEncoding {
    std::vector<int> outputs;  // node per timestep, each hidden_dim
    int final_state = -1;
  };

  struct HistoryEncoding {
    std::vector<std::vector<int>> word_outputs;  // per turn, per timestep
    std::vector<int> word_finals;                // per turn
    std::vector<int> sentence_outputs;           // per turn
    int sentence_final = -1;                     // zero node when no history
  };

  struct Modalities {
    int audio = -1;  // hidden_dim nodes; zeros when the mode is off
    int video = -1;
  };

  struct AttentionOut {
    int weights = -1;  // M-dim
    int context = -1;  // hidden_dim
  };

  SeqEncoding encode_question(const std::vector<int>& ids);
  HistoryEncoding encode_history(const std::vector<std::vector<int>>& turns,
                                 const std::vector<Eigen::VectorXd>* turn_topics);
  Modalities encode_modalities(const corpus::FeatureBundle* features);
  AttentionOut attention(int query, const std::vector<int>& memory);
  int build_history_context(int decoder_state, const HistoryEncoding& hist,
                            const Modalities& mm);

  struct DecoderState {
    int h = -1;
    int c = -1;
  };

  struct StepResult {
    int logits = -1;
    DecoderState state;
  };

  /// One decoder step: input = concat(emb(prev), context, topic features).
  StepResult decoder_step(int prev_token, const DecoderState& state, const SeqEncoding& question,
                          const HistoryEncoding& hist, const Modalities& mm,
                          const TopicInputs* topics);

  DecoderState initial_decoder_state(const SeqEncoding& question);

  nn::Tape& tape() { return tape_; }

 private:
  std::pair<int, int> lstm_step(int x, int h, int c, int w, int b);
  int topic_extra_node(const TopicInputs* topics);

  nn::Tape& tape_;
  const Parameters& p_;
  int topic_extra_cache_ = -1;
};

// ---------------------------------------------------------------------------
// Whole-example entry points (each builds a private tape).

struct NllResult {
  double total = 0.0;
  int n_tokens = 0;
  double mean() const { return n_tokens > 0 ? total / n_tokens : 0.0; }
  double perplexity() const { return std::exp(mean()); }
};

/// Teacher-forced NLL of the answer (EOS appended) given the example.
NllResult sequence_nll(const Parameters& params, const ExampleInput& input,
                       const std::vector<int>& answer_ids);

/// Same forward pass plus backward; gradients are scaled by grad_scale and
/// accumulated into params.store (call store.zero_grads() per batch).
NllResult sequence_nll_backward(Parameters& params, const ExampleInput& input,
                                const std::vector<int>& answer_ids, double grad_scale);

struct GenerateOptions {
  int beam_width = 1;  // 1 = greedy
};

/// Answer token ids (no BOS/EOS). Greedy argmax or length-normalized beam.
std::vector<int> generate(const Parameters& params, const ExampleInput& input,
                          const GenerateOptions& opts = {});

/// Value-level attention for direct testing of the op contract.
struct AttentionResult {
  Eigen::VectorXd weights;
  Eigen::VectorXd context;
};
AttentionResult attention_values(const Parameters& params, const Eigen::VectorXd& query,
                                 const std::vector<Eigen::VectorXd>& memory);

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary container (config JSON + little-endian
// 64-bit parameter arrays + rng state).

void save_checkpoint(const Parameters& params, const std::string& rng_state,
                     const std::string& path);
struct Checkpoint {
  Parameters params;
  std::string rng_state;
};
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json_string(const ModelConfig& cfg);
ModelConfig model_config_from_json_string(const std::string& text);

/// Builds ExampleInput history turns: optional caption pseudo-turn followed
/// by QA-pair id sequences of turns < turn_index.
std::vector<std::vector<int>> build_history_ids(const corpus::Dialog& dialog, int turn_index,
                                                const corpus::Vocabulary& vocab,
                                                bool caption_as_first_turn);

}  // namespace avsd::model

#endif
