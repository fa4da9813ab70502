#ifndef AVSD_CORPUS_HPP
#define AVSD_CORPUS_HPP

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace avsd::corpus {

/// Lowercases, collapses whitespace and detaches leading/trailing
/// punctuation (.,?!';:") into standalone tokens. Empty input -> empty list.
std::vector<std::string> tokenize(const std::string& text);

struct Utterance {
  std::string raw_text;
  std::vector<std::string> tokens;
};

Utterance make_utterance(const std::string& raw);

struct DialogTurn {
  Utterance question;
  Utterance answer;
  int turn_index = 0;
};

struct Dialog {
  std::string video_id;
  Utterance caption;
  std::vector<DialogTurn> turns;
};

/// Parses a dataset file: {"dialogs":[{"image_id","caption","dialog":[{"question","answer"},..]},..]}.
/// Throws std::runtime_error with line context on malformed JSON and with the
/// entry index / field name on schema violations.
std::vector<Dialog> load_dataset(const std::string& path);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  /// Tokens from questions, answers and captions with frequency >= min_frequency,
  /// plus the four reserved symbols at ids 0..3.
  static Vocabulary build(const std::vector<Dialog>& dialogs, int min_frequency);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  int min_frequency() const { return min_frequency_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  int min_frequency_ = 2;
};

/// OOV tokens map to kUnk; with add_bos_eos the sequence is wrapped for decoder targets.
std::vector<int> encode(const Utterance& utt, const Vocabulary& vocab, bool add_bos_eos = false);
std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               bool add_bos_eos = false);
std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab);

struct FeatureBundle {
  std::vector<Eigen::VectorXd> audio_frames;
  std::vector<Eigen::VectorXd> video_frames;
  int d_a = 0;
  int d_v = 0;
};

/// Reads <dir>/<video_id>.audio.txt and <dir>/<video_id>.video.txt
/// (header "<n_frames> <dim>", then one frame per line).
FeatureBundle load_features(const std::string& dir, const std::string& video_id);

/// Deterministic synthetic features for tests and fixture runs. 50-dim audio
/// frames are softmax-normalized to mimic classifier outputs.
FeatureBundle synthesize_features(const std::string& video_id, std::uint64_t seed, int d_a,
                                  int d_v, int n_frames);

struct WordVectorTable {
  std::unordered_map<std::string, Eigen::VectorXd> vectors;
  int dim = 0;
};

/// One "<token> <f1> ... <fdim>" line per entry; inconsistent dims -> error naming the line.
WordVectorTable load_word_vectors(const std::string& path);

/// Number of vocabulary tokens covered by the table.
int coverage(const WordVectorTable& table, const Vocabulary& vocab);

}  // namespace avsd::corpus

#endif
