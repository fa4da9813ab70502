#include "avsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace avsd::model {

namespace {

template <typename T>
struct ModeNames {
  std::vector<std::pair<T, const char*>> entries;
};

const std::vector<std::pair<AttentionMode, const char*>>& attention_entries() {
  static const std::vector<std::pair<AttentionMode, const char*>> e = {
      {AttentionMode::none, "none"},
      {AttentionMode::word_all, "word_all"},
      {AttentionMode::word_last, "word_last"},
      {AttentionMode::sent_all, "sent_all"},
      {AttentionMode::sent_all_multimodal, "sent_all_multimodal"}};
  return e;
}

const std::vector<std::pair<TopicMode, const char*>>& topic_entries() {
  static const std::vector<std::pair<TopicMode, const char*>> e = {
      {TopicMode::none, "none"},
      {TopicMode::features_qa_caption, "features_qa_caption"},
      {TopicMode::features_all, "features_all"},
      {TopicMode::embeddings_top3, "embeddings_top3"},
      {TopicMode::hlstm_topics, "hlstm_topics"}};
  return e;
}

const std::vector<std::pair<AudioMode, const char*>>& audio_entries() {
  static const std::vector<std::pair<AudioMode, const char*>> e = {
      {AudioMode::none, "none"}, {AudioMode::vggish128, "vggish128"},
      {AudioMode::aclnet50, "aclnet50"}};
  return e;
}

const std::vector<std::pair<AttentionScoring, const char*>>& scoring_entries() {
  static const std::vector<std::pair<AttentionScoring, const char*>> e = {
      {AttentionScoring::additive, "additive"}, {AttentionScoring::dot_product, "dot_product"}};
  return e;
}

template <typename T>
const char* name_of(const std::vector<std::pair<T, const char*>>& entries, T v) {
  for (const auto& [mode, name] : entries)
    if (mode == v) return name;
  return "?";
}

template <typename T>
std::optional<T> from_name(const std::vector<std::pair<T, const char*>>& entries,
                           const std::string& s) {
  for (const auto& [mode, name] : entries)
    if (s == name) return mode;
  return std::nullopt;
}

template <typename T>
std::vector<std::string> all_names(const std::vector<std::pair<T, const char*>>& entries) {
  std::vector<std::string> out;
  for (const auto& [mode, name] : entries) out.emplace_back(name);
  return out;
}

}  // namespace

const char* to_string(AttentionMode m) { return name_of(attention_entries(), m); }
const char* to_string(TopicMode m) { return name_of(topic_entries(), m); }
const char* to_string(AudioMode m) { return name_of(audio_entries(), m); }
const char* to_string(AttentionScoring m) { return name_of(scoring_entries(), m); }
std::optional<AttentionMode> attention_mode_from_string(const std::string& s) {
  return from_name(attention_entries(), s);
}
std::optional<TopicMode> topic_mode_from_string(const std::string& s) {
  return from_name(topic_entries(), s);
}
std::optional<AudioMode> audio_mode_from_string(const std::string& s) {
  return from_name(audio_entries(), s);
}
std::optional<AttentionScoring> attention_scoring_from_string(const std::string& s) {
  return from_name(scoring_entries(), s);
}
std::vector<std::string> attention_mode_names() { return all_names(attention_entries()); }
std::vector<std::string> topic_mode_names() { return all_names(topic_entries()); }
std::vector<std::string> audio_mode_names() { return all_names(audio_entries()); }

int ModelConfig::audio_dim() const {
  switch (audio_mode) {
    case AudioMode::none: return 0;
    case AudioMode::vggish128: return 128;
    case AudioMode::aclnet50: return 50;
  }
  return 0;
}

int ModelConfig::topic_extra_dim() const {
  switch (topic_mode) {
    case TopicMode::none: return 0;
    case TopicMode::features_qa_caption: return topic_k + 2 * topic_k;
    case TopicMode::features_all: return topic_k + 6 * topic_k;
    case TopicMode::embeddings_top3: return 2 * topic_embed_dim;
    case TopicMode::hlstm_topics: return 0;  // enters the history encoder instead
  }
  return 0;
}

int ModelConfig::sentence_lstm_input_dim() const {
  return hidden_dim + (topic_mode == TopicMode::hlstm_topics ? topic_k : 0);
}

void ModelConfig::validate() const {
  if (embed_dim < 1 || hidden_dim < 1) throw std::invalid_argument("model dims must be >= 1");
  if (vocab_size < 5) throw std::invalid_argument("vocab_size must cover reserved ids plus tokens");
  if (max_decode_len < 1) throw std::invalid_argument("max_decode_len must be >= 1");
  if (topic_mode != TopicMode::none && topic_k < 2)
    throw std::invalid_argument("topic_k must be >= 2 when topics are enabled");
  if (topic_mode == TopicMode::embeddings_top3 && topic_embed_dim < 1)
    throw std::invalid_argument("topic_embed_dim must be >= 1");
  if (video_dim < 0) throw std::invalid_argument("video_dim must be >= 0");
}

Parameters init_parameters(const ModelConfig& cfg, std::uint64_t rng_seed,
                           const corpus::WordVectorTable* word_vectors,
                           const corpus::Vocabulary* vocab) {
  cfg.validate();
  if (word_vectors && word_vectors->dim != cfg.embed_dim)
    throw std::invalid_argument("word-vector dim " + std::to_string(word_vectors->dim) +
                                " does not match embed_dim " + std::to_string(cfg.embed_dim));
  if (word_vectors && !vocab)
    throw std::invalid_argument("word vectors require the vocabulary for row mapping");

  Parameters p;
  p.config = cfg;
  Rng rng(rng_seed);
  const int H = cfg.hidden_dim;
  const int E = cfg.embed_dim;
  const double scale = 0.08;

  auto add_init = [&](const char* name, int rows, int cols) {
    const int id = p.store.add(name, rows, cols);
    nn::init_uniform(p.store[id].value, rng, scale);
    return id;
  };
  auto add_lstm_bias = [&](const char* name) {
    const int id = p.store.add(name, 4 * H, 1);
    p.store[id].value.block(H, 0, H, 1).setOnes();  // forget gate opens at init
    return id;
  };

  p.embedding = add_init("embedding", cfg.vocab_size, E);
  p.question_W = add_init("question_lstm_W", 4 * H, E + H);
  p.question_b = add_lstm_bias("question_lstm_b");
  p.hist_word_W = add_init("hist_word_lstm_W", 4 * H, E + H);
  p.hist_word_b = add_lstm_bias("hist_word_lstm_b");
  p.hist_sent_W = add_init("hist_sent_lstm_W", 4 * H, cfg.sentence_lstm_input_dim() + H);
  p.hist_sent_b = add_lstm_bias("hist_sent_lstm_b");
  p.decoder_W = add_init("decoder_lstm_W", 4 * H, cfg.decoder_input_dim() + H);
  p.decoder_b = add_lstm_bias("decoder_lstm_b");
  if (cfg.attention_mode != AttentionMode::none &&
      cfg.attention_scoring == AttentionScoring::additive) {
    p.attn_query_W = add_init("attn_query_W", H, H);
    p.attn_memory_W = add_init("attn_memory_W", H, H);
    p.attn_score_v = add_init("attn_score_v", 1, H);
  }
  if (cfg.audio_mode != AudioMode::none) {
    p.audio_W = add_init("audio_proj_W", H, cfg.audio_dim());
    p.audio_b = p.store.add("audio_proj_b", H, 1);
  }
  if (cfg.video_dim > 0) {
    p.video_W = add_init("video_proj_W", H, cfg.video_dim);
    p.video_b = p.store.add("video_proj_b", H, 1);
  }
  p.out_W = add_init("out_W", cfg.vocab_size, H);
  p.out_b = p.store.add("out_b", cfg.vocab_size, 1);
  if (cfg.topic_mode == TopicMode::embeddings_top3)
    p.topic_embedding = add_init("topic_embedding", cfg.topic_k, cfg.topic_embed_dim);

  if (word_vectors) {
    auto& emb = p.store[p.embedding].value;
    for (int i = 4; i < cfg.vocab_size && i < vocab->size(); ++i) {
      auto it = word_vectors->vectors.find(vocab->token(i));
      if (it != word_vectors->vectors.end()) emb.row(i) = it->second.transpose();
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

Forward::Forward(nn::Tape& tape, const Parameters& params) : tape_(tape), p_(params) {}

std::pair<int, int> Forward::lstm_step(int x, int h, int c, int w, int b) {
  const int H = p_.config.hidden_dim;
  const int gates = tape_.affine(w, b, tape_.concat({x, h}));
  const int i_g = tape_.sigmoid_(tape_.slice(gates, 0, H));
  const int f_g = tape_.sigmoid_(tape_.slice(gates, H, H));
  const int o_g = tape_.sigmoid_(tape_.slice(gates, 2 * H, H));
  const int g_g = tape_.tanh_(tape_.slice(gates, 3 * H, H));
  const int c_next = tape_.add(tape_.cmul(f_g, c), tape_.cmul(i_g, g_g));
  const int h_next = tape_.cmul(o_g, tape_.tanh_(c_next));
  return {h_next, c_next};
}

Forward::SeqEncoding Forward::encode_question(const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("encode_question: empty question");
  const int H = p_.config.hidden_dim;
  SeqEncoding enc;
  int h = tape_.zeros(H), c = tape_.zeros(H);
  for (int id : ids) {
    const int x = tape_.lookup(p_.embedding, id);
    std::tie(h, c) = lstm_step(x, h, c, p_.question_W, p_.question_b);
    enc.outputs.push_back(h);
  }
  enc.final_state = h;
  return enc;
}

Forward::HistoryEncoding Forward::encode_history(const std::vector<std::vector<int>>& turns,
                                                 const std::vector<Eigen::VectorXd>* turn_topics) {
  const int H = p_.config.hidden_dim;
  const bool with_topics = p_.config.topic_mode == TopicMode::hlstm_topics;
  if (with_topics) {
    if (!turn_topics || turn_topics->size() != turns.size())
      throw std::invalid_argument("hlstm_topics needs one QA-pair distribution per history turn");
  }
  HistoryEncoding enc;
  if (turns.empty()) {
    enc.sentence_final = tape_.zeros(H);
    return enc;
  }
  for (const auto& turn : turns) {
    std::vector<int> outputs;
    int h = tape_.zeros(H), c = tape_.zeros(H);
    if (turn.empty()) {
      // degenerate turn: encode as a single PAD step
      const int x = tape_.lookup(p_.embedding, corpus::Vocabulary::kPad);
      std::tie(h, c) = lstm_step(x, h, c, p_.hist_word_W, p_.hist_word_b);
      outputs.push_back(h);
    } else {
      for (int id : turn) {
        const int x = tape_.lookup(p_.embedding, id);
        std::tie(h, c) = lstm_step(x, h, c, p_.hist_word_W, p_.hist_word_b);
        outputs.push_back(h);
      }
    }
    enc.word_outputs.push_back(std::move(outputs));
    enc.word_finals.push_back(h);
  }
  int sh = tape_.zeros(H), sc = tape_.zeros(H);
  for (std::size_t t = 0; t < turns.size(); ++t) {
    int x = enc.word_finals[t];
    if (with_topics) x = tape_.concat({x, tape_.input((*turn_topics)[t])});
    std::tie(sh, sc) = lstm_step(x, sh, sc, p_.hist_sent_W, p_.hist_sent_b);
    enc.sentence_outputs.push_back(sh);
  }
  enc.sentence_final = sh;
  return enc;
}

Forward::Modalities Forward::encode_modalities(const corpus::FeatureBundle* features) {
  const auto& cfg = p_.config;
  const int H = cfg.hidden_dim;
  Modalities mm;

  auto pool = [](const std::vector<Eigen::VectorXd>& frames) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(frames.front().size());
    for (const auto& f : frames) mean += f;
    return Eigen::VectorXd(mean / static_cast<double>(frames.size()));
  };

  if (cfg.audio_mode == AudioMode::none) {
    mm.audio = tape_.zeros(H);
  } else {
    if (!features || features->audio_frames.empty())
      throw std::invalid_argument("audio features required for audio_mode " +
                                  std::string(to_string(cfg.audio_mode)));
    if (features->d_a != cfg.audio_dim())
      throw std::invalid_argument("audio dim mismatch: expected " +
                                  std::to_string(cfg.audio_dim()) + ", got " +
                                  std::to_string(features->d_a));
    const int pooled = tape_.input(pool(features->audio_frames));
    mm.audio = tape_.tanh_(tape_.affine(p_.audio_W, p_.audio_b, pooled));
  }

  if (cfg.video_dim == 0) {
    mm.video = tape_.zeros(H);
  } else {
    if (!features || features->video_frames.empty())
      throw std::invalid_argument("video features required when video_dim > 0");
    if (features->d_v != cfg.video_dim)
      throw std::invalid_argument("video dim mismatch: expected " +
                                  std::to_string(cfg.video_dim) + ", got " +
                                  std::to_string(features->d_v));
    const int pooled = tape_.input(pool(features->video_frames));
    mm.video = tape_.tanh_(tape_.affine(p_.video_W, p_.video_b, pooled));
  }
  return mm;
}

Forward::AttentionOut Forward::attention(int query, const std::vector<int>& memory) {
  if (memory.empty()) throw std::invalid_argument("attention: memory must have M >= 1 rows");
  std::vector<int> scores;
  scores.reserve(memory.size());
  if (p_.config.attention_scoring == AttentionScoring::additive) {
    const int qp = tape_.matvec(p_.attn_query_W, query);
    for (int m : memory) {
      const int combined = tape_.tanh_(tape_.add(qp, tape_.matvec(p_.attn_memory_W, m)));
      scores.push_back(tape_.matvec(p_.attn_score_v, combined));
    }
  } else {
    for (int m : memory) scores.push_back(tape_.dot(query, m));
  }
  AttentionOut out;
  out.weights = tape_.softmax(tape_.concat(scores));
  out.context = tape_.weighted_sum(out.weights, memory);
  return out;
}

int Forward::build_history_context(int decoder_state, const HistoryEncoding& hist,
                                   const Modalities& mm) {
  const int H = p_.config.hidden_dim;
  const auto mode = p_.config.attention_mode;
  if (mode == AttentionMode::none) return hist.sentence_final;
  const std::size_t n = hist.word_finals.size();
  if (n == 0) return tape_.zeros(H);
  switch (mode) {
    case AttentionMode::word_all: {
      std::vector<int> contexts;
      contexts.reserve(n);
      for (const auto& outputs : hist.word_outputs)
        contexts.push_back(attention(decoder_state, outputs).context);
      return contexts.size() == 1 ? contexts[0] : tape_.add_many(contexts);
    }
    case AttentionMode::word_last:
      return attention(decoder_state, hist.word_finals).context;
    case AttentionMode::sent_all:
      return attention(decoder_state, hist.sentence_outputs).context;
    case AttentionMode::sent_all_multimodal: {
      std::vector<int> memory = hist.sentence_outputs;
      memory.push_back(mm.audio);
      memory.push_back(mm.video);
      return attention(decoder_state, memory).context;
    }
    case AttentionMode::none:
      break;
  }
  return hist.sentence_final;
}

int Forward::topic_extra_node(const TopicInputs* topics) {
  if (topic_extra_cache_ >= 0) return topic_extra_cache_;
  const auto& cfg = p_.config;
  const int K = cfg.topic_k;
  if (cfg.topic_mode == TopicMode::none || cfg.topic_mode == TopicMode::hlstm_topics)
    throw std::logic_error("topic_extra_node called without decoder-side topics");
  if (!topics)
    throw std::invalid_argument("topic inputs missing for topic_mode " +
                                std::string(to_string(cfg.topic_mode)));

  if (cfg.topic_mode == TopicMode::embeddings_top3) {
    auto mean_rows = [&](const std::vector<int>& ids) {
      if (ids.empty())
        throw std::invalid_argument("embeddings_top3 needs top-topic ids for question and caption");
      std::vector<int> rows;
      rows.reserve(ids.size());
      for (int id : ids) {
        if (id < 0 || id >= K) throw std::invalid_argument("topic id out of range");
        rows.push_back(tape_.lookup(p_.topic_embedding, id));
      }
      return rows.size() == 1 ? rows[0] : tape_.mean_of(rows);
    };
    topic_extra_cache_ =
        tape_.concat({mean_rows(topics->question_top3), mean_rows(topics->caption_top3)});
    return topic_extra_cache_;
  }

  const int expected_block = cfg.topic_mode == TopicMode::features_qa_caption ? 2 * K : 6 * K;
  if (topics->question_dist.size() != K)
    throw std::invalid_argument("question topic distribution must have K entries");
  if (topics->history_block.size() != expected_block)
    throw std::invalid_argument("history topic block must have " +
                                std::to_string(expected_block) + " entries, got " +
                                std::to_string(topics->history_block.size()));
  topic_extra_cache_ = tape_.concat(
      {tape_.input(topics->question_dist), tape_.input(topics->history_block)});
  return topic_extra_cache_;
}

Forward::DecoderState Forward::initial_decoder_state(const SeqEncoding& question) {
  const int H = p_.config.hidden_dim;
  DecoderState st;
  st.h = p_.config.decoder_init_from_question ? question.final_state : tape_.zeros(H);
  st.c = tape_.zeros(H);
  return st;
}

Forward::StepResult Forward::decoder_step(int prev_token, const DecoderState& state,
                                          const SeqEncoding& question,
                                          const HistoryEncoding& hist, const Modalities& mm,
                                          const TopicInputs* topics) {
  const auto& cfg = p_.config;
  const int hist_ctx = build_history_context(state.h, hist, mm);
  std::vector<int> pieces = {tape_.lookup(p_.embedding, prev_token), question.final_state,
                             hist_ctx, mm.audio, mm.video};
  if (cfg.topic_mode != TopicMode::none && cfg.topic_mode != TopicMode::hlstm_topics)
    pieces.push_back(topic_extra_node(topics));
  else if (cfg.topic_mode == TopicMode::hlstm_topics && !topics)
    throw std::invalid_argument("topic inputs missing for topic_mode hlstm_topics");
  const int x = tape_.concat(pieces);
  auto [h, c] = lstm_step(x, state.h, state.c, p_.decoder_W, p_.decoder_b);
  StepResult r;
  r.logits = tape_.affine(p_.out_W, p_.out_b, h);
  r.state = {h, c};
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct BuiltExample {
  Forward::SeqEncoding question;
  Forward::HistoryEncoding history;
  Forward::Modalities modalities;
};

BuiltExample build_encodings(Forward& fwd, const Parameters& p, const ExampleInput& input) {
  BuiltExample b;
  b.question = fwd.encode_question(input.question);
  const std::vector<Eigen::VectorXd>* turn_topics = nullptr;
  if (p.config.topic_mode == TopicMode::hlstm_topics) {
    if (!input.topics)
      throw std::invalid_argument("topic inputs missing for topic_mode hlstm_topics");
    turn_topics = &input.topics->per_turn_qa_dist;
  }
  b.history = fwd.encode_history(input.history, turn_topics);
  b.modalities = fwd.encode_modalities(input.features.get());
  return b;
}

int argmax_lowest(const nn::Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

nn::Vec log_softmax(const nn::Vec& v) {
  const double m = v.maxCoeff();
  const double lse = std::log((v.array() - m).exp().sum());
  return v.array() - m - lse;
}

NllResult run_sequence_nll(Parameters& params, const ExampleInput& input,
                           const std::vector<int>& answer_ids, bool with_backward,
                           double grad_scale) {
  if (answer_ids.empty()) throw std::invalid_argument("sequence_nll: target answer is empty");
  nn::Tape tape(&params.store);
  Forward fwd(tape, params);
  BuiltExample built = build_encodings(fwd, params, input);

  std::vector<int> inputs = {corpus::Vocabulary::kBos};
  inputs.insert(inputs.end(), answer_ids.begin(), answer_ids.end());
  std::vector<int> targets = answer_ids;
  targets.push_back(corpus::Vocabulary::kEos);

  auto state = fwd.initial_decoder_state(built.question);
  std::vector<int> losses;
  losses.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto step = fwd.decoder_step(inputs[t], state, built.question, built.history,
                                 built.modalities, input.topics.get());
    state = step.state;
    losses.push_back(tape.pick_neg_log_softmax(step.logits, targets[t]));
  }
  const int total = losses.size() == 1 ? losses[0] : tape.add_many(losses);

  NllResult res;
  res.total = tape.scalar(total);
  res.n_tokens = static_cast<int>(targets.size());
  if (with_backward) {
    const int scaled = grad_scale == 1.0 ? total : tape.scale(total, grad_scale);
    tape.backward(scaled);
  }
  return res;
}

}  // namespace

NllResult sequence_nll(const Parameters& params, const ExampleInput& input,
                       const std::vector<int>& answer_ids) {
  // forward-only; the tape never writes gradients
  return run_sequence_nll(const_cast<Parameters&>(params), input, answer_ids, false, 1.0);
}

NllResult sequence_nll_backward(Parameters& params, const ExampleInput& input,
                                const std::vector<int>& answer_ids, double grad_scale) {
  return run_sequence_nll(params, input, answer_ids, true, grad_scale);
}

std::vector<int> generate(const Parameters& params, const ExampleInput& input,
                          const GenerateOptions& opts) {
  if (opts.beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
  auto& mutable_params = const_cast<Parameters&>(params);  // forward-only
  nn::Tape tape(&mutable_params.store);
  Forward fwd(tape, params);
  BuiltExample built = build_encodings(fwd, params, input);

  struct Hyp {
    std::vector<int> tokens;
    double logprob = 0.0;
    Forward::DecoderState state;
    int prev = corpus::Vocabulary::kBos;
    bool done = false;
    double norm() const {
      const int len = static_cast<int>(tokens.size()) + (done ? 1 : 0);  // EOS counted
      return logprob / std::max(1, len);
    }
  };

  std::vector<Hyp> beam(1);
  beam[0].state = fwd.initial_decoder_state(built.question);

  for (int step = 0; step < params.config.max_decode_len; ++step) {
    struct Cand {
      double norm;
      std::size_t hyp;
      int token;  // -1 = carry a finished hypothesis
    };
    std::vector<Cand> cands;
    bool any_live = false;
    for (std::size_t i = 0; i < beam.size(); ++i) {
      if (beam[i].done) {
        cands.push_back({beam[i].norm(), i, -1});
        continue;
      }
      any_live = true;
      auto res = fwd.decoder_step(beam[i].prev, beam[i].state, built.question, built.history,
                                  built.modalities, input.topics.get());
      beam[i].state = res.state;
      const nn::Vec logp = log_softmax(tape.value(res.logits));
      const int new_len = static_cast<int>(beam[i].tokens.size()) + 1;
      for (int tok = 0; tok < logp.size(); ++tok)
        cands.push_back({(beam[i].logprob + logp[tok]) / new_len, i, tok});
    }
    if (!any_live) break;

    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.norm != b.norm) return a.norm > b.norm;
      return a.token < b.token;  // deterministic ties: lower token id first
    });
    if (static_cast<int>(cands.size()) > opts.beam_width)
      cands.resize(static_cast<std::size_t>(opts.beam_width));

    std::vector<Hyp> next;
    next.reserve(cands.size());
    for (const auto& c : cands) {
      Hyp h = beam[c.hyp];
      if (c.token >= 0) {
        const nn::Vec logp = nn::Vec();  // logprob already folded into norm; recompute below
        (void)logp;
        h.logprob = c.norm * (static_cast<int>(h.tokens.size()) + 1);
        if (c.token == corpus::Vocabulary::kEos) {
          h.done = true;
        } else {
          h.tokens.push_back(c.token);
          h.prev = c.token;
        }
      }
      next.push_back(std::move(h));
    }
    beam = std::move(next);

    bool all_done = true;
    for (const auto& h : beam)
      if (!h.done) all_done = false;
    if (all_done) break;
  }

  const Hyp* best = &beam[0];
  for (const auto& h : beam)
    if (h.norm() > best->norm()) best = &h;
  return best->tokens;
}

AttentionResult attention_values(const Parameters& params, const Eigen::VectorXd& query,
                                 const std::vector<Eigen::VectorXd>& memory) {
  auto& mutable_params = const_cast<Parameters&>(params);  // forward-only
  nn::Tape tape(&mutable_params.store);
  Forward fwd(tape, params);
  const int q = tape.input(query);
  std::vector<int> mem;
  mem.reserve(memory.size());
  for (const auto& m : memory) mem.push_back(tape.input(m));
  auto out = fwd.attention(q, mem);
  return {tape.value(out.weights), tape.value(out.context)};
}

// ---------------------------------------------------------------------------

std::string model_config_to_json_string(const ModelConfig& cfg) {
  nlohmann::json j;
  j["embed_dim"] = cfg.embed_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  j["vocab_size"] = cfg.vocab_size;
  j["attention_mode"] = to_string(cfg.attention_mode);
  j["topic_mode"] = to_string(cfg.topic_mode);
  j["audio_mode"] = to_string(cfg.audio_mode);
  j["video_dim"] = cfg.video_dim;
  j["use_pretrained_word_vectors"] = cfg.use_pretrained_word_vectors;
  j["topic_embed_dim"] = cfg.topic_embed_dim;
  j["topic_k"] = cfg.topic_k;
  j["max_decode_len"] = cfg.max_decode_len;
  j["rng_seed"] = cfg.rng_seed;
  j["attention_scoring"] = to_string(cfg.attention_scoring);
  j["caption_as_first_turn"] = cfg.caption_as_first_turn;
  j["decoder_init_from_question"] = cfg.decoder_init_from_question;
  return j.dump();
}

ModelConfig model_config_from_json_string(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig cfg;
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  auto require_enum = [&](const char* field, auto parser, auto fallback) {
    const std::string s = j.at(field).get<std::string>();
    auto v = parser(s);
    if (!v) throw std::invalid_argument(std::string("unknown ") + field + " value: " + s);
    (void)fallback;
    return *v;
  };
  cfg.attention_mode =
      require_enum("attention_mode", attention_mode_from_string, AttentionMode::none);
  cfg.topic_mode = require_enum("topic_mode", topic_mode_from_string, TopicMode::none);
  cfg.audio_mode = require_enum("audio_mode", audio_mode_from_string, AudioMode::none);
  cfg.video_dim = j.at("video_dim").get<int>();
  cfg.use_pretrained_word_vectors = j.at("use_pretrained_word_vectors").get<bool>();
  cfg.topic_embed_dim = j.at("topic_embed_dim").get<int>();
  cfg.topic_k = j.at("topic_k").get<int>();
  cfg.max_decode_len = j.at("max_decode_len").get<int>();
  cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  cfg.attention_scoring =
      require_enum("attention_scoring", attention_scoring_from_string, AttentionScoring::additive);
  cfg.caption_as_first_turn = j.at("caption_as_first_turn").get<bool>();
  cfg.decoder_init_from_question = j.at("decoder_init_from_question").get<bool>();
  return cfg;
}

namespace {
constexpr char kCheckpointMagic[9] = "AVSDCKP1";
}

void save_checkpoint(const Parameters& params, const std::string& rng_state,
                     const std::string& path) {
  nlohmann::json header;
  header["config"] = nlohmann::json::parse(model_config_to_json_string(params.config));
  header["rng_state"] = rng_state;
  header["arrays"] = nlohmann::json::array();
  for (const auto& a : params.store.arrays())
    header["arrays"].push_back(
        {{"name", a.name}, {"rows", a.value.rows()}, {"cols", a.value.cols()}});
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& a : params.store.arrays())
    out.write(reinterpret_cast<const char*>(a.value.data()),
              static_cast<std::streamsize>(sizeof(double) * a.value.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error(path + ": not an avsd checkpoint (bad magic)");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error(path + ": truncated checkpoint header");
  const nlohmann::json header = nlohmann::json::parse(htext);

  Checkpoint ck;
  ck.params = init_parameters(model_config_from_json_string(header.at("config").dump()),
                              header.at("config").at("rng_seed").get<std::uint64_t>());
  ck.rng_state = header.at("rng_state").get<std::string>();

  const auto& arrays = header.at("arrays");
  if (arrays.size() != ck.params.store.arrays().size())
    throw std::runtime_error(path + ": array count mismatch against config");
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto& dst = ck.params.store.arrays()[i];
    if (arrays[i].at("name").get<std::string>() != dst.name ||
        arrays[i].at("rows").get<Eigen::Index>() != dst.value.rows() ||
        arrays[i].at("cols").get<Eigen::Index>() != dst.value.cols())
      throw std::runtime_error(path + ": array layout mismatch at \"" + dst.name + "\"");
    in.read(reinterpret_cast<char*>(dst.value.data()),
            static_cast<std::streamsize>(sizeof(double) * dst.value.size()));
  }
  if (!in) throw std::runtime_error(path + ": truncated checkpoint payload");
  return ck;
}

std::vector<std::vector<int>> build_history_ids(const corpus::Dialog& dialog, int turn_index,
                                                const corpus::Vocabulary& vocab,
                                                bool caption_as_first_turn) {
  std::vector<std::vector<int>> history;
  if (caption_as_first_turn) history.push_back(corpus::encode(dialog.caption, vocab));
  for (int t = 0; t < turn_index; ++t) {
    const auto& turn = dialog.turns[static_cast<std::size_t>(t)];
    auto ids = corpus::encode(turn.question, vocab);
    const auto answer_ids = corpus::encode(turn.answer, vocab);
    ids.insert(ids.end(), answer_ids.begin(), answer_ids.end());
    history.push_back(std::move(ids));
  }
  return history;
}

}  // namespace avsd::model
