#include "avsd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "avsd/rng.hpp"
#include "json.hpp"

namespace avsd::corpus {

namespace {

bool is_detachable_punct(char c) {
  switch (c) {
    case '.':
    case ',':
    case '?':
    case '!':
    case '\'':
    case ';':
    case ':':
    case '"':
      return true;
    default:
      return false;
  }
}

std::string lower(const std::string& s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// line/column of a byte offset, for parse diagnostics
std::pair<int, int> line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream is(lower(text));
  std::string chunk;
  while (is >> chunk) {
    std::size_t b = 0, e = chunk.size();
    while (b < e && is_detachable_punct(chunk[b])) {
      tokens.emplace_back(1, chunk[b]);
      ++b;
    }
    std::size_t core_end = e;
    while (core_end > b && is_detachable_punct(chunk[core_end - 1])) --core_end;
    if (core_end > b) tokens.push_back(chunk.substr(b, core_end - b));
    for (std::size_t i = core_end; i < e; ++i) tokens.emplace_back(1, chunk[i]);
  }
  return tokens;
}

Utterance make_utterance(const std::string& raw) { return Utterance{raw, tokenize(raw)}; }

std::vector<Dialog> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw std::runtime_error(path + ": JSON parse error at line " + std::to_string(line) +
                             ", column " + std::to_string(col) + ": " + e.what());
  }

  if (!root.is_object() || !root.contains("dialogs") || !root["dialogs"].is_array())
    throw std::runtime_error(path + ": schema error: top-level \"dialogs\" array is required");

  std::vector<Dialog> dialogs;
  const auto& arr = root["dialogs"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& entry = arr[i];
    auto require = [&](const char* field, const nlohmann::json& obj) -> const nlohmann::json& {
      if (!obj.contains(field))
        throw std::runtime_error(path + ": schema error at dialog " + std::to_string(i) +
                                 ": missing field \"" + field + "\"");
      return obj[field];
    };
    Dialog d;
    d.video_id = require("image_id", entry).get<std::string>();
    if (d.video_id.empty())
      throw std::runtime_error(path + ": schema error at dialog " + std::to_string(i) +
                               ": empty \"image_id\"");
    d.caption = make_utterance(require("caption", entry).get<std::string>());
    const auto& turns = require("dialog", entry);
    if (!turns.is_array() || turns.empty())
      throw std::runtime_error(path + ": schema error at dialog " + std::to_string(i) +
                               ": \"dialog\" must be a nonempty array");
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const auto& turn = turns[t];
      auto require_turn = [&](const char* field) -> const nlohmann::json& {
        if (!turn.contains(field))
          throw std::runtime_error(path + ": schema error at dialog " + std::to_string(i) +
                                   ", turn " + std::to_string(t) + ": missing field \"" + field +
                                   "\"");
        return turn[field];
      };
      DialogTurn dt;
      dt.question = make_utterance(require_turn("question").get<std::string>());
      dt.answer = make_utterance(require_turn("answer").get<std::string>());
      dt.turn_index = static_cast<int>(t);
      d.turns.push_back(std::move(dt));
    }
    dialogs.push_back(std::move(d));
  }
  return dialogs;
}

Vocabulary Vocabulary::build(const std::vector<Dialog>& dialogs, int min_frequency) {
  if (min_frequency < 1) throw std::invalid_argument("min_frequency must be >= 1");
  std::map<std::string, long> freq;  // ordered map keeps tie order deterministic
  for (const auto& d : dialogs) {
    for (const auto& tok : d.caption.tokens) ++freq[tok];
    for (const auto& turn : d.turns) {
      for (const auto& tok : turn.question.tokens) ++freq[tok];
      for (const auto& tok : turn.answer.tokens) ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [tok, n] : freq)
    if (n >= min_frequency) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.min_frequency_ = min_frequency;
  v.id_to_token_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
  for (int i = 0; i < 4; ++i) v.token_to_id_[v.id_to_token_[i]] = i;
  for (const auto& [tok, n] : kept) {
    (void)n;
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               bool add_bos_eos) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + (add_bos_eos ? 2 : 0));
  if (add_bos_eos) ids.push_back(Vocabulary::kBos);
  for (const auto& tok : tokens) ids.push_back(vocab.id(tok));
  if (add_bos_eos) ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<int> encode(const Utterance& utt, const Vocabulary& vocab, bool add_bos_eos) {
  return encode_tokens(utt.tokens, vocab, add_bos_eos);
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

namespace {

std::vector<Eigen::VectorXd> read_frame_file(const std::string& path, int* dim_out) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("feature file not found: " + path);
  int n_frames = 0, dim = 0;
  if (!(in >> n_frames >> dim) || n_frames < 1 || dim < 1)
    throw std::runtime_error(path + ": bad header, expected \"<n_frames> <dim>\"");
  std::vector<Eigen::VectorXd> frames;
  frames.reserve(static_cast<std::size_t>(n_frames));
  std::string line;
  std::getline(in, line);  // rest of header line
  for (int f = 0; f < n_frames; ++f) {
    if (!std::getline(in, line))
      throw std::runtime_error(path + ": expected " + std::to_string(n_frames) +
                               " frames, file ends at frame " + std::to_string(f));
    std::istringstream ls(line);
    std::vector<double> vals;
    double x;
    while (ls >> x) vals.push_back(x);
    if (static_cast<int>(vals.size()) != dim)
      throw std::runtime_error(path + ": frame " + std::to_string(f) + " has " +
                               std::to_string(vals.size()) + " values, header dim is " +
                               std::to_string(dim));
    frames.push_back(Eigen::Map<Eigen::VectorXd>(vals.data(), dim));
  }
  *dim_out = dim;
  return frames;
}

}  // namespace

FeatureBundle load_features(const std::string& dir, const std::string& video_id) {
  FeatureBundle b;
  const std::string audio_path = dir + "/" + video_id + ".audio.txt";
  const std::string video_path = dir + "/" + video_id + ".video.txt";
  std::ifstream probe_a(audio_path), probe_v(video_path);
  if (!probe_a && !probe_v)
    throw std::runtime_error("no feature files for video_id \"" + video_id + "\" under " + dir);
  if (probe_a) b.audio_frames = read_frame_file(audio_path, &b.d_a);
  if (probe_v) b.video_frames = read_frame_file(video_path, &b.d_v);
  return b;
}

FeatureBundle synthesize_features(const std::string& video_id, std::uint64_t seed, int d_a,
                                  int d_v, int n_frames) {
  if (n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
  FeatureBundle b;
  b.d_a = d_a;
  b.d_v = d_v;
  Rng rng(mix_seed(seed, "features:" + video_id));
  for (int f = 0; f < n_frames; ++f) {
    if (d_a > 0) {
      Eigen::VectorXd frame(d_a);
      for (int i = 0; i < d_a; ++i) frame[i] = rng.gaussian();
      if (d_a == 50) {
        // classifier-style softmax frames
        const double m = frame.maxCoeff();
        frame = (frame.array() - m).exp();
        frame /= frame.sum();
      }
      b.audio_frames.push_back(std::move(frame));
    }
    if (d_v > 0) {
      Eigen::VectorXd frame(d_v);
      for (int i = 0; i < d_v; ++i) frame[i] = rng.gaussian();
      b.video_frames.push_back(std::move(frame));
    }
  }
  return b;
}

WordVectorTable load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word-vector file: " + path);
  WordVectorTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> vals;
    double x;
    while (ls >> x) vals.push_back(x);
    if (vals.empty())
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": no vector values");
    if (table.dim == 0) {
      table.dim = static_cast<int>(vals.size());
    } else if (static_cast<int>(vals.size()) != table.dim) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": dimension " +
                               std::to_string(vals.size()) + " does not match previous dimension " +
                               std::to_string(table.dim));
    }
    table.vectors[token] = Eigen::Map<Eigen::VectorXd>(vals.data(), table.dim);
  }
  return table;
}

int coverage(const WordVectorTable& table, const Vocabulary& vocab) {
  int n = 0;
  for (int i = 4; i < vocab.size(); ++i)
    if (table.vectors.count(vocab.token(i))) ++n;
  return n;
}

}  // namespace avsd::corpus
