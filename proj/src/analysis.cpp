#include "avsd/analysis.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace avsd::analysis {

KeywordSets KeywordSets::defaults() {
  KeywordSets ks;
  // VisDial starter list plus common AVSD first-word variations.
  ks.binary_question_starters = {"do",   "did",  "have", "has",  "is",    "are",
                                 "was",  "were", "can",  "could", "does", "had",
                                 "will", "would", "should", "shall", "am"};
  ks.yes_markers = {"yes", "yeah", "yep", "yup"};
  ks.no_markers = {"no", "nope", "nah"};
  ks.pronouns = {"he",   "she",  "his",   "her",  "it",    "their", "they",
                 "this", "that", "those", "him",  "hers",  "its",   "them",
                 "these", "theirs", "himself", "herself", "itself", "themselves"};
  ks.audio_keywords = {"audio", "sound", "hear",  "noise", "voice",
                       "music", "speak", "listen", "loud",  "volume",
                       "sing",  "song",  "talk"};
  return ks;
}

KeywordSets KeywordSets::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open keyword config: " + path);
  nlohmann::json j;
  in >> j;
  auto read_set = [&](const char* field) {
    if (!j.contains(field) || !j[field].is_array())
      throw std::runtime_error(path + ": keyword config missing array \"" + std::string(field) +
                               "\"");
    std::set<std::string> out;
    for (const auto& s : j[field]) out.insert(s.get<std::string>());
    return out;
  };
  KeywordSets ks;
  ks.binary_question_starters = read_set("binary_question_starters");
  ks.yes_markers = read_set("binary_answer_markers_yes");
  ks.no_markers = read_set("binary_answer_markers_no");
  ks.pronouns = read_set("pronouns");
  for (const auto& s : read_set("audio_keywords")) ks.audio_keywords.push_back(s);
  return ks;
}

void KeywordSets::save(const std::string& path) const {
  nlohmann::json j;
  j["binary_question_starters"] = binary_question_starters;
  j["binary_answer_markers_yes"] = yes_markers;
  j["binary_answer_markers_no"] = no_markers;
  j["pronouns"] = pronouns;
  j["audio_keywords"] = audio_keywords;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write keyword config: " + path);
  out << j.dump(2) << "\n";
}

LengthStats length_stats(const std::vector<int>& token_counts) {
  if (token_counts.empty()) throw std::invalid_argument("length_stats: empty utterance list");
  LengthStats s;
  s.n = static_cast<long>(token_counts.size());
  s.min = token_counts[0];
  s.max = token_counts[0];
  double sum = 0.0;
  for (int c : token_counts) {
    sum += c;
    s.min = std::min(s.min, c);
    s.max = std::max(s.max, c);
  }
  s.mean = sum / static_cast<double>(s.n);
  double sq = 0.0;
  for (int c : token_counts) sq += (c - s.mean) * (c - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(s.n));
  return s;
}

LengthStats length_stats(const std::vector<const corpus::Utterance*>& utterances) {
  std::vector<int> counts;
  counts.reserve(utterances.size());
  for (const auto* u : utterances) counts.push_back(static_cast<int>(u->tokens.size()));
  return length_stats(counts);
}

bool is_binary_question(const corpus::Utterance& q, const KeywordSets& ks) {
  if (q.tokens.empty()) return false;
  return ks.binary_question_starters.count(q.tokens.front()) > 0;
}

BinaryAnswer is_binary_answer(const corpus::Utterance& a, const KeywordSets& ks) {
  for (const auto& tok : a.tokens) {
    if (ks.yes_markers.count(tok)) return {true, true};
    if (ks.no_markers.count(tok)) return {true, false};
  }
  return {false, std::nullopt};
}

bool has_coreference(const corpus::Utterance& u, const KeywordSets& ks) {
  for (const auto& tok : u.tokens)
    if (ks.pronouns.count(tok)) return true;
  return false;
}

bool is_audio_related(const corpus::Utterance& u, const KeywordSets& ks) {
  for (const auto& tok : u.tokens)
    for (const auto& kw : ks.audio_keywords)
      if (tok.find(kw) != std::string::npos) return true;
  return false;
}

long SubsetMask::total_turns() const {
  long n = 0;
  for (const auto& d : flags) n += static_cast<long>(d.size());
  return n;
}

SubsetMask make_subsets(const std::vector<corpus::Dialog>& dialogs, const KeywordSets& ks) {
  SubsetMask mask;
  mask.flags.reserve(dialogs.size());
  for (const auto& d : dialogs) {
    std::vector<TurnFlags> per_turn;
    per_turn.reserve(d.turns.size());
    for (const auto& turn : d.turns) {
      TurnFlags f;
      f.binary_question = is_binary_question(turn.question, ks);
      const auto ba = is_binary_answer(turn.answer, ks);
      f.binary_answer = ba.binary;
      f.answer_yes = ba.yes;
      f.coref_q = has_coreference(turn.question, ks);
      f.coref_a = has_coreference(turn.answer, ks);
      f.audio_q = is_audio_related(turn.question, ks);
      f.audio_a = is_audio_related(turn.answer, ks);
      per_turn.push_back(f);
    }
    mask.flags.push_back(std::move(per_turn));
  }
  return mask;
}

SubsetCounts count_subsets(const SubsetMask& mask) {
  SubsetCounts c;
  for (const auto& d : mask.flags) {
    for (const auto& f : d) {
      ++c.turns;
      c.binary_q += f.binary_question;
      c.binary_a += f.binary_answer;
      if (f.answer_yes && *f.answer_yes) ++c.yes_answers;
      c.coref_q += f.coref_q;
      c.coref_a += f.coref_a;
      c.audio_q += f.audio_q;
      c.audio_a += f.audio_a;
    }
  }
  return c;
}

}  // namespace avsd::analysis
