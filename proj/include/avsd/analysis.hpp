#ifndef AVSD_ANALYSIS_HPP
#define AVSD_ANALYSIS_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avsd/corpus.hpp"

namespace avsd::analysis {

// Keyword lists live in config files so the sets can be expanded without
// code changes. Answer markers are split by polarity; the binary marker set
// is the union of the two.
struct KeywordSets {
  std::set<std::string> binary_question_starters;
  std::set<std::string> yes_markers;
  std::set<std::string> no_markers;
  std::set<std::string> pronouns;
  std::vector<std::string> audio_keywords;  // matched as substrings, "hear" hits "heard"

  static KeywordSets defaults();
  static KeywordSets load(const std::string& path);
  void save(const std::string& path) const;
};

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  int min = 0;
  int max = 0;
  long n = 0;
};

LengthStats length_stats(const std::vector<const corpus::Utterance*>& utterances);
LengthStats length_stats(const std::vector<int>& token_counts);

/// First token in the starter set. Empty utterance -> false.
bool is_binary_question(const corpus::Utterance& q, const KeywordSets& ks);

struct BinaryAnswer {
  bool binary = false;
  std::optional<bool> yes;  // defined only when binary; first marker wins
};

BinaryAnswer is_binary_answer(const corpus::Utterance& a, const KeywordSets& ks);

bool has_coreference(const corpus::Utterance& u, const KeywordSets& ks);

bool is_audio_related(const corpus::Utterance& u, const KeywordSets& ks);

struct TurnFlags {
  bool binary_question = false;
  bool binary_answer = false;
  std::optional<bool> answer_yes;  // set iff binary_answer
  bool coref_q = false;
  bool coref_a = false;
  bool audio_q = false;
  bool audio_a = false;
};

struct SubsetMask {
  // flags[d][t] for dialog d, turn t
  std::vector<std::vector<TurnFlags>> flags;
  long total_turns() const;
};

SubsetMask make_subsets(const std::vector<corpus::Dialog>& dialogs, const KeywordSets& ks);

/// Aggregate counts over a mask, for the analyze report.
struct SubsetCounts {
  long turns = 0;
  long binary_q = 0;
  long binary_a = 0;
  long yes_answers = 0;  // among binary answers
  long coref_q = 0;
  long coref_a = 0;
  long audio_q = 0;
  long audio_a = 0;
};

SubsetCounts count_subsets(const SubsetMask& mask);

}  // namespace avsd::analysis

#endif
