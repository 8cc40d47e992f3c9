#pragma once

#include "partstyle/mesh.hpp"

#include <string>
#include <vector>

namespace partstyle {

/// One "style phrase + part phrase" unit, e.g. "gold tube".
struct PhrasalPair {
  std::string style;        // "gold"
  std::string part_phrase;  // "tube" (as written, lowercased)
  int part = -1;            // mesh part index
  std::string text;         // "gold tube"

  bool operator==(const PhrasalPair&) const = default;
};

struct PromptSpec {
  std::string text;
  std::vector<PhrasalPair> pairs;

  [[nodiscard]] std::vector<std::string> part_phrases() const;
  [[nodiscard]] std::vector<std::string> style_phrases() const;
  [[nodiscard]] std::vector<std::string> pair_texts() const;
  bool operator==(const PromptSpec&) const = default;
};

/// Splits on commas; each pair must end in a part name or synonym of `mesh`.
/// Throws InputError for an empty pair, a pair naming no part (the message
/// lists the vocabulary), a pair with no style words, or a repeated part.
PromptSpec parse_prompt(const std::string& text, const PartitionedMesh& mesh);

/// Style phrases indexed by part, for losses that look phrases up by part
/// index; parts without a pair get "".
std::vector<std::string> style_phrases_by_part(const PromptSpec& prompt, int num_parts);

}  // namespace partstyle
