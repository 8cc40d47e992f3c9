#include "partstyle/prompt.hpp"

#include <fmt/format.h>

#include <sstream>

namespace partstyle {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> PromptSpec::part_phrases() const {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.part_phrase);
  return out;
}

std::vector<std::string> PromptSpec::style_phrases() const {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.style);
  return out;
}

std::vector<std::string> PromptSpec::pair_texts() const {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.text);
  return out;
}

PromptSpec parse_prompt(const std::string& text, const PartitionedMesh& mesh) {
  PromptSpec spec;
  spec.text = trim(text);
  std::stringstream ss(text);
  std::string item;
  std::vector<int> seen(mesh.part_count(), -1);
  while (std::getline(ss, item, ',')) {
    const std::string pair = trim(item);
    if (pair.empty()) throw InputError(fmt::format("prompt '{}' has an empty phrasal pair", spec.text));
    const auto m = match_part_suffix(mesh, pair);
    if (!m) {
      throw InputError(
          fmt::format("'{}' does not end in a known part; known parts: {}", pair, describe_part_vocabulary(mesh)));
    }
    if (m->style.empty()) throw InputError(fmt::format("'{}' names a part but no style", pair));
    if (seen[m->part] >= 0) {
      throw InputError(fmt::format("part '{}' appears twice in the prompt ('{}' and '{}')", mesh.part_names[m->part],
                                   spec.pairs[seen[m->part]].text, pair));
    }
    seen[m->part] = static_cast<int>(spec.pairs.size());
    spec.pairs.push_back({m->style, m->part_phrase, m->part, m->style + " " + m->part_phrase});
  }
  if (spec.pairs.empty()) throw InputError("prompt is empty");
  return spec;
}

std::vector<std::string> style_phrases_by_part(const PromptSpec& prompt, int num_parts) {
  std::vector<std::string> out(num_parts);
  for (const auto& p : prompt.pairs) {
    if (p.part >= 0 && p.part < num_parts) out[p.part] = p.style;
  }
  return out;
}

}  // namespace partstyle
