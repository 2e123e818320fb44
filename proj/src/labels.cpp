#include "movietour/labels.hpp"

#include <set>

#include <fmt/format.h>

#include "movietour/errors.hpp"

namespace movietour {

LabelMap::LabelMap(std::vector<Destination> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw ConfigError("label map must not be empty");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].index != static_cast<int>(i)) {
      throw ConfigError(fmt::format("label map index {} found at position {}", entries_[i].index, i));
    }
    if (entries_[i].name.empty()) throw ConfigError(fmt::format("label {} has an empty name", i));
    if (!seen.insert(entries_[i].name).second) {
      throw ConfigError(fmt::format("label name \"{}\" appears more than once", entries_[i].name));
    }
  }
}

const LabelMap& LabelMap::movietour() {
  static const LabelMap table({
      {0, "Bragatheeswarar Temple", "India"},
      {1, "Giza Plateau", "Egypt"},
      {2, "Lake Pichhola", "India"},
      {3, "Machu Picchu", "Peru"},
      {4, "Mahabalipuram", "India"},
      {5, "Marina Beach", "India"},
      {6, "Meenakshiamman Temple", "India"},
      {7, "Nilgiri Railway", "India"},
      {8, "Taj Mahal", "India"},
      {9, "Pulpit Rock", "Norway"},
      {10, "Troll Tongue", "Norway"},
      {11, "Palace of LostCity", "South Africa"},
      {12, "Petra", "Jordan"},
      {13, "Leaning Tower of Pisa", "Italy"},
  });
  return table;
}

std::optional<int> LabelMap::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.index;
  }
  return std::nullopt;
}

}  // namespace movietour
