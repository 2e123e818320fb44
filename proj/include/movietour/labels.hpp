#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace movietour {

struct Destination {
  int index = 0;
  std::string name;
  std::string country;

  friend bool operator==(const Destination&, const Destination&) = default;
};

/// Ordered class list. Indices are contiguous from 0 and names are unique.
class LabelMap {
 public:
  LabelMap() = default;
  /// Throws ConfigError if empty, non-contiguous or names repeat.
  explicit LabelMap(std::vector<Destination> entries);

  /// The fourteen destinations of the MovieTour corpus, spelled as published.
  static const LabelMap& movietour();

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const Destination& at(std::size_t index) const { return entries_.at(index); }
  const std::vector<Destination>& entries() const noexcept { return entries_; }
  std::optional<int> find(std::string_view name) const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::vector<Destination> entries_;
};

}  // namespace movietour
