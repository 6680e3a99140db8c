#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pipa {

inline constexpr int kIgnoreIndex = 255;

/// H x W integer class map, row-major. Value kIgnoreIndex marks pixels that
/// never contribute to losses or metrics.
struct LabelMap {
  int h = 0, w = 0;
  std::vector<std::uint16_t> v;

  LabelMap() = default;
  LabelMap(int height, int width, std::uint16_t fill = 0)
      : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {}

  std::uint16_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  std::uint16_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  std::size_t size() const { return v.size(); }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

enum class Domain { source, target };
enum class Split { train, eval };

std::string to_string(Domain d);
std::string to_string(Split s);
Domain domain_from_string(const std::string& s);
Split split_from_string(const std::string& s);

enum class Scenario { static_scene, video };

}  // namespace pipa
