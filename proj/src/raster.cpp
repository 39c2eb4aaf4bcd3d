#include "deepmerge/raster.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <unordered_map>

#include "deepmerge/error.hpp"

namespace deepmerge {

Raster::Raster(int w, int h, int b) : width(w), height(h), bands(b) {
  if (w <= 0 || h <= 0 || b <= 0) throw Error("raster dimensions must be positive");
  data.assign(static_cast<std::size_t>(w) * h * b, 0);
}

namespace {

constexpr std::uint32_t kUnvisited = std::numeric_limits<std::uint32_t>::max();

// Flood-fills 4-connected runs of equal labels; writes component ids into
// `component` and returns the number of components.
std::uint32_t label_components(int width, int height, std::span<const std::uint32_t> labels,
                               std::vector<std::uint32_t>& component) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  component.assign(n, kUnvisited);
  std::vector<std::uint32_t> stack;
  std::uint32_t next = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (component[start] != kUnvisited) continue;
    const std::uint32_t value = labels[start];
    component[start] = next;
    stack.push_back(static_cast<std::uint32_t>(start));
    while (!stack.empty()) {
      const std::uint32_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % width);
      const int y = static_cast<int>(p / width);
      auto visit = [&](int nx, int ny) {
        const std::size_t q = static_cast<std::size_t>(ny) * width + nx;
        if (component[q] == kUnvisited && labels[q] == value) {
          component[q] = next;
          stack.push_back(static_cast<std::uint32_t>(q));
        }
      };
      if (x > 0) visit(x - 1, y);
      if (x + 1 < width) visit(x + 1, y);
      if (y > 0) visit(x, y - 1);
      if (y + 1 < height) visit(x, y + 1);
    }
    ++next;
  }
  return next;
}

}  // namespace

std::string check_segment_labels(int width, int height, std::span<const std::uint32_t> labels) {
  if (width <= 0 || height <= 0) return "segment map dimensions must be positive";
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (labels.size() != n) return "label count does not match dimensions";
  const std::uint32_t max_label = *std::max_element(labels.begin(), labels.end());
  if (max_label >= n) return "labels not dense (label " + std::to_string(max_label) + ")";
  std::vector<char> seen(static_cast<std::size_t>(max_label) + 1, 0);
  for (std::uint32_t l : labels) seen[l] = 1;
  for (std::size_t l = 0; l < seen.size(); ++l) {
    if (!seen[l]) return "labels not dense (missing " + std::to_string(l) + ")";
  }
  std::vector<std::uint32_t> component;
  const std::uint32_t components = label_components(width, height, labels, component);
  if (components != max_label + 1) return "labels not 4-connected";
  return {};
}

SegmentMap::SegmentMap(int width, int height, std::vector<std::uint32_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (std::string why = check_segment_labels(width_, height_, labels_); !why.empty()) {
    throw Error("invalid segment map: " + why);
  }
  count_ = *std::max_element(labels_.begin(), labels_.end()) + 1;
}

std::vector<std::vector<std::uint32_t>> SegmentMap::pixel_lists() const {
  std::vector<std::vector<std::uint32_t>> lists(count_);
  for (std::size_t i = 0; i < labels_.size(); ++i) lists[labels_[i]].push_back(static_cast<std::uint32_t>(i));
  return lists;
}

std::vector<std::uint64_t> SegmentMap::areas() const {
  std::vector<std::uint64_t> a(count_, 0);
  for (std::uint32_t l : labels_) ++a[l];
  return a;
}

SegmentMap relabel_connected(const LabelImage& image) {
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  if (image.width <= 0 || image.height <= 0 || image.labels.size() != n) {
    throw Error("label image dimensions do not match its data");
  }
  std::vector<std::uint32_t> component;
  label_components(image.width, image.height, image.labels, component);
  return SegmentMap(image.width, image.height, std::move(component));
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> adjacent_pairs(const SegmentMap& map) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  const int w = map.width();
  const int h = map.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t a = map.label(x, y);
      if (x + 1 < w) {
        const std::uint32_t b = map.label(x + 1, y);
        if (a != b) pairs.emplace_back(std::min(a, b), std::max(a, b));
      }
      if (y + 1 < h) {
        const std::uint32_t b = map.label(x, y + 1);
        if (a != b) pairs.emplace_back(std::min(a, b), std::max(a, b));
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

bool same_partition(const SegmentMap& a, const SegmentMap& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.count() != b.count()) return false;
  std::vector<std::uint32_t> forward(a.count(), kUnvisited);
  std::vector<std::uint32_t> backward(b.count(), kUnvisited);
  for (std::size_t i = 0; i < a.labels().size(); ++i) {
    const std::uint32_t la = a.labels()[i];
    const std::uint32_t lb = b.labels()[i];
    if (forward[la] == kUnvisited && backward[lb] == kUnvisited) {
      forward[la] = lb;
      backward[lb] = la;
    } else if (forward[la] != lb || backward[lb] != la) {
      return false;
    }
  }
  return true;
}

}  // namespace deepmerge
