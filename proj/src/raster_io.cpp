#include "deepmerge/raster_io.hpp"

#include <png.h>

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <json.hpp>

#include "deepmerge/error.hpp"

namespace deepmerge {

namespace {

constexpr std::uint64_t kMaxPixels = 1ull << 31;

void check_dimensions(std::uint64_t width, std::uint64_t height, std::uint64_t bands) {
  if (width == 0 || height == 0) throw Error("malformed header: zero dimension");
  if (width > (1u << 24) || height > (1u << 24) || width * height > kMaxPixels ||
      width * height * bands > kMaxPixels * 4) {
    throw Error("dimension overflow");
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

bool has_png_signature(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// --- PNM -------------------------------------------------------------------

Raster decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::uint64_t {
    skip_space();
    if (pos >= bytes.size()) throw Error("unexpected EOF");
    if (!std::isdigit(bytes[pos])) throw Error("malformed header");
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > std::numeric_limits<std::uint32_t>::max()) throw Error("dimension overflow");
    }
    return v;
  };
  if (bytes.size() < 2) throw Error("unexpected EOF");
  if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) throw Error("malformed header: not P5/P6");
  const int bands = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const std::uint64_t width = read_int();
  const std::uint64_t height = read_int();
  const std::uint64_t maxval = read_int();
  if (maxval == 0) throw Error("malformed header: maxval");
  if (maxval != 255) throw Error("unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  check_dimensions(width, height, bands);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error("malformed header");
  ++pos;
  Raster r(static_cast<int>(width), static_cast<int>(height), bands);
  if (bytes.size() - pos < r.data.size()) throw Error("unexpected EOF");
  std::memcpy(r.data.data(), bytes.data() + pos, r.data.size());
  return r;
}

std::vector<std::uint8_t> encode_pnm(const Raster& raster) {
  if (raster.bands != 1 && raster.bands != 3) throw Error("PNM output needs 1 or 3 bands");
  const std::string header = std::string(raster.bands == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.data.begin(), raster.data.end());
  return out;
}

// --- PNG -------------------------------------------------------------------

Raster decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(std::string("malformed PNG: ") + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error("unsupported bit depth (16-bit PNG)");
  }
  int bands = 0;
  const bool alpha = image.format & PNG_FORMAT_FLAG_ALPHA;
  if (image.format & PNG_FORMAT_FLAG_COLOR) {
    image.format = alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
    bands = alpha ? 4 : 3;
  } else {
    image.format = alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY;
    bands = alpha ? 2 : 1;
  }
  try {
    check_dimensions(image.width, image.height, bands);
  } catch (...) {
    png_image_free(&image);
    throw;
  }
  Raster r(static_cast<int>(image.width), static_cast<int>(image.height), bands);
  if (!png_image_finish_read(&image, nullptr, r.data.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    if (msg.find("EOF") != std::string::npos || msg.find("Not enough") != std::string::npos ||
        msg.find("truncated") != std::string::npos) {
      throw Error("unexpected EOF");
    }
    throw Error("malformed PNG: " + msg);
  }
  return r;
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  switch (raster.bands) {
    case 1: image.format = PNG_FORMAT_GRAY; break;
    case 2: image.format = PNG_FORMAT_GA; break;
    case 3: image.format = PNG_FORMAT_RGB; break;
    case 4: image.format = PNG_FORMAT_RGBA; break;
    default: throw Error("PNG output needs 1-4 bands");
  }
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, raster.data.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.data.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Raster load_raster(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (has_png_signature(bytes)) return decode_png(bytes);
  return decode_pnm(bytes);
}

void save_raster(const Raster& raster, const std::filesystem::path& path) {
  if (path.extension() == ".png") {
    write_file(path, encode_png(raster));
  } else {
    write_file(path, encode_pnm(raster));
  }
}

// --- SEGR ------------------------------------------------------------------

std::vector<std::uint8_t> encode_segr(int width, int height, const std::vector<std::uint32_t>& labels) {
  std::vector<std::uint8_t> out{'S', 'E', 'G', 'R'};
  out.reserve(12 + labels.size() * 4);
  put_u32(out, static_cast<std::uint32_t>(width));
  put_u32(out, static_cast<std::uint32_t>(height));
  for (std::uint32_t l : labels) put_u32(out, l);
  return out;
}

LabelImage decode_segr(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SEGR", 4) != 0) throw Error("magic mismatch: not a SEGR file");
  if (bytes.size() < 12) throw Error("unexpected EOF");
  const std::uint32_t width = get_u32(bytes.data() + 4);
  const std::uint32_t height = get_u32(bytes.data() + 8);
  check_dimensions(width, height, 4);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - 12 < n * 4) throw Error("unexpected EOF");
  LabelImage img{static_cast<int>(width), static_cast<int>(height), std::vector<std::uint32_t>(n)};
  for (std::size_t i = 0; i < n; ++i) img.labels[i] = get_u32(bytes.data() + 12 + 4 * i);
  return img;
}

void save_segment_map(const SegmentMap& map, const std::filesystem::path& path) {
  std::vector<std::uint32_t> labels(map.labels().begin(), map.labels().end());
  if (std::string why = check_segment_labels(map.width(), map.height(), labels); !why.empty()) {
    throw Error("refusing to save segment map: " + why);
  }
  write_file(path, encode_segr(map.width(), map.height(), labels));
}

void save_label_image(const LabelImage& image, const std::filesystem::path& path) {
  write_file(path, encode_segr(image.width, image.height, image.labels));
}

LabelImage load_label_image(const std::filesystem::path& path) { return decode_segr(read_file(path)); }

SegmentMap load_segment_map(const std::filesystem::path& path) {
  LabelImage img = load_label_image(path);
  return SegmentMap(img.width, img.height, std::move(img.labels));
}

// --- reference polygons ----------------------------------------------------

namespace {

nlohmann::json ring_to_json(const Ring& ring) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Point2& p : ring) arr.push_back({p.x, p.y});
  return arr;
}

Ring ring_from_json(const nlohmann::json& arr) {
  Ring ring;
  for (const auto& v : arr) {
    if (!v.is_array() || v.size() != 2) throw Error("polygon vertex must be [x, y]");
    ring.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  // Drop an explicit closing vertex.
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) throw Error("degenerate ring (<3 vertices)");
  return ring;
}

}  // namespace

std::string references_to_json(const ReferenceSet& refs) {
  nlohmann::json polys = nlohmann::json::array();
  for (const Polygon& p : refs.polygons) {
    nlohmann::json j{{"id", p.id}, {"ring", ring_to_json(p.exterior)}};
    if (!p.holes.empty()) {
      nlohmann::json holes = nlohmann::json::array();
      for (const Ring& h : p.holes) holes.push_back(ring_to_json(h));
      j["holes"] = std::move(holes);
    }
    polys.push_back(std::move(j));
  }
  return nlohmann::json{{"polygons", std::move(polys)}}.dump();
}

ReferenceSet references_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("reference JSON: ") + e.what());
  }
  ReferenceSet refs;
  try {
    for (const auto& p : doc.at("polygons")) {
      Polygon poly;
      poly.id = p.at("id").get<std::int64_t>();
      poly.exterior = ring_from_json(p.at("ring"));
      if (p.contains("holes")) {
        for (const auto& h : p.at("holes")) poly.holes.push_back(ring_from_json(h));
      }
      refs.polygons.push_back(std::move(poly));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("reference JSON: ") + e.what());
  }
  return refs;
}

ReferenceSet load_references(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return references_from_json(std::string(bytes.begin(), bytes.end()));
}

void save_references(const ReferenceSet& refs, const std::filesystem::path& path) {
  write_text(path, references_to_json(refs));
}

}  // namespace deepmerge
