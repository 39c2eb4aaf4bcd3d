#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepmerge/polygon.hpp"
#include "deepmerge/raster.hpp"

namespace deepmerge {

// Portable images: binary PGM/PPM (P5/P6, maxval 255) and 8-bit PNG.
// The format is chosen from the file contents on load and from the
// extension on save (".png" or anything else for PNM).
Raster load_raster(const std::filesystem::path& path);
void save_raster(const Raster& raster, const std::filesystem::path& path);

Raster decode_pnm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pnm(const Raster& raster);
Raster decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Raster& raster);

// "SEGR" label rasters: magic, u32 width, u32 height, width*height u32
// labels, all little-endian.
std::vector<std::uint8_t> encode_segr(int width, int height, const std::vector<std::uint32_t>& labels);
LabelImage decode_segr(const std::vector<std::uint8_t>& bytes);

// Rejects maps that violate the SegmentMap invariants.
void save_segment_map(const SegmentMap& map, const std::filesystem::path& path);
void save_label_image(const LabelImage& image, const std::filesystem::path& path);
SegmentMap load_segment_map(const std::filesystem::path& path);
LabelImage load_label_image(const std::filesystem::path& path);

// {"polygons":[{"id":int,"ring":[[x,y],...],"holes":[[[x,y],...],...]}]}
ReferenceSet load_references(const std::filesystem::path& path);
void save_references(const ReferenceSet& refs, const std::filesystem::path& path);
std::string references_to_json(const ReferenceSet& refs);
ReferenceSet references_from_json(const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace deepmerge
