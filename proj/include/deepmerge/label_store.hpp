#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace deepmerge {

struct LabelRecord {
  std::string tile;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  bool positive = false;
  std::int64_t timestamp_ms = 0;
  std::string annotator;

  std::string to_json_line() const;
  static LabelRecord from_json_line(const std::string& line);
};

// Append-only journal of label records. Undo appends a tombstone that
// retracts the newest live record; the export is the net ledger. Every
// mutation is written and flushed before it returns.
class LabelStore {
 public:
  explicit LabelStore(std::filesystem::path journal);

  LabelRecord append(LabelRecord record);
  // False when there is nothing left to undo.
  bool undo();
  std::vector<LabelRecord> live() const;
  std::string export_jsonl() const;

 private:
  void write_line(const std::string& line);

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<LabelRecord> records_;
  std::vector<char> retracted_;
};

// Reads a label export (or journal) into records; tombstones are applied.
std::vector<LabelRecord> read_labels(const std::filesystem::path& path);

}  // namespace deepmerge
