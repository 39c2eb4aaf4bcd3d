#include "deepmerge/label_store.hpp"

#include <chrono>
#include <fstream>
#include <json.hpp>

#include "deepmerge/error.hpp"

namespace deepmerge {

std::string LabelRecord::to_json_line() const {
  const nlohmann::json j = {{"tile", tile},
                            {"a", a},
                            {"b", b},
                            {"label", positive ? "positive" : "negative"},
                            {"timestamp", timestamp_ms},
                            {"annotator", annotator}};
  return j.dump();
}

LabelRecord LabelRecord::from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    LabelRecord r;
    r.tile = j.at("tile").get<std::string>();
    r.a = j.at("a").get<std::uint32_t>();
    r.b = j.at("b").get<std::uint32_t>();
    const std::string label = j.at("label").get<std::string>();
    if (label != "positive" && label != "negative") throw Error("label must be positive or negative");
    r.positive = label == "positive";
    r.timestamp_ms = j.value("timestamp", std::int64_t{0});
    r.annotator = j.value("annotator", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed label record: ") + e.what());
  }
}

namespace {

bool is_tombstone(const std::string& line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  return j.is_object() && j.contains("undo");
}

}  // namespace

LabelStore::LabelStore(std::filesystem::path journal) : path_(std::move(journal)) {
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (is_tombstone(line)) {
      for (std::size_t i = records_.size(); i-- > 0;) {
        if (!retracted_[i]) {
          retracted_[i] = 1;
          break;
        }
      }
      continue;
    }
    records_.push_back(LabelRecord::from_json_line(line));
    retracted_.push_back(0);
  }
}

void LabelStore::write_line(const std::string& line) {
  std::ofstream out(path_, std::ios::app);
  out << line << '\n';
  out.flush();
  if (!out) throw Error("label journal: write failed for " + path_.string());
}

LabelRecord LabelStore::append(LabelRecord record) {
  if (record.a == record.b) throw Error("label: a pair needs two distinct segments");
  if (record.timestamp_ms == 0) {
    record.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
  }
  std::lock_guard lock(mu_);
  write_line(record.to_json_line());
  records_.push_back(record);
  retracted_.push_back(0);
  return record;
}

bool LabelStore::undo() {
  std::lock_guard lock(mu_);
  for (std::size_t i = records_.size(); i-- > 0;) {
    if (!retracted_[i]) {
      write_line(nlohmann::json{{"undo", i}}.dump());
      retracted_[i] = 1;
      return true;
    }
  }
  return false;
}

std::vector<LabelRecord> LabelStore::live() const {
  std::lock_guard lock(mu_);
  std::vector<LabelRecord> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!retracted_[i]) out.push_back(records_[i]);
  }
  return out;
}

std::string LabelStore::export_jsonl() const {
  std::string s;
  for (const auto& r : live()) s += r.to_json_line() + "\n";
  return s;
}

std::vector<LabelRecord> read_labels(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("label file not found: " + path.string());
  std::vector<LabelRecord> records;
  std::vector<char> retracted;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (is_tombstone(line)) {
      for (std::size_t i = records.size(); i-- > 0;) {
        if (!retracted[i]) {
          retracted[i] = 1;
          break;
        }
      }
      continue;
    }
    records.push_back(LabelRecord::from_json_line(line));
    retracted.push_back(0);
  }
  std::vector<LabelRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!retracted[i]) out.push_back(records[i]);
  }
  return out;
}

}  // namespace deepmerge
