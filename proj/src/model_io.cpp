#include <bit>
#include <cstring>
#include <json.hpp>

#include "deepmerge/error.hpp"
#include "deepmerge/net.hpp"
#include "deepmerge/raster_io.hpp"

namespace deepmerge {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kEmbVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, const char* what) : bytes_(bytes), what_(what) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(std::string(what_) + ": unexpected EOF");
  }
  const std::vector<std::uint8_t>& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

nlohmann::json config_json(const NetConfig& c) {
  return {{"in_bands", c.in_bands},   {"level_sides", c.level_sides}, {"tokens_side", c.tokens_side},
          {"dim", c.dim},             {"layers", c.layers},           {"heads", c.heads},
          {"mlp_dim", c.mlp_dim},     {"embed_dim", c.embed_dim},     {"feature_dim", c.feature_dim},
          {"margin", c.margin},       {"dropout", c.dropout},         {"lr", c.lr},
          {"batch", c.batch},         {"epochs", c.epochs},           {"seed", c.seed},
          {"variant", variant_name(c.variant)}};
}

NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.in_bands = j.at("in_bands");
  c.level_sides = j.at("level_sides").get<std::array<int, 4>>();
  c.tokens_side = j.at("tokens_side");
  c.dim = j.at("dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.mlp_dim = j.at("mlp_dim");
  c.embed_dim = j.at("embed_dim");
  c.feature_dim = j.at("feature_dim");
  c.margin = j.at("margin");
  c.dropout = j.at("dropout");
  c.lr = j.at("lr");
  c.batch = j.at("batch");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  c.variant = parse_variant(j.at("variant"));
  c.validate();
  return c;
}

}  // namespace

std::string net_config_json(const NetConfig& cfg) { return config_json(cfg).dump(); }

NetConfig net_config_from_json(const std::string& text, NetConfig c) {
  try {
    const auto j = nlohmann::json::parse(text);
    c.in_bands = j.value("in_bands", c.in_bands);
    c.level_sides = j.value("level_sides", c.level_sides);
    c.tokens_side = j.value("tokens_side", c.tokens_side);
    c.dim = j.value("dim", c.dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.mlp_dim = j.value("mlp_dim", c.mlp_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.margin = j.value("margin", c.margin);
    c.dropout = j.value("dropout", c.dropout);
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("net config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_model(const Model& model, const std::string& path) {
  const nlohmann::json header = {
      {"net", config_json(model.params.cfg)},
      {"sampler",
       {{"inner_ratio", model.sampler.inner_ratio},
        {"outer_ratio", model.sampler.outer_ratio},
        {"start_width", model.sampler.start_width},
        {"width_step", model.sampler.width_step},
        {"split_min_area", model.sampler.split_min_area}}},
      {"norm", {{"shift", model.norm.shift}, {"scale", model.norm.scale}}}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out{'D', 'M', 'N', 'T'};
  put(out, kModelVersion);
  put(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put(out, static_cast<std::uint64_t>(model.params.theta.size()));
  for (double v : model.params.theta) put(out, v);
  write_file(path, out);
}

Model load_model(const std::string& path) {
  const auto bytes = read_file(path);
  Reader r(bytes, "model");
  if (r.str(4) != "DMNT") throw Error("magic mismatch: not a model file");
  if (const auto v = r.get<std::uint32_t>(); v != kModelVersion) {
    throw Error("model: unsupported version " + std::to_string(v));
  }
  const auto hlen = r.get<std::uint32_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model: malformed header: ") + e.what());
  }
  Model m;
  m.params.cfg = config_from_json(header.at("net"));
  const auto& s = header.at("sampler");
  m.sampler.inner_ratio = s.at("inner_ratio");
  m.sampler.outer_ratio = s.at("outer_ratio");
  m.sampler.start_width = s.at("start_width");
  m.sampler.width_step = s.at("width_step");
  m.sampler.split_min_area = s.at("split_min_area");
  m.sampler.validate();
  m.norm.shift = header.at("norm").at("shift").get<std::vector<double>>();
  m.norm.scale = header.at("norm").at("scale").get<std::vector<double>>();
  const auto n = r.get<std::uint64_t>();
  const ParamLayout layout(m.params.cfg);
  if (n != layout.total) throw Error("model: parameter count does not match config");
  m.params.theta.resize(n);
  r.doubles(m.params.theta.data(), n);
  if (!r.done()) throw Error("model: trailing bytes");
  return m;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::vector<std::uint8_t> out{'S', 'E', 'M', 'B'};
  put(out, kEmbVersion);
  put(out, static_cast<std::uint32_t>(table.vectors.size()));
  put(out, static_cast<std::uint32_t>(table.dim));
  for (std::size_t i = 0; i < table.vectors.size(); ++i) {
    if (static_cast<int>(table.vectors[i].size()) != table.dim) throw Error("embeddings: ragged vectors");
    put(out, table.weights[i]);
    for (double v : table.vectors[i]) put(out, v);
  }
  write_file(path, out);
}

EmbeddingTable load_embeddings(const std::string& path) {
  const auto bytes = read_file(path);
  Reader r(bytes, "embeddings");
  if (r.str(4) != "SEMB") throw Error("magic mismatch: not an embedding file");
  if (r.get<std::uint32_t>() != kEmbVersion) throw Error("embeddings: unsupported version");
  const auto count = r.get<std::uint32_t>();
  EmbeddingTable t;
  t.dim = static_cast<int>(r.get<std::uint32_t>());
  for (std::uint32_t i = 0; i < count; ++i) {
    t.weights.push_back(r.get<std::uint32_t>());
    std::vector<double> v(t.dim);
    r.doubles(v.data(), v.size());
    t.vectors.push_back(std::move(v));
  }
  if (!r.done()) throw Error("embeddings: trailing bytes");
  return t;
}

}  // namespace deepmerge
