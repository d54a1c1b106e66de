#include "dfl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace dfl {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'F', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  size_t offset() const { return pos_; }

  const char* take(size_t n, const char* what) {
    if (pos_ + n > buf_.size())
      throw ParseError("checkpoint: truncated reading " + std::string(what) + " at offset " +
                           std::to_string(pos_),
                       pos_);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  uint32_t u32(const char* what) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4, what));
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }

  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  size_t pos_ = 0;
};

json encoder_to_json(const EncoderConfig& cfg) {
  return json{{"num_layers", cfg.num_layers}, {"num_heads", cfg.num_heads},
              {"d_model", cfg.d_model},       {"d_ff", cfg.d_ff},
              {"dropout_rate", cfg.dropout_rate}, {"max_len", cfg.max_len},
              {"vocab_size", cfg.vocab_size}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig cfg;
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const JointModel& model,
                     const CheckpointMeta& meta) {
  json meta_json;
  meta_json["best_dev_f1"] = meta.best_dev_f1;
  meta_json["config"] = meta.config;
  meta_json["encoder"] = encoder_to_json(model.encoder.cfg);
  json tagsets_json = json::object();
  for (const auto& [task, tagset] : model.tagsets)
    tagsets_json[task_name(task)] = tagset.labels();
  meta_json["tagsets"] = tagsets_json;
  meta_json["vocab"] = model.vocab.words();

  const auto refs = model.tensors();
  json manifest = json::array();
  std::string payload;
  size_t offset = 0;
  for (const auto& r : refs) {
    const size_t nbytes = static_cast<size_t>(r.size()) * 4;
    manifest.push_back(json{{"name", r.name},
                            {"rows", r.rows},
                            {"cols", r.cols},
                            {"dtype", "f32"},
                            {"offset", offset},
                            {"nbytes", nbytes}});
    for (Eigen::Index i = 0; i < r.size(); ++i)
      put_f32(payload, static_cast<float>(r.data[i]));
    offset += nbytes;
  }

  const std::string meta_str = meta_json.dump();
  const std::string manifest_str = manifest.dump();

  std::string out;
  out.reserve(8 + 4 + 8 + meta_str.size() + manifest_str.size() + payload.size());
  out.append(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(meta_str.size()));
  out += meta_str;
  put_u32(out, static_cast<uint32_t>(manifest_str.size()));
  out += manifest_str;
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();

  Reader rd(buf);
  if (std::memcmp(rd.take(8, "magic"), kMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic in '" + path + "'", 0);
  const uint32_t version = rd.u32("version");
  if (version != kVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version), 8);

  const uint32_t meta_len = rd.u32("metadata length");
  const std::string meta_str(rd.take(meta_len, "metadata"), meta_len);
  const uint32_t manifest_len = rd.u32("manifest length");
  const std::string manifest_str(rd.take(manifest_len, "manifest"), manifest_len);

  json meta_json, manifest;
  try {
    meta_json = json::parse(meta_str);
    manifest = json::parse(manifest_str);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: bad JSON block: ") + e.what(), rd.offset());
  }

  LoadedCheckpoint out;
  try {
    out.meta.best_dev_f1 = meta_json.at("best_dev_f1").get<double>();
    out.meta.config = meta_json.at("config").get<std::map<std::string, std::string>>();

    const EncoderConfig cfg = encoder_from_json(meta_json.at("encoder"));
    std::map<Task, Tagset> tagsets;
    for (const auto& [name, labels] : meta_json.at("tagsets").items()) {
      const auto task = task_from_name(name);
      if (!task) throw ParseError("checkpoint: unknown task '" + name + "'", 0);
      tagsets.emplace(*task, Tagset(*task, labels.get<std::vector<std::string>>()));
    }
    const Vocab vocab = Vocab::from_words(meta_json.at("vocab").get<std::vector<std::string>>());
    out.model = JointModel::init(cfg, vocab, tagsets, 0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: bad metadata: ") + e.what(), 0);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("checkpoint: bad metadata: ") + e.what(), 0);
  }

  const size_t payload_start = rd.offset();
  const size_t payload_size = buf.size() - payload_start;

  auto refs = out.model.tensors();
  std::map<std::string, TensorRef*> by_name;
  for (auto& r : refs) by_name[r.name] = &r;

  size_t expected_offset = 0;
  size_t filled = 0;
  try {
    for (const auto& entry : manifest) {
      const std::string name = entry.at("name").get<std::string>();
      auto it = by_name.find(name);
      if (it == by_name.end() || it->second == nullptr)
        throw ParseError("checkpoint: unexpected or repeated tensor '" + name + "'", 0);
      TensorRef& r = *it->second;
      it->second = nullptr;  // each tensor appears exactly once

      if (entry.at("dtype").get<std::string>() != "f32")
        throw ParseError("checkpoint: tensor '" + name + "' has unsupported dtype", 0);
      if (entry.at("rows").get<Eigen::Index>() != r.rows ||
          entry.at("cols").get<Eigen::Index>() != r.cols)
        throw ParseError("checkpoint: tensor '" + name + "' shape mismatch", 0);
      const size_t off = entry.at("offset").get<size_t>();
      const size_t nbytes = entry.at("nbytes").get<size_t>();
      if (off != expected_offset || nbytes != static_cast<size_t>(r.size()) * 4 ||
          off + nbytes > payload_size)
        throw ParseError("checkpoint: manifest offsets corrupt at tensor '" + name + "'", 0);
      expected_offset += nbytes;

      for (Eigen::Index i = 0; i < r.size(); ++i) r.data[i] = rd.f32("payload");
      filled += 1;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: bad manifest: ") + e.what(), 0);
  }
  if (filled != refs.size())
    throw ParseError("checkpoint: manifest omits " + std::to_string(refs.size() - filled) +
                         " model tensors",
                     0);
  if (!rd.done()) throw ParseError("checkpoint: trailing bytes after payload", rd.offset());
  return out;
}

}  // namespace dfl
