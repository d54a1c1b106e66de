#include "dfl/run_config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dfl/corpus.hpp"

namespace dfl {

namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

ParseError key_error(const std::string& msg, size_t line_no) {
  return ParseError(msg + " at line " + std::to_string(line_no), line_no);
}

int parse_int(const std::string& key, const std::string& value, size_t line_no) {
  size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != value.size())
    throw key_error("invalid integer for '" + key + "': '" + value + "'", line_no);
  return out;
}

double parse_double(const std::string& key, const std::string& value, size_t line_no) {
  size_t used = 0;
  double out = 0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != value.size())
    throw key_error("invalid number for '" + key + "': '" + value + "'", line_no);
  return out;
}

std::set<Task> parse_aux(const std::string& value, size_t line_no) {
  std::set<Task> out;
  if (trim(value).empty() || trim(value) == "none") return out;
  std::istringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto task = task_from_name(item);
    if (!task) throw key_error("unknown aux task '" + item + "'", line_no);
    if (*task == Task::Disfl)
      throw key_error("'disfl' is the main task and cannot be auxiliary", line_no);
    out.insert(*task);
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::parse(std::istream& in, const std::string& base_dir) {
  RunConfig cfg;
  std::string section;
  std::string line;
  size_t line_no = 0;

  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    if (path.is_absolute()) return path.lexically_normal().string();
    return (fs::path(base_dir) / path).lexically_normal().string();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;

    if (stripped.front() == '[') {
      if (stripped.back() != ']') throw key_error("malformed section header", line_no);
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section != "data" && section != "encoder" && section != "train")
        throw key_error("unknown section [" + section + "]", line_no);
      continue;
    }

    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw key_error("expected 'key = value', got '" + stripped + "'", line_no);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw key_error("empty key", line_no);
    if (section.empty()) throw key_error("key '" + key + "' outside any section", line_no);

    if (section == "data") {
      if (key == "train") cfg.train_path = resolve(value);
      else if (key == "dev") cfg.dev_path = resolve(value);
      else if (key == "test") cfg.test_path = resolve(value);
      else if (key == "vocab") cfg.vocab_path = resolve(value);
      else if (key == "out_dir") cfg.out_dir = resolve(value);
      else throw key_error("unknown key '" + key + "' in [data]", line_no);
    } else if (section == "encoder") {
      if (key == "num_layers") cfg.encoder.num_layers = parse_int(key, value, line_no);
      else if (key == "num_heads") cfg.encoder.num_heads = parse_int(key, value, line_no);
      else if (key == "d_model") cfg.encoder.d_model = parse_int(key, value, line_no);
      else if (key == "d_ff") cfg.encoder.d_ff = parse_int(key, value, line_no);
      else if (key == "dropout") cfg.encoder.dropout_rate = parse_double(key, value, line_no);
      else if (key == "max_len") cfg.encoder.max_len = parse_int(key, value, line_no);
      else throw key_error("unknown key '" + key + "' in [encoder]", line_no);
    } else {
      if (key == "alpha") cfg.train.alpha = parse_double(key, value, line_no);
      else if (key == "learning_rate") cfg.train.learning_rate = parse_double(key, value, line_no);
      else if (key == "batch_size") cfg.train.batch_size = parse_int(key, value, line_no);
      else if (key == "epochs") cfg.train.epochs = parse_int(key, value, line_no);
      else if (key == "seed") cfg.train.seed = parse_int(key, value, line_no);
      else if (key == "grad_clip_norm") cfg.train.grad_clip_norm = parse_double(key, value, line_no);
      else if (key == "aux_tasks") cfg.train.aux_tasks = parse_aux(value, line_no);
      else throw key_error("unknown key '" + key + "' in [train]", line_no);
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  const std::string base = fs::path(path).parent_path().string();
  RunConfig cfg = parse(f, base.empty() ? "." : base);

  const std::pair<const char*, const std::string*> inputs[] = {{"train", &cfg.train_path},
                                                               {"dev", &cfg.dev_path},
                                                               {"test", &cfg.test_path},
                                                               {"vocab", &cfg.vocab_path}};
  for (const auto& [name, p] : inputs)
    if (!p->empty() && !fs::exists(*p))
      throw IoError(std::string("config: ") + name + " path '" + *p + "' does not exist");
  return cfg;
}

std::map<std::string, std::string> RunConfig::snapshot() const {
  std::map<std::string, std::string> s;
  s["data.train"] = train_path;
  s["data.dev"] = dev_path;
  s["data.test"] = test_path;
  s["data.vocab"] = vocab_path;
  s["data.out_dir"] = out_dir;
  s["encoder.num_layers"] = std::to_string(encoder.num_layers);
  s["encoder.num_heads"] = std::to_string(encoder.num_heads);
  s["encoder.d_model"] = std::to_string(encoder.d_model);
  s["encoder.d_ff"] = std::to_string(encoder.d_ff);
  s["encoder.dropout"] = num(encoder.dropout_rate);
  s["encoder.max_len"] = std::to_string(encoder.max_len);
  s["train.alpha"] = num(train.alpha);
  s["train.learning_rate"] = num(train.learning_rate);
  s["train.batch_size"] = std::to_string(train.batch_size);
  s["train.epochs"] = std::to_string(train.epochs);
  s["train.seed"] = std::to_string(train.seed);
  s["train.grad_clip_norm"] = num(train.grad_clip_norm);
  std::string aux;
  for (Task t : train.aux_tasks) {
    if (!aux.empty()) aux += ',';
    aux += task_name(t);
  }
  s["train.aux_tasks"] = aux;
  return s;
}

}  // namespace dfl
