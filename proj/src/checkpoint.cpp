#include "cpfs3d/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace cpfs3d {

namespace {

constexpr const char* kMagic = "CPFS3D1";

void write_f32_le(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  if constexpr (std::endian::native == std::endian::big)
    bits = __builtin_bswap32(bits);
  char b[4];
  std::memcpy(b, &bits, 4);
  out.append(b, 4);
}

float read_f32_le(const char* p) {
  uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big)
    bits = __builtin_bswap32(bits);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  // Assemble the named-array table; std::map gives the canonical order.
  std::map<std::string, const MatX<float>*> arrays;
  for (const auto& [name, m] : ckpt.params.params) arrays["param." + name] = &m;
  for (const auto& [name, m] : ckpt.opt.m1) arrays["opt.m1." + name] = &m;
  for (const auto& [name, m] : ckpt.opt.m2) arrays["opt.m2." + name] = &m;
  arrays["bank.g"] = &ckpt.bank.g;
  MatX<float> usage(1, ckpt.bank.W());
  for (int w = 0; w < ckpt.bank.W(); ++w)
    usage(0, w) = static_cast<float>(ckpt.bank.usage_count[static_cast<size_t>(w)]);
  arrays["bank.usage"] = &usage;
  MatX<float> prior = ckpt.size_prior.transpose();
  arrays["size_prior"] = &prior;

  std::ostringstream manifest;
  manifest << "{\"meta\":{"
           << "\"config_hash\":\"" << ckpt.config_hash << "\""
           << ",\"epoch\":" << ckpt.epoch
           << ",\"gamma\":" << format_float(ckpt.bank.gamma)
           << ",\"lr\":" << format_float(ckpt.opt.lr)
           << ",\"opt_step\":" << ckpt.opt.step_count
           << ",\"rng\":\"" << json_escape(ckpt.rng_state) << "\""
           << ",\"stage\":\"" << json_escape(ckpt.stage) << "\""
           << ",\"step\":" << ckpt.step << "},\"arrays\":[";
  bool first = true;
  for (const auto& [name, m] : arrays) {
    if (!first) manifest << ",";
    first = false;
    manifest << "{\"name\":\"" << json_escape(name) << "\",\"rows\":" << m->rows()
             << ",\"cols\":" << m->cols() << "}";
  }
  manifest << "]}";

  std::string blob;
  for (const auto& [name, m] : arrays)
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) write_f32_le(blob, (*m)(r, c));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f << kMagic << "\n" << manifest.str() << "\n" << blob;
  if (!f) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string magic, manifest_line;
  if (!std::getline(f, magic) || magic != kMagic)
    throw ParseError(path + ": not a checkpoint archive (bad magic)");
  if (!std::getline(f, manifest_line))
    throw ParseError(path + ": truncated checkpoint (missing manifest)");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid manifest: " + e.what());
  }

  Checkpoint ckpt;
  const auto& meta = j.at("meta");
  ckpt.config_hash = std::stoull(meta.at("config_hash").get<std::string>());
  ckpt.epoch = meta.at("epoch").get<int>();
  ckpt.bank.gamma = meta.at("gamma").get<float>();
  ckpt.opt.lr = meta.at("lr").get<float>();
  ckpt.opt.step_count = meta.at("opt_step").get<long>();
  ckpt.rng_state = meta.at("rng").get<std::string>();
  ckpt.stage = meta.at("stage").get<std::string>();
  ckpt.step = meta.at("step").get<long>();

  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  size_t offset = 0;
  for (const auto& entry : j.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
    const size_t bytes = static_cast<size_t>(rows) * static_cast<size_t>(cols) * 4;
    if (offset + bytes > blob.size())
      throw ParseError(path + ": truncated payload at array \"" + name + "\"");
    MatX<float> m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = read_f32_le(blob.data() + offset);
        offset += 4;
      }

    if (name.rfind("param.", 0) == 0) {
      ckpt.params.params[name.substr(6)] = std::move(m);
    } else if (name.rfind("opt.m1.", 0) == 0) {
      ckpt.opt.m1[name.substr(7)] = std::move(m);
    } else if (name.rfind("opt.m2.", 0) == 0) {
      ckpt.opt.m2[name.substr(7)] = std::move(m);
    } else if (name == "bank.g") {
      ckpt.bank.g = std::move(m);
    } else if (name == "bank.usage") {
      ckpt.bank.usage_count.resize(static_cast<size_t>(m.cols()));
      for (Eigen::Index w = 0; w < m.cols(); ++w)
        ckpt.bank.usage_count[static_cast<size_t>(w)] = static_cast<long>(m(0, w));
    } else if (name == "size_prior") {
      ckpt.size_prior = m.row(0).transpose();
    } else {
      throw ParseError(path + ": unknown array \"" + name + "\"");
    }
  }
  if (offset != blob.size())
    throw ParseError(path + ": payload has trailing bytes");
  return ckpt;
}

std::string metrics_record(const StepMetrics& m) {
  std::ostringstream o;
  o << "{\"step\":" << m.step << ",\"epoch\":" << m.epoch
    << ",\"l_vote\":" << format_float(m.l_vote)
    << ",\"l_objectness\":" << format_float(m.l_objectness)
    << ",\"l_box\":" << format_float(m.l_box)
    << ",\"l_cls\":" << format_float(m.l_cls)
    << ",\"l_det\":" << format_float(m.l_det)
    << ",\"l_semcl\":" << format_float(m.l_semcl)
    << ",\"l_primcl\":" << format_float(m.l_primcl)
    << ",\"l_total\":" << format_float(m.l_total)
    << ",\"scl_skipped\":" << (m.scl_skipped ? "true" : "false")
    << ",\"pcl_W'\":" << m.pcl_w_prime << "}\n";
  return o.str();
}

StepMetrics metrics_from_record(const std::string& line, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": invalid metrics line: " + e.what());
  }
  StepMetrics m;
  m.step = j.at("step").get<long>();
  m.epoch = j.at("epoch").get<int>();
  m.l_vote = j.at("l_vote").get<float>();
  m.l_objectness = j.at("l_objectness").get<float>();
  m.l_box = j.at("l_box").get<float>();
  m.l_cls = j.at("l_cls").get<float>();
  m.l_det = j.at("l_det").get<float>();
  m.l_semcl = j.at("l_semcl").get<float>();
  m.l_primcl = j.at("l_primcl").get<float>();
  m.l_total = j.at("l_total").get<float>();
  m.scl_skipped = j.at("scl_skipped").get<bool>();
  m.pcl_w_prime = j.at("pcl_W'").get<int>();
  return m;
}

}  // namespace cpfs3d
