#include "varconet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "varconet/error.hpp"

namespace varconet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  v = to_little(v);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, in.data() + at, 4);
  return to_little(v);
}

const char* role_name(ParamRole r) {
  switch (r) {
    case ParamRole::Weight: return "weight";
    case ParamRole::Bias: return "bias";
    case ParamRole::Positional: return "positional";
    case ParamRole::Gain: return "gain";
  }
  return "weight";
}

ParamRole role_from(const std::string& s) {
  if (s == "bias") return ParamRole::Bias;
  if (s == "positional") return ParamRole::Positional;
  if (s == "gain") return ParamRole::Gain;
  return ParamRole::Weight;
}

}  // namespace

void save_checkpoint(const fs::path& file, const ParamStore& params, const json& hyperparameters,
                     int epoch) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : params) {
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"offset", offset},
                       {"role", role_name(t.role)},
                       {"fan_in", t.fan_in}});
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(float);
  }
  const json header{{"format_tag", "VCNC"},
                    {"version", kCheckpointVersion},
                    {"tensors", std::move(tensors)},
                    {"hyperparameters", hyperparameters},
                    {"epoch", epoch}};
  const std::string header_text = header.dump();

  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out.reserve(out.size() + offset);
  for (const auto& t : params) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.values[i])));
    }
  }

  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + file.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for checkpoint " + file.string());
}

Checkpoint load_checkpoint(const fs::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + file.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = file.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(where + ": not a VCNC checkpoint");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) throw FormatError(where + ": unsupported version");
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (12 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw CorruptionError(where + ": header runs past end of file");
  }
  json header;
  try {
    header = json::parse(bytes.substr(12, header_len));
  } catch (const json::parse_error& e) {
    throw CorruptionError(where + ": " + e.what());
  }
  const std::size_t payload_start = 12 + header_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  Checkpoint ck;
  try {
    ck.header.format_tag = header.at("format_tag").get<std::string>();
    ck.header.version = header.at("version").get<std::uint32_t>();
    ck.header.epoch = header.at("epoch").get<int>();
    ck.header.hyperparameters = header.at("hyperparameters");
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (ck.header.format_tag != "VCNC") throw FormatError(where + ": bad format_tag");

  std::set<std::string> names;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (const auto& e : header.at("tensors")) {
    TensorEntry entry;
    entry.name = e.at("name").get<std::string>();
    entry.shape = e.at("shape").get<std::vector<std::int64_t>>();
    entry.offset = e.at("offset").get<std::uint64_t>();
    if (!names.insert(entry.name).second) {
      throw CorruptionError(where + ": duplicate tensor " + entry.name);
    }
    std::uint64_t count = 1;
    std::vector<Eigen::Index> shape;
    for (auto d : entry.shape) {
      if (d < 0) throw CorruptionError(where + ": negative dimension in " + entry.name);
      count *= static_cast<std::uint64_t>(d);
      shape.push_back(static_cast<Eigen::Index>(d));
    }
    const std::uint64_t end = entry.offset + count * sizeof(float);
    if (end > payload_size) {
      throw CorruptionError(where + ": tensor " + entry.name + " extends past end of file");
    }
    spans.emplace_back(entry.offset, end);

    const auto idx = ck.params.add(entry.name, shape, role_from(e.value("role", "weight")),
                                   e.value("fan_in", Eigen::Index{1}));
    auto& values = ck.params[idx].values;
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t w = get_u32(bytes, payload_start + entry.offset + i * sizeof(float));
      values[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(w);
    }
    ck.header.tensors.push_back(std::move(entry));
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      throw CorruptionError(where + ": overlapping tensor payloads");
    }
  }
  return ck;
}

}  // namespace varconet
