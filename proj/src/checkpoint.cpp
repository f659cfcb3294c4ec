#include "pcenet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcenet/errors.hpp"

namespace pcenet::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("checkpoint truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

nlohmann::json layout(const network::Parameters& p) {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& tensor : p.tensors()) t.push_back({{"name", tensor.name}, {"shape", tensor.shape}});
  return t;
}

network::Parameters from_layout(const nlohmann::json& t) {
  network::Parameters p;
  for (const auto& entry : t) p.add(entry.at("name").get<std::string>(), entry.at("shape").get<std::vector<int>>());
  return p;
}

void read_payload(const std::string& in, std::size_t& pos, network::Parameters& p) {
  for (auto& tensor : p.tensors()) {
    const std::size_t bytes = tensor.values.size() * sizeof(double);
    if (pos + bytes > in.size()) throw FormatError("checkpoint payload truncated at " + tensor.name);
    std::memcpy(tensor.values.data(), in.data() + pos, bytes);
    pos += bytes;
  }
}

}  // namespace

std::string parameter_payload(const network::Parameters& params) {
  std::string out;
  out.reserve(params.total_count() * sizeof(double));
  for (const auto& tensor : params.tensors()) {
    out.append(reinterpret_cast<const char*>(tensor.values.data()), tensor.values.size() * sizeof(double));
  }
  return out;
}

nlohmann::json model_config_to_json(const network::ModelConfig& cfg) {
  return {{"depth", cfg.depth},
          {"base_channels", cfg.base_channels},
          {"channel_cap", cfg.channel_cap},
          {"instance_norm", cfg.instance_norm},
          {"in_channels", cfg.in_channels},
          {"out_channels", cfg.out_channels}};
}

network::ModelConfig model_config_from_json(const nlohmann::json& j) {
  network::ModelConfig cfg;
  cfg.depth = j.at("depth").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.channel_cap = j.at("channel_cap").get<int>();
  cfg.instance_norm = j.at("instance_norm").get<bool>();
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.out_channels = j.at("out_channels").get<int>();
  return cfg;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const bool has_adam = !ckpt.adam_m.tensors().empty();
  nlohmann::json header = {{"version", kFormatVersion},
                           {"model", model_config_to_json(ckpt.model)},
                           {"pyramid_levels", ckpt.pyramid_levels},
                           {"train_config", ckpt.train_config},
                           {"degradation_config", ckpt.degradation_config},
                           {"tensors", layout(ckpt.params)},
                           {"has_optimizer", has_adam},
                           {"adam_step", ckpt.adam_step},
                           {"epoch", ckpt.epoch},
                           {"global_step", ckpt.global_step},
                           {"rng_state", ckpt.rng_state}};
  const std::string header_text = header.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kFormatVersion);
  put<std::uint64_t>(blob, header_text.size());
  blob += header_text;
  blob += parameter_payload(ckpt.params);
  if (has_adam) {
    blob += parameter_payload(ckpt.adam_m);
    blob += parameter_payload(ckpt.adam_v);
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing checkpoint " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at " + path.string());
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();

  if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + " is not a pcenet checkpoint");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(blob, pos);
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(blob, pos);
  if (pos + header_len > blob.size()) throw FormatError("checkpoint header truncated");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(blob.substr(pos, header_len));
    pos += header_len;
    ckpt.model = model_config_from_json(header.at("model"));
    ckpt.pyramid_levels = header.at("pyramid_levels").get<int>();
    ckpt.train_config = header.at("train_config");
    ckpt.degradation_config = header.at("degradation_config");
    ckpt.params = from_layout(header.at("tensors"));
    ckpt.adam_step = header.at("adam_step").get<long long>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.global_step = header.at("global_step").get<long long>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    read_payload(blob, pos, ckpt.params);
    if (header.at("has_optimizer").get<bool>()) {
      ckpt.adam_m = ckpt.params.zeros_like();
      ckpt.adam_v = ckpt.params.zeros_like();
      read_payload(blob, pos, ckpt.adam_m);
      read_payload(blob, pos, ckpt.adam_v);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (pos != blob.size()) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace pcenet::checkpoint
