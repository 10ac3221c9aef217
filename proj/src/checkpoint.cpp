#include "branchgan/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <zlib.h>

#include "branchgan/data_io.hpp"

namespace branchgan {

namespace {

constexpr char kMagic[4] = {'B', 'G', 'C', 'K'};

std::uint32_t crc_of(const void* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  // zlib takes uInt lengths; feed in chunks for large blobs.
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[pos + i]) << (8 * i);
  return v;
}

void append_floats(std::vector<std::uint8_t>& blob, const std::vector<float>& values) {
  const std::size_t start = blob.size();
  blob.resize(start + values.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(blob.data() + start, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) blob[start + i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
  }
}

std::vector<float> read_floats(std::span<const std::uint8_t> blob) {
  std::vector<float> out(blob.size() / 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), blob.data(), out.size() * 4);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_le<std::uint32_t>(blob, i * 4));
  }
  return out;
}

struct Writer {
  nlohmann::json entries = nlohmann::json::array();
  std::vector<std::uint8_t> blob;

  void add(const std::string& name, const std::vector<int>& shape, const std::vector<float>& values) {
    const std::size_t offset = blob.size();
    append_floats(blob, values);
    entries.push_back({{"name", name},
                       {"shape", shape},
                       {"offset", offset},
                       {"count", values.size()},
                       {"crc32", crc_of(blob.data() + offset, values.size() * 4)}});
  }
  void add_set(const ParamSet& ps) {
    for (const auto& [name, t] : ps) add(name, t.shape, t.values);
  }
  void add_optimizer(const std::string& prefix, const Adam& opt) {
    for (const auto& [name, slot] : opt.slots()) {
      const std::vector<int> shape{static_cast<int>(slot.m.size())};
      add(prefix + name + "/m", shape, slot.m);
      add(prefix + name + "/v", shape, slot.v);
    }
  }
};

nlohmann::json optimizer_json(const Adam& opt) {
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, slot] : opt.slots()) steps[name] = slot.steps;
  return {{"spec", opt.spec()}, {"steps", steps}};
}

nlohmann::json state_json(const TrainState& s) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : s.history) history.push_back({r.step, r.stage, r.phase, r.alpha, r.d_loss, r.g_loss});
  return {{"stage", s.stage},
          {"phase", s.phase},
          {"step", s.step},
          {"stage_step", s.stage_step},
          {"seed", s.seed},
          {"g_opt", optimizer_json(s.g_opt)},
          {"d_opt", optimizer_json(s.d_opt)},
          {"history", history}};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.add_set(ck.generator);
  w.add_set(ck.discriminator);
  w.add_set(ck.encoder);
  nlohmann::json manifest{{"format", "branchgan-checkpoint"},
                          {"version", kCheckpointVersion},
                          {"config", ck.config},
                          {"stage", ck.stage},
                          {"metadata", ck.metadata}};
  if (ck.train_state) {
    w.add_optimizer("opt.g/", ck.train_state->g_opt);
    w.add_optimizer("opt.d/", ck.train_state->d_opt);
    manifest["train_state"] = state_json(*ck.train_state);
  } else {
    manifest["train_state"] = nullptr;
  }
  manifest["tensors"] = w.entries;
  manifest["blob_bytes"] = w.blob.size();
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  put_le<std::uint32_t>(out, crc_of(text.data(), text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), w.blob.begin(), w.blob.end());
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 4 + 4 + 8 + 4;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not a branchgan checkpoint (bad signature)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const auto manifest_size = get_le<std::uint64_t>(bytes, 8);
  const auto manifest_crc = get_le<std::uint32_t>(bytes, 16);
  if (manifest_size > bytes.size() - header) throw DataError("checkpoint truncated in manifest");
  const auto* text = reinterpret_cast<const char*>(bytes.data() + header);
  if (crc_of(text, manifest_size) != manifest_crc) throw DataError("checkpoint manifest CRC mismatch");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text, text + manifest_size);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  const auto blob = bytes.subspan(header + manifest_size);

  Checkpoint ck;
  std::map<std::string, ParamTensor> tensors;
  try {
    if (manifest.at("blob_bytes").get<std::uint64_t>() != blob.size()) throw DataError("checkpoint blob size mismatch");
    ck.config = manifest.at("config").get<NetConfig>();
    ck.stage = manifest.at("stage").get<int>();
    ck.metadata = manifest.value("metadata", nlohmann::json::object());
    for (const auto& e : manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (offset > blob.size() || count > (blob.size() - offset) / 4) {
        throw DataError("checkpoint tensor '" + name + "' lies outside the blob area");
      }
      const auto data = blob.subspan(offset, count * 4);
      if (crc_of(data.data(), data.size()) != e.at("crc32").get<std::uint32_t>()) {
        throw DataError("checkpoint tensor '" + name + "' CRC mismatch");
      }
      tensors[name] = ParamTensor{e.at("shape").get<std::vector<int>>(), read_floats(data)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint holds an invalid config: ") + e.what());
  }

  for (auto& [name, t] : tensors) {
    if (name.starts_with("g.")) ck.generator[name] = t;
    else if (name.starts_with("d.")) ck.discriminator[name] = t;
    else if (name.starts_with("e.")) ck.encoder[name] = t;
  }

  const auto& js = manifest.at("train_state");
  if (!js.is_null()) {
    try {
      TrainState s;
      s.stage = js.at("stage").get<int>();
      s.phase = js.at("phase").get<int>();
      s.step = js.at("step").get<std::int64_t>();
      s.stage_step = js.at("stage_step").get<std::int64_t>();
      s.seed = js.at("seed").get<std::uint64_t>();
      auto load_opt = [&](const nlohmann::json& jo, const std::string& prefix) {
        Adam opt(jo.at("spec").get<OptimSpec>());
        for (const auto& [name, steps] : jo.at("steps").items()) {
          AdamSlot slot;
          slot.steps = steps.get<std::int64_t>();
          auto m = tensors.find(prefix + name + "/m");
          auto v = tensors.find(prefix + name + "/v");
          if (m == tensors.end() || v == tensors.end()) throw DataError("checkpoint lacks optimizer moments for '" + name + "'");
          slot.m = m->second.values;
          slot.v = v->second.values;
          opt.slots()[name] = std::move(slot);
        }
        return opt;
      };
      s.g_opt = load_opt(js.at("g_opt"), "opt.g/");
      s.d_opt = load_opt(js.at("d_opt"), "opt.d/");
      for (const auto& r : js.at("history")) {
        s.history.push_back({r.at(0).get<std::int64_t>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<double>(),
                             r.at(4).get<double>(), r.at(5).get<double>()});
      }
      ck.train_state = std::move(s);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed checkpoint train state: ") + e.what());
    }
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Generator generator_from(const Checkpoint& ck) {
  if (ck.generator.empty()) throw DataError("checkpoint holds no generator");
  return Generator(ck.config, ck.stage, ck.generator);
}

Discriminator discriminator_from(const Checkpoint& ck) {
  if (ck.discriminator.empty()) throw DataError("checkpoint holds no discriminator");
  return Discriminator(ck.config, ck.stage, ck.discriminator);
}

Encoder encoder_from(const Checkpoint& ck) {
  if (ck.encoder.empty()) throw DataError("checkpoint holds no encoder");
  return Encoder(ck.config, ck.stage, ck.encoder);
}

}  // namespace branchgan
