#include "branchgan/service.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "branchgan/checkpoint.hpp"
#include "branchgan/data_io.hpp"
#include "branchgan/edit.hpp"
#include "branchgan/rng.hpp"
#include "branchgan/spectral.hpp"

namespace branchgan {

void to_json(nlohmann::json& j, const ModelHandle& h) {
  j = {{"id", h.id},
       {"checkpoint", h.checkpoint.string()},
       {"stage", h.stage},
       {"resolution", {h.resolution.height, h.resolution.width}},
       {"dims", h.dims},
       {"has_encoder", h.has_encoder}};
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ServiceConfig config;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    for (const auto& m : j.value("models", nlohmann::json::array())) {
      std::filesystem::path ck = m.at("checkpoint").get<std::string>();
      if (ck.is_relative()) ck = path.parent_path() / ck;
      config.models.push_back({m.value("id", ck.stem().string()), ck});
    }
    config.max_queued_jobs = j.value("max_queued_jobs", config.max_queued_jobs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::string clean;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  if (clean.size() % 4 != 0) throw ConfigError("malformed base64 (length is not a multiple of 4)");
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw ConfigError("malformed base64");
  std::size_t padding = 0;
  if (!clean.empty() && clean.back() == '=') ++padding;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

namespace {

struct LoadedModel {
  ModelHandle handle;
  Generator generator;
  std::optional<Encoder> encoder;
};

struct Job {
  nlohmann::json ticket;
  std::string frozen;  // serialized terminal ticket
  nlohmann::json request;
};

const nlohmann::json& field(const nlohmann::json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) throw ServiceError(400, std::string("missing field '") + key + "'");
  return body.at(key);
}

template <typename T>
T get_field(const nlohmann::json& body, const char* key) {
  try {
    return field(body, key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ServiceError(400, std::string("field '") + key + "' has the wrong type");
  }
}

BranchedLatent parse_latent(const nlohmann::json& j, const LatentLayout& layout, const char* what) {
  BranchedLatent z;
  try {
    // A bare array of sub-vectors is accepted as well as {"subvectors": ...}.
    z = j.is_array() ? nlohmann::json{{"subvectors", j}}.get<BranchedLatent>() : j.get<BranchedLatent>();
  } catch (const ConfigError& e) {
    throw ServiceError(400, std::string("malformed latent '") + what + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("malformed latent '") + what + "': " + e.what());
  }
  if (!z.matches(layout)) throw ServiceError(400, std::string("malformed latent '") + what + "': wrong sub-vector sizes");
  return z;
}

std::string png_base64(const Image& image) { return base64_encode(encode_png(image)); }

Image decode_png_field(const nlohmann::json& j, const char* what, int channels) {
  if (!j.is_string()) throw ConfigError(std::string(what) + " must be a base64 PNG string");
  try {
    return decode_image(base64_decode(j.get<std::string>()), channels);
  } catch (const DataError& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

EditConstraints parse_constraints(const nlohmann::json& c, const Generator& g) {
  const int channels = g.config().output_channels;
  EditConstraints out;
  out.color = decode_png_field(c.at("color"), "constraints.color", channels);
  const Image mask_image = decode_png_field(c.at("mask"), "constraints.mask", 1);
  out.mask = Mask(mask_image.height, mask_image.width);
  for (std::size_t p = 0; p < mask_image.pixels.size(); ++p) out.mask.values[p] = mask_image.pixels[p] >= 0.5f;
  if (c.contains("edge") && !c.at("edge").is_null()) out.edge = decode_png_field(c.at("edge"), "constraints.edge", 1);
  out.validate(g.output_resolution(), channels);
  return out;
}

}  // namespace

struct Service::Impl {
  std::map<std::string, LoadedModel> models;
  std::vector<std::string> order;
  std::size_t max_queued = 16;

  mutable std::mutex mutex;
  std::condition_variable cv;
  std::map<std::string, Job> jobs;
  std::deque<std::string> pending;
  std::uint64_t next_job = 1;
  bool stopping = false;
  std::thread coordinator;

  httplib::Server server;
  std::thread server_thread;

  const LoadedModel& model(const nlohmann::json& body) const {
    const auto id = get_field<std::string>(body, "model");
    auto it = models.find(id);
    if (it == models.end()) throw ServiceError(404, "unknown model '" + id + "'");
    return it->second;
  }

  void run_jobs() {
    for (;;) {
      std::string id;
      nlohmann::json request;
      {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return stopping || !pending.empty(); });
        if (stopping) return;
        id = pending.front();
        pending.pop_front();
        auto& job = jobs.at(id);
        job.ticket["status"] = "running";
        request = job.request;
      }
      nlohmann::json result;
      std::string error;
      try {
        result = run_edit(request, id);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(mutex);
      auto& job = jobs.at(id);
      if (error.empty()) {
        job.ticket["status"] = "done";
        job.ticket["progress"] = 1.0;
        job.ticket["result"] = std::move(result);
      } else {
        job.ticket["status"] = "failed";
        job.ticket["error"] = error;
      }
      job.frozen = job.ticket.dump();
      job.request = nullptr;
    }
  }

  nlohmann::json run_edit(const nlohmann::json& request, const std::string& id) {
    const LoadedModel& m = models.at(request.at("model").get<std::string>());
    const EditConstraints constraints = parse_constraints(request.at("constraints"), m.generator);

    const auto& jc = request.value("config", nlohmann::json::object());
    EditConfig config = jc.get<EditConfig>();
    // Without an explicit init, fall back to random starts for models without an encoder.
    if (!jc.contains("init") && !m.encoder) config.init = EditInit::Random;
    const auto seed = request.value("seed", std::uint64_t{0});
    const auto r = optimize_edit(m.generator, m.encoder ? &*m.encoder : nullptr, constraints, config, seed,
                                 [&](double p) {
                                   std::lock_guard lock(mutex);
                                   jobs.at(id).ticket["progress"] = p;
                                 });
    nlohmann::json out = r;
    out["image"] = png_base64(r.image);
    return out;
  }
};

Service::Service(const ServiceConfig& config) : impl_(std::make_unique<Impl>()) {
  impl_->max_queued = config.max_queued_jobs;
  for (const auto& entry : config.models) {
    if (impl_->models.contains(entry.id)) throw ConfigError("duplicate model id '" + entry.id + "'");
    const Checkpoint ck = load_checkpoint(entry.checkpoint);
    LoadedModel m{{}, generator_from(ck), std::nullopt};
    if (!ck.encoder.empty()) m.encoder = encoder_from(ck);
    m.handle = {entry.id, entry.checkpoint, ck.stage, m.generator.output_resolution(), ck.config.subvector_dims,
                m.encoder.has_value()};
    impl_->models.emplace(entry.id, std::move(m));
    impl_->order.push_back(entry.id);
  }
  impl_->coordinator = std::thread([this] { impl_->run_jobs(); });

  auto& s = impl_->server;
  auto json_reply = [](httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  };
  auto guarded = [json_reply](auto&& handler) {
    return [json_reply, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const ServiceError& e) {
        json_reply(res, {{"error", e.what()}}, e.status());
      } catch (const ConfigError& e) {
        json_reply(res, {{"error", e.what()}}, 400);
      } catch (const nlohmann::json::exception& e) {
        json_reply(res, {{"error", std::string("malformed request: ") + e.what()}}, 400);
      } catch (const std::exception& e) {
        json_reply(res, {{"error", e.what()}}, 500);
      }
    };
  };
  auto parse = [](const httplib::Request& req) {
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw ServiceError(400, std::string("request body is not valid JSON: ") + e.what());
    }
  };
  auto wants_png = [](const httplib::Request& req) {
    return req.get_header_value("Accept").find("image/png") != std::string::npos;
  };

  s.Get("/models", guarded([this, json_reply](const httplib::Request&, httplib::Response& res) {
          json_reply(res, models());
        }));
  s.Post("/generate", guarded([this, json_reply, parse, wants_png](const httplib::Request& req, httplib::Response& res) {
           auto out = generate(parse(req));
           if (wants_png(req)) {
             const auto png = base64_decode(out.at("image").get<std::string>());
             res.set_header("X-Latent", out.at("latent").dump());
             res.set_content(std::string(png.begin(), png.end()), "image/png");
           } else {
             json_reply(res, out);
           }
         }));
  s.Post("/sweep", guarded([this, json_reply, parse](const httplib::Request& req, httplib::Response& res) {
           json_reply(res, sweep(parse(req)));
         }));
  s.Post("/fuse", guarded([this, json_reply, parse](const httplib::Request& req, httplib::Response& res) {
           json_reply(res, fuse(parse(req)));
         }));
  s.Post("/candidates",
         guarded([this, json_reply, parse, wants_png](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse(req);
           auto out = candidates(body);
           if (!wants_png(req)) {
             json_reply(res, out);
             return;
           }
           // Tile the candidates into one row-major grid image.
           std::vector<Image> images;
           nlohmann::json latents = nlohmann::json::array();
           for (const auto& c : out.at("candidates")) {
             images.push_back(decode_image(base64_decode(c.at("image").get<std::string>()),
                                           impl_->model(body).generator.config().output_channels));
             latents.push_back(c.at("latent"));
           }
           const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(images.size()))));
           const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
           const Image& f = images.front();
           Image grid(rows * f.height, cols * f.width, f.channels);
           for (std::size_t i = 0; i < images.size(); ++i) {
             const int oy = static_cast<int>(i) / cols * f.height, ox = static_cast<int>(i) % cols * f.width;
             for (int y = 0; y < f.height; ++y)
               for (int x = 0; x < f.width; ++x)
                 for (int ch = 0; ch < f.channels; ++ch) grid.at(oy + y, ox + x, ch) = images[i].at(y, x, ch);
           }
           const auto png = encode_png(grid);
           res.set_header("X-Latents", latents.dump());
           res.set_header("X-Grid", std::to_string(rows) + "x" + std::to_string(cols));
           res.set_content(std::string(png.begin(), png.end()), "image/png");
         }));
  s.Post("/edit", guarded([this, json_reply, parse](const httplib::Request& req, httplib::Response& res) {
           json_reply(res, submit_edit(parse(req)), 202);
         }));
  s.Get(R"(/jobs/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          res.set_content(job(req.matches[1].str()), "application/json");
        }));
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(impl_->mutex);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  if (impl_->coordinator.joinable()) impl_->coordinator.join();
}

std::vector<ModelHandle> Service::models() const {
  std::vector<ModelHandle> out;
  for (const auto& id : impl_->order) out.push_back(impl_->models.at(id).handle);
  return out;
}

nlohmann::json Service::generate(const nlohmann::json& body) const {
  const LoadedModel& m = impl_->model(body);
  const LatentLayout layout = m.generator.config().layout();
  BranchedLatent z;
  if (body.contains("latent")) {
    z = parse_latent(body.at("latent"), layout, "latent");
  } else if (body.contains("seed")) {
    z = sample_latent(layout, SamplePolicy::all_uniform(layout.branches()), get_field<std::uint64_t>(body, "seed"));
  } else {
    throw ServiceError(400, "generate needs a latent or a seed");
  }
  return {{"model", m.handle.id}, {"image", png_base64(branchgan::generate(m.generator, z))}, {"latent", z}};
}

nlohmann::json Service::sweep(const nlohmann::json& body) const {
  const LoadedModel& m = impl_->model(body);
  const LatentLayout layout = m.generator.config().layout();
  const auto base = parse_latent(field(body, "latent"), layout, "latent");
  const int t = get_field<int>(body, "t");
  if (t < 0 || t >= layout.branches()) throw ServiceError(400, "sub-vector index t out of range");
  const auto p = get_field<std::vector<double>>(body, "p_values");
  if (p.size() < 2) throw ServiceError(400, "a sweep needs at least 2 p values for its variance image");
  const auto latents = constant_sweep(base, t, p);
  const auto images = branchgan::generate(m.generator, latents);
  const auto var = variance_image(images);
  Image display(var.height, var.width, 1);
  for (std::size_t i = 0; i < var.display.size(); ++i) display.pixels[i] = var.display[i] / 255.0f;
  nlohmann::json out{{"model", m.handle.id},
                     {"images", nlohmann::json::array()},
                     {"latents", latents},
                     {"variance_image", png_base64(display)},
                     {"variance", {{"values", var.values}, {"display_scale", var.display_scale}}}};
  for (const auto& im : images) out["images"].push_back(png_base64(im));
  return out;
}

nlohmann::json Service::fuse(const nlohmann::json& body) const {
  const LoadedModel& m = impl_->model(body);
  const LatentLayout layout = m.generator.config().layout();
  const auto a = parse_latent(field(body, "a"), layout, "a");
  const auto b = parse_latent(field(body, "b"), layout, "b");
  const auto take = get_field<std::set<int>>(body, "take_from_a");
  for (int t : take) {
    if (t < 0 || t >= layout.branches()) throw ServiceError(400, "take_from_a holds an index out of range");
  }
  const auto z = branchgan::fuse(a, b, take);
  return {{"model", m.handle.id}, {"image", png_base64(branchgan::generate(m.generator, z))}, {"latent", z}};
}

nlohmann::json Service::candidates(const nlohmann::json& body) const {
  const LoadedModel& m = impl_->model(body);
  const LatentLayout layout = m.generator.config().layout();
  const int t = get_field<int>(body, "t");
  if (t < 0 || t >= layout.branches()) throw ServiceError(400, "scale t out of range");
  const int count = get_field<int>(body, "count");
  if (count < 1 || count > 1024) throw ServiceError(400, "count must be in [1, 1024]");
  const auto seed = get_field<std::uint64_t>(body, "seed");
  nlohmann::json fixed = body.value("fixed", nlohmann::json::array());
  if (fixed.is_object()) fixed = fixed.value("subvectors", nlohmann::json::array());
  if (!fixed.is_array() || static_cast<int>(fixed.size()) != t) {
    throw ServiceError(400, "prefix/scale mismatch: fixed must hold exactly the sub-vectors of scales 0.." +
                                std::to_string(t - 1));
  }
  SamplePolicy policy;
  for (int s = 0; s < layout.branches(); ++s) {
    if (s < t) {
      std::vector<double> v;
      try {
        v = fixed.at(s).get<std::vector<double>>();
      } catch (const nlohmann::json::exception&) {
        throw ServiceError(400, "fixed sub-vector " + std::to_string(s) + " is not an array of numbers");
      }
      if (static_cast<int>(v.size()) != layout.dims[s]) {
        throw ServiceError(400, "prefix/scale mismatch: fixed sub-vector " + std::to_string(s) + " has the wrong size");
      }
      for (double x : v) {
        if (!(x >= -1.0 && x <= 1.0)) throw ServiceError(400, "fixed sub-vector values must lie in [-1, 1]");
      }
      policy.sources.emplace_back(source::Constant{std::move(v)});
    } else if (s == t) {
      policy.sources.emplace_back(source::Uniform{1.0});
    } else {
      policy.sources.emplace_back(source::Frozen{});
    }
  }
  std::vector<BranchedLatent> zs;
  for (int i = 0; i < count; ++i) {
    zs.push_back(sample_latent(layout, policy, derive_seed(seed, {static_cast<std::uint64_t>(i)})));
  }
  const auto images = branchgan::generate(m.generator, zs);
  nlohmann::json out{{"model", m.handle.id}, {"t", t}, {"candidates", nlohmann::json::array()}};
  for (int i = 0; i < count; ++i) out["candidates"].push_back({{"image", png_base64(images[i])}, {"latent", zs[i]}});
  return out;
}

nlohmann::json Service::submit_edit(const nlohmann::json& body) {
  const LoadedModel& m = impl_->model(body);
  (void)field(body, "constraints");
  std::lock_guard lock(impl_->mutex);
  const std::string id = "job-" + std::to_string(impl_->next_job);
  Job job;
  job.ticket = {{"id", id}, {"status", "queued"}, {"progress", 0.0}, {"result", nullptr}, {"error", nullptr}};
  // Constraint problems fail the ticket at once with the reason.
  std::string invalid;
  try {
    (void)parse_constraints(body.at("constraints"), m.generator);
    body.value("config", nlohmann::json::object()).get<EditConfig>().validate();
  } catch (const ConfigError& e) {
    invalid = e.what();
  } catch (const nlohmann::json::exception& e) {
    invalid = std::string("invalid constraints: ") + e.what();
  }
  if (!invalid.empty()) {
    job.ticket["status"] = "failed";
    job.ticket["error"] = invalid;
    job.frozen = job.ticket.dump();
  } else {
    if (impl_->pending.size() >= impl_->max_queued) throw ServiceError(503, "edit queue is full");
    job.request = body;
    impl_->pending.push_back(id);
  }
  ++impl_->next_job;
  nlohmann::json ticket = job.ticket;
  impl_->jobs.emplace(id, std::move(job));
  impl_->cv.notify_one();
  return ticket;
}

std::string Service::job(const std::string& id) const {
  std::lock_guard lock(impl_->mutex);
  auto it = impl_->jobs.find(id);
  if (it == impl_->jobs.end()) throw ServiceError(404, "unknown job '" + id + "'");
  return it->second.frozen.empty() ? it->second.ticket.dump() : it->second.frozen;
}

int Service::start(const std::string& host, int port) {
  auto& s = impl_->server;
  const int bound = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->server_thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

}  // namespace branchgan
