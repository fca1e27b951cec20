#include "edgeinfer/gateway.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "edgeinfer/engine.hpp"
#include "edgeinfer/error.hpp"
#include "edgeinfer/version.hpp"

namespace edgeinfer {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::optional<std::string> process_env(const char* name) {
  if (const char* v = std::getenv(name); v != nullptr && *v != '\0') return std::string(v);
  return std::nullopt;
}

namespace {

template <class T>
T parse_number(const std::string& text, const char* what) {
  T v{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be an integer, got '" + text + "'", what);
  }
  return v;
}

}  // namespace

GatewaySettings resolve_settings(const GatewayOverrides& flags, const EnvLookup& env) {
  GatewaySettings s;
  if (flags.host) s.host = *flags.host;
  else if (auto v = env("EDGEINFER_HOST")) s.host = *v;

  if (flags.port) s.port = *flags.port;
  else if (auto v = env("EDGEINFER_PORT")) s.port = parse_number<int>(*v, "EDGEINFER_PORT");
  if (s.port < 0 || s.port > 65535) throw Error(ErrorCode::kInvalidArgument, "port must be within 0..65535", "port");

  if (flags.models_dir) s.models_dir = *flags.models_dir;
  else if (auto v = env("EDGEINFER_MODELS_DIR")) s.models_dir = *v;

  if (flags.static_dir) s.static_dir = *flags.static_dir;
  else if (auto v = env("EDGEINFER_STATIC_DIR")) s.static_dir = fs::path(*v);

  if (flags.max_concurrent) s.max_concurrent = *flags.max_concurrent;
  else if (auto v = env("EDGEINFER_MAX_CONCURRENT")) s.max_concurrent = parse_number<unsigned>(*v, "EDGEINFER_MAX_CONCURRENT");

  if (flags.audit_log) s.audit_log = *flags.audit_log;
  else if (auto v = env("EDGEINFER_AUDIT_LOG")) s.audit_log = fs::path(*v);
  return s;
}

std::string precision_of_variant(std::string_view variant) {
  if (variant == "fp32opt") return "fp32";
  return std::string(variant);
}

namespace {

int variant_rank(std::string_view id) {
  static constexpr std::string_view order[] = {"fp32", "fp32opt", "fp16", "int8"};
  for (int i = 0; i < 4; ++i) {
    if (order[i] == id) return i;
  }
  return 4;
}

}  // namespace

void VariantRegistry::add(ModelBundle b) {
  if (b.meta.classes.empty()) throw Error(ErrorCode::kMalformedBundle, "bundle '" + b.meta.name + "' lists no classes");
  if (b.graph.outputs.size() != 1) {
    throw Error(ErrorCode::kMalformedBundle, "bundle '" + b.meta.name + "' must have exactly one output to serve");
  }
  std::string id = b.meta.variant;
  if (find(id) != nullptr) throw Error(ErrorCode::kInvalidArgument, "two bundles share variant id '" + id + "'", id);
  RegisteredVariant v{id, precision_of_variant(id), std::move(b), {}};
  v.size = size_of(v.bundle);
  entries_.push_back(std::move(v));
  std::stable_sort(entries_.begin(), entries_.end(), [](const RegisteredVariant& a, const RegisteredVariant& b) {
    const int ra = variant_rank(a.id), rb = variant_rank(b.id);
    return ra != rb ? ra < rb : a.id < b.id;
  });
}

const RegisteredVariant* VariantRegistry::find(std::string_view id) const {
  for (const auto& e : entries_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

VariantRegistry VariantRegistry::load(const fs::path& models_dir) {
  if (!fs::is_directory(models_dir)) {
    throw Error(ErrorCode::kIo, "models directory '" + models_dir.string() + "' does not exist", models_dir.string());
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(models_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / kManifestFile)) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw Error(ErrorCode::kIo, "no model bundles under '" + models_dir.string() + "'", models_dir.string());
  }
  VariantRegistry r;
  for (const auto& d : dirs) {
    try {
      r.add(load_bundle(d));
    } catch (const Error& e) {
      throw Error(e.code(), d.filename().string() + ": " + e.what(), d.string());
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::string base64(const std::string& in) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const unsigned n = (static_cast<unsigned char>(in[i]) << 16) | (static_cast<unsigned char>(in[i + 1]) << 8) |
                       static_cast<unsigned char>(in[i + 2]);
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += table[(n >> 6) & 63];
    out += table[n & 63];
  }
  if (i < in.size()) {
    unsigned n = static_cast<unsigned char>(in[i]) << 16;
    if (i + 1 < in.size()) n |= static_cast<unsigned char>(in[i + 1]) << 8;
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += i + 1 < in.size() ? table[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& j) { res.set_content(j.dump(), "application/json"); }

constexpr const char* kNoUiPage =
    "<!doctype html><title>edgeinfer</title><p>The browser UI is not installed. "
    "API: <a href=\"/api/health\">/api/health</a>, <a href=\"/api/models\">/api/models</a>, POST /api/predict.</p>";

}  // namespace

struct Gateway::Impl {
  VariantRegistry registry;
  GatewaySettings settings;
  httplib::Server server;
  std::counting_semaphore<> slots;
  std::mutex audit_mu;
  std::thread thread;
  int bound_port = -1;

  Impl(VariantRegistry r, GatewaySettings s)
      : registry(std::move(r)),
        settings(std::move(s)),
        slots(static_cast<std::ptrdiff_t>(
            settings.max_concurrent ? settings.max_concurrent : std::max(1u, std::thread::hardware_concurrency()))) {
    if (registry.size() == 0) throw Error(ErrorCode::kInvalidArgument, "gateway needs at least one model variant");
    if (settings.workers < 1) throw Error(ErrorCode::kInvalidArgument, "gateway needs at least one worker thread");
    routes();
  }

  json health() const {
    return json{{"status", "ok"}, {"service", "edgeinfer-gateway"}, {"version", kVersion}, {"variants", registry.size()}};
  }

  json models() const {
    json arr = json::array();
    for (const auto& v : registry.entries()) {
      arr.push_back({{"id", v.id},
                     {"precision", v.precision},
                     {"size_bytes", v.size.container_bytes},
                     {"payload_bytes", v.size.payload_bytes},
                     {"classes", v.bundle.meta.classes}});
    }
    return json{{"models", arr}};
  }

  void audit(const std::string& image, const std::string& model, const Prediction& p) {
    if (!settings.audit_log) return;
    const auto digest = sha256({reinterpret_cast<const std::uint8_t*>(image.data()), image.size()});
    const json line{{"time", creation_timestamp()},
                    {"sha256", to_hex(digest)},
                    {"bytes", image.size()},
                    {"model", model},
                    {"label", p.label},
                    {"confidence", p.confidence}};
    std::lock_guard lock(audit_mu);
    std::ofstream out(*settings.audit_log, std::ios::app);
    out << line.dump() << "\n";
  }

  void predict_route(const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      return send_error(res, 422, "missing-field", "expected multipart/form-data with fields 'image' and 'model'");
    }
    if (!req.has_file("image") || req.get_file_value("image").content.empty()) {
      return send_error(res, 422, "missing-field", "form field 'image' is required");
    }
    std::string model;
    if (req.has_file("model")) model = req.get_file_value("model").content;
    else if (req.has_param("model")) model = req.get_param_value("model");
    if (model.empty()) return send_error(res, 422, "missing-field", "form field 'model' is required");

    const auto image = req.get_file_value("image");
    if (image.content.size() > settings.max_upload_bytes) {
      return send_error(res, 413, "payload-too-large",
                        "image exceeds " + std::to_string(settings.max_upload_bytes) + " bytes");
    }
    const auto* variant = registry.find(model);
    if (variant == nullptr) return send_error(res, 404, "unknown-model", "no model variant '" + model + "'");

    Prediction p;
    try {
      slots.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots};
      p = predict(variant->bundle,
                  std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(image.content.data()),
                                                image.content.size()));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kUndecodableImage || e.code() == ErrorCode::kUnsupportedFormat) {
        return send_error(res, 400, "undecodable-image", e.what());
      }
      return send_error(res, 500, to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      return send_error(res, 500, "internal-error", e.what());
    }
    audit(image.content, model, p);

    json j{{"label", p.label},
           {"class_index", p.class_index},
           {"confidence", p.confidence},
           {"model", variant->id},
           {"latency_ms", p.latency_ms}};
    const bool echo = req.has_file("echo") ? req.get_file_value("echo").content == "1" : req.get_param_value("echo") == "1";
    if (echo) {
      const std::string type = image.content_type.empty() ? "application/octet-stream" : image.content_type;
      j["image_echo"] = "data:" + type + ";base64," + base64(image.content);
    } else {
      j["image_echo"] = nullptr;
    }
    send_json(res, j);
  }

  void routes() {
    // Multipart framing adds a little over the image itself.
    server.set_payload_max_length(settings.max_upload_bytes + 64 * 1024);
    const unsigned workers = settings.workers;
    server.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };

    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) { send_json(res, health()); });
    server.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) { send_json(res, models()); });
    server.Post("/api/predict",
                [this](const httplib::Request& req, httplib::Response& res) { predict_route(req, res); });

    if (settings.static_dir) {
      if (!server.set_mount_point("/", settings.static_dir->string())) {
        throw Error(ErrorCode::kIo, "static UI directory '" + settings.static_dir->string() + "' does not exist",
                    settings.static_dir->string());
      }
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kNoUiPage, "text/html"); });
    }

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      switch (res.status) {
        case 413: send_error(res, 413, "payload-too-large", "request body exceeds the upload limit"); break;
        case 404: send_error(res, 404, "not-found", "no such resource"); break;
        case 400: send_error(res, 400, "bad-request", "malformed request"); break;
        default: send_error(res, res.status, "http-" + std::to_string(res.status), "request failed"); break;
      }
      return httplib::Server::HandlerResponse::Handled;
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "unexpected failure";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, "internal-error", what);
    });
  }
};

Gateway::Gateway(VariantRegistry registry, GatewaySettings settings)
    : impl_(std::make_unique<Impl>(std::move(registry), std::move(settings))) {}

Gateway::~Gateway() { stop(); }

int Gateway::bind() {
  if (impl_->bound_port >= 0) return impl_->bound_port;
  const auto& s = impl_->settings;
  if (s.port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(s.host);
  } else if (impl_->server.bind_to_port(s.host, s.port)) {
    impl_->bound_port = s.port;
  }
  if (impl_->bound_port < 0) {
    throw Error(ErrorCode::kIo, "cannot bind " + s.host + ":" + std::to_string(s.port), s.host);
  }
  return impl_->bound_port;
}

void Gateway::serve() {
  bind();
  impl_->server.listen_after_bind();
}

void Gateway::start() {
  bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Gateway::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Gateway::port() const { return impl_->bound_port; }
const VariantRegistry& Gateway::registry() const { return impl_->registry; }
const GatewaySettings& Gateway::settings() const { return impl_->settings; }

}  // namespace edgeinfer
