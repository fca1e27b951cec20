#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "edgeinfer/bundle.hpp"

namespace edgeinfer {

inline constexpr std::size_t kMaxUploadBytes = 10u * 1024u * 1024u;

struct GatewaySettings {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::filesystem::path models_dir = "models";
  std::optional<std::filesystem::path> static_dir;
  /// Simultaneous inferences; 0 means one per hardware thread.
  unsigned max_concurrent = 0;
  /// HTTP worker threads.
  unsigned workers = 8;
  std::size_t max_upload_bytes = kMaxUploadBytes;
  /// When set, one JSON line per prediction with the image hash (never the
  /// image) is appended here.
  std::optional<std::filesystem::path> audit_log;
};

/// Values given on the command line; unset fields fall back to the
/// environment, then to the defaults above.
struct GatewayOverrides {
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::filesystem::path> models_dir;
  std::optional<std::filesystem::path> static_dir;
  std::optional<unsigned> max_concurrent;
  std::optional<std::filesystem::path> audit_log;
};

using EnvLookup = std::function<std::optional<std::string>(const char* name)>;

/// Reads the process environment.
std::optional<std::string> process_env(const char* name);

/// Precedence: flags, then EDGEINFER_HOST, EDGEINFER_PORT,
/// EDGEINFER_MODELS_DIR, EDGEINFER_STATIC_DIR, EDGEINFER_MAX_CONCURRENT,
/// EDGEINFER_AUDIT_LOG, then defaults.
GatewaySettings resolve_settings(const GatewayOverrides& flags, const EnvLookup& env = process_env);

struct RegisteredVariant {
  std::string id;
  std::string precision;
  ModelBundle bundle;
  BundleSize size;
};

/// Read-only after construction. Ids are bundle variant tags, listed as
/// fp32, fp32opt, fp16, int8, then any others by name.
class VariantRegistry {
 public:
  /// Every subdirectory holding a bundle manifest is loaded (and therefore
  /// validated). A missing directory or one without bundles is an error.
  static VariantRegistry load(const std::filesystem::path& models_dir);

  void add(ModelBundle b);
  const RegisteredVariant* find(std::string_view id) const;
  const std::vector<RegisteredVariant>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<RegisteredVariant> entries_;
};

std::string precision_of_variant(std::string_view variant);

class Gateway {
 public:
  Gateway(VariantRegistry registry, GatewaySettings settings);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind();
  /// Serves until `stop`; binds first if needed.
  void serve();
  /// `serve` on a background thread; returns once the socket is listening.
  void start();
  void stop();

  int port() const;
  const VariantRegistry& registry() const;
  const GatewaySettings& settings() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgeinfer
