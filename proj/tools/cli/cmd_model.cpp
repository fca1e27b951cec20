#include <json.hpp>
#include <ostream>

#include "common.hpp"
#include "edgeinfer/fixtures.hpp"
#include "edgeinfer/graph.hpp"

namespace edgeinfer::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json describe(const ModelBundle& b) {
  const auto size = size_of(b);
  json census = json::object();
  for (const auto& [op, n] : op_census(b.graph)) census[std::string(to_string(op))] = n;
  json inputs = json::array();
  for (const auto& in : b.graph.inputs) {
    inputs.push_back({{"id", in.node_id}, {"shape", in.shape}, {"dtype", to_string(in.dtype)}});
  }
  const auto& p = b.meta.preprocess;
  return json{{"name", b.meta.name},
              {"variant", b.meta.variant},
              {"classes", b.meta.classes},
              {"positive_class", b.meta.positive_class},
              {"preprocess", {{"height", p.height}, {"width", p.width}, {"value_range", to_string(p.value_range)}}},
              {"feature_node", b.meta.feature_node ? json(*b.meta.feature_node) : json(nullptr)},
              {"inputs", inputs},
              {"outputs", b.graph.outputs},
              {"nodes", b.graph.nodes.size()},
              {"weights", b.weights.size()},
              {"census", census},
              {"container_bytes", size.container_bytes},
              {"payload_bytes", size.payload_bytes},
              {"checksum", to_hex(b.checksum)}};
}

std::string describe_text(const json& j) {
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + std::string(16 - k.size(), ' ') + v + "\n"; };
  line("name", j["name"].get<std::string>());
  line("variant", j["variant"].get<std::string>());
  std::string classes;
  for (const auto& c : j["classes"]) classes += (classes.empty() ? "" : ", ") + c.get<std::string>();
  line("classes", classes);
  line("input", j["inputs"].empty() ? "-" : j["inputs"][0]["id"].get<std::string>() + " " + j["inputs"][0]["shape"].dump() +
                                                 " " + j["inputs"][0]["dtype"].get<std::string>());
  line("nodes", std::to_string(j["nodes"].get<std::size_t>()));
  line("container", std::to_string(j["container_bytes"].get<std::size_t>()) + " bytes");
  line("payload", std::to_string(j["payload_bytes"].get<std::size_t>()) + " bytes");
  line("checksum", j["checksum"].get<std::string>());
  out += "op census:\n";
  for (const auto& [op, n] : j["census"].items()) out += "  " + op + "\t" + std::to_string(n.get<std::size_t>()) + "\n";
  return out;
}

}  // namespace

void add_model_commands(CLI::App& app, Context& ctx) {
  auto* model = app.add_subcommand("model", "Inspect, validate or generate model bundles");
  model->require_subcommand(1);

  {
    auto* cmd = model->add_subcommand("inspect", "Print metadata, sizes and the op census of a bundle");
    auto dir = std::make_shared<fs::path>();
    auto report = std::make_shared<fs::path>();
    cmd->add_option("bundle", *dir, "Bundle directory")->required();
    cmd->add_option("--out", *report, "Write the description as JSON to this file");
    cmd->callback([&ctx, dir, report] {
      const auto j = describe(load_bundle(*dir));
      ctx.out << describe_text(j);
      if (!report->empty()) write_text(*report, j.dump(2) + "\n");
    });
  }
  {
    auto* cmd = model->add_subcommand("validate", "Load a bundle, verifying checksum, format version and graph");
    auto dir = std::make_shared<fs::path>();
    cmd->add_option("bundle", *dir, "Bundle directory")->required();
    cmd->callback([&ctx, dir] {
      const auto b = load_bundle(*dir);
      ctx.out << "ok " << b.meta.name << " (" << b.meta.variant << ") " << b.graph.nodes.size() << " nodes, checksum "
              << to_hex(b.checksum) << "\n";
    });
  }
  {
    auto* cmd = model->add_subcommand("fixture", "Write the randomly initialised micro MobileNet-style backbone");
    auto out = std::make_shared<fs::path>();
    auto opts = std::make_shared<MicroMobileNetOptions>();
    cmd->add_option("--out", *out, "Bundle directory to create")->required();
    cmd->add_option("--seed", opts->seed, "Weight initialisation seed")->capture_default_str();
    cmd->add_option("--input-size", opts->input_size, "Square input resolution")->capture_default_str()->check(CLI::Range(8, 1024));
    cmd->add_option("--head-width", opts->head_width, "Append a random dense head of this width (0 = backbone only)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--classes", opts->classes, "Class names")->capture_default_str();
    cmd->add_option("--name", opts->name, "Model name")->capture_default_str();
    cmd->callback([&ctx, out, opts] {
      const auto b = micro_mobilenet(*opts);
      save_bundle(b, *out);
      const auto s = size_of(b);
      ctx.out << "wrote " << out->string() << " (" << b.graph.nodes.size() << " nodes, " << s.payload_bytes
              << " payload bytes)\n";
    });
  }
}

}  // namespace edgeinfer::cli
