#include "gridfloor/cli.hpp"

#include <algorithm>
#include <exception>
#include <optional>

#include "CLI11.hpp"
#include "gridfloor/error.hpp"
#include "gridfloor/pipeline.hpp"

namespace gridfloor {

namespace {

struct StageFlags {
  std::string config_path;
  std::string in;
  std::string out;
  std::string model;
  std::map<std::string, std::string> overrides;
};

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  const long v = [&] {
    try {
      return io::parse_long(text);
    } catch (const Error&) {
      throw UsageError(origin + ": seed must be a non-negative integer, got '" + text + "'");
    }
  }();
  if (v < 0) throw UsageError(origin + ": seed must be a non-negative integer, got '" + text + "'");
  return static_cast<std::uint64_t>(v);
}

pipeline::StageContext resolve(const std::string& stage, const StageFlags& flags,
                               const std::map<std::string, std::string>& env) {
  pipeline::StageContext ctx;
  ctx.stage = stage;
  ctx.in = flags.in;
  ctx.out = flags.out;
  ctx.model = flags.model;
  ctx.config = pipeline::default_config(stage);
  if (!flags.config_path.empty()) {
    const auto file = io::parse_config(io::read_file(flags.config_path));
    for (const auto& [k, v] : file) {
      if (!ctx.config.contains(k)) {
        throw UsageError(flags.config_path + ": '" + stage + "' has no setting '" + k + "'");
      }
      ctx.config[k] = v;
    }
  }
  // Seed precedence: flag, then environment, then file, then default.
  if (auto it = env.find("GRIDFLOOR_SEED"); it != env.end() && !flags.overrides.contains("seed")) {
    ctx.config["seed"] = it->second;
  }
  for (const auto& [k, v] : flags.overrides) ctx.config[k] = v;
  ctx.seed = parse_seed(ctx.config.at("seed"), "seed");
  ctx.config["seed"] = std::to_string(ctx.seed);
  ctx.grid = pipeline::parse_grid(ctx.config.at("grid"));
  return ctx;
}

}  // namespace

int run_command(const std::vector<std::string>& args, const std::map<std::string, std::string>& env,
                std::ostream& out, std::ostream& err) {
  CLI::App app{"gridfloor: sensor-floor localisation pipeline"};
  app.name("gridfloor");
  app.require_subcommand(1);

  std::map<std::string, StageFlags> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& stage : pipeline::stage_names()) {
    auto& f = flags[stage];
    auto* sub = app.add_subcommand(stage);
    subs[stage] = sub;
    sub->add_option("--config", f.config_path, "key=value settings file")->check(CLI::ExistingFile);
    auto* in = sub->add_option("--in", f.in, "input directory");
    if (stage != "simulate") in->required();
    sub->add_option("--out", f.out, "output directory")->required();
    auto* model = sub->add_option("--model", f.model, "model: rf, cnn or rcnn")
                      ->check(CLI::IsMember({"rf", "cnn", "rcnn"}));
    if (stage == "predict") model->required();
    for (const auto& [key, value] : pipeline::default_config(stage)) {
      sub->add_option_function<std::string>(
          "--" + key, [&f, key](const std::string& v) { f.overrides[key] = v; },
          "default " + value);
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  const auto it = std::find_if(subs.begin(), subs.end(), [](const auto& kv) { return kv.second->parsed(); });
  const std::string stage = it->first;
  try {
    const auto ctx = resolve(stage, flags.at(stage), env);
    std::filesystem::create_directories(ctx.out);
    const auto result = pipeline::run_stage(ctx);
    pipeline::write_manifest(ctx, result);
    out << stage << ": wrote " << result.outputs.size() << " file(s) to " << ctx.out.string() << "\n";
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << stage << " failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gridfloor
