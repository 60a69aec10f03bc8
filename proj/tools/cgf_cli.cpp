#include "cgf/scenario.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iostream>
#include <set>

namespace {

using json = nlohmann::json;

struct Shared {
  std::string scenario;
  std::string out = "out";
  std::optional<unsigned> seed;
  std::string eps_grid;
  std::string profile;
};

// Operations each shortcut subcommand keeps; `run` keeps everything.
const std::map<std::string, std::set<std::string>> kSubsets{
    {"classify", {"classify_moderate", "classify_negligible", "equiv", "certify", "manifold_equiv"}},
    {"embed", {"embed_circle", "embed_continuous", "probe_tubular"}},
    {"glue", {"glue"}},
    {"assoc", {"assoc", "member", "model_vb_equiv", "limit_functional"}},
    {"young", {"young"}},
    {"tangent", {"tangent", "vb_equiv", "model_vb_equiv"}},
    {"probe-tubular", {"probe_tubular"}},
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

int execute(const std::string& command, const Shared& s) {
  const auto start = std::chrono::steady_clock::now();
  try {
    cgf::RunOptions opts;
    opts.seed = s.seed;
    if (!s.eps_grid.empty()) opts.grid = cgf::parse_eps_grid(s.eps_grid);
    if (!s.profile.empty()) opts.tolerance_profile = s.profile;

    const std::filesystem::path path(s.scenario);
    json scenario = cgf::load_scenario(path);
    cgf::validate_scenario(scenario, path.parent_path(), opts);

    if (command != "run") {
      const auto& keep = kSubsets.at(command);
      json ops = json::array();
      for (const json& op : scenario.value("operations", json::array()))
        if (keep.count(op.at("op").get<std::string>())) ops.push_back(op);
      if (ops.empty()) throw cgf::SchemaError("scenario has no operations for '" + command + "'");
      scenario["operations"] = ops;
    }

    const cgf::RunResult r = cgf::run_scenario(scenario, path.parent_path(), opts);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json meta{{"scenario", s.scenario},   {"command", command},          {"timestamp", utc_now()},
                    {"threads", cgf::thread_count()}, {"elapsed_seconds", elapsed}};
    cgf::write_outputs(r, meta, s.out);

    for (const json& res : r.report.at("results"))
      std::cout << res.at("id").get<std::string>() << "  " << res.at("op").get<std::string>()
                << (res.at("inconclusive").get<bool>() ? "  INCONCLUSIVE" : "") << '\n';
    std::cout << "wrote " << (std::filesystem::path(s.out) / "report.json").string() << '\n';
    if (r.inconclusive) std::cout << "note: some verdicts are inconclusive\n";
    return 0;
  } catch (const cgf::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "execution error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized functions with values in manifolds: scenario runner"};
  app.require_subcommand(1);
  Shared s;

  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("scenario", s.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", s.out, "output directory")->capture_default_str();
    sub->add_option("--seed", s.seed, "seed for randomized sampling");
    sub->add_option("--eps-grid", s.eps_grid, "eps0,ratio,steps");
    sub->add_option("--tolerance-profile", s.profile, "tolerance profile")->check(CLI::IsMember({"strict", "default"}));
    return sub;
  };
  add("run", "run every operation");
  add("classify", "moderate/negligible/equivalence verdicts");
  add("embed", "embeddings of continuous and circle-valued maps");
  add("glue", "sheaf gluing");
  add("assoc", "membership and model association");
  add("young", "Young-measure estimates");
  add("tangent", "tangent maps and vb verdicts");
  add("probe-tubular", "tubular-neighbourhood failure probe");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return execute(app.get_subcommands().front()->get_name(), s);
}
