#include "cgf/scenario.hpp"

#include "cgf/dprime.hpp"
#include "cgf/manifold.hpp"
#include "cgf/mapsembed.hpp"
#include "cgf/mollify.hpp"
#include "cgf/sheaf.hpp"
#include "cgf/vbhom.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

namespace cgf {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// declarations

struct Context {
  fs::path base;
  EpsGrid grid;
  unsigned seed = 0;
  std::string profile = "default";
  PairingOptions pairing;
  AsymptoticOptions asym;

  std::map<std::string, std::shared_ptr<const EmbeddedManifold>> manifolds;
  std::map<std::string, EpsNet> nets;
  std::map<std::string, SampledMap> maps;
  std::map<std::string, Mollifier> mollifiers;
  std::map<std::string, TestFamily> families;
  std::map<std::string, std::vector<TestFunction>> tests;
  std::map<std::string, VBNet> vbnets;
};

Box box_of(const json& j) {
  if (!j.is_array() || j.empty()) throw SchemaError("a box is a non-empty list of [lo, hi] pairs");
  const auto n = static_cast<Eigen::Index>(j.size());
  Vector lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& p = j.at(static_cast<std::size_t>(i));
    if (!p.is_array() || p.size() != 2) throw SchemaError("a box is a non-empty list of [lo, hi] pairs");
    lo(i) = p.at(0).get<double>();
    hi(i) = p.at(1).get<double>();
  }
  return Box(lo, hi);
}

json box_json(const Box& b) {
  json j = json::array();
  for (int i = 0; i < b.dim(); ++i) j.push_back({b.lo()(i), b.hi()(i)});
  return j;
}

Vector vec_of(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Expr ambient_expr(const std::string& src, int s) {
  ParseOptions po;
  po.variables = ambient_variables(s);
  return parse(src, po);
}

EpsNet net_of(const json& j) {
  EpsNet n = EpsNet::parse(box_of(j.at("domain")), j.at("components").get<std::vector<std::string>>());
  if (j.contains("scale")) n = n.with_scale_hint(parse(j.at("scale").get<std::string>()));
  return n;
}

TestFamily family_of(const json& j) {
  const std::string preset = j.at("preset").get<std::string>();
  if (preset == "monomials") return TestFamily::monomials(j.at("degree").get<int>());
  if (preset == "trig") return TestFamily::trig(j.at("k").get<int>());
  if (preset == "coordinates") return TestFamily::coordinates(j.at("dim").get<int>());
  if (preset == "custom")
    return TestFamily::custom(j.at("dim").get<int>(), j.at("functions").get<std::vector<std::string>>());
  throw SchemaError("unknown test family preset '" + preset + "'");
}

std::vector<TestFunction> tests_of(const json& j) {
  const bool normalize = j.value("normalize", true);
  if (j.contains("row")) {
    const json& r = j.at("row");
    return bump_row(box_of(r.at("domain")), r.at("count").get<int>(), r.at("half_width").get<double>(), normalize);
  }
  std::vector<TestFunction> out;
  for (const json& b : j.at("bumps")) {
    const Vector c = vec_of(b.at("center"));
    const Vector w = b.at("half_width").is_number() ? Vector::Constant(c.size(), b.at("half_width").get<double>())
                                                    : vec_of(b.at("half_width"));
    out.emplace_back(c, w, normalize);
  }
  if (out.empty()) throw SchemaError("test function list is empty");
  return out;
}

template <typename T>
const T& lookup(const std::map<std::string, T>& table, const json& op, const std::string& key, const char* kind) {
  if (!op.contains(key) || !op.at(key).is_string())
    throw SchemaError("operation needs a string '" + key + "' naming one of the " + kind);
  const auto it = table.find(op.at(key).get<std::string>());
  if (it == table.end()) throw SchemaError("unknown " + std::string(kind) + " entry '" + op.at(key).get<std::string>() + "'");
  return it->second;
}

std::shared_ptr<const EmbeddedManifold> optional_manifold(const Context& c, const json& j) {
  if (!j.contains("manifold")) return nullptr;
  return lookup(c.manifolds, j, "manifold", "manifolds");
}

template <typename Fn>
void each(const json& scenario, const char* key, Fn&& fn) {
  if (!scenario.contains(key)) return;
  const json& section = scenario.at(key);
  if (!section.is_object()) throw SchemaError(std::string("'") + key + "' must be an object");
  for (auto it = section.begin(); it != section.end(); ++it) {
    try {
      fn(it.key(), it.value());
    } catch (const SchemaError& e) {
      throw SchemaError(std::string(key) + "." + it.key() + ": " + e.what());
    } catch (const std::exception& e) {
      throw SchemaError(std::string(key) + "." + it.key() + ": " + e.what());
    }
  }
}

Context declare(const json& s, const fs::path& base, const RunOptions& opts) {
  if (!s.is_object()) throw SchemaError("scenario must be a JSON object");
  static const std::set<std::string> known{"name",     "seed",        "eps_grid", "tolerance_profile", "manifolds",
                                           "nets",     "maps",        "mollifiers", "families",        "tests",
                                           "vbnets",   "operations"};
  for (auto it = s.begin(); it != s.end(); ++it)
    if (!known.count(it.key())) throw SchemaError("unknown top-level key '" + it.key() + "'");

  Context c;
  c.base = base;
  try {
    if (s.contains("eps_grid")) {
      const json& g = s.at("eps_grid");
      c.grid = EpsGrid{g.value("eps0", 0.5), g.value("ratio", 0.5), g.value("steps", 14)};
    }
    c.seed = s.value("seed", 0u);
    c.profile = s.value("tolerance_profile", std::string("default"));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad global setting: ") + e.what());
  }
  if (opts.grid) c.grid = *opts.grid;
  if (opts.seed) c.seed = *opts.seed;
  if (opts.tolerance_profile) c.profile = *opts.tolerance_profile;
  try {
    c.grid.validate();
    c.pairing = tolerance_profile(c.profile);
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  c.pairing.grid = c.grid;
  c.asym.grid = c.grid;

  each(s, "manifolds", [&](const std::string& k, const json& j) {
    c.manifolds[k] = std::make_shared<const EmbeddedManifold>(EmbeddedManifold::from_json(j));
  });
  each(s, "nets", [&](const std::string& k, const json& j) { c.nets.emplace(k, net_of(j)); });
  each(s, "maps", [&](const std::string& k, const json& j) { c.maps.emplace(k, SampledMap::load(j, base)); });
  each(s, "mollifiers", [&](const std::string& k, const json& j) { c.mollifiers.emplace(k, mollifier_from_json(j)); });
  each(s, "families", [&](const std::string& k, const json& j) { c.families.emplace(k, family_of(j)); });
  each(s, "tests", [&](const std::string& k, const json& j) { c.tests.emplace(k, tests_of(j)); });
  each(s, "vbnets", [&](const std::string& k, const json& j) {
    const auto M = optional_manifold(c, j);
    if (j.contains("tangent_of")) {
      c.vbnets.emplace(k, tangent(lookup(c.nets, j, "tangent_of", "nets"), M));
      return;
    }
    std::vector<std::vector<std::string>> fiber = j.at("fiber").get<std::vector<std::vector<std::string>>>();
    VBNet v = parse_vbnet(box_of(j.at("domain")), j.at("base").get<std::vector<std::string>>(), fiber, M);
    if (j.contains("scale")) {
      const Expr h = parse(j.at("scale").get<std::string>());
      v = VBNet(v.base().with_scale_hint(h), v.fiber().with_scale_hint(h), v.rows(), v.cols(), M);
    }
    c.vbnets.emplace(k, std::move(v));
  });
  return c;
}

// ---------------------------------------------------------------------------
// operations

struct OpOutput {
  json result;
  std::map<std::string, std::string> csv;  // suffix -> text
  bool inconclusive = false;
};

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) {
    out_ << std::setprecision(17);
    row(header);
  }
  template <typename... T>
  void add(const T&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  std::ostringstream out_;
};

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

std::string vec_cell(const Vector& v) {
  std::ostringstream o;
  o << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) o << (i ? " " : "") << v(i);
  return o.str();
}

Box compact_of(const json& op, const Box& fallback) { return op.contains("K") ? box_of(op.at("K")) : fallback; }

std::string verdict_csv(const AsymptoticVerdict& v) {
  Csv csv({"eps", "order", "sup"});
  for (std::size_t k = 0; k < v.series.size(); ++k)
    for (Eigen::Index j = 0; j < v.eps.size(); ++j) csv.add(v.eps(j), k, v.series[k](j));
  return csv.str();
}

std::string pairing_csv(const std::vector<PairingEntry>& entries) {
  Csv csv({"f", "phi", "eps", "pairing"});
  for (const auto& e : entries)
    for (Eigen::Index j = 0; j < e.series.eps.size(); ++j)
      csv.add(quoted(e.f), quoted(e.phi), e.series.eps(j), e.series.values(j));
  return csv.str();
}

using OpFn = std::function<OpOutput(Context&, const json&)>;

struct OpEntry {
  std::vector<std::pair<std::string, std::string>> refs;  // key -> declaration section
  OpFn run;
};

bool has_ref(const Context& c, const std::string& section, const std::string& name) {
  if (section == "nets") return c.nets.count(name) > 0;
  if (section == "maps") return c.maps.count(name) > 0;
  if (section == "manifolds") return c.manifolds.count(name) > 0;
  if (section == "mollifiers") return c.mollifiers.count(name) > 0;
  if (section == "families") return c.families.count(name) > 0;
  if (section == "tests") return c.tests.count(name) > 0;
  if (section == "vbnets") return c.vbnets.count(name) > 0;
  return false;
}

ConvolutionOptions conv_of(const json& op) {
  ConvolutionOptions o;
  o.max_panels = op.value("max_panels", 0);
  return o;
}

const std::map<std::string, OpEntry>& operations() {
  static const std::map<std::string, OpEntry> table{
      {"classify_moderate",
       {{{"net", "nets"}},
        [](Context& c, const json& op) {
          const EpsNet& n = lookup(c.nets, op, "net", "nets");
          const auto v = classify_moderate(n, compact_of(op, n.domain()), op.value("k_max", 0), c.asym);
          return OpOutput{to_json(v), {{"", verdict_csv(v)}}, v.classification == Classification::Inconclusive};
        }}},
      {"classify_negligible",
       {{{"net", "nets"}},
        [](Context& c, const json& op) {
          const EpsNet& n = lookup(c.nets, op, "net", "nets");
          const auto v = classify_negligible(n, compact_of(op, n.domain()), c.asym);
          return OpOutput{to_json(v), {{"", verdict_csv(v)}}, v.classification == Classification::Inconclusive};
        }}},
      {"equiv",
       {{{"u", "nets"}, {"v", "nets"}},
        [](Context& c, const json& op) {
          const EpsNet& u = lookup(c.nets, op, "u", "nets");
          const auto v = equiv_test(u, lookup(c.nets, op, "v", "nets"), compact_of(op, u.domain()), c.asym);
          json r = to_json(v);
          r["equivalent"] = v.negligible();
          return OpOutput{r, {{"", verdict_csv(v)}}, v.classification == Classification::Inconclusive};
        }}},
      {"certify",
       {{{"net", "nets"}, {"manifold", "manifolds"}},
        [](Context& c, const json& op) {
          const EpsNet& n = lookup(c.nets, op, "net", "nets");
          CertifyOptions co;
          co.grid = c.grid;
          const ManifoldNet m =
              certify_manifold_net(n, lookup(c.manifolds, op, "manifold", "manifolds"), {compact_of(op, n.domain())}, co);
          json bounds = json::array();
          for (const auto& b : m.bounds) bounds.push_back({{"K", box_json(b.K)}, {"image", box_json(b.image)}, {"stable", b.stable}});
          return OpOutput{{{"residual", m.residual}, {"c_bounded", m.c_bounded}, {"bounds", bounds}}, {}, false};
        }}},
      {"manifold_equiv",
       {{{"u", "nets"}, {"v", "nets"}, {"manifold", "manifolds"}},
        [](Context& c, const json& op) {
          const auto M = lookup(c.manifolds, op, "manifold", "manifolds");
          const EpsNet& u = lookup(c.nets, op, "u", "nets");
          const Box K = compact_of(op, u.domain());
          CertifyOptions co;
          co.grid = c.grid;
          const ManifoldNet mu = certify_manifold_net(u, M, {K}, co);
          const ManifoldNet mv = certify_manifold_net(lookup(c.nets, op, "v", "nets"), M, {K}, co);
          const auto v = manifold_equiv_test(mu, mv, K, c.asym);
          return OpOutput{to_json(v), {{"", verdict_csv(v.ambient)}}, false};
        }}},
      {"member",
       {{{"net", "nets"}, {"family", "families"}, {"tests", "tests"}},
        [](Context& c, const json& op) {
          const auto r = membership_test_A(lookup(c.nets, op, "net", "nets"), lookup(c.families, op, "family", "families"),
                                           lookup(c.tests, op, "tests", "tests"), c.pairing);
          return OpOutput{to_json(r), {{"", pairing_csv(r.entries)}}, r.inconclusive};
        }}},
      {"assoc",
       {{{"u", "nets"}, {"v", "nets"}, {"family", "families"}, {"tests", "tests"}},
        [](Context& c, const json& op) {
          const auto r = model_assoc_test(lookup(c.nets, op, "u", "nets"), lookup(c.nets, op, "v", "nets"),
                                          lookup(c.families, op, "family", "families"),
                                          lookup(c.tests, op, "tests", "tests"), c.pairing);
          return OpOutput{to_json(r), {{"", pairing_csv(r.entries)}}, r.inconclusive};
        }}},
      {"young",
       {{{"net", "nets"}},
        [](Context& c, const json& op) {
          const EpsNet& n = lookup(c.nets, op, "net", "nets");
          YoungOptions yo;
          yo.pairing = c.pairing;
          if (op.value("coordinate", std::string("component")) == "angle") yo.coordinate = YoungCoordinate::Angle;
          yo.component = op.value("component", 0);
          if (op.contains("range")) {
            yo.lo = op.at("range").at(0).get<double>();
            yo.hi = op.at("range").at(1).get<double>();
          }
          std::optional<Expr> phi;
          if (op.contains("phi")) phi = parse(op.at("phi").get<std::string>());
          const auto y = young_estimate(n, compact_of(op.contains("window") ? json{{"K", op.at("window")}} : op, n.domain()),
                                        phi, op.at("eps").get<double>(), op.value("bins", 64), yo);
          Csv csv({"bin_lo", "bin_hi", "mass", "density"});
          for (Eigen::Index k = 0; k < y.mass.size(); ++k) csv.add(y.edges(k), y.edges(k + 1), y.mass(k), y.density(k));
          return OpOutput{to_json(y), {{"", csv.str()}}, y.under_resolved};
        }}},
      {"limit_functional",
       {{{"net", "nets"}},
        [](Context& c, const json& op) {
          const EpsNet& n = lookup(c.nets, op, "net", "nets");
          const Expr f = ambient_expr(op.at("f").get<std::string>(), n.target_dim());
          const auto r = limit_functional(n, f, compact_of(op, n.domain()), op.value("n", 5),
                                          op.at("half_width").get<double>(), c.pairing);
          bool unresolved = false;
          for (auto s : r.status) unresolved = unresolved || s == PairingStatus::UnderResolved;
          return OpOutput{to_json(r), {}, unresolved};
        }}},
      {"probe_tubular",
       {{{"map", "maps"}, {"manifold", "manifolds"}, {"mollifier", "mollifiers"}},
        [](Context& c, const json& op) {
          const auto r = tubular_failure_probe(lookup(c.maps, op, "map", "maps"),
                                               *lookup(c.manifolds, op, "manifold", "manifolds"),
                                               lookup(c.mollifiers, op, "mollifier", "mollifiers"), c.grid,
                                               op.value("samples", 401), conv_of(op));
          Csv csv({"eps", "max_distance", "witness"});
          for (Eigen::Index j = 0; j < r.eps.size(); ++j)
            csv.add(r.eps(j), r.max_distance(j), quoted(vec_cell(r.witness[static_cast<std::size_t>(j)])));
          return OpOutput{to_json(r), {{"", csv.str()}}, false};
        }}},
      {"embed_circle",
       {{{"lift", "maps"}, {"mollifier", "mollifiers"}},
        [](Context& c, const json& op) {
          EmbedOptions eo;
          eo.grid = c.grid;
          eo.conv = conv_of(op);
          const SampledMap& lift = lookup(c.maps, op, "lift", "maps");
          const bool torus = op.value("torus", false);
          const ManifoldNet m = torus ? embed_torus_valued(lift, lookup(c.mollifiers, op, "mollifier", "mollifiers"), eo)
                                      : embed_circle_valued(lift, lookup(c.mollifiers, op, "mollifier", "mollifiers"), eo);
          Csv csv({"eps", "x", "value"});
          json pts = json::array();
          if (op.contains("points"))
            for (const json& p : op.at("points")) {
              const Vector x = p.is_number() ? Vector::Constant(1, p.get<double>()) : vec_of(p);
              json rows = json::array();
              for (double e : c.grid.values()) {
                const Vector y = m.net(x, e);
                rows.push_back({{"eps", e}, {"value", vec_json(y)}});
                csv.add(e, quoted(vec_cell(x)), quoted(vec_cell(y)));
              }
              pts.push_back({{"x", vec_json(x)}, {"values", rows}});
            }
          return OpOutput{{{"manifold", m.manifold->to_json()}, {"residual", m.residual}, {"c_bounded", m.c_bounded},
                           {"points", pts}},
                          {{"", csv.str()}},
                          false};
        }}},
      {"embed_continuous",
       {{{"map", "maps"}, {"manifold", "manifolds"}, {"mollifier", "mollifiers"}},
        [](Context& c, const json& op) {
          EmbedOptions eo;
          eo.grid = c.grid;
          eo.conv = conv_of(op);
          std::vector<Box> ex;
          if (op.contains("exhaustion"))
            for (const json& b : op.at("exhaustion")) ex.push_back(box_of(b));
          const SampledMap& u = lookup(c.maps, op, "map", "maps");
          const auto e = embed_continuous_map(u, lookup(c.manifolds, op, "manifold", "manifolds"),
                                              lookup(c.mollifiers, op, "mollifier", "mollifiers"), ex, eo);
          const Box K = compact_of(op, e.schedule.exhaustion().back());
          const Matrix X = K.grid(65);
          Csv csv({"eps", "sup_error"});
          json errs = json::array();
          for (double eps : c.grid.values()) {
            double w = 0.0;
            for (Eigen::Index i = 0; i < X.cols(); ++i) w = std::max(w, (e.net.net(X.col(i), eps) - u(X.col(i))).norm());
            errs.push_back(w);
            csv.add(eps, w);
          }
          return OpOutput{{{"residual", e.net.residual}, {"schedule", e.schedule.to_json()}, {"sup_error", errs}},
                          {{"", csv.str()}},
                          false};
        }}},
      {"glue",
       {{{"manifold", "manifolds"}},
        [](Context& c, const json& op) {
          const auto M = lookup(c.manifolds, op, "manifold", "manifolds");
          const Box X0 = box_of(op.at("X0"));
          std::vector<Patch> fam;
          std::vector<Box> sets;
          CertifyOptions co;
          co.grid = c.grid;
          for (const json& p : op.at("patches")) {
            const Box U = box_of(p.at("U"));
            sets.push_back(U);
            fam.push_back({U, certify_manifold_net(lookup(c.nets, p, "net", "nets"), M, {U}, co)});
          }
          const OpenCover cover{X0, sets};
          const PartitionOfUnity pou = build_partition(cover);
          std::vector<Box> ex{X0};
          if (op.contains("exhaustion")) {
            ex.clear();
            for (const json& b : op.at("exhaustion")) ex.push_back(box_of(b));
          }
          const GluingSchedule s = build_schedule(ex, op.at("thresholds").get<std::vector<double>>());
          GlueOptions go;
          go.grid = c.grid;
          go.equiv = c.asym;
          const GlueResult g = glue(fam, cover, pou, s, go);
          json checks = json::array();
          for (const auto& v : verify_restrictions(g.net, fam, cover, c.asym)) checks.push_back(to_json(v));
          return OpOutput{{{"residual", g.net.residual},
                           {"delta", g.delta},
                           {"halvings", g.halvings},
                           {"schedule", g.schedule.to_json()},
                           {"coherence", to_json(g.coherence)},
                           {"restrictions", checks}},
                          {},
                          false};
        }}},
      {"tangent",
       {{{"net", "nets"}},
        [](Context& c, const json& op) {
          const EpsNet& n = lookup(c.nets, op, "net", "nets");
          const VBNet t = tangent(n, optional_manifold(c, op));
          json fiber = json::array();
          for (int i = 0; i < t.rows(); ++i) {
            json row = json::array();
            for (int j = 0; j < t.cols(); ++j) row.push_back(to_string(t.entry(i, j)));
            fiber.push_back(row);
          }
          const double gap = tangent_fd_gap(t, op.value("fd_eps", 0.1), op.value("fd_points", 16), c.seed);
          const VBVerdict v = vb_moderate(t, compact_of(op, n.domain()), 0, c.asym);
          return OpOutput{{{"fiber", fiber}, {"fd_gap", gap}, {"fd_seed", c.seed}, {"moderate", to_json(v)}},
                          {{"", verdict_csv(v.fiber)}},
                          false};
        }}},
      {"vb_equiv",
       {{{"u", "vbnets"}, {"v", "vbnets"}},
        [](Context& c, const json& op) {
          const VBNet& u = lookup(c.vbnets, op, "u", "vbnets");
          const VBVerdict v = vb_equiv(u, lookup(c.vbnets, op, "v", "vbnets"), compact_of(op, u.base().domain()), c.asym);
          return OpOutput{to_json(v), {{"", verdict_csv(v.fiber)}}, false};
        }}},
      {"model_vb_equiv",
       {{{"u", "vbnets"}, {"v", "vbnets"}, {"family", "families"}, {"tests", "tests"}},
        [](Context& c, const json& op) {
          const auto r = model_vb_equiv(lookup(c.vbnets, op, "u", "vbnets"), lookup(c.vbnets, op, "v", "vbnets"),
                                        lookup(c.families, op, "family", "families"),
                                        lookup(c.tests, op, "tests", "tests"), c.pairing);
          std::vector<PairingEntry> all = r.base.entries;
          all.insert(all.end(), r.fiber.entries.begin(), r.fiber.entries.end());
          return OpOutput{to_json(r), {{"", pairing_csv(all)}}, r.inconclusive};
        }}},
  };
  return table;
}

std::string op_id(const json& op, std::size_t index) {
  return op.contains("id") ? op.at("id").get<std::string>() : "op" + std::to_string(index);
}

void check_operations(const json& s, const Context& c) {
  if (!s.contains("operations")) return;
  const json& ops = s.at("operations");
  if (!ops.is_array()) throw SchemaError("'operations' must be a list");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const json& op = ops.at(i);
    const std::string where = "operations[" + std::to_string(i) + "]";
    if (!op.is_object() || !op.contains("op") || !op.at("op").is_string())
      throw SchemaError(where + ": needs a string 'op'");
    const auto it = operations().find(op.at("op").get<std::string>());
    if (it == operations().end()) throw SchemaError(where + ": unknown operation '" + op.at("op").get<std::string>() + "'");
    if (op.contains("id") && !op.at("id").is_string()) throw SchemaError(where + ": 'id' must be a string");
    const std::string id = op_id(op, i);
    if (id.empty() || id.find_first_of("/\\") != std::string::npos) throw SchemaError(where + ": bad id '" + id + "'");
    if (!ids.insert(id).second) throw SchemaError(where + ": duplicate id '" + id + "'");
    for (const auto& [key, section] : it->second.refs) {
      if (!op.contains(key) || !op.at(key).is_string())
        throw SchemaError(where + ": missing reference '" + key + "'");
      if (!has_ref(c, section, op.at(key).get<std::string>()))
        throw SchemaError(where + ": '" + op.at(key).get<std::string>() + "' is not declared in " + section);
    }
    if (op.at("op") == "glue") {
      if (!op.contains("patches") || !op.at("patches").is_array() || op.at("patches").empty())
        throw SchemaError(where + ": glue needs a non-empty 'patches' list");
      for (const json& p : op.at("patches"))
        if (!p.contains("net") || !p.at("net").is_string() || !c.nets.count(p.at("net").get<std::string>()))
          throw SchemaError(where + ": every patch needs a declared 'net'");
    }
  }
}

}  // namespace

json load_scenario(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw SchemaError("cannot read scenario " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("scenario is not valid JSON: ") + e.what());
  }
}

void validate_scenario(const json& scenario, const fs::path& base_dir, const RunOptions& opts) {
  const Context c = declare(scenario, base_dir, opts);
  check_operations(scenario, c);
}

RunResult run_scenario(const json& scenario, const fs::path& base_dir, const RunOptions& opts) {
  Context c = declare(scenario, base_dir, opts);
  check_operations(scenario, c);

  RunResult out;
  json results = json::array();
  const json ops = scenario.value("operations", json::array());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const json& op = ops.at(i);
    const std::string id = op_id(op, i), name = op.at("op").get<std::string>();
    OpOutput o;
    try {
      o = operations().at(name).run(c, op);
    } catch (const SchemaError& e) {
      throw SchemaError("operation '" + id + "' (" + name + "): " + e.what());
    } catch (const json::exception& e) {
      throw SchemaError("operation '" + id + "' (" + name + "): " + e.what());
    } catch (const std::exception& e) {
      throw ExecutionError("operation '" + id + "' (" + name + "): " + e.what());
    }
    results.push_back({{"id", id}, {"op", name}, {"inconclusive", o.inconclusive}, {"result", std::move(o.result)}});
    out.inconclusive = out.inconclusive || o.inconclusive;
    for (auto& [suffix, text] : o.csv) out.series[id + suffix + ".csv"] = std::move(text);
  }
  out.report = {{"name", scenario.value("name", std::string())},
                {"seed", c.seed},
                {"eps_grid", {{"eps0", c.grid.eps0}, {"ratio", c.grid.ratio}, {"steps", c.grid.steps}}},
                {"tolerance_profile", c.profile},
                {"inconclusive", out.inconclusive},
                {"results", results}};
  return out;
}

void write_outputs(const RunResult& result, const json& meta, const fs::path& out_dir) {
  fs::create_directories(out_dir / "series");
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ExecutionError("cannot write " + p.string());
    f << text;
  };
  write(out_dir / "report.json", result.report.dump(2) + "\n");
  write(out_dir / "meta.json", meta.dump(2) + "\n");
  for (const auto& [name, text] : result.series) write(out_dir / "series" / name, text);
}

EpsGrid parse_eps_grid(const std::string& text) {
  std::istringstream in(text);
  EpsGrid g;
  char c1 = 0, c2 = 0;
  if (!(in >> g.eps0 >> c1 >> g.ratio >> c2 >> g.steps) || c1 != ',' || c2 != ',' || !in.eof())
    throw SchemaError("eps grid must be 'eps0,ratio,steps', got '" + text + "'");
  try {
    g.validate();
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  return g;
}

}  // namespace cgf
