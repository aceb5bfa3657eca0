#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <set>
#include <sstream>

#include "divmin/experiment.hpp"
#include "divmin/suite.hpp"

namespace divmin {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& message) { throw Error(ErrorCode::kInvalidConfig, message); }

void allow_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) bad(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) bad("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T read(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad("'" + key + "' in " + where + " has the wrong type");
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) { return Rng(seed, stream).next_u64(); }

std::vector<double> initial_parameters(const Objective& obj, const ExperimentConfig& config, int restart) {
  const std::string& init = restart == 0 ? config.optim.init : std::string("random");
  if (init == "declared") return obj.parameters();
  if (init == "zeros") return std::vector<double>(obj.parameters().size(), 0.0);
  return random_parameters(obj.problem, derived_seed(config.seed, 1000 + static_cast<std::uint64_t>(restart)),
                           config.optim.init_scale);
}

std::string fmt(double v, int precision = 2) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  allow_keys(doc, "config", {"schema_version", "seed", "preset", "preset_options", "system", "horizon", "objective",
                             "optim", "output_dir", "plot"});
  ExperimentConfig c;
  if (!doc.contains("schema_version")) bad("config needs schema_version");
  c.schema_version = read<int>(doc, "schema_version", "config");
  if (c.schema_version != kConfigSchemaVersion) {
    bad("unsupported schema_version " + std::to_string(c.schema_version));
  }
  if (!doc.contains("seed")) bad("config needs a seed");
  if (!doc.at("seed").is_number_unsigned()) bad("seed must be a non-negative integer");
  c.seed = doc.at("seed").get<std::uint64_t>();

  const bool has_preset = doc.contains("preset");
  const bool has_system = doc.contains("system");
  if (has_preset == has_system) bad("config needs exactly one of 'preset' or 'system'");
  if (has_preset) {
    c.preset = read<std::string>(doc, "preset", "config");
    if (doc.contains("preset_options")) {
      c.preset_options = doc.at("preset_options");
      if (!c.preset_options.is_object()) bad("preset_options must be an object");
    }
  } else {
    if (doc.contains("preset_options")) bad("preset_options needs a preset");
    c.system = doc.at("system");
    if (!c.system.is_object()) bad("system must be an object");
  }
  if (doc.contains("horizon")) {
    const json& h = doc.at("horizon");
    allow_keys(h, "horizon", {"T", "K", "split"});
    Horizon hz;
    if (h.contains("T")) hz.T = read<int>(h, "T", "horizon");
    if (h.contains("K")) hz.K = read<int>(h, "K", "horizon");
    if (h.contains("split")) hz.split = read<int>(h, "split", "horizon");
    c.horizon = hz;
  }

  if (!doc.contains("objective")) bad("config needs an objective");
  const json& obj = doc.at("objective");
  allow_keys(obj, "objective", {"family", "options"});
  if (!obj.contains("family")) bad("objective needs a family");
  c.family = read<std::string>(obj, "family", "objective");
  const auto& catalog = family_catalog();
  if (std::none_of(catalog.begin(), catalog.end(), [&](const FamilyInfo& f) { return f.name == c.family; })) {
    bad("unknown objective family '" + c.family + "'");
  }
  if (obj.contains("options")) {
    c.family_options = obj.at("options");
    if (!c.family_options.is_object()) bad("objective options must be an object");
  }

  if (doc.contains("optim")) {
    const json& o = doc.at("optim");
    allow_keys(o, "optim", {"step", "max_iters", "grad_tol", "init", "init_scale", "restarts", "anneal"});
    auto& oc = c.optim;
    if (o.contains("step")) oc.step = read<double>(o, "step", "optim");
    if (o.contains("max_iters")) oc.max_iters = read<int>(o, "max_iters", "optim");
    if (o.contains("grad_tol")) oc.grad_tol = read<double>(o, "grad_tol", "optim");
    if (o.contains("init")) oc.init = read<std::string>(o, "init", "optim");
    if (o.contains("init_scale")) oc.init_scale = read<double>(o, "init_scale", "optim");
    if (o.contains("restarts")) oc.restarts = read<int>(o, "restarts", "optim");
    if (o.contains("anneal")) {
      const json& a = o.at("anneal");
      allow_keys(a, "optim.anneal", {"factors", "temperatures"});
      if (!a.contains("factors") || !a.contains("temperatures")) bad("optim.anneal needs factors and temperatures");
      oc.anneal_factors = read<VarSet>(a, "factors", "optim.anneal");
      oc.anneal_temperatures = read<std::vector<double>>(a, "temperatures", "optim.anneal");
      if (oc.anneal_temperatures.empty()) bad("optim.anneal.temperatures must not be empty");
      for (double t : oc.anneal_temperatures) {
        if (!(t > 0.0)) bad("annealing temperatures must be positive");
      }
    }
    if (!(oc.step > 0.0)) bad("optim.step must be positive");
    if (oc.max_iters < 0) bad("optim.max_iters must be non-negative");
    if (!(oc.grad_tol > 0.0)) bad("optim.grad_tol must be positive");
    if (oc.init != "declared" && oc.init != "zeros" && oc.init != "random") {
      bad("optim.init must be declared, zeros or random");
    }
    if (!(oc.init_scale > 0.0)) bad("optim.init_scale must be positive");
    if (oc.restarts < 1) bad("optim.restarts must be at least 1");
  }
  if (doc.contains("output_dir")) c.output_dir = read<std::string>(doc, "output_dir", "config");
  if (doc.contains("plot")) c.plot = read<bool>(doc, "plot", "config");
  return c;
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["schema_version"] = schema_version;
  j["seed"] = seed;
  if (!preset.empty()) {
    j["preset"] = preset;
    j["preset_options"] = ordered_json::parse(preset_options.dump());
  } else {
    j["system"] = ordered_json::parse(system.dump());
  }
  if (horizon) j["horizon"] = {{"T", horizon->T}, {"K", horizon->K}, {"split", horizon->split}};
  j["objective"] = {{"family", family}, {"options", ordered_json::parse(family_options.dump())}};
  ordered_json o;
  o["step"] = optim.step;
  o["max_iters"] = optim.max_iters;
  o["grad_tol"] = optim.grad_tol;
  o["init"] = optim.init;
  o["init_scale"] = optim.init_scale;
  o["restarts"] = optim.restarts;
  if (!optim.anneal_temperatures.empty()) {
    o["anneal"] = {{"factors", optim.anneal_factors}, {"temperatures", optim.anneal_temperatures}};
  }
  j["optim"] = o;
  j["output_dir"] = output_dir;
  j["plot"] = plot;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    bad("config '" + path + "' is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

Problem problem_of(const ExperimentConfig& config) {
  Problem p = config.preset.empty() ? problem_from_json(config.system) : make_preset(config.preset, config.preset_options);
  if (config.horizon) {
    p.horizon = *config.horizon;
    validate_problem(p);
  }
  return p;
}

Objective objective_of(const ExperimentConfig& config) {
  return make_objective(config.family, problem_of(config), config.family_options);
}

RunResult run_experiment(const ExperimentConfig& config) {
  const Objective obj = objective_of(config);
  OptimOptions options;
  options.step = config.optim.step;
  options.max_iters = config.optim.max_iters;
  options.grad_tol = config.optim.grad_tol;

  std::optional<RunResult> best;
  for (int r = 0; r < config.optim.restarts; ++r) {
    std::vector<double> phi0 = initial_parameters(obj, config, r);
    RunResult run{config.optim.anneal_temperatures.empty()
                      ? optimize(obj, std::move(phi0), options)
                      : anneal(obj, std::move(phi0), config.optim.anneal_factors, config.optim.anneal_temperatures,
                               options),
                  r, false};
    run.divergent = run.trace.reason == Termination::kDivergence || run.trace.final.divergent;
    if (!best || (best->divergent && !run.divergent) ||
        (!run.divergent && run.trace.final.total < best->trace.final.total)) {
      best = std::move(run);
    }
  }
  return std::move(*best);
}

ordered_json make_report(const ExperimentConfig& config, const RunResult& run, const std::string& timestamp) {
  const OptimTrace& trace = run.trace;
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["tool"] = "divmin";
  j["timestamp"] = timestamp;
  j["seed"] = config.seed;
  j["config"] = config.to_json();
  j["problem"] = trace.objective.problem.name;
  j["family"] = trace.objective.family;
  j["equation"] = trace.objective.equation;
  j["termination"] = std::string(to_string(trace.reason));
  j["iterations"] = trace.rows.empty() ? 0 : trace.rows.back().iter;
  j["restart"] = run.restart;
  j["parameters"] = trace.phi.size();
  j["phi_hash"] = hex64(hash_parameters(trace.phi));
  j["final_grad_norm"] = trace.rows.empty() ? 0.0 : trace.rows.back().grad_norm;
  j["final"] = trace.final.to_json();
  ordered_json marginals = ordered_json::object();
  if (!run.divergent) {
    const auto joint = build_joint(trace.objective.at(trace.phi).problem.system);
    for (const auto& v : joint.scope()) {
      const auto m = marginalize(joint, {v.name});
      marginals[v.name] = std::vector<double>(m.probabilities().begin(), m.probabilities().end());
    }
  }
  j["marginals"] = marginals;
  if (!trace.scan.empty()) {
    const auto best = std::min_element(trace.scan.begin(), trace.scan.end(),
                                       [](const ScanRow& a, const ScanRow& b) { return a.total < b.total; });
    j["scan"] = {{"size", trace.scan.size()}, {"best_selectors", best->selectors}, {"best_total", best->total}};
  }
  return j;
}

std::string terms_svg(const OptimTrace& trace) {
  constexpr double kW = 800, kH = 480, kLeft = 70, kRight = 200, kTop = 30, kBottom = 50;
  static const char* palette[] = {"#000000", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};
  std::vector<std::pair<std::string, std::vector<double>>> series;
  series.emplace_back("total", std::vector<double>{});
  if (!trace.rows.empty()) {
    for (const auto& [name, v] : trace.rows.front().terms) series.emplace_back(name, std::vector<double>{});
  }
  for (const auto& r : trace.rows) {
    series[0].second.push_back(r.total);
    for (std::size_t k = 0; k < r.terms.size(); ++k) series[k + 1].second.push_back(r.terms[k].second);
  }
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& [name, values] : series) {
    for (double v : values) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const int last_iter = trace.rows.empty() ? 0 : trace.rows.back().iter;
  const double span_x = std::max(1, last_iter);
  auto px = [&](int iter) { return kLeft + (kW - kLeft - kRight) * iter / span_x; };
  auto py = [&](double v) { return kTop + (kH - kTop - kBottom) * (hi - v) / (hi - lo); };

  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
     << kW << ' ' << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(py(v) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
       << fmt(v, 3) << "</text>\n";
  }
  os << "<text x=\"" << kLeft << "\" y=\"" << kH - kBottom + 18 << "\" font-size=\"11\">0</text>\n";
  os << "<text x=\"" << kW - kRight << "\" y=\"" << kH - kBottom + 18 << "\" font-size=\"11\" text-anchor=\"end\">"
     << last_iter << "</text>\n";
  os << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12
     << "\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n";
  os << "<text x=\"16\" y=\"" << (kTop + kH - kBottom) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" "
     << "transform=\"rotate(-90 16 " << (kTop + kH - kBottom) / 2 << ")\">nats</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = palette[k % std::size(palette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << (k == 0 ? 2 : 1.5)
       << "\" points=\"";
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
      const double v = series[k].second[i];
      if (!std::isfinite(v)) continue;
      os << fmt(px(trace.rows[i].iter)) << ',' << fmt(py(v)) << ' ';
    }
    os << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << kW - kRight + 12 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kRight + 38 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
       << xml_escape(series[k].first) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_artifacts(const ExperimentConfig& config, const RunResult& run, const std::string& dir,
                     const std::string& timestamp) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kInvalidConfig, "cannot create output directory '" + dir + "'");
  auto open = [&](const std::string& name) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::kInvalidConfig, "cannot write '" + name + "' in '" + dir + "'");
    return out;
  };
  {
    auto out = open("trace.csv");
    run.trace.write_csv(out);
  }
  {
    auto out = open("report.json");
    out << make_report(config, run, timestamp).dump(2) << '\n';
  }
  if (!run.trace.scan.empty()) {
    auto out = open("scan.csv");
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << "index,selectors,total,joint_kl\n";
    for (std::size_t i = 0; i < run.trace.scan.size(); ++i) {
      const auto& row = run.trace.scan[i];
      os << i << ',';
      for (std::size_t k = 0; k < row.selectors.size(); ++k) os << (k ? ";" : "") << row.selectors[k];
      os << ',' << row.total << ',' << row.joint_kl << '\n';
    }
    out << os.str();
  }
  if (config.plot) {
    auto out = open("terms.svg");
    out << terms_svg(run.trace);
  }
}

ordered_json GradcheckReport::to_json() const {
  ordered_json j;
  j["parameters"] = parameters;
  j["points"] = ordered_json::array();
  for (const auto& p : points) {
    j["points"].push_back({{"seed", p.seed},
                           {"max_relative_deviation", p.check.max_relative_deviation},
                           {"worst_coordinate", p.check.worst_name},
                           {"score_residual", p.check.score_residual}});
  }
  j["worst_deviation"] = worst_deviation;
  j["worst_coordinate"] = worst_coordinate;
  j["worst_score_residual"] = worst_score_residual;
  j["passed"] = passed;
  return j;
}

GradcheckReport gradcheck(const ExperimentConfig& config, int points, double tolerance) {
  const Objective obj = objective_of(config);
  GradcheckReport report;
  report.parameters = obj.parameters().size();
  for (int i = 0; i < points; ++i) {
    const std::uint64_t seed = derived_seed(config.seed, 2000 + static_cast<std::uint64_t>(i));
    const auto phi = random_parameters(obj.problem, seed);
    GradcheckPoint point{seed, check_gradient(obj, phi)};
    if (point.check.max_relative_deviation >= report.worst_deviation && !phi.empty()) {
      report.worst_deviation = point.check.max_relative_deviation;
      report.worst_coordinate = point.check.worst_name;
    }
    report.worst_score_residual = std::max(report.worst_score_residual, point.check.score_residual);
    report.points.push_back(std::move(point));
  }
  report.passed = report.worst_deviation < tolerance && report.worst_score_residual < 1e-10;
  return report;
}

std::string list_text() {
  std::ostringstream os;
  os << "config schema version: " << kConfigSchemaVersion << '\n';
  os << "report schema version: " << kReportSchemaVersion << '\n';
  os << "presets:\n";
  for (const auto& p : preset_names()) os << "  " << p << '\n';
  os << "objective families:\n";
  for (const auto& f : family_catalog()) {
    os << "  " << std::left << std::setw(17) << f.name << std::setw(18) << f.equation << std::setw(20) << f.relation
       << f.summary << '\n';
  }
  os << "suite checks:\n";
  for (const auto& c : suite_checks()) os << "  " << std::left << std::setw(32) << c.name << c.equation << '\n';
  return os.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace divmin
