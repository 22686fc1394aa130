// lfgof command-line front end.
//
// Every command resolves its configuration as defaults < --config file <
// flags, writes the result to <out>/config.json and then runs. Rerunning with
// `--config <out>/config.json` reproduces the outputs byte for byte.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lfgof/lfgof.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace lfgof;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind { text, integer, real, flag, texts, integers, reals };

struct Key {
  const char* name;
  Kind kind;
  const char* help;
};

// Every configurable setting. Flag "--n-calib" maps to key "n_calib".
const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"ref", Kind::texts, "reference table(s); one scenario per file"},
      {"obs", Kind::text, "observed summaries file (y_obs)"},
      {"new", Kind::text, "held-out summaries file (y_new)"},
      {"pods", Kind::text, "POD table for power on ingested tables"},
      {"schema", Kind::text, "column schema JSON for table files"},
      {"score", Kind::texts, "score: knn | lof | maxlof (or knn:3, maxlof:5-20)"},
      {"k", Kind::integer, "k for knn / lof (default 1 for knn, 5 for lof)"},
      {"k_min", Kind::integer, "smallest k of max-LOF"},
      {"k_max", Kind::integer, "largest k of max-LOF"},
      {"k_sweep", Kind::text, "add knn(k) and lof(k) for k in LO-HI"},
      {"n_calib", Kind::integer, "calibration rows (default: half of the table)"},
      {"budget", Kind::integers, "total simulation budgets (N_ref = N_calib = budget/2 for the prior test)"},
      {"n_post", Kind::integers, "posterior sample sizes"},
      {"method", Kind::texts, "posterior method: rejection | loclin | ridge"},
      {"lambda", Kind::reals, "ridge penalties"},
      {"transform", Kind::text, "parameter transform JSON"},
      {"raw_adjust", Kind::flag, "regress raw parameters and clip instead of using the transform space"},
      {"ci", Kind::text, "interval: none | asymptotic | bootstrap"},
      {"n_boot", Kind::integer, "bootstrap replicates"},
      {"level", Kind::real, "interval level"},
      {"bh", Kind::flag, "Benjamini-Hochberg adjustment across scenarios"},
      {"standardize", Kind::flag, "standardize summaries by the reference mean and sd before scoring"},
      {"resim", Kind::text, "built-in resimulator: laplace | gaussian"},
      {"phase", Kind::text, "external resimulation: none | export | import"},
      {"summaries_dir", Kind::text, "directory for exported parameters / imported summaries"},
      {"symmetric", Kind::flag, "also run with y_obs and y_new swapped"},
      {"test", Kind::text, "prior | holdout"},
      {"null", Kind::text, "toy null family: laplace | gaussian"},
      {"alt", Kind::text, "toy alternative family: laplace | gaussian"},
      {"d", Kind::integer, "toy raw-sample length"},
      {"m", Kind::integer, "toy number of L-moment summaries"},
      {"n_test", Kind::integer, "number of PODs"},
      {"alpha", Kind::real, "test level"},
      {"pvalues", Kind::reals, "p-values to adjust (bh)"},
      {"input", Kind::text, "file of p-values to adjust (bh)"},
      {"seed", Kind::integer, "master seed"},
      {"workers", Kind::integer, "worker threads (0 = all cores)"},
      {"out", Kind::text, "output directory"},
  };
  return k;
}

Json defaults() {
  return Json{{"ref", Json::array()},
              {"obs", ""},
              {"new", ""},
              {"pods", ""},
              {"schema", ""},
              {"score", Json::array({"maxlof"})},
              {"k", nullptr},
              {"k_min", 5},
              {"k_max", 20},
              {"k_sweep", ""},
              {"n_calib", nullptr},
              {"budget", Json::array()},
              {"n_post", Json::array({1000})},
              {"method", Json::array({"rejection"})},
              {"lambda", Json::array({1e-4, 1e-3, 1e-2})},
              {"transform", ""},
              {"raw_adjust", false},
              {"ci", "none"},
              {"n_boot", 500},
              {"level", 0.95},
              {"bh", false},
              {"standardize", false},
              {"resim", ""},
              {"phase", "none"},
              {"summaries_dir", ""},
              {"symmetric", false},
              {"test", "prior"},
              {"null", "laplace"},
              {"alt", "gaussian"},
              {"d", 350},
              {"m", 20},
              {"n_test", 1000},
              {"alpha", 0.05},
              {"pvalues", Json::array()},
              {"input", ""},
              {"seed", 1},
              {"workers", 0},
              {"out", "lfgof_out"}};
}

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (auto& c : s)
    if (c == '_') c = '-';
  return "--" + s;
}

std::uint64_t parse_integer(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw UsageError(flag_name(key) + ": '" + text + "' is not a non-negative integer");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw UsageError(flag_name(key) + ": '" + text + "' is not a number");
  return v;
}

// Type-checks a config-file value against the key table.
void check_value(const Key& key, const Json& v) {
  auto bad = [&] { throw UsageError("config key '" + std::string(key.name) + "' has the wrong type"); };
  if (v.is_null()) return;
  switch (key.kind) {
    case Kind::text:
      if (!v.is_string()) bad();
      break;
    case Kind::integer:
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) bad();
      break;
    case Kind::real:
      if (!v.is_number()) bad();
      break;
    case Kind::flag:
      if (!v.is_boolean()) bad();
      break;
    case Kind::texts:
      if (!v.is_array()) bad();
      for (const auto& e : v)
        if (!e.is_string()) bad();
      break;
    case Kind::integers:
      if (!v.is_array()) bad();
      for (const auto& e : v)
        if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0)) bad();
      break;
    case Kind::reals:
      if (!v.is_array()) bad();
      for (const auto& e : v)
        if (!e.is_number()) bad();
      break;
  }
}

struct Options {
  std::map<std::string, std::vector<std::string>> values;
  std::map<std::string, CLI::Option*> handles;
  std::string config;
};

void add_options(CLI::App* sub, Options& opts, const std::vector<std::string>& names) {
  sub->add_option("--config", opts.config, "JSON config file (flags override it)");
  for (const auto& name : names) {
    const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return name == k.name; });
    const Key& key = *it;
    CLI::Option* opt = nullptr;
    if (key.kind == Kind::flag) {
      opt = sub->add_flag(flag_name(name), key.help);
    } else {
      auto& slot = opts.values[name];
      opt = sub->add_option(flag_name(name), slot, key.help);
      if (key.kind == Kind::text || key.kind == Kind::integer || key.kind == Kind::real) {
        opt->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      } else {
        opt->expected(1, CLI::detail::expected_max_vector_size);
      }
    }
    opts.handles[name] = opt;
  }
}

Json resolve(const std::string& command, const Options& opts) {
  Json config = defaults();
  if (!opts.config.empty()) {
    std::ifstream in(opts.config);
    if (!in) throw UsageError("cannot open config file " + opts.config);
    Json file;
    try {
      in >> file;
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config file " + opts.config + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw UsageError("config file must hold a JSON object");
    for (const auto& [name, value] : file.items()) {
      if (name == "command") {
        if (value != command) throw UsageError("config file was written for command '" + value.dump() + "'");
        continue;
      }
      const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return name == k.name; });
      if (it == keys().end()) throw UsageError("unknown config key '" + name + "'");
      check_value(*it, value);
      config[name] = value;
    }
  }
  for (const auto& [name, opt] : opts.handles) {
    if (opt->count() == 0) continue;
    const auto& key = *std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return name == k.name; });
    const auto& raw = key.kind == Kind::flag ? std::vector<std::string>{} : opts.values.at(name);
    switch (key.kind) {
      case Kind::flag:
        config[name] = true;
        break;
      case Kind::text:
        config[name] = raw.back();
        break;
      case Kind::integer:
        config[name] = parse_integer(name, raw.back());
        break;
      case Kind::real:
        config[name] = parse_real(name, raw.back());
        break;
      case Kind::texts:
        config[name] = raw;
        break;
      case Kind::integers: {
        Json arr = Json::array();
        for (const auto& s : raw) arr.push_back(parse_integer(name, s));
        config[name] = arr;
        break;
      }
      case Kind::reals: {
        Json arr = Json::array();
        for (const auto& s : raw) arr.push_back(parse_real(name, s));
        config[name] = arr;
        break;
      }
    }
  }
  Json out{{"command", command}};
  for (const auto& [name, value] : config.items()) out[name] = value;
  return out;
}

// --- config accessors --------------------------------------------------------

std::string text(const Json& c, const char* key) { return c.at(key).get<std::string>(); }
std::size_t count(const Json& c, const char* key) { return c.at(key).get<std::size_t>(); }

std::vector<std::size_t> counts(const Json& c, const char* key) {
  return c.at(key).get<std::vector<std::size_t>>();
}

std::vector<ScoreSpec> score_specs(const Json& c) {
  std::vector<ScoreSpec> specs;
  const std::optional<std::size_t> k =
      c.at("k").is_null() ? std::nullopt : std::optional<std::size_t>(c.at("k").get<std::size_t>());
  for (const auto& name : c.at("score").get<std::vector<std::string>>()) {
    if (name == "knn") {
      specs.push_back(ScoreSpec::knn(k.value_or(1)));
    } else if (name == "lof") {
      specs.push_back(ScoreSpec::lof(k.value_or(5)));
    } else if (name == "maxlof") {
      specs.push_back(ScoreSpec::max_lof(count(c, "k_min"), count(c, "k_max")));
    } else {
      try {
        specs.push_back(ScoreSpec::parse(name));
      } catch (const SpecError&) {
        throw UsageError("unknown score '" + name + "' (expected knn, lof or maxlof)");
      }
    }
  }
  const auto sweep = text(c, "k_sweep");
  if (!sweep.empty()) {
    const auto dash = sweep.find('-');
    if (dash == std::string::npos) throw UsageError("--k-sweep expects LO-HI");
    const auto extra = k_sweep_specs(parse_integer("k_sweep", sweep.substr(0, dash)),
                                     parse_integer("k_sweep", sweep.substr(dash + 1)));
    specs.insert(specs.end(), extra.begin(), extra.end());
  }
  if (specs.empty()) throw UsageError("no score selected");
  for (const auto& s : specs) {
    if (s.kind == ScoreKind::max_lof && (s.k_min == 0 || s.k_min > s.k_max))
      throw UsageError("max-LOF needs 1 <= k-min <= k-max");
    if (s.kind != ScoreKind::max_lof && s.k == 0) throw UsageError("k must be at least 1");
  }
  return specs;
}

ScoreOptions score_options(const Json& c) {
  ScoreOptions o;
  o.standardize = c.at("standardize").get<bool>();
  o.workers = count(c, "workers");
  return o;
}

ColumnSchema schema_of(const Json& c) {
  const auto path = text(c, "schema");
  return path.empty() ? ColumnSchema{} : ColumnSchema::load(path);
}

CiMethod ci_method(const Json& c) {
  const auto s = text(c, "ci");
  if (s == "none") return CiMethod::none;
  if (s == "asymptotic") return CiMethod::asymptotic;
  if (s == "bootstrap") return CiMethod::bootstrap_hdi;
  throw UsageError("--ci must be none, asymptotic or bootstrap");
}

std::optional<TransformSpec> transform_of(const Json& c) {
  const auto path = text(c, "transform");
  if (path.empty()) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open transform file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("transform file " + path + " is not valid JSON: " + e.what());
  }
  return TransformSpec::from_json(j);
}

std::vector<PosteriorMethod> methods_of(const Json& c) {
  std::vector<PosteriorMethod> out;
  for (const auto& m : c.at("method").get<std::vector<std::string>>()) {
    try {
      out.push_back(parse_posterior_method(m));
    } catch (const SpecError& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("no posterior method selected");
  return out;
}

ToyModelSpec toy_of(const Json& c, const char* family_key) {
  ToyModelSpec spec;
  try {
    spec.family = parse_toy_family(text(c, family_key));
  } catch (const SpecError& e) {
    throw UsageError(e.what());
  }
  spec.d = count(c, "d");
  spec.m = count(c, "m");
  return spec;
}

std::optional<Resimulator> builtin_resimulator(const Json& c, const ReferenceTable& ref) {
  const auto name = text(c, "resim");
  if (name.empty()) return std::nullopt;
  ToyModelSpec spec;
  if (name == "laplace") {
    spec.family = ToyFamily::laplace;
  } else if (name == "gaussian") {
    spec.family = ToyFamily::gaussian;
  } else {
    throw UsageError("--resim must be laplace or gaussian");
  }
  spec.d = count(c, "d");
  spec.m = count(c, "m");
  if (ref.n_stats() != spec.m || ref.n_params() != 2)
    throw SchemaError("built-in resimulator '" + name + "' needs a table with 2 parameters and " +
                      std::to_string(spec.m) + " statistics");
  return ToyModel(spec).resimulator();
}

fs::path out_dir(const Json& c) {
  fs::path dir = text(c, "out");
  fs::create_directories(dir);
  return dir;
}

void write_config(const fs::path& dir, const Json& config) {
  std::ofstream out(dir / "config.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "config.json").string());
  out << config.dump(2) << '\n';
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

ReferenceTable load_table(const std::string& path, const ColumnSchema& schema) {
  return load_reference_table(path, schema);
}

std::vector<double> first_observation(const std::string& path, const ReferenceTable& ref,
                                      const ColumnSchema& schema) {
  if (path.empty()) throw UsageError("missing observation file");
  const auto rows = load_observations(path, ref.stat_names(), schema);
  if (rows.size() != 1)
    std::cerr << "note: " << path << " holds " << rows.size() << " rows; using the first\n";
  return rows.front();
}

void attach_ci(GofReport& report, const Json& c, std::span<const double> y, const ReferenceTable& pool,
               std::size_t n_calib, std::uint64_t seed, const ScoreOptions& scoring) {
  const auto method = ci_method(c);
  const double level = c.at("level").get<double>();
  if (method == CiMethod::asymptotic) {
    report.ci = asymptotic_confidence(report.p_hat, report.n_calib, level);
  } else if (method == CiMethod::bootstrap_hdi) {
    const auto boot = bootstrap_pvalues(y, pool, n_calib, report.score_spec, count(c, "n_boot"),
                                        derive_seed(seed, stream::kBootstrap), level, scoring);
    report.ci = ConfidenceInterval{boot.hdi_low, boot.hdi_high, CiMethod::bootstrap_hdi, level, false, boot.median};
  }
}

/// BH across reports sharing `group`; adjusts interval upper bounds when
/// present, p_hat otherwise.
void apply_bh(std::vector<GofReport>& reports, const std::vector<std::string>& group) {
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < reports.size(); ++i) members[group[i]].push_back(i);
  for (const auto& [g, idx] : members) {
    std::vector<double> p;
    for (const auto i : idx) p.push_back(reports[i].ci ? reports[i].ci->high : reports[i].p_hat);
    const auto adj = bh_adjust(p);
    for (std::size_t j = 0; j < idx.size(); ++j) reports[idx[j]].bh_adjusted = adj[j];
  }
}

void emit_reports(const fs::path& dir, const std::vector<GofReport>& reports) {
  write_reports_json(dir / "reports.json", reports);
  write_reports_csv(dir / "reports.csv", reports);
  for (const auto& r : reports) {
    std::cout << r.scenario << "  " << r.score_spec.label();
    if (r.holdout) std::cout << "  " << to_string(r.holdout->method) << " n_post=" << r.holdout->n_post;
    std::cout << "  p=" << detail::number_text(r.p_hat);
    if (r.ci) std::cout << " [" << detail::number_text(r.ci->low) << ", " << detail::number_text(r.ci->high) << "]";
    if (r.bh_adjusted) std::cout << "  bh=" << detail::number_text(*r.bh_adjusted);
    std::cout << '\n';
    for (const auto& w : r.warnings) std::cerr << "warning: " << r.scenario << ": " << w << '\n';
  }
}

// --- commands ------------------------------------------------------------------

int cmd_prior(const Json& c) {
  const auto refs = c.at("ref").get<std::vector<std::string>>();
  if (refs.empty()) throw UsageError("prior needs at least one --ref table");
  const auto schema = schema_of(c);
  const auto specs = score_specs(c);
  const auto scoring = score_options(c);
  auto budgets = counts(c, "budget");
  const std::uint64_t seed = count(c, "seed");
  if (text(c, "obs").empty()) throw UsageError("prior needs --obs");
  const auto dir = out_dir(c);
  write_config(dir, c);

  std::vector<GofReport> reports;
  std::vector<std::string> bh_group;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    const auto table = load_table(refs[s], schema);
    const auto observations = load_observations(text(c, "obs"), table.stat_names(), schema);
    const std::vector<std::size_t> sizes = budgets.empty() ? std::vector<std::size_t>{0} : budgets;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      const std::uint64_t cell_seed = derive_seed(derive_seed(seed, s), b);
      ReferenceTable pool = table;
      std::size_t n_calib = 0;
      if (sizes[b] == 0) {
        n_calib = c.at("n_calib").is_null() ? table.size() / 2 : count(c, "n_calib");
      } else {
        if (sizes[b] > table.size())
          throw SizeError("budget " + std::to_string(sizes[b]) + " exceeds the " + std::to_string(table.size()) +
                          " rows of " + refs[s]);
        if (sizes[b] % 2 != 0) throw UsageError("budgets must be even (N_ref = N_calib = budget / 2)");
        if (sizes[b] < table.size())
          pool = table.subset(sample_calibration_rows(table.size(), sizes[b], derive_seed(cell_seed, stream::kReference)));
        n_calib = sizes[b] / 2;
      }
      const auto split = split_calibration(pool, {n_calib, derive_seed(cell_seed, stream::kSplit)});
      for (const auto& spec : specs) {
        const OutlierScorer scorer(split.reference, spec, scoring);
        const auto calib_scores = scorer.score_batch(split.calibration, spec);
        for (std::size_t r = 0; r < observations.size(); ++r) {
          GofReport report;
          report.scenario = stem(refs[s]) + (observations.size() > 1 ? ":obs" + std::to_string(r + 1) : "");
          report.score_spec = spec;
          report.n_ref = split.reference.size();
          report.n_calib = split.calibration.size();
          report.exceedances = count_exceedances(calib_scores, scorer.score(observations[r], spec));
          report.p_hat = static_cast<double>(report.exceedances) / static_cast<double>(report.n_calib);
          report.seed = cell_seed;
          attach_ci(report, c, observations[r], pool, n_calib, cell_seed, scoring);
          reports.push_back(std::move(report));
          bh_group.push_back(std::to_string(r) + "/" + std::to_string(b) + "/" + spec.label());
        }
      }
    }
  }
  if (c.at("bh").get<bool>()) apply_bh(reports, bh_group);
  emit_reports(dir, reports);
  return kExitOk;
}

fs::path exchange_dir(const Json& c, const fs::path& dir) {
  const auto s = text(c, "summaries_dir");
  fs::path p = s.empty() ? dir : fs::path(s);
  fs::create_directories(p);
  return p;
}

enum class Phase { none, exported, imported };

Phase phase_of(const Json& c) {
  const auto p = text(c, "phase");
  if (p == "none") return Phase::none;
  if (p == "export") return Phase::exported;
  if (p == "import") return Phase::imported;
  throw UsageError("--phase must be none, export or import");
}

int cmd_prior_local(const Json& c) {
  const auto refs = c.at("ref").get<std::vector<std::string>>();
  if (refs.empty()) throw UsageError("prior-local needs a --ref table");
  const auto schema = schema_of(c);
  const auto specs = score_specs(c);
  const auto scoring = score_options(c);
  const auto phase = phase_of(c);
  const std::uint64_t seed = count(c, "seed");
  const auto dir = out_dir(c);
  write_config(dir, c);
  const auto exchange = exchange_dir(c, dir);

  std::vector<GofReport> reports;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    const auto table = load_table(refs[s], schema);
    const auto y = first_observation(text(c, "obs"), table, schema);
    const auto resim = builtin_resimulator(c, table);
    if (!resim && phase == Phase::none) throw UsageError("prior-local needs --resim or --phase export/import");
    const auto sizes = counts(c, "n_post");
    for (std::size_t n = 0; n < sizes.size(); ++n) {
      const std::uint64_t cell_seed = derive_seed(derive_seed(seed, s), n);
      PosteriorSpec post;
      post.n_post = sizes[n];
      for (const auto& spec : specs) spec.validate(post.n_post / 2);
      const auto draw = posterior_particles(table, y, post);
      const std::string tag = stem(refs[s]) + "_local_n" + std::to_string(post.n_post);
      ReferenceTable resimulated;
      if (phase == Phase::exported) {
        export_parameters_csv(exchange / ("params_" + tag + ".csv"), draw.params);
        std::cout << "wrote " << (exchange / ("params_" + tag + ".csv")).string() << '\n';
        continue;
      }
      if (phase == Phase::imported) {
        resimulated = import_summaries_csv(exchange / ("summaries_" + tag + ".csv"), draw.params);
      } else {
        resimulated = resimulate(draw.params, *resim, derive_seed(cell_seed, stream::kResimulate), count(c, "workers"));
      }
      HoldoutOptions opts;
      opts.scoring = scoring;
      opts.ci = ci_method(c);
      opts.level = c.at("level").get<double>();
      opts.n_boot = count(c, "n_boot");
      for (const auto& spec : specs) {
        auto report = holdout_from_resimulated(resimulated, y, spec, cell_seed, opts);
        report.scenario = stem(refs[s]);
        report.holdout = HoldoutProvenance{PosteriorMethod::rejection, post.n_post, draw.localized.epsilon, table.size()};
        reports.push_back(std::move(report));
      }
    }
  }
  if (phase == Phase::exported) {
    std::cout << "parameters exported; simulate summaries and rerun with --phase import\n";
    return kExitOk;
  }
  emit_reports(dir, reports);
  return kExitOk;
}

int cmd_holdout(const Json& c) {
  const auto refs = c.at("ref").get<std::vector<std::string>>();
  if (refs.size() != 1) throw UsageError("holdout needs exactly one --ref table");
  const auto schema = schema_of(c);
  const auto specs = score_specs(c);
  const auto phase = phase_of(c);
  const auto methods = methods_of(c);
  const auto sizes = counts(c, "n_post");
  const auto transform = transform_of(c);
  const std::uint64_t seed = count(c, "seed");
  const auto dir = out_dir(c);
  write_config(dir, c);
  const auto exchange = exchange_dir(c, dir);

  const auto table = load_table(refs.front(), schema);
  const auto obs_path = text(c, "obs");
  const auto new_path = text(c, "new");
  if (obs_path.empty() || new_path.empty()) throw UsageError("holdout needs --obs and --new");
  const auto y_a = first_observation(obs_path, table, schema);
  const auto y_b = first_observation(new_path, table, schema);
  const auto resim = builtin_resimulator(c, table);
  if (!resim && phase == Phase::none) throw UsageError("holdout needs --resim or --phase export/import");

  struct Pair {
    const std::vector<double>* obs;
    const std::vector<double>* fresh;
    std::string label;
    std::string tag;
  };
  std::vector<Pair> pairs{{&y_a, &y_b, "obs=" + stem(obs_path) + ";new=" + stem(new_path), ""}};
  if (c.at("symmetric").get<bool>())
    pairs.push_back({&y_b, &y_a, "obs=" + stem(new_path) + ";new=" + stem(obs_path), "_swap"});

  HoldoutOptions opts;
  opts.scoring = score_options(c);
  opts.workers = count(c, "workers");
  opts.ci = ci_method(c);
  opts.level = c.at("level").get<double>();
  opts.n_boot = count(c, "n_boot");

  std::vector<GofReport> reports;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      for (std::size_t ni = 0; ni < sizes.size(); ++ni) {
        HoldoutInput in;
        in.y_obs = *pairs[p].obs;
        in.y_new = *pairs[p].fresh;
        in.ref = &table;
        in.posterior.n_post = sizes[ni];
        in.posterior.method = methods[mi];
        in.posterior.lambdas = c.at("lambda").get<std::vector<double>>();
        in.posterior.transform = transform;
        in.posterior.regress_transformed = !c.at("raw_adjust").get<bool>();
        in.seed = derive_seed(derive_seed(derive_seed(seed, p), mi), ni);
        const std::string tag = to_string(methods[mi]) + "_n" + std::to_string(sizes[ni]) + pairs[p].tag;

        std::vector<GofReport> cell;
        if (phase == Phase::none) {
          cell = holdout_pvalues(in, specs, *resim, opts);
        } else {
          in.posterior.validate(table.size());
          for (const auto& spec : specs) spec.validate(in.posterior.n_post / 2);
          const auto draw = posterior_particles(table, in.y_obs, in.posterior);
          if (phase == Phase::exported) {
            const auto path = exchange / ("params_" + tag + ".csv");
            export_parameters_csv(path, draw.params);
            std::cout << "wrote " << path.string() << '\n';
            continue;
          }
          const auto resimulated = import_summaries_csv(exchange / ("summaries_" + tag + ".csv"), draw.params);
          for (const auto& spec : specs) {
            auto report = holdout_from_resimulated(resimulated, in.y_new, spec, in.seed, opts);
            report.warnings.insert(report.warnings.begin(), draw.warnings.begin(), draw.warnings.end());
            report.holdout = HoldoutProvenance{in.posterior.method, in.posterior.n_post, draw.localized.epsilon,
                                               table.size()};
            cell.push_back(std::move(report));
          }
        }
        for (auto& r : cell) {
          r.scenario = pairs[p].label;
          reports.push_back(std::move(r));
        }
      }
    }
  }
  if (phase == Phase::exported) {
    std::cout << "parameters exported; simulate summaries_<method>_n<n_post>.csv and rerun with --phase import\n";
    return kExitOk;
  }
  emit_reports(dir, reports);
  return kExitOk;
}

ExperimentSpec experiment_of(const Json& c) {
  ExperimentSpec exp;
  exp.budgets = counts(c, "budget");
  if (exp.budgets.empty()) exp.budgets = {500, 1000, 2000, 5000};
  exp.n_test = count(c, "n_test");
  exp.alpha = c.at("alpha").get<double>();
  exp.scores = score_specs(c);
  exp.seed = count(c, "seed");
  exp.workers = count(c, "workers");
  exp.setting = text(c, "null") + "-vs-" + text(c, "alt");
  return exp;
}

PosteriorSpec posterior_of(const Json& c) {
  PosteriorSpec post;
  post.n_post = counts(c, "n_post").at(0);
  post.method = methods_of(c).front();
  post.lambdas = c.at("lambda").get<std::vector<double>>();
  return post;
}

int cmd_power(const Json& c) {
  auto exp = experiment_of(c);
  const auto scoring = score_options(c);
  const auto dir = out_dir(c);
  write_config(dir, c);
  std::vector<PowerRow> rows;
  const auto test = text(c, "test");
  if (test == "prior") {
    const auto refs = c.at("ref").get<std::vector<std::string>>();
    if (!refs.empty()) {
      const auto schema = schema_of(c);
      if (text(c, "pods").empty()) throw UsageError("power on ingested tables needs --pods");
      const auto pool = load_table(refs.front(), schema);
      const auto pods = load_table(text(c, "pods"), schema);
      exp.setting = stem(refs.front()) + "-vs-" + stem(text(c, "pods"));
      rows = estimate_power_prior(pool, pods, exp, scoring);
    } else {
      rows = estimate_power_prior(toy_of(c, "null"), toy_of(c, "alt"), exp, scoring);
    }
  } else if (test == "holdout") {
    rows = estimate_power_holdout(toy_of(c, "null"), toy_of(c, "alt"), posterior_of(c), exp, scoring);
  } else {
    throw UsageError("--test must be prior or holdout");
  }
  write_power_csv(dir / "power.csv", rows);
  for (const auto& r : rows)
    std::cout << r.test << "  budget=" << r.budget << "  " << r.score << "  power=" << detail::number_text(r.power)
              << '\n';
  return kExitOk;
}

int cmd_calibration(const Json& c) {
  auto exp = experiment_of(c);
  exp.setting = text(c, "null");
  const auto scoring = score_options(c);
  const auto dir = out_dir(c);
  write_config(dir, c);
  const auto test = text(c, "test");
  std::vector<CalibrationResult> results;
  if (test == "prior") {
    results = calibration_check(toy_of(c, "null"), exp, TestKind::prior, std::nullopt, scoring);
  } else if (test == "holdout") {
    results = calibration_check(toy_of(c, "null"), exp, TestKind::holdout, posterior_of(c), scoring);
  } else {
    throw UsageError("--test must be prior or holdout");
  }
  write_calibration_csv(dir / "calibration_summary.csv", dir / "calibration_pvalues.csv", results);
  for (const auto& r : results)
    std::cout << r.test << "  budget=" << r.budget << "  " << r.score << "  ks=" << detail::number_text(r.ks)
              << "  max_quantile_dev=" << detail::number_text(r.max_quantile_deviation) << '\n';
  return kExitOk;
}

std::vector<double> read_pvalue_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  std::vector<double> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto field = detail::trim(line);
    if (field.empty()) continue;
    const auto v = detail::parse_double(field);
    if (!v) {
      if (row == 1) continue;  // header
      throw ValidationError(path + ": invalid p-value at row " + std::to_string(row), row, "p_value");
    }
    out.push_back(*v);
  }
  return out;
}

int cmd_bh(const Json& c) {
  auto p = c.at("pvalues").get<std::vector<double>>();
  if (!text(c, "input").empty()) {
    const auto more = read_pvalue_file(text(c, "input"));
    p.insert(p.end(), more.begin(), more.end());
  }
  if (p.empty()) throw UsageError("bh needs p-values (positional or --input)");
  const auto adj = bh_adjust(p);
  const auto dir = out_dir(c);
  write_config(dir, c);
  std::ofstream out(dir / "bh.csv", std::ios::binary);
  out << "index,p_value,bh_adjusted\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << i << ',' << detail::number_text(p[i]) << ',' << detail::number_text(adj[i]) << '\n';
    std::cout << detail::number_text(p[i]) << ' ' << detail::number_text(adj[i]) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free goodness-of-fit tests (kNN / LOF scores)"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  struct Command {
    const char* name;
    const char* help;
    std::vector<std::string> keys;
    int (*run)(const Json&);
  };
  const std::vector<std::string> common{"score", "k", "k_min", "k_max", "k_sweep", "standardize", "seed", "workers",
                                        "out", "schema"};
  auto with = [&](std::vector<std::string> extra) {
    extra.insert(extra.end(), common.begin(), common.end());
    return extra;
  };
  std::vector<Command> commands{
      {"prior", "prior-predictive GoF p-values for one or more scenario tables",
       with({"ref", "obs", "n_calib", "budget", "ci", "n_boot", "level", "bh"}), cmd_prior},
      {"prior-local", "localized prior GoF (rejection localization + re-simulation)",
       with({"ref", "obs", "n_post", "ci", "n_boot", "level", "resim", "phase", "summaries_dir", "d", "m"}),
       cmd_prior_local},
      {"holdout", "post-inference holdout GoF over a (method, n_post) grid",
       with({"ref", "obs", "new", "n_post", "method", "lambda", "transform", "raw_adjust", "ci", "n_boot", "level",
             "resim", "phase", "summaries_dir", "symmetric", "d", "m"}),
       cmd_holdout},
      {"power", "power of the prior or holdout test on the toy model or ingested tables",
       with({"test", "null", "alt", "d", "m", "budget", "n_test", "alpha", "n_post", "method", "lambda", "ref",
             "pods"}),
       cmd_power},
      {"calibration", "p-value calibration under the toy null",
       with({"test", "null", "alt", "d", "m", "budget", "n_test", "alpha", "n_post", "method", "lambda"}),
       cmd_calibration},
      {"bh", "Benjamini-Hochberg adjustment of a list of p-values", {"input", "out"}, cmd_bh},
  };

  std::vector<Options> options(commands.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    auto* sub = app.add_subcommand(commands[i].name, commands[i].help);
    add_options(sub, options[i], commands[i].keys);
    subs.push_back(sub);
  }
  // bh also takes p-values positionally
  auto& bh_values = options.back().values["pvalues"];
  options.back().handles["pvalues"] = subs.back()->add_option("pvalues", bh_values, "p-values to adjust");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      const Json config = resolve(commands[i].name, options[i]);
      return commands[i].run(config);
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const ValidationError& e) {
      std::cerr << "input error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const SchemaError& e) {
      std::cerr << "input error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const EmptyTableError& e) {
      std::cerr << "input error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const SpecError& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const SizeError& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const TransformError& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      std::cerr << "run failed: " << e.what() << '\n';
      return kExitRunFailure;
    }
  }
  return kExitUsage;
}
