// decoupling: batch front-end for the experiment commands.
//
// Every command writes one document (JSON or CSV) that records the command,
// library version, seed and the full parameter set. Output goes to stdout or
// --out; a relative --out is placed under $DECOUPLING_OUTPUT_DIR when set.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "decoupling/decoupling.hpp"

using json = nlohmann::json;
using namespace decoupling;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitCapacity = 3;
constexpr int kExitUsage = 64;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<json>> rows;
};

struct Output {
  json result = json::object();
  std::optional<Table> table;
};

std::string fmt_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_cell(const json& v) {
  if (v.is_number_float()) return fmt_double(v.get<double>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return v.dump();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InputError("not a number: '" + item + "'");
    }
    if (used != item.size()) throw InputError("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

json read_json_arg(const std::string& arg) {
  std::string text = arg;
  if (!arg.empty() && arg[0] == '@') {
    std::ifstream in(arg.substr(1));
    if (!in) throw InputError("cannot read " + arg.substr(1));
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
}

// linf:K, l2:K, lp:K:p, sqrtlog:K, or a JSON descriptor (inline or @file).
Space parse_space(const std::string& desc, std::size_t default_dim) {
  if (desc.empty()) return Space::linf(default_dim);
  if (desc[0] == '{' || desc[0] == '@') return space_from_json(read_json_arg(desc));
  std::vector<std::string> parts;
  std::stringstream ss(desc);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  auto dim = [&]() -> std::size_t {
    if (parts.size() < 2) return default_dim;
    const double d = parse_list(parts[1]).at(0);
    require(d >= 1 && d == std::floor(d), "space dimension must be a positive integer");
    return static_cast<std::size_t>(d);
  };
  if (parts[0] == "linf") return Space::linf(dim());
  if (parts[0] == "l2") return Space::l2(dim());
  if (parts[0] == "sqrtlog") return Space::weighted_sup(sqrtlog_weights(dim()));
  if (parts[0] == "lp") {
    require(parts.size() == 3, "lp space needs lp:K:p");
    return parts[2] == "inf" ? Space::linf(dim()) : Space::lp(dim(), parse_list(parts[2]).at(0));
  }
  throw InputError("unknown space '" + desc + "'");
}

struct TreeSource {
  std::string file;
  std::string gen = "random";
  std::size_t N = 4;
  std::size_t K = 4;

  void add(CLI::App* cmd) {
    cmd->add_option("--tree", file, "tree JSON file (overrides --gen)");
    cmd->add_option("--gen", gen, "generated tree: random|witness|zero|constant")
        ->check(CLI::IsMember({"random", "witness", "zero", "constant"}))
        ->capture_default_str();
    cmd->add_option("--N", N, "depth")->capture_default_str();
    cmd->add_option("--K", K, "dimension (witness uses 2^N)")->capture_default_str();
  }

  PredictableTree make(std::uint64_t seed) const {
    if (!file.empty()) return tree_from_json(read_json_arg("@" + file));
    if (gen == "witness") return linfty_witness(N);
    if (gen == "zero") return PredictableTree(N, K);
    if (gen == "constant") return PredictableTree::constant(N, Vector(K, 1.0));
    return random_tree(N, K, seed);
  }
};

struct ProcessSource {
  std::string file;
  std::size_t steps = 3;
  std::size_t branch = 3;
  std::size_t dim = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--process", file, "adapted process JSON file (default: random)");
    cmd->add_option("--steps", steps, "random process length")->capture_default_str();
    cmd->add_option("--branch", branch, "random process branching (law size)")->capture_default_str();
    cmd->add_option("--dim", dim, "random process dimension")->capture_default_str();
  }

  AdaptedProcess make(std::uint64_t seed) const {
    if (!file.empty()) return process_from_json(read_json_arg("@" + file));
    return random_adapted_process(steps, branch, dim, seed);
  }
};

json intervals_json(const IntervalSet& s) {
  json a = json::array();
  for (const auto& iv : s.parts()) a.push_back({iv.lo, iv.hi});
  return a;
}

IntervalSet parse_intervals(const std::string& s) {
  std::vector<Interval> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InputError("intervals are lo:hi, comma separated");
    parts.push_back({parse_list(item.substr(0, colon)).at(0), parse_list(item.substr(colon + 1)).at(0)});
  }
  return IntervalSet(std::move(parts));
}

void emit(const std::string& command, std::uint64_t seed, const json& params, const Output& out,
          const std::string& format, std::ostream& os) {
  if (format == "json") {
    json doc = {{"command", command}, {"version", kVersion}, {"seed", seed}, {"params", params}, {"result", out.result}};
    os << doc.dump(2) << "\n";
    return;
  }
  os << "# command: " << command << "\n# version: " << kVersion << "\n# seed: " << seed << "\n# params: " << params.dump()
     << "\n";
  if (out.table) {
    for (std::size_t i = 0; i < out.table->header.size(); ++i) os << (i ? "," : "") << out.table->header[i];
    os << "\n";
    for (const auto& row : out.table->rows) {
      for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_cell(row[i]);
      os << "\n";
    }
    return;
  }
  os << "key,value\n";
  for (const auto& [k, v] : out.result.items())
    if (!v.is_structured()) os << k << "," << csv_cell(v) << "\n";
}

json collect_params(const CLI::App* cmd) {
  json p = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->get_expected_min() == 0) {
      p[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      std::string joined;
      for (std::size_t i = 0; i < r.size(); ++i) joined += (i ? "," : "") + r[i];
      p[name] = joined;
    } else {
      p[name] = opt->get_default_str();
    }
  }
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupling-constant experiments for vector-valued martingales", "decoupling"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value defaults file; flags override it");

  std::string format = "json";
  std::string out_path;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  app.add_option("--out", out_path, "output file (default stdout)");
  app.add_option("--seed", seed, "experiment seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_flag_function("--version", [](std::int64_t) { throw CLI::CallForVersion(kVersion, 0); }, "print version");

  std::map<std::string, std::function<Output()>> run;
  auto command = [&](const std::string& name, const std::string& help) { return app.add_subcommand(name, help); };

  // dp-exact
  {
    auto* c = command("dp-exact", "exact coupled/decoupled L^p norms and ratio of one tree");
    auto src = std::make_shared<TreeSource>();
    auto space = std::make_shared<std::string>();
    auto p = std::make_shared<double>(2.0);
    src->add(c);
    c->add_option("--space", *space, "space: linf:K | l2:K | lp:K:p | sqrtlog:K | JSON (default linf)");
    c->add_option("--p", *p, "moment order")->capture_default_str();
    run["dp-exact"] = [=, &seed] {
      const auto t = src->make(seed);
      const Space X = parse_space(*space, t.dim());
      const auto parts = decoupling_ratio_parts(t, X, *p);
      Output o;
      o.result = {{"N", t.depth()},
                  {"K", t.dim()},
                  {"space", space_to_json(X)},
                  {"coupled", parts.coupled_lp},
                  {"decoupled", parts.decoupled_lp},
                  {"ratio", parts.ratio}};
      return o;
    };
  }

  // dp-search
  {
    auto* c = command("dp-search", "adversarial search for a large decoupling ratio");
    auto space = std::make_shared<std::string>();
    auto N = std::make_shared<std::size_t>(3);
    auto p = std::make_shared<double>(2.0);
    auto budget = std::make_shared<std::size_t>(400);
    auto opt = std::make_shared<SearchOptions>();
    auto no_witness = std::make_shared<bool>(false);
    auto emit_tree = std::make_shared<bool>(false);
    c->add_option("--space", *space, "space (default linf:2^N)");
    c->add_option("--N", *N, "depth")->capture_default_str();
    c->add_option("--p", *p, "moment order")->capture_default_str();
    c->add_option("--budget", *budget, "ratio evaluations")->capture_default_str();
    c->add_option("--starts", opt->starts, "independent starts")->capture_default_str();
    c->add_option("--step", opt->step, "perturbation scale")->capture_default_str();
    c->add_flag("--no-witness", *no_witness, "do not seed start 0 with the witness");
    c->add_flag("--emit-tree", *emit_tree, "include the best tree in the output");
    run["dp-search"] = [=, &seed] {
      SearchOptions so = *opt;
      so.witness_seeded = !*no_witness;
      const Space X = parse_space(*space, std::size_t{1} << *N);
      const auto r = search_ratio(X, *N, *p, *budget, seed, so);
      Output o;
      o.result = {{"N", *N},
                  {"space", space_to_json(X)},
                  {"ratio", r.ratio},
                  {"evaluations", r.evaluations},
                  {"start_index", r.start_index}};
      if (*emit_tree) o.result["tree"] = tree_to_json(r.best);
      return o;
    };
  }

  // linfty-scaling
  {
    auto* c = command("linfty-scaling", "witness ratio in linf_K, K = 2^N, against sqrt(1 + log K)");
    auto nmin = std::make_shared<std::size_t>(1);
    auto nmax = std::make_shared<std::size_t>(10);
    auto p = std::make_shared<double>(2.0);
    auto method = std::make_shared<std::string>("reduced");
    c->add_option("--nmin", *nmin, "first depth")->capture_default_str();
    c->add_option("--nmax", *nmax, "last depth")->capture_default_str();
    c->add_option("--p", *p, "moment order")->capture_default_str();
    c->add_option("--method", *method, "reduced | exact")->check(CLI::IsMember({"reduced", "exact"}))->capture_default_str();
    run["linfty-scaling"] = [=] {
      require(*nmin >= 1 && *nmin <= *nmax, "need 1 <= nmin <= nmax");
      Output o;
      Table t{{"N", "K", "coupled", "decoupled", "ratio", "ratio_sqrtlog"}, {}};
      json rows = json::array();
      for (std::size_t n = *nmin; n <= *nmax; ++n) {
        const auto r = witness_report(n, *p, *method);
        const double scaled = r.ratio / std::sqrt(1.0 + std::log(static_cast<double>(r.K)));
        t.rows.push_back({r.N, r.K, r.coupled_lp, r.decoupled_lp, r.ratio, scaled});
        rows.push_back({{"N", r.N},
                        {"K", r.K},
                        {"coupled", r.coupled_lp},
                        {"decoupled", r.decoupled_lp},
                        {"ratio", r.ratio},
                        {"ratio_sqrtlog", scaled}});
      }
      o.result = {{"rows", rows}};
      o.table = std::move(t);
      return o;
    };
  }

  // haar-check
  {
    auto* c = command("haar-check", "Haar and modulus-Haar norms against dyadic norms");
    auto src = std::make_shared<TreeSource>();
    auto space = std::make_shared<std::string>();
    auto p = std::make_shared<double>(2.0);
    src->add(c);
    c->add_option("--space", *space, "space (default linf:K)");
    c->add_option("--p", *p, "moment order")->capture_default_str();
    run["haar-check"] = [=, &seed] {
      const auto t = src->make(seed);
      const Space X = parse_space(*space, t.dim());
      const auto h = dyadic_to_haar(t);
      const double cp = std::pow(coupled_moment(t, X, *p), 1.0 / *p);
      const double dp = std::pow(decoupled_moment(t, X, *p), 1.0 / *p);
      const double hn = haar_norm(h, X, *p, false), hm = haar_norm(h, X, *p, true);
      Output o;
      o.result = {{"coupled", cp},
                  {"haar", hn},
                  {"decoupled", dp},
                  {"modulus_haar", hm},
                  {"max_abs_difference", std::max(std::abs(cp - hn), std::abs(dp - hm))}};
      return o;
    };
  }

  // tangent-verify
  {
    auto* c = command("tangent-verify", "decouple an adapted process and verify tangency exhaustively");
    auto src = std::make_shared<ProcessSource>();
    src->add(c);
    run["tangent-verify"] = [=, &seed] {
      const auto d = src->make(seed);
      const auto D = decouple(d);
      const auto rep = verify_tangent(D.d, D.e, D.H);
      Output o;
      o.result = rep.to_json();
      o.result["atoms"] = d.base()->atoms();
      o.result["product_atoms"] = D.space->atoms();
      o.result["steps"] = d.length();
      return o;
    };
  }

  // factorize-demo
  {
    auto* c = command("factorize-demo", "factorise d_n = d0(w, H(w, s)) with H uniform and independent of F_{n-1}");
    auto src = std::make_shared<ProcessSource>();
    auto step = std::make_shared<std::size_t>(0);
    src->add(c);
    c->add_option("--step", *step, "step n to factorise (0 = last)")->capture_default_str();
    run["factorize-demo"] = [=, &seed] {
      const auto d = src->make(seed);
      const std::size_t n = *step == 0 ? d.length() : *step;
      require(n >= 1 && n <= d.length(), "step must lie in 1..length");
      const auto& base = *d.base();
      const auto f = factorize(d.step(n), base.probs(), base.partition(n - 1));
      const auto chk = check_factorization(f, d.step(n), base.probs());
      json cells = json::array();
      for (std::size_t cell = 0; cell < f.cdf.size(); ++cell) {
        json th = json::array();
        for (const auto& [x, code] : f.thresholds(cell)) th.push_back({{"upto", x}, {"value", f.codebook[code]}});
        cells.push_back(th);
      }
      Output o;
      o.result = {{"step", n},
                  {"support_size", f.codebook.size()},
                  {"cells", f.cdf.size()},
                  {"null_set", f.null_set},
                  {"pushforward_error", chk.pushforward_error},
                  {"independence_error", chk.independence_error},
                  {"representation_ok", chk.representation_ok},
                  {"thresholds", cells}};
      return o;
    };
  }

  // refine-demo
  {
    auto* c = command("refine-demo", "approximate a set by an algebra of mu-distributed refinements");
    auto F = std::make_shared<std::string>("0:0.3");
    auto cuts = std::make_shared<std::string>();
    auto mu = std::make_shared<std::string>("0.5,0.5");
    auto eps = std::make_shared<double>(0.25);
    c->add_option("--F", *F, "set to approximate, lo:hi[,lo:hi...] inside [0,1)")->capture_default_str();
    c->add_option("--G", *cuts, "cut points of the partition G (default trivial)");
    c->add_option("--mu", *mu, "atom probabilities of mu")->capture_default_str();
    c->add_option("--eps", *eps, "target accuracy")->capture_default_str();
    run["refine-demo"] = [=] {
      std::vector<double> pts = parse_list(*cuts);
      std::sort(pts.begin(), pts.end());
      std::vector<IntervalSet> G;
      double lo = 0.0;
      for (double x : pts) {
        require(x > lo && x < 1.0, "cut points must be increasing inside (0, 1)");
        G.push_back(IntervalSet({{lo, x}}));
        lo = x;
      }
      G.push_back(IntervalSet({{lo, 1.0}}));
      const auto r = dyadic_refine(parse_intervals(*F), G, parse_list(*mu), *eps);
      Output o;
      o.result = {{"m", r.m},
                  {"delta", r.delta},
                  {"bound", r.bound},
                  {"symmetric_difference", r.symmetric_difference},
                  {"cells", r.cells.size()},
                  {"max_straddling", r.max_straddling},
                  {"independence_error", r.independence_error},
                  {"A_eps", intervals_json(r.A_eps)}};
      return o;
    };
  }

  // clt
  {
    auto* c = command("clt", "Kolmogorov distance of scaled Rademacher sums to the Gaussian");
    auto nmax = std::make_shared<std::size_t>(32);
    c->add_option("--nmax", *nmax, "largest n (n runs over powers of two)")->capture_default_str();
    run["clt"] = [=] {
      require(*nmax >= 1, "nmax must be positive");
      Output o;
      Table t{{"n", "distance", "bound"}, {}};
      json rows = json::array();
      for (std::size_t n = 1; n <= *nmax; n *= 2) {
        const double d = gaussian_distance(RadCoeffs(std::vector<double>(n, 1.0 / std::sqrt(double(n))), 0.0));
        const double b = 0.8 / std::sqrt(double(n));
        t.rows.push_back({n, d, b});
        rows.push_back({{"n", n}, {"distance", d}, {"bound", b}});
      }
      o.result = {{"rows", rows}};
      o.table = std::move(t);
      return o;
    };
  }

  // moments
  {
    auto* c = command("moments", "second and fourth moments of sigma*gamma + sum a_n r_n");
    auto a = std::make_shared<std::string>();
    auto sigma = std::make_shared<double>(0.0);
    c->add_option("--a", *a, "coefficients, comma separated")->required();
    c->add_option("--sigma", *sigma, "Gaussian component")->capture_default_str();
    run["moments"] = [=] {
      const auto m = moments(RadCoeffs(parse_list(*a), *sigma));
      Output o;
      o.result = {{"m2", m.m2}, {"m4", m.m4}};
      return o;
    };
  }

  // stochint
  {
    auto* c = command("stochint", "||int H dW||_q / ||S(H)||_q for a sign-driven simple process");
    auto src = std::make_shared<TreeSource>();
    auto space = std::make_shared<std::string>();
    auto q = std::make_shared<double>(2.0);
    auto paths = std::make_shared<std::uint64_t>(100000);
    auto aux = std::make_shared<std::size_t>(0);
    auto inner = std::make_shared<std::uint64_t>(64);
    auto horizon = std::make_shared<double>(1.0);
    src->add(c);
    c->add_option("--space", *space, "space (default linf:K)");
    c->add_option("--q", *q, "moment order")->capture_default_str();
    c->add_option("--paths", *paths, "Monte Carlo paths")->capture_default_str();
    c->add_option("--aux", *aux, "auxiliary enlargement signs revealed per step")->capture_default_str();
    c->add_option("--inner", *inner, "Gaussian draws per path for S(H)^q, q != 2")->capture_default_str();
    c->add_option("--horizon", *horizon, "time horizon of the uniform grid")->capture_default_str();
    run["stochint"] = [=, &seed] {
      const auto t = src->make(seed);
      const Space X = parse_space(*space, t.dim());
      const auto grid = TimeGrid::uniform(t.depth(), *horizon);
      const auto H = SimpleProcess::from_tree(grid, t, std::vector<std::size_t>(t.depth(), *aux));
      const auto r = wq_ratio(H, X, *q, *paths, seed, *inner);
      Output o;
      o.result = {{"grid", grid.points()}, {"space", space_to_json(X)}, {"q", *q},
                  {"paths", *paths},       {"estimate", r.value},      {"stderr", r.std_error}};
      return o;
    };
  }

  // chaos-ratio
  {
    auto* c = command("chaos-ratio", "decoupling ratio with chaos-distributed multipliers");
    auto src = std::make_shared<TreeSource>();
    auto space = std::make_shared<std::string>();
    auto p = std::make_shared<double>(2.0);
    auto mu = std::make_shared<std::string>(R"({"L":1,"K":1,"coeffs":[[[1],1.0]]})");
    auto nu = std::make_shared<std::string>();
    auto samples = std::make_shared<std::uint64_t>(100000);
    src->add(c);
    c->add_option("--space", *space, "space (default linf:K)");
    c->add_option("--p", *p, "moment order")->capture_default_str();
    c->add_option("--mu", *mu, "coupled chaos law, JSON or @file")->capture_default_str();
    c->add_option("--nu", *nu, "decoupled chaos law (default: mu)");
    c->add_option("--samples", *samples, "Monte Carlo samples")->capture_default_str();
    run["chaos-ratio"] = [=, &seed] {
      const auto t = src->make(seed);
      const Space X = parse_space(*space, t.dim());
      const ChaosLaw m = chaos_from_json(read_json_arg(*mu));
      const ChaosLaw n = nu->empty() ? m : chaos_from_json(read_json_arg(*nu));
      const auto r = chaos_decoupling_ratio(t, X, *p, m, n, *samples, seed);
      Output o;
      o.result = {{"space", space_to_json(X)}, {"mu", chaos_to_json(m)}, {"nu", chaos_to_json(n)},
                  {"estimate", r.value},       {"stderr", r.std_error}};
      return o;
    };
  }

  // extrapolate
  {
    auto* c = command("extrapolate", "good-lambda extrapolation constant D_q <= C(p, q) D_p");
    auto p = std::make_shared<double>(2.0);
    auto q = std::make_shared<double>(2.0);
    auto Dp = std::make_shared<double>(1.0);
    c->add_option("--p", *p, "known exponent")->capture_default_str();
    c->add_option("--q", *q, "target exponent")->capture_default_str();
    c->add_option("--Dp", *Dp, "decoupling constant at p")->capture_default_str();
    run["extrapolate"] = [=] {
      Output o;
      o.result = {{"p", *p}, {"q", *q}, {"Dp", *Dp}, {"constant", extrapolation_constant(*p, *q, *Dp)}};
      return o;
    };
  }

  // good-lambda
  {
    auto* c = command("good-lambda", "exhaustive check of the good-lambda inequality chain");
    auto src = std::make_shared<TreeSource>();
    auto space = std::make_shared<std::string>();
    auto cfg = std::make_shared<GoodLambdaConfig>();
    src->add(c);
    c->add_option("--space", *space, "space (default linf:K)");
    c->add_option("--lambda", cfg->lambda, "level lambda")->capture_default_str();
    c->add_option("--beta", cfg->beta, "beta > 1 + delta")->capture_default_str();
    c->add_option("--delta", cfg->delta, "delta > 0")->capture_default_str();
    c->add_option("--p", cfg->p, "moment order")->capture_default_str();
    run["good-lambda"] = [=, &seed] {
      const auto t = src->make(seed);
      const Space X = parse_space(*space, t.dim());
      Output o;
      o.result = good_lambda_check(t, X, *cfg).to_json();
      return o;
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (app.get_subcommands().empty()) std::cerr << "\n" << app.help();
    return kExitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  set_worker_count(threads);
  try {
    const Output out = run.at(name)();
    const json params = collect_params(sub);
    if (out_path.empty()) {
      emit(name, seed, params, out, format, std::cout);
    } else {
      std::filesystem::path path(out_path);
      if (const char* dir = std::getenv("DECOUPLING_OUTPUT_DIR"); dir && *dir && path.is_relative())
        path = std::filesystem::path(dir) / path;
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      std::ofstream os(path, std::ios::binary);
      if (!os) throw InputError("cannot write " + path.string());
      emit(name, seed, params, out, format, os);
    }
  } catch (const InputError& e) {
    std::cerr << "decoupling " << name << ": " << e.what() << "\n";
    return kExitInput;
  } catch (const CapacityError& e) {
    std::cerr << "decoupling " << name << ": capacity exceeded: " << e.what() << "\n";
    return kExitCapacity;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "decoupling " << name << ": bad JSON input: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "decoupling " << name << ": " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
