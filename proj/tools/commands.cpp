#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "isa/baselines.hpp"
#include "isa/dataset.hpp"
#include "isa/entropy.hpp"
#include "isa/error.hpp"
#include "isa/gmm.hpp"
#include "isa/llm_filter.hpp"
#include "isa/parallel.hpp"
#include "isa/scaling_law.hpp"

namespace isa::cli {

namespace {

[[noreturn]] void invalid(std::string_view module, const std::string& msg) {
  throw Error(module, ErrorKind::validation, msg);
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cli", ErrorKind::runtime, fmt::format("cannot write '{}'", path));
  out << text;
  if (!out) throw Error("cli", ErrorKind::runtime, fmt::format("write failed for '{}'", path));
}

struct GmmFlags {
  std::string model_in;
  std::string model_out;
  EmConfig em;

  void add(CLI::App& app) {
    app.add_option("--model-in", model_in, "Read the mixture model from JSON instead of fitting")
        ->check(CLI::ExistingFile)
        ->envname("ISA_MODEL_IN");
    app.add_option("--model-out", model_out, "Write the fitted mixture model as JSON");
    app.add_option("--max-iters", em.max_iters, "EM iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--rel-tol", em.rel_tol, "EM relative log-likelihood tolerance")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--variance-floor", em.variance_floor, "Per-dimension variance floor")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }

  GmmModel resolve(const Matrix& x, std::uint64_t seed, unsigned threads) {
    GmmModel model;
    if (!model_in.empty()) {
      model = read_model(model_in);
    } else {
      em.seed = seed;
      em.threads = threads;
      model = fit_gmm(x, em).model;
    }
    if (!model_out.empty()) write_model(model, model_out);
    return model;
  }
};

struct CommonFlags {
  std::string meta;
  std::string emb;
  std::uint64_t seed = 42;
  unsigned threads = default_threads();

  void add(CLI::App& app, bool meta_required) {
    auto* m = app.add_option("--meta", meta, "Metadata JSONL (one record per line)")->check(CLI::ExistingFile);
    if (meta_required) m->required();
    app.add_option("--emb", emb, "EMB1 embedding file")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Seed for every randomised step")->capture_default_str()->envname("ISA_SEED");
    app.add_option("--threads", threads, "Worker threads (results do not depend on this)")
        ->check(CLI::PositiveNumber)
        ->envname("ISA_THREADS");
  }
};

// --- sample ---------------------------------------------------------------

struct SampleFlags {
  CommonFlags common;
  GmmFlags gmm;
  std::string out;
  std::string strategy = "isa";
  std::optional<std::size_t> k;
  std::optional<double> fraction;
  bool renormalize = false;
  bool simplex = false;
  std::string bandwidth = "auto";
  bool density_topk = false;
  std::string endpoint;
  std::string model_name;
  std::string auth_token;
  long timeout_ms = 30000;
  int max_retries = 3;
  long backoff_ms = 500;
  unsigned concurrency = 4;
  std::string mock_script;
  std::string scan_order = "shuffled";
  std::string subset_out;
  std::string preserve_order = "selection";
};

std::size_t resolve_k(const SampleFlags& f, std::size_t n) {
  if (f.k) return *f.k;
  // Ceiling, with a small slack so that e.g. 0.035 * 1000 gives 35 and not 36.
  return static_cast<std::size_t>(std::ceil(*f.fraction * static_cast<double>(n) - 1e-9));
}

Selection run_strategy(SampleFlags& f, const EmbeddedDataset& ds, std::size_t k) {
  const auto strategy = parse_strategy(f.strategy);
  switch (strategy) {
    case Strategy::isa: {
      if (ds.size() < 1) invalid("isa", "cannot select from an empty corpus");
      const GmmModel model = f.gmm.resolve(ds.embeddings, f.common.seed, f.common.threads);
      ScoreOptions so;
      so.simplex = f.simplex;
      so.threads = f.common.threads;
      const ScoreVector scores = score_points(model, ds.embeddings, so);
      if (scores.degenerate) std::cerr << "isa: warning: all log-likelihoods equal; normalised scores set to 0\n";
      DeltaOptions dopt;
      dopt.renormalize = f.renormalize;
      return select_isa(entropy_deltas(scores, dopt), k);
    }
    case Strategy::random:
      return select_random(ds.size(), k, f.common.seed);
    case Strategy::density: {
      DensityConfig cfg;
      cfg.seed = f.common.seed;
      cfg.threads = f.common.threads;
      if (f.bandwidth != "auto") {
        try {
          std::size_t used = 0;
          cfg.bandwidth = std::stod(f.bandwidth, &used);
          if (used != f.bandwidth.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          invalid("baselines", fmt::format("--bandwidth must be a number or 'auto', got '{}'", f.bandwidth));
        }
      }
      return select_density(density_scores(ds.embeddings, cfg), k, f.common.seed, f.density_topk);
    }
    case Strategy::llm: {
      std::unique_ptr<ChatTransport> transport;
      if (!f.mock_script.empty()) {
        transport = std::make_unique<MockTransport>(MockTransport::from_file(f.mock_script));
      } else if (!f.endpoint.empty()) {
        ChatClientConfig cc;
        cc.endpoint = f.endpoint;
        cc.model_name = f.model_name;
        cc.timeout = std::chrono::milliseconds(f.timeout_ms);
        cc.max_retries = f.max_retries;
        if (!f.auth_token.empty()) cc.auth_token = f.auth_token;
        transport = std::make_unique<HttpChatTransport>(cc);
      } else {
        invalid("llm-filter", "no transport configured (pass --endpoint or --mock-script)");
      }
      LlmOptions lo;
      lo.order_seed = f.common.seed;
      lo.scan_order = f.scan_order == "natural" ? ScanOrder::natural : ScanOrder::shuffled;
      lo.max_retries = f.max_retries;
      lo.backoff_base = std::chrono::milliseconds(f.backoff_ms);
      lo.concurrency = f.concurrency;
      auto result = select_llm(ds, k, *transport, lo);
      for (const auto& w : result.diagnostics.warnings) std::cerr << "llm-filter: warning: " << w << "\n";
      return result.selection;
    }
  }
  invalid("cli", "unreachable strategy");
}

int run_sample(SampleFlags& f) {
  const auto started = std::chrono::steady_clock::now();
  const EmbeddedDataset ds = load_dataset(f.common.meta, f.common.emb);
  const std::size_t k = resolve_k(f, ds.size());
  Selection sel = run_strategy(f, ds, k);
  validate(sel, ds.size());
  write_selection(sel, f.out);

  if (!f.subset_out.empty()) {
    auto order = sel.indices;
    if (f.preserve_order == "original") std::sort(order.begin(), order.end());
    write_dataset(subset(ds, order), f.subset_out + ".jsonl", f.subset_out + ".emb1");
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::cout << fmt::format("sample: strategy={} N={} k={} selected={} wall={:.3f}s\n", f.strategy, ds.size(), k,
                           sel.indices.size(), wall);
  return 0;
}

// --- score ------------------------------------------------------------------------

struct ScoreFlags {
  CommonFlags common;
  GmmFlags gmm;
  std::string out = "-";
  bool renormalize = false;
  bool simplex = false;
  std::string delta_mode = "analytic";
};

int run_score(ScoreFlags& f) {
  Matrix x;
  if (!f.common.meta.empty()) {
    x = load_dataset(f.common.meta, f.common.emb).embeddings;
  } else {
    x = read_emb1(f.common.emb);
  }
  if (x.empty()) invalid("isa", "cannot score an empty corpus");
  const GmmModel model = f.gmm.resolve(x, f.common.seed, f.common.threads);
  ScoreOptions so;
  so.simplex = f.simplex;
  so.threads = f.common.threads;
  const ScoreVector scores = score_points(model, x, so);
  if (scores.degenerate) std::cerr << "isa: warning: all log-likelihoods equal; normalised scores set to 0\n";
  DeltaOptions dopt;
  dopt.mode = f.delta_mode == "naive" ? DeltaMode::naive : DeltaMode::analytic;
  dopt.renormalize = f.renormalize;
  const EntropyReport report = entropy_deltas(scores, dopt);

  std::string csv = "index,raw_ll,norm_ll,p,delta\n";
  for (std::size_t i = 0; i < scores.size(); ++i)
    csv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, scores.raw_ll[i], scores.norm_ll[i], scores.p[i],
                       report.deltas[i]);
  write_text(f.out, csv);
  std::cerr << fmt::format("score: N={} entropy={:.17g}\n", scores.size(), report.total_entropy);
  return 0;
}

// --- fit-law ----------------------------------------------------------------------

struct FitLawFlags {
  std::string in;
  std::string mode = "pinned";
  std::string out = "-";
  std::string curve_out;
  bool weighted = false;
  unsigned threads = 1;
};

int run_fit_law(const FitLawFlags& f) {
  const auto points = read_winrate_csv(f.in);
  FitOptions opt;
  opt.weighted = f.weighted;
  const ScalingLawFit fit = parse_fit_mode(f.mode) == FitMode::pinned ? fit_pinned(points, opt) : fit_full(points, opt);
  write_text(f.out, to_json(fit));
  if (!f.curve_out.empty()) write_text(f.curve_out, curve_csv(fit));
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Subset selection for alignment corpora and scaling-law fitting"};
  app.name("isa");
  app.require_subcommand(1);

  SampleFlags sample;
  auto* sc = app.add_subcommand("sample", "Select a subset of a corpus and write a selection JSON");
  sample.common.add(*sc, true);
  sample.gmm.add(*sc);
  sc->add_option("--out", sample.out, "Selection JSON output path")->required();
  sc->add_option("--strategy", sample.strategy, "isa | random | density | llm")
      ->capture_default_str()
      ->check(CLI::IsMember({"isa", "random", "density", "llm"}))
      ->envname("ISA_STRATEGY");
  auto* k_opt = sc->add_option("--k", sample.k, "Number of records to select")->check(CLI::PositiveNumber);
  auto* f_opt = sc->add_option("--fraction", sample.fraction, "Fraction of records to select, k = ceil(f * N)")
                    ->check(CLI::Range(0.0, 1.0))
                    ->check([](const std::string& s) { return std::stod(s) > 0.0 ? "" : "fraction must be > 0"; });
  k_opt->excludes(f_opt);
  f_opt->excludes(k_opt);
  sc->add_flag("--renormalize", sample.renormalize, "isa: renormalise over the remaining points per removal");
  sc->add_flag("--simplex", sample.simplex, "isa: divide p by its sum before computing entropy");
  sc->add_option("--bandwidth", sample.bandwidth, "density: kernel bandwidth, or 'auto' for the median heuristic")
      ->capture_default_str();
  sc->add_flag("--density-topk", sample.density_topk, "density: take the k sparsest points instead of sampling");
  sc->add_option("--endpoint", sample.endpoint, "llm: chat-completion base URL")->envname("ISA_ENDPOINT");
  sc->add_option("--model-name", sample.model_name, "llm: model name sent in requests")->envname("ISA_MODEL_NAME");
  sc->add_option("--auth-token", sample.auth_token, "llm: bearer token")->envname("ISA_AUTH_TOKEN");
  sc->add_option("--timeout-ms", sample.timeout_ms, "llm: per-request timeout")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sc->add_option("--max-retries", sample.max_retries, "llm: retries per record on transport failure")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sc->add_option("--backoff-ms", sample.backoff_ms, "llm: base retry delay, doubled per retry")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sc->add_option("--concurrency", sample.concurrency, "llm: max requests in flight")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sc->add_option("--mock-script", sample.mock_script, "llm: JSONL of scripted responses by record id")
      ->check(CLI::ExistingFile)
      ->envname("ISA_MOCK_SCRIPT");
  sc->add_option("--scan-order", sample.scan_order, "llm: shuffled | natural")
      ->capture_default_str()
      ->check(CLI::IsMember({"shuffled", "natural"}));
  sc->add_option("--subset-out", sample.subset_out, "Write PREFIX.jsonl and PREFIX.emb1 with the selected records");
  sc->add_option("--preserve-order", sample.preserve_order, "Subset order: selection | original")
      ->capture_default_str()
      ->check(CLI::IsMember({"selection", "original"}));

  ScoreFlags score;
  auto* so = app.add_subcommand("score", "Write per-point ISA scores as CSV");
  score.common.add(*so, false);
  score.gmm.add(*so);
  so->add_option("--out", score.out, "CSV output path ('-' for stdout)")->capture_default_str();
  so->add_flag("--renormalize", score.renormalize, "Renormalise over the remaining points per removal");
  so->add_flag("--simplex", score.simplex, "Divide p by its sum before computing entropy");
  so->add_option("--delta-mode", score.delta_mode, "analytic | naive")
      ->capture_default_str()
      ->check(CLI::IsMember({"analytic", "naive"}));

  FitLawFlags law;
  auto* fl = app.add_subcommand("fit-law", "Fit R(x) = r - (r - a) exp(-b x) to winrate observations");
  fl->add_option("--in", law.in, "CSV with header x,winrate[,ci95]")->required()->check(CLI::ExistingFile);
  fl->add_option("--mode", law.mode, "pinned | full")->capture_default_str()->check(CLI::IsMember({"pinned", "full"}));
  fl->add_option("--out", law.out, "Fit JSON output path ('-' for stdout)")->capture_default_str();
  fl->add_option("--curve-out", law.curve_out, "Predicted curve CSV at 1-percent steps");
  fl->add_flag("--weighted", law.weighted, "Weight residuals by 1/ci95^2");
  fl->add_option("--threads", law.threads, "Accepted for a uniform interface; fitting runs on one thread")
      ->check(CLI::PositiveNumber)
      ->envname("ISA_THREADS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*sc) {
      if (!sample.k && !sample.fraction) invalid("cli", "exactly one of --k or --fraction is required");
      return run_sample(sample);
    }
    if (*so) return run_score(score);
    return run_fit_law(law);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == ErrorKind::validation ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "isa: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace isa::cli
