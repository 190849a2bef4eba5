#pragma once

// Shared fixtures and independent oracles for the test suites. Oracles here
// deliberately avoid the library's code paths.

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "isa/dataset.hpp"
#include "isa/gmm.hpp"
#include "isa/rng.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("isa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

#ifdef ISA_CLI_PATH
inline CliResult run_cli(const std::string& args, const std::string& env = "") {
  TempDir tmp;
  const auto out = tmp / "stdout";
  const auto err = tmp / "stderr";
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" ISA_CLI_PATH "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}
#endif

inline std::vector<isa::DataRecord> make_records(std::size_t n) {
  std::vector<isa::DataRecord> recs;
  for (std::size_t i = 0; i < n; ++i)
    recs.push_back({"rec-" + std::to_string(i), "prompt " + std::to_string(i), "completion " + std::to_string(i),
                    i % 3 != 0});
  return recs;
}

/// n rows of dimension d drawn from two Gaussian blobs at -offset and +offset.
inline isa::Matrix two_blobs(std::size_t n, std::size_t d, double offset, double spread, std::uint64_t seed) {
  isa::Rng rng(seed);
  isa::Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double centre = i % 2 == 0 ? -offset : offset;
    for (std::size_t j = 0; j < d; ++j) m(i, j) = static_cast<float>(centre + spread * rng.normal());
  }
  return m;
}

inline isa::EmbeddedDataset make_dataset(const isa::Matrix& m) {
  isa::EmbeddedDataset ds;
  ds.records = make_records(m.rows());
  ds.embeddings = m;
  return ds;
}

// --- oracles -------------------------------------------------------------------

using BigFloat = boost::multiprecision::cpp_bin_float_50;

/// log[pi N(x|mu1,S1) + (1-pi) N(x|mu2,S2)] in 50-digit arithmetic, by direct
/// evaluation of both densities and their weighted sum.
inline BigFloat oracle_densities(const isa::GmmModel& m, const std::vector<double>& x, BigFloat& d1, BigFloat& d2) {
  const BigFloat two_pi = 2 * boost::multiprecision::atan(BigFloat(1)) * 4;
  auto density = [&](const std::vector<double>& mu, const std::vector<double>& var) {
    BigFloat quad = 0, det = 1;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const BigFloat diff = BigFloat(x[j]) - BigFloat(mu[j]);
      quad += diff * diff / BigFloat(var[j]);
      det *= BigFloat(var[j]);
    }
    return boost::multiprecision::exp(-quad / 2) /
           boost::multiprecision::sqrt(boost::multiprecision::pow(two_pi, static_cast<int>(x.size())) * det);
  };
  d1 = BigFloat(m.mix) * density(m.mean1, m.var1);
  d2 = (1 - BigFloat(m.mix)) * density(m.mean2, m.var2);
  return d1 + d2;
}

inline double oracle_log_likelihood(const isa::GmmModel& m, const std::vector<double>& x) {
  BigFloat d1, d2;
  return static_cast<double>(boost::multiprecision::log(oracle_densities(m, x, d1, d2)));
}

inline std::pair<double, double> oracle_responsibilities(const isa::GmmModel& m, const std::vector<double>& x) {
  BigFloat d1, d2;
  const BigFloat total = oracle_densities(m, x, d1, d2);
  return {static_cast<double>(d1 / total), static_cast<double>(d2 / total)};
}

inline isa::GmmModel random_model(std::size_t d, isa::Rng& rng) {
  isa::GmmModel m;
  m.mix = 0.1 + 0.8 * rng.uniform();
  for (std::size_t j = 0; j < d; ++j) {
    m.mean1.push_back(4.0 * rng.uniform() - 2.0);
    m.mean2.push_back(4.0 * rng.uniform() - 2.0);
    m.var1.push_back(0.2 + 2.0 * rng.uniform());
    m.var2.push_back(0.2 + 2.0 * rng.uniform());
  }
  return m;
}

/// density[i] = (1/N) sum_j exp(-|xi - xj|^2 / (2 h^2)), in long double.
inline std::vector<double> oracle_density(const isa::Matrix& x, double h) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    long double sum = 0;
    for (std::size_t j = 0; j < x.rows(); ++j) {
      long double d2 = 0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const long double diff = static_cast<long double>(x(i, c)) - x(j, c);
        d2 += diff * diff;
      }
      sum += std::exp(-d2 / (2.0L * h * h));
    }
    out[i] = static_cast<double>(sum / x.rows());
  }
  return out;
}

/// Kahan-compensated long double sum.
inline double oracle_sum(const std::vector<double>& v) {
  long double s = 0, c = 0;
  for (double x : v) {
    const long double y = x - c;
    const long double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return static_cast<double>(s);
}

/// Literal leave-one-out loop over fixed p: H(X) - H(X without i).
inline std::vector<double> oracle_loo_deltas(const std::vector<double>& p) {
  std::vector<double> terms;
  for (double v : p) terms.push_back(-v * std::log(v));
  const double total = oracle_sum(terms);
  std::vector<double> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> rest;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i) rest.push_back(terms[j]);
    out.push_back(total - oracle_sum(rest));
  }
  return out;
}

/// Exponential plateau evaluated directly, for generating synthetic data.
inline double plateau(double r, double a, double b, double x) { return r - (r - a) * std::exp(-b * x); }

}  // namespace testing
