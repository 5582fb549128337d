#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "transport/core_model.hpp"
#include "transport/nuisance.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("transport-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Source records with one covariate, V = X.
inline transport::CombinedSample tiny_sample(const std::vector<double>& xs, const std::vector<int>& as,
                                             const std::vector<double>& ys, const std::vector<double>& target_v) {
  std::vector<transport::SourceRecord> src;
  for (std::size_t i = 0; i < xs.size(); ++i) src.push_back({{xs[i]}, as[i], ys[i]});
  std::vector<transport::TargetRecord> tgt;
  for (double v : target_v) tgt.push_back({{v}, std::nullopt});
  return transport::CombinedSample(src, tgt, {0});
}

// A fit with constant entries sized for `sample`.
inline transport::NuisanceFit constant_fit(const transport::CombinedSample& s, double pi1, double mu0, double mu1,
                                           double rho, double tau0, double tau1) {
  transport::NuisanceFit f;
  const std::size_t n = s.n();
  f.pi1.assign(n, pi1);
  f.mu[0].assign(n, mu0);
  f.mu[1].assign(n, mu1);
  f.rho.assign(n, rho);
  f.tau[0].assign(n, tau0);
  f.tau[1].assign(n, tau1);
  f.pa_v.assign(n, pi1);
  return f;
}

}  // namespace testing
