// Scalar reference implementations of the perceptual losses, used as
// oracles by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "atn/perceptual.hpp"

namespace atn::oracle {

using perceptual::ConvExtractor;
using perceptual::ExtractorSpec;
using perceptual::canonical_layers;

using Act = std::vector<std::vector<std::vector<double>>>;  // [C][H][W]

// Three single-conv stages, widths 2/3/2, named like the canonical taps.
inline ExtractorSpec stub_spec() {
  ExtractorSpec s;
  s.stages = {{1, 2, "relu1_2"}, {1, 3, "relu2_2"}, {1, 2, "relu3_3"}};
  s.in_channels = 1;
  return s;
}

inline ConvExtractor stub(std::uint64_t seed = 5) {
  ConvExtractor phi(stub_spec(), seed);
  phi.to(torch::kFloat64);
  // Non-zero biases so the oracle exercises them too.
  auto params = phi.parameters();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& [name, t] : params)
    if (name.find(".bias") != std::string::npos)
      for (int64_t i = 0; i < t.numel(); ++i) t[i] = u(gen);
  phi.load_parameters(params);
  return phi;
}

inline torch::Tensor param(const ConvExtractor& phi, const std::string& name) {
  for (const auto& [n, t] : phi.parameters())
    if (n == name) return t;
  throw std::runtime_error("missing parameter " + name);
}

inline Act conv_relu(const Act& in, const torch::Tensor& w, const torch::Tensor& b) {
  const int cout = static_cast<int>(w.size(0)), cin = static_cast<int>(in.size());
  const int h = static_cast<int>(in[0].size()), wd = static_cast<int>(in[0][0].size());
  auto W = w.accessor<double, 4>();
  auto B = b.accessor<double, 1>();
  Act out(cout, std::vector<std::vector<double>>(h, std::vector<double>(wd, 0.0)));
  for (int o = 0; o < cout; ++o)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < wd; ++c) {
        double acc = B[o];
        for (int i = 0; i < cin; ++i)
          for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
              const int rr = r + dr, cc = c + dc;
              if (rr < 0 || rr >= h || cc < 0 || cc >= wd) continue;
              acc += W[o][i][dr + 1][dc + 1] * in[i][rr][cc];
            }
        out[o][r][c] = std::max(acc, 0.0);
      }
  return out;
}

inline Act pool(const Act& in) {
  Act out(in.size());
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t h = in[k].size() / 2, w = in[k][0].size() / 2;
    out[k].assign(h, std::vector<double>(w));
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        out[k][r][c] = std::max({in[k][2 * r][2 * c], in[k][2 * r][2 * c + 1],
                                 in[k][2 * r + 1][2 * c], in[k][2 * r + 1][2 * c + 1]});
  }
  return out;
}

// Scalar forward pass of the stub for one [1,1,H,W] image: all three taps.
inline std::vector<Act> loop_forward(const ConvExtractor& phi, const torch::Tensor& img) {
  const int h = static_cast<int>(img.size(2)), w = static_cast<int>(img.size(3));
  Act x(1, std::vector<std::vector<double>>(h, std::vector<double>(w)));
  auto a = img.accessor<double, 4>();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) x[0][r][c] = a[0][0][r][c];
  std::vector<Act> taps;
  x = conv_relu(x, param(phi, "features.0.weight"), param(phi, "features.0.bias"));
  taps.push_back(x);
  x = conv_relu(pool(x), param(phi, "features.3.weight"), param(phi, "features.3.bias"));
  taps.push_back(x);
  x = conv_relu(pool(x), param(phi, "features.6.weight"), param(phi, "features.6.bias"));
  taps.push_back(x);
  return taps;
}

inline std::vector<std::vector<double>> loop_gram(const Act& a) {
  const std::size_t c = a.size(), h = a[0].size(), w = a[0][0].size();
  std::vector<std::vector<double>> g(c, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t k = 0; k < w; ++k) g[i][j] += a[i][r][k] * a[j][r][k];
      g[i][j] /= static_cast<double>(c * h * w);
    }
  return g;
}

inline double loop_feature(const Act& a, const Act& b) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t r = 0; r < a[i].size(); ++r)
      for (std::size_t c = 0; c < a[i][r].size(); ++c, ++n) s += std::abs(a[i][r][c] - b[i][r][c]);
  return s / static_cast<double>(n);
}

inline double loop_style(const Act& a, const Act& b) {
  const auto ga = loop_gram(a), gb = loop_gram(b);
  double s = 0.0;
  for (std::size_t i = 0; i < ga.size(); ++i)
    for (std::size_t j = 0; j < ga.size(); ++j) s += std::abs(ga[i][j] - gb[i][j]);
  return s / static_cast<double>(a.size() * a[0].size() * a[0][0].size());
}

inline torch::Tensor random_image(std::uint64_t seed, int h = 8, int w = 8) {
  torch::manual_seed(seed);
  return torch::randn({1, 1, h, w}, torch::kFloat64);
}

inline int tap_index(const std::string& name) {
  const auto& c = canonical_layers();
  return static_cast<int>(std::find(c.begin(), c.end(), name) - c.begin());
}


}  // namespace atn::oracle
