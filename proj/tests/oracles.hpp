// Independent naive-loop reference implementations used to verify the
// library. Everything here is plain double-precision loops over flat
// vectors; nothing reuses the implementation under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

namespace oracle {

// Same-padding stride-1 convolution via direct 7-loop summation.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t n, std::size_t c_in,
                                  std::size_t h, std::size_t w, const std::vector<double>& kernel,
                                  std::size_t c_out, std::size_t kh, std::size_t kw,
                                  const std::vector<double>& bias) {
  std::vector<double> out(n * c_out * h * w, 0.0);
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  for (std::size_t nb = 0; nb < n; ++nb)
    for (std::size_t oc = 0; oc < c_out; ++oc)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          double acc = bias[oc];
          for (std::size_t ic = 0; ic < c_in; ++ic)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - ph;
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - pw;
                if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(h) ||
                    jj >= static_cast<std::ptrdiff_t>(w)) {
                  continue;
                }
                acc += x[((nb * c_in + ic) * h + static_cast<std::size_t>(ii)) * w +
                         static_cast<std::size_t>(jj)] *
                       kernel[((oc * c_in + ic) * kh + u) * kw + v];
              }
          out[((nb * c_out + oc) * h + i) * w + j] = acc;
        }
  return out;
}

// Windowed max with per-axis pass-through for axes shorter than the window.
inline std::vector<double> maxpool2d(const std::vector<double>& x, std::size_t n, std::size_t c,
                                     std::size_t h, std::size_t w, std::size_t window,
                                     std::size_t* oh_out = nullptr, std::size_t* ow_out = nullptr) {
  const std::size_t oh = h >= window ? h / window : h;
  const std::size_t ow = w >= window ? w / window : w;
  const std::size_t wh = h >= window ? window : 1;
  const std::size_t ww = w >= window ? window : 1;
  std::vector<double> out(n * c * oh * ow);
  for (std::size_t nb = 0; nb < n; ++nb)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double best = -1e300;
          for (std::size_t u = 0; u < wh; ++u)
            for (std::size_t v = 0; v < ww; ++v) {
              best = std::max(best, x[((nb * c + ch) * h + i * wh + u) * w + j * ww + v]);
            }
          out[((nb * c + ch) * oh + i) * ow + j] = best;
        }
  if (oh_out) *oh_out = oh;
  if (ow_out) *ow_out = ow;
  return out;
}

inline std::vector<double> linear(const std::vector<double>& x, std::size_t rows, std::size_t d_in,
                                  const std::vector<double>& w, std::size_t d_out,
                                  const std::vector<double>& b) {
  std::vector<double> out(rows * d_out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d_out; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < d_in; ++i) acc += x[r * d_in + i] * w[i * d_out + j];
      out[r * d_out + j] = acc;
    }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

inline std::vector<double> layernorm(const std::vector<double>& x, std::size_t rows, std::size_t d,
                                     const std::vector<double>& gain,
                                     const std::vector<double>& shift, double eps = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += x[r * d + i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = x[r * d + i] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = (x[r * d + i] - mean) / std::sqrt(var + eps) * gain[i] + shift[i];
    }
  }
  return out;
}

inline std::vector<double> matmul(const std::vector<double>& a, std::size_t m, std::size_t k,
                                  const std::vector<double>& b, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      out[i * n + j] = acc;
    }
  return out;
}

struct MhaNaive {
  std::size_t d_q = 0, d_kv = 0, d_model = 0;
  int heads = 1;
  std::vector<double> wq, wk, wv, wo, ln_gain, ln_shift;
};

// Full attention block without dropout: per-head explicit loops, output
// projection, residual from the query source, layernorm.
inline std::vector<double> mha_block(const std::vector<double>& q_src, std::size_t tq,
                                     const std::vector<double>& kv_src, std::size_t tkv,
                                     const MhaNaive& p) {
  const std::vector<double> q = matmul(q_src, tq, p.d_q, p.wq, p.d_model);
  const std::vector<double> k = matmul(kv_src, tkv, p.d_kv, p.wk, p.d_model);
  const std::vector<double> v = matmul(kv_src, tkv, p.d_kv, p.wv, p.d_model);
  const std::size_t d_head = p.d_model / static_cast<std::size_t>(p.heads);

  std::vector<double> concat(tq * p.d_model, 0.0);
  for (int h = 0; h < p.heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * d_head;
    for (std::size_t i = 0; i < tq; ++i) {
      std::vector<double> scores(tkv);
      for (std::size_t j = 0; j < tkv; ++j) {
        double acc = 0.0;
        for (std::size_t dd = 0; dd < d_head; ++dd) {
          acc += q[i * p.d_model + c0 + dd] * k[j * p.d_model + c0 + dd];
        }
        scores[j] = acc / std::sqrt(static_cast<double>(d_head));
      }
      const std::vector<double> weights = softmax(scores);
      for (std::size_t dd = 0; dd < d_head; ++dd) {
        double acc = 0.0;
        for (std::size_t j = 0; j < tkv; ++j) acc += weights[j] * v[j * p.d_model + c0 + dd];
        concat[i * p.d_model + c0 + dd] = acc;
      }
    }
  }
  std::vector<double> projected = matmul(concat, tq, p.d_model, p.wo, p.d_q);
  for (std::size_t i = 0; i < tq * p.d_q; ++i) projected[i] += q_src[i];
  return layernorm(projected, tq, p.d_q, p.ln_gain, p.ln_shift);
}

struct PoolHeadNaive {
  std::vector<double> w1;  // [d, attn]
  std::vector<double> w2;  // [attn]
  std::vector<double> wv;  // [d, out]
  std::size_t attn = 0, out = 0;
};

inline std::vector<double> attention_pool(const std::vector<double>& x, std::size_t t,
                                          std::size_t d, const std::vector<PoolHeadNaive>& heads) {
  std::vector<double> result;
  for (const auto& head : heads) {
    std::vector<double> scores(t);
    for (std::size_t i = 0; i < t; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < head.attn; ++a) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += x[i * d + j] * head.w1[j * head.attn + a];
        s += std::tanh(acc) * head.w2[a];
      }
      scores[i] = s;
    }
    const std::vector<double> alpha = softmax(scores);
    for (std::size_t o = 0; o < head.out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < t; ++i) {
        double val = 0.0;
        for (std::size_t j = 0; j < d; ++j) val += x[i * d + j] * head.wv[j * head.out + o];
        acc += alpha[i] * val;
      }
      result.push_back(acc);
    }
  }
  return result;
}

inline double distill_loss(const std::vector<double>& q, const std::vector<double>& logits,
                           double temperature = 1.0) {
  std::vector<double> scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
  const std::vector<double> p = softmax(scaled);
  double loss = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) loss -= q[i] * std::log(p[i]);
  return loss;
}

inline double entropy(const std::vector<double>& q) {
  double h = 0.0;
  for (double v : q) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

inline double macro_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  std::map<int, std::pair<int, int>> per_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    per_class[labels[i]].second += 1;
    if (preds[i] == labels[i]) per_class[labels[i]].first += 1;
  }
  double sum = 0.0;
  for (const auto& [cls, counts] : per_class) {
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return sum / static_cast<double>(per_class.size());
}

// Scalar Adam on f(w) = w^2 / 2 (gradient w), the reference trajectory for
// the optimizer test.
inline std::vector<double> adam_scalar_trajectory(double w0, double lr, int steps,
                                                  double beta1 = 0.9, double beta2 = 0.999,
                                                  double eps = 1e-8) {
  std::vector<double> traj;
  double w = w0, m = 0.0, v = 0.0;
  for (int t = 1; t <= steps; ++t) {
    const double g = w;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(beta1, t));
    const double vhat = v / (1.0 - std::pow(beta2, t));
    w -= lr * mhat / (std::sqrt(vhat) + eps);
    traj.push_back(w);
  }
  return traj;
}

inline double mel_of_hz(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double hz_of_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace oracle
