#pragma once

#include "kws/error.hpp"
#include "kws/types.hpp"
#include "kws/wav.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

namespace kws {

struct FrameParams {
  int window_ms = 25;
  int shift_ms = 10;
  int num_filters = 40;
  int fft_size = 512;  // power of two >= window samples
};

struct StackingParams {
  int left_context = 10;
  int right_context = 5;
};

// Everything the front end needs. Stored in the model file header so that
// training and inference use identical constants.
struct FeatureConfig {
  FrameParams frame;
  StackingParams stack;
  int sample_rate = 16000;
  float preemphasis = 0.97f;
  float log_floor = 1e-10f;

  int window_samples() const { return frame.window_ms * sample_rate / 1000; }
  int shift_samples() const { return frame.shift_ms * sample_rate / 1000; }
  int stacked_dim() const {
    return frame.num_filters *
           (stack.left_context + 1 + stack.right_context);
  }
};

namespace detail {

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// In-place radix-2 decimation-in-time FFT, n a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace detail

// Triangular mel filterbank over [0, sample_rate/2], applied to the
// magnitude spectrum. Weight rows are built once and reused per frame.
class MelFilterBank {
 public:
  MelFilterBank(const FrameParams& p, int sample_rate) {
    const int num_bins = p.fft_size / 2 + 1;
    const double bin_hz = static_cast<double>(sample_rate) / p.fft_size;
    const double mel_lo = detail::hz_to_mel(0.0);
    const double mel_hi = detail::hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(p.num_filters + 2);
    for (int i = 0; i < p.num_filters + 2; ++i)
      edges[i] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * i /
                                   (p.num_filters + 1));
    centers_.resize(p.num_filters);
    weights_ = Mat<double>::Zero(p.num_filters, num_bins);
    for (int f = 0; f < p.num_filters; ++f) {
      const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
      centers_[f] = mid;
      for (int b = 0; b < num_bins; ++b) {
        const double hz = b * bin_hz;
        double w = 0.0;
        if (hz > lo && hz < mid)
          w = (hz - lo) / (mid - lo);
        else if (hz >= mid && hz < hi)
          w = (hi - hz) / (hi - mid);
        weights_(f, b) = w;
      }
    }
  }

  const Mat<double>& weights() const { return weights_; }
  const std::vector<double>& center_frequencies() const { return centers_; }

 private:
  Mat<double> weights_;
  std::vector<double> centers_;
};

// Incremental framer: feed raw samples in arbitrary chunks, pull completed
// log-filterbank frames. One-shot and chunked feeds produce identical
// frames, so the offline path below is just a single push.
template <class S>
class Framer {
 public:
  explicit Framer(const FeatureConfig& cfg)
      : cfg_(cfg),
        bank_(cfg.frame, cfg.sample_rate),
        window_(cfg.window_samples()),
        shift_(cfg.shift_samples()) {
    if (cfg.frame.fft_size < window_)
      throw DataError("features: fft_size smaller than window");
    hamming_.resize(window_);
    for (int n = 0; n < window_; ++n)
      hamming_[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (window_ - 1));
  }

  // Appends samples and returns every frame completed by them.
  Mat<S> push(const int16_t* samples, Index count) {
    buf_.reserve(buf_.size() + static_cast<size_t>(count));
    for (Index i = 0; i < count; ++i) {
      const double x = static_cast<double>(samples[i]);
      const double prev = have_prev_ ? prev_ : x;  // x[-1] := x[0]
      buf_.push_back(x - cfg_.preemphasis * prev);
      prev_ = x;
      have_prev_ = true;
    }
    Index ready = 0;
    while (head_ + static_cast<size_t>(ready) * shift_ + window_ <=
           buf_.size())
      ++ready;
    Mat<S> out(ready, cfg_.frame.num_filters);
    for (Index t = 0; t < ready; ++t) {
      compute_frame(buf_.data() + head_ + static_cast<size_t>(t) * shift_,
                    out, t);
    }
    head_ += static_cast<size_t>(ready) * shift_;
    if (head_ > 8192) {  // compact the consumed prefix
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(head_));
      head_ = 0;
    }
    return out;
  }

  const MelFilterBank& filter_bank() const { return bank_; }

 private:
  void compute_frame(const double* x, Mat<S>& out, Index row) {
    std::vector<std::complex<double>> spec(cfg_.frame.fft_size,
                                           {0.0, 0.0});
    for (int n = 0; n < window_; ++n) spec[n] = x[n] * hamming_[n];
    detail::fft_radix2(spec);
    const int num_bins = cfg_.frame.fft_size / 2 + 1;
    Vec<double> mag(num_bins);
    for (int b = 0; b < num_bins; ++b) mag[b] = std::abs(spec[b]);
    Vec<double> energies = bank_.weights() * mag;
    const double floor_val = static_cast<double>(cfg_.log_floor);
    for (int f = 0; f < cfg_.frame.num_filters; ++f)
      out(row, f) =
          static_cast<S>(std::log(std::max(energies[f], floor_val)));
  }

  FeatureConfig cfg_;
  MelFilterBank bank_;
  int window_;
  int shift_;
  std::vector<double> hamming_;
  std::vector<double> buf_;  // pre-emphasized samples
  size_t head_ = 0;
  double prev_ = 0.0;
  bool have_prev_ = false;
};

// One frame of 40 log filterbank energies per shift position. Audio shorter
// than one window yields an empty matrix.
template <class S>
Mat<S> frame_signal(const AudioBuffer& audio, const FeatureConfig& cfg) {
  if (audio.sample_rate != cfg.sample_rate)
    throw DataError("features: sample_rate=" +
                    std::to_string(audio.sample_rate) + " (want " +
                    std::to_string(cfg.sample_rate) +
                    ", resampling unsupported)");
  Framer<S> framer(cfg);
  return framer.push(audio.samples.data(),
                     static_cast<Index>(audio.samples.size()));
}

// Concatenate [t-left .. t .. t+right] per frame, replicating the first and
// last frame past the utterance edges. Output length equals input length.
template <class S>
Mat<S> stack_frames(const Mat<S>& frames, const StackingParams& s) {
  const Index T = frames.rows();
  const Index d = frames.cols();
  const int span = s.left_context + 1 + s.right_context;
  Mat<S> out(T, d * span);
  for (Index t = 0; t < T; ++t) {
    for (int c = 0; c < span; ++c) {
      Index src = t - s.left_context + c;
      src = std::clamp<Index>(src, 0, T - 1);
      out.block(t, static_cast<Index>(c) * d, 1, d) = frames.row(src);
    }
  }
  return out;
}

// Running per-dimension mean/variance for streaming CMVN. Statistics are
// kept in double regardless of the feature scalar.
struct CmvnStats {
  long count = 0;
  Vec<double> sum;   // per-dimension running sum
  Vec<double> sum2;  // per-dimension running sum of squares

  void ensure_dim(Index d) {
    if (sum.size() != d) {
      sum = Vec<double>::Zero(d);
      sum2 = Vec<double>::Zero(d);
      count = 0;
    }
  }

  Vec<double> mean() const {
    return count > 0 ? Vec<double>(sum / count)
                     : Vec<double>(Vec<double>::Zero(sum.size()));
  }

  // Unit variance until two observations exist; a single frame carries no
  // spread and would otherwise floor to a huge inverse scale.
  Vec<double> variance(double floor = 1e-8) const {
    if (count < 2) return Vec<double>::Ones(sum.size());
    Vec<double> v = sum2 / count - (sum / count).cwiseAbs2();
    return v.cwiseMax(floor);
  }

  template <class S>
  void accumulate(const Mat<S>& rows) {
    ensure_dim(rows.cols());
    for (Index t = 0; t < rows.rows(); ++t) {
      sum += rows.row(t).transpose().template cast<double>();
      sum2 += rows.row(t).transpose().template cast<double>().cwiseAbs2();
      ++count;
    }
  }
};

constexpr double kCmvnVarianceFloor = 1e-8;

// Per-utterance CMVN: each output dimension has empirical mean 0 and
// variance 1 (biased N divisor), with the variance floored before division.
template <class S>
Mat<S> apply_cmvn(const Mat<S>& vectors) {
  if (vectors.rows() < 2)
    throw DataError("cmvn: per-utterance mode needs at least 2 vectors");
  const Mat<double> x = vectors.template cast<double>();
  const Vec<double> mean = x.colwise().mean().transpose();
  const Vec<double> var =
      (x.rowwise() - mean.transpose()).cwiseAbs2().colwise().mean()
          .transpose().cwiseMax(kCmvnVarianceFloor);
  const Vec<double> inv_std = var.cwiseSqrt().cwiseInverse();
  return ((x.rowwise() - mean.transpose()).array().rowwise() *
          inv_std.transpose().array())
      .matrix()
      .template cast<S>();
}

// Streaming CMVN: each vector is normalized with the running statistics
// accumulated from all vectors before it, then folded into them. The
// per-vector order makes the result independent of how the stream is
// chunked. With no history the first vector passes through unscaled.
template <class S>
Mat<S> apply_cmvn_streaming(const Mat<S>& vectors, CmvnStats& stats) {
  stats.ensure_dim(vectors.cols());
  Mat<S> out(vectors.rows(), vectors.cols());
  for (Index t = 0; t < vectors.rows(); ++t) {
    const Vec<double> v = vectors.row(t).transpose().template cast<double>();
    const Vec<double> mean = stats.mean();
    const Vec<double> inv_std =
        stats.variance(kCmvnVarianceFloor).cwiseSqrt().cwiseInverse();
    out.row(t) =
        ((v - mean).cwiseProduct(inv_std)).transpose().template cast<S>();
    stats.sum += v;
    stats.sum2 += v.cwiseAbs2();
    ++stats.count;
  }
  return out;
}

// dB-like level of one frame of log filterbank energies.
template <class S>
double frame_level_db(const Mat<S>& frames, Index t) {
  const double mean_log = frames.row(t).template cast<double>().mean();
  return mean_log * 20.0 / std::log(10.0);
}

// Energy gate: frames whose level exceeds the utterance's 10th-percentile
// level by threshold_db are voiced; runs are extended by hangover_frames on
// both sides and merged. Regions are inclusive [start, end] frame indices.
template <class S>
std::vector<std::pair<Index, Index>> voice_activity_gate(
    const Mat<S>& frames, double threshold_db, int hangover_frames) {
  const Index T = frames.rows();
  std::vector<std::pair<Index, Index>> regions;
  if (T == 0) return regions;
  std::vector<double> level(T);
  for (Index t = 0; t < T; ++t) level[t] = frame_level_db(frames, t);
  std::vector<double> sorted = level;
  const Index p10 = static_cast<Index>((T - 1) / 10);
  std::nth_element(sorted.begin(), sorted.begin() + p10, sorted.end());
  const double floor_db = sorted[p10];

  for (Index t = 0; t < T; ++t) {
    if (!(level[t] > floor_db + threshold_db)) continue;
    Index start = std::max<Index>(0, t - hangover_frames);
    Index end = t;
    while (end + 1 < T && level[end + 1] > floor_db + threshold_db) ++end;
    t = end;
    end = std::min<Index>(T - 1, end + hangover_frames);
    if (!regions.empty() && start <= regions.back().second + 1)
      regions.back().second = std::max(regions.back().second, end);
    else
      regions.emplace_back(start, end);
  }
  return regions;
}

}  // namespace kws
