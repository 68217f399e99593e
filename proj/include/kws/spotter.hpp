#pragma once

#include "kws/ctc.hpp"
#include "kws/error.hpp"
#include "kws/features.hpp"
#include "kws/network.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace kws {

// word -> phoneme names
struct Lexicon {
  std::map<std::string, std::vector<std::string>> entries;
};

Lexicon load_lexicon(const std::string& path);

struct KeywordSpec {
  std::string id;  // the phrase text
  LabelSeq phonemes;
  double threshold = 0.0;
  bool normalize_by_frames = false;
};

// Keyword config file entry: phrase TAB threshold TAB normalize(0|1).
struct KeywordConfigEntry {
  std::string phrase;
  double threshold = 0.0;
  bool normalize_by_frames = false;
};

std::vector<KeywordConfigEntry> load_keyword_config(const std::string& path);

struct WindowParams {
  int window_frames = 100;
  int hop_frames = 25;
  int batch_frames = 32;
};

struct DetectionEvent {
  std::string keyword_id;
  Index start_frame = 0;
  Index end_frame = 0;  // exclusive; end - start <= window_frames
  double score = 0.0;   // log p(l | x_window), optionally per-frame
  bool fired = false;   // score > threshold, exactly
};

void write_detection_log(const std::string& path, const std::string& stream_id,
                         const std::vector<DetectionEvent>& events);

// Phoneme sequences of the phrase's words concatenated in order, no
// separator unit. Unknown words or units are named in the error.
template <class S>
KeywordSpec register_keyword(const std::string& phrase, const Lexicon& lexicon,
                             const ModelParameters<S>& model, double threshold,
                             bool normalize_by_frames = false) {
  KeywordSpec spec;
  spec.id = phrase;
  spec.threshold = threshold;
  spec.normalize_by_frames = normalize_by_frames;

  std::map<std::string, Unit> unit_of;
  for (size_t i = 0; i < model.phoneme_inventory.size(); ++i)
    unit_of[model.phoneme_inventory[i]] = static_cast<Unit>(i);

  std::string word;
  std::vector<std::string> words;
  for (char c : phrase + " ") {
    if (c == ' ' || c == '\t') {
      if (!word.empty()) words.push_back(word);
      word.clear();
    } else {
      word += c;
    }
  }
  if (words.empty()) throw DataError("keyword: empty phrase");
  for (const auto& w : words) {
    auto it = lexicon.entries.find(w);
    if (it == lexicon.entries.end())
      throw DataError("keyword: word '" + w + "' not in lexicon");
    for (const auto& name : it->second) {
      auto uit = unit_of.find(name);
      if (uit == unit_of.end() || uit->second == kBlank)
        throw DataError("keyword: unit '" + name +
                        "' not in model inventory");
      spec.phonemes.push_back(uit->second);
    }
  }
  return spec;
}

// Window confidence: log p(l | x_window) over the window's posteriors,
// divided by the window length when the keyword asks for it. -inf when the
// window is too short for the sequence; such a window can never fire.
template <class S>
double score_window(const Mat<S>& window_probs, const KeywordSpec& keyword) {
  const ForwardResult<S> r = forward_score(keyword.phonemes, window_probs);
  if (!r.feasible) return -std::numeric_limits<double>::infinity();
  double score = static_cast<double>(r.log_prob);
  if (keyword.normalize_by_frames)
    score /= static_cast<double>(window_probs.rows());
  return score;
}

struct SpotterConfig {
  WindowParams window;
  double vad_threshold_db = 6.0;
  int vad_hangover = 8;
  // Frames buffered to seed the stream's CMVN statistics before the first
  // posteriors are computed.
  int cmvn_warmup_frames = 25;
};

namespace detail {

// Exact running q10 = sorted[(n-1)/10] over all values seen so far.
class RunningP10 {
 public:
  void insert(double v) {
    const size_t n = low_.size() + high_.size() + 1;
    const size_t target = (n - 1) / 10 + 1;
    if (!low_.empty() && v <= *low_.rbegin())
      low_.insert(v);
    else
      high_.insert(v);
    while (low_.size() > target) {
      high_.insert(*low_.rbegin());
      low_.erase(std::prev(low_.end()));
    }
    while (low_.size() < target) {
      low_.insert(*high_.begin());
      high_.erase(high_.begin());
    }
  }
  double value() const { return *low_.rbegin(); }
  bool empty() const { return low_.empty() && high_.empty(); }

 private:
  std::multiset<double> low_, high_;
};

}  // namespace detail

// One session per audio stream. Feed samples in arbitrary chunks; the
// produced events depend only on the sample sequence, not the chunking:
// features, normalization, forward batches and window boundaries are all
// keyed to absolute frame indices.
//
// Streaming differences from the offline operations, by necessity of
// causality: the VAD noise floor is the running 10th percentile of all
// frames so far (not the whole utterance) with hangover extending regions
// forward only, and CMVN normalizes each stacked vector with the running
// statistics of the frames before it (after a warmup block that is
// normalized with its own statistics).
template <class S>
class SpotterSession {
 public:
  SpotterSession(const ModelParameters<S>& model,
                 std::vector<KeywordSpec> keywords, SpotterConfig cfg = {})
      : model_(&model),
        keywords_(std::move(keywords)),
        cfg_(cfg),
        framer_(model.feature_config),
        next_boundary_(cfg.window.hop_frames) {
    if (keywords_.empty())
      throw DataError("spotter: session needs at least one keyword");
    if (cfg_.window.hop_frames < 1 ||
        cfg_.window.hop_frames > cfg_.window.window_frames ||
        cfg_.window.batch_frames < 1)
      throw DataError("spotter: invalid window params");
    muted_until_.assign(keywords_.size(), 0);
  }

  const std::vector<KeywordSpec>& keywords() const { return keywords_; }
  Index frames_seen() const { return static_cast<Index>(frames_.size()); }

  std::vector<DetectionEvent> push_audio(const int16_t* samples, Index count) {
    std::vector<DetectionEvent> events;
    const Mat<S> fresh = framer_.push(samples, count);
    ingest_frames(fresh);
    const Index raw = static_cast<Index>(frames_.size());
    // Stacked vector t needs raw frame t + right_context.
    const int right = model_->feature_config.stack.right_context;
    while (stacked_count_ < std::max<Index>(0, raw - right))
      emit_stacked(stacked_count_, raw - 1);
    run_pending(false);
    evaluate_windows(events, false);
    return events;
  }

  std::vector<DetectionEvent> push_audio(const std::vector<int16_t>& samples) {
    return push_audio(samples.data(), static_cast<Index>(samples.size()));
  }

  // Finishes edge stacking, evaluates the trailing partial window, then
  // resets the stream to its initial state.
  std::vector<DetectionEvent> flush() {
    std::vector<DetectionEvent> events;
    const Index raw = static_cast<Index>(frames_.size());
    while (stacked_count_ < raw) emit_stacked(stacked_count_, raw - 1);
    run_pending(true);
    evaluate_windows(events, true);
    reset();
    return events;
  }

 private:
  void reset() {
    framer_ = Framer<S>(model_->feature_config);
    frames_.clear();
    levels_ = detail::RunningP10();
    active_.clear();
    last_raw_active_ = -1;
    stacked_count_ = 0;
    warmup_buf_.clear();
    warmed_up_ = false;
    cmvn_ = CmvnStats();
    pending_.clear();
    posteriors_.clear();
    next_boundary_ = cfg_.window.hop_frames;
    muted_until_.assign(keywords_.size(), 0);
  }

  void ingest_frames(const Mat<S>& fresh) {
    for (Index i = 0; i < fresh.rows(); ++i) {
      const Index t = static_cast<Index>(frames_.size());
      frames_.push_back(fresh.row(i));
      const double level = fresh.row(i).template cast<double>().mean() *
                           20.0 / std::log(10.0);
      levels_.insert(level);
      const bool raw_active = level > levels_.value() + cfg_.vad_threshold_db;
      if (raw_active) last_raw_active_ = t;
      active_.push_back(raw_active ||
                        (last_raw_active_ >= 0 &&
                         t - last_raw_active_ <= cfg_.vad_hangover));
    }
  }

  // Build the stacked vector for frame t, clamping context to [0, last].
  void emit_stacked(Index t, Index last) {
    const FeatureConfig& fc = model_->feature_config;
    const int d = fc.frame.num_filters;
    const int span = fc.stack.left_context + 1 + fc.stack.right_context;
    Vec<S> v(static_cast<Index>(d) * span);
    for (int c = 0; c < span; ++c) {
      Index src = t - fc.stack.left_context + c;
      src = std::clamp<Index>(src, 0, last);
      v.segment(static_cast<Index>(c) * d, d) =
          frames_[static_cast<size_t>(src)].transpose();
    }
    ++stacked_count_;

    if (!warmed_up_) {
      warmup_buf_.push_back(std::move(v));
      if (static_cast<int>(warmup_buf_.size()) >= cfg_.cmvn_warmup_frames)
        finish_warmup();
      return;
    }
    normalize_and_queue(v);
  }

  void finish_warmup() {
    if (warmup_buf_.empty()) {
      warmed_up_ = true;
      return;
    }
    cmvn_.ensure_dim(warmup_buf_.front().size());
    for (const auto& v : warmup_buf_) {
      cmvn_.sum += v.template cast<double>();
      cmvn_.sum2 += v.template cast<double>().cwiseAbs2();
      ++cmvn_.count;
    }
    const Vec<double> mean = cmvn_.mean();
    const Vec<double> inv_std =
        cmvn_.variance(kCmvnVarianceFloor).cwiseSqrt().cwiseInverse();
    for (auto& v : warmup_buf_) {
      const Vec<double> n =
          (v.template cast<double>() - mean).cwiseProduct(inv_std);
      pending_.push_back(n.template cast<S>());
    }
    warmup_buf_.clear();
    warmed_up_ = true;
  }

  void normalize_and_queue(const Vec<S>& v) {
    const Vec<double> x = v.template cast<double>();
    const Vec<double> mean = cmvn_.mean();
    const Vec<double> inv_std =
        cmvn_.variance(kCmvnVarianceFloor).cwiseSqrt().cwiseInverse();
    pending_.push_back(((x - mean).cwiseProduct(inv_std)).template cast<S>());
    cmvn_.sum += x;
    cmvn_.sum2 += x.cwiseAbs2();
    ++cmvn_.count;
  }

  // Posterior batches always run at exactly batch_frames during streaming
  // so results are chunking-independent bit for bit.
  void run_pending(bool final) {
    if (final && !warmed_up_) finish_warmup();
    const int batch = cfg_.window.batch_frames;
    while (static_cast<int>(pending_.size()) >= batch) {
      forward_block(batch);
    }
    if (final && !pending_.empty())
      forward_block(static_cast<int>(pending_.size()));
  }

  void forward_block(int n) {
    Mat<S> x(n, pending_.front().size());
    for (int i = 0; i < n; ++i) x.row(i) = pending_[static_cast<size_t>(i)];
    pending_.erase(pending_.begin(), pending_.begin() + n);
    const PosteriorGram<S> y = forward(*model_, x);
    for (Index i = 0; i < y.probs.rows(); ++i)
      posteriors_.push_back(y.probs.row(i).transpose());
  }

  bool window_has_voice(Index start, Index end) const {
    for (Index t = start; t < end; ++t)
      if (active_[static_cast<size_t>(t)]) return true;
    return false;
  }

  void score_boundary(std::vector<DetectionEvent>& events, Index end) {
    const Index start =
        std::max<Index>(0, end - cfg_.window.window_frames);
    if (!window_has_voice(start, end)) return;
    Mat<S> win(end - start, posteriors_.front().size());
    for (Index t = start; t < end; ++t)
      win.row(t - start) = posteriors_[static_cast<size_t>(t)].transpose();
    for (size_t k = 0; k < keywords_.size(); ++k) {
      if (end <= muted_until_[k]) continue;
      DetectionEvent ev;
      ev.keyword_id = keywords_[k].id;
      ev.start_frame = start;
      ev.end_frame = end;
      ev.score = score_window(win, keywords_[k]);
      ev.fired = ev.score > keywords_[k].threshold;
      if (ev.fired)
        muted_until_[k] = end + cfg_.window.window_frames;
      events.push_back(std::move(ev));
    }
  }

  void evaluate_windows(std::vector<DetectionEvent>& events, bool final) {
    const Index T = static_cast<Index>(posteriors_.size());
    while (next_boundary_ <= T) {
      score_boundary(events, next_boundary_);
      next_boundary_ += cfg_.window.hop_frames;
    }
    // Trailing partial window at flush, unless a boundary already covered
    // the last frame.
    if (final && T > 0 && next_boundary_ - cfg_.window.hop_frames != T)
      score_boundary(events, T);
  }

  const ModelParameters<S>* model_;
  std::vector<KeywordSpec> keywords_;
  SpotterConfig cfg_;
  Framer<S> framer_;

  std::vector<RowVec<S>> frames_;  // raw log-fbank frames
  detail::RunningP10 levels_;
  std::vector<bool> active_;
  Index last_raw_active_ = -1;

  Index stacked_count_ = 0;
  std::vector<Vec<S>> warmup_buf_;
  bool warmed_up_ = false;
  CmvnStats cmvn_;
  std::vector<Vec<S>> pending_;    // normalized, waiting for a batch
  std::vector<Vec<S>> posteriors_;
  Index next_boundary_ = 0;
  std::vector<Index> muted_until_;
};

}  // namespace kws
