#pragma once

#include "kws/error.hpp"
#include "kws/numeric.hpp"
#include "kws/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kws {

// Remove adjacent duplicates, then blanks. May return an empty sequence
// (all-blank path), which is a valid result, not an error.
inline LabelSeq collapse(const std::vector<Unit>& path) {
  LabelSeq out;
  Unit prev = -1;
  for (Unit u : path) {
    if (u != prev && u != kBlank) out.push_back(u);
    prev = u;
  }
  return out;
}

// Blank-interleaved form (-, l1, -, l2, ..., -) of length 2|l|+1.
inline std::vector<Unit> extended_sequence(const LabelSeq& labels) {
  std::vector<Unit> ext(2 * labels.size() + 1, kBlank);
  for (size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  return ext;
}

// Shortest path length that can emit the sequence: one frame per label plus
// a forced blank between equal neighbours.
inline Index min_frames(const LabelSeq& labels) {
  Index n = static_cast<Index>(labels.size());
  for (size_t i = 0; i + 1 < labels.size(); ++i)
    if (labels[i] == labels[i + 1]) ++n;
  return n;
}

template <class S>
struct ForwardResult {
  S log_prob = neg_inf<S>();
  bool feasible = false;
};

template <class S>
struct CtcGradOut {
  S loss = S(0);
  Mat<S> grad_logits;  // T x (|L|+1)
};

namespace detail {

inline void check_labels(const LabelSeq& labels, Index num_units,
                         const char* who) {
  if (labels.empty())
    throw std::invalid_argument(std::string(who) + ": empty label sequence");
  for (Unit u : labels)
    if (u <= kBlank || u >= num_units)
      throw std::invalid_argument(std::string(who) + ": label " +
                                  std::to_string(u) + " outside [1, " +
                                  std::to_string(num_units - 1) + "]");
}

// Forward trellis in log space; alpha is T x (2|l|+1) and includes the
// emission at its own frame.
template <class S>
Mat<S> ctc_alpha(const std::vector<Unit>& ext, const Mat<S>& log_probs) {
  const Index T = log_probs.rows();
  const Index n_states = static_cast<Index>(ext.size());
  Mat<S> alpha = Mat<S>::Constant(T, n_states, neg_inf<S>());
  alpha(0, 0) = log_probs(0, ext[0]);
  if (n_states > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (Index t = 1; t < T; ++t) {
    for (Index s = 0; s < n_states; ++s) {
      S acc = alpha(t - 1, s);
      if (s >= 1) acc = log_sum_exp(acc, alpha(t - 1, s - 1));
      if (s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2])
        acc = log_sum_exp(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc + log_probs(t, ext[s]);
    }
  }
  return alpha;
}

}  // namespace detail

// log p(pi | x): the product of per-frame probabilities along one path,
// taken in log space. Exact zeros along the path give -inf.
template <class S>
S path_log_probability(const std::vector<Unit>& path, const Mat<S>& probs) {
  if (static_cast<Index>(path.size()) != probs.rows())
    throw std::invalid_argument("path_log_probability: path length " +
                                std::to_string(path.size()) + " != " +
                                std::to_string(probs.rows()) + " frames");
  S sum = S(0);
  for (Index t = 0; t < probs.rows(); ++t) {
    const Unit u = path[static_cast<size_t>(t)];
    if (u < 0 || u >= probs.cols())
      throw std::invalid_argument("path_log_probability: unit out of range");
    sum += std::log(probs(t, u));
  }
  return std::isnan(sum) ? neg_inf<S>() : sum;
}

// log p(l | x) by the forward recursion over the blank-interleaved trellis.
// Infeasible lengths report -inf with feasible=false.
template <class S>
ForwardResult<S> forward_score(const LabelSeq& labels, const Mat<S>& probs) {
  detail::check_labels(labels, probs.cols(), "forward_score");
  const Index T = probs.rows();
  if (T < min_frames(labels)) return {neg_inf<S>(), false};

  const std::vector<Unit> ext = extended_sequence(labels);
  const Mat<S> log_probs = probs.array().log().matrix();
  const Mat<S> alpha = detail::ctc_alpha(ext, log_probs);
  const Index n_states = static_cast<Index>(ext.size());
  S score = alpha(T - 1, n_states - 1);
  if (n_states > 1) score = log_sum_exp(score, alpha(T - 1, n_states - 2));
  return {score, true};
}

// Eq.-by-eq enumeration of every token sequence of length T: keep those
// collapsing to l, sum their path probabilities. Intractable beyond toy
// sizes; exists as the independent oracle for forward_score.
template <class S>
ForwardResult<S> brute_force_score(const LabelSeq& labels,
                                   const Mat<S>& probs) {
  detail::check_labels(labels, probs.cols(), "brute_force_score");
  const Index T = probs.rows();
  const Index K = probs.cols();
  double total = 1.0;
  for (Index t = 0; t < T; ++t) {
    total *= static_cast<double>(K);
    if (total > 1e7)
      throw std::invalid_argument(
          "brute_force_score: (|L|+1)^T exceeds 1e7");
  }
  if (T < min_frames(labels)) return {neg_inf<S>(), false};

  std::vector<Unit> path(static_cast<size_t>(T), 0);
  S log_sum = neg_inf<S>();
  for (;;) {
    if (collapse(path) == labels)
      log_sum = log_sum_exp(log_sum, path_log_probability(path, probs));
    Index pos = T - 1;
    while (pos >= 0 && path[static_cast<size_t>(pos)] == K - 1)
      path[static_cast<size_t>(pos--)] = 0;
    if (pos < 0) break;
    ++path[static_cast<size_t>(pos)];
  }
  return {log_sum, true};
}

// CTC loss -log p(l|x) and its exact gradient at the softmax logits,
// grad[t] = y_t - gamma_t, with gamma the forward-backward unit posterior.
template <class S>
CtcGradOut<S> loss_and_grad(const LabelSeq& labels, const Mat<S>& probs) {
  detail::check_labels(labels, probs.cols(), "loss_and_grad");
  const Index T = probs.rows();
  const Index K = probs.cols();
  if (T < min_frames(labels))
    throw CtcInfeasible("ctc: " + std::to_string(labels.size()) +
                        " labels need " + std::to_string(min_frames(labels)) +
                        " frames, got " + std::to_string(T));

  const std::vector<Unit> ext = extended_sequence(labels);
  const Index n_states = static_cast<Index>(ext.size());
  const Mat<S> log_probs = probs.array().log().matrix();
  const Mat<S> alpha = detail::ctc_alpha(ext, log_probs);

  // beta excludes the emission at its own frame, so alpha + beta sums the
  // full path mass at every t.
  Mat<S> beta = Mat<S>::Constant(T, n_states, neg_inf<S>());
  beta(T - 1, n_states - 1) = S(0);
  if (n_states > 1) beta(T - 1, n_states - 2) = S(0);
  for (Index t = T - 2; t >= 0; --t) {
    for (Index s = 0; s < n_states; ++s) {
      S acc = log_probs(t + 1, ext[s]) + beta(t + 1, s);
      if (s + 1 < n_states)
        acc = log_sum_exp(acc,
                          log_probs(t + 1, ext[s + 1]) + beta(t + 1, s + 1));
      if (s + 2 < n_states && ext[s + 2] != kBlank && ext[s + 2] != ext[s])
        acc = log_sum_exp(acc,
                          log_probs(t + 1, ext[s + 2]) + beta(t + 1, s + 2));
      beta(t, s) = acc;
    }
  }

  S log_p = alpha(T - 1, n_states - 1);
  if (n_states > 1)
    log_p = log_sum_exp(log_p, alpha(T - 1, n_states - 2));
  if (std::isinf(log_p) && log_p < S(0))
    throw NumericError("ctc: sequence has zero probability mass");

  CtcGradOut<S> out;
  out.loss = -log_p;
  out.grad_logits = probs;
  for (Index t = 0; t < T; ++t) {
    Vec<S> unit_mass = Vec<S>::Constant(K, neg_inf<S>());
    for (Index s = 0; s < n_states; ++s) {
      const Unit u = ext[static_cast<size_t>(s)];
      unit_mass[u] = log_sum_exp(unit_mass[u], alpha(t, s) + beta(t, s));
    }
    for (Index j = 0; j < K; ++j) {
      const S g = unit_mass[j] - log_p;
      if (!(std::isinf(g) && g < S(0)))
        out.grad_logits(t, j) -= std::exp(g);
    }
  }
  return out;
}

// Per-frame top_k (unit, probability) pairs, ties broken by lowest index.
template <class S>
std::vector<std::vector<std::pair<Unit, S>>> alignment_dump(
    const Mat<S>& probs, int top_k) {
  if (top_k < 1) throw std::invalid_argument("alignment_dump: top_k < 1");
  const Index K = probs.cols();
  const int k = std::min<int>(top_k, static_cast<int>(K));
  std::vector<std::vector<std::pair<Unit, S>>> out(
      static_cast<size_t>(probs.rows()));
  std::vector<Unit> idx(static_cast<size_t>(K));
  for (Index t = 0; t < probs.rows(); ++t) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](Unit a, Unit b) {
                        if (probs(t, a) != probs(t, b))
                          return probs(t, a) > probs(t, b);
                        return a < b;
                      });
    auto& row = out[static_cast<size_t>(t)];
    row.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i)
      row.emplace_back(idx[static_cast<size_t>(i)],
                       probs(t, idx[static_cast<size_t>(i)]));
  }
  return out;
}

}  // namespace kws
