#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace kws {

using Index = Eigen::Index;

// Dense matrix of frames-by-dimensions: one feature vector or posterior row
// per matrix row.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// Phoneme unit index into the model inventory. 0 is always the blank unit.
using Unit = int32_t;
constexpr Unit kBlank = 0;

// Label sequence of a keyword or transcript, blank excluded.
using LabelSeq = std::vector<Unit>;

}  // namespace kws
