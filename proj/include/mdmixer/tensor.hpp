// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mdmixer {

using Index = Eigen::Index;

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during training or gradient evaluation.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A batch of per-channel series. Row `b * channels + c` holds instance b,
/// channel c; columns run along time.
template <class T>
struct Panel {
  Index batch = 0;
  Index channels = 0;
  Matrix<T> values;

  Panel() = default;
  Panel(Index batch_size, Index channel_count, Index length)
      : batch(batch_size),
        channels(channel_count),
        values(Matrix<T>::Zero(batch_size * channel_count, length)) {}
  Panel(Index batch_size, Index channel_count, Matrix<T> rows)
      : batch(batch_size), channels(channel_count), values(std::move(rows)) {
    if (values.rows() != batch * channels) {
      throw ShapeError("panel rows do not match batch * channels");
    }
  }

  Index rows() const { return values.rows(); }
  Index length() const { return values.cols(); }

  T& operator()(Index b, Index c, Index t) { return values(b * channels + c, t); }
  T operator()(Index b, Index c, Index t) const { return values(b * channels + c, t); }

  template <class U>
  Panel<U> cast() const {
    return Panel<U>(batch, channels, values.template cast<U>().eval());
  }
};

/// Fusion weights laid out as batch x (heads * channels); entry h * channels + c.
template <class T>
struct GateWeights {
  Index heads = 0;
  Index channels = 0;
  Matrix<T> values;

  Index batch() const { return values.rows(); }
  T operator()(Index b, Index h, Index c) const { return values(b, h * channels + c); }
  T& operator()(Index b, Index h, Index c) { return values(b, h * channels + c); }
};

inline void require_same_shape(const auto& a, const auto& b, const std::string& what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(what + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace mdmixer
