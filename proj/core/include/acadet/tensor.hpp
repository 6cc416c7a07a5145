#pragma once

#include <cstdint>
#include <vector>

#include "acadet/common.hpp"

namespace acadet {

// Batched feature sequence of shape (batch, channels, length), stored
// length-contiguous. Each batch row carries a valid prefix length in
// [0, length]; positions at or past it are padding. Padding positions hold
// zeros in both data and grad, which every graph op preserves.
class SeqTensor {
 public:
  SeqTensor() = default;
  SeqTensor(int batch, int channels, int length);

  static SeqTensor zeros(int batch, int channels, int length);
  static SeqTensor from_data(int batch, int channels, int length,
                             std::vector<double> values);
  // `mask` is (batch, length) row-major with 1 = valid. Each row must be a
  // contiguous prefix of ones; anything else throws.
  static SeqTensor with_mask(int batch, int channels, int length,
                             std::vector<double> values,
                             const std::vector<std::uint8_t>& mask);

  int batch() const { return batch_; }
  int channels() const { return channels_; }
  int length() const { return length_; }
  std::int64_t numel() const {
    return static_cast<std::int64_t>(batch_) * channels_ * length_;
  }
  bool same_shape(const SeqTensor& o) const {
    return batch_ == o.batch_ && channels_ == o.channels_ &&
           length_ == o.length_;
  }

  double at(int b, int c, int t) const { return data_[index(b, c, t)]; }
  double& at(int b, int c, int t) { return data_[index(b, c, t)]; }
  const double* row(int b, int c) const {
    return data_.data() + index(b, c, 0);
  }
  double* row(int b, int c) { return data_.data() + index(b, c, 0); }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  int valid_len(int b) const { return valid_[b]; }
  const std::vector<int>& valid_lens() const { return valid_; }
  void set_valid_len(int b, int n);
  void set_valid_lens(const std::vector<int>& lens);
  bool fully_valid() const;
  bool same_mask(const SeqTensor& o) const {
    return batch_ == o.batch_ && length_ == o.length_ && valid_ == o.valid_;
  }
  // Materialized (batch, length) mask, 1 = valid.
  std::vector<std::uint8_t> mask() const;

  // Zero data (and grad, if present) at padding positions.
  void zero_padding();
  void fill(double v);
  bool all_finite() const;

  bool requires_grad = false;
  std::vector<double> grad;  // empty until ensure_grad()
  void ensure_grad();
  void zero_grad();
  const double* grad_row(int b, int c) const {
    return grad.data() + index(b, c, 0);
  }
  double* grad_row(int b, int c) { return grad.data() + index(b, c, 0); }

 private:
  std::int64_t index(int b, int c, int t) const {
    return (static_cast<std::int64_t>(b) * channels_ + c) * length_ + t;
  }

  int batch_ = 0, channels_ = 0, length_ = 0;
  std::vector<double> data_;
  std::vector<int> valid_;
};

bool bits_equal(const SeqTensor& a, const SeqTensor& b);

}  // namespace acadet
