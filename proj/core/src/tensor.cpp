#include "acadet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace acadet {

SeqTensor::SeqTensor(int batch, int channels, int length)
    : batch_(batch), channels_(channels), length_(length) {
  ACADET_CHECK(batch >= 0 && channels >= 0 && length >= 0,
               "SeqTensor: negative dimension");
  data_.assign(static_cast<std::size_t>(numel()), 0.0);
  valid_.assign(static_cast<std::size_t>(batch), length);
}

SeqTensor SeqTensor::zeros(int batch, int channels, int length) {
  return SeqTensor(batch, channels, length);
}

SeqTensor SeqTensor::from_data(int batch, int channels, int length,
                               std::vector<double> values) {
  SeqTensor t(batch, channels, length);
  ACADET_CHECK(static_cast<std::int64_t>(values.size()) == t.numel(),
               "SeqTensor::from_data: value count does not match shape");
  t.data_ = std::move(values);
  return t;
}

SeqTensor SeqTensor::with_mask(int batch, int channels, int length,
                               std::vector<double> values,
                               const std::vector<std::uint8_t>& mask) {
  SeqTensor t = from_data(batch, channels, length, std::move(values));
  ACADET_CHECK(static_cast<std::int64_t>(mask.size()) ==
                   static_cast<std::int64_t>(batch) * length,
               "SeqTensor::with_mask: mask size does not match (batch, length)");
  for (int b = 0; b < batch; ++b) {
    const std::uint8_t* rowm = mask.data() + static_cast<std::size_t>(b) * length;
    int n = 0;
    while (n < length && rowm[n]) ++n;
    for (int t2 = n; t2 < length; ++t2) {
      ACADET_CHECK(!rowm[t2],
                   "SeqTensor::with_mask: mask row is not a contiguous prefix");
    }
    t.valid_[b] = n;
  }
  t.zero_padding();
  return t;
}

void SeqTensor::set_valid_len(int b, int n) {
  ACADET_CHECK(b >= 0 && b < batch_, "SeqTensor: batch index out of range");
  ACADET_CHECK(n >= 0 && n <= length_, "SeqTensor: valid length out of range");
  valid_[b] = n;
}

void SeqTensor::set_valid_lens(const std::vector<int>& lens) {
  ACADET_CHECK(static_cast<int>(lens.size()) == batch_,
               "SeqTensor: valid length count does not match batch");
  for (int n : lens)
    ACADET_CHECK(n >= 0 && n <= length_, "SeqTensor: valid length out of range");
  valid_ = lens;
}

bool SeqTensor::fully_valid() const {
  return std::all_of(valid_.begin(), valid_.end(),
                     [this](int n) { return n == length_; });
}

std::vector<std::uint8_t> SeqTensor::mask() const {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(batch_) * length_, 0);
  for (int b = 0; b < batch_; ++b)
    std::fill_n(m.begin() + static_cast<std::size_t>(b) * length_, valid_[b],
                std::uint8_t{1});
  return m;
}

void SeqTensor::zero_padding() {
  for (int b = 0; b < batch_; ++b) {
    const int n = valid_[b];
    if (n == length_) continue;
    for (int c = 0; c < channels_; ++c) {
      std::fill(row(b, c) + n, row(b, c) + length_, 0.0);
      if (!grad.empty()) std::fill(grad_row(b, c) + n, grad_row(b, c) + length_, 0.0);
    }
  }
}

void SeqTensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool SeqTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void SeqTensor::ensure_grad() {
  if (grad.empty()) grad.assign(data_.size(), 0.0);
}

void SeqTensor::zero_grad() {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

bool bits_equal(const SeqTensor& a, const SeqTensor& b) {
  if (!a.same_shape(b) || !a.same_mask(b)) return false;
  if (a.numel() == 0) return true;
  return std::memcmp(a.data().data(), b.data().data(),
                     a.data().size() * sizeof(double)) == 0;
}

}  // namespace acadet
