#include "slicenet/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "slicenet/error.hpp"

namespace slicenet {

ClassificationDataset::ClassificationDataset(Tensor features, std::vector<std::size_t> labels,
                                             std::size_t classes)
    : features_(std::move(features)), labels_(std::move(labels)), classes_(classes) {
  if (labels_.empty()) throw DataError("classification dataset is empty");
  if (features_.rank() < 2 || features_.dim(0) != labels_.size()) {
    throw DataError("features " + to_string(features_.shape()) + " do not match " +
                    std::to_string(labels_.size()) + " labels");
  }
  for (std::size_t y : labels_) {
    if (y >= classes_) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes_) + ")");
    }
  }
}

Shape ClassificationDataset::example_shape() const {
  return Shape(features_.shape().begin() + 1, features_.shape().end());
}

Batch ClassificationDataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DataError("empty batch");
  Shape shape = features_.shape();
  const std::size_t row = features_.size() / shape[0];
  shape[0] = indices.size();
  Tensor features(shape);
  Batch b;
  b.batch_size = indices.size();
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= labels_.size()) throw DataError("example index out of range");
    std::copy_n(features_.data().begin() + static_cast<std::ptrdiff_t>(src * row), row,
                features.data().begin() + static_cast<std::ptrdiff_t>(i * row));
    b.labels.push_back(labels_[src]);
  }
  b.features = std::move(features);
  return b;
}

SequenceDataset::SequenceDataset(std::vector<std::size_t> corpus, std::size_t seq_len,
                                 std::size_t vocab)
    : corpus_(std::move(corpus)), seq_len_(seq_len), vocab_(vocab) {
  if (seq_len_ == 0) throw ConfigError("sequence length must be positive");
  if (corpus_.size() < seq_len_ + 1) throw DataError("corpus shorter than one training window");
  for (std::size_t t : corpus_) {
    if (t >= vocab_) throw DataError("token " + std::to_string(t) + " outside vocabulary");
  }
  windows_ = (corpus_.size() - 1) / seq_len_;
}

Batch SequenceDataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DataError("empty batch");
  Batch b;
  b.batch_size = indices.size();
  b.seq_len = seq_len_;
  b.tokens.resize(indices.size() * seq_len_);
  b.labels.resize(indices.size() * seq_len_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= windows_) throw DataError("window index out of range");
    const std::size_t start = indices[i] * seq_len_;
    for (std::size_t t = 0; t < seq_len_; ++t) {
      b.tokens[i * seq_len_ + t] = corpus_[start + t];
      b.labels[t * indices.size() + i] = corpus_[start + t + 1];
    }
  }
  return b;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace slicenet
