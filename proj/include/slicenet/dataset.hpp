#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "slicenet/model.hpp"
#include "slicenet/tensor.hpp"

namespace slicenet {

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual Batch batch(std::span<const std::size_t> indices) const = 0;
  /// True when logits rows are tokens and perplexity is the headline metric.
  virtual bool is_sequence() const noexcept = 0;
  /// Number of prediction targets per example.
  virtual std::size_t targets_per_example() const noexcept { return 1; }
};

/// Fixed-size examples with one class label each.
class ClassificationDataset : public Dataset {
 public:
  /// `features` has a leading example axis.
  ClassificationDataset(Tensor features, std::vector<std::size_t> labels, std::size_t classes);

  std::size_t size() const override { return labels_.size(); }
  Batch batch(std::span<const std::size_t> indices) const override;
  bool is_sequence() const noexcept override { return false; }

  const Tensor& features() const noexcept { return features_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  std::size_t classes() const noexcept { return classes_; }
  Shape example_shape() const;

 private:
  Tensor features_;
  std::vector<std::size_t> labels_;
  std::size_t classes_;
};

/// Next-token prediction over non-overlapping windows of a token corpus.
/// Example i covers tokens [i*T, i*T + T] (inputs are the first T, targets the last T).
class SequenceDataset : public Dataset {
 public:
  SequenceDataset(std::vector<std::size_t> corpus, std::size_t seq_len, std::size_t vocab);

  std::size_t size() const override { return windows_; }
  Batch batch(std::span<const std::size_t> indices) const override;
  bool is_sequence() const noexcept override { return true; }
  std::size_t targets_per_example() const noexcept override { return seq_len_; }

  std::size_t seq_len() const noexcept { return seq_len_; }
  std::size_t vocab() const noexcept { return vocab_; }
  const std::vector<std::size_t>& corpus() const noexcept { return corpus_; }

 private:
  std::vector<std::size_t> corpus_;
  std::size_t seq_len_;
  std::size_t vocab_;
  std::size_t windows_;
};

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng);

/// Consecutive index ranges of at most `batch_size` over `order`.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size);

}  // namespace slicenet
