#pragma once

// Synthetic tasks and their on-disk formats.
//
//   spirals     CSV `x0,x1,label`: two interleaved 2-D spirals, balanced classes
//   tinyimages  CSV `p0..p63,label`: 8x8 single-channel shapes in 4 classes
//   charlm      text: a period-8 character pattern repeated, letters from 'a'

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slicenet/dataset.hpp"

namespace slicenet {

enum class Task { kSpirals, kTinyImages, kCharLm };

/// Throws UsageError for unknown names.
Task parse_task(const std::string& name);
std::string task_name(Task task);

/// Example shape as the model sees it ({2}, {1, 8, 8}, or {} for text).
Shape task_input_shape(Task task);
std::size_t task_classes(Task task);

constexpr std::size_t kCharPeriod = 8;
constexpr std::size_t kCharVocab = 16;

/// `size` points; class k holds points k, k + 2, ... so size 2n gives n each.
ClassificationDataset make_spirals(std::size_t size, std::uint64_t seed, double noise = 0.05);
/// 0 horizontal bar, 1 vertical bar, 2 hollow square, 3 diagonal, plus pixel noise.
ClassificationDataset make_tinyimages(std::size_t size, std::uint64_t seed, double noise = 0.1);
/// `size` tokens repeating a random pattern of kCharPeriod distinct letters.
std::vector<std::size_t> make_char_corpus(std::size_t size, std::uint64_t seed);

void write_classification_csv(const std::filesystem::path& path, const ClassificationDataset& data);
/// Reads a CSV written by write_classification_csv. The last column is the label.
ClassificationDataset read_classification_csv(const std::filesystem::path& path,
                                              const Shape& example_shape, std::size_t classes);

void write_corpus(const std::filesystem::path& path, const std::vector<std::size_t>& tokens);
/// Letters 'a'.. map to 0..; whitespace is ignored. Throws DataError outside the vocabulary.
std::vector<std::size_t> read_corpus(const std::filesystem::path& path, std::size_t vocab);

/// Generates the task and writes it to `path`.
void generate_task_file(Task task, std::size_t size, std::uint64_t seed,
                        const std::filesystem::path& path);

}  // namespace slicenet
