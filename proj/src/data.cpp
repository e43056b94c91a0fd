#include "slicenet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "slicenet/error.hpp"

namespace slicenet {

namespace {

constexpr std::size_t kImage = 8;

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void draw_shape(std::size_t cls, std::mt19937_64& rng, double* px) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto set = [&](std::size_t r, std::size_t c) { px[r * kImage + c] = 1.0; };
  switch (cls) {
    case 0: {  // horizontal bar
      const std::size_t len = pick(4, 6), row = pick(0, kImage - 1), col = pick(0, kImage - len);
      for (std::size_t j = 0; j < len; ++j) set(row, col + j);
      break;
    }
    case 1: {  // vertical bar
      const std::size_t len = pick(4, 6), col = pick(0, kImage - 1), row = pick(0, kImage - len);
      for (std::size_t j = 0; j < len; ++j) set(row + j, col);
      break;
    }
    case 2: {  // hollow square
      const std::size_t side = pick(3, 5), row = pick(0, kImage - side), col = pick(0, kImage - side);
      for (std::size_t j = 0; j < side; ++j) {
        set(row, col + j);
        set(row + side - 1, col + j);
        set(row + j, col);
        set(row + j, col + side - 1);
      }
      break;
    }
    default: {  // diagonal, either direction
      const std::size_t len = pick(4, 6), row = pick(0, kImage - len), col = pick(0, kImage - len);
      const bool anti = pick(0, 1) == 1;
      for (std::size_t j = 0; j < len; ++j) set(row + j, anti ? col + len - 1 - j : col + j);
      break;
    }
  }
}

}  // namespace

Task parse_task(const std::string& name) {
  if (name == "spirals") return Task::kSpirals;
  if (name == "tinyimages") return Task::kTinyImages;
  if (name == "charlm") return Task::kCharLm;
  throw UsageError("unknown task '" + name + "' (expected spirals, tinyimages or charlm)");
}

std::string task_name(Task task) {
  switch (task) {
    case Task::kSpirals: return "spirals";
    case Task::kTinyImages: return "tinyimages";
    case Task::kCharLm: return "charlm";
  }
  return "unknown";
}

Shape task_input_shape(Task task) {
  switch (task) {
    case Task::kSpirals: return {2};
    case Task::kTinyImages: return {1, kImage, kImage};
    case Task::kCharLm: return {};
  }
  return {};
}

std::size_t task_classes(Task task) {
  switch (task) {
    case Task::kSpirals: return 2;
    case Task::kTinyImages: return 4;
    case Task::kCharLm: return kCharVocab;
  }
  return 0;
}

ClassificationDataset make_spirals(std::size_t size, std::uint64_t seed, double noise) {
  if (size < 2) throw ConfigError("spirals needs at least 2 points");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  const std::size_t per_class = (size + 1) / 2;
  Tensor features({size, 2});
  std::vector<std::size_t> labels(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t cls = i % 2;
    const double t = (static_cast<double>(i / 2) + 0.5) / static_cast<double>(per_class);
    const double radius = 0.1 + 0.9 * t;
    const double angle = 2.0 * std::numbers::pi * t + static_cast<double>(cls) * std::numbers::pi;
    features[2 * i] = radius * std::cos(angle) + jitter(rng);
    features[2 * i + 1] = radius * std::sin(angle) + jitter(rng);
    labels[i] = cls;
  }
  return ClassificationDataset(std::move(features), std::move(labels), 2);
}

ClassificationDataset make_tinyimages(std::size_t size, std::uint64_t seed, double noise) {
  if (size == 0) throw ConfigError("tinyimages needs at least one image");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  Tensor features({size, 1, kImage, kImage});
  std::vector<std::size_t> labels(size);
  for (std::size_t i = 0; i < size; ++i) {
    labels[i] = i % 4;
    double* px = features.data().data() + i * kImage * kImage;
    draw_shape(labels[i], rng, px);
    for (std::size_t j = 0; j < kImage * kImage; ++j) px[j] += jitter(rng);
  }
  return ClassificationDataset(std::move(features), std::move(labels), 4);
}

std::vector<std::size_t> make_char_corpus(std::size_t size, std::uint64_t seed) {
  if (size == 0) throw ConfigError("corpus size must be positive");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> letters(kCharVocab);
  for (std::size_t i = 0; i < kCharVocab; ++i) letters[i] = i;
  for (std::size_t i = kCharVocab; i > 1; --i) {
    std::swap(letters[i - 1], letters[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  }
  std::vector<std::size_t> corpus(size);
  for (std::size_t i = 0; i < size; ++i) corpus[i] = letters[i % kCharPeriod];
  return corpus;
}

void write_classification_csv(const std::filesystem::path& path, const ClassificationDataset& data) {
  std::ofstream out = open_out(path);
  const std::size_t width = data.features().size() / data.size();
  for (std::size_t j = 0; j < width; ++j) out << (width <= 2 ? "x" : "p") << j << ',';
  out << "label\n";
  out << std::setprecision(17);
  const auto values = data.features().data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out << values[i * width + j] << ',';
    out << data.labels()[i] << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ClassificationDataset read_classification_csv(const std::filesystem::path& path,
                                              const Shape& example_shape, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  const std::size_t width = element_count(example_shape);
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != width + 1) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(width + 1) + " columns, got " + std::to_string(cells.size()));
    }
    try {
      for (std::size_t j = 0; j < width; ++j) values.push_back(std::stod(cells[j]));
      const long long label = std::stoll(cells[width]);
      if (label < 0) throw std::invalid_argument("negative label");
      labels.push_back(static_cast<std::size_t>(label));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  if (labels.empty()) throw DataError(path.string() + " holds no examples");
  Shape shape{labels.size()};
  shape.insert(shape.end(), example_shape.begin(), example_shape.end());
  return ClassificationDataset(Tensor(shape, std::move(values)), std::move(labels), classes);
}

void write_corpus(const std::filesystem::path& path, const std::vector<std::size_t>& tokens) {
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= 26) throw DataError("token " + std::to_string(tokens[i]) + " has no letter");
    out << static_cast<char>('a' + tokens[i]);
    if ((i + 1) % 64 == 0) out << '\n';
  }
  out << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::size_t> read_corpus(const std::filesystem::path& path, std::size_t vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::size_t> tokens;
  char ch = 0;
  while (in.get(ch)) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    if (ch < 'a' || static_cast<std::size_t>(ch - 'a') >= vocab) {
      throw DataError(path.string() + ": character '" + std::string(1, ch) +
                      "' outside the vocabulary of " + std::to_string(vocab));
    }
    tokens.push_back(static_cast<std::size_t>(ch - 'a'));
  }
  if (tokens.empty()) throw DataError(path.string() + " is empty");
  return tokens;
}

void generate_task_file(Task task, std::size_t size, std::uint64_t seed,
                        const std::filesystem::path& path) {
  switch (task) {
    case Task::kSpirals: write_classification_csv(path, make_spirals(size, seed)); break;
    case Task::kTinyImages: write_classification_csv(path, make_tinyimages(size, seed)); break;
    case Task::kCharLm: write_corpus(path, make_char_corpus(size, seed)); break;
  }
}

}  // namespace slicenet
