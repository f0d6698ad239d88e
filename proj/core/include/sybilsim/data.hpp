#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sybilsim/model.hpp"

namespace sybilsim {

enum class Provenance { synthetic, idx_file };

std::string_view to_string(Provenance p) noexcept;

// Row-major feature matrix with integer labels. Features lie in [0, 1].
struct Dataset {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;
  Provenance provenance = Provenance::synthetic;
  // Image geometry for IDX-backed data; 0 otherwise.
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * input_dim, input_dim};
  }
  std::size_t count_of(int label) const;
  std::vector<std::size_t> indices_of(int label) const;
};

// The whole dataset with its true labels.
std::vector<Example> examples_of(const Dataset& ds);

// A client's slice of a dataset. A shard with a label override reports that
// label for every example it exposes to training.
struct Shard {
  std::size_t owner = 0;
  std::vector<std::size_t> indices;
  std::optional<int> label_override;

  std::vector<Example> training_view(const Dataset& ds) const;
};

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t input_dim = 32;
  std::size_t per_class = 100;
  double spread = 0.2;
  std::uint64_t seed = 0;
};

// Gaussian clusters around seeded unit-norm centers, rescaled per feature to
// [0, 1], split 80/20 into (train, test) within each class.
std::pair<Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec);

// Reads an IDX image/label pair (magic 0x00000803 / 0x00000801), keeping the
// first `limit_per_class` examples of each class in file order.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit_per_class);

// Writes a dataset back out as IDX; pixels are round(255 * feature).
void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::filesystem::path& labels);

// Honest one-class-per-client partition: shard i holds every training example
// of class i. Requires num_clients == num_classes.
std::vector<Shard> partition_non_iid(const Dataset& ds, std::size_t num_clients);

struct SybilShardSpec {
  int source_class = 0;
  int target_class = 0;
  std::size_t num_sybils = 1;
  std::uint64_t seed = 0;
  // Give every sybil the full source set instead of a disjoint slice.
  bool duplicate_poison_data = false;
  std::size_t first_owner = 0;
};

// Label-flipped sybil shards built from the source class's training examples.
std::vector<Shard> build_sybil_shards(const Dataset& ds, const SybilShardSpec& spec);

}  // namespace sybilsim
