#include "sybilsim/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include "sybilsim/errors.hpp"

namespace sybilsim {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path, const char* field) {
  if (bytes.size() < offset + 4) {
    throw FormatError(path.string() + ": truncated header, missing field '" + field + "'");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

std::string_view to_string(Provenance p) noexcept {
  return p == Provenance::synthetic ? "synthetic" : "idx-file";
}

std::size_t Dataset::count_of(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::vector<std::size_t> Dataset::indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

std::vector<Example> examples_of(const Dataset& ds) {
  std::vector<Example> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back({ds.row(i), ds.labels[i]});
  return out;
}

std::vector<Example> Shard::training_view(const Dataset& ds) const {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.push_back({ds.row(i), label_override.value_or(ds.labels[i])});
  }
  return out;
}

std::pair<Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic data: num_classes must be >= 2");
  if (spec.per_class < 2) throw ConfigError("synthetic data: per_class must be >= 2");
  if (spec.input_dim == 0) throw ConfigError("synthetic data: input_dim must be positive");
  if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread)) {
    throw ConfigError("synthetic data: spread must be a finite nonnegative number");
  }

  const std::size_t k = spec.num_classes;
  const std::size_t d = spec.input_dim;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> centers(k * d);
  for (std::size_t c = 0; c < k; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        centers[c * d + j] = normal(rng);
        norm += centers[c * d + j] * centers[c * d + j];
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) centers[c * d + j] /= norm;
  }

  const std::size_t total = k * spec.per_class;
  std::vector<double> raw(total * d);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t n = 0; n < spec.per_class; ++n) {
      double* row = raw.data() + (c * spec.per_class + n) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] = centers[c * d + j] + spec.spread * normal(rng);
    }
  }

  for (std::size_t j = 0; j < d; ++j) {
    double lo = raw[j];
    double hi = raw[j];
    for (std::size_t n = 0; n < total; ++n) {
      lo = std::min(lo, raw[n * d + j]);
      hi = std::max(hi, raw[n * d + j]);
    }
    const double range = hi - lo;
    for (std::size_t n = 0; n < total; ++n) {
      double& v = raw[n * d + j];
      v = range > 0.0 ? std::clamp((v - lo) / range, 0.0, 1.0) : 0.0;
    }
  }

  const std::size_t train_per_class =
      std::clamp<std::size_t>(spec.per_class * 4 / 5, 1, spec.per_class - 1);
  Dataset train{d, k, {}, {}, Provenance::synthetic, 0, 0};
  Dataset test{d, k, {}, {}, Provenance::synthetic, 0, 0};
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t n = 0; n < spec.per_class; ++n) {
      Dataset& dst = n < train_per_class ? train : test;
      const double* row = raw.data() + (c * spec.per_class + n) * d;
      dst.features.insert(dst.features.end(), row, row + d);
      dst.labels.push_back(static_cast<int>(c));
    }
  }
  return {std::move(train), std::move(test)};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit_per_class) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  const std::uint32_t img_magic = read_be32(img, 0, images, "magic");
  if (img_magic != kImageMagic) {
    throw FormatError(images.string() + ": bad magic in field 'magic' (expected 0x00000803)");
  }
  const std::uint32_t lab_magic = read_be32(lab, 0, labels, "magic");
  if (lab_magic != kLabelMagic) {
    throw FormatError(labels.string() + ": bad magic in field 'magic' (expected 0x00000801)");
  }
  const std::size_t img_count = read_be32(img, 4, images, "count");
  const std::size_t rows = read_be32(img, 8, images, "rows");
  const std::size_t cols = read_be32(img, 12, images, "cols");
  const std::size_t lab_count = read_be32(lab, 4, labels, "count");
  if (img_count != lab_count) {
    throw FormatError("field 'count' mismatch: " + std::to_string(img_count) + " images vs " +
                      std::to_string(lab_count) + " labels");
  }
  const std::size_t pixels = rows * cols;
  if (pixels == 0) throw FormatError(images.string() + ": field 'rows'/'cols' is zero");
  if (img.size() < 16 + img_count * pixels) {
    throw FormatError(images.string() + ": truncated pixel data for field 'count' = " +
                      std::to_string(img_count));
  }
  if (lab.size() < 8 + lab_count) {
    throw FormatError(labels.string() + ": truncated label data for field 'count' = " +
                      std::to_string(lab_count));
  }

  int max_label = 0;
  for (std::size_t n = 0; n < lab_count; ++n) max_label = std::max<int>(max_label, lab[8 + n]);

  Dataset ds;
  ds.input_dim = pixels;
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  ds.provenance = Provenance::idx_file;
  ds.image_rows = rows;
  ds.image_cols = cols;
  std::vector<std::size_t> kept(ds.num_classes, 0);
  for (std::size_t n = 0; n < img_count; ++n) {
    const int label = lab[8 + n];
    auto& seen = kept[static_cast<std::size_t>(label)];
    if (seen >= limit_per_class) continue;
    ++seen;
    const unsigned char* px = img.data() + 16 + n * pixels;
    for (std::size_t j = 0; j < pixels; ++j) ds.features.push_back(px[j] / 255.0);
    ds.labels.push_back(label);
  }
  if (ds.labels.empty()) throw FormatError(labels.string() + ": no examples retained");
  return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  std::size_t rows = ds.image_rows;
  std::size_t cols = ds.image_cols;
  if (rows * cols != ds.input_dim) {
    rows = 1;
    cols = ds.input_dim;
  }
  std::ofstream img(images, std::ios::binary | std::ios::trunc);
  std::ofstream lab(labels, std::ios::binary | std::ios::trunc);
  if (!img) throw Error("cannot write " + images.string());
  if (!lab) throw Error("cannot write " + labels.string());
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  std::vector<char> buf(ds.input_dim);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto r = ds.row(n);
    for (std::size_t j = 0; j < ds.input_dim; ++j) {
      buf[j] = static_cast<char>(static_cast<unsigned char>(std::lround(r[j] * 255.0)));
    }
    img.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.labels) lab.put(static_cast<char>(label));
  if (!img || !lab) throw Error("write_idx: I/O failure");
}

std::vector<Shard> partition_non_iid(const Dataset& ds, std::size_t num_clients) {
  if (num_clients != ds.num_classes) {
    throw ConfigError("partition_non_iid: num_clients (" + std::to_string(num_clients) +
                      ") must equal num_classes (" + std::to_string(ds.num_classes) + ")");
  }
  std::vector<Shard> shards(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    shards[c].owner = c;
    shards[c].indices = ds.indices_of(static_cast<int>(c));
  }
  return shards;
}

std::vector<Shard> build_sybil_shards(const Dataset& ds, const SybilShardSpec& spec) {
  const auto k = static_cast<int>(ds.num_classes);
  if (spec.source_class < 0 || spec.source_class >= k || spec.target_class < 0 ||
      spec.target_class >= k) {
    throw ConfigError("sybil shards: source/target class outside [0, " + std::to_string(k) + ")");
  }
  if (spec.source_class == spec.target_class) {
    throw ConfigError("sybil shards: source_class must differ from target_class");
  }
  if (spec.num_sybils == 0) throw ConfigError("sybil shards: num_sybils must be >= 1");

  std::vector<std::size_t> source = ds.indices_of(spec.source_class);
  if (source.size() < spec.num_sybils) {
    throw ConfigError("sybil shards: source class " + std::to_string(spec.source_class) +
                      " has " + std::to_string(source.size()) + " training examples, fewer than " +
                      std::to_string(spec.num_sybils) + " sybils");
  }

  std::vector<Shard> shards(spec.num_sybils);
  if (spec.duplicate_poison_data) {
    for (std::size_t s = 0; s < spec.num_sybils; ++s) {
      shards[s] = Shard{spec.first_owner + s, source, spec.target_class};
    }
    return shards;
  }

  std::mt19937_64 rng(spec.seed);
  std::shuffle(source.begin(), source.end(), rng);
  const std::size_t base = source.size() / spec.num_sybils;
  const std::size_t extra = source.size() % spec.num_sybils;
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < spec.num_sybils; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    std::vector<std::size_t> part(source.begin() + static_cast<std::ptrdiff_t>(cursor),
                                  source.begin() + static_cast<std::ptrdiff_t>(cursor + len));
    cursor += len;
    shards[s] = Shard{spec.first_owner + s, std::move(part), spec.target_class};
  }
  return shards;
}

}  // namespace sybilsim
