#include "lsf/descriptor_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lsf/binary_io.hpp"
#include "lsf/error.hpp"

namespace lsf {
namespace {

constexpr io::Magic kDescriptorMagic{'L', 'S', 'F', 'D'};
constexpr std::uint16_t kDescriptorVersion = 1;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void check_widths(const BlockWidths& w, const std::string& source) {
  for (auto b : w.as_array()) {
    if (b == 0) throw DataError(source + ": descriptor block widths must be positive");
  }
}

// True for LSFD files. Files whose first bytes are not text but lack the
// magic are rejected here rather than handed to the CSV parser.
bool has_binary_magic(const std::filesystem::path& path) {
  std::ifstream in = io::open_input(path);
  std::array<char, 64> head{};
  in.read(head.data(), head.size());
  const auto n = static_cast<std::size_t>(in.gcount());
  if (n >= kDescriptorMagic.size() && std::equal(kDescriptorMagic.begin(), kDescriptorMagic.end(), head.begin())) {
    return true;
  }
  const bool binary = std::any_of(head.begin(), head.begin() + static_cast<std::ptrdiff_t>(n), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x20 && c != '\n' && c != '\r' && c != '\t';
  });
  if (binary) throw DataError(path.string() + ": bad magic, expected \"" + io::magic_string(kDescriptorMagic) + "\"");
  return false;
}

struct BinaryHeader {
  std::uint64_t num_points;
  std::uint32_t width;
  BlockWidths widths;
};

BinaryHeader read_header(io::BinaryReader& r, const BlockWidths& expected) {
  r.expect_magic(kDescriptorMagic);
  const auto version = r.u16();
  if (version != kDescriptorVersion) {
    throw DataError(r.source() + ": unsupported descriptor format version " + std::to_string(version));
  }
  BinaryHeader h{};
  h.num_points = r.u64();
  h.width = r.u32();
  h.widths = {r.u32(), r.u32(), r.u32(), r.u32()};
  check_widths(h.widths, r.source());
  if (h.widths.total() != h.width) {
    throw DataError(r.source() + ": block widths sum to " + std::to_string(h.widths.total()) +
                    " but row width is " + std::to_string(h.width));
  }
  if (h.widths != expected) {
    throw DataError(r.source() + ": block widths do not match the expected layout");
  }
  if (h.num_points == 0) throw DataError(r.source() + ": descriptor file has no rows");
  return h;
}

DescriptorMatrix load_binary(const std::filesystem::path& path, const BlockWidths& expected) {
  std::ifstream in = io::open_input(path);
  io::BinaryReader r(in, path.string());
  const BinaryHeader h = read_header(r, expected);
  DescriptorRows rows(static_cast<Eigen::Index>(h.num_points), static_cast<Eigen::Index>(h.width));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    try {
      r.f32s(std::span<float>(rows.row(i).data(), h.width));
    } catch (const DataError&) {
      throw DataError(path.string() + ": truncated payload at row " + std::to_string(i));
    }
  }
  r.expect_end();
  return DescriptorMatrix(path.stem().string(), std::move(rows), h.widths);
}

DescriptorMatrix load_csv(const std::filesystem::path& path, const BlockWidths& expected) {
  std::ifstream in = io::open_input(path);
  const std::uint32_t width = expected.total();
  std::vector<float> values;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != width) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has width " +
                      std::to_string(fields.size()) + ", expected " + std::to_string(width));
    }
    for (const auto& f : fields) {
      float v = 0.0f;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw DataError(path.string() + ": row " + std::to_string(row) + " has unparsable value '" + f +
                        "'");
      }
      if (!std::isfinite(v)) {
        throw DataError(path.string() + ": non-finite value at row " + std::to_string(row));
      }
      values.push_back(v);
    }
    ++row;
  }
  if (row == 0) throw DataError(path.string() + ": descriptor file has no rows");
  DescriptorRows rows = Eigen::Map<DescriptorRows>(values.data(), static_cast<Eigen::Index>(row), width);
  return DescriptorMatrix(path.stem().string(), std::move(rows), expected);
}

// Draws `n` indices from [0, population): distinct when n <= population.
std::vector<std::uint64_t> draw_indices(std::uint64_t population, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> out;
  out.reserve(n);
  if (n <= population) {
    // Partial Fisher-Yates over a sparse view of the identity permutation.
    std::unordered_map<std::uint64_t, std::uint64_t> swapped;
    auto value_at = [&](std::uint64_t i) {
      auto it = swapped.find(i);
      return it == swapped.end() ? i : it->second;
    };
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::uint64_t> pick(i, population - 1);
      const std::uint64_t j = pick(rng);
      const std::uint64_t vi = value_at(i);
      const std::uint64_t vj = value_at(j);
      swapped[j] = vi;
      out.push_back(vj);
    }
  } else {
    std::uniform_int_distribution<std::uint64_t> pick(0, population - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pick(rng));
  }
  return out;
}

struct RowRef {
  std::size_t video;
  Eigen::Index row;
};

std::vector<RowRef> locate(std::span<const std::uint64_t> counts, std::span<const std::uint64_t> picks) {
  std::vector<std::uint64_t> ends(counts.size());
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) ends[i] = acc += counts[i];
  std::vector<RowRef> out;
  out.reserve(picks.size());
  for (auto g : picks) {
    const auto it = std::upper_bound(ends.begin(), ends.end(), g);
    const auto v = static_cast<std::size_t>(it - ends.begin());
    const std::uint64_t start = v == 0 ? 0 : ends[v - 1];
    out.push_back({v, static_cast<Eigen::Index>(g - start)});
  }
  return out;
}

}  // namespace

DescriptorMatrix::DescriptorMatrix(std::string video_id, DescriptorRows rows, BlockWidths widths)
    : video_id_(std::move(video_id)), rows_(std::move(rows)), widths_(widths) {
  check_widths(widths_, video_id_);
  if (rows_.rows() < 1) throw DataError(video_id_ + ": descriptor matrix has no rows");
  if (rows_.cols() != static_cast<Eigen::Index>(widths_.total())) {
    throw DataError(video_id_ + ": row width " + std::to_string(rows_.cols()) +
                    " does not match block widths total " + std::to_string(widths_.total()));
  }
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    if (!rows_.row(i).allFinite()) {
      throw DataError(video_id_ + ": non-finite value at row " + std::to_string(i));
    }
  }
}

DescriptorMatrix load_descriptors(const std::filesystem::path& path, const BlockWidths& expected) {
  check_widths(expected, path.string());
  if (has_binary_magic(path)) return load_binary(path, expected);
  return load_csv(path, expected);
}

void save_descriptors(const std::filesystem::path& path, const DescriptorMatrix& m) {
  std::ofstream out = io::open_output(path);
  io::BinaryWriter w(out);
  w.magic(kDescriptorMagic);
  w.u16(kDescriptorVersion);
  w.u64(static_cast<std::uint64_t>(m.num_points()));
  w.u32(static_cast<std::uint32_t>(m.width()));
  for (auto b : m.block_widths().as_array()) w.u32(b);
  w.f32s(std::span<const float>(m.rows().data(), static_cast<std::size_t>(m.rows().size())));
  if (!out) throw DataError(path.string() + ": write failed");
}

std::uint64_t count_descriptor_rows(const std::filesystem::path& path, const BlockWidths& expected) {
  if (!has_binary_magic(path)) {
    return static_cast<std::uint64_t>(load_csv(path, expected).num_points());
  }
  std::ifstream in = io::open_input(path);
  io::BinaryReader r(in, path.string());
  return read_header(r, expected).num_points;
}

std::size_t count_unnormalized_rows(const DescriptorMatrix& m, double tolerance) {
  std::size_t flagged = 0;
  const auto widths = m.block_widths().as_array();
  for (Eigen::Index i = 0; i < m.num_points(); ++i) {
    Eigen::Index offset = 0;
    bool bad = false;
    for (auto w : widths) {
      const double norm = m.rows().row(i).segment(offset, w).cast<double>().norm();
      bad = bad || std::abs(norm - 1.0) > tolerance;
      offset += w;
    }
    flagged += bad ? 1 : 0;
  }
  return flagged;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open manifest");
  const auto base = path.parent_path();
  DatasetManifest manifest;
  bool have_classes = false;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_commas(line);
    if (fields[0] == "#classes") {
      manifest.class_names.assign(fields.begin() + 1, fields.end());
      have_classes = true;
      continue;
    }
    if (fields[0] == "#split") {
      if (fields.size() != 2 || (fields[1] != "train" && fields[1] != "test")) fail("bad #split line");
      manifest.split = fields[1] == "train" ? Split::train : Split::test;
      continue;
    }
    if (fields[0].starts_with('#')) continue;
    if (!have_classes) fail("entry before #classes header");
    if (fields.size() != 4) fail("expected 4 fields, got " + std::to_string(fields.size()));
    ManifestEntry e;
    e.video_id = fields[0];
    if (e.video_id.empty()) fail("empty video id");
    if (!seen.insert(e.video_id).second) fail("duplicate video id '" + e.video_id + "'");
    e.descriptor_path = base / fields[1];
    if (!std::filesystem::exists(e.descriptor_path)) {
      fail("descriptor file not found: " + e.descriptor_path.string());
    }
    if (fields[2] != "-") {
      int label = -1;
      const auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), label);
      if (ec != std::errc() || ptr != fields[2].data() + fields[2].size() || label < 0 ||
          label >= manifest.num_classes()) {
        fail("background label '" + fields[2] + "' out of range");
      }
      e.background_label = label;
    }
    if (fields[3] != "-") {
      if (fields[3] != "0" && fields[3] != "1") fail("foreground flag must be 0, 1 or -");
      e.foreground = fields[3] == "1";
    }
    manifest.entries.push_back(std::move(e));
  }
  if (!have_classes) throw DataError(path.string() + ": missing #classes header");
  return manifest;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "#classes";
  for (const auto& n : manifest.class_names) out << ',' << n;
  out << "\n#split," << (manifest.split == Split::train ? "train" : "test") << '\n';
  const auto base = path.parent_path();
  for (const auto& e : manifest.entries) {
    auto rel = e.descriptor_path.lexically_relative(base);
    if (rel.empty()) rel = e.descriptor_path;
    out << e.video_id << ',' << rel.generic_string() << ','
        << (e.background_label ? std::to_string(*e.background_label) : "-") << ','
        << (e.foreground ? (*e.foreground ? "1" : "0") : "-") << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

LabeledDescriptorBatch sample_labeled_rows(std::span<const DescriptorMatrix> videos,
                                           std::span<const int> labels, std::size_t sample_size,
                                           std::uint64_t seed) {
  if (videos.empty()) throw DataError("cannot sample from an empty video set");
  if (labels.size() != videos.size()) throw UsageError("one label per video required");
  if (sample_size == 0) throw UsageError("sample size must be positive");
  std::vector<std::uint64_t> counts;
  for (const auto& v : videos) counts.push_back(static_cast<std::uint64_t>(v.num_points()));
  std::uint64_t population = 0;
  for (auto c : counts) population += c;
  const auto refs = locate(counts, draw_indices(population, sample_size, seed));

  LabeledDescriptorBatch batch;
  batch.rows.resize(static_cast<Eigen::Index>(sample_size), videos.front().width());
  batch.labels.resize(sample_size);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& v = videos[refs[i].video];
    if (v.width() != batch.rows.cols()) throw DataError(v.video_id() + ": row width differs across videos");
    batch.rows.row(static_cast<Eigen::Index>(i)) = v.rows().row(refs[i].row).cast<double>();
    batch.labels[i] = labels[refs[i].video];
  }
  return batch;
}

LabeledDescriptorBatch sample_labeled_rows(const DatasetManifest& manifest, std::size_t sample_size,
                                           std::uint64_t seed, const BlockWidths& widths) {
  if (manifest.entries.empty()) throw DataError("cannot sample from an empty manifest");
  if (sample_size == 0) throw UsageError("sample size must be positive");
  std::vector<std::uint64_t> counts;
  for (const auto& e : manifest.entries) {
    if (!e.background_label) throw DataError("manifest entry '" + e.video_id + "' has no background label");
    counts.push_back(count_descriptor_rows(e.descriptor_path, widths));
  }
  std::uint64_t population = 0;
  for (auto c : counts) population += c;
  if (population == 0) throw DataError("manifest videos contain no descriptor rows");
  const auto refs = locate(counts, draw_indices(population, sample_size, seed));

  // Group sample slots by video so each file is read once.
  std::vector<std::vector<std::size_t>> slots(manifest.entries.size());
  for (std::size_t i = 0; i < refs.size(); ++i) slots[refs[i].video].push_back(i);

  LabeledDescriptorBatch batch;
  batch.rows.resize(static_cast<Eigen::Index>(sample_size), widths.total());
  batch.labels.resize(sample_size);
  for (std::size_t v = 0; v < slots.size(); ++v) {
    if (slots[v].empty()) continue;
    const auto& entry = manifest.entries[v];
    const DescriptorMatrix m = load_descriptors(entry.descriptor_path, widths);
    for (auto slot : slots[v]) {
      batch.rows.row(static_cast<Eigen::Index>(slot)) = m.rows().row(refs[slot].row).cast<double>();
      batch.labels[slot] = *entry.background_label;
    }
  }
  return batch;
}

}  // namespace lsf
