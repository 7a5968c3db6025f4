#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

inline constexpr std::size_t kNumLabels = 14;

// The 14 thoracic disease labels, fixed order. "No Finding" is not a class;
// it is encoded as the all-zero label vector.
const std::array<std::string, kNumLabels>& label_space();

// Index into label_space(), or -1 for unknown names.
int label_index(const std::string& name);

struct LabelVector {
  std::array<std::uint8_t, kNumLabels> bits{};

  bool any() const;
  std::size_t count() const;
  bool operator==(const LabelVector&) const = default;
};

// 1 when any disease label is set ("Disease Present"), else 0 ("No Finding").
int derive_binary_label(const LabelVector& labels);

enum class Sex { Male, Female, Unknown };
enum class ViewPosition { PA, AP, Unknown };

struct SampleRecord {
  std::string image_id;
  std::string patient_id;
  LabelVector labels;
  std::optional<unsigned> age;
  Sex sex = Sex::Unknown;
  ViewPosition view = ViewPosition::Unknown;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::array<std::size_t, kNumLabels> label_counts{};

  std::size_t total() const { return records.size(); }
  void recount();
};

DatasetManifest make_manifest(std::vector<SampleRecord> records);

// Parses metadata CSV with columns `Image Index, Finding Labels, Patient ID`
// and optional `Patient Age, Patient Gender, View Position`. Accepts both
// wide rows (labels pipe-separated) and long rows (one label per row, merged
// by image id); "No Finding" contributes no label bits. Rejects unknown
// disease names (with the line number), missing required columns and
// conflicting patient ids for one image id.
std::vector<SampleRecord> parse_metadata(const std::string& csv_text);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct SplitResult {
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest test;
};

// Seeded patient-level split: every image of a patient lands in exactly one
// split, split sizes stay within one patient of the target fractions.
SplitResult patient_split(const DatasetManifest& manifest, const SplitSpec& spec);

// Seeded uniform subsample of n records (all records when n >= total).
DatasetManifest subsample(const DatasetManifest& manifest, std::size_t n, std::uint64_t seed);

// Manifest CSV: the wide metadata schema plus a Split column.
void write_manifest_csv(const std::string& path, const DatasetManifest& manifest,
                        const std::string& split_name);
DatasetManifest read_manifest_csv(const std::string& path);

// Fig.-1-style summary: per-label positives, age decades, sex and view
// counts.
std::string demographics_text(const DatasetManifest& manifest);
std::string demographics_csv(const DatasetManifest& manifest);

std::string sex_name(Sex s);
std::string view_name(ViewPosition v);

}  // namespace cxr
