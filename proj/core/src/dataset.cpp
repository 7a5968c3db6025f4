#include "cxr/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cxr/csv.hpp"
#include "cxr/error.hpp"
#include "cxr/rng.hpp"

namespace cxr {

const std::array<std::string, kNumLabels>& label_space() {
  static const std::array<std::string, kNumLabels> names = {
      "Atelectasis", "Cardiomegaly", "Consolidation", "Edema",
      "Effusion",    "Emphysema",    "Fibrosis",      "Hernia",
      "Infiltration", "Mass",        "Nodule",        "Pleural_Thickening",
      "Pneumonia",   "Pneumothorax"};
  return names;
}

int label_index(const std::string& name) {
  const auto& names = label_space();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

bool LabelVector::any() const {
  for (auto b : bits) {
    if (b) return true;
  }
  return false;
}

std::size_t LabelVector::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b;
  return n;
}

int derive_binary_label(const LabelVector& labels) { return labels.any() ? 1 : 0; }

void DatasetManifest::recount() {
  label_counts.fill(0);
  for (const SampleRecord& r : records) {
    for (std::size_t i = 0; i < kNumLabels; ++i) label_counts[i] += r.labels.bits[i];
  }
}

DatasetManifest make_manifest(std::vector<SampleRecord> records) {
  DatasetManifest m;
  m.records = std::move(records);
  m.recount();
  return m;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<unsigned> parse_age(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  // Tolerates the NIH "058Y" style suffix.
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0) return std::nullopt;
  if (i < s.size() && s.substr(i) != "Y") return std::nullopt;
  return static_cast<unsigned>(std::stoul(s.substr(0, i)));
}

Sex parse_sex(const std::string& raw) {
  std::string s = trim(raw);
  if (s == "M" || s == "m") return Sex::Male;
  if (s == "F" || s == "f") return Sex::Female;
  return Sex::Unknown;
}

ViewPosition parse_view(const std::string& raw) {
  std::string s = trim(raw);
  if (s == "PA") return ViewPosition::PA;
  if (s == "AP") return ViewPosition::AP;
  return ViewPosition::Unknown;
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

std::string sex_name(Sex s) {
  switch (s) {
    case Sex::Male: return "M";
    case Sex::Female: return "F";
    default: return "unknown";
  }
}

std::string view_name(ViewPosition v) {
  switch (v) {
    case ViewPosition::PA: return "PA";
    case ViewPosition::AP: return "AP";
    default: return "unknown";
  }
}

std::vector<SampleRecord> parse_metadata(const std::string& csv_text) {
  const auto rows = parse_csv(csv_text);
  if (rows.empty()) throw ParseError("metadata: empty file");

  const auto& header = rows[0];
  const int col_image = find_column(header, "Image Index");
  const int col_labels = find_column(header, "Finding Labels");
  const int col_patient = find_column(header, "Patient ID");
  if (col_image < 0) throw ParseError("metadata: missing required column 'Image Index'");
  if (col_labels < 0) throw ParseError("metadata: missing required column 'Finding Labels'");
  if (col_patient < 0) throw ParseError("metadata: missing required column 'Patient ID'");
  const int col_age = find_column(header, "Patient Age");
  const int col_sex = find_column(header, "Patient Gender");
  const int col_view = find_column(header, "View Position");

  // Merge rows by image id; long-format files carry one label per row.
  std::vector<SampleRecord> out;
  std::map<std::string, std::size_t> by_id;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line = r + 1;
    auto cell = [&](int col) -> std::string {
      if (col < 0 || static_cast<std::size_t>(col) >= row.size()) return "";
      return row[static_cast<std::size_t>(col)];
    };

    const std::string image_id = trim(cell(col_image));
    const std::string patient_id = trim(cell(col_patient));
    if (image_id.empty()) throw ParseError("metadata line " + std::to_string(line) +
                                           ": empty Image Index");
    if (patient_id.empty()) throw ParseError("metadata line " + std::to_string(line) +
                                             ": empty Patient ID");

    SampleRecord* rec;
    auto it = by_id.find(image_id);
    if (it == by_id.end()) {
      by_id.emplace(image_id, out.size());
      out.push_back(SampleRecord{});
      rec = &out.back();
      rec->image_id = image_id;
      rec->patient_id = patient_id;
    } else {
      rec = &out[it->second];
      if (rec->patient_id != patient_id) {
        throw ParseError("metadata line " + std::to_string(line) + ": image '" + image_id +
                         "' maps to conflicting patient ids '" + rec->patient_id + "' and '" +
                         patient_id + "'");
      }
    }

    std::istringstream labels(cell(col_labels));
    std::string token;
    while (std::getline(labels, token, '|')) {
      token = trim(token);
      if (token.empty() || token == "No Finding") continue;  // all-zero encoding
      const int idx = label_index(token);
      if (idx < 0) {
        throw ParseError("metadata line " + std::to_string(line) + ": unknown disease label '" +
                         token + "'");
      }
      rec->labels.bits[static_cast<std::size_t>(idx)] = 1;  // duplicates collapse here
    }

    if (!rec->age) rec->age = parse_age(cell(col_age));
    if (rec->sex == Sex::Unknown) rec->sex = parse_sex(cell(col_sex));
    if (rec->view == ViewPosition::Unknown) rec->view = parse_view(cell(col_view));
  }
  return out;
}

SplitResult patient_split(const DatasetManifest& manifest, const SplitSpec& spec) {
  if (manifest.records.empty()) throw ValueError("patient_split: empty manifest");
  if (spec.train < 0 || spec.val < 0 || spec.test < 0 ||
      std::fabs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw ValueError("patient_split: fractions must be non-negative and sum to 1");
  }

  // Unique patients in sorted order, then a seeded shuffle.
  std::vector<std::string> patients;
  for (const SampleRecord& r : manifest.records) patients.push_back(r.patient_id);
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());

  RandomStream rng(spec.seed);
  rng.shuffle(patients);

  // Greedy largest-deficit assignment keeps each split within one patient of
  // its target.
  const double fractions[3] = {spec.train, spec.val, spec.test};
  const double total = static_cast<double>(patients.size());
  double assigned[3] = {0, 0, 0};
  std::map<std::string, int> split_of;
  for (const std::string& p : patients) {
    int best = 0;
    double best_deficit = -1e300;
    for (int s = 0; s < 3; ++s) {
      const double deficit = fractions[s] * total - assigned[s];
      if (deficit > best_deficit + 1e-12 ||
          (std::fabs(deficit - best_deficit) <= 1e-12 && fractions[s] > fractions[best])) {
        best = s;
        best_deficit = deficit;
      }
    }
    split_of[p] = best;
    assigned[best] += 1.0;
  }

  std::vector<SampleRecord> parts[3];
  for (const SampleRecord& r : manifest.records) {
    parts[split_of[r.patient_id]].push_back(r);
  }
  return SplitResult{make_manifest(std::move(parts[0])), make_manifest(std::move(parts[1])),
                     make_manifest(std::move(parts[2]))};
}

DatasetManifest subsample(const DatasetManifest& manifest, std::size_t n, std::uint64_t seed) {
  if (n >= manifest.records.size()) return manifest;
  std::vector<std::size_t> order(manifest.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RandomStream rng(seed);
  rng.shuffle(order);
  order.resize(n);
  std::sort(order.begin(), order.end());  // keep original manifest order
  std::vector<SampleRecord> kept;
  kept.reserve(n);
  for (std::size_t i : order) kept.push_back(manifest.records[i]);
  return make_manifest(std::move(kept));
}

void write_manifest_csv(const std::string& path, const DatasetManifest& manifest,
                        const std::string& split_name) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "Image Index,Finding Labels,Patient ID,Patient Age,Patient Gender,View Position,Split\n";
  for (const SampleRecord& r : manifest.records) {
    std::string labels;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      if (!r.labels.bits[i]) continue;
      if (!labels.empty()) labels += "|";
      labels += label_space()[i];
    }
    if (labels.empty()) labels = "No Finding";
    std::vector<std::string> fields = {
        r.image_id, labels, r.patient_id, r.age ? std::to_string(*r.age) : "",
        r.sex == Sex::Unknown ? "" : sex_name(r.sex),
        r.view == ViewPosition::Unknown ? "" : view_name(r.view), split_name};
    out << csv_join(fields) << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

DatasetManifest read_manifest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return make_manifest(parse_metadata(buf.str()));
}

namespace {

struct DemographicsTally {
  std::array<std::size_t, kNumLabels> label_counts{};
  std::map<unsigned, std::size_t> age_decades;
  std::size_t age_unknown = 0;
  std::map<std::string, std::size_t> sex_counts;
  std::map<std::string, std::size_t> view_counts;
  std::size_t no_finding = 0;

  explicit DemographicsTally(const DatasetManifest& m) {
    for (const SampleRecord& r : m.records) {
      for (std::size_t i = 0; i < kNumLabels; ++i) label_counts[i] += r.labels.bits[i];
      if (!r.labels.any()) ++no_finding;
      if (r.age) {
        ++age_decades[*r.age / 10 * 10];
      } else {
        ++age_unknown;
      }
      ++sex_counts[sex_name(r.sex)];
      ++view_counts[view_name(r.view)];
    }
  }
};

std::string decade_name(unsigned d) { return std::to_string(d) + "-" + std::to_string(d + 9); }

}  // namespace

std::string demographics_text(const DatasetManifest& manifest) {
  DemographicsTally t(manifest);
  std::ostringstream os;
  os << "Demographics summary (" << manifest.total() << " images)\n";
  os << "\nLabel counts:\n";
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    os << "  " << label_space()[i] << ": " << t.label_counts[i] << "\n";
  }
  os << "  No Finding: " << t.no_finding << "\n";
  os << "\nAge (decades):\n";
  for (const auto& [k, v] : t.age_decades) os << "  " << decade_name(k) << ": " << v << "\n";
  if (t.age_unknown) os << "  unknown: " << t.age_unknown << "\n";
  os << "\nSex:\n";
  for (const auto& [k, v] : t.sex_counts) os << "  " << k << ": " << v << "\n";
  os << "\nView position:\n";
  for (const auto& [k, v] : t.view_counts) os << "  " << k << ": " << v << "\n";
  return os.str();
}

std::string demographics_csv(const DatasetManifest& manifest) {
  DemographicsTally t(manifest);
  std::ostringstream os;
  os << "section,key,count\n";
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    os << "label," << label_space()[i] << "," << t.label_counts[i] << "\n";
  }
  os << "label,No Finding," << t.no_finding << "\n";
  for (const auto& [k, v] : t.age_decades) os << "age," << decade_name(k) << "," << v << "\n";
  if (t.age_unknown) os << "age,unknown," << t.age_unknown << "\n";
  for (const auto& [k, v] : t.sex_counts) os << "sex," << k << "," << v << "\n";
  for (const auto& [k, v] : t.view_counts) os << "view," << k << "," << v << "\n";
  return os.str();
}

}  // namespace cxr
