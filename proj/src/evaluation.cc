#include "bbpatch/evaluation.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bbpatch/patch_bundle.h"
#include "bbpatch/png_io.h"

namespace bbpatch {

using nlohmann::json;

namespace {

ConfusionMatrix empty_confusion(int k) {
  return ConfusionMatrix(k, std::vector<std::uint64_t>(k, 0));
}

// Classifies d (optionally patched with the given per-image transforms) in
// chunks and tallies the confusion matrix.
std::uint64_t tally(Oracle& oracle, const LabeledDataset& d, const Patch* patch,
                    std::span<const AffineTransform> transforms,
                    std::size_t chunk, ConfusionMatrix& confusion) {
  std::uint64_t correct = 0;
  std::vector<Image> batch;
  for (std::size_t start = 0; start < d.size(); start += chunk) {
    const std::size_t end = std::min(d.size(), start + chunk);
    batch.clear();
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(patch ? apply_patch(d.image(i), *patch, transforms[i])
                            : d.image(i));
    std::vector<Probabilities> probs;
    try {
      probs = oracle.classify_batch(batch);
    } catch (const Error& e) {
      throw EvaluationError(e.what(), start);
    }
    for (std::size_t i = start; i < end; ++i) {
      const int pred = argmax(probs[i - start]);
      ++confusion[d.label(i)][pred];
      if (pred == d.label(i)) ++correct;
    }
  }
  return correct;
}

std::vector<AffineTransform> draw_transforms(const LabeledDataset& d,
                                             const Patch& patch,
                                             const TransformConfig& policy,
                                             Rng& rng) {
  std::vector<AffineTransform> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    out.push_back(sample_transform(policy, d.shape(), patch.side(), rng));
  return out;
}

void check_compatible(const Oracle& oracle, const LabeledDataset& d,
                      const Patch* patch) {
  if (oracle.input_shape() != d.shape())
    throw ArgumentError("oracle " + oracle.id() + " expects " +
                        oracle.input_shape().to_string() + ", dataset is " +
                        d.shape().to_string());
  if (oracle.num_classes() != d.num_classes())
    throw ArgumentError("oracle " + oracle.id() + " has " +
                        std::to_string(oracle.num_classes()) +
                        " classes, dataset has " + std::to_string(d.num_classes()));
  if (patch && patch->channels() != d.shape().channels)
    throw ArgumentError("patch channels do not match the dataset");
}

}  // namespace

EvalReport evaluate(Oracle& oracle, const LabeledDataset& d, const Patch* patch,
                    const TransformConfig& policy, Rng& rng, std::size_t chunk) {
  check_compatible(oracle, d, patch);
  if (chunk == 0) chunk = 1;
  EvalReport r;
  r.oracle_id = oracle.id();
  r.dataset_tag = std::string(to_string(d.split_tag()));
  r.n = d.size();
  r.policy = policy;
  r.seed = rng.seed();
  r.clean_confusion = empty_confusion(d.num_classes());
  const std::uint64_t clean = tally(oracle, d, nullptr, {}, chunk, r.clean_confusion);
  r.clean_accuracy = d.empty() ? 0.0 : static_cast<double>(clean) / d.size();
  if (patch) {
    const auto transforms = draw_transforms(d, *patch, policy, rng);
    r.patched_confusion = empty_confusion(d.num_classes());
    const std::uint64_t hit =
        tally(oracle, d, patch, transforms, chunk, r.patched_confusion);
    r.patched_accuracy = d.empty() ? 0.0 : static_cast<double>(hit) / d.size();
  }
  return r;
}

double patched_accuracy(Oracle& oracle, const LabeledDataset& d,
                        const Patch& patch, const TransformConfig& policy,
                        Rng& rng, std::size_t chunk) {
  check_compatible(oracle, d, &patch);
  if (d.empty()) return 0.0;
  const auto transforms = draw_transforms(d, patch, policy, rng);
  ConfusionMatrix confusion = empty_confusion(d.num_classes());
  const std::uint64_t hit =
      tally(oracle, d, &patch, transforms, std::max<std::size_t>(chunk, 1), confusion);
  return static_cast<double>(hit) / d.size();
}

TransferMatrix transfer_matrix(std::span<const NamedPatch> patches,
                               std::span<Oracle* const> oracles,
                               const LabeledDataset& d,
                               const TransformConfig& policy, Rng& rng) {
  for (std::size_t i = 1; i < oracles.size(); ++i) {
    if (oracles[i]->input_shape() != oracles[0]->input_shape() ||
        oracles[i]->num_classes() != oracles[0]->num_classes())
      throw ArgumentError("transfer oracles must share input shape and classes");
  }
  TransferMatrix m;
  for (const auto& p : patches) m.trained_on.push_back(p.trained_on);
  for (const auto* o : oracles) m.tested_on.push_back(o->id());
  m.cells.resize(patches.size());
  for (std::size_t row = 0; row < patches.size(); ++row) {
    for (Oracle* oracle : oracles) {
      Rng cell_rng = rng.derive("transfer-row", row);
      TransferCell cell;
      try {
        cell.report = evaluate(*oracle, d, &patches[row].patch, policy, cell_rng);
        cell.report->patch_source = patches[row].trained_on;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      m.cells[row].push_back(std::move(cell));
    }
  }
  return m;
}

ReportFormat report_format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? ReportFormat::kCsv : ReportFormat::kJson;
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"oracle_id", r.oracle_id},
           {"patch_source", r.patch_source},
           {"dataset_tag", r.dataset_tag},
           {"n", r.n},
           {"clean_accuracy", r.clean_accuracy},
           {"patched_accuracy",
            r.patched_accuracy ? json(*r.patched_accuracy) : json(nullptr)},
           {"clean_confusion", r.clean_confusion},
           {"patched_confusion", r.patched_confusion},
           {"policy", r.policy},
           {"seed", r.seed}};
}

void from_json(const json& j, EvalReport& r) {
  r.oracle_id = j.at("oracle_id").get<std::string>();
  r.patch_source = j.value("patch_source", std::string());
  r.dataset_tag = j.at("dataset_tag").get<std::string>();
  r.n = j.at("n").get<std::uint64_t>();
  r.clean_accuracy = j.at("clean_accuracy").get<double>();
  const auto& pa = j.at("patched_accuracy");
  r.patched_accuracy = pa.is_null() ? std::nullopt : std::optional(pa.get<double>());
  r.clean_confusion = j.at("clean_confusion").get<ConfusionMatrix>();
  r.patched_confusion = j.at("patched_confusion").get<ConfusionMatrix>();
  r.policy = j.at("policy").get<TransformConfig>();
  r.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(json& j, const TransferMatrix& m) {
  json cells = json::array();
  for (const auto& row : m.cells) {
    json jr = json::array();
    for (const auto& c : row) {
      if (c.report)
        jr.push_back(json{{"report", *c.report}});
      else
        jr.push_back(json{{"error", c.error}});
    }
    cells.push_back(std::move(jr));
  }
  j = json{{"kind", "transfer-matrix"},
           {"trained_on", m.trained_on},
           {"tested_on", m.tested_on},
           {"cells", cells}};
}

void from_json(const json& j, TransferMatrix& m) {
  m.trained_on = j.at("trained_on").get<std::vector<std::string>>();
  m.tested_on = j.at("tested_on").get<std::vector<std::string>>();
  m.cells.clear();
  for (const auto& jr : j.at("cells")) {
    std::vector<TransferCell> row;
    for (const auto& jc : jr) {
      TransferCell c;
      if (jc.contains("report"))
        c.report = jc.at("report").get<EvalReport>();
      else
        c.error = jc.value("error", std::string());
      row.push_back(std::move(c));
    }
    m.cells.push_back(std::move(row));
  }
}

namespace {

constexpr const char* kCsvHeader = "trained_on,tested_on,clean_acc,patched_acc,n\n";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_row(const std::string& trained_on, const std::string& tested_on,
                    const EvalReport* r) {
  std::string line = csv_field(trained_on) + "," + csv_field(tested_on) + ",";
  if (r) {
    line += fixed4(r->clean_accuracy) + ",";
    if (r->patched_accuracy) line += fixed4(*r->patched_accuracy);
    line += "," + std::to_string(r->n);
  } else {
    line += ",,";
  }
  return line + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open report");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string report_csv(const EvalReport& r) {
  return std::string(kCsvHeader) + csv_row(r.patch_source, r.oracle_id, &r);
}

std::string report_csv(const TransferMatrix& m) {
  std::string out = kCsvHeader;
  for (std::size_t i = 0; i < m.cells.size(); ++i)
    for (std::size_t k = 0; k < m.cells[i].size(); ++k) {
      const auto& c = m.cells[i][k];
      out += csv_row(m.trained_on[i], m.tested_on[k],
                     c.report ? &*c.report : nullptr);
    }
  return out;
}

void write_report(const EvalReport& r, ReportFormat format,
                  const std::filesystem::path& path) {
  write_text(path, format == ReportFormat::kCsv ? report_csv(r)
                                                : json(r).dump(2) + "\n");
}

void write_report(const TransferMatrix& m, ReportFormat format,
                  const std::filesystem::path& path) {
  write_text(path, format == ReportFormat::kCsv ? report_csv(m)
                                                : json(m).dump(2) + "\n");
}

EvalReport read_eval_report(const std::filesystem::path& path) {
  try {
    return read_json(path).get<EvalReport>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TransferMatrix read_transfer_matrix(const std::filesystem::path& path) {
  try {
    return read_json(path).get<TransferMatrix>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

void dump_patched_examples(const std::filesystem::path& dir,
                           const LabeledDataset& d, const Patch& patch,
                           const TransformConfig& policy, Rng& rng,
                           std::size_t n) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), ec.message());
  const std::size_t count = std::min(n, d.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto t = sample_transform(policy, d.shape(), patch.side(), rng);
    char name[64];
    std::snprintf(name, sizeof name, "example_%04zu_label%d.png", i, d.label(i));
    write_png(dir / name, apply_patch(d.image(i), patch, t));
  }
}

}  // namespace bbpatch
