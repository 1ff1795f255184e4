#include "varconet/dataio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "varconet/error.hpp"

namespace varconet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

std::string blob_name(const Recording& rec) {
  return rec.subject_id + "_ses" + std::to_string(rec.session_index) + ".f32";
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed for " + file.string());
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": bad '" + key + "': " + e.what());
  }
}

}  // namespace

void validate(const Recording& rec) {
  const std::string who = "recording " + rec.subject_id + "/ses" + std::to_string(rec.session_index);
  if (rec.data.rows() < 2) throw InvariantError(who + ": needs at least 2 regions");
  if (rec.data.cols() < 1) throw InvariantError(who + ": needs at least 1 time point");
  if (rec.session_index != 0 && rec.session_index != 1) {
    throw InvariantError(who + ": session_index must be 0 or 1");
  }
  if (!(rec.tr_seconds > 0.0) || !std::isfinite(rec.tr_seconds)) {
    throw InvariantError(who + ": tr_seconds must be positive");
  }
  if (!rec.data.allFinite()) throw InvariantError(who + ": non-finite values");
}

std::vector<std::string> Cohort::subjects() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : recordings)
    if (seen.insert(r.subject_id).second) out.push_back(r.subject_id);
  return out;
}

std::optional<std::size_t> Cohort::find(const std::string& subject, int session) const {
  for (std::size_t i = 0; i < recordings.size(); ++i)
    if (recordings[i].subject_id == subject && recordings[i].session_index == session) return i;
  return std::nullopt;
}

void validate(const Cohort& cohort) {
  std::set<std::pair<std::string, int>> keys;
  std::set<std::string> subjects;
  for (const auto& r : cohort.recordings) {
    validate(r);
    if (!keys.insert({r.subject_id, r.session_index}).second) {
      throw InvariantError("duplicate recording for subject " + r.subject_id + " session " +
                           std::to_string(r.session_index));
    }
    subjects.insert(r.subject_id);
  }
  if (cohort.labels) {
    for (const auto& [subject, label] : *cohort.labels) {
      if (!subjects.count(subject)) {
        throw InvariantError("label given for subject " + subject + " without recordings");
      }
      if (label != 0 && label != 1) {
        throw InvariantError("label for subject " + subject + " must be 0 or 1");
      }
    }
  }
}

// --- f32 blobs ----------------------------------------------------------------

void write_f32_matrix(const fs::path& file, const Matrix& m) {
  std::vector<std::uint32_t> words(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      words[k++] = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw IoError("write failed for " + file.string());
}

Matrix read_f32_matrix(const fs::path& file, Eigen::Index rows, Eigen::Index cols) {
  std::error_code ec;
  const auto bytes = fs::file_size(file, ec);
  if (ec) throw IoError("cannot stat " + file.string() + ": " + ec.message());
  const auto expected = static_cast<std::uintmax_t>(rows * cols) * sizeof(float);
  if (bytes != expected) {
    throw CorruptionError(file.string() + ": expected " + std::to_string(rows * cols) +
                          " floats (" + std::to_string(expected) + " bytes), found " +
                          std::to_string(bytes) + " bytes");
  }
  std::vector<std::uint32_t> words(static_cast<std::size_t>(rows * cols));
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
  if (!in) throw CorruptionError("short read from " + file.string());
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = std::bit_cast<float>(to_little(words[k++]));
  return m;
}

// --- cohort directory -----------------------------------------------------------

void save_cohort(const Cohort& cohort, const fs::path& dir) {
  validate(cohort);
  double tr = cohort.recordings.empty() ? 1.5 : cohort.recordings.front().tr_seconds;
  for (const auto& r : cohort.recordings) {
    if (r.tr_seconds != tr) {
      throw InvariantError("cohort mixes TRs " + std::to_string(tr) + " and " +
                           std::to_string(r.tr_seconds) + "; resample before saving");
    }
  }
  ensure_directory(dir);

  json entries = json::array();
  for (const auto& r : cohort.recordings) {
    json e{{"subject_id", r.subject_id},
           {"session_index", r.session_index},
           {"R", r.regions()},
           {"T", r.timepoints()},
           {"file", blob_name(r)}};
    if (cohort.labels) {
      auto it = cohort.labels->find(r.subject_id);
      if (it != cohort.labels->end()) e["label"] = it->second;
    }
    entries.push_back(std::move(e));
    write_f32_matrix(dir / blob_name(r), r.data);
  }
  json manifest{{"format_tag", kCohortFormatTag},
                {"version", kCohortFormatVersion},
                {"tr_seconds", tr},
                {"recordings", std::move(entries)},
                {"meta", cohort.meta}};
  if (cohort.labels) manifest["labels"] = *cohort.labels;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Cohort load_cohort(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw FormatError("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  const std::string where = manifest_path.string();
  if (required<std::string>(manifest, "format_tag", where) != kCohortFormatTag) {
    throw FormatError(where + ": format_tag is not " + std::string(kCohortFormatTag));
  }
  if (required<int>(manifest, "version", where) != kCohortFormatVersion) {
    throw FormatError(where + ": unsupported version");
  }
  const double tr = required<double>(manifest, "tr_seconds", where);

  Cohort cohort;
  if (manifest.contains("meta")) cohort.meta = manifest["meta"];
  std::map<std::string, int> labels;
  bool any_label = false;
  if (manifest.contains("labels")) {
    labels = manifest["labels"].get<std::map<std::string, int>>();
    any_label = true;
  }
  for (const auto& e : required<json>(manifest, "recordings", where)) {
    Recording r;
    r.subject_id = required<std::string>(e, "subject_id", where);
    r.session_index = required<int>(e, "session_index", where);
    const auto rows = required<Eigen::Index>(e, "R", where);
    const auto cols = required<Eigen::Index>(e, "T", where);
    if (rows < 0 || cols < 0) throw CorruptionError(where + ": negative shape");
    const auto file = required<std::string>(e, "file", where);
    if (!fs::exists(dir / file)) throw CorruptionError(where + ": missing blob " + file);
    r.data = read_f32_matrix(dir / file, rows, cols);
    r.tr_seconds = tr;
    if (e.contains("label")) {
      labels[r.subject_id] = e["label"].get<int>();
      any_label = true;
    }
    cohort.recordings.push_back(std::move(r));
  }
  if (any_label) cohort.labels = std::move(labels);
  validate(cohort);
  return cohort;
}

// --- temporal normalization -----------------------------------------------------

Recording resample_tr(const Recording& rec, double target_tr) {
  if (!(target_tr > 0.0) || !std::isfinite(target_tr)) {
    throw InvariantError("target TR must be positive");
  }
  if (!rec.data.allFinite()) throw InvariantError("cannot resample non-finite data");
  const Eigen::Index t_in = rec.timepoints();
  if (t_in < 1) throw InvariantError("cannot resample an empty recording");
  const double duration = static_cast<double>(t_in - 1) * rec.tr_seconds;
  // The tiny slack keeps exact multiples (e.g. target == tr) from rounding down.
  const auto t_out = static_cast<Eigen::Index>(std::floor(duration / target_tr + 1e-9)) + 1;

  Recording out = rec;
  out.tr_seconds = target_tr;
  out.data.resize(rec.regions(), t_out);
  for (Eigen::Index k = 0; k < t_out; ++k) {
    const double pos = static_cast<double>(k) * target_tr / rec.tr_seconds;
    auto lo = static_cast<Eigen::Index>(std::floor(pos));
    if (lo >= t_in - 1) {
      out.data.col(k) = rec.data.col(t_in - 1);
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) {
      out.data.col(k) = rec.data.col(lo);
    } else {
      out.data.col(k) = (1.0 - frac) * rec.data.col(lo) + frac * rec.data.col(lo + 1);
    }
  }
  return out;
}

Recording crop_recording(const Recording& rec, Eigen::Index start, Eigen::Index length) {
  if (length < 1 || start < 0 || start + length > rec.timepoints()) {
    throw BoundsError("crop [" + std::to_string(start) + ", " + std::to_string(start + length) +
                      ") outside recording of " + std::to_string(rec.timepoints()) + " samples");
  }
  Recording out;
  out.subject_id = rec.subject_id;
  out.session_index = rec.session_index;
  out.tr_seconds = rec.tr_seconds;
  out.data = rec.data.middleCols(start, length);
  return out;
}

// --- embeddings -------------------------------------------------------------------

void save_embeddings(const EmbeddingTable& table, const fs::path& file) {
  if (table.subject_ids.size() != static_cast<std::size_t>(table.values.rows()) ||
      table.sessions.size() != table.subject_ids.size()) {
    throw InvariantError("embedding table rows and labels disagree");
  }
  if (file.has_parent_path()) ensure_directory(file.parent_path());
  write_f32_matrix(file, table.values);
  json rows = json::array();
  for (std::size_t i = 0; i < table.subject_ids.size(); ++i)
    rows.push_back({{"subject_id", table.subject_ids[i]}, {"session_index", table.sessions[i]}});
  json sidecar{{"format_tag", "VCNE"},
               {"version", 1},
               {"rows", table.values.rows()},
               {"dim", table.values.cols()},
               {"R", table.regions},
               {"file", file.filename().string()},
               {"entries", std::move(rows)}};
  write_text(fs::path(file.string() + ".json"), sidecar.dump(2) + "\n");
}

EmbeddingTable load_embeddings(const fs::path& file) {
  const fs::path side(file.string() + ".json");
  if (!fs::exists(side)) throw FormatError("missing embedding sidecar " + side.string());
  json j;
  try {
    j = json::parse(read_text(side));
  } catch (const json::parse_error& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
  const std::string where = side.string();
  EmbeddingTable t;
  const auto rows = required<Eigen::Index>(j, "rows", where);
  const auto dim = required<Eigen::Index>(j, "dim", where);
  t.regions = required<int>(j, "R", where);
  for (const auto& e : required<json>(j, "entries", where)) {
    t.subject_ids.push_back(required<std::string>(e, "subject_id", where));
    t.sessions.push_back(required<int>(e, "session_index", where));
  }
  if (static_cast<Eigen::Index>(t.subject_ids.size()) != rows) {
    throw CorruptionError(where + ": entry count does not match rows");
  }
  t.values = read_f32_matrix(file, rows, dim);
  return t;
}

}  // namespace varconet
