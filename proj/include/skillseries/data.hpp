#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "skillseries/errors.hpp"

namespace skillseries {

using ChannelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class SkillLevel { Novice, Intermediate, Expert };
enum class Task { Suturing, KnotTying, NeedlePassing };

/// Scored criteria: the six modified-OSATS items followed by GRS.
enum class Criterion { RT, TM, FO, OP, QP, SH, GRS };

inline constexpr std::array<Criterion, 6> kOsatsCriteria = {
    Criterion::RT, Criterion::TM, Criterion::FO, Criterion::OP, Criterion::QP, Criterion::SH};
inline constexpr std::array<Criterion, 7> kAllCriteria = {
    Criterion::RT, Criterion::TM, Criterion::FO, Criterion::OP,
    Criterion::QP, Criterion::SH, Criterion::GRS};
inline constexpr std::array<Task, 3> kAllTasks = {Task::Suturing, Task::KnotTying,
                                                  Task::NeedlePassing};

inline std::string_view to_string(SkillLevel level) {
  switch (level) {
    case SkillLevel::Novice: return "Novice";
    case SkillLevel::Intermediate: return "Intermediate";
    case SkillLevel::Expert: return "Expert";
  }
  return "?";
}

inline std::string_view to_string(Task task) {
  switch (task) {
    case Task::Suturing: return "Suturing";
    case Task::KnotTying: return "KnotTying";
    case Task::NeedlePassing: return "NeedlePassing";
  }
  return "?";
}

inline std::string_view to_string(Criterion c) {
  static constexpr std::array<std::string_view, 7> names = {"RT", "TM", "FO", "OP",
                                                            "QP", "SH", "GRS"};
  return names[static_cast<std::size_t>(c)];
}

/// Directory name used by the on-disk dataset layout.
inline std::string_view task_directory(Task task) {
  switch (task) {
    case Task::Suturing: return "Suturing";
    case Task::KnotTying: return "Knot_Tying";
    case Task::NeedlePassing: return "Needle_Passing";
  }
  return "?";
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  out.erase(std::remove(out.begin(), out.end(), '_'), out.end());
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

inline std::vector<std::string> split_char(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view token) {
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

inline std::optional<long long> parse_int(std::string_view token) {
  long long value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

}  // namespace detail

/// Accepts "Suturing", "Knot_Tying", "needle-passing" and similar spellings.
inline std::optional<Task> parse_task(std::string_view s) {
  auto key = detail::lower(s);
  std::erase_if(key, [](char c) { return c == '_' || c == '-' || c == ' '; });
  if (key == "suturing") return Task::Suturing;
  if (key == "knottying") return Task::KnotTying;
  if (key == "needlepassing") return Task::NeedlePassing;
  return std::nullopt;
}

inline std::optional<SkillLevel> parse_skill_level(std::string_view s) {
  const auto key = detail::lower(s);
  if (key == "n" || key == "novice") return SkillLevel::Novice;
  if (key == "i" || key == "intermediate") return SkillLevel::Intermediate;
  if (key == "e" || key == "expert") return SkillLevel::Expert;
  return std::nullopt;
}

inline std::optional<Criterion> parse_criterion(std::string_view s) {
  for (auto c : kAllCriteria)
    if (detail::lower(to_string(c)) == detail::lower(s)) return c;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// KinematicSeries

/// D channels (rows) by L frames (columns). Immutable once built.
class KinematicSeries {
 public:
  KinematicSeries(ChannelMatrix values, double frame_rate = 30.0,
                  std::vector<std::string> channel_names = {})
      : values_(std::move(values)), frame_rate_(frame_rate), names_(std::move(channel_names)) {
    if (values_.rows() < 1) throw BadParam("kinematic series needs at least one channel");
    if (values_.cols() < 2) throw EmptyFile("kinematic series needs at least two frames");
    if (!values_.allFinite()) throw DataError("kinematic series contains non-finite values");
    if (!(frame_rate_ > 0.0)) throw BadParam("frame rate must be positive");
    if (names_.empty()) names_ = default_channel_names(dims());
    if (names_.size() != dims()) throw BadParam("channel name count differs from channel count");
  }

  std::size_t dims() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t frames() const noexcept { return static_cast<std::size_t>(values_.cols()); }
  double frame_rate() const noexcept { return frame_rate_; }
  const ChannelMatrix& values() const noexcept { return values_; }
  const std::vector<std::string>& channel_names() const noexcept { return names_; }

  std::span<const double> channel(std::size_t d) const {
    return {values_.data() + d * frames(), frames()};
  }

  /// JIGSAWS naming for the 76-column layout, generic names otherwise.
  static std::vector<std::string> default_channel_names(std::size_t dims) {
    std::vector<std::string> names;
    names.reserve(dims);
    if (dims == 76) {
      static constexpr std::array<std::string_view, 4> arms = {"MTML", "MTMR", "PSML", "PSMR"};
      static constexpr std::array<std::string_view, 19> fields = {
          "pos_x", "pos_y", "pos_z", "rot_11", "rot_12", "rot_13", "rot_21",
          "rot_22", "rot_23", "rot_31", "rot_32", "rot_33", "vel_x", "vel_y",
          "vel_z", "rotvel_x", "rotvel_y", "rotvel_z", "gripper"};
      for (auto arm : arms)
        for (auto field : fields) names.push_back(std::string(arm) + "_" + std::string(field));
      return names;
    }
    for (std::size_t d = 0; d < dims; ++d) names.push_back("ch" + std::to_string(d));
    return names;
  }

 private:
  ChannelMatrix values_;
  double frame_rate_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Labels and gestures

struct SkillLabels {
  SkillLevel self_proclaimed = SkillLevel::Novice;
  std::array<int, 6> osats{1, 1, 1, 1, 1, 1};
  int grs = 6;

  /// Builds labels with grs = sum(osats); throws if any item is outside [1,5].
  static SkillLabels make(SkillLevel level, const std::array<int, 6>& osats) {
    SkillLabels labels{level, osats, 0};
    for (int v : osats) labels.grs += v;
    labels.validate();
    return labels;
  }

  void validate() const {
    int sum = 0;
    for (std::size_t i = 0; i < osats.size(); ++i) {
      if (osats[i] < 1 || osats[i] > 5)
        throw LabelInconsistency("OSATS " + std::string(to_string(kOsatsCriteria[i])) +
                                 " outside [1,5]: " + std::to_string(osats[i]));
      sum += osats[i];
    }
    if (sum != grs)
      throw LabelInconsistency("GRS " + std::to_string(grs) + " differs from OSATS sum " +
                               std::to_string(sum));
  }

  double score(Criterion c) const {
    if (c == Criterion::GRS) return grs;
    return osats[static_cast<std::size_t>(c)];
  }
};

enum class Gesture : std::uint8_t {
  G1 = 1, G2, G3, G4, G5, G6, G7, G8, G9, G10, G11, G12, G13, G14, G15
};

inline constexpr int kGestureCount = 15;

inline std::string gesture_name(Gesture g) { return "G" + std::to_string(static_cast<int>(g)); }

inline std::string_view gesture_description(Gesture g) {
  static constexpr std::array<std::string_view, kGestureCount> text = {
      "Reaching for needle with right hand",
      "Positioning needle",
      "Pushing needle through tissue",
      "Transferring needle from left to right",
      "Moving to center with needle in grip",
      "Pulling suture with left hand",
      "Pulling suture with right hand",
      "Orienting needle",
      "Using right hand to help tighten suture",
      "Loosening more suture",
      "Dropping suture at end and moving to end points",
      "Reaching for needle with left hand",
      "Making C loop around right hand",
      "Reaching for suture with right hand",
      "Pulling suture with both hands"};
  return text[static_cast<std::size_t>(g) - 1];
}

inline std::optional<Gesture> parse_gesture(std::string_view token) {
  if (token.size() < 2 || (token[0] != 'G' && token[0] != 'g')) return std::nullopt;
  const auto id = detail::parse_int(token.substr(1));
  if (!id || *id < 1 || *id > kGestureCount) return std::nullopt;
  return static_cast<Gesture>(*id);
}

/// Half-open frame range [start_frame, end_frame), 0-based.
struct GestureSegment {
  Gesture gesture = Gesture::G1;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;

  friend bool operator==(const GestureSegment&, const GestureSegment&) = default;
};

// ---------------------------------------------------------------------------
// Trials and datasets

struct TrialRecord {
  std::string surgeon_id;
  Task task = Task::Suturing;
  int trial_index = 0;
  KinematicSeries series;
  SkillLabels labels;
  std::optional<std::vector<GestureSegment>> transcript;

  std::string id() const {
    return std::string(to_string(task)) + "_" + surgeon_id + "_" + std::to_string(trial_index);
  }
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::optional<Task> task_filter) : task_filter_(task_filter) {}

  void add(TrialRecord trial) {
    auto key = std::make_tuple(trial.surgeon_id, trial.task, trial.trial_index);
    if (!keys_.insert(key).second) throw DuplicateTrial("duplicate trial " + trial.id());
    trials_.push_back(std::move(trial));
  }

  const std::vector<TrialRecord>& trials() const noexcept { return trials_; }
  std::size_t size() const noexcept { return trials_.size(); }
  const TrialRecord& operator[](std::size_t i) const { return trials_[i]; }
  std::optional<Task> task_filter() const noexcept { return task_filter_; }

  /// Surgeon ids in first-appearance order.
  std::vector<std::string> surgeons() const {
    std::vector<std::string> out;
    for (const auto& t : trials_)
      if (std::find(out.begin(), out.end(), t.surgeon_id) == out.end()) out.push_back(t.surgeon_id);
    return out;
  }

  Dataset filtered(Task task) const {
    Dataset out(task);
    for (const auto& t : trials_)
      if (t.task == task) out.add(t);
    return out;
  }

 private:
  std::vector<TrialRecord> trials_;
  std::set<std::tuple<std::string, Task, int>> keys_;
  std::optional<Task> task_filter_;
};

// ---------------------------------------------------------------------------
// Loaders

/// One frame per non-empty line, `expected_dims` whitespace-separated reals.
/// `expected_dims == 0` takes the column count of the first row.
inline KinematicSeries load_kinematics(std::istream& in, std::size_t expected_dims) {
  std::vector<double> flat;
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_frames = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (expected_dims == 0) expected_dims = tokens.size();
    if (tokens.size() != expected_dims)
      throw MalformedRow(line_no, "expected " + std::to_string(expected_dims) + " columns, got " +
                                      std::to_string(tokens.size()));
    for (auto tok : tokens) {
      const auto v = detail::parse_double(tok);
      if (!v) throw MalformedRow(line_no, "non-numeric token '" + std::string(tok) + "'");
      if (!std::isfinite(*v)) throw MalformedRow(line_no, "non-finite value");
      flat.push_back(*v);
    }
    ++n_frames;
  }
  if (n_frames < 2)
    throw EmptyFile("kinematics has " + std::to_string(n_frames) + " frames, need at least 2");
  ChannelMatrix values(static_cast<Eigen::Index>(expected_dims), static_cast<Eigen::Index>(n_frames));
  for (std::size_t f = 0; f < n_frames; ++f)
    for (std::size_t d = 0; d < expected_dims; ++d)
      values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(f)) = flat[f * expected_dims + d];
  return KinematicSeries(std::move(values));
}

inline void write_kinematics(std::ostream& out, const KinematicSeries& series, int precision = 17) {
  std::ostringstream buf;
  buf << std::setprecision(precision);
  const auto& v = series.values();
  for (Eigen::Index f = 0; f < v.cols(); ++f) {
    for (Eigen::Index d = 0; d < v.rows(); ++d) {
      if (d) buf << ' ';
      buf << v(d, f);
    }
    buf << '\n';
  }
  out << buf.str();
}

inline void validate_transcript(const std::vector<GestureSegment>& segments,
                                std::optional<std::size_t> n_frames = std::nullopt) {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.start_frame >= s.end_frame)
      throw DataError("gesture segment with empty frame range at index " + std::to_string(i));
    if (i > 0 && segments[i - 1].end_frame > s.start_frame)
      throw OverlapError("gesture segments overlap at frame " + std::to_string(s.start_frame + 1));
    if (n_frames && s.end_frame > *n_frames)
      throw DataError("gesture segment ends at frame " + std::to_string(s.end_frame) +
                      " beyond series length " + std::to_string(*n_frames));
  }
}

/// Lines of `<start> <end> <Gk>`, 1-based inclusive frames.
inline std::vector<GestureSegment> load_transcript(std::istream& in) {
  std::vector<GestureSegment> segments;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 3) throw MalformedRow(line_no, "expected '<start> <end> <gesture>'");
    const auto start = detail::parse_int(tokens[0]);
    const auto end = detail::parse_int(tokens[1]);
    if (!start || !end || *start < 1 || *end < *start)
      throw MalformedRow(line_no, "bad frame range");
    const auto g = parse_gesture(tokens[2]);
    if (!g) throw UnknownGesture("unknown gesture '" + std::string(tokens[2]) + "' at line " +
                                 std::to_string(line_no));
    segments.push_back({*g, static_cast<std::size_t>(*start - 1), static_cast<std::size_t>(*end)});
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const auto& a, const auto& b) { return a.start_frame < b.start_frame; });
  validate_transcript(segments);
  return segments;
}

inline void write_transcript(std::ostream& out, const std::vector<GestureSegment>& segments) {
  for (const auto& s : segments)
    out << s.start_frame + 1 << ' ' << s.end_frame << ' ' << gesture_name(s.gesture) << '\n';
}

/// `<Task dir>_<surgeon><trial:03>`, the JIGSAWS file stem convention.
inline std::string trial_file_stem(Task task, const std::string& surgeon, int trial) {
  std::ostringstream s;
  s << task_directory(task) << '_' << surgeon << std::setw(3) << std::setfill('0') << trial;
  return s.str();
}

inline const std::string kMetaHeader = "surgeon,task,trial,level,RT,TM,FO,OP,QP,SH,GRS";

/// Layout under `root`:
///   <TaskDir>/meta.csv
///   <TaskDir>/kinematics[/AllGestures]/<stem>.txt
///   <TaskDir>/transcriptions/<stem>.txt   (optional per trial)
inline Dataset load_dataset(const std::filesystem::path& root, Task task,
                            std::size_t expected_dims = 0) {
  namespace fs = std::filesystem;
  const fs::path task_dir = root / std::string(task_directory(task));
  const fs::path meta_path = task_dir / "meta.csv";
  std::ifstream meta(meta_path);
  if (!meta) throw MissingMeta("missing meta file " + meta_path.string());

  Dataset dataset(task);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(meta, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_char(line, ',');
    if (!header_seen) {
      if (detail::lower(line).find("surgeon") == std::string::npos)
        throw MissingMeta("meta file " + meta_path.string() + " lacks a header row");
      header_seen = true;
      continue;
    }
    if (fields.size() != 11) throw MalformedRow(line_no, "meta row needs 11 fields");
    const auto row_task = parse_task(fields[1]);
    if (!row_task) throw MalformedRow(line_no, "unknown task '" + fields[1] + "'");
    if (*row_task != task) continue;
    const auto trial = detail::parse_int(fields[2]);
    const auto level = parse_skill_level(fields[3]);
    if (!trial || !level) throw MalformedRow(line_no, "bad trial index or skill level");
    std::array<int, 6> osats{};
    for (std::size_t i = 0; i < 6; ++i) {
      const auto v = detail::parse_int(fields[4 + i]);
      if (!v) throw MalformedRow(line_no, "non-integer OSATS value");
      osats[i] = static_cast<int>(*v);
    }
    const auto grs = detail::parse_int(fields[10]);
    if (!grs) throw MalformedRow(line_no, "non-integer GRS");
    SkillLabels labels{*level, osats, static_cast<int>(*grs)};
    labels.validate();

    const std::string stem = trial_file_stem(task, fields[0], static_cast<int>(*trial));
    std::optional<fs::path> kin_path;
    for (const auto& dir : {task_dir / "kinematics", task_dir / "kinematics" / "AllGestures"}) {
      if (fs::exists(dir / (stem + ".txt"))) {
        kin_path = dir / (stem + ".txt");
        break;
      }
    }
    if (!kin_path)
      throw MissingMeta("no kinematics file for trial " + stem + " listed in " + meta_path.string());
    std::ifstream kin(*kin_path);
    KinematicSeries series = [&] {
      try {
        return load_kinematics(kin, expected_dims);
      } catch (const MalformedRow& e) {
        throw DataError(stem + ": " + e.what());
      } catch (const EmptyFile& e) {
        throw EmptyFile(stem + ": " + e.what());
      }
    }();

    std::optional<std::vector<GestureSegment>> transcript;
    const fs::path tr_path = task_dir / "transcriptions" / (stem + ".txt");
    if (fs::exists(tr_path)) {
      std::ifstream tr(tr_path);
      transcript = load_transcript(tr);
      validate_transcript(*transcript, series.frames());
    }
    dataset.add(TrialRecord{fields[0], task, static_cast<int>(*trial), std::move(series), labels,
                            std::move(transcript)});
  }
  if (!header_seen) throw MissingMeta("empty meta file " + meta_path.string());
  return dataset;
}

/// Writes `dataset` in the layout `load_dataset` reads.
inline void write_dataset(const std::filesystem::path& root, const Dataset& dataset) {
  namespace fs = std::filesystem;
  std::map<Task, std::ofstream> metas;
  for (const auto& t : dataset.trials()) {
    const fs::path task_dir = root / std::string(task_directory(t.task));
    fs::create_directories(task_dir / "kinematics");
    auto it = metas.find(t.task);
    if (it == metas.end()) {
      it = metas.emplace(t.task, std::ofstream(task_dir / "meta.csv")).first;
      it->second << kMetaHeader << '\n';
    }
    static constexpr std::array<char, 3> level_code = {'N', 'I', 'E'};
    auto& meta = it->second;
    meta << t.surgeon_id << ',' << to_string(t.task) << ',' << t.trial_index << ','
         << level_code[static_cast<std::size_t>(t.labels.self_proclaimed)];
    for (int v : t.labels.osats) meta << ',' << v;
    meta << ',' << t.labels.grs << '\n';
    const std::string stem = trial_file_stem(t.task, t.surgeon_id, t.trial_index);
    std::ofstream kin(task_dir / "kinematics" / (stem + ".txt"));
    write_kinematics(kin, t.series);
    if (t.transcript) {
      fs::create_directories(task_dir / "transcriptions");
      std::ofstream tr(task_dir / "transcriptions" / (stem + ".txt"));
      write_transcript(tr, *t.transcript);
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic skill-graded trials

/// Frequencies of the per-channel motion components, expressed as DCT-II
/// indices: component j of channel c is cos(pi * k_j * (2n + 1) / (2L)).
/// All indices are below `kSynthMaxIndex`, so a noise-free trial is exactly
/// band-limited to any q > kSynthMaxIndex.
inline constexpr int kSynthMaxIndex = 24;
inline constexpr int kSynthComponents = 3;
inline constexpr double kSynthNoiseScale = 0.6;

struct SynthChannelTemplate {
  double offset = 0.0;
  std::array<int, kSynthComponents> index{};
  std::array<double, kSynthComponents> amplitude{};
};

/// Per-task template, fixed across trials so that features are comparable.
inline std::vector<SynthChannelTemplate> synth_template(Task task, std::size_t n_channels) {
  std::mt19937_64 rng(0x5eed0000ULL + static_cast<std::uint64_t>(task) * 7919ULL);
  std::uniform_real_distribution<double> offset(-1.0, 1.0);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::uniform_int_distribution<int> index(1, kSynthMaxIndex - 1);
  std::vector<SynthChannelTemplate> out(n_channels);
  for (auto& ch : out) {
    ch.offset = offset(rng);
    for (int j = 0; j < kSynthComponents; ++j) {
      int k = 0;
      do {
        k = index(rng);
      } while (std::find(ch.index.begin(), ch.index.begin() + j, k) != ch.index.begin() + j);
      ch.index[static_cast<std::size_t>(j)] = k;
      ch.amplitude[static_cast<std::size_t>(j)] = amp(rng);
    }
  }
  return out;
}

/// Monotone quantization of skill in [0,1] onto the six 1..5 items.
inline SkillLabels synth_labels(double skill) {
  static constexpr std::array<double, 6> shift = {0.0, -0.2, 0.2, -0.1, 0.1, 0.05};
  std::array<int, 6> osats{};
  for (std::size_t i = 0; i < 6; ++i)
    osats[i] = std::clamp(1 + static_cast<int>(std::floor(4.0 * skill + 0.5 + shift[i])), 1, 5);
  const SkillLevel level = skill < 1.0 / 3.0   ? SkillLevel::Novice
                           : skill < 2.0 / 3.0 ? SkillLevel::Intermediate
                                               : SkillLevel::Expert;
  return SkillLabels::make(level, osats);
}

/// Sum of three template sinusoids per channel, amplitude growing with skill,
/// plus white noise of standard deviation kSynthNoiseScale * (1 - skill).
inline TrialRecord synth_trial(double skill, Task task, std::size_t n_channels,
                               std::size_t n_frames, std::uint64_t seed) {
  if (!(skill >= 0.0 && skill <= 1.0)) throw BadParam("skill must lie in [0,1]");
  if (n_channels < 1) throw BadParam("need at least one channel");
  if (n_frames < 200) throw BadParam("synthetic trials need at least 200 frames");

  const auto tmpl = synth_template(task, n_channels);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double gain = 0.5 + 0.5 * skill;
  const double noise_sd = kSynthNoiseScale * (1.0 - skill);
  const double two_l = 2.0 * static_cast<double>(n_frames);

  ChannelMatrix values(static_cast<Eigen::Index>(n_channels), static_cast<Eigen::Index>(n_frames));
  for (std::size_t c = 0; c < n_channels; ++c) {
    std::array<double, kSynthComponents> amp{};
    for (int j = 0; j < kSynthComponents; ++j)
      amp[static_cast<std::size_t>(j)] =
          gain * tmpl[c].amplitude[static_cast<std::size_t>(j)] * (1.0 + 0.03 * gauss(rng));
    for (std::size_t n = 0; n < n_frames; ++n) {
      double v = tmpl[c].offset;
      for (int j = 0; j < kSynthComponents; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        v += amp[jj] * std::cos(std::numbers::pi * tmpl[c].index[jj] *
                                static_cast<double>(2 * n + 1) / two_l);
      }
      values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n)) = v;
    }
    if (noise_sd > 0.0)
      for (std::size_t n = 0; n < n_frames; ++n)
        values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n)) += noise_sd * gauss(rng);
  }
  return TrialRecord{"synth", task, 0, KinematicSeries(std::move(values)), synth_labels(skill),
                     std::nullopt};
}

/// Deterministic gesture transcript covering the trial with 40..160-frame segments.
inline std::vector<GestureSegment> synth_transcript(std::size_t n_frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> len(40, 160);
  std::uniform_int_distribution<int> gid(1, kGestureCount);
  std::vector<GestureSegment> out;
  std::size_t start = 0;
  while (start < n_frames) {
    const std::size_t end = std::min(n_frames, start + len(rng));
    out.push_back({static_cast<Gesture>(gid(rng)), start, end});
    start = end;
  }
  return out;
}

struct SynthDatasetParams {
  Task task = Task::Suturing;
  std::size_t n_surgeons = 8;
  std::size_t trials_per_surgeon = 5;
  std::size_t n_channels = 8;
  std::size_t n_frames = 1000;
  std::uint64_t seed = 1;
  bool with_transcripts = true;
};

/// Surgeons spread evenly over [0.05, 0.95] skill, improving slightly with
/// each trial. The self-proclaimed level is a property of the surgeon and is
/// taken from the surgeon's base skill.
inline Dataset synth_dataset(const SynthDatasetParams& p) {
  if (p.n_surgeons < 1 || p.trials_per_surgeon < 1) throw BadParam("empty synthetic dataset");
  Dataset ds(p.task);
  for (std::size_t s = 0; s < p.n_surgeons; ++s) {
    const double base =
        p.n_surgeons == 1 ? 0.5 : 0.05 + 0.9 * static_cast<double>(s) / static_cast<double>(p.n_surgeons - 1);
    const SkillLevel level = synth_labels(base).self_proclaimed;
    for (std::size_t t = 0; t < p.trials_per_surgeon; ++t) {
      const double skill = std::min(1.0, base + 0.01 * static_cast<double>(t));
      const std::uint64_t seed = p.seed * 1000003ULL + s * 1009ULL + t;
      TrialRecord trial = synth_trial(skill, p.task, p.n_channels, p.n_frames, seed);
      trial.surgeon_id = std::string(1, static_cast<char>('A' + s % 26)) +
                         (s >= 26 ? std::to_string(s / 26) : std::string());
      trial.trial_index = static_cast<int>(t + 1);
      trial.labels.self_proclaimed = level;
      if (p.with_transcripts) trial.transcript = synth_transcript(p.n_frames, seed);
      ds.add(std::move(trial));
    }
  }
  return ds;
}

}  // namespace skillseries
