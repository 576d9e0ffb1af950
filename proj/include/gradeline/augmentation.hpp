#pragma once

// Label-preserving dataset enlargement (rotation, flipping, shifting) and the
// JSON-lines dataset manifest.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/classifiers/dataset.hpp"
#include "gradeline/error.hpp"
#include "gradeline/image_io.hpp"
#include "gradeline/imaging.hpp"

namespace gradeline {

// Positive angles rotate clockwise on screen (y axis pointing down).
// Multiples of 90 degrees are exact pixel permutations (90/270 swap width
// and height); other angles resample nearest-neighbour about the centre into
// a same-size canvas with black fill.
inline RgbImage rotate(const RgbImage& img, double angle_deg) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0) a += 360.0;
  const int w = img.width();
  const int h = img.height();
  if (a == 0.0) return img;
  if (a == 90.0 || a == 270.0) {
    RgbImage out(h, w);
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < h; ++x) {
        out.at(x, y) = a == 90.0 ? img.at(y, h - 1 - x) : img.at(w - 1 - y, x);
      }
    }
    return out;
  }
  if (a == 180.0) {
    RgbImage out(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(x, y) = img.at(w - 1 - x, h - 1 - y);
    }
    return out;
  }
  const double rad = a * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double ox = x - cx;
      const double oy = y - cy;
      const int sx = static_cast<int>(round_half_up(c * ox + s * oy + cx));
      const int sy = static_cast<int>(round_half_up(-s * ox + c * oy + cy));
      if (img.contains(sx, sy)) out.at(x, y) = img.at(sx, sy);
    }
  }
  return out;
}

enum class FlipAxis { Horizontal, Vertical };

// Horizontal mirrors left/right; vertical mirrors top/bottom.
inline RgbImage flip(const RgbImage& img, FlipAxis axis) {
  RgbImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(x, y) = axis == FlipAxis::Horizontal ? img.at(img.width() - 1 - x, y) : img.at(x, img.height() - 1 - y);
    }
  }
  return out;
}

// Content moves by (dx, dy); vacated pixels are black.
inline RgbImage shift(const RgbImage& img, int dx, int dy) {
  if (std::abs(dx) >= img.width() || std::abs(dy) >= img.height()) {
    throw InvalidArgument("shift must be smaller than the image size");
  }
  RgbImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (img.contains(x - dx, y - dy)) out.at(x, y) = img.at(x - dx, y - dy);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

enum class Provenance { Original, Rotation, Flipping, Shifting, Synthetic };

inline constexpr std::array<Provenance, 5> kAllProvenance = {Provenance::Original, Provenance::Rotation,
                                                             Provenance::Flipping, Provenance::Shifting,
                                                             Provenance::Synthetic};

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Original: return "original";
    case Provenance::Rotation: return "rotation";
    case Provenance::Flipping: return "flipping";
    case Provenance::Shifting: return "shifting";
    case Provenance::Synthetic: return "synthetic";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view s) {
  for (auto p : kAllProvenance) {
    if (to_string(p) == s) return p;
  }
  throw InvalidArgument("unknown provenance tag '" + std::string(s) + "'");
}

struct ManifestEntry {
  std::string path;  // relative paths resolve against the manifest's directory
  Label label = Label::Unripened;
  Provenance tag = Provenance::Original;
  nlohmann::json extra = nlohmann::json::object();  // e.g. subclass, truth file

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // where relative entry paths resolve

  std::map<Provenance, std::size_t> counts() const {
    std::map<Provenance, std::size_t> c;
    for (auto p : kAllProvenance) c[p] = 0;
    for (const auto& e : entries) ++c[e.tag];
    return c;
  }

  std::filesystem::path resolve(const ManifestEntry& e) const {
    const std::filesystem::path p(e.path);
    return p.is_absolute() ? p : base_dir / p;
  }

  void validate_unique_paths() const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
      if (!seen.insert(e.path).second) throw FormatError("manifest has a duplicate path: " + e.path);
    }
  }

  void add(ManifestEntry e) {
    for (const auto& x : entries) {
      if (x.path == e.path) throw InvalidArgument("manifest path already present: " + e.path);
    }
    entries.push_back(std::move(e));
  }
};

inline nlohmann::json to_json(const ManifestEntry& e) {
  nlohmann::json j = e.extra.is_object() ? e.extra : nlohmann::json::object();
  j["path"] = e.path;
  j["label"] = to_string(e.label);
  j["tag"] = to_string(e.tag);
  return j;
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.path = j.at("path").get<std::string>();
  e.label = parse_label(j.at("label").get<std::string>());
  e.tag = parse_provenance(j.value("tag", std::string("original")));
  e.extra = j;
  e.extra.erase("path");
  e.extra.erase("label");
  e.extra.erase("tag");
  return e;
}

inline std::string manifest_to_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& e : m.entries) out += to_json(e).dump() + "\n";
  return out;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_jsonl(m);
  if (!out) throw IoError("short write to manifest " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.entries.push_back(manifest_entry_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError("bad manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  m.validate_unique_paths();
  return m;
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentationPlan {
  std::size_t rotation = 0;
  std::size_t flipping = 0;
  std::size_t shifting = 0;
};

struct AugmentationConfig {
  double max_angle = 25.0;          // degrees, uniform in [-max, max]
  double max_shift_fraction = 0.1;  // of width / height
};

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Draws sources uniformly from the manifest's original entries (all entries
// if none is tagged original), applies a random transform per tag, writes
// PNGs into out_dir and returns the input manifest plus the new entries.
// Entry paths are relative to out_dir's manifest location (out_dir itself).
inline DatasetManifest augment_dataset(const DatasetManifest& m, const AugmentationPlan& plan, std::uint64_t seed,
                                       const std::filesystem::path& out_dir, const AugmentationConfig& cfg = {}) {
  DatasetManifest out = m;
  const std::size_t total = plan.rotation + plan.flipping + plan.shifting;
  if (total == 0) return out;

  std::vector<std::size_t> sources;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i].tag == Provenance::Original) sources.push_back(i);
  }
  if (sources.empty()) {
    for (std::size_t i = 0; i < m.entries.size(); ++i) sources.push_back(i);
  }
  if (sources.empty()) throw InvalidArgument("augment_dataset: manifest has no source images");

  struct Job {
    std::size_t source = 0;
    Provenance tag = Provenance::Original;
    double angle = 0.0;
    FlipAxis axis = FlipAxis::Horizontal;
    double shift_x = 0.0;  // fractions of the image size
    double shift_y = 0.0;
    std::string path;
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
  std::uniform_real_distribution<double> angle(-cfg.max_angle, cfg.max_angle);
  std::uniform_real_distribution<double> frac(-cfg.max_shift_fraction, cfg.max_shift_fraction);
  std::bernoulli_distribution coin(0.5);

  std::vector<Job> jobs;
  auto plan_tag = [&](Provenance tag, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      Job j;
      j.source = sources[pick(rng)];
      j.tag = tag;
      if (tag == Provenance::Rotation) j.angle = angle(rng);
      if (tag == Provenance::Flipping) j.axis = coin(rng) ? FlipAxis::Horizontal : FlipAxis::Vertical;
      if (tag == Provenance::Shifting) {
        j.shift_x = frac(rng);
        j.shift_y = frac(rng);
      }
      std::ostringstream name;
      name << "aug_" << to_string(tag) << "_" << std::setw(5) << std::setfill('0') << i << ".png";
      j.path = name.str();
      jobs.push_back(std::move(j));
    }
  };
  plan_tag(Provenance::Rotation, plan.rotation);
  plan_tag(Provenance::Flipping, plan.flipping);
  plan_tag(Provenance::Shifting, plan.shifting);

  std::filesystem::create_directories(out_dir);
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& j = jobs[k];
    const RgbImage src = load_image(m.resolve(m.entries[j.source]));
    RgbImage img;
    switch (j.tag) {
      case Provenance::Rotation: img = rotate(src, j.angle); break;
      case Provenance::Flipping: img = flip(src, j.axis); break;
      default: {
        const int limit_x = std::max(0, src.width() - 1);
        const int limit_y = std::max(0, src.height() - 1);
        const int dx = std::clamp(static_cast<int>(round_half_up(j.shift_x * src.width())), -limit_x, limit_x);
        const int dy = std::clamp(static_cast<int>(round_half_up(j.shift_y * src.height())), -limit_y, limit_y);
        img = shift(src, dx, dy);
      }
    }
    save_image(out_dir / j.path, img);
  });

  // Existing relative paths keep resolving after the base moves to out_dir.
  for (auto& e : out.entries) {
    if (!std::filesystem::path(e.path).is_absolute()) {
      e.path = std::filesystem::relative(m.resolve(e), out_dir).generic_string();
    }
  }
  out.base_dir = out_dir;
  for (const auto& j : jobs) {
    // out.entries starts with the rebased copies of m.entries, same order.
    ManifestEntry e;
    e.path = j.path;
    e.label = m.entries[j.source].label;
    e.tag = j.tag;
    e.extra = nlohmann::json::object();
    if (m.entries[j.source].extra.contains("subclass")) e.extra["subclass"] = m.entries[j.source].extra["subclass"];
    e.extra["source"] = out.entries[j.source].path;
    out.add(std::move(e));
  }
  return out;
}

}  // namespace gradeline
