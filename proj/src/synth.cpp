#include "infusenet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <exception>
#include <set>

#include "infusenet/rng.hpp"

namespace ifn {

namespace {

constexpr double kPi = std::numbers::pi;

// Fraction of each region's half-extent covered by its blob envelope; the
// remainder is the travel budget for displacements.
constexpr double kBlobFill = 0.7;

struct Blob {
  double cy, cx, ry, rx;
  double kx1, ky1, kx2, ky2;  // wave vectors of the two crossed gratings
  double phase1, phase2;
  double contrast;
};

double blob_value(const Blob& b, double y, double x) {
  const double ny = (y - b.cy) / b.ry, nx = (x - b.cx) / b.rx;
  const double rho = std::sqrt(ny * ny + nx * nx);
  if (rho >= 1.0) return 0.0;
  const double env = 0.5 * (1.0 + std::cos(kPi * rho));
  const double tex = 0.5 * (std::cos(b.kx1 * x + b.ky1 * y + b.phase1) + std::cos(b.kx2 * x + b.ky2 * y + b.phase2));
  return b.contrast * env * tex;
}

double ramp(int t, int apex, int num_frames) {
  if (t <= apex) return apex == 0 ? 1.0 : 0.5 * (1.0 - std::cos(kPi * t / apex));
  return 0.5 * (1.0 + std::cos(kPi * (t - apex) / static_cast<double>(num_frames - apex)));
}

}  // namespace

void NoiseSpec::validate() const {
  for (double v : {illumination_drift, artefact_level, sensor_sigma}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::invalid_argument, "noise amplitudes must be >= 0");
  }
}

std::array<Region, kNumAus> au_regions(int height, int width) {
  std::array<Region, kNumAus> regions{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 3; ++c) {
      regions[static_cast<std::size_t>(3 * r + c)] = {r * height / 4, (r + 1) * height / 4, c * width / 3,
                                                       (c + 1) * width / 3};
    }
  }
  return regions;
}

std::array<double, 2> au_direction(int au_index) {
  const double theta = au_index * kPi / 6.0 + kPi / 12.0;
  return {std::cos(theta), std::sin(theta)};
}

void SequenceSpec::validate() const {
  if (height < kMinFrameEdge || width < kMinFrameEdge) throw Error(Errc::invalid_argument, "frame too small");
  if (num_frames < 3) throw Error(Errc::invalid_argument, "num_frames must be >= 3");
  if (apex_index < 1 || apex_index >= num_frames) throw Error(Errc::invalid_argument, "apex_index out of range");
  if (!(displacement_px > 0.0) || displacement_px > 2.0) {
    throw Error(Errc::invalid_argument, "displacement_px must lie in (0, 2]");
  }
  for (auto l : au_labels) {
    if (l > 1) throw Error(Errc::invalid_argument, "AU labels must be 0/1");
  }
  noise.validate();
}

Sequence gen_sequence(const SequenceSpec& spec) {
  spec.validate();
  const auto regions = au_regions(spec.height, spec.width);
  Rng rng(derive_seed(spec.seed, 0x7E87));

  std::array<Blob, kNumAus> blobs{};
  std::array<std::array<double, 2>, kNumAus> travel{};
  for (int i = 0; i < kNumAus; ++i) {
    const Region& r = regions[static_cast<std::size_t>(i)];
    const double hy = 0.5 * (r.y1 - r.y0), hx = 0.5 * (r.x1 - r.x0);
    const double k = 2.0 * kPi * spec.texture.frequency;
    const double orient = i * kPi / 12.0 + rng.uniform(0.0, kPi / 12.0);
    Blob& b = blobs[static_cast<std::size_t>(i)];
    b = {r.y0 + hy - 0.5, r.x0 + hx - 0.5, kBlobFill * hy, kBlobFill * hx,
         k * std::cos(orient), k * std::sin(orient), -k * std::sin(orient), k * std::cos(orient),
         rng.uniform(0.0, 2.0 * kPi), rng.uniform(0.0, 2.0 * kPi), spec.texture.contrast};
    if (spec.au_labels[static_cast<std::size_t>(i)]) {
      const auto dir = au_direction(i);
      travel[static_cast<std::size_t>(i)] = {spec.displacement_px * dir[0], spec.displacement_px * dir[1]};
      if (std::abs(travel[static_cast<std::size_t>(i)][0]) > hx - b.rx ||
          std::abs(travel[static_cast<std::size_t>(i)][1]) > hy - b.ry) {
        throw Error(Errc::out_of_bounds, "displacement of AU" + std::to_string(kAuNumbers[static_cast<std::size_t>(i)]) +
                                             " leaves its region at " + std::to_string(spec.height) + "x" +
                                             std::to_string(spec.width));
      }
    }
  }

  Sequence seq;
  seq.frames.reserve(static_cast<std::size_t>(spec.num_frames));
  for (int t = 0; t < spec.num_frames; ++t) {
    const double s = ramp(t, spec.apex_index, spec.num_frames);
    Image img(spec.height, spec.width, spec.texture.base_level);
    for (int i = 0; i < kNumAus; ++i) {
      const Region& r = regions[static_cast<std::size_t>(i)];
      const double dx = s * travel[static_cast<std::size_t>(i)][0], dy = s * travel[static_cast<std::size_t>(i)][1];
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) img.at(y, x) += blob_value(blobs[static_cast<std::size_t>(i)], y - dy, x - dx);
      }
    }
    for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    seq.frames.push_back(inject_artefacts(img, spec.noise, derive_seed(spec.seed, 0x1000 + static_cast<std::uint64_t>(t))));
  }

  seq.apex_flow = FlowField(spec.height, spec.width);
  for (int i = 0; i < kNumAus; ++i) {
    if (!spec.au_labels[static_cast<std::size_t>(i)]) continue;
    const Region& r = regions[static_cast<std::size_t>(i)];
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        const std::size_t k = static_cast<std::size_t>(y) * spec.width + x;
        seq.apex_flow.p[k] = travel[static_cast<std::size_t>(i)][0];
        seq.apex_flow.q[k] = travel[static_cast<std::size_t>(i)][1];
      }
    }
  }
  return seq;
}

Image inject_artefacts(const Image& img, const NoiseSpec& noise, std::uint64_t seed) {
  noise.validate();
  Image out = img;
  Rng rng(seed);
  const int h = img.height, w = img.width;
  if (noise.illumination_drift > 0.0) {
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const double c = std::cos(theta), s = std::sin(theta);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double nx = w > 1 ? static_cast<double>(x) / (w - 1) - 0.5 : 0.0;
        const double ny = h > 1 ? static_cast<double>(y) / (h - 1) - 0.5 : 0.0;
        out.at(y, x) += noise.illumination_drift * (c * nx + s * ny);
      }
    }
  }
  if (noise.artefact_level > 0.0) {
    const int patches = std::max(1, h * w / 128);
    for (int p = 0; p < patches; ++p) {
      const double cy = rng.uniform(0.0, h), cx = rng.uniform(0.0, w);
      const double radius = rng.uniform(0.7, 1.8);
      const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * noise.artefact_level * rng.uniform(0.5, 1.0);
      const int reach = static_cast<int>(std::ceil(3.0 * radius));
      for (int y = std::max(0, static_cast<int>(cy) - reach); y <= std::min(h - 1, static_cast<int>(cy) + reach); ++y) {
        for (int x = std::max(0, static_cast<int>(cx) - reach); x <= std::min(w - 1, static_cast<int>(cx) + reach); ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          out.at(y, x) += amp * std::exp(-d2 / (2.0 * radius * radius));
        }
      }
    }
  }
  if (noise.sensor_sigma > 0.0) {
    for (auto& v : out.data) v += noise.sensor_sigma * rng.normal();
  }
  for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<DatabaseSpec> CorpusConfig::default_databases() {
  // Six pseudo-databases with distinct texture statistics and artefact
  // profiles; every profile is noisy enough that magnification visibly
  // amplifies it.
  return {
      {"alpha", 40, {0.50, 0.30, 0.14}, {0.020, 0.060, 0.007}, 0.3, 1.0},
      {"bravo", 40, {0.45, 0.26, 0.16}, {0.015, 0.080, 0.010}, 0.3, 1.0},
      {"charlie", 40, {0.55, 0.32, 0.18}, {0.025, 0.050, 0.006}, 0.3, 1.0},
      {"delta", 40, {0.50, 0.28, 0.15}, {0.010, 0.090, 0.009}, 0.3, 1.0},
      {"echo", 40, {0.48, 0.24, 0.17}, {0.020, 0.070, 0.011}, 0.3, 1.0},
      {"foxtrot", 40, {0.52, 0.34, 0.13}, {0.015, 0.075, 0.008}, 0.3, 1.0},
  };
}

void CorpusConfig::validate() const {
  if (height < kMinFrameEdge || width < kMinFrameEdge) throw Error(Errc::validation, "corpus frames too small");
  if (num_frames < 3) throw Error(Errc::validation, "num_frames must be >= 3");
  if (apex_min < 1 || apex_max < apex_min || apex_max >= num_frames) {
    throw Error(Errc::validation, "apex range must satisfy 1 <= apex_min <= apex_max < num_frames");
  }
  if (databases.size() != 6) throw Error(Errc::validation, "corpus needs exactly 6 pseudo-databases");
  // Smallest region half-extent left over after the blob envelope.
  const double budget = (1.0 - kBlobFill) * 0.5 * std::min(height / 4, width / 3);
  std::set<std::string> names;
  for (const auto& db : databases) {
    if (db.displacement_max > budget) {
      throw Error(Errc::validation, "database " + db.name + " displacement_max exceeds the travel budget of " +
                                        std::to_string(budget) + " px at " + std::to_string(height) + "x" +
                                        std::to_string(width));
    }
    if (db.name.empty() || !names.insert(db.name).second) throw Error(Errc::validation, "database names must be unique");
    if (db.samples < 1) throw Error(Errc::validation, "database " + db.name + " needs samples >= 1");
    if (!(db.displacement_min > 0.0) || db.displacement_max < db.displacement_min || db.displacement_max > 2.0) {
      throw Error(Errc::validation, "database " + db.name + " displacement range must lie in (0, 2]");
    }
    db.noise.validate();
  }
  if (!(co_occurrence >= 0.0 && co_occurrence <= 1.0)) throw Error(Errc::validation, "co_occurrence must be in [0,1]");
  double total = 0.0;
  for (double p : class_percent) {
    if (!(p >= 0.0)) throw Error(Errc::validation, "class percentages must be >= 0");
    total += p;
  }
  if (!(total > 0.0)) throw Error(Errc::validation, "class percentages must not all be zero");
}

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03d.pgm", index);
  return buf;
}

std::filesystem::path Manifest::frame_path(const Sample& s, int index) const {
  return resolve(s.onset_path).parent_path() / frame_file_name(index);
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : samples) {
    arr.push_back({{"sample_id", s.sample_id},
                   {"database_id", s.database_id},
                   {"onset_path", s.onset_path},
                   {"apex_path", s.apex_path},
                   {"apex_index", s.apex_index},
                   {"num_frames", s.num_frames},
                   {"au_labels", std::vector<int>(s.au_labels.begin(), s.au_labels.end())}});
  }
  return arr;
}

Manifest Manifest::from_json(const nlohmann::json& j, const std::filesystem::path& root) {
  if (!j.is_array()) throw Error(Errc::parse_error, "manifest must be a JSON array");
  Manifest m{root, {}};
  try {
    for (const auto& e : j) {
      Sample s;
      s.sample_id = e.at("sample_id").get<std::string>();
      s.database_id = e.at("database_id").get<std::string>();
      s.onset_path = e.at("onset_path").get<std::string>();
      s.apex_path = e.at("apex_path").get<std::string>();
      s.apex_index = e.at("apex_index").get<int>();
      s.num_frames = e.at("num_frames").get<int>();
      const auto labels = e.at("au_labels").get<std::vector<int>>();
      if (labels.size() != kNumAus) throw Error(Errc::validation, s.sample_id + ": au_labels must have 12 entries");
      for (int i = 0; i < kNumAus; ++i) {
        if (labels[static_cast<std::size_t>(i)] != 0 && labels[static_cast<std::size_t>(i)] != 1) {
          throw Error(Errc::validation, s.sample_id + ": au_labels must be 0/1");
        }
        s.au_labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(labels[static_cast<std::size_t>(i)]);
      }
      if (s.apex_index < 0 || s.apex_index >= s.num_frames) {
        throw Error(Errc::validation, s.sample_id + ": apex_index outside the sequence");
      }
      m.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("manifest: ") + e.what());
  }
  return m;
}

void Manifest::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error(Errc::unwritable_path, file.string());
  out << to_json().dump(2) << '\n';
}

Manifest Manifest::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::missing_file, file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, file.string() + ": " + e.what());
  }
  return from_json(j, file.parent_path());
}

std::vector<AuLabels> allocate_labels(const CorpusConfig& cfg, int count, std::uint64_t seed) {
  std::array<double, kNumAus> weights{};
  if (cfg.class_distribution) {
    weights = cfg.class_percent;
  } else {
    weights.fill(1.0);
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

  // Largest-remainder quotas; ties go to the lower AU index.
  std::array<int, kNumAus> quota{};
  std::array<double, kNumAus> remainder{};
  int assigned = 0;
  for (int i = 0; i < kNumAus; ++i) {
    const double exact = count * weights[static_cast<std::size_t>(i)] / total;
    quota[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact));
    remainder[static_cast<std::size_t>(i)] = exact - quota[static_cast<std::size_t>(i)];
    assigned += quota[static_cast<std::size_t>(i)];
  }
  std::array<int, kNumAus> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)]; });
  for (int k = 0; assigned < count; ++k, ++assigned) ++quota[static_cast<std::size_t>(order[static_cast<std::size_t>(k % kNumAus)])];

  std::vector<int> primaries;
  primaries.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < kNumAus; ++i) primaries.insert(primaries.end(), static_cast<std::size_t>(quota[static_cast<std::size_t>(i)]), i);
  Rng rng(derive_seed(seed, 0x1ABE15));
  rng.shuffle(primaries.begin(), primaries.end());

  // brow raisers, nose wrinkle / upper lip, smile, chin / lip corner depressor
  constexpr std::array<int, kNumAus> partner = {1, 0, -1, -1, 8, -1, 7, 6, 4, -1, 11, 10};
  std::vector<AuLabels> labels(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    const int p = primaries[static_cast<std::size_t>(s)];
    labels[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)] = 1;
    const double draw = rng.uniform();
    if (partner[static_cast<std::size_t>(p)] >= 0 && draw < cfg.co_occurrence) {
      labels[static_cast<std::size_t>(s)][static_cast<std::size_t>(partner[static_cast<std::size_t>(p)])] = 1;
    }
  }
  return labels;
}

Manifest gen_corpus(const CorpusConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw Error(Errc::unwritable_path, out_dir.string());

  int total = 0;
  for (const auto& db : cfg.databases) total += db.samples;
  const auto labels = allocate_labels(cfg, total, seed);

  struct Job {
    const DatabaseSpec* db;
    int global_index;
    int local_index;
  };
  std::vector<Job> jobs;
  for (const auto& db : cfg.databases) {
    for (int k = 0; k < db.samples; ++k) jobs.push_back({&db, static_cast<int>(jobs.size()), k});
  }

  Manifest manifest{out_dir, std::vector<Sample>(jobs.size())};
  std::vector<std::exception_ptr> failures(jobs.size());
  // Each sample's randomness derives from (seed, sample index) alone, so the
  // loop order cannot change the output.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const Job& job = jobs[j];
    try {
      const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(job.global_index));
      Rng rng(sample_seed);
      SequenceSpec spec;
      spec.height = cfg.height;
      spec.width = cfg.width;
      spec.num_frames = cfg.num_frames;
      spec.apex_index = static_cast<int>(rng.uniform_int(cfg.apex_min, cfg.apex_max));
      spec.au_labels = labels[j];
      spec.displacement_px = rng.uniform(job.db->displacement_min, job.db->displacement_max);
      spec.noise = job.db->noise;
      spec.texture = job.db->texture;
      spec.seed = derive_seed(sample_seed, 0x5E9);

      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", job.db->name.c_str(), job.local_index);
      const std::filesystem::path rel = std::filesystem::path(job.db->name) / id;
      std::filesystem::create_directories(out_dir / rel);
      const Sequence seq = gen_sequence(spec);
      for (int t = 0; t < spec.num_frames; ++t) store_frame(seq.frames[static_cast<std::size_t>(t)], out_dir / rel / frame_file_name(t));

      Sample& s = manifest.samples[j];
      s.sample_id = id;
      s.database_id = job.db->name;
      s.onset_path = (rel / frame_file_name(0)).generic_string();
      s.apex_path = (rel / frame_file_name(spec.apex_index)).generic_string();
      s.apex_index = spec.apex_index;
      s.num_frames = spec.num_frames;
      s.au_labels = spec.au_labels;
    } catch (...) {
      failures[j] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  manifest.save(out_dir / "manifest.json");
  return manifest;
}

}  // namespace ifn
