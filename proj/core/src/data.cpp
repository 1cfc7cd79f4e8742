#include "marginforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "marginforge/error.hpp"
#include "text_io.hpp"

namespace marginforge {

namespace {

void config_fail(const std::string& what) { fail(ErrorCode::kConfigError, what); }

struct ConceptPlan {
  std::size_t singletons = 0;
  std::size_t duplicated = 0;
  std::size_t dup_concepts = 0;
};

ConceptPlan plan_concepts(const SynthConfig& cfg) {
  const double target = cfg.duplicate_rate * static_cast<double>(cfg.n_items);
  auto dup = static_cast<std::size_t>(std::llround(target));
  // A duplicate needs a partner; keep within one item of the target.
  if (dup == 1) dup = target >= 1.0 ? 2 : 0;
  dup = std::min(dup, cfg.n_items);
  ConceptPlan plan;
  plan.duplicated = dup;
  plan.singletons = cfg.n_items - dup;
  if (dup == 0) {
    if (cfg.n_concepts != 0 && cfg.n_concepts != cfg.n_items) {
      config_fail("with no duplicates n_concepts must equal n_items");
    }
    return plan;
  }
  if (cfg.n_concepts == 0) {
    plan.dup_concepts = dup / 2;
  } else {
    if (cfg.n_concepts <= plan.singletons || cfg.n_concepts - plan.singletons > dup / 2) {
      config_fail("n_concepts must lie in [" + std::to_string(plan.singletons + 1) + ", " +
                  std::to_string(plan.singletons + dup / 2) + "] for this duplicate_rate");
    }
    plan.dup_concepts = cfg.n_concepts - plan.singletons;
  }
  return plan;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_items < 2) config_fail("n_items must be at least 2");
  if (latent_dim == 0 || video_dim == 0 || text_dim == 0 || frames_per_video == 0) {
    config_fail("dims and frames_per_video must be positive");
  }
  if (n_concepts > n_items) config_fail("n_concepts must not exceed n_items");
  if (!(duplicate_rate >= 0.0 && duplicate_rate <= 1.0)) config_fail("duplicate_rate must be in [0, 1]");
  if (!(noise_video >= 0.0) || !(noise_text >= 0.0) || !(sse_text_noise >= 0.0)) {
    config_fail("noise levels must be nonnegative");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) config_fail("val_fraction must be in [0, 1)");
  plan_concepts(*this);
}

std::size_t SynthConfig::resolved_concepts() const {
  const ConceptPlan p = plan_concepts(*this);
  return p.singletons + p.dup_concepts;
}

std::size_t Dataset::video_dim() const { return frames.empty() ? 0 : frames.front().cols(); }
std::size_t Dataset::text_dim() const { return text.empty() ? 0 : text.front().size(); }

bool Dataset::labeled() const {
  return std::none_of(concepts.begin(), concepts.end(), [](int c) { return c == kNoConcept; });
}

Matrix Dataset::pooled_video() const {
  Matrix out(size(), video_dim());
  for (std::size_t i = 0; i < size(); ++i) {
    const Vector pooled = mean_pool(frames[i]);
    std::copy(pooled.begin(), pooled.end(), out.row(i).begin());
  }
  return out;
}

Matrix Dataset::text_matrix() const { return Matrix::from_rows(text); }

void Dataset::validate() const {
  const std::size_t n = ids.size();
  if (concepts.size() != n || frames.size() != n || text.size() != n) {
    fail(ErrorCode::kShapeMismatch, "dataset columns differ in length");
  }
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen.emplace(ids[i], i).second) fail(ErrorCode::kDuplicateId, "duplicate id '" + ids[i] + "'");
    if (frames[i].rows() == 0 || frames[i].cols() != video_dim()) {
      fail(ErrorCode::kDimMismatch, "frames of '" + ids[i] + "' have inconsistent shape");
    }
    if (text[i].size() != text_dim()) {
      fail(ErrorCode::kDimMismatch, "text features of '" + ids[i] + "' have inconsistent dim");
    }
    if (!sse_video.contains(ids[i]) || !sse_text.contains(ids[i])) {
      fail(ErrorCode::kUnknownId, "static tables do not cover id '" + ids[i] + "'");
    }
  }
  std::vector<int> split_count(n, 0);
  for (const auto* split : {&train, &val}) {
    for (std::size_t idx : *split) {
      if (idx >= n) fail(ErrorCode::kIndexOutOfRange, "split index out of range");
      ++split_count[idx];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (split_count[i] != 1) fail(ErrorCode::kParseError, "id '" + ids[i] + "' is not in exactly one split");
  }
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const ConceptPlan plan = plan_concepts(cfg);
  const std::size_t n = cfg.n_items;
  const std::size_t m = cfg.latent_dim;
  Rng rng(cfg.seed, "data");

  const double map_scale = 1.0 / std::sqrt(static_cast<double>(m));
  Matrix video_map(cfg.video_dim, m);
  Matrix text_map(cfg.text_dim, m);
  for (double& v : video_map.values()) v = rng.normal() * map_scale;
  for (double& v : text_map.values()) v = rng.normal() * map_scale;

  const std::size_t n_concepts = plan.singletons + plan.dup_concepts;
  std::vector<Vector> latents(n_concepts, Vector(m));
  for (auto& z : latents)
    for (double& v : z) v = rng.normal();

  std::vector<int> assignment;
  assignment.reserve(n);
  for (std::size_t s = 0; s < plan.singletons; ++s) assignment.push_back(static_cast<int>(s));
  for (std::size_t t = 0; t < plan.duplicated; ++t) {
    assignment.push_back(static_cast<int>(plan.singletons + t % plan.dup_concepts));
  }
  rng.shuffle(assignment);

  auto project = [](const Matrix& map, const Vector& z, Vector& out) {
    for (std::size_t r = 0; r < map.rows(); ++r) out[r] = dot(map.row(r), z);
  };

  Dataset ds;
  ds.sse_video.set_source_label("sse_video");
  ds.sse_text.set_source_label("sse_text");
  char name[32];
  Vector clean_video(cfg.video_dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(name, sizeof(name), "item%05zu", i);
    const int concept_id = assignment[i];
    const Vector& z = latents[static_cast<std::size_t>(concept_id)];
    project(video_map, z, clean_video);
    Matrix frames(cfg.frames_per_video, cfg.video_dim);
    for (std::size_t f = 0; f < cfg.frames_per_video; ++f) {
      auto row = frames.row(f);
      for (std::size_t k = 0; k < cfg.video_dim; ++k) row[k] = clean_video[k] + cfg.noise_video * rng.normal();
    }
    Vector text(cfg.text_dim);
    project(text_map, z, text);
    for (double& v : text) v += cfg.noise_text * rng.normal();
    Vector sse_text = text;
    for (double& v : sse_text) v += cfg.sse_text_noise * rng.normal();

    ds.ids.emplace_back(name);
    ds.concepts.push_back(concept_id);
    ds.sse_video.add(name, mean_pool(frames));
    ds.sse_text.add(name, std::move(sse_text));
    ds.frames.push_back(std::move(frames));
    ds.text.push_back(std::move(text));
  }
  // Item order is already shuffled, so a prefix split is random.
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) (i < n - n_val ? ds.train : ds.val).push_back(i);
  return ds;
}

std::vector<std::vector<std::string>> ground_truth_equivalents(const Dataset& dataset) {
  if (!dataset.labeled()) fail(ErrorCode::kInvalidArgument, "dataset has no concept_id labels");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) groups[dataset.concepts[i]].push_back(i);
  std::vector<std::vector<std::string>> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j : groups[dataset.concepts[i]])
      if (j != i) out[i].push_back(dataset.ids[j]);
  }
  return out;
}

double realized_duplicate_rate(const Dataset& dataset) {
  std::map<int, std::size_t> counts;
  for (int c : dataset.concepts) ++counts[c];
  std::size_t dup = 0;
  for (int c : dataset.concepts)
    if (c != kNoConcept && counts[c] > 1) ++dup;
  return dataset.size() == 0 ? 0.0 : static_cast<double>(dup) / static_cast<double>(dataset.size());
}

std::string to_hex64(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace {

constexpr const char* kManifestName = "MANIFEST";

struct ManifestEntry {
  std::string role;
  std::string file;
};

const std::vector<ManifestEntry>& manifest_layout() {
  static const std::vector<ManifestEntry> layout = {
      {"items", "items.txt"},         {"frames", "frames.frm"},        {"text", "text.emb"},
      {"sse_video", "sse_video.emb"}, {"sse_text", "sse_text.emb"},
  };
  return layout;
}

std::string format_items(const Dataset& ds) {
  std::vector<const char*> split(ds.size(), "train");
  for (std::size_t i : ds.val) split[i] = "val";
  std::string out = "ITEMS1 " + std::to_string(ds.size()) + "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += ds.ids[i] + " " + (ds.concepts[i] == kNoConcept ? std::string("-") : std::to_string(ds.concepts[i])) +
           " " + split[i] + "\n";
  }
  return out;
}

void parse_items(std::string_view text, const std::string& origin, Dataset& ds) {
  detail::LineReader reader(text);
  std::string_view line;
  auto bad = [&](const std::string& what) {
    fail(ErrorCode::kParseError, origin + ":" + std::to_string(reader.line_number()) + ": " + what);
  };
  if (!reader.next(line)) bad("missing ITEMS1 header");
  const auto header = detail::split_ws(line);
  if (header.size() != 2 || header[0] != "ITEMS1") bad("expected 'ITEMS1 <N>'");
  const auto count = detail::parse_int(header[1]);
  if (!count || *count < 0) bad("bad item count");
  while (reader.next(line)) {
    const auto tok = detail::split_ws(line);
    if (tok.size() != 3) bad("expected '<id> <concept_id> <split>'");
    int concept_id = kNoConcept;
    if (tok[1] != "-") {
      const auto c = detail::parse_int(tok[1]);
      if (!c || *c < 0) bad("bad concept_id label '" + std::string(tok[1]) + "'");
      concept_id = static_cast<int>(*c);
    }
    const std::size_t index = ds.ids.size();
    if (tok[2] == "train") {
      ds.train.push_back(index);
    } else if (tok[2] == "val") {
      ds.val.push_back(index);
    } else {
      bad("unknown split '" + std::string(tok[2]) + "'");
    }
    ds.ids.emplace_back(tok[0]);
    ds.concepts.push_back(concept_id);
  }
  if (ds.ids.size() != static_cast<std::size_t>(*count)) bad("item count does not match header");
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  StaticEmbeddingTable text_table("text");
  for (std::size_t i = 0; i < dataset.size(); ++i) text_table.add(dataset.ids[i], dataset.text[i]);
  const FrameTable frames{dataset.ids, dataset.frames};

  const std::vector<std::string> contents = {
      format_items(dataset),
      format_frames(frames),
      format_static_embeddings(text_table),
      format_static_embeddings(dataset.sse_video),
      format_static_embeddings(dataset.sse_text),
  };
  std::string manifest = "MANIFEST1\n";
  const auto& layout = manifest_layout();
  for (std::size_t k = 0; k < layout.size(); ++k) {
    detail::write_file(dir / layout[k].file, contents[k]);
    manifest += layout[k].role + " " + layout[k].file + " " + to_hex64(fnv1a64(contents[k])) + "\n";
  }
  detail::write_file(dir / kManifestName, manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  if (!std::filesystem::exists(manifest_path)) {
    fail(ErrorCode::kParseError, "missing manifest " + manifest_path.string());
  }
  const std::string manifest = detail::read_file(manifest_path);
  detail::LineReader reader(manifest);
  std::string_view line;
  if (!reader.next(line) || detail::trim(line) != "MANIFEST1") {
    fail(ErrorCode::kParseError, manifest_path.string() + ": expected MANIFEST1 header");
  }
  std::map<std::string, std::string> files;
  while (reader.next(line)) {
    const auto tok = detail::split_ws(line);
    if (tok.size() != 3) {
      fail(ErrorCode::kParseError, manifest_path.string() + ":" +
                                       std::to_string(reader.line_number()) +
                                       ": expected '<role> <file> <checksum>'");
    }
    const auto path = dir / std::string(tok[1]);
    std::string body = detail::read_file(path);
    if (to_hex64(fnv1a64(body)) != tok[2]) {
      fail(ErrorCode::kChecksumError, path.string() + " does not match its manifest checksum");
    }
    files[std::string(tok[0])] = std::move(body);
  }
  for (const auto& entry : manifest_layout()) {
    if (!files.contains(entry.role)) {
      fail(ErrorCode::kParseError, "manifest lacks role '" + entry.role + "'");
    }
  }

  Dataset ds;
  parse_items(files["items"], (dir / "items.txt").string(), ds);
  const FrameTable frames = parse_frames(files["frames"], (dir / "frames.frm").string());
  const StaticEmbeddingTable text = parse_static_embeddings(files["text"], (dir / "text.emb").string());
  ds.sse_video = parse_static_embeddings(files["sse_video"], (dir / "sse_video.emb").string());
  ds.sse_text = parse_static_embeddings(files["sse_text"], (dir / "sse_text.emb").string());
  ds.sse_video.set_source_label("sse_video");
  ds.sse_text.set_source_label("sse_text");

  std::unordered_map<std::string, std::size_t> frame_index;
  for (std::size_t k = 0; k < frames.ids.size(); ++k) frame_index.emplace(frames.ids[k], k);
  for (const auto& id : ds.ids) {
    const auto it = frame_index.find(id);
    if (it == frame_index.end()) fail(ErrorCode::kUnknownId, "no frames for id '" + id + "'");
    ds.frames.push_back(frames.frames[it->second]);
    ds.text.push_back(text.at(id));
  }
  ds.validate();
  return ds;
}

}  // namespace marginforge
