#include "marginforge/experts.hpp"

#include <string>

#include "marginforge/error.hpp"
#include "text_io.hpp"

namespace marginforge {

std::string_view expert_kind_name(ExpertKind kind) {
  switch (kind) {
    case ExpertKind::kDseText: return "dse_text";
    case ExpertKind::kDseVideo: return "dse_video";
    case ExpertKind::kSseText: return "sse_text";
    case ExpertKind::kSseVideo: return "sse_video";
  }
  return "unknown";
}

ExpertKind parse_expert_kind(std::string_view name) {
  for (ExpertKind k : {ExpertKind::kDseText, ExpertKind::kDseVideo, ExpertKind::kSseText,
                       ExpertKind::kSseVideo}) {
    if (expert_kind_name(k) == name) return k;
  }
  fail(ErrorCode::kInvalidArgument, "unknown expert '" + std::string(name) + "'");
}

StaticEmbeddingTable::StaticEmbeddingTable(std::string source_label)
    : source_label_(std::move(source_label)) {}

void StaticEmbeddingTable::add(std::string id, Vector embedding) {
  if (embedding.empty()) fail(ErrorCode::kEmptyInput, "empty embedding for id '" + id + "'");
  if (ids_.empty()) {
    dim_ = embedding.size();
  } else if (embedding.size() != dim_) {
    fail(ErrorCode::kDimMismatch, "id '" + id + "' has dim " + std::to_string(embedding.size()) +
                                      ", table dim is " + std::to_string(dim_));
  }
  if (index_.contains(id)) fail(ErrorCode::kDuplicateId, "duplicate id '" + id + "'");
  if (l2_norm(embedding) < kZeroNormThreshold) {
    fail(ErrorCode::kZeroNorm, "zero-norm embedding for id '" + id + "'");
  }
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  embeddings_.push_back(std::move(embedding));
}

bool StaticEmbeddingTable::contains(std::string_view id) const {
  return index_.contains(std::string(id));
}

const Vector& StaticEmbeddingTable::at(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) fail(ErrorCode::kUnknownId, "id '" + std::string(id) + "' not in table");
  return embeddings_[it->second];
}

DistanceMatrix pairwise_cosine_distances(std::span<const Vector> reprs, ExpertKind kind) {
  const std::size_t n = reprs.size();
  if (n < 2) fail(ErrorCode::kInvalidArgument, "distance matrix needs a batch of at least 2");
  DistanceMatrix out{Matrix(n, n, 0.0), kind};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = 1.0 - cosine_similarity(reprs[i], reprs[j]);
      out.values(i, j) = d;
      out.values(j, i) = d;
    }
  }
  return out;
}

DistanceMatrix dse_text_distances(std::span<const Vector> text_reprs) {
  return pairwise_cosine_distances(text_reprs, ExpertKind::kDseText);
}

DistanceMatrix dse_video_distances(std::span<const Vector> video_reprs) {
  return pairwise_cosine_distances(video_reprs, ExpertKind::kDseVideo);
}

DistanceMatrix sse_video_distances(std::span<const Matrix> frames_per_item) {
  std::vector<Vector> pooled;
  pooled.reserve(frames_per_item.size());
  for (const Matrix& frames : frames_per_item) {
    if (!pooled.empty() && frames.cols() != pooled.front().size()) {
      fail(ErrorCode::kDimMismatch, "frame dims differ across items");
    }
    pooled.push_back(mean_pool(frames));
  }
  return pairwise_cosine_distances(pooled, ExpertKind::kSseVideo);
}

DistanceMatrix sse_text_distances(const StaticEmbeddingTable& table,
                                  std::span<const std::string> batch_ids) {
  std::vector<Vector> reprs;
  reprs.reserve(batch_ids.size());
  for (const auto& id : batch_ids) reprs.push_back(table.at(id));
  return pairwise_cosine_distances(reprs, ExpertKind::kSseText);
}

namespace {

[[noreturn]] void parse_fail(std::string_view origin, std::size_t line, const std::string& what) {
  fail(ErrorCode::kParseError,
       std::string(origin) + ":" + std::to_string(line) + ": " + what);
}

std::size_t parse_count(std::string_view token, std::string_view origin, std::size_t line,
                        const char* what, bool allow_zero) {
  const auto v = detail::parse_int(token);
  if (!v || *v < 0 || (!allow_zero && *v == 0)) {
    parse_fail(origin, line, std::string("bad ") + what + " '" + std::string(token) + "'");
  }
  return static_cast<std::size_t>(*v);
}

void parse_values(std::span<const std::string_view> tokens, std::span<double> out,
                  std::string_view origin, std::size_t line) {
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const auto v = detail::parse_double(tokens[k]);
    if (!v) parse_fail(origin, line, "bad value '" + std::string(tokens[k]) + "'");
    out[k] = *v;
  }
}

}  // namespace

StaticEmbeddingTable parse_static_embeddings(std::string_view text, std::string_view origin) {
  detail::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) parse_fail(origin, reader.line_number(), "missing EMB1 header");
  const auto header = detail::split_ws(line);
  if (header.size() != 3 || header[0] != "EMB1") {
    parse_fail(origin, reader.line_number(), "expected 'EMB1 <N> <D>'");
  }
  const std::size_t count = parse_count(header[1], origin, reader.line_number(), "count", true);
  const std::size_t dim = parse_count(header[2], origin, reader.line_number(), "dim", false);

  StaticEmbeddingTable table;
  while (reader.next(line)) {
    const auto tokens = detail::split_ws(line);
    if (table.size() == count) parse_fail(origin, reader.line_number(), "more rows than header count");
    if (tokens.size() != dim + 1) {
      fail(ErrorCode::kDimMismatch, std::string(origin) + ":" +
                                        std::to_string(reader.line_number()) + ": expected " +
                                        std::to_string(dim) + " values, got " +
                                        std::to_string(tokens.size() - 1));
    }
    Vector values(dim);
    parse_values(std::span(tokens).subspan(1), values, origin, reader.line_number());
    try {
      table.add(std::string(tokens[0]), std::move(values));
    } catch (const Error& e) {
      fail(e.code(), std::string(origin) + ":" + std::to_string(reader.line_number()) + ": " +
                         e.detail());
    }
  }
  if (table.size() != count) {
    parse_fail(origin, reader.line_number(),
               "header declares " + std::to_string(count) + " rows, found " +
                   std::to_string(table.size()));
  }
  return table;
}

std::string format_static_embeddings(const StaticEmbeddingTable& table) {
  std::string out = "EMB1 " + std::to_string(table.size()) + " " + std::to_string(table.dim()) + "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.ids()[i];
    for (double v : table.embedding(i)) {
      out += ' ';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

StaticEmbeddingTable load_static_embeddings(const std::filesystem::path& path) {
  auto table = parse_static_embeddings(detail::read_file(path), path.string());
  table.set_source_label(path.filename().string());
  return table;
}

void write_static_embeddings(const std::filesystem::path& path, const StaticEmbeddingTable& table) {
  detail::write_file(path, format_static_embeddings(table));
}

FrameTable parse_frames(std::string_view text, std::string_view origin) {
  detail::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) parse_fail(origin, reader.line_number(), "missing FRM1 header");
  const auto header = detail::split_ws(line);
  if (header.size() != 4 || header[0] != "FRM1") {
    parse_fail(origin, reader.line_number(), "expected 'FRM1 <N> <T> <D>'");
  }
  const std::size_t count = parse_count(header[1], origin, reader.line_number(), "count", true);
  const std::size_t frames = parse_count(header[2], origin, reader.line_number(), "frame count", false);
  const std::size_t dim = parse_count(header[3], origin, reader.line_number(), "dim", false);

  FrameTable table;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<bool>> seen;
  std::size_t rows = 0;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_number();
    const auto tokens = detail::split_ws(line);
    if (tokens.size() != dim + 2) {
      fail(ErrorCode::kDimMismatch, std::string(origin) + ":" + std::to_string(ln) +
                                        ": expected id, frame index and " + std::to_string(dim) +
                                        " values");
    }
    const std::string id(tokens[0]);
    const auto t = detail::parse_int(tokens[1]);
    if (!t || *t < 0 || static_cast<std::size_t>(*t) >= frames) {
      parse_fail(origin, ln, "frame index '" + std::string(tokens[1]) + "' out of range");
    }
    auto it = index.find(id);
    if (it == index.end()) {
      if (table.ids.size() == count) parse_fail(origin, ln, "more ids than header count");
      it = index.emplace(id, table.ids.size()).first;
      table.ids.push_back(id);
      table.frames.emplace_back(frames, dim);
      seen.emplace_back(frames, false);
    }
    const std::size_t item = it->second;
    const auto f = static_cast<std::size_t>(*t);
    if (seen[item][f]) {
      fail(ErrorCode::kDuplicateId, std::string(origin) + ":" + std::to_string(ln) + ": frame " +
                                        std::to_string(f) + " of '" + id + "' repeated");
    }
    seen[item][f] = true;
    parse_values(std::span(tokens).subspan(2), table.frames[item].row(f), origin, ln);
    ++rows;
  }
  if (table.ids.size() != count || rows != count * frames) {
    parse_fail(origin, reader.line_number(),
               "header declares " + std::to_string(count) + " items x " + std::to_string(frames) +
                   " frames, found " + std::to_string(rows) + " rows");
  }
  return table;
}

std::string format_frames(const FrameTable& table) {
  const std::size_t t = table.frames.empty() ? 0 : table.frames.front().rows();
  const std::size_t d = table.frames.empty() ? 0 : table.frames.front().cols();
  std::string out = "FRM1 " + std::to_string(table.ids.size()) + " " + std::to_string(t) + " " +
                    std::to_string(d) + "\n";
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    const Matrix& m = table.frames[i];
    if (m.rows() != t || m.cols() != d) {
      fail(ErrorCode::kShapeMismatch, "frames of '" + table.ids[i] + "' differ in shape");
    }
    for (std::size_t f = 0; f < t; ++f) {
      out += table.ids[i];
      out += ' ';
      out += std::to_string(f);
      for (double v : m.row(f)) {
        out += ' ';
        out += detail::format_double(v);
      }
      out += '\n';
    }
  }
  return out;
}

FrameTable load_frames(const std::filesystem::path& path) {
  return parse_frames(detail::read_file(path), path.string());
}

void write_frames(const std::filesystem::path& path, const FrameTable& table) {
  detail::write_file(path, format_frames(table));
}

}  // namespace marginforge
