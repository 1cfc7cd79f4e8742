#include "marginforge_cli/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "marginforge/error.hpp"

namespace marginforge::cli {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string real_text(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

[[noreturn]] void type_error(std::string_view where, std::string_view key, const std::string& what) {
  fail(ErrorCode::kTypeError, std::string(where) + ": key '" + std::string(key) + "': " + what);
}

std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> to_real(std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct Setter {
  std::function<void(RunConfig&, std::string_view value, std::string_view where, std::string_view key)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Field adaptors. Each checks type and range and names the key on failure.
template <typename Int>
Setter int_ref(Int& (*access)(RunConfig&), long long min_value) {
  return {[access, min_value](RunConfig& c, std::string_view v, std::string_view where, std::string_view key) {
            const auto x = to_int(v);
            if (!x) type_error(where, key, "expected an integer, got '" + std::string(v) + "'");
            if (*x < min_value) type_error(where, key, "must be >= " + std::to_string(min_value));
            access(c) = static_cast<Int>(*x);
          },
          [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); }};
}

Setter real_ref(double& (*access)(RunConfig&), std::optional<double> min_value,
                std::optional<double> max_value = std::nullopt) {
  return {[=](RunConfig& c, std::string_view v, std::string_view where, std::string_view key) {
            const auto x = to_real(v);
            if (!x) type_error(where, key, "expected a real number, got '" + std::string(v) + "'");
            if (min_value && *x < *min_value) type_error(where, key, "must be >= " + real_text(*min_value));
            if (max_value && *x > *max_value) type_error(where, key, "must be <= " + real_text(*max_value));
            access(c) = *x;
          },
          [access](const RunConfig& c) { return real_text(access(const_cast<RunConfig&>(c))); }};
}

Setter bool_ref(bool& (*access)(RunConfig&)) {
  return {[access](RunConfig& c, std::string_view v, std::string_view where, std::string_view key) {
            if (v == "true" || v == "1") {
              access(c) = true;
            } else if (v == "false" || v == "0") {
              access(c) = false;
            } else {
              type_error(where, key, "expected true/false, got '" + std::string(v) + "'");
            }
          },
          [access](const RunConfig& c) {
            return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

Setter string_ref(std::string& (*access)(RunConfig&)) {
  return {[access](RunConfig& c, std::string_view v, std::string_view, std::string_view) {
            access(c) = std::string(v);
          },
          [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

const std::map<std::string, Setter, std::less<>>& registry() {
  static const std::map<std::string, Setter, std::less<>> keys = [] {
    std::map<std::string, Setter, std::less<>> k;
    // run
    k["run.seed"] = {[](RunConfig& c, std::string_view v, std::string_view where, std::string_view key) {
                       const auto x = to_int(v);
                       if (!x || *x < 0) type_error(where, key, "expected a nonnegative integer");
                       c.set_seed(static_cast<std::uint64_t>(*x));
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed()); }};
    // train
    k["train.alpha"] = real_ref([](RunConfig& c) -> double& { return c.train.alpha; }, std::nullopt);
    k["train.beta"] = real_ref([](RunConfig& c) -> double& { return c.train.beta; }, 0.0);
    k["train.lambda_start_epoch"] =
        int_ref<int>([](RunConfig& c) -> int& { return c.train.lambda_start_epoch; }, 1);
    k["train.lambda_start_value"] =
        real_ref([](RunConfig& c) -> double& { return c.train.lambda_start_value; }, 0.0, 1.0);
    k["train.lambda_end_epoch"] =
        int_ref<int>([](RunConfig& c) -> int& { return c.train.lambda_end_epoch; }, 1);
    k["train.warmup_epochs"] = int_ref<int>([](RunConfig& c) -> int& { return c.train.warmup_epochs; }, 0);
    k["train.epochs"] = int_ref<int>([](RunConfig& c) -> int& { return c.train.epochs; }, 0);
    k["train.batch_size"] =
        int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.train.batch_size; }, 2);
    k["train.learning_rate"] =
        real_ref([](RunConfig& c) -> double& { return c.train.learning_rate; }, 0.0);
    k["train.init_offset"] = real_ref([](RunConfig& c) -> double& { return c.train.init_offset; }, std::nullopt);
    k["train.mining_criterion"] = {
        [](RunConfig& c, std::string_view v, std::string_view where, std::string_view key) {
          if (v == "combined") {
            c.train.mining_criterion = MiningCriterion::kCombined;
          } else if (v == "hard_only") {
            c.train.mining_criterion = MiningCriterion::kHardOnly;
          } else {
            type_error(where, key, "expected combined or hard_only, got '" + std::string(v) + "'");
          }
        },
        [](const RunConfig& c) { return std::string(mining_criterion_name(c.train.mining_criterion)); }};
    k["train.experts.dse_text"] = bool_ref([](RunConfig& c) -> bool& { return c.train.experts.dse_text; });
    k["train.experts.dse_video"] = bool_ref([](RunConfig& c) -> bool& { return c.train.experts.dse_video; });
    k["train.experts.sse_text"] = bool_ref([](RunConfig& c) -> bool& { return c.train.experts.sse_text; });
    k["train.experts.sse_video"] = bool_ref([](RunConfig& c) -> bool& { return c.train.experts.sse_video; });
    // model
    k["model.hidden_dim"] =
        int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.train.hidden_dim; }, 0);
    k["model.joint_dim"] =
        int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.train.joint_dim; }, 1);
    // eval
    k["eval.ks"] = {[](RunConfig& c, std::string_view v, std::string_view where, std::string_view key) {
                      std::vector<int> ks;
                      std::string_view rest = v;
                      while (!rest.empty()) {
                        const auto comma = rest.find(',');
                        const std::string item = trim(rest.substr(0, comma));
                        const auto x = to_int(item);
                        if (!x || *x < 1) type_error(where, key, "expected a list of integers >= 1");
                        ks.push_back(static_cast<int>(*x));
                        if (comma == std::string_view::npos) break;
                        rest.remove_prefix(comma + 1);
                      }
                      if (ks.empty()) type_error(where, key, "list must not be empty");
                      c.train.eval_ks = ks;
                    },
                    [](const RunConfig& c) {
                      std::string out;
                      for (std::size_t i = 0; i < c.train.eval_ks.size(); ++i) {
                        if (i > 0) out += ",";
                        out += std::to_string(c.train.eval_ks[i]);
                      }
                      return out;
                    }};
    // data
    k["data.n_items"] = int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.data.n_items; }, 2);
    k["data.n_concepts"] =
        int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.data.n_concepts; }, 0);
    k["data.latent_dim"] = int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.data.latent_dim; }, 1);
    k["data.video_dim"] = int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.data.video_dim; }, 1);
    k["data.text_dim"] = int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.data.text_dim; }, 1);
    k["data.frames_per_video"] =
        int_ref<std::size_t>([](RunConfig& c) -> std::size_t& { return c.data.frames_per_video; }, 1);
    k["data.noise_video"] = real_ref([](RunConfig& c) -> double& { return c.data.noise_video; }, 0.0);
    k["data.noise_text"] = real_ref([](RunConfig& c) -> double& { return c.data.noise_text; }, 0.0);
    k["data.sse_text_noise"] = real_ref([](RunConfig& c) -> double& { return c.data.sse_text_noise; }, 0.0);
    k["data.duplicate_rate"] = real_ref([](RunConfig& c) -> double& { return c.data.duplicate_rate; }, 0.0, 1.0);
    k["data.val_fraction"] = real_ref([](RunConfig& c) -> double& { return c.data.val_fraction; }, 0.0, 0.99);
    // paths
    k["paths.data_dir"] = string_ref([](RunConfig& c) -> std::string& { return c.data_dir; });
    k["paths.out_dir"] = string_ref([](RunConfig& c) -> std::string& { return c.out_dir; });
    return k;
  }();
  return keys;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  data.seed = seed;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value,
                   std::string_view where) {
  const auto& keys = registry();
  const auto it = keys.find(key);
  if (it == keys.end()) {
    fail(ErrorCode::kUnknownKey, std::string(where) + ": unknown key '" + std::string(key) + "'");
  }
  if (value.empty()) {
    fail(ErrorCode::kMissingRequired,
         std::string(where) + ": key '" + std::string(key) + "' requires a value");
  }
  it->second.set(cfg, value, where, key);
}

void validate(const RunConfig& cfg) {
  cfg.train.validate();
  cfg.data.validate();
}

RunConfig parse_config_text(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kMissingRequired, where + ": key '" + line + "' has no '= value'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) fail(ErrorCode::kMissingRequired, where + ": missing key before '='");
    if (!seen.insert(key).second) {
      fail(ErrorCode::kConfigError, where + ": key '" + key + "' set twice");
    }
    apply_setting(cfg, key, value, where);
    if (end == text.size()) break;
  }
  validate(cfg);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string format_resolved_config(const RunConfig& cfg) {
  std::string out = "# resolved configuration (defaults included)\n";
  for (const auto& [key, setter] : registry()) {
    const std::string value = setter.get(cfg);
    if (value.empty()) {
      out += "# " + key + " =\n";
    } else {
      out += key + " = " + value + "\n";
    }
  }
  return out;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [key, setter] : registry()) out.push_back(key);
  return out;
}

}  // namespace marginforge::cli
