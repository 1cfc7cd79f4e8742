#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "marginforge/data.hpp"
#include "marginforge/error.hpp"
#include "test_support.hpp"

using namespace marginforge;

namespace {

SynthConfig small(double rho, std::uint64_t seed = 1) {
  SynthConfig c;
  c.n_items = 40;
  c.duplicate_rate = rho;
  c.latent_dim = 4;
  c.video_dim = 6;
  c.text_dim = 5;
  c.frames_per_video = 3;
  c.seed = seed;
  return c;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kNumericError;
}

}  // namespace

TEST(Generate, ShapesSplitsAndTables) {
  const Dataset ds = generate(small(0.5));
  EXPECT_NO_THROW(ds.validate());
  EXPECT_EQ(ds.size(), 40u);
  EXPECT_EQ(ds.video_dim(), 6u);
  EXPECT_EQ(ds.text_dim(), 5u);
  EXPECT_EQ(ds.frames[0].rows(), 3u);
  EXPECT_TRUE(ds.labeled());
  EXPECT_EQ(std::set<std::string>(ds.ids.begin(), ds.ids.end()).size(), 40u);
  std::set<std::size_t> all(ds.train.begin(), ds.train.end());
  for (std::size_t i : ds.val) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 40u);
  EXPECT_EQ(ds.val.size(), 10u);
  for (const auto& id : ds.ids) {
    EXPECT_TRUE(ds.sse_video.contains(id));
    EXPECT_TRUE(ds.sse_text.contains(id));
  }
  // The video SSE table holds the pooled frames.
  EXPECT_EQ(ds.sse_video.at(ds.ids[3]), mean_pool(ds.frames[3]));
}

TEST(Generate, DeterministicPerSeed) {
  EXPECT_EQ(generate(small(0.5, 7)), generate(small(0.5, 7)));
  EXPECT_NE(generate(small(0.5, 7)).text, generate(small(0.5, 8)).text);
}

TEST(Generate, RealizedDuplicateRate) {
  for (double rho : {0.0, 0.1, 0.25, 0.5, 0.77, 1.0}) {
    for (std::size_t n : {10u, 41u, 512u}) {
      SynthConfig c = small(rho);
      c.n_items = n;
      const Dataset ds = generate(c);
      EXPECT_LE(std::abs(realized_duplicate_rate(ds) - rho), 1.0 / n + 1e-12) << rho << " " << n;
    }
  }
}

TEST(Generate, FullDuplicationGivesPairs) {
  SynthConfig c = small(1.0);
  c.n_concepts = 20;
  const Dataset ds = generate(c);
  for (const auto& eq : ground_truth_equivalents(ds)) EXPECT_EQ(eq.size(), 1u);
}

TEST(Generate, NoiselessSeparation) {
  SynthConfig c = small(0.5);
  c.noise_video = 0.0;
  c.noise_text = 0.0;
  const Dataset ds = generate(c);
  std::vector<Matrix> frames = ds.frames;
  const DistanceMatrix d = sse_video_distances(frames);
  double min_cross = 2.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.size(); ++j) {
      if (i == j) continue;
      if (ds.concepts[i] == ds.concepts[j]) {
        EXPECT_NEAR(d(i, j), 0.0, 1e-12);
      } else {
        min_cross = std::min(min_cross, d(i, j));
      }
    }
  }
  EXPECT_GT(min_cross, 1e-6);
}

TEST(Equivalents, MatchBruteForce) {
  const Dataset ds = generate(small(0.6, 3));
  const auto eq = ground_truth_equivalents(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::string> expect;
    for (std::size_t j = 0; j < ds.size(); ++j) {
      if (j != i && ds.concepts[j] == ds.concepts[i]) expect.push_back(ds.ids[j]);
    }
    EXPECT_EQ(eq[i], expect);
  }
  for (const auto& e : ground_truth_equivalents(generate(small(0.0)))) EXPECT_TRUE(e.empty());
}

TEST(SynthConfigValidation, RejectsBadValues) {
  auto bad = [](auto mutate) {
    SynthConfig c = small(0.5);
    mutate(c);
    return code_of([&] { c.validate(); });
  };
  EXPECT_EQ(bad([](SynthConfig& c) { c.n_items = 1; }), ErrorCode::kConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.duplicate_rate = 1.5; }), ErrorCode::kConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.noise_text = -0.1; }), ErrorCode::kConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.video_dim = 0; }), ErrorCode::kConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.n_concepts = 41; }), ErrorCode::kConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.val_fraction = 1.0; }), ErrorCode::kConfigError);
}

TEST(DatasetFiles, RoundTripIsExact) {
  mf_test::TempDir dir;
  const Dataset ds = generate(small(0.5, 4));
  write_dataset(ds, dir.path());
  EXPECT_EQ(load_dataset(dir.path()), ds);
}

TEST(DatasetFiles, SameSeedSameBytes) {
  mf_test::TempDir a, b;
  write_dataset(generate(small(0.5, 4)), a.path());
  write_dataset(generate(small(0.5, 4)), b.path());
  for (const char* f : {"MANIFEST", "items.txt", "frames.frm", "text.emb", "sse_video.emb", "sse_text.emb"}) {
    EXPECT_EQ(mf_test::slurp(a / f), mf_test::slurp(b / f)) << f;
  }
}

TEST(DatasetFiles, MissingManifestAndCorruption) {
  mf_test::TempDir dir;
  write_dataset(generate(small(0.5, 4)), dir.path());
  std::string text = mf_test::slurp(dir / "text.emb");
  const auto pos = text.find('.', text.find('\n'));
  text[pos - 1] = text[pos - 1] == '1' ? '2' : '1';
  mf_test::spit(dir / "text.emb", text);
  EXPECT_EQ(code_of([&] { load_dataset(dir.path()); }), ErrorCode::kChecksumError);

  std::filesystem::remove(dir / "MANIFEST");
  EXPECT_EQ(code_of([&] { load_dataset(dir.path()); }), ErrorCode::kParseError);
}

TEST(Hex, LowercaseSixteenDigits) {
  EXPECT_EQ(to_hex64(0xABCDEF0123456789ULL), "abcdef0123456789");
  EXPECT_EQ(to_hex64(1), "0000000000000001");
}
