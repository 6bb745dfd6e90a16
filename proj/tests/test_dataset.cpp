#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "adathresh/dataset.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / ("adt_dataset_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const fs::path& p) { return adt::detail::read_file(p.string()); }

adt::Error load_error(const std::string& features, const std::string& labels) {
  const auto dir = temp_dir();
  write(dir / "f.txt", features);
  write(dir / "l.txt", labels);
  try {
    adt::load_dataset((dir / "f.txt").string(), (dir / "l.txt").string());
  } catch (const adt::Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected load_dataset to throw";
  return adt::Error(adt::ErrorCode::io, "none");
}

}  // namespace

TEST(LoadDataset, ParsesHeaderAndRows) {
  const auto dir = temp_dir();
  write(dir / "f.txt", "2 3 4\n0:1.5 2:0.5\n1:2.0\n");
  write(dir / "l.txt", "0,3\n1\n");
  const auto ds = adt::load_dataset((dir / "f.txt").string(), (dir / "l.txt").string());
  EXPECT_EQ(ds.features.n_samples(), 2u);
  EXPECT_EQ(ds.features.n_features(), 3u);
  EXPECT_EQ(ds.labels.n_labels(), 4u);
  ASSERT_EQ(ds.features.row(0).size(), 2u);
  EXPECT_EQ(ds.features.row(0)[1], (adt::FeatureEntry{2, 0.5}));
  EXPECT_EQ(ds.features.row(1)[0], (adt::FeatureEntry{1, 2.0}));
  EXPECT_EQ(std::vector<adt::LabelIndex>(ds.labels.row(0).begin(), ds.labels.row(0).end()),
            (std::vector<adt::LabelIndex>{0, 3}));
  EXPECT_TRUE(ds.labels.contains(1, 1));
}

TEST(LoadDataset, BlankLinesAreEmptyRows) {
  const auto dir = temp_dir();
  write(dir / "f.txt", "3 2 2\n0:1\n\n1:1\n");
  write(dir / "l.txt", "\n1\n\n");
  const auto ds = adt::load_dataset((dir / "f.txt").string(), (dir / "l.txt").string());
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_TRUE(ds.features.row(1).empty());
  EXPECT_TRUE(ds.labels.row(0).empty());
  EXPECT_TRUE(ds.labels.row(2).empty());
}

TEST(LoadDataset, DuplicateLabelReportsLine) {
  const auto e = load_error("2 2 2\n0:1\n1:1\n", "1\n0,0\n");
  EXPECT_EQ(e.code(), adt::ErrorCode::duplicate_label);
  EXPECT_EQ(e.line(), 2u);
  EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
}

TEST(LoadDataset, FeatureIndexOutOfRange) {
  const auto e = load_error("1 3 2\n5:1.0\n", "0\n");
  EXPECT_EQ(e.code(), adt::ErrorCode::out_of_range);
  EXPECT_EQ(e.line(), 2u);
}

TEST(LoadDataset, LabelIndexOutOfRange) {
  const auto e = load_error("1 3 2\n0:1.0\n", "2\n");
  EXPECT_EQ(e.code(), adt::ErrorCode::out_of_range);
  EXPECT_EQ(e.line(), 1u);
}

TEST(LoadDataset, MalformedLines) {
  EXPECT_EQ(load_error("2 3 2\n0:1.0\n1-2.0\n", "0\n1\n").line(), 3u);
  EXPECT_EQ(load_error("2 3 2\n0:1.0\n1:abc\n", "0\n1\n").code(), adt::ErrorCode::parse);
  EXPECT_EQ(load_error("2 3\n0:1\n0:1\n", "0\n1\n").line(), 1u);
  EXPECT_EQ(load_error("1 3 2\n0:1\n", "0;1\n").code(), adt::ErrorCode::parse);
  // indices must be strictly increasing within a row
  EXPECT_EQ(load_error("1 3 2\n2:1 1:1\n", "0\n").line(), 2u);
  EXPECT_EQ(load_error("1 3 2\n0:nan\n", "0\n").code(), adt::ErrorCode::non_finite);
}

TEST(LoadDataset, InconsistentSampleCounts) {
  EXPECT_EQ(load_error("2 3 2\n0:1\n1:1\n", "0\n").code(), adt::ErrorCode::inconsistent);
  EXPECT_EQ(load_error("3 3 2\n0:1\n1:1\n", "0\n1\n0\n").code(), adt::ErrorCode::inconsistent);
}

TEST(LoadDataset, MissingFile) {
  try {
    adt::load_dataset("/nonexistent/f.txt", "/nonexistent/l.txt");
    FAIL();
  } catch (const adt::Error& e) {
    EXPECT_EQ(e.code(), adt::ErrorCode::io);
  }
}

TEST(ComputeStats, IdfValues) {
  adt::LabelMatrix ubiquitous(1);
  for (int i = 0; i < 4; ++i) ubiquitous.push_row(std::vector<adt::LabelIndex>{0});
  const auto s4 = adt::compute_stats(ubiquitous, 1e-12);
  EXPECT_NEAR(s4.idf[0], 0.0, 1e-12);

  // label 0 in one row, label 1 never; N = 1000
  adt::LabelMatrix m(2);
  m.push_row(std::vector<adt::LabelIndex>{0});
  for (int i = 1; i < 1000; ++i) m.push_row(std::vector<adt::LabelIndex>{});
  const auto s = adt::compute_stats(m, 1e-12);
  EXPECT_EQ(s.n_samples, 1000u);
  EXPECT_EQ(s.label_freq, (std::vector<std::size_t>{1, 0}));
  // reference values from a 40-digit evaluation of ln(1000/(1+1e-12)), ln(1000/1e-12)
  EXPECT_NEAR(s.idf[0], 6.907755278981137, 1e-12);
  EXPECT_NEAR(s.idf[1], 34.538776394910685, 1e-12);
}

TEST(ComputeStats, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(adt::compute_stats(adt::LabelMatrix(2), 0.0), adt::Error);
}

TEST(ComputeStats, FrequencySumAndMonotonicity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t l = 1 + rng() % 12;
    adt::LabelMatrix m(l);
    const std::size_t n = 1 + rng() % 40;
    std::bernoulli_distribution on(0.3);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<adt::LabelIndex> row;
      for (std::size_t k = 0; k < l; ++k)
        if (on(rng)) row.push_back(static_cast<adt::LabelIndex>(k));
      m.push_row(row);
    }
    const auto s = adt::compute_stats(m);
    std::size_t total = 0;
    for (auto f : s.label_freq) total += f;
    EXPECT_EQ(total, m.total_positives());
    for (std::size_t a = 0; a < l; ++a) {
      EXPECT_DOUBLE_EQ(s.idf[a], std::log(static_cast<double>(n) /
                                          (static_cast<double>(s.label_freq[a]) + s.epsilon)));
      for (std::size_t b = 0; b < l; ++b)
        if (s.label_freq[a] < s.label_freq[b]) {
          EXPECT_GT(s.idf[a], s.idf[b]);
        }
    }
  }
}

TEST(GenerateSynthetic, RankFrequencyNonIncreasing) {
  adt::SyntheticSpec spec;
  spec.zipf_exponent = 1.2;
  spec.n_labels = 100;
  spec.n_samples = 2000;
  const auto ds = adt::generate_synthetic(spec);
  const auto s = adt::compute_stats(ds.labels);
  for (std::size_t l = 1; l < spec.n_labels; ++l) EXPECT_LE(s.label_freq[l], s.label_freq[l - 1]);
  for (auto f : s.label_freq) EXPECT_GE(f, 1u);
  EXPECT_GT(s.label_freq.front(), 10 * s.label_freq.back());
}

TEST(GenerateSynthetic, Deterministic) {
  adt::SyntheticSpec spec;
  spec.n_samples = 300;
  spec.n_labels = 40;
  const auto dir = temp_dir();
  adt::write_dataset(adt::generate_synthetic(spec), (dir / "a.f").string(), (dir / "a.l").string());
  adt::write_dataset(adt::generate_synthetic(spec), (dir / "b.f").string(), (dir / "b.l").string());
  EXPECT_EQ(slurp(dir / "a.f"), slurp(dir / "b.f"));
  EXPECT_EQ(slurp(dir / "a.l"), slurp(dir / "b.l"));
  spec.seed += 1;
  EXPECT_NE(adt::generate_synthetic(spec), adt::generate_synthetic(adt::SyntheticSpec{
                                               300, 40, 1000, 1.2, 3.0, 42}));
}

TEST(GenerateSynthetic, PositiveCountNearTarget) {
  adt::SyntheticSpec spec;
  spec.n_samples = 2000;
  spec.mean_labels_per_sample = 3.0;
  const auto ds = adt::generate_synthetic(spec);
  const double total = static_cast<double>(ds.labels.total_positives());
  EXPECT_GE(total, 0.85 * 6000);
  EXPECT_LE(total, 1.15 * 6000);
}

TEST(GenerateSynthetic, FeaturesAreUnitNormAndValid) {
  adt::SyntheticSpec spec;
  spec.n_samples = 200;
  const auto ds = adt::generate_synthetic(spec);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NEAR(ds.features.row_norm(i), 1.0, 1e-12);
}

TEST(TfidfTransform, HandValues) {
  adt::SparseFeatureMatrix m(3);
  m.push_row(std::vector<adt::FeatureEntry>{{0, 1.0}, {1, 1.0}});
  m.push_row(std::vector<adt::FeatureEntry>{{1, 2.0}});
  m.push_row(std::vector<adt::FeatureEntry>{{1, 1.0}, {2, 4.0}});
  m.push_row(std::vector<adt::FeatureEntry>{{1, 1.0}});
  // df = [1, 4, 1] over N = 4: feature 1 is everywhere and drops out.
  const auto t = adt::tfidf_transform(m);
  ASSERT_EQ(t.n_samples(), 4u);
  EXPECT_EQ(t.row(0).size(), 1u);
  EXPECT_EQ(t.row(0)[0], (adt::FeatureEntry{0, 1.0}));
  EXPECT_TRUE(t.row(1).empty());
  EXPECT_EQ(t.row(2)[0], (adt::FeatureEntry{2, 1.0}));

  adt::SparseFeatureMatrix u(2);
  u.push_row(std::vector<adt::FeatureEntry>{{0, 1.0}, {1, 1.0}});
  u.push_row(std::vector<adt::FeatureEntry>{{1, 1.0}});
  u.push_row(std::vector<adt::FeatureEntry>{{0, 3.0}});
  // idf = [ln 1.5, ln 1.5]: row 0 keeps its direction, rows 1 and 2 become unit.
  const auto v = adt::tfidf_transform(u);
  EXPECT_NEAR(v.row(0)[0].value, std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(v.row(0)[1].value, std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(v.row(2)[0].value, 1.0, 1e-12);
}

TEST(GenerateSynthetic, RejectsBadSpec) {
  adt::SyntheticSpec spec;
  spec.mean_labels_per_sample = 500;  // > n_labels
  EXPECT_THROW(adt::generate_synthetic(spec), adt::Error);
  spec = {};
  spec.zipf_exponent = 0.0;
  EXPECT_THROW(adt::generate_synthetic(spec), adt::Error);
}

TEST(TrainEvalSplit, SizesAndClamp) {
  adt::SyntheticSpec spec;
  spec.n_samples = 10;
  spec.n_labels = 5;
  spec.mean_labels_per_sample = 1.0;
  const auto ds = adt::generate_synthetic(spec);
  const auto split = adt::train_eval_split(ds, 0.2, 3);
  EXPECT_EQ(split.train.size(), 8u);
  EXPECT_EQ(split.eval.size(), 2u);

  const auto two = ds.select(std::vector<std::size_t>{0, 1});
  const auto clamped = adt::train_eval_split(two, 0.999, 3);
  EXPECT_EQ(clamped.train.size(), 1u);
  EXPECT_EQ(clamped.eval.size(), 1u);

  EXPECT_THROW(adt::train_eval_split(ds.select(std::vector<std::size_t>{0}), 0.5, 1), adt::Error);
  EXPECT_THROW(adt::train_eval_split(ds, 1.0, 1), adt::Error);
}

TEST(TrainEvalSplit, DisjointCoverAndDeterministic) {
  adt::SyntheticSpec spec;
  spec.n_samples = 97;
  spec.n_labels = 10;
  const auto ds = adt::generate_synthetic(spec);
  const auto a = adt::train_eval_split(ds, 0.3, 11);
  const auto b = adt::train_eval_split(ds, 0.3, 11);
  EXPECT_EQ(a.eval_rows, b.eval_rows);
  EXPECT_EQ(a.train, b.train);
  std::vector<int> seen(ds.size(), 0);
  for (auto r : a.train_rows) ++seen[r];
  for (auto r : a.eval_rows) ++seen[r];
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_NE(adt::train_eval_split(ds, 0.3, 12).eval_rows, a.eval_rows);
}

// Property: generate -> write -> load is the identity across specs.
TEST(DatasetFormat, RoundTrip) {
  const auto dir = temp_dir();
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    adt::SyntheticSpec spec;
    spec.seed = seed;
    spec.n_samples = 50 + 37 * seed;
    spec.n_labels = 3 + 11 * seed;
    spec.n_features = 20 + 13 * seed;
    spec.signature_size = 4;
    spec.mean_labels_per_sample = 1.0 + 0.5 * static_cast<double>(seed);
    const auto ds = adt::generate_synthetic(spec);
    adt::write_dataset(ds, (dir / "rt.f").string(), (dir / "rt.l").string());
    const auto back = adt::load_dataset((dir / "rt.f").string(), (dir / "rt.l").string());
    EXPECT_EQ(back, ds) << "seed " << seed;
  }
}
