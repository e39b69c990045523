#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "mmrec/log.hpp"
#include "mmrec/modality.hpp"
#include "mmrec/rng.hpp"
#include "support/tempdir.hpp"

using namespace mmrec;

namespace {

ModalityFeatures features(Modality m, std::vector<std::string> ids,
                          std::initializer_list<std::initializer_list<float>> rows) {
  ModalityFeatures f;
  f.modality = m;
  f.ids = std::move(ids);
  f.values = Matrix<float>::from_rows(rows);
  return f;
}

ModalityFeatures decode(const std::string& bytes, Modality m = Modality::kVisual) {
  std::istringstream in(bytes);
  return read_features(in, m, FeatureFormat::kBinary, "fixture");
}

}  // namespace

TEST_CASE("binary features round-trip exactly") {
  const auto f = features(Modality::kVisual, {"a", "bb"}, {{1.5f, -0.1f, 3e-8f}, {0.0f, 7.0f, -2.25f}});
  const auto bytes = encode_features(f);
  const auto header = std::string(R"({"modality":"visual","dim":3,"count":2})") + "\n";
  CHECK(bytes.substr(0, header.size()) == header);
  // Two records: 2 + id + 12 payload bytes each.
  CHECK(bytes.size() == header.size() + (2 + 1 + 12) + (2 + 2 + 12));
  CHECK(static_cast<unsigned char>(bytes[header.size()]) == 1);
  CHECK(bytes[header.size() + 1] == 0);

  const auto back = decode(bytes);
  CHECK(back.ids == f.ids);
  CHECK(back.values == f.values);
  CHECK(back.dim() == 3);

  testing::TempDir dir;
  write_features(f, dir / "v.bin");
  CHECK(load_features(dir / "v.bin", Modality::kVisual).values == f.values);
}

TEST_CASE("binary feature errors") {
  const auto f = features(Modality::kTextual, {"a", "b"}, {{1.0f, 2.0f}, {3.0f, 4.0f}});
  const auto bytes = encode_features(f);
  CHECK_THROWS_WITH_AS(decode(bytes.substr(0, bytes.size() - 3), Modality::kTextual),
                       doctest::Contains("expected at least 22 bytes, got 19"), ParseError);
  CHECK_THROWS_WITH_AS(decode(bytes + "x", Modality::kTextual), doctest::Contains("trailing"),
                       ParseError);
  CHECK_THROWS_WITH_AS(decode(bytes, Modality::kVisual), doctest::Contains("textual"), ParseError);

  const auto dup = features(Modality::kVisual, {"a", "a"}, {{1.0f}, {2.0f}});
  CHECK_THROWS_WITH_AS(decode(encode_features(dup)), doctest::Contains("duplicate"), ParseError);

  const auto bad = features(Modality::kVisual, {"a"}, {{NAN}});
  CHECK_THROWS_WITH_AS(decode(encode_features(bad)), doctest::Contains("non-finite"), ParseError);
  CHECK_THROWS_AS(decode("not json\n"), ParseError);
  CHECK_THROWS_AS(decode(""), ParseError);
}

TEST_CASE("visual features at full width are accepted and bound") {
  Rng rng(1);
  ModalityFeatures f;
  f.modality = Modality::kVisual;
  f.ids = {"i1", "i2", "i3"};
  f.values = Matrix<float>(3, 4096);
  for (auto& v : f.values.values()) v = static_cast<float>(rng.normal());
  const auto back = decode(encode_features(f));
  CHECK(back.dim() == 4096);
  const MultimodalStore store(IdMap::from_ids({"i1", "i2", "i3"}), {back});
  CHECK(store.dim(Modality::kVisual) == 4096);
  CHECK(store.extract(2, Modality::kVisual)[4095] == f.values(2, 4095));
}

TEST_CASE("text feature format") {
  std::istringstream in("a\t1\t2\nb\t3\t4.5\n");
  const auto f = read_features(in, Modality::kAudio, FeatureFormat::kText);
  CHECK(f.values == Matrix<float>::from_rows({{1, 2}, {3, 4.5f}}));
  std::istringstream ragged("a\t1\t2\nb\t3\n");
  CHECK_THROWS_WITH_AS(read_features(ragged, Modality::kAudio, FeatureFormat::kText, "fx"),
                       doctest::Contains("fx:2:"), ParseError);
}

TEST_CASE("l2_standardize") {
  auto f = features(Modality::kVisual, {"a", "b", "c"}, {{3, 4}, {0.6f, 0.8f}, {0, 0}});
  std::size_t zeros = 0;
  const auto before = log::warning_count();
  const auto out = l2_standardize(f, &zeros);
  CHECK(out.values(0, 0) == doctest::Approx(0.6));
  CHECK(out.values(0, 1) == doctest::Approx(0.8));
  CHECK(out.values(1, 0) == doctest::Approx(0.6f));
  CHECK(out.values(2, 0) == 0.0f);
  CHECK(out.values(2, 1) == 0.0f);
  CHECK(zeros == 1);
  CHECK(log::warning_count() == before + 1);

  Rng rng(5);
  ModalityFeatures g;
  g.ids.resize(50);
  g.values = Matrix<float>(50, 7);
  for (auto& v : g.values.values()) v = static_cast<float>(rng.normal() * 10);
  const auto n = l2_standardize(g);
  for (std::size_t r = 0; r < 50; ++r) {
    double norm = 0;
    for (auto v : n.values.row(r)) norm += v * v;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("store binding, masks and missing policies") {
  const auto items = IdMap::from_ids({"i0", "i1", "i2"});
  const auto visual = features(Modality::kVisual, {"i2", "i0", "i1", "gone"},
                               {{1, 1}, {2, 2}, {3, 3}, {9, 9}});
  const auto audio = features(Modality::kAudio, {"i0", "i2"}, {{1, 2, 3}, {5, 6, 7}});

  const MultimodalStore strict(items, {visual, audio});
  CHECK(strict.extract(0, Modality::kVisual) == std::vector<float>{2, 2});
  CHECK(strict.available(1, Modality::kVisual));
  CHECK_FALSE(strict.available(1, Modality::kAudio));
  CHECK(strict.missing_count(Modality::kAudio) == 1);
  CHECK_THROWS_WITH(strict.extract(1, Modality::kAudio),
                    doctest::Contains("'i1' has no audio"));
  CHECK_THROWS(strict.matrix(Modality::kAudio));
  CHECK_THROWS_AS(strict.extract(0, Modality::kTextual), std::invalid_argument);

  const MultimodalStore mean(items, {visual, audio}, MissingPolicy::kMeanImpute);
  CHECK(mean.extract(1, Modality::kAudio) == std::vector<float>{3, 4, 5});
  CHECK(mean.extract(2, Modality::kAudio) == std::vector<float>{5, 6, 7});
  const auto m = mean.matrix(Modality::kAudio);
  CHECK(m(1, 2) == 5.0f);
  CHECK(m(0, 0) == 1.0f);

  const MultimodalStore zero(items, {visual, audio}, MissingPolicy::kZeroFill);
  CHECK(zero.extract(1, Modality::kAudio) == std::vector<float>{0, 0, 0});
  CHECK(zero.extract(2, Modality::kAudio) == std::vector<float>{5, 6, 7});

  const MultimodalStore normalized(items, {visual}, MissingPolicy::kError, true);
  CHECK(normalized.extract(0, Modality::kVisual)[0] == doctest::Approx(std::sqrt(0.5)));

  CHECK_THROWS_AS(MultimodalStore(items, {visual, visual}), std::invalid_argument);
}

TEST_CASE("mask equals recomputed presence") {
  Rng rng(2);
  std::vector<std::string> all;
  for (int i = 0; i < 30; ++i) all.push_back("item" + std::to_string(i));
  const auto items = IdMap::from_ids(all);
  ModalityFeatures f;
  f.modality = Modality::kTextual;
  for (const auto& id : all)
    if (rng.bernoulli(0.6)) f.ids.push_back(id);
  f.values = Matrix<float>(f.ids.size(), 3, 1.0f);
  const MultimodalStore store(items, {f}, MissingPolicy::kZeroFill);
  for (std::uint32_t i = 0; i < items.size(); ++i) {
    const bool present = std::find(f.ids.begin(), f.ids.end(), items.id(i)) != f.ids.end();
    CHECK(store.available(i, Modality::kTextual) == present);
    if (present) CHECK(store.extract(i, Modality::kTextual) == std::vector<float>{1, 1, 1});
  }
}

TEST_CASE("modality and policy names") {
  CHECK(parse_modality("audio") == Modality::kAudio);
  CHECK_THROWS_AS(parse_modality("smell"), std::invalid_argument);
  CHECK(parse_missing_policy("mean_impute") == MissingPolicy::kMeanImpute);
  CHECK(to_string(MissingPolicy::kZeroFill) == "zero_fill");
}
