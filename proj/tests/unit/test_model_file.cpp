#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "strack/model_file.hpp"
#include "test_util.hpp"

using namespace strack;

namespace {

bool same_bits(const Grid& a, const Grid& b) {
  if (a.shape() != b.shape()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

Model odd_model() {
  TrackerConfig cfg;
  cfg.fusion = FusionMode::sum;
  cfg.switches.pooling = Pooling::gap;
  cfg.search_scale = 4.0 + 1.0 / 3.0;
  cfg.classifier.lambda1 = 0.1 + 0.2;
  cfg.seed = std::numeric_limits<std::uint64_t>::max();
  Model m = make_model(cfg, 17);
  // Values that a decimal round trip would not preserve.
  m.estimator.head.b2[0] = -0.0;
  m.estimator.head.b1[0] = std::numeric_limits<double>::denorm_min();
  m.estimator.fam_deep.amplification = std::nextafter(2.0, 3.0);
  m.estimator.fam_shallow.attn_bias = -1e-300;
  m.estimator.fam_shallow.fusion_conv.reset();
  return m;
}

}  // namespace

TEST_CASE("model file round trip is bit exact") {
  const Model m = odd_model();
  const std::string bytes = serialize_model(m);
  CHECK(bytes.rfind("STRACK-MODEL 1\n", 0) == 0);
  const Model back = deserialize_model(bytes);
  CHECK(back == m);
  CHECK(same_bits(back.estimator.head.b2, m.estimator.head.b2));
  CHECK(std::signbit(back.estimator.head.b2[0]));
  CHECK(back.estimator.fam_deep.amplification == std::nextafter(2.0, 3.0));
  CHECK_FALSE(back.estimator.fam_shallow.fusion_conv.has_value());
  CHECK(serialize_model(back) == bytes);

  const auto dir = strack::testing::scratch_dir("model");
  save_model(dir / "m.bin", m);
  CHECK(load_model(dir / "m.bin") == m);
}

TEST_CASE("model file rejects other versions and damaged files") {
  const std::string bytes = serialize_model(make_model(TrackerConfig{}, 1));
  std::string v2 = bytes;
  v2[13] = '2';
  CHECK_THROWS_WITH_AS(deserialize_model(v2), doctest::Contains("version"), FormatError);
  CHECK_THROWS_AS(deserialize_model("STRACK-MODEL\npayload 0\n"), FormatError);
  CHECK_THROWS_AS(deserialize_model("P6\n"), FormatError);
  CHECK_THROWS_WITH_AS(deserialize_model(bytes.substr(0, bytes.size() - 3)), doctest::Contains("payload"),
                       FormatError);
  CHECK_THROWS_AS(deserialize_model(bytes + "x"), FormatError);

  std::string renamed = bytes;
  renamed.replace(renamed.find("config.channels"), 15, "config.chamnels");
  CHECK_THROWS_WITH_AS(deserialize_model(renamed), doctest::Contains("config.channels"), FormatError);
  CHECK_THROWS_AS(load_model("/nonexistent/model.bin"), FormatError);
}
