#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "facecap/config.hpp"

using namespace facecap;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

PipelineConfig custom() {
  PipelineConfig c;
  c.seed = 17;
  c.simulation.frames = 300;
  c.simulation.style = facesim::WeightStyle::speech;
  c.simulation.denominator = facesim::DenominatorMode::paper_literal;
  c.simulation.tap_frame = -1;
  c.simulation.accel_noise = 0.05;
  c.calibration.acc_head_comp = calib::AccHeadComp::inverse;
  c.calibration.threads = 3;
  c.stream.port = 50123;
  c.stream.jitter_us = 250.0;
  c.stream.drop_fraction = 0.01;
  c.training.model.layers = 2;
  c.training.model.heads = 2;
  c.training.epochs = 5;
  c.training.adam.lr = 2e-4;
  c.training.schedule.steps = 200;
  c.eval_sequences = 1;
  c.inference.overlap = 10;
  return c;
}

}  // namespace

TEST_CASE("defaults survive an empty document") {
  CHECK(config_from_json(nlohmann::json::object()) == PipelineConfig{});
  CHECK(config_from_json(parse_toml("")) == PipelineConfig{});
}

TEST_CASE("json round trip") {
  const auto c = custom();
  const auto j = config_to_json(c);
  CHECK(config_from_json(j) == c);
  CHECK(config_to_json(config_from_json(j)) == j);
}

TEST_CASE("toml round trip") {
  const auto c = custom();
  const auto text = config_to_toml(c);
  const auto back = config_from_json(parse_toml(text));
  CHECK(back == c);
  CHECK(config_to_toml(back) == text);
}

TEST_CASE("load_config picks the parser by extension") {
  const auto c = custom();
  const auto t = write_temp("facecap_cfg_test.toml", config_to_toml(c));
  const auto j = write_temp("facecap_cfg_test.json", config_to_json(c).dump());
  CHECK(load_config(t) == c);
  CHECK(load_config(j) == c);
  fs::remove(t);
  fs::remove(j);
  CHECK_THROWS_AS(load_config(fs::temp_directory_path() / "facecap_missing.toml"), IoError);
}

TEST_CASE("partial toml overrides only named keys") {
  const auto c = config_from_json(parse_toml("seed = 4\n[stream]\nport = 9000\n"));
  CHECK(c.seed == 4);
  CHECK(c.stream.port == 9000);
  CHECK(c.stream.host == "127.0.0.1");
  CHECK(c.simulation == SimulationSettings{});
}

TEST_CASE("schema violations are format errors") {
  CHECK_THROWS_AS(config_from_json(parse_toml("bogus = 1\n")), FormatError);
  CHECK_THROWS_AS(config_from_json(parse_toml("[stream]\nprot = 1\n")), FormatError);
  CHECK_THROWS_AS(config_from_json(parse_toml("[nonsense]\n")), FormatError);
  CHECK_THROWS_AS(config_from_json(parse_toml("[stream]\nport = \"x\"\n")), FormatError);
  CHECK_THROWS_AS(config_from_json(parse_toml("[stream]\ndrop_fraction = 1.5\n")), FormatError);
  CHECK_THROWS_AS(config_from_json(parse_toml("[simulation]\ndenominator = \"cubic\"\n")),
                  FormatError);
  CHECK_THROWS_AS(config_from_json(parse_toml("[model]\nwindow = 10\n[inference]\noverlap = 10\n")),
                  FormatError);
  CHECK_THROWS_AS(parse_toml("[stream\nport = 1\n"), FormatError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), FormatError);

  const auto bad = write_temp("facecap_cfg_bad.json", "{\"seed\": ");
  CHECK_THROWS_AS(load_config(bad), FormatError);
  fs::remove(bad);
  const auto norig = write_temp("facecap_cfg_rig.toml", "[rig]\npath = \"/nonexistent/rig.json\"\n");
  CHECK_THROWS_AS(load_config(norig), IoError);
  fs::remove(norig);
}

TEST_CASE("enum parsing") {
  CHECK(parse_acc_head_comp("literal") == calib::AccHeadComp::literal);
  CHECK(parse_acc_head_comp("inverse") == calib::AccHeadComp::inverse);
  CHECK(parse_denominator("squared") == facesim::DenominatorMode::squared);
  CHECK(parse_denominator("paper_literal") == facesim::DenominatorMode::paper_literal);
  CHECK(parse_orientation("orthonormal") == facesim::OrientationMode::orthonormal);
  CHECK(parse_orientation("paper_literal") == facesim::OrientationMode::paper_literal);
  CHECK_THROWS_AS(parse_acc_head_comp("both"), std::invalid_argument);
  CHECK_THROWS_AS(parse_orientation(""), std::invalid_argument);
  for (auto m : {calib::AccHeadComp::literal, calib::AccHeadComp::inverse}) {
    CHECK(parse_acc_head_comp(to_string(m)) == m);
  }
  CHECK(facesim::parse_weight_style(facesim::to_string(facesim::WeightStyle::speech)) ==
        facesim::WeightStyle::speech);
}

TEST_CASE("training document round trip") {
  diffusion::TrainConfig t;
  t.epochs = 12;
  t.batch_size = 4;
  t.model.positional = false;
  t.schedule.beta_end = 0.03;
  CHECK(train_config_from_document(train_config_to_document(t)) == t);
}
