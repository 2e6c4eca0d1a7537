#include "doctest_torch.hpp"

#include <fstream>

#include "c2f/data.hpp"
#include "c2f/training.hpp"
#include "probes.hpp"

using namespace c2f;
using namespace c2f::train;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("c2f_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

StageConfig tiny_stage(int stage) {
  auto cfg = StageConfig::defaults(stage);
  cfg.steps = 2;
  cfg.batch = 1;
  cfg.crop = 32;
  cfg.frames = 3;
  cfg.log_every = 1;
  return cfg;
}

}  // namespace

TEST_CASE("gradient probes match central differences") {
  for (auto& probe : testing::gradient_probes()) {
    const double err = testing::directional_grad_error(probe.f, probe.inputs, 3);
    INFO(probe.name << " relative error " << err);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("rd_loss adds rate and weighted distortion") {
  RDLossTerms t;
  t.bpp_coarse = torch::tensor(0.1);
  t.bpp_fine = torch::tensor(0.2);
  t.bpp_residual = torch::tensor(0.3);
  t.distortion = torch::tensor(0.001);
  t.lambda = 1024;
  CHECK(rd_loss(t).item<double>() == doctest::Approx(0.6 + 1.024));
  CHECK(t.bpp().item<double>() == doctest::Approx(0.6));
  auto x = torch::zeros({1, 3, 4, 4});
  CHECK(distortion_mse(x, x + 0.1).item<double>() == doctest::Approx(650.25));
  CHECK(distortion_msssim(x + 0.5, x + 0.5).item<double>() == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("stage configs: defaults, JSON and validation") {
  CHECK(StageConfig::defaults(1).frames == 2);
  CHECK(StageConfig::defaults(2).frames == 5);
  CHECK(StageConfig::defaults(3).mode_prediction());
  CHECK_FALSE(StageConfig::defaults(2).mode_prediction());
  CHECK_THROWS_AS(StageConfig::defaults(4), Error);

  auto cfg = StageConfig::defaults(2);
  cfg.lambda = 512;
  cfg.metric = Distortion::MSSSIM;
  cfg.model_id = 9;
  nlohmann::json j = cfg;
  auto back = j.get<StageConfig>();
  CHECK(nlohmann::json(back) == j);

  auto dir = temp_dir("cfg");
  std::ofstream(dir / "s.json") << R"({"stage": 3, "steps": 10, "lambda": 2048})";
  auto loaded = load_stage_config(dir / "s.json");
  CHECK(loaded.stage == 3);
  CHECK(loaded.steps == 10);
  CHECK(loaded.frames == 5);
  std::ofstream(dir / "bad.json") << R"({"stage": 1, "frames": 1})";
  CHECK_THROWS_AS(load_stage_config(dir / "bad.json"), Error);
  std::ofstream(dir / "garbage.json") << "{";
  CHECK_THROWS(load_stage_config(dir / "garbage.json"));
}

TEST_CASE("learning rate steps down at the decay points") {
  auto cfg = StageConfig::defaults(1);
  cfg.steps = 100;
  cfg.lr = 1e-3;
  CHECK(learning_rate(cfg, 0) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 74) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 75) == doctest::Approx(2e-4));
  CHECK(learning_rate(cfg, 95) == doctest::Approx(4e-5));
}

TEST_CASE("synthetic sampler is deterministic per step") {
  auto cfg = tiny_stage(1);
  auto sampler = synthetic_sampler(cfg);
  auto a = sampler(3);
  CHECK(a.sizes() == at::IntArrayRef({1, 3, 3, 32, 32}));
  CHECK(torch::equal(a, sampler(3)));
  CHECK_FALSE(torch::equal(a, sampler(4)));
}

TEST_CASE("rollout in both modes") {
  torch::manual_seed(0);
  PFrameModel model(ModelConfig::tiny());
  auto clip = synthetic_sampler(tiny_stage(1))(0);
  NoiseSource noise(1);
  RolloutOptions options;
  auto tr = rollout(model, clip, 3, CodingMode::Train, noise, options);
  CHECK(tr.terms.size() == 2);
  CHECK(tr.recon.size() == 3);
  CHECK(tr.loss.requires_grad());
  CHECK_THROWS_AS(rollout(model, clip, 9, CodingMode::Train, noise, options), ShapeError);

  model->eval();
  model->freeze();
  torch::NoGradGuard ng;
  auto inf = rollout(model, clip, 3, CodingMode::Infer, noise, options);
  CHECK(inf.coded.size() == 2);
  CHECK(std::isfinite(inf.loss.item<double>()));
}

TEST_CASE("train_stage logs, checkpoints roundtrip, and non-finite losses abort") {
  auto dir = temp_dir("train");
  torch::manual_seed(2);
  PFrameModel model(ModelConfig::tiny());
  auto cfg = tiny_stage(1);
  auto result = train_stage(model, cfg, synthetic_sampler(cfg), dir / "log.jsonl");
  CHECK(result.losses.size() == 2);
  CHECK(result.meta.step == 2);
  CHECK(result.meta.history.size() == 2);
  std::ifstream log(dir / "log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    auto rec = nlohmann::json::parse(line);
    CHECK(rec.contains("psnr"));
    CHECK(rec.contains("bpp_fine"));
    ++lines;
  }
  CHECK(lines == 2);

  save_checkpoint(dir / "m.ckpt", model, result.meta);
  auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.meta.stage == 1);
  CHECK(loaded.meta.history == result.meta.history);
  auto a = model->named_parameters();
  auto b = loaded.model->named_parameters();
  REQUIRE(a.size() == b.size());
  for (const auto& item : a) CHECK(torch::equal(item.value(), b[item.key()]));

  auto clip = data::gen_synthetic({}).clip;
  torch::NoGradGuard ng;
  auto e1 = model->encode(clip.frame(0), clip.frame(1));
  auto e2 = loaded.model->encode(clip.frame(0), clip.frame(1));
  CHECK(e1.segments.residual_main == e2.segments.residual_main);
  CHECK(torch::equal(e1.recon, e2.recon));

  std::ofstream(dir / "bad.ckpt") << "C2FKxx";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);

  auto nan_sampler = [&](int64_t) { return torch::full({1, 3, 3, 32, 32}, NAN); };
  torch::manual_seed(3);
  PFrameModel fresh(ModelConfig::tiny());
  CHECK_THROWS_AS(train_stage(fresh, cfg, nan_sampler, dir / "nan" / "log.jsonl"), TrainingError);
  CHECK(fs::exists(dir / "nan" / "nonfinite_dump.json"));
}

TEST_CASE("ladder config JSON and checkpoint names") {
  LadderConfig cfg;
  nlohmann::json j = cfg;
  CHECK(nlohmann::json(j.get<LadderConfig>()) == j);
  CHECK(cfg.model_id(0, 1, false) == 1);
  CHECK(cfg.model_id(3, 3, false) == 12);
  CHECK(cfg.model_id(0, 1, true) == 13);
  CHECK(ladder_checkpoint("d", 512, 2, false) == fs::path("d/c2f_l512_s2.ckpt"));
}
