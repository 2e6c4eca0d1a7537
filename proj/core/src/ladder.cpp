#include <cstdio>
#include <fstream>
#include <sstream>

#include "c2f/training.hpp"

namespace c2f::train {

using nlohmann::json;
namespace fs = std::filesystem;

LadderConfig::LadderConfig() {
  stage1 = StageConfig::defaults(1);
  stage1.steps = 800;
  stage1.lr = 5e-4;
  stage2 = StageConfig::defaults(2);
  stage2.steps = 250;
  stage2.lr = 2e-4;
  stage3 = StageConfig::defaults(3);
  stage3.steps = 250;
  stage3.lr = 2e-4;
}

uint8_t LadderConfig::model_id(size_t lambda_index, int stage, bool single_stage) const {
  if (single_stage) return static_cast<uint8_t>(13 + (stage - 1));
  return static_cast<uint8_t>(1 + lambda_index * 3 + (stage - 1));
}

void to_json(json& j, const LadderConfig& c) {
  j = json{{"lambdas", c.lambdas}, {"preset", c.preset},   {"stage1", c.stage1},
           {"stage2", c.stage2},   {"stage3", c.stage3},   {"variant_lambda", c.variant_lambda},
           {"seed", c.seed}};
}

void from_json(const json& j, LadderConfig& c) {
  j.at("lambdas").get_to(c.lambdas);
  j.at("preset").get_to(c.preset);
  j.at("stage1").get_to(c.stage1);
  j.at("stage2").get_to(c.stage2);
  j.at("stage3").get_to(c.stage3);
  j.at("variant_lambda").get_to(c.variant_lambda);
  j.at("seed").get_to(c.seed);
}

fs::path ladder_checkpoint(const fs::path& dir, double lambda, int stage, bool single_stage) {
  std::ostringstream name;
  name << (single_stage ? "single" : "c2f") << "_l" << static_cast<int>(lambda) << "_s" << stage
       << ".ckpt";
  return dir / name.str();
}

namespace {

ModelConfig preset_config(const std::string& preset) {
  if (preset == "tiny") return ModelConfig::tiny();
  if (preset == "toy") return ModelConfig::toy();
  if (preset == "standard") return ModelConfig::standard();
  throw Error("unknown model preset '" + preset + "'");
}

void train_chain(const LadderConfig& cfg, const fs::path& dir, size_t lambda_index, double lambda,
                 bool single_stage, const std::function<void(const std::string&)>& progress) {
  const StageConfig* stages[] = {&cfg.stage1, &cfg.stage2, &cfg.stage3};
  PFrameModel model{nullptr};
  json history = json::array();
  for (int stage = 1; stage <= 3; ++stage) {
    const auto path = ladder_checkpoint(dir, lambda, stage, single_stage);
    if (fs::exists(path)) {
      auto loaded = load_checkpoint(path);
      model = loaded.model;
      history = loaded.meta.history;
      continue;
    }
    if (model.is_empty()) {
      torch::manual_seed(cfg.seed);
      auto mc = preset_config(cfg.preset);
      mc.motion.coarse_to_fine = !single_stage;
      model = PFrameModel(mc);
    }
    StageConfig sc = *stages[stage - 1];
    sc.lambda = lambda;
    sc.seed = cfg.seed * 31 + static_cast<uint64_t>(stage);
    sc.model_id = cfg.model_id(lambda_index, stage, single_stage);
    auto log = path;
    log.replace_extension(".jsonl");
    std::remove(log.c_str());
    auto result = train_stage(model, sc, synthetic_sampler(sc), log, history);
    history = result.meta.history;
    save_checkpoint(path, model, result.meta);
    if (progress) {
      std::ostringstream line;
      line << path.filename().string() << ": final loss " << result.losses.back();
      progress(line.str());
    }
  }
}

}  // namespace

void run_ladder(const LadderConfig& cfg, const fs::path& dir,
                const std::function<void(const std::string&)>& progress) {
  fs::create_directories(dir);
  const auto stamp = dir / "ladder.json";
  const json wanted = cfg;
  bool fresh = true;
  if (fs::exists(stamp)) {
    json have;
    std::ifstream(stamp) >> have;
    fresh = have != wanted;
  }
  if (fresh) {
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".ckpt" || entry.path().extension() == ".jsonl")
        fs::remove(entry.path());
    std::ofstream(stamp) << wanted.dump(2) << '\n';
  }
  for (size_t i = 0; i < cfg.lambdas.size(); ++i)
    train_chain(cfg, dir, i, cfg.lambdas[i], false, progress);
  size_t variant_index = 0;
  train_chain(cfg, dir, variant_index, cfg.variant_lambda, true, progress);
}

}  // namespace c2f::train
