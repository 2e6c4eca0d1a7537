#include "c2f/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "c2f/data.hpp"
#include "c2f/metrics.hpp"

namespace c2f {

using nlohmann::json;

void to_json(json& j, const ModelConfig& c) {
  j = json{{"feature_channels", c.motion.feature_channels},
           {"latent_channels", c.motion.latent_channels},
           {"hyper_channels", c.motion.hyper_channels},
           {"mode_hidden", c.motion.mode_hidden},
           {"deform_kernel", c.motion.deform_kernel},
           {"deform_groups", c.motion.deform_groups},
           {"coarse_to_fine", c.motion.coarse_to_fine},
           {"residual_latent_channels", c.residual_latent_channels},
           {"residual_hyper_channels", c.residual_hyper_channels},
           {"skip_hidden", c.skip_hidden},
           {"use_hamc", c.use_hamc},
           {"use_harc", c.use_harc}};
}

void from_json(const json& j, ModelConfig& c) {
  j.at("feature_channels").get_to(c.motion.feature_channels);
  j.at("latent_channels").get_to(c.motion.latent_channels);
  j.at("hyper_channels").get_to(c.motion.hyper_channels);
  j.at("mode_hidden").get_to(c.motion.mode_hidden);
  j.at("deform_kernel").get_to(c.motion.deform_kernel);
  j.at("deform_groups").get_to(c.motion.deform_groups);
  j.at("coarse_to_fine").get_to(c.motion.coarse_to_fine);
  j.at("residual_latent_channels").get_to(c.residual_latent_channels);
  j.at("residual_hyper_channels").get_to(c.residual_hyper_channels);
  j.at("skip_hidden").get_to(c.skip_hidden);
  j.at("use_hamc").get_to(c.use_hamc);
  j.at("use_harc").get_to(c.use_harc);
}

}  // namespace c2f

namespace c2f::train {

using nlohmann::json;

torch::Tensor rd_loss(const RDLossTerms& terms) {
  return terms.bpp() + terms.lambda * terms.distortion;
}

torch::Tensor distortion_mse(const torch::Tensor& x, const torch::Tensor& x_hat) {
  return metrics::mse_255(x, x_hat);
}

torch::Tensor distortion_msssim(const torch::Tensor& x, const torch::Tensor& x_hat) {
  const auto a = x.dim() == 3 ? x.unsqueeze(0) : x;
  const auto b = x_hat.dim() == 3 ? x_hat.unsqueeze(0) : x_hat;
  return 1.0 - metrics::ms_ssim(a, b).mean();
}

namespace {

torch::Tensor distortion_term(Distortion metric, const torch::Tensor& x,
                              const torch::Tensor& x_hat) {
  if (metric == Distortion::MSE) return metrics::mse_unit(x, x_hat).mean();
  return distortion_msssim(x, x_hat.clamp(0.0, 1.0));
}

double frame_weight(const RolloutOptions& options, size_t index) {
  if (options.frame_weights.empty()) return 1.0;
  check_shape(index < options.frame_weights.size(), "rollout: too few frame weights");
  return options.frame_weights[index];
}

}  // namespace

RolloutResult rollout(PFrameModel& model, const torch::Tensor& clip, int64_t n, CodingMode mode,
                      NoiseSource& noise, const RolloutOptions& options) {
  check_shape(clip.dim() == 5 && clip.size(2) == 3, "rollout: expected (N, T, 3, H, W) clips");
  check_shape(n >= 2 && n <= clip.size(1), "rollout: frame count outside [2, clip length]");
  const double pixels = static_cast<double>(clip.size(3) * clip.size(4));
  RolloutResult out;
  torch::Tensor ref = to_8bit_grid(clip.select(1, 0));
  out.recon.push_back(ref);

  for (int64_t t = 1; t < n; ++t) {
    auto cur = clip.select(1, t);
    RDLossTerms terms;
    terms.lambda = options.lambda * frame_weight(options, t - 1);
    torch::Tensor recon;
    if (mode == CodingMode::Train) {
      auto r = model->forward_train(ref, cur, noise, options.gumbel);
      terms.bpp_coarse = r.coarse_bits.mean() / pixels;
      terms.bpp_fine = r.fine_bits.mean() / pixels;
      terms.bpp_residual = r.residual_bits.mean() / pixels;
      recon = r.recon;
    } else {
      check_shape(clip.size(0) == 1, "rollout: Infer mode needs batch size 1");
      auto coded = model->encode(Frame{ref[0]}, Frame{cur[0]});
      const auto& s = coded.segments;
      auto bpp = [&](size_t bytes) { return torch::tensor(8.0 * bytes / pixels); };
      terms.bpp_coarse = bpp(s.coarse.size());
      terms.bpp_fine = bpp(s.fine_hyper.size() + s.fine_main.size());
      terms.bpp_residual = bpp(s.residual_hyper.size() + s.residual_main.size());
      recon = coded.recon.unsqueeze(0);
      out.coded.push_back(coded.segments);
    }
    terms.distortion = distortion_term(options.metric, cur, recon);
    auto loss = rd_loss(terms);
    out.loss = t == 1 ? loss : out.loss + loss;
    out.terms.push_back(terms);
    out.recon.push_back(recon);
    ref = recon;
  }
  out.loss = out.loss / static_cast<double>(n - 1);
  return out;
}

StageConfig StageConfig::defaults(int stage) {
  StageConfig c;
  c.stage = stage;
  switch (stage) {
    case 1:
      c.frames = 2;
      c.steps = 20000;
      break;
    case 2:
      c.frames = 5;
      c.steps = 5000;
      break;
    case 3:
      c.frames = 5;
      c.steps = 5000;
      break;
    default:
      throw Error("stage must be 1, 2 or 3");
  }
  return c;
}

void StageConfig::validate() const {
  if (stage < 1 || stage > 3) throw Error("stage config: stage must be 1, 2 or 3");
  if (frames < 2) throw Error("stage config: frames must be >= 2");
  if (steps < 1 || batch < 1) throw Error("stage config: steps and batch must be positive");
  if (crop < kPadMultiple || crop % kPadMultiple != 0)
    throw Error("stage config: crop must be a positive multiple of 32");
  if (!(lr > 0) || !(lambda >= 0)) throw Error("stage config: lr must be > 0 and lambda >= 0");
  if (log_every < 1) throw Error("stage config: log_every must be positive");
}

NLOHMANN_JSON_SERIALIZE_ENUM(Distortion, {{Distortion::MSE, "mse"}, {Distortion::MSSSIM, "msssim"}})

void to_json(json& j, const StageConfig& c) {
  j = json{{"stage", c.stage},       {"frames", c.frames},     {"steps", c.steps},
           {"batch", c.batch},       {"crop", c.crop},         {"lr", c.lr},
           {"lr_decay", c.lr_decay}, {"decay_at", c.decay_at}, {"lambda", c.lambda},
           {"metric", c.metric},     {"seed", c.seed},         {"log_every", c.log_every},
           {"model_id", c.model_id}};
}

void from_json(const json& j, StageConfig& c) {
  c = StageConfig::defaults(j.at("stage").get<int>());
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("frames", c.frames);
  read("steps", c.steps);
  read("batch", c.batch);
  read("crop", c.crop);
  read("lr", c.lr);
  read("lr_decay", c.lr_decay);
  read("decay_at", c.decay_at);
  read("lambda", c.lambda);
  read("metric", c.metric);
  read("seed", c.seed);
  read("log_every", c.log_every);
  read("model_id", c.model_id);
  c.validate();
}

StageConfig load_stage_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stage config " + path.string());
  return json::parse(in).get<StageConfig>();
}

double learning_rate(const StageConfig& cfg, int64_t step) {
  double lr = cfg.lr;
  for (double f : cfg.decay_at)
    if (static_cast<double>(step) >= f * static_cast<double>(cfg.steps)) lr *= cfg.lr_decay;
  return lr;
}

ClipSampler synthetic_sampler(const StageConfig& cfg) {
  return [cfg](int64_t step) {
    std::vector<torch::Tensor> clips;
    for (int64_t b = 0; b < cfg.batch; ++b) {
      const uint64_t seed = cfg.seed * 1000003ULL + static_cast<uint64_t>(step * cfg.batch + b);
      auto sc = data::random_synth_config(seed, cfg.crop, cfg.crop, cfg.frames);
      clips.push_back(data::gen_synthetic(sc).clip.frames);
    }
    return torch::stack(clips);
  };
}

namespace {

constexpr char kCheckpointMagic[4] = {'C', '2', 'F', 'K'};
constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>(v >> (8 * i)));
}

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = in.get();
    if (c == EOF) throw Error("checkpoint: truncated header");
    v |= static_cast<uint32_t>(c) << (8 * i);
  }
  return v;
}

json meta_to_json(const CheckpointMeta& meta) {
  return json{{"config", meta.config},   {"stage", meta.stage},     {"step", meta.step},
              {"lambda", meta.lambda},   {"metric", meta.metric},   {"model_id", meta.model_id},
              {"history", meta.history}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, PFrameModel& model,
                     const CheckpointMeta& meta) {
  auto params = model->named_parameters(true);
  json table = json::array();
  for (const auto& item : params) table.push_back({{"name", item.key()}, {"shape", item.value().sizes().vec()}});
  json header = meta_to_json(meta);
  header["tensors"] = table;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& item : params) {
      auto data = item.value().detach().to(torch::kFloat32).contiguous();
      out.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
                static_cast<std::streamsize>(data.numel() * sizeof(float)));
    }
    if (!out) throw Error("checkpoint write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw Error("not a checkpoint: " + path.string());
  const uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  std::string text(get_u32(in), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (!in) throw Error("checkpoint: truncated header");
  const json header = json::parse(text);

  LoadedModel out;
  header.at("config").get_to(out.meta.config);
  header.at("stage").get_to(out.meta.stage);
  header.at("step").get_to(out.meta.step);
  header.at("lambda").get_to(out.meta.lambda);
  header.at("metric").get_to(out.meta.metric);
  header.at("model_id").get_to(out.meta.model_id);
  out.meta.history = header.at("history");
  out.model = PFrameModel(out.meta.config);

  auto params = out.model->named_parameters(true);
  torch::NoGradGuard no_grad;
  size_t loaded = 0;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto* target = params.find(name);
    if (!target) throw Error("checkpoint: unknown parameter " + name);
    if (target->sizes().vec() != shape) throw Error("checkpoint: shape mismatch for " + name);
    auto data = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(data.data_ptr<float>()),
            static_cast<std::streamsize>(data.numel() * sizeof(float)));
    if (!in) throw Error("checkpoint: truncated parameter data at " + name);
    target->copy_(data);
    ++loaded;
  }
  if (loaded != params.size()) throw Error("checkpoint: missing parameters");
  out.model->eval();
  out.model->freeze();
  return out;
}

namespace {

void dump_nonfinite(const std::optional<std::filesystem::path>& log_path, PFrameModel& model,
                    const StageConfig& cfg, int64_t step, const RolloutResult& r) {
  json dump{{"step", step}, {"stage", cfg.stage}, {"lambda", cfg.lambda}};
  json frames = json::array();
  for (const auto& t : r.terms)
    frames.push_back({{"bpp_coarse", t.bpp_coarse.item<double>()},
                      {"bpp_fine", t.bpp_fine.item<double>()},
                      {"bpp_residual", t.bpp_residual.item<double>()},
                      {"distortion", t.distortion.item<double>()}});
  dump["frames"] = frames;
  json bad = json::array();
  for (const auto& item : model->named_parameters(true))
    if (!torch::isfinite(item.value()).all().item<bool>()) bad.push_back(item.key());
  dump["nonfinite_parameters"] = bad;
  const auto path = log_path ? log_path->parent_path() / "nonfinite_dump.json"
                             : std::filesystem::path("nonfinite_dump.json");
  std::ofstream(path) << dump.dump(2) << '\n';
}

}  // namespace

StageResult train_stage(PFrameModel& model, const StageConfig& cfg, const ClipSampler& sampler,
                        const std::optional<std::filesystem::path>& log_path, json history) {
  cfg.validate();
  model->set_mode_prediction(cfg.mode_prediction(), cfg.mode_prediction());
  model->train();
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(cfg.lr));
  std::ofstream log;
  if (log_path) {
    if (log_path->has_parent_path()) std::filesystem::create_directories(log_path->parent_path());
    log.open(*log_path, std::ios::app);
  }

  RolloutOptions options;
  options.lambda = cfg.lambda;
  options.metric = cfg.metric;
  StageResult result;
  NoiseSource noise;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const double lr = learning_rate(cfg, step);
    for (auto& group : optimizer.param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    noise.reset(cfg.seed * 7919ULL + static_cast<uint64_t>(step));
    auto clip = sampler(step);
    if (!torch::isfinite(clip).all().item<bool>()) {
      dump_nonfinite(log_path, model, cfg, step, {});
      throw TrainingError("non-finite input clip at step " + std::to_string(step));
    }
    RolloutResult r;
    try {
      r = rollout(model, clip, cfg.frames, CodingMode::Train, noise, options);
    } catch (const c10::Error& e) {
      dump_nonfinite(log_path, model, cfg, step, {});
      throw TrainingError("forward pass failed at step " + std::to_string(step) + ": " +
                          e.what_without_backtrace());
    }
    const double loss = r.loss.item<double>();
    if (!std::isfinite(loss)) {
      dump_nonfinite(log_path, model, cfg, step, r);
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }
    optimizer.zero_grad();
    r.loss.backward();
    optimizer.step();
    result.losses.push_back(loss);

    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      double coarse = 0, fine = 0, residual = 0, distortion = 0, mse = 0;
      for (size_t i = 0; i < r.terms.size(); ++i) {
        coarse += r.terms[i].bpp_coarse.item<double>();
        fine += r.terms[i].bpp_fine.item<double>();
        residual += r.terms[i].bpp_residual.item<double>();
        distortion += r.terms[i].distortion.item<double>();
        mse += metrics::mse_255(clip.select(1, i + 1), r.recon[i + 1].detach()).item<double>();
      }
      const double k = static_cast<double>(r.terms.size());
      json record{{"stage", cfg.stage},
                  {"step", step + 1},
                  {"lr", lr},
                  {"lambda", cfg.lambda},
                  {"loss", loss},
                  {"bpp_coarse", coarse / k},
                  {"bpp_fine", fine / k},
                  {"bpp_residual", residual / k},
                  {"distortion", distortion / k},
                  {"psnr", metrics::psnr_from_mse255(mse / k)}};
      history.push_back(record);
      if (log) log << record.dump() << '\n' << std::flush;
    }
  }
  model->eval();
  model->freeze();

  result.meta.config = model->config();
  result.meta.stage = cfg.stage;
  result.meta.step = cfg.steps;
  result.meta.lambda = cfg.lambda;
  result.meta.metric = cfg.metric;
  result.meta.model_id = cfg.model_id;
  result.meta.history = std::move(history);
  return result;
}

}  // namespace c2f::train
