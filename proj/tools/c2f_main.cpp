#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <iterator>

#include "c2f/codec.hpp"
#include "c2f/rd_curve.hpp"
#include "c2f/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace c2f;

namespace {

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& path, std::span<const uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

// A path ending in ".c2fc" is a raw clip file; anything else is a PNG directory.
void save_clip(const data::Clip& clip, const fs::path& path) {
  if (path.extension() == ".c2fc") {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    data::save_raw_clip(clip, path);
  } else {
    data::save_png_sequence(clip, path);
  }
}

codec::CodecModel load_model(const fs::path& path) {
  auto loaded = train::load_checkpoint(path);
  return {loaded.model, loaded.meta.model_id};
}

json stats_json(const codec::FrameStats& s) {
  return {{"bpp", s.bpp},           {"bpp_overhead", s.bpp_overhead},
          {"bpp_intra", s.bpp_intra}, {"bpp_coarse", s.bpp_coarse},
          {"bpp_fine", s.bpp_fine},   {"bpp_residual", s.bpp_residual},
          {"psnr", s.psnr},           {"ms_ssim", s.ms_ssim}};
}

json rd_json(const codec::RDStats& stats) {
  json frames = json::array();
  for (const auto& f : stats.frames) frames.push_back(stats_json(f));
  return {{"mean", stats_json(stats.mean)},
          {"frames", frames},
          {"file_bytes", stats.file_bytes},
          {"header_bytes", stats.header_bytes}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c2f: learned video codec with coarse-to-fine motion compensation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic clip");
  data::SynthConfig sc;
  fs::path synth_out;
  synth->add_option("--out", synth_out, "PNG directory or .c2fc file")->required();
  synth->add_option("--seed", sc.seed, "Random seed");
  synth->add_option("--frames", sc.frames, "Frame count");
  synth->add_option("--width", sc.width, "Width in pixels");
  synth->add_option("--height", sc.height, "Height in pixels");
  synth->add_option("--dx", sc.global_dx, "Global horizontal motion, pixels per frame");
  synth->add_option("--dy", sc.global_dy, "Global vertical motion, pixels per frame");
  synth->add_option("--objects", sc.objects, "Number of moving objects");
  synth->add_option("--object-speed", sc.object_speed, "Largest object speed, pixels per frame");
  bool synth_random = false;
  synth->add_flag("--random-motion", synth_random, "Draw motion parameters from the seed");

  // encode
  auto* encode = app.add_subcommand("encode", "Encode a clip into a bitstream");
  fs::path enc_in, enc_model, enc_out, enc_alt;
  int enc_gop = 10;
  encode->add_option("input", enc_in, "PNG/PPM directory or .c2fc file")->required();
  encode->add_option("--model", enc_model, "Checkpoint")->required();
  encode->add_option("--alt-model", enc_alt, "Checkpoint used for every 4th P-frame");
  encode->add_option("--gop", enc_gop, "GoP size");
  encode->add_option("--out", enc_out, "Output bitstream")->required();
  fs::path enc_recon;
  encode->add_option("--recon", enc_recon, "Also write the encoder-side reconstruction");

  // decode
  auto* decode = app.add_subcommand("decode", "Decode a bitstream");
  fs::path dec_in, dec_model, dec_out, dec_alt;
  bool dec_conceal = false;
  decode->add_option("input", dec_in, "Bitstream")->required();
  decode->add_option("--model", dec_model, "Checkpoint")->required();
  decode->add_option("--alt-model", dec_alt, "Alternate checkpoint");
  decode->add_option("--out", dec_out, "PNG directory or .c2fc file")->required();
  decode->add_flag("--conceal", dec_conceal, "Repeat the last good frame on corrupt P-frames");

  // eval
  auto* eval = app.add_subcommand("eval", "Rate-distortion statistics of a decoded clip");
  fs::path ev_orig, ev_recon, ev_stream, ev_out;
  eval->add_option("original", ev_orig, "Original clip")->required();
  eval->add_option("recon", ev_recon, "Decoded clip")->required();
  eval->add_option("stream", ev_stream, "Bitstream")->required();
  eval->add_option("--out", ev_out, "Write JSON here instead of stdout");

  // train
  auto* trainc = app.add_subcommand("train", "Run one training stage");
  fs::path tr_cfg, tr_model, tr_out, tr_log;
  std::optional<double> tr_lambda;
  std::optional<uint64_t> tr_seed;
  std::string tr_preset = "toy";
  bool tr_single = false;
  trainc->add_option("--stage-config", tr_cfg, "Stage config JSON")->required();
  trainc->add_option("--model", tr_model, "Parent checkpoint (required for stages 2 and 3)");
  trainc->add_option("--lambda", tr_lambda, "Override the config's lambda");
  trainc->add_option("--seed", tr_seed, "Override the config's seed");
  trainc->add_option("--preset", tr_preset, "Width preset for a new model: tiny, toy, standard")
      ->check(CLI::IsMember({"tiny", "toy", "standard"}));
  trainc->add_flag("--single-stage", tr_single, "New model without the coarse motion branch");
  trainc->add_option("--out", tr_out, "Output checkpoint")->required();
  trainc->add_option("--log", tr_log, "Metrics log (JSON lines)");

  // curve
  auto* curve = app.add_subcommand("curve", "RD curve of several models on one clip");
  fs::path cv_clip, cv_out;
  std::vector<fs::path> cv_models;
  std::string cv_label = "model";
  int cv_gop = 10;
  bool cv_msssim = false;
  curve->add_option("clip", cv_clip, "Test clip")->required();
  curve->add_option("--model", cv_models, "Checkpoints, one per rate point")->required();
  curve->add_option("--gop", cv_gop, "GoP size");
  curve->add_option("--label", cv_label, "Curve label");
  curve->add_flag("--msssim", cv_msssim, "Use MS-SSIM as the quality axis");
  curve->add_option("--out", cv_out, "SVG output (a .tsv table is written next to it)")->required();

  // bdrate
  auto* bdrate = app.add_subcommand("bdrate", "Bjontegaard deltas between two curves");
  fs::path bd_anchor, bd_test;
  std::string bd_anchor_label, bd_test_label;
  bdrate->add_option("anchor", bd_anchor, "RD table of the anchor")->required();
  bdrate->add_option("test", bd_test, "RD table of the test curve")->required();
  bdrate->add_option("--anchor-label", bd_anchor_label, "Curve to use from the anchor table");
  bdrate->add_option("--test-label", bd_test_label, "Curve to use from the test table");

  // ladder
  auto* ladder = app.add_subcommand("ladder", "Train the full lambda ladder, resuming a cache");
  fs::path ld_dir, ld_cfg;
  ladder->add_option("--out", ld_dir, "Checkpoint directory")->required();
  ladder->add_option("--config", ld_cfg, "Ladder config JSON (defaults otherwise)");
  bool ld_dump = false;
  ladder->add_flag("--print-config", ld_dump, "Print the effective config and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      if (synth_random) sc = data::random_synth_config(sc.seed, sc.height, sc.width, sc.frames);
      save_clip(data::gen_synthetic(sc).clip, synth_out);
    } else if (*encode) {
      const auto clip = data::load_clip(enc_in);
      codec::EncodeOptions options;
      options.gop = enc_gop;
      if (!enc_alt.empty()) options.alt = load_model(enc_alt);
      auto result = codec::encode_video(clip, load_model(enc_model), options);
      write_file(enc_out, result.bytes);
      if (!enc_recon.empty()) save_clip(result.recon, enc_recon);
      std::cout << result.bytes.size() << " bytes, " << clip.size() << " frames\n";
    } else if (*decode) {
      codec::DecodeOptions options;
      options.conceal_errors = dec_conceal;
      if (!dec_alt.empty()) options.alt = load_model(dec_alt);
      const auto bytes = read_file(dec_in);
      auto result = codec::decode_video(bytes, load_model(dec_model), options);
      for (const auto& msg : result.concealed) std::cerr << "concealed: " << msg << '\n';
      save_clip(result.frames, dec_out);
    } else if (*eval) {
      const auto stats = codec::evaluate(data::load_clip(ev_orig), data::load_clip(ev_recon),
                                         read_file(ev_stream));
      const auto text = rd_json(stats).dump(2);
      if (ev_out.empty()) {
        std::cout << text << '\n';
      } else {
        std::ofstream(ev_out) << text << '\n';
      }
    } else if (*trainc) {
      auto cfg = train::load_stage_config(tr_cfg);
      if (tr_lambda) cfg.lambda = *tr_lambda;
      if (tr_seed) cfg.seed = *tr_seed;
      cfg.validate();
      PFrameModel model{nullptr};
      json history = json::array();
      if (!tr_model.empty()) {
        auto parent = train::load_checkpoint(tr_model);
        if (parent.meta.stage != cfg.stage - 1 && parent.meta.stage != cfg.stage)
          throw Error("stage " + std::to_string(cfg.stage) + " needs a stage " +
                      std::to_string(cfg.stage - 1) + " parent, got stage " +
                      std::to_string(parent.meta.stage));
        model = parent.model;
        history = parent.meta.history;
      } else {
        if (cfg.stage != 1) throw Error("stages 2 and 3 need --model with the parent checkpoint");
        torch::manual_seed(cfg.seed);
        auto mc = tr_preset == "tiny"       ? ModelConfig::tiny()
                  : tr_preset == "standard" ? ModelConfig::standard()
                                            : ModelConfig::toy();
        mc.motion.coarse_to_fine = !tr_single;
        model = PFrameModel(mc);
      }
      std::optional<fs::path> log;
      if (!tr_log.empty()) log = tr_log;
      auto result = train::train_stage(model, cfg, train::synthetic_sampler(cfg), log, history);
      train::save_checkpoint(tr_out, model, result.meta);
      std::cout << "final loss " << result.losses.back() << '\n';
    } else if (*curve) {
      const auto clip = data::load_clip(cv_clip);
      rd::RDCurve rd_curve{cv_label, {}};
      for (const auto& path : cv_models) {
        auto model = load_model(path);
        codec::EncodeOptions options;
        options.gop = cv_gop;
        auto enc = codec::encode_video(clip, model, options);
        auto stats = codec::evaluate(clip, enc.recon, enc.bytes);
        rd_curve.points.push_back({stats.mean.bpp, cv_msssim ? stats.mean.ms_ssim : stats.mean.psnr});
        std::cout << path.string() << '\t' << stats.mean.bpp << '\t' << rd_curve.points.back().quality
                  << '\n';
      }
      std::sort(rd_curve.points.begin(), rd_curve.points.end(),
                [](const rd::RDPoint& a, const rd::RDPoint& b) { return a.bpp < b.bpp; });
      rd::plot_rd({rd_curve}, cv_out, cv_msssim ? "MS-SSIM" : "PSNR (dB)");
    } else if (*ladder) {
      train::LadderConfig cfg;
      if (!ld_cfg.empty()) {
        std::ifstream in(ld_cfg);
        if (!in) throw Error("cannot open " + ld_cfg.string());
        cfg = json::parse(in).get<train::LadderConfig>();
      }
      if (ld_dump) {
        std::cout << json(cfg).dump(2) << '\n';
        return 0;
      }
      train::run_ladder(cfg, ld_dir, [](const std::string& line) { std::cout << line << std::endl; });
    } else if (*bdrate) {
      auto pick = [](const fs::path& path, const std::string& label) {
        auto curves = rd::read_rd_table(path);
        if (curves.empty()) throw Error("no curves in " + path.string());
        if (label.empty()) return curves.front();
        for (auto& c : curves)
          if (c.label == label) return c;
        throw Error("no curve '" + label + "' in " + path.string());
      };
      const auto anchor = pick(bd_anchor, bd_anchor_label);
      const auto test = pick(bd_test, bd_test_label);
      std::cout << "BD-rate " << rd::bd_rate(anchor, test) << " %\n"
                << "BD-quality " << rd::bd_quality(anchor, test) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
