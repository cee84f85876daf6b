// mgs: a size-aware codec for 3D Gaussian Splatting checkpoints.
//
// Subcommands: encode, decode, search, info, render-eval, synth. Every
// command prints a single JSON document on stdout; logs go to stderr.
// Exit codes: 0 ok, 2 parse error, 3 infeasible budget, 4 I/O error,
// 5 container error.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "mgs/codec.hpp"
#include "mgs/io.hpp"
#include "mgs/search.hpp"
#include "mgs/synth.hpp"

namespace {

using nlohmann::json;

struct CommonFlags {
  unsigned threads = 0;
  uint64_t seed = 0;
};

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--threads", flags.threads, "worker thread cap (default: hardware)");
  app->add_option("--seed", flags.seed, "deterministic seed")->default_val(0);
}

void apply_common(const CommonFlags& flags, mgs::EncodeConfig& enc) {
  if (flags.threads > 0) mgs::set_thread_count(flags.threads);
  enc.seed = flags.seed;
}

void add_codec_flags(CLI::App* app, mgs::EncodeConfig& enc, std::string& norm) {
  app->add_option("--depth", enc.depth, "octree depth (1..21)")->default_val(12);
  app->add_option("--blocks", enc.blocks, "quantization blocks per channel")->default_val(40);
  app->add_option("--codebook", enc.codebook, "SH codebook size k")->default_val(4096);
  app->add_option("--beta", enc.beta, "view-independent importance exponent")->default_val(0.1);
  app->add_option("--kmeans-iters", enc.kmeans_iters, "clustering iterations")->default_val(10);
  app->add_option("--norm", norm, "loss norm: l1, l2, linf")->default_val("l2");
}

mgs::NormKind parse_norm(const std::string& name) {
  if (name == "l1") return mgs::NormKind::L1;
  if (name == "l2") return mgs::NormKind::L2;
  if (name == "linf") return mgs::NormKind::Linf;
  throw mgs::ParseError("unknown norm: " + name);
}

std::vector<mgs::Camera> load_cameras_opt(const std::string& path) {
  if (path.empty()) return {};
  auto bytes = mgs::read_file(path);
  return mgs::cameras_from_json(std::string(bytes.begin(), bytes.end()));
}

json section_summary(const mgs::BuildResult& r) {
  static const char* names[] = {"octree",        "transform_flags", "dc_coefficients",
                                "group_records", "sh_codebook",     "metadata"};
  json sections;
  for (size_t i = 0; i < mgs::kSectionCount; ++i) sections[names[i]] = r.section_sizes[i];
  return sections;
}

void emit(const json& doc) { std::cout << doc.dump(2) << "\n"; }

int dispatch(int argc, char** argv) {
  CLI::App app{"size-aware 3D gaussian splatting codec"};
  app.require_subcommand(1);

  // --- encode ---
  auto* cmd_encode = app.add_subcommand("encode", "compress a PLY checkpoint");
  struct {
    std::string input, output, cameras, q_file, budget, norm = "l2";
    double tau = 1.0;
    int bits = 8;
    mgs::EncodeConfig enc;
    CommonFlags common;
  } enc_args;
  cmd_encode->add_option("input", enc_args.input, "input .ply")->required();
  cmd_encode->add_option("-o,--output", enc_args.output, "output container")->required();
  cmd_encode->add_option("--cameras", enc_args.cameras, "training cameras JSON");
  cmd_encode->add_option("--tau", enc_args.tau, "reserve ratio in [0,1]")->default_val(1.0);
  cmd_encode->add_option("--bits", enc_args.bits, "uniform bit-width (1..16)")->default_val(8);
  cmd_encode->add_option("--q-file", enc_args.q_file, "JSON bit-width matrix (overrides --bits)");
  cmd_encode->add_option("--budget", enc_args.budget,
                         "optional byte budget for SH retention (e.g. 8MB)");
  add_codec_flags(cmd_encode, enc_args.enc, enc_args.norm);
  add_common(cmd_encode, enc_args.common);

  // --- decode ---
  auto* cmd_decode = app.add_subcommand("decode", "decompress a container to PLY");
  struct {
    std::string input, output, reference;
    CommonFlags common;
  } dec_args;
  cmd_decode->add_option("input", dec_args.input, "input container")->required();
  cmd_decode->add_option("-o,--output", dec_args.output, "output .ply")->required();
  cmd_decode->add_option("--reference", dec_args.reference,
                         "original .ply for reconstruction stats");
  add_common(cmd_decode, dec_args.common);

  // --- search ---
  auto* cmd_search = app.add_subcommand("search", "auto-configure tau and bit-widths to a budget");
  struct {
    std::string input, output, cameras, budget, report, tau_grid, norm = "l2";
    mgs::SearchConfig cfg;
    CommonFlags common;
  } search_args;
  cmd_search->add_option("input", search_args.input, "input .ply")->required();
  cmd_search->add_option("-o,--output", search_args.output, "output container")->required();
  cmd_search->add_option("--cameras", search_args.cameras, "training cameras JSON");
  cmd_search->add_option("--budget", search_args.budget, "target size (e.g. 8MB)")->required();
  cmd_search->add_option("--report", search_args.report, "write the search report JSON here");
  cmd_search->add_option("--tau-grid", search_args.tau_grid, "comma-separated tau candidates");
  cmd_search->add_option("--tolerance", search_args.cfg.tolerance, "relative size tolerance")
      ->default_val(0.05);
  cmd_search
      ->add_option("--max-rounds", search_args.cfg.max_calibration_rounds,
                   "calibration rounds per tau")
      ->default_val(8);
  add_codec_flags(cmd_search, search_args.cfg.enc, search_args.norm);
  add_common(cmd_search, search_args.common);

  // --- info ---
  auto* cmd_info = app.add_subcommand("info", "describe a container");
  struct {
    std::string input;
    CommonFlags common;
  } info_args;
  cmd_info->add_option("input", info_args.input, "input container")->required();
  add_common(cmd_info, info_args.common);

  // --- render-eval ---
  auto* cmd_eval = app.add_subcommand("render-eval", "PSNR of a container vs the original model");
  struct {
    std::string model, container, cameras;
    CommonFlags common;
  } eval_args;
  cmd_eval->add_option("model", eval_args.model, "original .ply")->required();
  cmd_eval->add_option("container", eval_args.container, "compressed container")->required();
  cmd_eval->add_option("--cameras", eval_args.cameras, "cameras JSON")->required();
  add_common(cmd_eval, eval_args.common);

  // --- synth ---
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic scene");
  struct {
    size_t n = 100000;
    std::string out_ply, out_cameras;
    CommonFlags common;
  } synth_args;
  cmd_synth->add_option("-n,--count", synth_args.n, "gaussian count")->default_val(100000);
  cmd_synth->add_option("-o,--output", synth_args.out_ply, "output .ply")->required();
  cmd_synth->add_option("--cameras-out", synth_args.out_cameras, "output cameras JSON")
      ->required();
  add_common(cmd_synth, synth_args.common);

  app.parse(argc, argv);

  if (cmd_encode->parsed()) {
    apply_common(enc_args.common, enc_args.enc);
    enc_args.enc.norm = parse_norm(enc_args.norm);
    if (enc_args.bits < 1 || enc_args.bits > mgs::kMaxBits)
      throw mgs::ParseError("--bits must be in 1..16");
    if (!(enc_args.tau > 0.0 && enc_args.tau <= 1.0))
      throw mgs::ParseError("--tau must be in (0,1]");
    auto cloud = mgs::load_ply(mgs::read_file(enc_args.input));
    auto cameras = load_cameras_opt(enc_args.cameras);
    mgs::BitWidthMatrix q =
        enc_args.q_file.empty()
            ? mgs::BitWidthMatrix::uniform(mgs::kChannelCount, size_t(enc_args.enc.blocks),
                                           enc_args.bits)
            : [&] {
                auto bytes = mgs::read_file(enc_args.q_file);
                return mgs::q_matrix_from_json(std::string(bytes.begin(), bytes.end()));
              }();
    if (q.channels != mgs::kChannelCount) throw mgs::ParseError("Q matrix must have 10 rows");
    double budget = enc_args.budget.empty() ? 0 : mgs::parse_byte_size(enc_args.budget);
    auto built = mgs::encode_fixed(cloud, cameras, enc_args.tau, q, enc_args.enc, budget);
    mgs::write_file(enc_args.output, built.bytes);
    emit(json{{"output", enc_args.output},
              {"gaussians_in", cloud.count},
              {"total_bytes", built.bytes.size()},
              {"payload_bytes", built.payload_bytes},
              {"sections", section_summary(built)}});
    return 0;
  }

  if (cmd_decode->parsed()) {
    if (dec_args.common.threads > 0) mgs::set_thread_count(dec_args.common.threads);
    auto decoded = mgs::decode_container(mgs::read_file(dec_args.input));
    mgs::write_file(dec_args.output, mgs::save_ply(decoded.cloud));
    json doc{{"output", dec_args.output},
             {"gaussians", decoded.cloud.count},
             {"sh_degree", decoded.cloud.sh_degree},
             {"tau", decoded.tau},
             {"octree_depth", decoded.depth},
             {"blocks", decoded.blocks},
             {"sh_codebook", {{"k", decoded.sh_k}, {"r", decoded.sh_r}}}};
    if (!dec_args.reference.empty()) {
      auto ref = mgs::load_ply(mgs::read_file(dec_args.reference));
      if (ref.count == decoded.cloud.count) {
        json stats;
        auto linf = [](const std::vector<float>& a, const std::vector<float>& b) {
          double m = 0;
          for (size_t i = 0; i < a.size(); ++i)
            m = std::max(m, std::abs(double(a[i]) - double(b[i])));
          return m;
        };
        stats["positions_linf"] = linf(ref.positions, decoded.cloud.positions);
        stats["opacity_linf"] = linf(ref.opacity_logits, decoded.cloud.opacity_logits);
        stats["log_scales_linf"] = linf(ref.log_scales, decoded.cloud.log_scales);
        stats["sh_dc_linf"] = linf(ref.sh_dc, decoded.cloud.sh_dc);
        doc["reconstruction"] = stats;
      } else {
        doc["reconstruction"] = {{"note", "gaussian counts differ; per-field stats skipped"}};
      }
    }
    emit(doc);
    return 0;
  }

  if (cmd_search->parsed()) {
    apply_common(search_args.common, search_args.cfg.enc);
    search_args.cfg.enc.norm = parse_norm(search_args.norm);
    search_args.cfg.budget_bytes = mgs::parse_byte_size(search_args.budget);
    if (!search_args.tau_grid.empty()) {
      search_args.cfg.tau_grid.clear();
      std::string item;
      std::istringstream ss(search_args.tau_grid);
      while (std::getline(ss, item, ',')) {
        double tau = 0;
        try {
          tau = std::stod(item);
        } catch (const std::exception&) {
          throw mgs::ParseError("bad --tau-grid entry: " + item);
        }
        if (!(tau > 0.0 && tau <= 1.0))
          throw mgs::ParseError("--tau-grid values must be in (0,1]");
        search_args.cfg.tau_grid.push_back(tau);
      }
      if (search_args.cfg.tau_grid.empty()) throw mgs::ParseError("--tau-grid is empty");
    }
    auto cloud = mgs::load_ply(mgs::read_file(search_args.input));
    auto cameras = load_cameras_opt(search_args.cameras);
    auto result = mgs::search(cloud, cameras, search_args.cfg);
    mgs::write_file(search_args.output, result.container);
    json report = mgs::search_report_json(result, search_args.cfg.budget_bytes, search_args.cfg);
    report["output"] = search_args.output;
    if (!search_args.report.empty())
      mgs::write_text_file(search_args.report, report.dump(2) + "\n");
    emit(report);
    return 0;
  }

  if (cmd_info->parsed()) {
    auto bytes = mgs::read_file(info_args.input);
    auto sections = mgs::unpack_container(bytes);
    auto decoded = mgs::decode_container(bytes);
    json doc{{"total_bytes", bytes.size()},
             {"gaussians", decoded.cloud.count},
             {"sh_degree", decoded.cloud.sh_degree},
             {"tau", decoded.tau},
             {"octree_depth", decoded.depth},
             {"blocks", decoded.blocks},
             {"norm", mgs::norm_name(decoded.norm)},
             {"sh_codebook", {{"k", decoded.sh_k}, {"r", decoded.sh_r}}},
             {"Q", mgs::q_matrix_json(decoded.q)}};
    static const char* names[] = {"octree",        "transform_flags", "dc_coefficients",
                                  "group_records", "sh_codebook",     "metadata"};
    json sec;
    for (size_t i = 0; i < mgs::kSectionCount; ++i) sec[names[i]] = sections[i].size();
    doc["sections"] = sec;
    emit(doc);
    return 0;
  }

  if (cmd_eval->parsed()) {
    if (eval_args.common.threads > 0) mgs::set_thread_count(eval_args.common.threads);
    auto original = mgs::load_ply(mgs::read_file(eval_args.model));
    auto decoded = mgs::decode_container(mgs::read_file(eval_args.container));
    auto cameras = load_cameras_opt(eval_args.cameras);
    if (cameras.empty()) throw mgs::ParseError("render-eval needs at least one camera");
    json views = json::array();
    double mean = 0;
    size_t finite = 0;
    bool any_inf = false;
    for (size_t i = 0; i < cameras.size(); ++i) {
      auto ra = mgs::render(original, cameras[i]);
      auto rb = mgs::render(decoded.cloud, cameras[i]);
      double psnr = mgs::image_psnr(ra.image, rb.image);
      json v{{"view", i}};
      if (std::isinf(psnr)) {
        v["psnr_db"] = nullptr;
        v["identical"] = true;
        any_inf = true;
      } else {
        v["psnr_db"] = psnr;
        mean += psnr;
        ++finite;
      }
      views.push_back(v);
    }
    json doc{{"views", views}};
    if (finite > 0)
      doc["mean_psnr_db"] = mean / double(finite);
    else
      doc["mean_psnr_db"] = nullptr;  // all views identical
    doc["identical_views"] = any_inf;
    emit(doc);
    return 0;
  }

  if (cmd_synth->parsed()) {
    auto scene = mgs::synth_scene(synth_args.n, synth_args.common.seed);
    mgs::write_file(synth_args.out_ply, mgs::save_ply(scene.cloud));
    mgs::write_text_file(synth_args.out_cameras, mgs::cameras_to_json(scene.cameras) + "\n");
    emit(json{{"output", synth_args.out_ply},
              {"cameras", synth_args.out_cameras},
              {"gaussians", scene.cloud.count},
              {"camera_count", scene.cameras.size()}});
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const mgs::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const mgs::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const mgs::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const mgs::ContainerError& e) {
    std::cerr << "container error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
