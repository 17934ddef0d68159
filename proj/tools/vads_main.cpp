// Command-line surface for the two-stage video-ad structuring pipeline:
// synthetic data generation, training of both stages, prediction,
// evaluation and threshold sweeps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vads/data.hpp"
#include "vads/error.hpp"
#include "vads/rng.hpp"
#include "vads/evaluation.hpp"
#include "vads/pipeline.hpp"
#include "vads/segmentation.hpp"
#include "vads/tagging.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitConfig = 4;

struct GenOptions {
  std::string out;
  vads::SyntheticConfig cfg;
};

struct TrainSegOptions {
  std::string data, out, history, init;
  vads::SegmenterConfig model;
  vads::TrainSegConfig train;
  std::string loss = "bce";
  std::string weights = "ema";
};

struct TrainTagOptions {
  std::string data, out, history, init;
  vads::TaggerConfig model;
  vads::TrainTagConfig train;
  std::string weights = "ema";
};

struct PredictOptions {
  std::string data, out;
  std::vector<std::string> seg_ckpts, tag_ckpts;
  vads::PredictConfig cfg;
  std::string weights = "ema";
};

struct EvaluateOptions {
  std::string pred, data, out;
  double tolerance = 0.5;
};

struct SweepOptions {
  std::string data, out;
  std::vector<std::string> seg_ckpts, tag_ckpts;
  std::vector<double> thresholds{0.5, 0.45, 0.4, 0.35};
  std::string which = "score";
  vads::PredictConfig cfg;
  std::string weights = "ema";
};

vads::WeightSource parse_weights(const std::string& s) {
  if (s == "ema") return vads::WeightSource::Ema;
  if (s == "raw") return vads::WeightSource::Raw;
  throw vads::ConfigError("--weights must be 'ema' or 'raw', got '" + s + "'");
}

void write_history(const std::string& path, const std::vector<vads::EpochStats>& history) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw vads::ValidationError("history: cannot open '" + path + "'");
  for (const vads::EpochStats& e : history) {
    nlohmann::json j{{"epoch", e.epoch}, {"loss", e.loss}};
    if (e.val_f1) j["val_f1"] = *e.val_f1;
    os << j.dump() << '\n';
  }
}

int run_gen(const GenOptions& opt) {
  const auto records = vads::generate_synthetic(opt.cfg);
  vads::save_dataset(records, opt.out);
  std::cout << "wrote " << records.size() << " videos to " << opt.out << "\n";
  return kExitOk;
}

int run_train_seg(TrainSegOptions& opt) {
  opt.train.loss = opt.loss == "focal" ? vads::SegLossKind::Focal : vads::SegLossKind::Bce;
  if (opt.loss != "focal" && opt.loss != "bce") {
    throw vads::ConfigError("--loss must be 'bce' or 'focal', got '" + opt.loss + "'");
  }
  opt.train.eval_source = parse_weights(opt.weights);
  const auto records = vads::load_dataset(opt.data);

  std::unique_ptr<vads::SegmenterModel> init;
  if (!opt.init.empty()) {
    init = std::make_unique<vads::SegmenterModel>(vads::SegmenterModel::load(opt.init));
  } else if (!records.empty()) {
    opt.model.input_dim = records.front().feature_dim();
    init = std::make_unique<vads::SegmenterModel>(vads::SegmenterModel::create(
        opt.model, vads::derive_seed(opt.train.seed, "segmenter-init")));
  }
  const auto result = vads::train_segmenter(records, opt.train, init.get());
  result.model.save(opt.out);
  write_history(opt.history, result.history);
  for (const vads::EpochStats& e : result.history) {
    std::cout << "epoch " << e.epoch << " loss " << e.loss;
    if (e.val_f1) std::cout << " val_f1 " << *e.val_f1;
    std::cout << "\n";
  }
  std::cout << "checkpoint written to " << opt.out << "\n";
  return kExitOk;
}

int run_train_tag(TrainTagOptions& opt) {
  const auto records = vads::load_dataset(opt.data);
  std::unique_ptr<vads::TaggerModel> init;
  if (!opt.init.empty()) {
    init = std::make_unique<vads::TaggerModel>(vads::TaggerModel::load(opt.init));
  } else if (!records.empty()) {
    opt.model.pooling.input_dim = records.front().feature_dim();
  }
  const auto result = vads::train_tagger(records, opt.model, opt.train, init.get());
  result.model.save(opt.out);
  if (!opt.history.empty()) {
    std::ofstream os(opt.history, std::ios::trunc);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      os << nlohmann::json{{"epoch", e}, {"loss", result.epoch_loss[e]}}.dump() << '\n';
    }
  }
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::cout << "epoch " << e << " loss " << result.epoch_loss[e] << "\n";
  }
  std::cout << "checkpoint written to " << opt.out << "\n";
  return kExitOk;
}

int run_predict(PredictOptions& opt) {
  opt.cfg.weights = parse_weights(opt.weights);
  const auto records = vads::load_dataset(opt.data);
  std::vector<vads::SegmenterModel> seg_models;
  std::vector<vads::TaggerModel> tag_models;
  for (const std::string& p : opt.seg_ckpts) seg_models.push_back(vads::SegmenterModel::load(p));
  for (const std::string& p : opt.tag_ckpts) tag_models.push_back(vads::TaggerModel::load(p));
  std::vector<const vads::SegmenterModel*> seg_ptrs;
  std::vector<const vads::TaggerModel*> tag_ptrs;
  for (const auto& m : seg_models) seg_ptrs.push_back(&m);
  for (const auto& m : tag_models) tag_ptrs.push_back(&m);

  const auto predictions = vads::predict_dataset(records, seg_ptrs, tag_ptrs, opt.cfg);
  vads::write_predictions(predictions, opt.out);
  std::cout << "wrote predictions for " << predictions.size() << " videos to " << opt.out << "\n";
  return kExitOk;
}

int run_evaluate(const EvaluateOptions& opt) {
  const auto predictions = vads::load_predictions(opt.pred);
  const auto records = vads::load_dataset(opt.data);
  const vads::MetricReport report = vads::evaluate_predictions(predictions, records, opt.tolerance);
  const std::string text = vads::report_to_json(report);
  std::cout << text << "\n";
  if (!opt.out.empty()) {
    std::ofstream os(opt.out, std::ios::trunc);
    if (!os) throw vads::ValidationError("report: cannot open '" + opt.out + "'");
    os << text << "\n";
  }
  return kExitOk;
}

int run_sweep(SweepOptions& opt) {
  opt.cfg.weights = parse_weights(opt.weights);
  vads::SweepTarget target;
  if (opt.which == "boundary") {
    target = vads::SweepTarget::Boundary;
  } else if (opt.which == "score") {
    target = vads::SweepTarget::Score;
  } else {
    throw vads::ConfigError("--which must be 'boundary' or 'score', got '" + opt.which + "'");
  }
  const auto records = vads::load_dataset(opt.data);
  std::vector<vads::SegmenterModel> seg_models;
  std::vector<vads::TaggerModel> tag_models;
  for (const std::string& p : opt.seg_ckpts) seg_models.push_back(vads::SegmenterModel::load(p));
  for (const std::string& p : opt.tag_ckpts) tag_models.push_back(vads::TaggerModel::load(p));
  std::vector<const vads::SegmenterModel*> seg_ptrs;
  std::vector<const vads::TaggerModel*> tag_ptrs;
  for (const auto& m : seg_models) seg_ptrs.push_back(&m);
  for (const auto& m : tag_models) tag_ptrs.push_back(&m);

  const auto rows =
      vads::sweep_thresholds(records, seg_ptrs, tag_ptrs, opt.cfg, opt.thresholds, target);
  std::printf("%-10s %-10s %-10s %-10s\n", "threshold", "f1", "avg_map", "final");
  nlohmann::json jrows = nlohmann::json::array();
  for (const vads::SweepRow& row : rows) {
    std::printf("%-10.4f %-10.6f %-10.6f %-10.6f\n", row.threshold, row.f1, row.avg_map,
                row.final);
    jrows.push_back({{"threshold", row.threshold},
                     {"f1", row.f1},
                     {"avg_map", row.avg_map},
                     {"final", row.final}});
  }
  if (!opt.out.empty()) {
    std::ofstream os(opt.out, std::ios::trunc);
    if (!os) throw vads::ValidationError("sweep: cannot open '" + opt.out + "'");
    os << jrows.dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video ad scene segmentation and multi-label tagging toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // subcommands accept the global --seed/--config
  app.set_config("--config", "", "Config file (CLI flags override config values)");

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Master seed; all randomness derives from it")
      ->capture_default_str();

  GenOptions gen;
  CLI::App* cgen = app.add_subcommand("gen-synthetic", "Generate a synthetic dataset");
  cgen->add_option("--out", gen.out, "Output dataset path")->required();
  cgen->add_option("--n-videos", gen.cfg.n_videos)->capture_default_str();
  cgen->add_option("--t-min", gen.cfg.t_min)->capture_default_str();
  cgen->add_option("--t-max", gen.cfg.t_max)->capture_default_str();
  cgen->add_option("--feature-dim", gen.cfg.feature_dim)->capture_default_str();
  cgen->add_option("--classes", gen.cfg.n_classes)->capture_default_str();
  cgen->add_option("--rate", gen.cfg.snippet_rate)->capture_default_str();
  cgen->add_option("--separation", gen.cfg.centroid_separation)->capture_default_str();
  cgen->add_option("--noise-sigma", gen.cfg.noise_sigma)->capture_default_str();
  cgen->add_option("--min-scene-snippets", gen.cfg.min_scene_snippets)->capture_default_str();
  cgen->add_option("--max-labels", gen.cfg.max_labels_per_scene)->capture_default_str();

  TrainSegOptions tseg;
  CLI::App* ctseg = app.add_subcommand("train-seg", "Train the scene segmenter");
  ctseg->add_option("--data", tseg.data, "Training dataset")->required();
  ctseg->add_option("--out", tseg.out, "Output checkpoint")->required();
  ctseg->add_option("--init", tseg.init, "Resume from checkpoint");
  ctseg->add_option("--history", tseg.history, "Per-epoch JSONL log");
  ctseg->add_option("--epochs", tseg.train.epochs)->capture_default_str();
  ctseg->add_option("--batch", tseg.train.batch)->capture_default_str();
  ctseg->add_option("--window", tseg.train.window_snippets)->capture_default_str();
  ctseg->add_option("--stride", tseg.train.window_stride)->capture_default_str();
  ctseg->add_option("--lr", tseg.train.lr)->capture_default_str();
  ctseg->add_option("--loss", tseg.loss, "bce or focal")->capture_default_str();
  ctseg->add_option("--pos-weight", tseg.train.pos_weight, "<= 0 selects #neg/#pos per batch")
      ->capture_default_str();
  ctseg->add_option("--focal-gamma", tseg.train.focal_gamma)->capture_default_str();
  ctseg->add_option("--focal-alpha", tseg.train.focal_alpha)->capture_default_str();
  ctseg->add_option("--ema-decay", tseg.train.ema_decay)->capture_default_str();
  ctseg->add_option("--val-fraction", tseg.train.val_fraction)->capture_default_str();
  ctseg->add_option("--val-threshold", tseg.train.val_threshold)->capture_default_str();
  ctseg->add_option("--min-gap", tseg.train.val_min_gap)->capture_default_str();
  ctseg->add_option("--hidden", tseg.model.hidden)->capture_default_str();
  ctseg->add_option("--kernel", tseg.model.kernel)->capture_default_str();
  ctseg->add_option("--blocks", tseg.model.blocks)->capture_default_str();
  ctseg->add_option("--dropout", tseg.model.dropout)->capture_default_str();
  ctseg->add_flag("--no-residual", [&](std::int64_t) { tseg.model.residual = false; },
                  "Disable per-layer skip connections");
  ctseg->add_flag("--original-gt", [&](std::int64_t) { tseg.train.modified_gt = false; },
                  "Mark scene ends only (one transition per scene)");
  ctseg->add_option("--label-band", tseg.train.label_band)->capture_default_str();
  ctseg->add_option("--weights", tseg.weights, "ema or raw (validation forward)")
      ->capture_default_str();

  TrainTagOptions ttag;
  CLI::App* cttag = app.add_subcommand("train-tag", "Train the scene tagger");
  cttag->add_option("--data", ttag.data, "Training dataset")->required();
  cttag->add_option("--out", ttag.out, "Output checkpoint")->required();
  cttag->add_option("--init", ttag.init, "Resume from checkpoint");
  cttag->add_option("--history", ttag.history, "Per-epoch JSONL log");
  cttag->add_option("--epochs", ttag.train.epochs)->capture_default_str();
  cttag->add_option("--batch", ttag.train.batch)->capture_default_str();
  cttag->add_option("--lr-head", ttag.train.lr_head)->capture_default_str();
  cttag->add_option("--lr-rest", ttag.train.lr_rest)->capture_default_str();
  cttag->add_option("--ema-decay", ttag.train.ema_decay)->capture_default_str();
  cttag->add_option("--classes", ttag.model.n_classes)->capture_default_str();
  cttag->add_option("--streams", ttag.model.n_streams)->capture_default_str();
  cttag->add_option("--expansion", ttag.model.pooling.expansion)->capture_default_str();
  cttag->add_option("--groups", ttag.model.pooling.groups)->capture_default_str();
  cttag->add_option("--clusters", ttag.model.pooling.clusters)->capture_default_str();
  cttag->add_flag("--normalize-by-time",
                  [&](std::int64_t) { ttag.model.pooling.normalize_by_time = true; },
                  "Divide pooled descriptors by clip length");
  cttag->add_option("--vocab", ttag.model.text.vocab.size)->capture_default_str();
  cttag->add_option("--hash-seed", ttag.model.text.vocab.hash_seed)->capture_default_str();
  cttag->add_option("--embed-dim", ttag.model.text.embed_dim)->capture_default_str();
  cttag->add_option("--text-dim", ttag.model.text.output_dim)->capture_default_str();
  cttag->add_option("--max-len", ttag.model.text.max_len)->capture_default_str();
  cttag->add_flag("--late-average", [&](std::int64_t) { ttag.model.late_average = true; },
                  "Average modality logits instead of the fusion head");
  cttag->add_option("--score-threshold", ttag.model.score_threshold)->capture_default_str();

  PredictOptions pred;
  CLI::App* cpred = app.add_subcommand("predict", "Segment and tag a dataset");
  cpred->add_option("--data", pred.data, "Input dataset")->required();
  cpred->add_option("--seg", pred.seg_ckpts, "Segmentation checkpoint(s)")->required();
  cpred->add_option("--tag", pred.tag_ckpts, "Tagging checkpoint(s)")->required();
  cpred->add_option("--out", pred.out, "Prediction file")->required();
  cpred->add_option("--boundary-threshold", pred.cfg.boundary_threshold)->capture_default_str();
  cpred->add_option("--score-threshold", pred.cfg.score_threshold)->capture_default_str();
  cpred->add_option("--min-gap", pred.cfg.min_gap_seconds)->capture_default_str();
  cpred->add_option("--workers", pred.cfg.workers, "0 selects hardware concurrency")
      ->capture_default_str();
  cpred->add_option("--weights", pred.weights, "ema or raw")->capture_default_str();

  EvaluateOptions eval;
  CLI::App* ceval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  ceval->add_option("--pred", eval.pred, "Prediction file")->required();
  ceval->add_option("--data", eval.data, "Ground-truth dataset")->required();
  ceval->add_option("--out", eval.out, "Also write the report here");
  ceval->add_option("--tolerance", eval.tolerance, "Boundary matching tolerance in seconds")
      ->capture_default_str();

  SweepOptions sweep;
  CLI::App* csweep = app.add_subcommand("sweep", "Evaluate over a threshold list");
  csweep->add_option("--data", sweep.data, "Annotated dataset")->required();
  csweep->add_option("--seg", sweep.seg_ckpts, "Segmentation checkpoint(s)")->required();
  csweep->add_option("--tag", sweep.tag_ckpts, "Tagging checkpoint(s)")->required();
  csweep->add_option("--which", sweep.which, "boundary or score")->capture_default_str();
  csweep->add_option("--thresholds", sweep.thresholds, "Threshold list")->capture_default_str();
  csweep->add_option("--out", sweep.out, "Also write rows as JSON here");
  csweep->add_option("--boundary-threshold", sweep.cfg.boundary_threshold)->capture_default_str();
  csweep->add_option("--score-threshold", sweep.cfg.score_threshold)->capture_default_str();
  csweep->add_option("--min-gap", sweep.cfg.min_gap_seconds)->capture_default_str();
  csweep->add_option("--workers", sweep.cfg.workers)->capture_default_str();
  csweep->add_option("--weights", sweep.weights, "ema or raw")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitParse;
  }

  try {
    gen.cfg.seed = seed;
    tseg.train.seed = seed;
    ttag.train.seed = seed;
    if (cgen->parsed()) return run_gen(gen);
    if (ctseg->parsed()) return run_train_seg(tseg);
    if (cttag->parsed()) return run_train_tag(ttag);
    if (cpred->parsed()) return run_predict(pred);
    if (ceval->parsed()) return run_evaluate(eval);
    if (csweep->parsed()) return run_sweep(sweep);
  } catch (const vads::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const vads::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const vads::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
