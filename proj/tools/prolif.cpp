// prolif: command-line front end. Every subcommand wraps one library
// operation over the on-disk formats, so stages can be chained by hand or
// run together with `pipeline`.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prolif/config.hpp"
#include "prolif/crossval.hpp"
#include "prolif/detection.hpp"
#include "prolif/error.hpp"
#include "prolif/features.hpp"
#include "prolif/learner.hpp"
#include "prolif/metrics.hpp"
#include "prolif/mining.hpp"
#include "prolif/pipeline.hpp"
#include "prolif/slide.hpp"
#include "prolif/stain.hpp"
#include "prolif/svm.hpp"
#include "prolif/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prolif;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw format_error(path.string() + ": " + e.what());
  }
}

fs::path ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

void write_json(const fs::path& path, const json& doc) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// Config file plus flag overrides shared by the slide-level stages.
struct ConfigFlags {
  std::string file;
  std::optional<double> mpp;
  std::optional<int> k;
  std::optional<std::string> target_stain;
  std::optional<std::string> detector;
  std::optional<double> threshold;
  std::optional<double> nms_radius;
  std::optional<double> match_radius;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "Pipeline config JSON; flags below override it")->check(CLI::ExistingFile);
    app->add_option("--mpp", mpp, "Override the slide resolution (um/px)");
    app->add_option("--k", k, "Number of ROIs kept per slide");
    app->add_option("--target-stain", target_stain, "Target stain profile JSON");
    app->add_option("--detector", detector, "Detector: reference, model JSON path, or cmd:<shell command>");
    app->add_option("--threshold", threshold, "Detection probability threshold");
    app->add_option("--nms-radius", nms_radius, "Non-maximum suppression radius (px)");
    app->add_option("--match-radius", match_radius, "Detection-to-truth match radius (px)");
  }

  PipelineConfig build() const {
    PipelineConfig c = file.empty() ? PipelineConfig{} : load_config(file);
    if (mpp) c.mpp_override = *mpp;
    if (k) c.k = *k;
    if (target_stain) c.target_stain = *target_stain;
    if (detector) c.detector = *detector;
    if (threshold) c.detection_threshold = *threshold;
    if (nms_radius) c.nms_radius = *nms_radius;
    if (match_radius) c.match_radius = *match_radius;
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

std::vector<int> parse_subset(const std::string& text) {
  if (text == "mitosis") return kMitosisScoreFeatures;
  if (text == "molecular") return kMolecularScoreFeatures;
  if (text == "all") {
    std::vector<int> all(kFeatureCount);
    for (int i = 0; i < kFeatureCount; ++i) all[i] = i;
    return all;
  }
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 0 || v >= kFeatureCount) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw invalid_argument("bad feature index '" + item + "' in '" + text + "'");
    }
  }
  if (out.empty()) throw invalid_argument("empty feature subset");
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw invalid_argument("bad number '" + item + "'");
    }
  }
  if (out.empty()) throw invalid_argument("empty list");
  return out;
}

// Feature rows joined with their labels by slide id, in feature-file order.
struct LabeledRows {
  std::vector<FeatureRow> rows;
  std::vector<SlideScore> labels;
};

LabeledRows join_labels(const fs::path& features_csv, const fs::path& labels_csv) {
  LabeledRows out;
  std::map<std::string, SlideScore> by_slide;
  for (auto& s : read_scores_csv(labels_csv)) by_slide[s.slide] = s;
  for (auto& row : read_features_csv(features_csv)) {
    const auto it = by_slide.find(row.slide);
    if (it == by_slide.end()) throw invalid_argument("no label for slide " + row.slide);
    out.rows.push_back(row);
    out.labels.push_back(it->second);
  }
  if (out.rows.empty()) throw invalid_argument("no feature rows in " + features_csv.string());
  return out;
}

std::vector<double> targets(const LabeledRows& data, SvmKind kind) {
  std::vector<double> y;
  for (const auto& s : data.labels) {
    if (kind == SvmKind::kClassifier) {
      if (!s.score_class) throw invalid_argument("slide " + s.slide + " has no score_class");
      y.push_back(*s.score_class);
    } else {
      if (!s.score_continuous) throw invalid_argument("slide " + s.slide + " has no score_continuous");
      y.push_back(*s.score_continuous);
    }
  }
  return y;
}

SvmKind parse_task(const std::string& task) {
  if (task == "class") return SvmKind::kClassifier;
  if (task == "regression") return SvmKind::kRegressor;
  throw invalid_argument("task must be class or regression");
}

json cv_to_json(const CvResult& cv) {
  json folds = json::array();
  for (double v : cv.fold_scores) folds.push_back(std::isnan(v) ? json(nullptr) : json(v));
  return {{"fold_scores", folds}, {"mean", cv.mean}, {"pooled", cv.pooled}, {"out_of_fold", cv.out_of_fold}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tumor proliferation scoring from whole-slide images"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  int jobs = 1;
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", jobs, "Worker threads over independent patches/slides")->check(CLI::PositiveNumber);
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic slide or annotated mitosis patches");
  std::string synth_out, synth_id = "synthetic", synth_spec;
  std::uint64_t synth_seed = 0;
  int synth_grade = 0, synth_patches = 0, synth_side = 512;
  double synth_mitosis = 60, synth_mimic = 60, synth_cells = 2000, synth_mpp = 1.0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Random seed")->required();
  synth->add_option("--grade", synth_grade, "Graded slide with planted B&R grade 1..3")->check(CLI::Range(1, 3));
  synth->add_option("--spec", synth_spec, "Slide spec JSON (alternative to --grade)")->check(CLI::ExistingFile);
  synth->add_option("--id", synth_id, "Slide id");
  synth->add_option("--patches", synth_patches, "Write this many annotated patches instead of a slide");
  synth->add_option("--side", synth_side, "Annotated patch side (px)");
  synth->add_option("--mpp", synth_mpp, "Annotated patch resolution (um/px)");
  synth->add_option("--mitosis-density", synth_mitosis, "Annotated patches: mitoses per mm^2");
  synth->add_option("--mimic-density", synth_mimic, "Annotated patches: mimics per mm^2");
  synth->add_option("--cell-density", synth_cells, "Annotated patches: cells per mm^2");

  // slide stages
  ConfigFlags cfg;
  std::string manifest, out, tissue_dir, patches_file, rois_file, normalized_dir;

  auto* tissue = app.add_subcommand("tissue", "Segment tissue blobs on a thumbnail");
  tissue->add_option("--manifest", manifest, "Slide manifest JSON")->required()->check(CLI::ExistingFile);
  tissue->add_option("--out", out, "Output directory")->required();
  cfg.attach(tissue);

  auto* patches = app.add_subcommand("patches", "Sample 10-HPF patch centers over tissue");
  patches->add_option("--manifest", manifest, "Slide manifest JSON")->required()->check(CLI::ExistingFile);
  patches->add_option("--tissue", tissue_dir, "Directory written by `tissue`")->required()->check(CLI::ExistingDirectory);
  patches->add_option("--out", out, "Output patches JSONL")->required();
  cfg.attach(patches);

  auto* rois = app.add_subcommand("rois", "Count cells per patch and keep the top-K ROIs");
  rois->add_option("--manifest", manifest, "Slide manifest JSON")->required()->check(CLI::ExistingFile);
  rois->add_option("--patches", patches_file, "Patches JSONL")->required()->check(CLI::ExistingFile);
  rois->add_option("--out", out, "Output directory")->required();
  cfg.attach(rois);
  add_jobs(rois);

  auto* normalize = app.add_subcommand("normalize", "Macenko-normalize ROI patches, or a single image");
  std::string image, target_out;
  normalize->add_option("--manifest", manifest, "Slide manifest JSON")->check(CLI::ExistingFile);
  normalize->add_option("--rois", rois_file, "rois.json from `rois`")->check(CLI::ExistingFile);
  normalize->add_option("--image", image, "Normalize a single PPM instead")->check(CLI::ExistingFile);
  normalize->add_option("--out", out, "Output directory (slide mode) or PPM (image mode)");
  normalize->add_option("--estimate-target", target_out,
                        "With --image: write the image's stain profile to this JSON and exit");
  cfg.attach(normalize);
  add_jobs(normalize);

  auto* detect = app.add_subcommand("detect", "Score and detect mitoses in normalized ROIs, or a single image");
  std::string score_map_out;
  detect->add_option("--manifest", manifest, "Slide manifest JSON")->check(CLI::ExistingFile);
  detect->add_option("--rois", rois_file, "rois.json from `rois`")->check(CLI::ExistingFile);
  detect->add_option("--normalized", normalized_dir, "Directory written by `normalize`")->check(CLI::ExistingDirectory);
  detect->add_option("--image", image, "Detect in a single PPM instead")->check(CLI::ExistingFile);
  detect->add_option("--out", out, "Output directory (slide mode) or detections JSONL (image mode)")->required();
  detect->add_option("--score-map", score_map_out, "Image mode: also write the score map JSON");
  cfg.attach(detect);
  add_jobs(detect);

  auto* detect_stdin = app.add_subcommand(
      "score-stdin", "Plug-in adapter: read a P6 patch on stdin, print its score map JSON");
  cfg.attach(detect_stdin);

  auto* mine = app.add_subcommand("mine-negatives", "Collect detector false positives on annotated patches");
  std::string annotations;
  mine->add_option("--annotations", annotations, "Annotated patch directory")->required()->check(CLI::ExistingDirectory);
  mine->add_option("--out", out, "Output JSONL of false positives")->required();
  cfg.attach(mine);

  auto* train_det = app.add_subcommand("train-detector", "Two-step training of the window-feature learner");
  std::string valid_dir, dataset_out;
  int n_mitosis = 70, n_normal = 180, n_new = 100, aug = 16;
  bool stage1_only = false;
  std::uint64_t train_seed = 0;
  train_det->add_option("--annotations", annotations, "Annotated training patches")->required()->check(CLI::ExistingDirectory);
  train_det->add_option("--out", out, "Output detector model JSON")->required();
  train_det->add_option("--seed", train_seed, "Random seed")->required();
  train_det->add_option("--n-mitosis", n_mitosis, "Stage-1 mitosis windows");
  train_det->add_option("--n-normal", n_normal, "Stage-1 random normal windows");
  train_det->add_option("--n-new", n_new, "Mined normal windows added in stage 2");
  train_det->add_option("--aug", aug, "Max translation (px) applied to mined windows");
  train_det->add_option("--dataset-out", dataset_out, "Also write the final training dataset here");
  train_det->add_flag("--stage1-only", stage1_only, "Skip hard-negative mining");
  cfg.attach(train_det);

  auto* featurize = app.add_subcommand("featurize", "21-dim slide features from detected ROIs");
  std::vector<std::string> roi_files;
  featurize->add_option("--rois", roi_files, "rois.json with mitoses filled (repeatable)")->required()->check(CLI::ExistingFile);
  featurize->add_option("--out", out, "Output features CSV")->required();
  cfg.attach(featurize);

  // slide-level learning
  std::string features_csv, labels_csv, subset, c_list, candidates;
  double svm_c = 0, gamma = 0, epsilon = 0.1;
  int folds = 10;
  std::uint64_t learn_seed = 0;

  auto* svc_cmd = app.add_subcommand("train-svc", "Train the mitosis-score RBF classifier");
  auto* svr_cmd = app.add_subcommand("train-svr", "Train the molecular-score RBF regressor");
  for (auto* sub : {svc_cmd, svr_cmd}) {
    const bool cls = sub == svc_cmd;
    sub->add_option("--features", features_csv, "Features CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--labels", labels_csv, "Labels CSV (slide,score_class,score_continuous)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output model JSON")->required();
    sub->add_option("--seed", learn_seed, "Random seed (recorded in the model)")->required();
    sub->add_option("--subset", subset, "Feature subset: mitosis, molecular, all, or comma list")
        ->default_str(cls ? "mitosis" : "molecular");
    sub->add_option("--C", svm_c, "Box constraint")->default_str(cls ? "0.03125" : "0.25");
    sub->add_option("--gamma", gamma, "RBF gamma; <= 0 selects 1/dim");
    if (!cls) sub->add_option("--epsilon", epsilon, "Epsilon-insensitive tube width");
  }

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation of a slide-level SVM");
  std::string task = "class";
  cv->add_option("--features", features_csv, "Features CSV")->required()->check(CLI::ExistingFile);
  cv->add_option("--labels", labels_csv, "Labels CSV")->required()->check(CLI::ExistingFile);
  cv->add_option("--task", task, "class (kappa) or regression (Spearman)");
  cv->add_option("--seed", learn_seed, "Fold shuffle seed")->required();
  cv->add_option("--folds", folds, "Number of folds");
  cv->add_option("--subset", subset, "Feature subset (default: the mitosis or molecular subset for the task)");
  cv->add_option("--C", svm_c, "Box constraint (default: 0.03125 for class, 0.25 for regression)");
  cv->add_option("--gamma", gamma, "RBF gamma; <= 0 selects 1/dim");
  cv->add_option("--epsilon", epsilon, "SVR tube width");
  cv->add_option("--out", out, "Also write the result JSON here");
  add_jobs(cv);

  auto* search = app.add_subcommand("feature-search", "Cross-validated search over feature subsets and C");
  search->add_option("--features", features_csv, "Features CSV")->required()->check(CLI::ExistingFile);
  search->add_option("--labels", labels_csv, "Labels CSV")->required()->check(CLI::ExistingFile);
  search->add_option("--task", task, "class (kappa) or regression (Spearman)");
  search->add_option("--seed", learn_seed, "Fold shuffle seed")->required();
  search->add_option("--folds", folds, "Number of folds");
  search->add_option("--candidates", candidates,
                     "Semicolon-separated subsets (mitosis, molecular, all or comma lists)")
      ->default_str("mitosis;all");
  search->add_option("--C-grid", c_list, "Comma-separated C values")->default_str("0.03125,0.25");
  search->add_option("--epsilon", epsilon, "SVR tube width");
  search->add_option("--out", out, "Also write the result JSON here");
  add_jobs(search);

  auto* predict_cmd = app.add_subcommand("predict", "Apply trained SVMs to a features CSV");
  std::string svc_path, svr_path;
  predict_cmd->add_option("--features", features_csv, "Features CSV")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--svc", svc_path, "Classifier model JSON")->check(CLI::ExistingFile);
  predict_cmd->add_option("--svr", svr_path, "Regressor model JSON")->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", out, "Output scores CSV")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Kappa, Spearman and detection F1 against ground truth");
  std::string predictions_csv, detections_dir, csv_out;
  evaluate->add_option("--predictions", predictions_csv, "Predicted scores CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--labels", labels_csv, "Ground-truth scores CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--detector-model", svc_path, "Detector to evaluate on --annotations");
  evaluate->add_option("--annotations", annotations, "Annotated patches for detection F1")->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", out, "Metrics report JSON")->required();
  evaluate->add_option("--csv", csv_out, "Per-slide CSV");
  cfg.attach(evaluate);

  auto* labels_cmd = app.add_subcommand("labels", "Collect ground-truth scores of synthetic slides into a CSV");
  std::vector<std::string> slide_dirs;
  labels_cmd->add_option("--slide", slide_dirs, "Directory written by `synth` (repeatable)")->required()->check(CLI::ExistingDirectory);
  labels_cmd->add_option("--out", out, "Output labels CSV")->required();

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage on one slide");
  pipeline->add_option("--manifest", manifest, "Slide manifest JSON")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--run-dir", out, "Run directory")->required();
  pipeline->add_option("--svc", svc_path, "Classifier model JSON")->check(CLI::ExistingFile);
  pipeline->add_option("--svr", svr_path, "Regressor model JSON")->check(CLI::ExistingFile);
  pipeline->add_option("--seed", cfg.seed, "Seed recorded in the run config");
  cfg.attach(pipeline);
  add_jobs(pipeline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kInvalidArgument);
  }

  try {
    if (*synth) {
      if (synth_patches > 0) {
        AnnotatedPatchSpec spec;
        spec.count = synth_patches;
        spec.side = synth_side;
        spec.mpp = synth_mpp;
        spec.cell_density = synth_cells;
        spec.mitosis_density = synth_mitosis;
        spec.mimic_density = synth_mimic;
        spec.seed = synth_seed;
        write_annotated_patches(synth_out, generate_annotated_patches(spec));
        std::cout << synth_out << '\n';
        return 0;
      }
      SyntheticSlideSpec spec;
      if (synth_grade > 0) {
        spec = graded_slide_spec(synth_grade, synth_seed, synth_id);
      } else if (!synth_spec.empty()) {
        spec = synthetic_spec_from_json(read_json(synth_spec));
        spec.seed = synth_seed;
        spec.slide_id = synth_id;
      } else {
        throw invalid_argument("synth needs --grade, --spec or --patches");
      }
      const auto slide = generate_synthetic_slide(spec, synth_out);
      std::cout << slide.manifest_path.string() << '\n';
      return 0;
    }

    if (*tissue) {
      const auto r = stage::tissue(manifest, cfg.build(), out);
      std::cout << r.blobs.size() << " blobs\n";
      return 0;
    }
    if (*patches) {
      const auto r = stage::patches(manifest, tissue_dir, cfg.build(), out);
      std::cout << r.size() << " patches\n";
      return 0;
    }
    if (*rois) {
      const auto r = stage::rois(manifest, patches_file, cfg.build(), out, jobs);
      std::cout << r.entries.size() << " rois\n";
      return 0;
    }

    if (*normalize) {
      const auto config = cfg.build();
      if (!image.empty()) {
        const Pixmap src = read_pnm(fs::path(image));
        if (!target_out.empty()) {
          save_stain_profile(ensure_parent(target_out).string(), estimate_profile(src, config.macenko(), config.i0));
          return 0;
        }
        if (out.empty()) throw invalid_argument("--out is required");
        const auto r = normalize_patch(src, std::nullopt, target_profile(config), config.macenko());
        if (r.fallback) std::cerr << "warning: " << r.warning << '\n';
        write_pnm(ensure_parent(out), r.image);
        return 0;
      }
      if (manifest.empty() || rois_file.empty() || out.empty())
        throw invalid_argument("normalize needs --manifest, --rois and --out (or --image)");
      for (const auto& w : stage::normalize(manifest, rois_file, config, out, jobs)) std::cerr << "warning: " << w << '\n';
      return 0;
    }

    if (*detect) {
      const auto config = cfg.build();
      if (!image.empty()) {
        const Pixmap patch = read_pnm(fs::path(image));
        const double mpp = config.mpp_override > 0 ? config.mpp_override : 1.0;
        const auto detector = make_detector(config.detector, detector_params(config, mpp));
        const ScoreMap map = detector->score_map(patch);
        if (!score_map_out.empty()) write_json(score_map_out, to_json(map));
        std::ofstream o(ensure_parent(out));
        if (!o) throw io_error("cannot write " + out);
        for (const auto& d : detect_mitoses(map, config.detection_threshold, config.nms_radius))
          o << json{{"x", d.x}, {"y", d.y}, {"p", d.p}}.dump() << '\n';
        return 0;
      }
      if (manifest.empty() || rois_file.empty() || normalized_dir.empty())
        throw invalid_argument("detect needs --manifest, --rois and --normalized (or --image)");
      const auto r = stage::detect(manifest, rois_file, normalized_dir, config, out, jobs);
      int total = 0;
      for (const auto& e : r.entries) total += e.mitoses;
      std::cout << total << " mitoses in " << r.entries.size() << " rois\n";
      return 0;
    }

    if (*detect_stdin) {
      const auto config = cfg.build();
      std::stringstream buf;
      buf << std::cin.rdbuf();
      const Pixmap patch = read_pnm(buf);
      const double mpp = config.mpp_override > 0 ? config.mpp_override : 1.0;
      const std::string spec = config.detector.rfind("cmd:", 0) == 0 ? "reference" : config.detector;
      std::cout << to_json(make_detector(spec, detector_params(config, mpp))->score_map(patch)).dump() << '\n';
      return 0;
    }

    if (*mine) {
      const auto config = cfg.build();
      const auto data = read_annotated_patches(annotations);
      const double mpp = config.mpp_override > 0 ? config.mpp_override : 1.0;
      const auto detector = make_detector(config.detector, detector_params(config, mpp));
      const auto fps = mine_false_positives(
          *detector, data, {config.detection_threshold, config.nms_radius, config.match_radius});
      write_mined_jsonl(ensure_parent(out), fps);
      std::cout << fps.size() << " false positives\n";
      return 0;
    }

    if (*train_det) {
      const auto config = cfg.build();
      const auto data = read_annotated_patches(annotations);
      const double mpp = config.mpp_override > 0 ? config.mpp_override : 1.0;
      const ReferenceDetector features({}, detector_params(config, mpp));
      Stage1Params s1;
      s1.seed = train_seed;
      auto dataset = sample_stage1_dataset(data, n_mitosis, n_normal, s1);
      auto model = train_reference_learner(dataset, features);
      if (!stage1_only) {
        const auto fps = mine_false_positives(model, data,
                                              {config.detection_threshold, config.nms_radius, config.match_radius});
        Stage2Params s2;
        s2.n_new_normals = n_new;
        s2.aug_translation_max = aug;
        s2.seed = train_seed + 1;
        dataset = build_stage2_dataset(dataset, fps, data, s2);
        model = train_reference_learner(dataset, features);
        std::cerr << fps.size() << " false positives mined\n";
      }
      if (!dataset_out.empty()) write_dataset(dataset_out, dataset);
      save_detector(ensure_parent(out), model);
      return 0;
    }

    if (*featurize) {
      const auto config = cfg.build();
      std::vector<FeatureRow> rows;
      for (const auto& f : roi_files) {
        const auto list = load_roi_list(f);
        rows.push_back({list.slide, extract_features(list, config.br)});
      }
      write_features_csv(ensure_parent(out), rows);
      return 0;
    }

    if (*svc_cmd || *svr_cmd) {
      const SvmKind kind = *svc_cmd ? SvmKind::kClassifier : SvmKind::kRegressor;
      const auto data = join_labels(features_csv, labels_csv);
      SvmParams p;
      p.features = parse_subset(subset.empty() ? (*svc_cmd ? "mitosis" : "molecular") : subset);
      p.c = svm_c > 0 ? svm_c : (*svc_cmd ? kMitosisScoreC : kMolecularScoreC);
      p.gamma = gamma;
      p.epsilon = epsilon;
      std::vector<FeatureVector21> raw;
      for (const auto& r : data.rows) raw.push_back(r.values);
      const Matrix x = project_rows(raw, p.features);
      const auto y = targets(data, kind);
      SvmModel model;
      if (kind == SvmKind::kClassifier) {
        std::vector<int> labels(y.begin(), y.end());
        model = train_svc(x, labels, p);
      } else {
        model = train_svr(x, y, p);
      }
      json doc = to_json(model);
      doc["seed"] = learn_seed;
      write_json(out, doc);
      return 0;
    }

    if (*cv || *search) {
      const SvmKind kind = parse_task(task);
      const bool cls = kind == SvmKind::kClassifier;
      const auto data = join_labels(features_csv, labels_csv);
      const auto y = targets(data, kind);
      std::vector<FeatureVector21> raw;
      for (const auto& r : data.rows) raw.push_back(r.values);
      json doc;
      if (*cv) {
        SvmParams p;
        p.features = parse_subset(subset.empty() ? (cls ? "mitosis" : "molecular") : subset);
        p.c = svm_c > 0 ? svm_c : (cls ? kMitosisScoreC : kMolecularScoreC);
        p.gamma = gamma;
        p.epsilon = epsilon;
        const auto r = cross_validate(project_rows(raw, p.features), y, folds, learn_seed,
                                      cls ? svc_trainer(p) : svr_trainer(p), cls ? kappa_metric : spearman_metric,
                                      jobs);
        doc = cv_to_json(r);
        doc["metric"] = cls ? "kappa" : "spearman";
        doc["features"] = p.features;
        doc["C"] = p.c;
      } else {
        std::vector<std::vector<int>> sets;
        std::stringstream ss(candidates.empty() ? "mitosis;all" : candidates);
        std::string item;
        while (std::getline(ss, item, ';')) sets.push_back(parse_subset(item));
        const auto grid = parse_doubles(c_list.empty() ? "0.03125,0.25" : c_list);
        const auto r = feature_search(raw, y, sets, grid, kind, folds, learn_seed, epsilon, jobs);
        json evals = json::array();
        for (const auto& e : r.evaluations) {
          json j = cv_to_json(e.cv);
          j["features"] = e.indices;
          j["C"] = e.c;
          evals.push_back(j);
        }
        doc = {{"metric", cls ? "kappa" : "spearman"},
               {"features", r.indices},
               {"C", r.c},
               {"score", r.score},
               {"evaluations", evals}};
      }
      std::cout << doc.dump(2) << '\n';
      if (!out.empty()) write_json(out, doc);
      return 0;
    }

    if (*predict_cmd) {
      std::optional<SvmModel> svc, svr;
      if (!svc_path.empty()) svc = load_svm_model(svc_path);
      if (!svr_path.empty()) svr = load_svm_model(svr_path);
      if (!svc && !svr) throw invalid_argument("predict needs --svc and/or --svr");
      std::vector<SlideScore> scores;
      for (const auto& row : read_features_csv(features_csv)) {
        const auto r = predict_scores(row, svc ? &*svc : nullptr, svr ? &*svr : nullptr);
        scores.push_back({r.slide, r.score_class, r.score_continuous});
      }
      write_scores_csv(ensure_parent(out), scores);
      return 0;
    }

    if (*evaluate) {
      const auto config = cfg.build();
      MetricsReport report;
      json doc;
      if (!predictions_csv.empty() || !labels_csv.empty()) {
        if (predictions_csv.empty() || labels_csv.empty())
          throw invalid_argument("--predictions and --labels go together");
        std::map<std::string, SlideScore> truth;
        for (auto& s : read_scores_csv(labels_csv)) truth[s.slide] = s;
        std::vector<int> pc, tc;
        std::vector<double> pv, tv;
        for (const auto& p : read_scores_csv(predictions_csv)) {
          const auto it = truth.find(p.slide);
          if (it == truth.end()) throw invalid_argument("no label for slide " + p.slide);
          SlideEvaluation e;
          e.slide = p.slide;
          if (p.score_class && it->second.score_class) {
            pc.push_back(*p.score_class);
            tc.push_back(*it->second.score_class);
            e.predicted_class = *p.score_class;
            e.true_class = *it->second.score_class;
          }
          if (p.score_continuous && it->second.score_continuous) {
            pv.push_back(*p.score_continuous);
            tv.push_back(*it->second.score_continuous);
            e.predicted_continuous = *p.score_continuous;
            e.true_continuous = *it->second.score_continuous;
          }
          report.slides.push_back(e);
        }
        if (!pc.empty()) report.kappa = quadratic_weighted_kappa(pc, tc);
        if (pv.size() >= 2) report.spearman = spearman(pv, tv);
      }
      if (!annotations.empty()) {
        const auto data = read_annotated_patches(annotations);
        const double mpp = config.mpp_override > 0 ? config.mpp_override : 1.0;
        const auto detector =
            make_detector(svc_path.empty() ? config.detector : svc_path, detector_params(config, mpp));
        MatchResult total;
        for (const auto& p : data) {
          const auto dets =
              detect_mitoses(detector->score_map(p.image), config.detection_threshold, config.nms_radius);
          const auto m = match_detections(dets, p.mitoses, config.match_radius);
          total.tp += m.tp;
          total.fp += m.fp;
          total.fn += m.fn;
        }
        report.detection = f1(total);
      }
      if (csv_out.empty()) {
        write_json(out, to_json(report));
      } else {
        write_metrics_report(ensure_parent(out), ensure_parent(csv_out), report);
      }
      std::cout << to_json(report).dump(2) << '\n';
      return 0;
    }

    if (*labels_cmd) {
      std::vector<SlideScore> scores;
      for (const auto& d : slide_dirs) {
        const auto slide = open_slide(fs::path(d) / "manifest.json");
        const auto t = load_ground_truth(fs::path(d) / "ground_truth.json");
        scores.push_back({slide.slide_id(), t.score_class, t.score_continuous});
      }
      write_scores_csv(ensure_parent(out), scores);
      return 0;
    }

    if (*pipeline) {
      const auto config = cfg.build();
      PipelineModels models;
      if (!svc_path.empty()) models.classifier = load_svm_model(svc_path);
      if (!svr_path.empty()) models.regressor = load_svm_model(svr_path);
      const auto r = run_pipeline(manifest, config, models, out, jobs);
      std::cout << to_json(r).dump(2) << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
