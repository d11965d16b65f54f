#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <opencv2/core.hpp>

#include "CLI11.hpp"
#include "egocurate/common.hpp"
#include "egocurate/counterfactual.hpp"
#include "egocurate/jsonl.hpp"
#include "egocurate/kde.hpp"
#include "egocurate/losses.hpp"
#include "egocurate/manifest.hpp"
#include "egocurate/parallel.hpp"
#include "egocurate/props.hpp"
#include "egocurate/provenance.hpp"
#include "egocurate/report.hpp"
#include "egocurate/select.hpp"

namespace ec = egocurate;
namespace fs = std::filesystem;

namespace {

std::array<double, ec::kPropertyCount> parse_weights(const std::string& csv) {
  std::array<double, ec::kPropertyCount> w{};
  std::stringstream ss(csv);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= ec::kPropertyCount)
      throw ec::ValidationError("weights need exactly 6 comma-separated values");
    w[i++] = std::stod(item);
  }
  if (i != ec::kPropertyCount)
    throw ec::ValidationError("weights need exactly 6 comma-separated values");
  return w;
}

std::vector<std::string> read_id_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in.good()) throw ec::IoError("cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ids.push_back(line);
  return ids;
}

void write_id_lines(const std::vector<std::string>& ids, const fs::path& path) {
  std::ofstream out(path);
  if (!out.good()) throw ec::IoError("cannot write " + path.string());
  for (const auto& id : ids) out << id << '\n';
  out.close();
  if (out.fail()) throw ec::IoError("write failed for " + path.string());
}

std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in.good()) throw ec::IoError("cannot open " + path.string());
  std::vector<int> labels;
  int v;
  while (in >> v) labels.push_back(v);
  return labels;
}

ec::Matrix load_feature_file(const fs::path& path) {
  return ec::load_feature_matrix(path);
}

void write_selection_result(const ec::SelectionResult& result, const fs::path& path) {
  ec::JsonlWriter out(path);
  for (const auto& round : result.rounds) {
    ec::json row;
    row["round"] = round.round;
    row["refit"] = round.refit;
    ec::json chosen = ec::json::array();
    for (const auto& c : round.chosen)
      chosen.push_back({{"id", c.id}, {"p", c.probability}});
    row["chosen"] = std::move(chosen);
    out.write(row);
  }
  ec::json final_row;
  final_row["chosen"] = result.chosen;
  final_row["final_source_size"] = result.final_source_size;
  out.write(final_row);
  out.close();
}

ec::DensityModel fit_raw_property_model(const std::vector<ec::PropertySet>& table,
                                        ec::Property p) {
  ec::PropertyRep rep = ec::property_rep(table, p);
  if (p == ec::Property::blur) {
    std::vector<double> means(rep.values.rows);
    for (std::size_t r = 0; r < rep.values.rows; ++r) means[r] = rep.values.at(r, 0);
    return ec::fit_blurriness(means, rep.blur_stds);
  }
  if (p == ec::Property::semantic && rep.values.cols > 32 && rep.values.rows > 1) {
    ec::Pca pca = ec::fit_pca(
        rep.values, std::min<std::size_t>(32, rep.values.rows - 1));
    ec::DensityModel model = ec::fit(ec::pca_project(pca, rep.values));
    ec::Pretransform pre;
    pre.mean = pca.mean;
    pre.scale.assign(pca.in_dim(), 1.0);
    pre.components = pca.components;
    model.pretransform = std::move(pre);
    return model;
  }
  return ec::fit(rep.values);
}

struct CommonState {
  int exit_code = 0;
};

void require_exists(const fs::path& path) {
  if (!fs::exists(path)) throw ec::IoError("no such file: " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  // Per-call flow results must not depend on OpenCV's internal pool;
  // parallelism lives in our own per-video workers.
  cv::setNumThreads(1);

  // CLI11 runs subcommand callbacks during parse, so the worker override has
  // to land before parsing starts.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--workers") {
      const int n = std::atoi(argv[i + 1]);
      if (n > 0) ec::worker_count_override() = n;
    }
  }

  CLI::App app{"egocurate: measures ego-video properties, fits KDE models and "
               "runs likelihood-guided dataset selection"};
  app.set_version_flag("--version", ec::kToolVersion);
  app.set_config("--config");
  app.require_subcommand(1);

  auto workers = std::make_shared<int>(0);
  app.add_option("--workers", *workers,
                 "worker threads (0 = auto; EGOCURATE_WORKERS also honored)");

  // ---- manifest ----------------------------------------------------------
  auto* manifest_cmd = app.add_subcommand("manifest", "manifest and class-table tools");
  manifest_cmd->require_subcommand(1);

  {
    auto* merge = manifest_cmd->add_subcommand("merge-classes",
                                               "merge semantically identical labels");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto threshold = std::make_shared<double>(0.95);
    merge->add_option("--in", *in, "labels jsonl ({label_text, embedding})")->required();
    merge->add_option("--out", *out, "class table jsonl")->required();
    merge->add_option("--threshold", *threshold, "cosine merge threshold");
    merge->callback([=] {
      require_exists(*in);
      std::vector<ec::LabeledVector> labels;
      ec::for_each_jsonl(*in, [&](std::size_t line_no, const ec::json& obj) {
        ec::LabeledVector lv;
        try {
          lv.text = obj.at("label_text").get<std::string>();
          lv.embedding = obj.at("embedding").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
          throw ec::ValidationError(*in + ":" + std::to_string(line_no) + ": " +
                                    e.what());
        }
        labels.push_back(std::move(lv));
      });
      ec::ClassTable table = ec::merge_classes(labels, *threshold);
      ec::write_classes(table, *out);
      ec::Provenance prov;
      prov.command = "manifest merge-classes";
      prov.config = {{"in", *in}, {"out", *out}, {"threshold", *threshold}};
      prov.add_input(*in);
      prov.write(ec::provenance_path_for(*out));
    });
  }

  {
    auto* base = manifest_cmd->add_subcommand("base-sample",
                                              "class-balanced base sampling");
    auto manifest_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto per_class = std::make_shared<int>(30);
    auto seed = std::make_shared<std::uint64_t>(0);
    base->add_option("--manifest", *manifest_path, "manifest jsonl")->required();
    base->add_option("--out", *out, "output id list (one per line)")->required();
    base->add_option("--per-class", *per_class, "instances per class");
    base->add_option("--seed", *seed, "rng seed");
    base->callback([=] {
      require_exists(*manifest_path);
      ec::Manifest manifest = ec::load_manifest(*manifest_path);
      ec::BalancedSample sample =
          ec::sample_class_balanced(manifest, *per_class, *seed);
      write_id_lines(sample.ids, *out);
      ec::Provenance prov;
      prov.command = "manifest base-sample";
      prov.config = {{"manifest", *manifest_path},
                     {"out", *out},
                     {"per_class", *per_class},
                     {"seed", *seed}};
      prov.add_input(*manifest_path);
      for (int c : sample.underpopulated_classes)
        prov.notes.push_back("class " + std::to_string(c) +
                             " underpopulated; all members taken");
      prov.write(ec::provenance_path_for(*out));
    });
  }

  // ---- props -------------------------------------------------------------
  auto* props_cmd = app.add_subcommand("props", "property extraction and ingestion");
  props_cmd->require_subcommand(1);

  auto run_props = [](const std::string& manifest_path, double fps_motion,
                      const std::string& detections, const std::string& semantics,
                      const std::string& out, bool with_frames) {
    require_exists(manifest_path);
    ec::Manifest manifest = ec::load_manifest(manifest_path);

    std::map<std::string, ec::VideoDetections> dets;
    if (!detections.empty()) {
      require_exists(detections);
      dets = ec::ingest_detections(detections, &manifest);
    }
    std::map<std::string, std::vector<double>> embeddings;
    if (!semantics.empty()) {
      require_exists(semantics);
      ec::for_each_jsonl(semantics, [&](std::size_t line_no, const ec::json& obj) {
        try {
          embeddings[obj.at("label_text").get<std::string>()] =
              obj.at("embedding").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
          throw ec::ValidationError(semantics + ":" + std::to_string(line_no) +
                                    ": " + e.what());
        }
      });
    }

    const std::size_t n = manifest.records.size();
    std::vector<ec::PropertySet> table(n);
    std::vector<std::exception_ptr> errors(n);
    ec::parallel_for(n, [&](std::size_t i) {
      try {
        const ec::VideoRecord& r = manifest.records[i];
        ec::PropertySet ps;
        ps.id = r.id;
        if (!semantics.empty()) {
          auto it = embeddings.find(r.label_text);
          if (it == embeddings.end())
            throw ec::ValidationError("no embedding for label \"" + r.label_text +
                                      "\" (record " + r.id + ")");
          ps.semantic = it->second;
        }
        if (with_frames && r.frames_path) {
          ec::FrameProps fp = ec::extract_frame_props(r, fps_motion);
          ps.motion = fp.motion;
          ps.blur = fp.blur;
        }
        auto dit = dets.find(r.id);
        if (dit != dets.end()) {
          std::vector<ec::Box> hands, objects;
          for (const auto& fd : dit->second.frames) {
            hands.insert(hands.end(), fd.hands.begin(), fd.hands.end());
            objects.insert(objects.end(), fd.objects.begin(), fd.objects.end());
          }
          ps.hand_loc = ec::summarize_locations(hands);
          ps.obj_loc = ec::summarize_locations(objects);
          ps.pose = ec::summarize_pose(ec::best_pose_per_frame(dit->second));
        }
        table[i] = std::move(ps);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    ec::write_props(table, out);
    ec::Provenance prov;
    prov.command = with_frames ? "props extract" : "props ingest";
    prov.config = {{"manifest", manifest_path},
                   {"out", out},
                   {"frames_fps_motion", fps_motion},
                   {"detections", detections},
                   {"semantics", semantics},
                   {"farneback", "pyr=0.5 levels=3 win=15 iters=3 polyn=5 polysigma=1.2"},
                   {"flow_epsilon", ec::kFlowEpsilon},
                   {"blur_resize_area", ec::kBlurResizeArea}};
    prov.add_input(manifest_path);
    if (!detections.empty()) prov.add_input(detections);
    if (!semantics.empty()) prov.add_input(semantics);
    prov.write(ec::provenance_path_for(out));
  };

  {
    auto* extract = props_cmd->add_subcommand(
        "extract", "compute motion/blur from frames, merge detections");
    auto manifest_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto fps = std::make_shared<double>(8.0);
    auto detections = std::make_shared<std::string>();
    auto semantics = std::make_shared<std::string>();
    extract->add_option("--manifest", *manifest_path)->required();
    extract->add_option("--out", *out)->required();
    extract->add_option("--frames-fps-motion", *fps, "frame sampling rate for flow");
    extract->add_option("--detections", *detections, "detections jsonl");
    extract->add_option("--semantics", *semantics, "label embeddings jsonl");
    extract->callback([=, &run_props] {
      run_props(*manifest_path, *fps, *detections, *semantics, *out, true);
    });
  }
  {
    auto* ingest = props_cmd->add_subcommand(
        "ingest", "ingest precomputed detections and embeddings only");
    auto manifest_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto detections = std::make_shared<std::string>();
    auto semantics = std::make_shared<std::string>();
    ingest->add_option("--manifest", *manifest_path)->required();
    ingest->add_option("--out", *out)->required();
    ingest->add_option("--detections", *detections, "detections jsonl");
    ingest->add_option("--semantics", *semantics, "label embeddings jsonl");
    ingest->callback([=, &run_props] {
      run_props(*manifest_path, 0.0, *detections, *semantics, *out, false);
    });
  }

  // ---- kde ---------------------------------------------------------------
  auto* kde_cmd = app.add_subcommand("kde", "density models and set similarity");
  kde_cmd->require_subcommand(1);
  {
    auto* fit_cmd = kde_cmd->add_subcommand("fit", "fit a per-property KDE model");
    auto property = std::make_shared<std::string>();
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    fit_cmd->add_option("--property", *property,
                        "semantic|hand_loc|pose|obj_loc|motion|blur")->required();
    fit_cmd->add_option("--in", *in, "props jsonl")->required();
    fit_cmd->add_option("--out", *out, "model blob")->required();
    fit_cmd->callback([=] {
      require_exists(*in);
      auto table = ec::load_props(*in);
      ec::DensityModel model =
          fit_raw_property_model(table, ec::property_from_string(*property));
      ec::save_model(model, *out);
      for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
      ec::Provenance prov;
      prov.command = "kde fit";
      prov.config = {{"property", *property}, {"in", *in}, {"out", *out}};
      prov.add_input(*in);
      prov.write(ec::provenance_path_for(*out));
    });
  }
  {
    auto* sim_cmd = kde_cmd->add_subcommand("sim", "log-similarity of a set under a model");
    auto model_path = std::make_shared<std::string>();
    auto in = std::make_shared<std::string>();
    auto property = std::make_shared<std::string>();
    sim_cmd->add_option("--model", *model_path, "model blob")->required();
    sim_cmd->add_option("--in", *in, "props jsonl of set B")->required();
    sim_cmd->add_option("--property", *property,
                        "property the model was fitted on")->required();
    sim_cmd->callback([=] {
      require_exists(*model_path);
      require_exists(*in);
      ec::DensityModel model = ec::load_model(*model_path);
      auto table = ec::load_props(*in);
      ec::PropertyRep rep =
          ec::property_rep(table, ec::property_from_string(*property));
      std::cout << ec::format_double(ec::ego_similarity(model, rep.values)) << '\n';
    });
  }

  // ---- select ------------------------------------------------------------
  auto add_selection_flags = [](CLI::App* cmd, auto mode, auto tau, auto k,
                                auto weights, auto seed) {
    cmd->add_option("--mode", *mode, "performance|balancedness");
    cmd->add_option("--tau", *tau, "softmax temperature");
    cmd->add_option("--k", *k, "KDE update frequency");
    cmd->add_option("--weights", *weights,
                    "semantic,hand,pose,obj,motion,blur weights");
    cmd->add_option("--seed", *seed, "rng seed");
  };

  {
    auto* select_cmd = app.add_subcommand("select", "Algorithm-1 video selection");
    auto source = std::make_shared<std::string>();
    auto pool = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>("balancedness");
    auto tau = std::make_shared<double>(1.0);
    auto k = std::make_shared<std::size_t>(1);
    auto target = std::make_shared<std::size_t>(0);
    auto weights = std::make_shared<std::string>("5,10,8,8,10,5");
    auto seed = std::make_shared<std::uint64_t>(0);
    select_cmd->add_option("--source", *source, "source props jsonl")->required();
    select_cmd->add_option("--pool", *pool, "pool props jsonl")->required();
    select_cmd->add_option("--out", *out, "selection result jsonl")->required();
    select_cmd->add_option("--target", *target, "target source size m")->required();
    add_selection_flags(select_cmd, mode, tau, k, weights, seed);
    select_cmd->callback([=] {
      require_exists(*source);
      require_exists(*pool);
      ec::SelectionConfig config;
      config.mode = ec::selection_mode_from_string(*mode);
      config.tau = *tau;
      config.k = *k;
      config.target = *target;
      config.weights = parse_weights(*weights);
      config.seed = *seed;
      ec::SelectionResult result =
          ec::select(ec::load_props(*source), ec::load_props(*pool), config);
      write_selection_result(result, *out);
      ec::Provenance prov;
      prov.command = "select";
      prov.config = {{"source", *source}, {"pool", *pool},   {"out", *out},
                     {"mode", *mode},     {"tau", *tau},     {"k", *k},
                     {"target", *target}, {"weights", *weights}, {"seed", *seed}};
      prov.add_input(*source);
      prov.add_input(*pool);
      prov.write(ec::provenance_path_for(*out));
    });
  }

  {
    auto* prune_cmd = app.add_subcommand("prune", "remove high-likelihood instances");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto fraction = std::make_shared<double>(0.1);
    auto tau = std::make_shared<double>(1.0);
    auto weights = std::make_shared<std::string>("5,10,8,8,10,5");
    auto seed = std::make_shared<std::uint64_t>(0);
    prune_cmd->add_option("--in", *in, "props jsonl")->required();
    prune_cmd->add_option("--out", *out, "removed ids (one per line)")->required();
    prune_cmd->add_option("--fraction", *fraction, "fraction to remove");
    prune_cmd->add_option("--tau", *tau, "softmax temperature");
    prune_cmd->add_option("--weights", *weights);
    prune_cmd->add_option("--seed", *seed);
    prune_cmd->callback([=] {
      require_exists(*in);
      auto removed =
          ec::prune(ec::load_props(*in), *fraction, parse_weights(*weights), *tau, *seed);
      write_id_lines(removed, *out);
      ec::Provenance prov;
      prov.command = "prune";
      prov.config = {{"in", *in},       {"out", *out},         {"fraction", *fraction},
                     {"tau", *tau},     {"weights", *weights}, {"seed", *seed}};
      prov.add_input(*in);
      prov.write(ec::provenance_path_for(*out));
    });
  }

  {
    auto* replace_cmd =
        app.add_subcommand("replace", "prune then refill from a pool");
    auto in = std::make_shared<std::string>();
    auto pool = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto fraction = std::make_shared<double>(0.1);
    auto mode = std::make_shared<std::string>("balancedness");
    auto tau = std::make_shared<double>(1.0);
    auto k = std::make_shared<std::size_t>(1);
    auto weights = std::make_shared<std::string>("5,10,8,8,10,5");
    auto seed = std::make_shared<std::uint64_t>(0);
    replace_cmd->add_option("--in", *in, "props jsonl")->required();
    replace_cmd->add_option("--pool", *pool, "pool props jsonl")->required();
    replace_cmd->add_option("--out", *out, "removed/added json")->required();
    replace_cmd->add_option("--fraction", *fraction);
    add_selection_flags(replace_cmd, mode, tau, k, weights, seed);
    replace_cmd->callback([=] {
      require_exists(*in);
      require_exists(*pool);
      ec::SelectionConfig config;
      config.mode = ec::selection_mode_from_string(*mode);
      config.tau = *tau;
      config.k = *k;
      config.weights = parse_weights(*weights);
      config.seed = *seed;
      ec::ReplaceResult result =
          ec::replace(ec::load_props(*in), ec::load_props(*pool), *fraction, config);
      ec::JsonlWriter writer(*out);
      writer.write({{"removed", result.removed}});
      writer.write({{"added", result.added}});
      writer.close();
      ec::Provenance prov;
      prov.command = "replace";
      prov.config = {{"in", *in},   {"pool", *pool},       {"out", *out},
                     {"fraction", *fraction}, {"mode", *mode}, {"tau", *tau},
                     {"k", *k},     {"weights", *weights}, {"seed", *seed}};
      prov.add_input(*in);
      prov.add_input(*pool);
      prov.write(ec::provenance_path_for(*out));
    });
  }

  {
    auto* build_cmd = app.add_subcommand(
        "build", "class-balanced base plus Algorithm-1 completion");
    auto manifest_path = std::make_shared<std::string>();
    auto props_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto role = std::make_shared<std::string>("pretrain");
    auto target = std::make_shared<std::size_t>(0);
    auto per_class = std::make_shared<int>(30);
    auto extend = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>("balancedness");
    auto tau = std::make_shared<double>(1.0);
    auto k = std::make_shared<std::size_t>(1);
    auto weights = std::make_shared<std::string>("5,10,8,8,10,5");
    auto seed = std::make_shared<std::uint64_t>(0);
    build_cmd->add_option("--manifest", *manifest_path)->required();
    build_cmd->add_option("--props", *props_path)->required();
    build_cmd->add_option("--out", *out, "built manifest jsonl")->required();
    build_cmd->add_option("--role", *role, "pretrain|test");
    build_cmd->add_option("--target", *target, "target dataset size")->required();
    build_cmd->add_option("--per-class", *per_class, "base instances per class");
    build_cmd->add_option("--extend", *extend,
                          "smaller built manifest to extend (nested construction)");
    add_selection_flags(build_cmd, mode, tau, k, weights, seed);
    build_cmd->callback([=] {
      require_exists(*manifest_path);
      require_exists(*props_path);
      ec::Manifest manifest = ec::load_manifest(*manifest_path);
      auto props = ec::load_props(*props_path);
      ec::SelectionConfig config;
      config.mode = ec::selection_mode_from_string(*mode);
      config.tau = *tau;
      config.k = *k;
      config.weights = parse_weights(*weights);
      config.seed = *seed;
      std::vector<std::string> extend_ids;
      if (!extend->empty()) {
        require_exists(*extend);
        for (const auto& r : ec::load_manifest(*extend).records)
          extend_ids.push_back(r.id);
      }
      ec::BuildResult result = ec::build_dataset(
          manifest, props, ec::dataset_role_from_string(*role), *target,
          *per_class, config, extend_ids);
      ec::write_manifest(result.manifest, *out);
      {
        fs::path audit = *out;
        audit.replace_extension();
        audit += ".selection.jsonl";
        write_selection_result(result.selection, audit);
      }
      ec::Provenance prov;
      prov.command = "build";
      prov.config = {{"manifest", *manifest_path},
                     {"props", *props_path},
                     {"out", *out},
                     {"role", *role},
                     {"target", *target},
                     {"per_class", *per_class},
                     {"extend", *extend},
                     {"mode", *mode},
                     {"tau", *tau},
                     {"k", *k},
                     {"weights", *weights},
                     {"seed", *seed}};
      prov.add_input(*manifest_path);
      prov.add_input(*props_path);
      if (!extend->empty()) prov.add_input(*extend);
      for (int c : result.base.underpopulated_classes)
        prov.notes.push_back("class " + std::to_string(c) +
                             " underpopulated; all members taken");
      prov.write(ec::provenance_path_for(*out));
    });
  }

  // ---- loss --------------------------------------------------------------
  {
    auto* loss_cmd = app.add_subcommand("loss", "reference loss numerics");
    auto* eval = loss_cmd->add_subcommand("eval", "evaluate one loss");
    auto which = std::make_shared<std::string>();
    auto features = std::make_shared<std::vector<std::string>>();
    auto labels_path = std::make_shared<std::string>();
    auto tau = std::make_shared<double>(ec::kDefaultCeTau);
    auto gamma = std::make_shared<double>(0.5);
    auto flip = std::make_shared<bool>(false);
    auto parts = std::make_shared<std::string>();
    auto lambda1 = std::make_shared<double>(ec::kDefaultLambda1);
    auto lambda2 = std::make_shared<double>(ec::kDefaultLambda2);
    eval->add_option("--which", *which, "kl|ce|svsa|cf|total")->required();
    eval->add_option("--features", *features,
                     "feature blobs (kl: F T; ce: Fl Fh; svsa/cf: one 2-row blob)");
    eval->add_option("--labels", *labels_path, "whitespace-separated class ids");
    eval->add_option("--tau", *tau, "softmax temperature");
    eval->add_option("--gamma", *gamma, "counterfactual margin");
    eval->add_flag("--flip-hinge", *flip, "penalize cos above gamma instead");
    eval->add_option("--parts", *parts, "total: cl,svsa,cf values");
    eval->add_option("--lambda1", *lambda1);
    eval->add_option("--lambda2", *lambda2);
    eval->callback([=] {
      double value = 0;
      auto need_features = [&](std::size_t n) {
        if (features->size() != n)
          throw ec::ValidationError("--which " + *which + " needs " +
                                    std::to_string(n) + " feature file(s)");
        for (const auto& f : *features) require_exists(f);
      };
      if (*which == "kl") {
        need_features(2);
        if (labels_path->empty())
          throw ec::ValidationError("kl loss needs --labels");
        value = ec::kl_contrastive(load_feature_file((*features)[0]),
                                   load_feature_file((*features)[1]),
                                   read_labels(*labels_path), *tau);
      } else if (*which == "ce") {
        need_features(2);
        value = ec::ce_contrastive(load_feature_file((*features)[0]),
                                   load_feature_file((*features)[1]), *tau);
      } else if (*which == "svsa") {
        need_features(1);
        ec::Matrix m = load_feature_file((*features)[0]);
        if (m.rows != 2 || m.cols != 2)
          throw ec::ValidationError("svsa blob must be 2x2 (pred row, motion row)");
        auto res = ec::svsa_loss({m.at(0, 0), m.at(0, 1)}, {m.at(1, 0), m.at(1, 1)});
        if (res.skipped) std::cerr << "note: zero camera motion, sample skipped\n";
        value = res.value;
      } else if (*which == "cf") {
        need_features(1);
        ec::Matrix m = load_feature_file((*features)[0]);
        if (m.rows != 2)
          throw ec::ValidationError("cf blob must have 2 rows (text, visual)");
        std::vector<double> t(m.row(0), m.row(0) + m.cols);
        std::vector<double> v(m.row(1), m.row(1) + m.cols);
        value = ec::counterfactual_loss(t, v, *gamma,
                                        *flip ? ec::HingeDirection::above_margin
                                              : ec::HingeDirection::below_margin);
      } else if (*which == "total") {
        if (parts->empty()) throw ec::ValidationError("total needs --parts cl,svsa,cf");
        std::stringstream ss(*parts);
        std::string item;
        std::vector<double> vals;
        while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
        if (vals.size() != 3)
          throw ec::ValidationError("--parts needs exactly 3 values");
        value = ec::total_loss({vals[0], vals[1], vals[2]}, *lambda1, *lambda2);
      } else {
        throw ec::ValidationError("unknown loss \"" + *which + "\"");
      }
      std::cout << ec::format_double(value) << '\n';
    });
  }

  // ---- cf ----------------------------------------------------------------
  {
    auto* cf_cmd = app.add_subcommand("cf", "counterfactual sample construction");
    auto* build = cf_cmd->add_subcommand("build", "modify hand evidence in frames");
    auto frames_dir = std::make_shared<std::string>();
    auto detections = std::make_shared<std::string>();
    auto id = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto alpha = std::make_shared<double>(0.25);
    auto pose_threshold = std::make_shared<double>(0.5);
    auto seed = std::make_shared<std::uint64_t>(0);
    build->add_option("--frames", *frames_dir, "directory of frames")->required();
    build->add_option("--out", *out, "output directory")->required();
    build->add_option("--detections", *detections, "detections jsonl");
    build->add_option("--id", *id, "video id in the detections file");
    build->add_option("--alpha", *alpha, "fraction of frames to modify");
    build->add_option("--pose-threshold", *pose_threshold,
                      "cosine below this counts as dissimilar");
    build->add_option("--seed", *seed);
    build->callback([=] {
      if (!fs::is_directory(*frames_dir))
        throw ec::IoError("no such directory: " + *frames_dir);
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(*frames_dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
          files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.size() < 2)
        throw ec::ValidationError("need at least 2 frames in " + *frames_dir);

      std::vector<ec::FrameImage> frames;
      for (const auto& f : files) frames.push_back(ec::load_frame(f));
      std::vector<std::optional<ec::Box>> boxes(frames.size());
      std::vector<std::optional<ec::HandPoseVector>> poses(frames.size());
      if (!detections->empty()) {
        require_exists(*detections);
        auto dets = ec::ingest_detections(*detections, nullptr);
        std::string video_id = *id;
        if (video_id.empty()) {
          if (dets.size() != 1)
            throw ec::ValidationError(
                "detections file has multiple ids; pass --id");
          video_id = dets.begin()->first;
        }
        auto it = dets.find(video_id);
        if (it == dets.end())
          throw ec::ValidationError("id \"" + video_id +
                                    "\" not in detections file");
        for (const auto& fd : it->second.frames) {
          if (fd.frame_index < 0 ||
              fd.frame_index >= static_cast<int>(frames.size()))
            continue;
          if (!fd.hands.empty()) {
            const auto* best = &fd.hands[0];
            for (const auto& h : fd.hands)
              if (h.confidence > best->confidence) best = &h;
            boxes[fd.frame_index] = *best;
          }
          if (!fd.poses.empty()) {
            const auto* best = &fd.poses[0];
            for (const auto& p : fd.poses)
              if (p.confidence > best->confidence) best = &p;
            ec::HandPoseVector v;
            v.keypoints = best->keypoints;
            v.confidence = best->confidence;
            poses[fd.frame_index] = v;
          }
        }
      }

      ec::CFConfig cfg;
      cfg.alpha = *alpha;
      cfg.pose_dissimilarity_threshold = *pose_threshold;
      cfg.seed = *seed;
      ec::CFResult result =
          ec::build_counterfactual(frames, boxes, poses, {}, cfg);

      fs::create_directories(*out);
      std::vector<bool> modified(frames.size(), false);
      for (const auto& m : result.log)
        if (m.strategy != ec::CFStrategy::skipped) modified[m.index] = true;
      for (std::size_t i = 0; i < files.size(); ++i) {
        const fs::path dst = fs::path(*out) / files[i].filename();
        if (modified[i]) {
          ec::save_frame(result.frames[i], dst);
        } else {
          fs::copy_file(files[i], dst, fs::copy_options::overwrite_existing);
        }
      }
      ec::JsonlWriter log_out(fs::path(*out) / "modification_log.jsonl");
      for (const auto& m : result.log)
        log_out.write({{"index", m.index},
                       {"strategy", ec::cf_strategy_name(m.strategy)},
                       {"donor", m.donor}});
      log_out.close();
      ec::Provenance prov;
      prov.command = "cf build";
      prov.config = {{"frames", *frames_dir},
                     {"out", *out},
                     {"detections", *detections},
                     {"id", *id},
                     {"alpha", *alpha},
                     {"pose_threshold", *pose_threshold},
                     {"seed", *seed}};
      if (!detections->empty()) prov.add_input(*detections);
      prov.write(fs::path(*out) / "provenance.json");
    });
  }

  // ---- report ------------------------------------------------------------
  {
    auto* report_cmd = app.add_subcommand("report", "emit analysis artifacts");
    auto props_paths = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    auto weights = std::make_shared<std::string>("5,10,8,8,10,5");
    auto highlight = std::make_shared<std::string>();
    report_cmd->add_option("--props", *props_paths, "props jsonl per dataset")
        ->required();
    report_cmd->add_option("--out", *out, "output directory")->required();
    report_cmd->add_option("--weights", *weights);
    report_cmd->add_option("--highlight", *highlight, "ids to highlight in PCA");
    report_cmd->callback([=] {
      std::vector<ec::DatasetReportInput> datasets;
      for (const auto& p : *props_paths) {
        require_exists(p);
        ec::DatasetReportInput ds;
        ds.name = fs::path(p).stem().string();
        ds.props = ec::load_props(p);
        datasets.push_back(std::move(ds));
      }
      ec::ReportOptions options;
      options.weights = parse_weights(*weights);
      if (!highlight->empty()) {
        require_exists(*highlight);
        options.highlight_ids = read_id_lines(*highlight);
      }
      fs::create_directories(*out);
      ec::emit_report(datasets, options, *out);
      ec::Provenance prov;
      prov.command = "report";
      prov.config = {{"out", *out},
                     {"weights", *weights},
                     {"highlight", *highlight}};
      ec::json inputs = ec::json::array();
      for (const auto& p : *props_paths) {
        inputs.push_back(p);
        prov.add_input(p);
      }
      prov.config["props"] = inputs;
      prov.write(fs::path(*out) / "provenance.json");
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ec::IoError& e) {
    std::cerr << "{\"error\":\"io\",\"message\":" << ec::json(e.what()).dump()
              << "}\n";
    return 4;
  } catch (const ec::ValidationError& e) {
    std::cerr << "{\"error\":\"validation\",\"message\":"
              << ec::json(e.what()).dump() << "}\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":\"internal\",\"message\":" << ec::json(e.what()).dump()
              << "}\n";
    return 1;
  }
  return 0;
}
