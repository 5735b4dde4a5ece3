// deepedge command-line front end.
//
//   deepedge pretrain --config PATH
//   deepedge train    --config PATH
//   deepedge predict  --config PATH --image PATH --output PATH [--mode exact|fast] [--dump-taps PATH] [--model PATH]
//   deepedge eval     --config PATH --predictions DIR --out DIR [--corpus DIR]
//   deepedge ablate   --config PATH --axis scales|layers|pooling|branches --out PATH [--mode exact|fast]
//   deepedge synth    --out DIR --images N [--seed S] [--height H] [--width W] [--annotators K]
//
// Exit codes: 0 success, 2 configuration error, 3 model or data error,
// 4 missing artifact.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "deepedge/backbone.hpp"
#include "deepedge/bench_eval.hpp"
#include "deepedge/config.hpp"
#include "deepedge/dataset.hpp"
#include "deepedge/descriptor.hpp"
#include "deepedge/heads.hpp"
#include "deepedge/image.hpp"
#include "deepedge/pipeline.hpp"
#include "deepedge/synthetic.hpp"

namespace fs = std::filesystem;
using namespace deepedge;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kMissing = 4 };

void say(const std::string& line) { std::cout << line << '\n' << std::flush; }

PredictMode parse_mode(const std::string& m) {
    if (m == "exact") return PredictMode::exact;
    if (m == "fast") return PredictMode::fast;
    throw ConfigError("unknown mode '" + m + "' (expected exact or fast)");
}

BackboneModel load_backbone(const RunConfig& cfg) {
    BackboneModel bb = load_weights(cfg.resolve(cfg.backbone_path));
    const BackboneSpec want = cfg.backbone_spec();
    if (serialize_spec(bb.spec) != serialize_spec(want))
        throw DataError("backbone file '" + cfg.resolve(cfg.backbone_path) + "' does not match the configured architecture");
    return bb;
}

LabeledCorpus load_labeled(const RunConfig& cfg, const std::string& root) {
    auto images = load_corpus(root);
    if (images.empty()) throw DataError("corpus '" + root + "' has no images");
    return label_corpus(std::move(images), cfg.canny, cfg.match_radius);
}

int cmd_pretrain(const RunConfig& cfg) {
    const BackboneSpec spec = cfg.backbone_spec();
    const auto data = synthetic::make_shape_classes(cfg.pretrain_per_class, cfg.target_size, cfg.pretrain_classes,
                                                    sub_seed(cfg.seed, "pretrain-data"));
    const auto res = pretrain_toy(spec, data, cfg.pretrain_config(), [](int epoch, const PretrainEpoch& e) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "pretrain epoch %d loss=%.6f accuracy=%.4f", epoch + 1, e.loss, e.accuracy);
        say(buf);
    });
    const std::string out = cfg.resolve(cfg.backbone_path);
    save_weights(out, spec, res.weights);
    say("wrote " + out);
    return kOk;
}

void write_holdout_dump(const std::string& path, const DescriptorSet& holdout, const TrainReport& report) {
    std::string text = "index,binary,consensus,classification,regression\n";
    char buf[160];
    for (std::size_t i = 0; i < report.mining.holdout_scores.size(); ++i) {
        const auto& s = report.mining.holdout_scores[i];
        std::snprintf(buf, sizeof buf, "%zu,%d,%.9g,%.9g,%.9g\n", i, holdout.binary[i] > 0.5f ? 1 : 0, holdout.consensus[i],
                      s.classification, s.regression);
        text += buf;
    }
    write_binary_file(path, text);
}

int cmd_train(const RunConfig& cfg) {
    const BackboneModel bb = load_backbone(cfg);
    const LabeledCorpus corpus = load_labeled(cfg, cfg.resolve(cfg.train_corpus));
    std::size_t pos = 0, total = 0;
    for (const auto& l : corpus.labels)
        for (const auto& c : l) {
            pos += c.binary;
            ++total;
        }
    say("corpus images=" + std::to_string(corpus.images.size()) + " candidates=" + std::to_string(total) +
        " positives=" + std::to_string(pos));
    const TrainingSplit split = sample_training_sets(corpus.labels, cfg.counts, cfg.seed);
    DescriptorExtractor extractor(bb, cfg.scale_config(), cfg.pooling_config());
    const DescriptorSet train = extract_descriptors(extractor, corpus, split.train);
    const DescriptorSet holdout = extract_descriptors(extractor, corpus, split.holdout);
    say("descriptors length=" + std::to_string(train.dim) + " train=" + std::to_string(train.size()) +
        " holdout=" + std::to_string(holdout.size()));
    TrainResult res = train_branches(train, holdout, cfg.train_config(), say);
    res.model.fingerprint = descriptor_fingerprint(bb, cfg.scale_config(), cfg.pooling_config());
    const std::string out = cfg.resolve(cfg.model_path);
    save_head_model(out, res.model);
    write_holdout_dump(out + ".holdout.csv", holdout, res.report);
    say("wrote " + out);
    return kOk;
}

void write_edge_map(const std::string& path, const RealMap& m) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    write_prob_map(path, m);
}

TensorFile taps_file(const FullImageTaps& full, const ScaleConfig& scales) {
    TensorFile f;
    f.header = "kind=taps\nimage_height=" + std::to_string(full.image_h) + "\nimage_width=" + std::to_string(full.image_w) + "\n";
    for (std::size_t s = 0; s < full.per_scale.size(); ++s)
        for (std::size_t l = 0; l < full.per_scale[s].taps.size(); ++l) {
            const Tensor3& t = full.per_scale[s].taps[l];
            f.tensors.push_back({"scale_" + scale_name(scales.scales[s]) + ".conv" + std::to_string(l + 1),
                                 {static_cast<std::uint32_t>(t.channels), static_cast<std::uint32_t>(t.height),
                                  static_cast<std::uint32_t>(t.width)},
                                 t.data});
        }
    return f;
}

int cmd_predict(const RunConfig& cfg, const std::string& image_path, const std::string& output, const std::string& mode_name,
                const std::string& dump_taps, const std::string& model_override) {
    const PredictMode mode = parse_mode(mode_name);
    const BackboneModel bb = load_backbone(cfg);
    const std::string fingerprint = descriptor_fingerprint(bb, cfg.scale_config(), cfg.pooling_config());
    const HeadModel model = load_head_model(model_override.empty() ? cfg.resolve(cfg.model_path) : model_override, fingerprint);
    DescriptorExtractor extractor(bb, cfg.scale_config(), cfg.pooling_config());

    std::vector<std::pair<std::string, std::string>> jobs;  // input, output
    if (fs::is_directory(image_path)) {
        for (const auto& e : detail::sorted_entries(image_path, false)) {
            const auto ext = e.extension().string();
            if (ext == ".ppm" || ext == ".pgm") jobs.emplace_back(e.string(), (fs::path(output) / (e.stem().string() + ".pgm")).string());
        }
        if (jobs.empty()) throw MissingArtifactError("no images in '" + image_path + "'", image_path);
    } else {
        jobs.emplace_back(image_path, output);
    }
    for (const auto& [in, out] : jobs) {
        const Tensor3 image = read_image(in);
        const EdgePrediction p = predict_edge_map(image, extractor, model, fingerprint, cfg.canny, mode, cfg.fast_interp);
        write_edge_map(out, p.fused);
        say("wrote " + out + " candidates=" + std::to_string(p.candidates.size()) +
            " backbone_evaluations=" + std::to_string(p.backbone_evaluations));
        if (!dump_taps.empty()) {
            const std::string path = jobs.size() == 1 ? dump_taps : (fs::path(dump_taps) / (fs::path(in).stem().string() + ".taps")).string();
            if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
            save_tensor_file(path, taps_file(extractor.precompute(image), cfg.scale_config()));
            say("wrote " + path);
        }
    }
    return kOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& predictions, const std::string& out_dir, const std::string& corpus_override) {
    const std::string root = corpus_override.empty() ? cfg.resolve(cfg.test_corpus) : corpus_override;
    if (!fs::is_directory(predictions)) throw MissingArtifactError("predictions directory not found", predictions);
    const auto corpus = load_corpus(root);
    if (corpus.empty()) throw DataError("corpus '" + root + "' has no images");
    std::vector<RealMap> maps;
    std::vector<std::vector<BinaryMap>> gts;
    for (const auto& img : corpus) {
        const std::string p = (fs::path(predictions) / (img.id + ".pgm")).string();
        if (!fs::exists(p)) throw MissingArtifactError("missing prediction for image '" + img.id + "'", p);
        RealMap m = read_prob_map(p);
        if (m.height != img.image.height || m.width != img.image.width)
            throw DimensionError("prediction " + p + " does not match the size of image '" + img.id + "'");
        maps.push_back(std::move(m));
        gts.push_back(img.annotations);
    }
    const EvalReport r = evaluate(maps, gts, cfg.eval);
    fs::create_directories(out_dir);
    write_binary_file((fs::path(out_dir) / "report.txt").string(), format_report_text(r));
    write_binary_file((fs::path(out_dir) / "pr.csv").string(), format_pr_csv(r));
    char buf[160];
    std::snprintf(buf, sizeof buf, "ODS=%.6f OIS=%.6f AP=%.6f", r.ods, r.ois, r.ap);
    say(buf);
    return kOk;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis, const std::string& out, const std::string& mode_name) {
    ablation_variants(axis, cfg);  // rejects unknown axes before any work
    const PredictMode mode = parse_mode(mode_name);
    const BackboneModel bb = load_backbone(cfg);
    const LabeledCorpus train_corpus = load_labeled(cfg, cfg.resolve(cfg.train_corpus));
    const LabeledCorpus test_corpus = load_labeled(cfg, cfg.resolve(cfg.test_corpus));
    const TrainingSplit split = sample_training_sets(train_corpus.labels, cfg.counts, cfg.seed);
    DescriptorExtractor extractor(bb, cfg.scale_config(), cfg.pooling_config());
    const DescriptorSet train = extract_descriptors(extractor, train_corpus, split.train);
    const DescriptorSet holdout = extract_descriptors(extractor, train_corpus, split.holdout);
    const CandidateDescriptors test = describe_candidates(extractor, test_corpus, mode, cfg.fast_interp);
    const auto rows = run_ablation(axis, cfg, bb, train, holdout, test, say);
    const std::string table = format_ablation_table(axis, rows);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_binary_file(out, table);
    std::cout << table;
    say("wrote " + out);
    return kOk;
}

int cmd_synth(const std::string& out, int images, std::uint64_t seed, int height, int width, int annotators) {
    if (images <= 0 || height < 16 || width < 16 || annotators <= 0) throw ConfigError("synth settings are out of range");
    synthetic::CorpusParams p;
    p.height = height;
    p.width = width;
    p.annotators = annotators;
    Rng rng(sub_seed(seed, "synth-corpus"));
    const int digits = static_cast<int>(std::to_string(images - 1).size());
    for (int i = 0; i < images; ++i) {
        const auto ci = synthetic::make_contour_image(p, rng);
        std::string id = std::to_string(i);
        id.insert(0, static_cast<std::size_t>(digits) - id.size(), '0');
        fs::create_directories(fs::path(out) / "images");
        fs::create_directories(fs::path(out) / "annotations" / id);
        write_image((fs::path(out) / "images" / (id + ".ppm")).string(), ci.image);
        for (std::size_t k = 0; k < ci.annotations.size(); ++k)
            write_binary_map((fs::path(out) / "annotations" / id / (std::to_string(k) + ".pgm")).string(), ci.annotations[k]);
    }
    say("wrote " + std::to_string(images) + " images to " + out);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale contour detection with a bifurcated head"};
    app.require_subcommand(1);

    std::string config_path, image, output, mode = "exact", dump_taps, model, predictions, out, corpus, axis;
    int images = 0, height = 120, width = 160, annotators = 5;
    std::uint64_t seed = 1;

    auto* pretrain = app.add_subcommand("pretrain", "Pretrain the backbone on the synthetic shape task");
    auto* train = app.add_subcommand("train", "Train the two head branches with hard-positive mining");
    auto* predict = app.add_subcommand("predict", "Write contour probability maps");
    auto* eval = app.add_subcommand("eval", "Benchmark prediction maps against a corpus");
    auto* ablate = app.add_subcommand("ablate", "Train and evaluate variants along one axis");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
    for (auto* sub : {pretrain, train, predict, eval, ablate})
        sub->add_option("--config", config_path, "Run configuration file")->required();
    predict->add_option("--image", image, "Input image, or a directory of images")->required();
    predict->add_option("--output", output, "Output map, or a directory when --image is one")->required();
    predict->add_option("--mode", mode, "exact or fast");
    predict->add_option("--dump-taps", dump_taps, "Also write the full-image backbone taps here");
    predict->add_option("--model", model, "Head model file (default: model_path)");
    eval->add_option("--predictions", predictions, "Directory of <id>.pgm maps")->required();
    eval->add_option("--out", out, "Directory for report.txt and pr.csv")->required();
    eval->add_option("--corpus", corpus, "Corpus to evaluate against (default: test_corpus)");
    ablate->add_option("--axis", axis, "scales, layers, pooling or branches")->required();
    ablate->add_option("--out", out, "Table file")->required();
    ablate->add_option("--mode", mode, "Descriptor mode for the test set: exact or fast");
    synth->add_option("--out", out, "Corpus root to create")->required();
    synth->add_option("--images", images, "Number of images")->required();
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--height", height, "Image height");
    synth->add_option("--width", width, "Image width");
    synth->add_option("--annotators", annotators, "Annotations per image");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }

    try {
        if (synth->parsed()) return cmd_synth(out, images, seed, height, width, annotators);
        const RunConfig cfg = load_run_config(config_path);
        if (pretrain->parsed()) return cmd_pretrain(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (predict->parsed()) return cmd_predict(cfg, image, output, mode, dump_taps, model);
        if (eval->parsed()) return cmd_eval(cfg, predictions, out, corpus);
        if (ablate->parsed()) return cmd_ablate(cfg, axis, out, mode);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const MissingArtifactError& e) {
        std::cerr << "missing: " << e.what() << " (" << e.path << ")\n";
        return kMissing;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kConfig;
}
