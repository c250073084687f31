#include "milasc/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "milasc/container.hpp"
#include "milasc/errors.hpp"
#include "milasc/frontend.hpp"
#include "milasc/gradsuite.hpp"
#include "milasc/runconfig.hpp"
#include "milasc/svg.hpp"
#include "milasc/training.hpp"

namespace fs = std::filesystem;

namespace milasc {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::uint64_t fnv1a64(const std::vector<unsigned char>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string sanitize_id(const std::string& path) {
    std::string id;
    for (char ch : path) {
        id += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.') ? ch : '_';
    }
    return id;
}

} // namespace

// ---------------------------------------------------------------------------
// Fold directories
// ---------------------------------------------------------------------------

void save_feature_dir(const std::string& dir, const SceneDataset& data,
                      const InstanceGroundTruth* truth, const std::string& meta) {
    fs::create_directories(dir);
    ArrayContainer container;
    container.meta = meta;
    std::ostringstream index;
    for (const auto& item : data.items) {
        container.add(item.id, item.features);
        index << item.id << "\t" << data.class_names[static_cast<std::size_t>(item.label)] << "\n";
    }
    container.save((fs::path(dir) / "features.milt").string());
    write_text((fs::path(dir) / "index.tsv").string(), index.str());

    if (truth != nullptr) {
        std::ostringstream gt;
        gt << "clip_id,class,instance_index\n";
        for (std::size_t i = 0; i < truth->clip_ids.size(); ++i) {
            for (int c = 0; c < truth->classes; ++c) {
                for (int j = 0; j < truth->instances; ++j) {
                    if (truth->is_positive(i, c, j)) {
                        gt << truth->clip_ids[i] << "," << c << "," << j << "\n";
                    }
                }
            }
        }
        write_text((fs::path(dir) / "groundtruth.csv").string(), gt.str());
    }
}

SceneDataset load_feature_dir(const std::string& dir,
                              const std::vector<std::string>* known_classes) {
    const std::string index_path = (fs::path(dir) / "index.tsv").string();
    std::ifstream in(index_path);
    if (!in) throw ValidationError("dataset: cannot open " + index_path);

    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ValidationError("dataset: " + index_path + " line " + std::to_string(line_no) +
                                  " is not <id>\\t<label>");
        }
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    if (rows.empty()) throw ValidationError("dataset: " + index_path + " is empty");

    SceneDataset data;
    if (known_classes != nullptr) {
        data.class_names = *known_classes;
    } else {
        std::set<std::string> labels;
        for (const auto& [id, label] : rows) labels.insert(label);
        data.class_names.assign(labels.begin(), labels.end());
    }
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < data.class_names.size(); ++i) {
        index[data.class_names[i]] = static_cast<int>(i);
    }

    const ArrayContainer container = ArrayContainer::load((fs::path(dir) / "features.milt").string());
    for (const auto& [id, label] : rows) {
        auto it = index.find(label);
        if (it == index.end()) {
            throw ValidationError("dataset: label '" + label + "' not among the known classes");
        }
        const Tensor* features = container.find(id);
        if (features == nullptr) {
            throw ValidationError("dataset: clip '" + id + "' missing from features.milt");
        }
        data.items.push_back({id, *features, it->second});
    }
    data.fold = fs::path(dir).filename().string();
    return data;
}

InstanceGroundTruth load_ground_truth(const std::string& dir, const SceneDataset& data) {
    const std::string path = (fs::path(dir) / "groundtruth.csv").string();
    std::ifstream in(path);
    if (!in) throw ValidationError("dataset: cannot open " + path);

    InstanceGroundTruth truth;
    truth.classes = data.classes();
    truth.instances = data.items.empty() ? 0 : instance_count(data.items[0].features.dim(1));

    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        position[data.items[i].id] = i;
        truth.clip_ids.push_back(data.items[i].id);
        truth.positive.emplace_back(static_cast<std::size_t>(truth.classes) * truth.instances, 0);
    }

    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) { // first line is the column header
            header = false;
            continue;
        }
        std::istringstream row(line);
        std::string id, cls, idx;
        if (!std::getline(row, id, ',') || !std::getline(row, cls, ',') || !std::getline(row, idx)) {
            throw ValidationError("dataset: bad ground-truth row '" + line + "'");
        }
        auto it = position.find(id);
        if (it == position.end()) {
            throw ValidationError("dataset: ground truth names unknown clip '" + id + "'");
        }
        const int c = std::stoi(cls);
        const int j = std::stoi(idx);
        if (c < 0 || c >= truth.classes || j < 0 || j >= truth.instances) {
            throw ValidationError("dataset: ground-truth row out of range: '" + line + "'");
        }
        truth.positive[it->second][static_cast<std::size_t>(c) * truth.instances + j] = 1;
    }
    return truth;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

namespace {

int cmd_featurize(const std::string& meta_path, const std::string& audio_root,
                  const std::string& out_dir, const std::string& device_filter) {
    const MetaDataset meta = load_dcase_meta(meta_path, audio_root, nullptr, device_filter);
    if (meta.missing_files > 0) {
        std::cerr << "featurize: " << meta.missing_files << " of " << meta.entries.size()
                  << " referenced audio files are missing\n";
    }
    fs::create_directories(out_dir);

    const std::string features_path = (fs::path(out_dir) / "features.milt").string();
    const std::string hashes_path = (fs::path(out_dir) / "hashes.tsv").string();

    // previously extracted entries, keyed by clip id -> source-content hash
    std::map<std::string, std::uint64_t> old_hashes;
    ArrayContainer old_container;
    if (fs::exists(features_path) && fs::exists(hashes_path)) {
        old_container = ArrayContainer::load(features_path);
        std::ifstream in(hashes_path);
        std::string id, hash;
        while (in >> id >> hash) old_hashes[id] = std::stoull(hash);
    }

    ArrayContainer container;
    container.meta = "milasc features: 40 mel bands, 40 ms frames, 50% hop\n";
    std::ostringstream index, hashes;
    int extracted = 0, skipped = 0, failed = 0;

    for (const auto& entry : meta.entries) {
        const std::string id = sanitize_id(entry.path);
        const std::string wav_path = (fs::path(audio_root) / entry.path).string();
        try {
            std::ifstream wav(wav_path, std::ios::binary);
            if (!wav) throw ValidationError("cannot open " + wav_path);
            std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(wav)),
                                             std::istreambuf_iterator<char>());
            const std::uint64_t hash = fnv1a64(bytes);

            auto prev = old_hashes.find(id);
            const Tensor* cached = old_container.find(id);
            if (prev != old_hashes.end() && prev->second == hash && cached != nullptr) {
                container.add(id, *cached);
                ++skipped;
            } else {
                const AudioClip clip = decode_wav(bytes, entry.path);
                if (clip.sample_rate != 44100) {
                    throw ValidationError(entry.path + ": sample rate " +
                                          std::to_string(clip.sample_rate) +
                                          " (expected 44100; not resampling)");
                }
                container.add(id, log_mel(clip).values);
                ++extracted;
            }
            index << id << "\t" << entry.label << "\n";
            hashes << id << "\t" << hash << "\n";
        } catch (const std::exception& e) {
            std::cerr << "featurize: " << entry.path << ": " << e.what() << "\n";
            ++failed;
        }
    }

    std::cout << "featurize: " << extracted << " extracted, " << skipped << " unchanged, " << failed
              << " failed\n";
    if (extracted > 0 || !fs::exists(features_path)) {
        container.save(features_path);
        write_text((fs::path(out_dir) / "index.tsv").string(), index.str());
        write_text(hashes_path, hashes.str());
    }
    return failed > 0 ? 1 : 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    SynthConfig config = spec_path.empty() ? SynthConfig::defaults() : SynthConfig::from_file(spec_path);
    config.spec.validate();
    fs::create_directories(out_dir);

    SyntheticSpec train_spec = config.spec;
    const SyntheticResult train_fold = generate_synthetic(train_spec, "train", 0);
    SyntheticSpec val_spec = config.spec;
    val_spec.clips_per_class = config.val_clips_per_class;
    const SyntheticResult val_fold = generate_synthetic(val_spec, "val", 1);

    const std::string meta = config.resolved_text();
    save_feature_dir((fs::path(out_dir) / "train").string(), train_fold.data, &train_fold.truth, meta);
    save_feature_dir((fs::path(out_dir) / "val").string(), val_fold.data, &val_fold.truth, meta);
    write_text((fs::path(out_dir) / "spec.resolved").string(), meta);

    std::cout << "synth: " << train_fold.data.items.size() << " train / " << val_fold.data.items.size()
              << " val clips, " << config.spec.classes << " classes, "
              << instance_count(config.spec.frames) << " instances per clip\n";
    return 0;
}

int run_training(const RunConfig& config, const std::string& out_dir) {
    const SceneDataset train_set = load_feature_dir(config.data_train);
    const SceneDataset val_set = load_feature_dir(config.data_val, &train_set.class_names);
    if (train_set.classes() != config.model.classes) {
        throw ValidationError("train: dataset has " + std::to_string(train_set.classes()) +
                              " classes but the config says " + std::to_string(config.model.classes));
    }

    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "config.resolved").string(), config.resolved_text());

    TrainOptions options = config.train;
    options.quiet = false;
    const TrainResult result = train(config.model, train_set, val_set, options);

    write_text((fs::path(out_dir) / "train_log.tsv").string(), log_to_tsv(result.log));

    ModelConfig best_config = config.model;
    best_config.seed = options.seed;
    MilModel best(best_config);
    best.load_state_dict(result.best_state);
    save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), best, config.resolved_text());

    std::cout << "train: best epoch " << result.best_epoch << ", validation accuracy "
              << result.best_accuracy << "\n";
    return 0;
}

int cmd_train(const std::string& config_path) {
    const RunConfig config = RunConfig::from_file(config_path);
    if (config.data_train.empty() || config.data_val.empty() || config.out_dir.empty()) {
        throw ValidationError("train: config must set data.train, data.val and out.dir");
    }
    return run_training(config, config.out_dir);
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& out_dir) {
    const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    MilModel model = restore_model(ckpt);
    const SceneDataset dataset = load_feature_dir(data_dir);
    if (dataset.classes() != model.config().classes) {
        throw ValidationError("evaluate: dataset has " + std::to_string(dataset.classes()) +
                              " classes but the checkpoint expects " +
                              std::to_string(model.config().classes));
    }
    const EvalResult result = evaluate(model, dataset);

    std::cout << "accuracy " << result.accuracy << " (" << dataset.items.size() << " clips)\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text((fs::path(out_dir) / "confusion.csv").string(),
                   result.confusion.to_csv(dataset.class_names));
        write_text((fs::path(out_dir) / "confusion.svg").string(),
                   confusion_svg(result.confusion, dataset.class_names));
        write_text((fs::path(out_dir) / "config.resolved").string(), ckpt.resolved_config);
    }
    return 0;
}

int cmd_gradcheck(const std::string& scale, std::uint64_t seed) {
    const bool large = scale == "large";
    const double tolerance = 1e-4;
    bool ok = true;

    std::cout << "layer gradient checks (tolerance " << tolerance << ", h = 1e-5)\n";
    for (const auto& entry : layer_gradient_suite(seed, large)) {
        const bool pass = entry.max_rel_error < tolerance;
        ok = ok && pass;
        std::cout << "  " << (pass ? "pass" : "FAIL") << "  " << entry.layer << "  max rel err "
                  << entry.max_rel_error << "\n";
    }
    for (const auto& entry : model_gradient_suite(seed, large ? 96 : 48)) {
        const bool pass = entry.max_rel_error < tolerance;
        ok = ok && pass;
        std::cout << "  " << (pass ? "pass" : "FAIL") << "  " << entry.layer << "  max rel err "
                  << entry.max_rel_error << "\n";
    }
    std::cout << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
    return ok ? 0 : 2;
}

int cmd_sweep_k(const std::string& config_path, const std::string& k_list_text) {
    RunConfig config = RunConfig::from_file(config_path);
    if (config.data_train.empty() || config.data_val.empty() || config.out_dir.empty()) {
        throw ValidationError("sweep-k: config must set data.train, data.val and out.dir");
    }
    std::vector<int> k_values;
    {
        std::istringstream is(k_list_text);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            if (!tok.empty()) k_values.push_back(std::stoi(tok));
        }
    }
    if (k_values.empty()) throw ValidationError("sweep-k: empty K list");

    const SceneDataset train_set = load_feature_dir(config.data_train);
    const SceneDataset val_set = load_feature_dir(config.data_val, &train_set.class_names);
    fs::create_directories(config.out_dir);

    std::vector<double> xs, ys;
    std::ostringstream csv;
    csv << "k,val_accuracy,best_epoch\n";
    std::cout << "k\tval_accuracy\tbest_epoch\n";
    for (int k : k_values) {
        ModelConfig mc = config.model;
        mc.head = HeadKind::md;
        mc.sub_detectors = k;
        const TrainResult r = train(mc, train_set, val_set, config.train);
        xs.push_back(k);
        ys.push_back(r.best_accuracy);
        csv << k << "," << r.best_accuracy << "," << r.best_epoch << "\n";
        std::cout << k << "\t" << r.best_accuracy << "\t" << r.best_epoch << "\n";
    }
    write_text((fs::path(config.out_dir) / "sweep_k.csv").string(), csv.str());
    write_text((fs::path(config.out_dir) / "sweep_k.svg").string(),
               line_plot_svg(xs, ys, "K (sub-detectors per class)", "validation accuracy",
                             "Influence of K"));
    write_text((fs::path(config.out_dir) / "config.resolved").string(), config.resolved_text());
    return 0;
}

int cmd_inspect(const std::string& checkpoint_path, const std::string& data_dir,
                const std::string& clip_id, const std::string& svg_path) {
    const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    MilModel model = restore_model(ckpt);
    const SceneDataset dataset = load_feature_dir(data_dir);

    const SceneDataset::Item* item = nullptr;
    for (const auto& it : dataset.items) {
        if (it.id == clip_id) {
            item = &it;
            break;
        }
    }
    if (item == nullptr) throw ValidationError("inspect: clip '" + clip_id + "' not in " + data_dir);

    Tensor x({1, 1, item->features.dim(0), item->features.dim(1)});
    std::copy_n(item->features.data(), static_cast<std::size_t>(item->features.size()), x.data());
    const auto out = model.forward(x, Mode::eval);
    const Prediction pred = aggregate_batch(out.instance_scores)[0];

    std::cout << "clip " << item->id << " (true label "
              << dataset.class_names[static_cast<std::size_t>(item->label)] << ")\n";
    std::cout << "predicted: " << dataset.class_names[static_cast<std::size_t>(classify(pred))]
              << "\n\nbag scores:\n";
    std::cout.precision(6);
    for (int c = 0; c < pred.bag_scores.size(); ++c) {
        const int j = pred.argmax_instance[static_cast<std::size_t>(c)];
        std::cout << "  " << dataset.class_names[static_cast<std::size_t>(c)] << "  "
                  << std::fixed << pred.bag_scores[c] << "  argmax instance " << j << " (frames "
                  << j * kInstanceStride << ".." << (j + 1) * kInstanceStride << ")\n";
    }
    std::cout << "\ninstance scores (rows = classes, columns = instances):\n";
    const int m = pred.instance_scores.dim(1);
    for (int c = 0; c < pred.instance_scores.dim(0); ++c) {
        std::cout << "  ";
        for (int j = 0; j < m; ++j) std::cout << pred.instance_scores.at(c, j) << " ";
        std::cout << "\n";
    }
    if (!svg_path.empty()) {
        write_text(svg_path, inspect_svg(item->features, pred, dataset.class_names));
        std::cout << "\nwrote " << svg_path << "\n";
    }
    return 0;
}

} // namespace

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Multi-instance-learning acoustic scene classifier"};
    app.require_subcommand(1);

    // featurize
    std::string meta_path, audio_root, out_dir, device_filter;
    auto* featurize = app.add_subcommand("featurize", "Extract log-mel features from a WAV corpus");
    featurize->add_option("--meta", meta_path, "DCASE-style meta TSV (path<TAB>label)")->required();
    featurize->add_option("--audio-root", audio_root, "Directory the meta paths are relative to")
        ->required();
    featurize->add_option("--out", out_dir, "Output directory")->required();
    featurize->add_option("--device-filter", device_filter,
                          "Keep only filenames containing this substring (e.g. -a.wav)");

    // synth
    std::string spec_path, synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
    synth->add_option("--spec", spec_path, "synth.* key=value recipe file (defaults when omitted)");
    synth->add_option("--out", synth_out, "Output directory")->required();

    // train
    std::string train_config;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a run config");
    train_cmd->add_option("--config", train_config, "key=value run config")->required();

    // evaluate
    std::string eval_ckpt, eval_data, eval_out;
    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a fold");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "Featurized fold directory")->required();
    eval_cmd->add_option("--out", eval_out, "Directory for confusion CSV/SVG");

    // gradcheck
    std::string scale = "small";
    std::uint64_t gc_seed = 1;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every layer");
    gradcheck->add_option("--scale", scale, "small or large probe shapes")
        ->check(CLI::IsMember({"small", "large"}));
    gradcheck->add_option("--seed", gc_seed, "Probe seed");

    // sweep-k
    std::string sweep_config, k_list = "2,4,6,8,10";
    auto* sweep = app.add_subcommand("sweep-k", "Train the MD variant across K values");
    sweep->add_option("--config", sweep_config, "key=value run config")->required();
    sweep->add_option("--k-list", k_list, "Comma-separated K values");

    // inspect
    std::string ins_ckpt, ins_data, ins_clip, ins_svg;
    auto* inspect = app.add_subcommand("inspect", "Per-instance scores for one clip");
    inspect->add_option("--checkpoint", ins_ckpt, "Checkpoint file")->required();
    inspect->add_option("--data", ins_data, "Featurized fold directory")->required();
    inspect->add_option("--clip", ins_clip, "Clip id (see index.tsv)")->required();
    inspect->add_option("--svg", ins_svg, "Optional SVG output path");

    std::vector<const char*> argv;
    argv.push_back("milasc");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (featurize->parsed()) return cmd_featurize(meta_path, audio_root, out_dir, device_filter);
        if (synth->parsed()) return cmd_synth(spec_path, synth_out);
        if (train_cmd->parsed()) return cmd_train(train_config);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_ckpt, eval_data, eval_out);
        if (gradcheck->parsed()) return cmd_gradcheck(scale, gc_seed);
        if (sweep->parsed()) return cmd_sweep_k(sweep_config, k_list);
        if (inspect->parsed()) return cmd_inspect(ins_ckpt, ins_data, ins_clip, ins_svg);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace milasc
