#include "panoseg/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "panoseg/checkpoint.hpp"
#include "panoseg/cli/verify.hpp"
#include "panoseg/dataset.hpp"
#include "panoseg/fusion.hpp"
#include "panoseg/ptns.hpp"
#include "panoseg/training.hpp"

namespace panoseg::cli {

namespace fs = std::filesystem;

namespace {

std::optional<nn::PrecisionScope> precision_for(bool f64) {
    if (!f64) return std::nullopt;
    return std::optional<nn::PrecisionScope>(std::in_place, nn::Precision::f64);
}

// Runs `body`, mapping exceptions to exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const data::DataError& e) {
        err << "data error: " << e.what() << '\n';
    } catch (const io::PtnsError& e) {
        err << "data error: " << e.what() << '\n';
    } catch (const io::CheckpointMismatch& e) {
        err << "checkpoint mismatch: " << e.what() << '\n';
    } catch (const fs::filesystem_error& e) {
        err << "io error: " << e.what() << '\n';
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    return kDataError;
}

void write_text(const fs::path& path, const std::string& text) {
    io::write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string ratio_tag(double r) {
    std::ostringstream s;
    s << r;
    return s.str();
}

struct LoadedModel {
    RunConfig cfg;
    std::unique_ptr<SegModel> model;
};

LoadedModel load_model(const std::string& ckpt, const std::string& config) {
    const fs::path ckpt_path(ckpt);
    if (!fs::exists(ckpt_path)) throw data::DataError("checkpoint not found: " + ckpt);
    const fs::path cfg_path = config.empty() ? ckpt_path.parent_path() / "config.json" : fs::path(config);
    if (!fs::exists(cfg_path)) throw data::DataError("config not found: " + cfg_path.string());
    LoadedModel m;
    try {
        m.cfg = read_run_config(cfg_path);
    } catch (const std::invalid_argument& e) {
        throw data::DataError(e.what());
    }
    m.model = std::make_unique<SegModel>(m.cfg.model, m.cfg.seed);
    io::load_checkpoint(ckpt_path, m.model->parameters());
    return m;
}

void check_dims(const ModelConfig& model, std::size_t h, std::size_t w) {
    if (model.encoder.image_h != h || model.encoder.image_w != w) {
        throw data::DataError("data is " + std::to_string(h) + "x" + std::to_string(w) + " but the model expects " +
                              std::to_string(model.encoder.image_h) + "x" + std::to_string(model.encoder.image_w));
    }
}

}  // namespace

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (args.samples == 0) throw std::invalid_argument("--samples must be positive");
        data::GenerateOptions opt;
        opt.samples = args.samples;
        opt.height = args.height;
        opt.seed = args.seed;
        const auto m = data::generate_dataset(args.out, opt);
        out << "wrote " << args.samples << " samples (" << m.train.size() << " train, " << m.val.size() << " val) to "
            << args.out << '\n';
        out << "d_t " << m.d_t << '\n';
        return kOk;
    });
}

int cmd_train(RunConfig cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (cfg.data_dir.empty() || cfg.out_dir.empty()) throw std::invalid_argument("--data and --out are required");
        const auto precision = precision_for(cfg.f64);
        const auto manifest = data::read_manifest(cfg.data_dir);
        cfg.model.encoder.image_h = manifest.height;
        cfg.model.encoder.image_w = manifest.width;
        cfg.model.num_classes = manifest.k;
        cfg.d_t = manifest.d_t;
        cfg.model.validate();
        const auto samples =
            data::read_split(cfg.data_dir, manifest, "train", data::read_options_for(cfg.model.modalities));

        SegModel model(cfg.model, cfg.seed);
        const auto total = nn::parameter_count(model.parameters());
        const auto trainable = nn::parameter_count(model.trainable_parameters(cfg.freeze_encoder));
        out << "parameters: total " << total << ", trainable " << trainable << ", frozen " << (total - trainable) << '\n';

        fs::create_directories(cfg.out_dir);
        train::TrainOptions opt;
        opt.epochs = cfg.epochs;
        opt.lr = cfg.lr;
        opt.loss = {cfg.loss, cfg.loss_period};
        opt.batch_size = cfg.batch_size;
        opt.augment = cfg.augment;
        opt.freeze_encoder = cfg.freeze_encoder;
        opt.aux_weight = cfg.aux_weight;
        opt.seed = cfg.seed;
        opt.on_epoch = [&](const train::EpochStats& s) {
            out << "epoch " << s.epoch + 1 << "/" << cfg.epochs << " loss " << std::setprecision(6) << s.mean_loss << " ("
                << train::to_string(s.loss) << ")\n";
        };
        const auto history = train::train_model(model, samples, cfg.d_t, opt);

        std::ostringstream csv;
        csv << "epoch,loss,mode\n" << std::setprecision(17);
        for (const auto& e : history.epochs) csv << e.epoch + 1 << ',' << e.mean_loss << ',' << train::to_string(e.loss) << '\n';
        const fs::path dir(cfg.out_dir);
        write_text(dir / "losses.csv", csv.str());
        io::save_checkpoint(dir / "checkpoint.bin", model.parameters());
        write_run_config(dir / "config.json", cfg);
        out << "wrote " << (dir / "checkpoint.bin").string() << '\n';
        return kOk;
    });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        for (double r : args.edge_ratios) {
            if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("edge ratios must lie in (0, 1]");
        }
        auto loaded = load_model(args.ckpt, args.config);
        const auto precision = precision_for(loaded.cfg.f64);
        const auto& mcfg = loaded.cfg.model;
        const auto manifest = data::read_manifest(args.data);
        check_dims(mcfg, manifest.height, manifest.width);
        if (manifest.k != mcfg.num_classes) throw data::DataError("class count differs between dataset and checkpoint");
        const auto samples = data::read_split(args.data, manifest, args.split, data::read_options_for(mcfg.modalities));

        train::EvalOptions opt;
        opt.single_view = args.single_view;
        opt.refine = args.refine;
        opt.edge_ratios = args.edge_ratios;
        const auto result = train::evaluate(*loaded.model, samples, loaded.cfg.d_t, opt);

        const fs::path dir = args.out.empty() ? fs::path(args.ckpt).parent_path() / "eval" : fs::path(args.out);
        fs::create_directories(dir);
        const auto& names = manifest.classes;
        std::ostringstream summary;
        summary << "variant,ratio,miou,macc\n" << std::setprecision(10);
        auto emit = [&](const std::string& variant, const std::string& file, const std::string& ratio, const train::MetricReport& r) {
            std::ostringstream csv;
            train::write_metrics_csv(csv, r, names);
            write_text(dir / file, csv.str());
            summary << variant << ',' << ratio << ',' << r.miou << ',' << r.macc << '\n';
            out << std::left << std::setw(8) << variant << " " << std::setw(6) << ratio << " mIoU " << std::fixed
                << std::setprecision(2) << 100.0 * r.miou << "  mAcc " << 100.0 * r.macc << std::defaultfloat << '\n';
        };
        emit("base", "global.csv", "global", result.global);
        for (const auto& e : result.edges) emit("base", "edge_" + ratio_tag(e.ratio) + ".csv", ratio_tag(e.ratio), e.report);
        if (result.refined_global) {
            emit("refined", "refined_global.csv", "global", *result.refined_global);
            for (const auto& e : result.refined_edges) {
                emit("refined", "refined_edge_" + ratio_tag(e.ratio) + ".csv", ratio_tag(e.ratio), e.report);
            }
        }
        write_text(dir / "summary.csv", summary.str());
        return kOk;
    });
}

void write_label_ppm(const std::string& path, const LabelMap& labels) {
    std::ostringstream s;
    s << "P6\n" << labels.width << ' ' << labels.height << "\n255\n";
    std::string bytes = s.str();
    for (auto l : labels.values) {
        for (double c : data::class_color(l)) bytes.push_back(static_cast<char>(std::lround(c * 255.0)));
    }
    write_text(path, bytes);
}

int cmd_infer(const InferArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (args.sample.empty() || args.out.empty()) throw std::invalid_argument("--sample and --out are required");
        auto loaded = load_model(args.ckpt, args.config);
        const auto precision = precision_for(loaded.cfg.f64);
        fs::path sample_dir = fs::path(args.sample);
        if (!sample_dir.has_filename()) sample_dir = sample_dir.parent_path();
        const auto sample = data::read_sample(sample_dir.parent_path(), sample_dir.filename().string(),
                                              data::read_options_for(loaded.cfg.model.modalities));
        check_dims(loaded.cfg.model, sample.height(), sample.width());
        const auto pred = train::predict(*loaded.model, sample, loaded.cfg.d_t, args.single_view, args.refine);
        const LabelMap& labels = pred.refined ? *pred.refined : pred.labels;
        const fs::path dir(args.out);
        fs::create_directories(dir);
        io::write_tensor(dir / "labels.ptns", labels, io::DType::u8);
        write_label_ppm((dir / "labels.ppm").string(), labels);
        out << "wrote " << (dir / "labels.ptns").string() << " and " << (dir / "labels.ppm").string() << " (" << labels.height
            << "x" << labels.width << ")\n";
        return kOk;
    });
}

int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (args.suite != "grads" && args.suite != "oracles" && args.suite != "all") {
            throw std::invalid_argument("--suite must be grads, oracles or all");
        }
        struct FaultReset {
            ~FaultReset() { fusion::set_mcbam_backward_fault(false); }
        } reset;
        fusion::set_mcbam_backward_fault(args.inject_fault);
        VerifyOptions opt;
        opt.seeds = args.seeds;
        std::vector<CheckResult> results;
        if (args.suite != "oracles") {
            auto g = run_grad_suite(opt);
            results.insert(results.end(), g.begin(), g.end());
        }
        if (args.suite != "grads") {
            auto o = run_oracle_suite(opt);
            results.insert(results.end(), o.begin(), o.end());
        }
        print_results(out, results);
        return all_pass(results) ? kOk : kVerifyFailed;
    });
}

namespace {

std::vector<encoder::Modality> parse_modalities(const std::string& list) {
    std::vector<encoder::Modality> mods;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) mods.push_back(encoder::modality_from_string(item));
    }
    std::sort(mods.begin(), mods.end());
    mods.erase(std::unique(mods.begin(), mods.end()), mods.end());
    if (mods.empty() || mods.front() != encoder::Modality::rgb) throw std::invalid_argument("--modalities must include rgb");
    return mods;
}

std::vector<double> parse_ratios(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad edge ratio '" + item + "'");
        }
    }
    return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Panoramic semantic segmentation toolkit", "panoseg"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic equirectangular dataset");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--samples", gen.samples, "Number of samples");
    gen_cmd->add_option("--height", gen.height, "Image height (width is twice this)");
    gen_cmd->add_option("--seed", gen.seed, "Random seed");

    std::string config_path, modalities, loss, attention;
    std::vector<std::size_t> window, stride;
    RunConfig tr;
    bool dual = false, no_dual = false, no_branches = false, f64 = false, no_augment = false;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", config_path, "Base run config (JSON); flags override it");
    auto* o_data = train_cmd->add_option("--data", tr.data_dir, "Dataset directory");
    auto* o_out = train_cmd->add_option("--out", tr.out_dir, "Output directory");
    auto* o_mods = train_cmd->add_option("--modalities", modalities, "Comma list from rgb,d,n");
    train_cmd->add_flag("--dual-view", dual, "Enable dual-view fusion (default)");
    train_cmd->add_flag("--no-dual-view", no_dual, "Single-view model");
    auto* o_loss = train_cmd->add_option("--loss", loss, "jaccard|ce|alternating");
    auto* o_epochs = train_cmd->add_option("--epochs", tr.epochs, "Training epochs");
    auto* o_lr = train_cmd->add_option("--lr", tr.lr, "Learning rate");
    auto* o_seed = train_cmd->add_option("--seed", tr.seed, "Random seed");
    auto* o_batch = train_cmd->add_option("--batch-size", tr.batch_size, "Samples per optimizer step");
    train_cmd->add_flag("--freeze-encoder", tr.freeze_encoder, "Keep encoder weights fixed");
    auto* o_att = train_cmd->add_option("--attention", attention, "none|channel|cbam|mcbam");
    train_cmd->add_flag("--no-branches", no_branches, "Use the final encoder output only");
    auto* o_win = train_cmd->add_option("--mcbam-window", window, "Window height and width")->expected(2);
    auto* o_str = train_cmd->add_option("--mcbam-stride", stride, "Stride height and width")->expected(2);
    train_cmd->add_flag("--no-augment", no_augment, "Disable augmentation");
    train_cmd->add_flag("--f64", f64, "64-bit arithmetic");

    EvalArgs ev;
    std::string ratios = "0.1,0.3,0.5";
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
    eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--config", ev.config, "Run config (default: next to the checkpoint)");
    eval_cmd->add_option("--out", ev.out, "Directory for metric CSVs");
    eval_cmd->add_option("--split", ev.split, "train|val");
    eval_cmd->add_option("--edge-ratios", ratios, "Comma list of edge ratios");
    eval_cmd->add_flag("--refine", ev.refine, "Also report instance-refined metrics");
    eval_cmd->add_flag("--single-view", ev.single_view, "Bypass the dual-view blend");

    InferArgs inf;
    auto* infer_cmd = app.add_subcommand("infer", "Predict labels for one sample");
    infer_cmd->add_option("--ckpt", inf.ckpt, "Checkpoint file")->required();
    infer_cmd->add_option("--config", inf.config, "Run config (default: next to the checkpoint)");
    infer_cmd->add_option("--sample", inf.sample, "Sample directory")->required();
    infer_cmd->add_option("--out", inf.out, "Output directory")->required();
    infer_cmd->add_flag("--refine", inf.refine, "Apply instance-guided refinement");
    infer_cmd->add_flag("--single-view", inf.single_view, "Bypass the dual-view blend");

    VerifyArgs ver;
    auto* verify_cmd = app.add_subcommand("verify", "Run gradient checks and oracle comparisons");
    verify_cmd->add_option("--suite", ver.suite, "grads|oracles|all");
    verify_cmd->add_option("--seeds", ver.seeds, "Seeds per check");
    verify_cmd->add_flag("--inject-fault", ver.inject_fault)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return kUsage;
    }

    if (*gen_cmd) return cmd_gen_data(gen, out, err);
    if (*eval_cmd) {
        try {
            ev.edge_ratios = parse_ratios(ratios);
        } catch (const std::invalid_argument& e) {
            err << "error: " << e.what() << '\n';
            return kUsage;
        }
        return cmd_eval(ev, out, err);
    }
    if (*infer_cmd) return cmd_infer(inf, out, err);
    if (*verify_cmd) return cmd_verify(ver, out, err);

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = read_run_config(config_path);
        if (*o_data) cfg.data_dir = tr.data_dir;
        if (*o_out) cfg.out_dir = tr.out_dir;
        if (*o_epochs) cfg.epochs = tr.epochs;
        if (*o_lr) cfg.lr = tr.lr;
        if (*o_seed) cfg.seed = tr.seed;
        if (*o_batch) cfg.batch_size = tr.batch_size;
        if (*o_mods) cfg.model.modalities = parse_modalities(modalities);
        if (*o_loss) cfg.loss = train::loss_mode_from_string(loss);
        if (*o_att) cfg.model.attention = fusion::attention_mode_from_string(attention);
        if (*o_win) cfg.model.mcbam.window_h = window[0], cfg.model.mcbam.window_w = window[1];
        if (*o_str) cfg.model.mcbam.stride_h = stride[0], cfg.model.mcbam.stride_w = stride[1];
        if (dual && no_dual) throw std::invalid_argument("--dual-view and --no-dual-view are exclusive");
        if (dual) cfg.model.dual_view = true;
        if (no_dual) cfg.model.dual_view = false;
        if (no_branches) cfg.model.use_branches = false;
        if (tr.freeze_encoder) cfg.freeze_encoder = true;
        if (no_augment) cfg.augment = false;
        if (f64) cfg.f64 = true;
        cfg = run_config_from_json(to_json(cfg));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
    return cmd_train(cfg, out, err);
}

}  // namespace panoseg::cli
