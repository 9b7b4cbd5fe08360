#include "nss/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nss/gan.hpp"
#include "nss/hadamard.hpp"
#include "nss/metrics.hpp"
#include "nss/scalespace.hpp"
#include "nss/tensorio.hpp"

namespace nss::cli {
namespace {

using nlohmann::ordered_json;

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Fully resolved command line of one run, replayable through dispatch().
class Resolved {
public:
    explicit Resolved(std::string subcommand) { args_.push_back(std::move(subcommand)); }

    Resolved& add(const std::string& flag, const std::string& value) {
        args_.push_back(flag);
        args_.push_back(value);
        config_[flag.substr(2)] = value;
        return *this;
    }
    Resolved& add(const std::string& flag, double value) { return add(flag, exact(value)); }
    Resolved& add(const std::string& flag, std::uint64_t value) { return add(flag, std::to_string(value)); }
    Resolved& add(const std::string& flag, int value) { return add(flag, std::to_string(value)); }
    Resolved& add(const std::string& flag, unsigned value) { return add(flag, std::to_string(value)); }

    void write_manifest(const std::string& primary_output, std::uint64_t seed,
                        const std::vector<std::string>& outputs) const {
        ordered_json m;
        m["tool"] = kToolName;
        m["version"] = kToolVersion;
        m["subcommand"] = args_.front();
        m["seed"] = seed;
        m["config"] = config_;
        m["outputs"] = outputs;
        m["args"] = args_;
        const auto path = manifest_path_for(primary_output);
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + path);
        f << m.dump(2) << '\n';
        if (!f) throw IoError("write failure: " + path);
    }

private:
    std::vector<std::string> args_;
    ordered_json config_ = ordered_json::object();
};

const std::vector<std::string> kKinds = {"none", "ss", "ns", "nss"};

struct Common {
    std::uint64_t seed = kDefaultSeed;
    unsigned threads = 1;

    void attach(CLI::App* app) {
        app->add_option("--seed", seed, "Random seed")->capture_default_str();
        app->add_option("--threads", threads, "Worker threads (0 = all cores); never changes outputs")
            ->capture_default_str();
    }
    void resolve(Resolved& r) const { r.add("--seed", seed).add("--threads", threads); }
};

// Each subcommand registers its flags and returns the action to run once
// parsing has succeeded.
using Action = std::function<void(std::ostream&)>;

Action gen_hadamard(CLI::App& app) {
    auto* sub = app.add_subcommand("gen-hadamard", "Synthesize a Hadamard-stripe dataset");
    struct Opts : Common {
        std::size_t count = hadamard::kFullCorpusSize;
        std::string out;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--count", o->count, "Number of 8x8 images")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--out", o->out, "Output NSST file")->required();
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        const Batch batch = hadamard::gen_dataset(o->count, o->seed, o->threads);
        write_tensor(batch, o->out);
        Resolved r("gen-hadamard");
        r.add("--count", static_cast<std::uint64_t>(o->count)).add("--out", o->out);
        o->resolve(r);
        r.write_manifest(o->out, o->seed, {o->out});
        out << "wrote " << batch.size() << " images to " << o->out << '\n';
    };
}

Action filter(CLI::App& app) {
    auto* sub = app.add_subcommand("filter", "Project a dataset into scale-space, noise-space or noisy scale-space");
    struct Opts : Common {
        std::string in, out, kind = "nss";
        int t = 8;
        double sigma = 0.15;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--in", o->in, "Input NSST file")->required();
    sub->add_option("--out", o->out, "Output NSST file")->required();
    sub->add_option("--kind", o->kind, "Representation")->capture_default_str()->check(CLI::IsMember(kKinds));
    sub->add_option("--t", o->t, "Filter steps")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--sigma", o->sigma, "Per-step noise std")->capture_default_str()->check(CLI::NonNegativeNumber);
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        const Batch batch = read_tensor(o->in);
        const FilterSpec spec{parse_filter_kind(o->kind), o->t, o->sigma, gaussian_kernel3()};
        const Batch filtered = apply_filter(batch, spec, RngStream(o->seed, streams::kFilter), o->threads);
        write_tensor(filtered, o->out);
        Resolved r("filter");
        r.add("--in", o->in).add("--out", o->out).add("--kind", o->kind).add("--t", o->t).add("--sigma", o->sigma);
        o->resolve(r);
        r.write_manifest(o->out, o->seed, {o->out});
        out << "filtered " << filtered.size() << " images (" << o->kind << ", t=" << o->t << ") to " << o->out << '\n';
    };
}

Action anneal(CLI::App& app) {
    auto* sub = app.add_subcommand("anneal", "Tabulate the annealing schedule t(i)");
    struct Opts : Common {
        int T = 256;
        double beta = 20.0;
        std::size_t samples = 11;
        std::string out;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--T", o->T, "Initial time")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--beta", o->beta, "Decay power")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--samples", o->samples, "Grid points over [0, 1]")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--out", o->out, "CSV output (default: stdout)");
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        std::ostringstream csv;
        csv << "i,t\n";
        const AnnealSchedule schedule{o->T, o->beta};
        for (std::size_t k = 0; k < o->samples; ++k) {
            const double i = o->samples == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(o->samples - 1);
            csv << exact(i) << ',' << anneal_t(i, schedule) << '\n';
        }
        if (o->out.empty()) {
            out << csv.str();
            return;
        }
        std::ofstream f(o->out, std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + o->out);
        f << csv.str();
        if (!f) throw IoError("write failure: " + o->out);
        Resolved r("anneal");
        r.add("--T", o->T).add("--beta", o->beta).add("--samples", static_cast<std::uint64_t>(o->samples)).add("--out", o->out);
        o->resolve(r);
        r.write_manifest(o->out, o->seed, {o->out});
        out << "wrote " << o->samples << " schedule points to " << o->out << '\n';
    };
}

Action variance_curve(CLI::App& app) {
    auto* sub = app.add_subcommand("variance-curve", "Pooled pixel variance against filter time");
    struct Opts : Common {
        std::string in, out, kind = "all";
        std::size_t count = 128;
        double sigma = 0.15;
        std::vector<int> t_values = {0, 4, 16, 64, 256};
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--in", o->in, "Input NSST file (default: a fresh Hadamard batch)");
    sub->add_option("--count", o->count, "Images in the fresh Hadamard batch when --in is absent")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", o->out, "CSV output")->required();
    sub->add_option("--kind", o->kind, "Representation or 'all'")
        ->capture_default_str()
        ->check(CLI::IsMember({"all", "ss", "ns", "nss", "none"}));
    sub->add_option("--sigma", o->sigma, "Per-step noise std")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--t", o->t_values, "Comma-separated ascending filter times")->delimiter(',')->capture_default_str();
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        const Batch batch = o->in.empty() ? hadamard::gen_dataset(o->count, o->seed, o->threads) : read_tensor(o->in);
        std::vector<FilterKind> kinds;
        if (o->kind == "all")
            kinds = {FilterKind::ScaleSpace, FilterKind::NoiseSpace, FilterKind::NoisyScaleSpace};
        else
            kinds = {parse_filter_kind(o->kind)};
        std::vector<metrics::VarianceCurve> curves;
        for (auto kind : kinds) {
            const RngStream base = RngStream(o->seed, streams::kCurve).derive(static_cast<std::uint64_t>(kind));
            curves.push_back(metrics::variance_curve(batch, kind, o->sigma, o->t_values, base, o->threads));
        }
        metrics::write_curves_csv(curves, o->out);

        std::string ts;
        for (int t : o->t_values) ts += (ts.empty() ? "" : ",") + std::to_string(t);
        Resolved r("variance-curve");
        if (!o->in.empty()) r.add("--in", o->in);
        r.add("--count", static_cast<std::uint64_t>(o->count)).add("--out", o->out).add("--kind", o->kind);
        r.add("--sigma", o->sigma).add("--t", ts);
        o->resolve(r);
        r.write_manifest(o->out, o->seed, {o->out});
        out << "wrote " << curves.size() << " variance curve(s) to " << o->out << '\n';
    };
}

Action train(CLI::App& app) {
    auto* sub = app.add_subcommand("train", "Train the GAN with a filtered loss");
    struct Opts : Common {
        std::string in, out, report, kind = "nss", half_batch = "on";
        std::optional<int> t;
        int T = 256;
        double beta = 20.0;
        double sigma = 0.15;
        std::size_t epochs = 30, batch = 128, latent_dim = 16;
        double lr = 2e-5, b1 = 0.5, b2 = 0.999;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--in", o->in, "Training dataset (NSST)")->required();
    sub->add_option("--out", o->out, "Checkpoint output")->required();
    sub->add_option("--report", o->report, "History CSV output (step,i,t,d_obj,g_obj)");
    sub->add_option("--kind", o->kind, "Representation")->capture_default_str()->check(CLI::IsMember(kKinds));
    auto* t_opt = sub->add_option("--t", o->t, "Fixed filter time (disables annealing)")->check(CLI::NonNegativeNumber);
    auto* T_opt = sub->add_option("--T", o->T, "Initial annealing time")->capture_default_str()->check(CLI::NonNegativeNumber);
    auto* beta_opt = sub->add_option("--beta", o->beta, "Annealing decay power")->capture_default_str()->check(CLI::PositiveNumber);
    t_opt->excludes(T_opt)->excludes(beta_opt);
    sub->add_option("--sigma", o->sigma, "Per-step noise std")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--epochs", o->epochs, "Epochs")->capture_default_str();
    sub->add_option("--batch", o->batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--lr", o->lr, "Adam learning-rate scale")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--b1", o->b1, "Adam first momentum")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    sub->add_option("--b2", o->b2, "Adam second momentum")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    sub->add_option("--latent-dim", o->latent_dim, "Latent dimension")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--half-batch", o->half_batch, "Filter only half of each batch")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off"}));
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        gan::TrainConfig cfg;
        cfg.latent_dim = o->latent_dim;
        cfg.batch_size = o->batch;
        cfg.epochs = o->epochs;
        cfg.optimizer = {o->lr, o->b1, o->b2, nn::OptimizerConfig{}.epsilon};
        cfg.filter = parse_filter_kind(o->kind);
        cfg.sigma = o->sigma;
        cfg.schedule = {o->T, o->beta};
        cfg.fixed_t = o->t;
        cfg.seed = o->seed;
        cfg.half_batch = o->half_batch == "on";
        cfg.threads = o->threads;

        const Batch dataset = read_tensor(o->in);
        const auto result = gan::train(cfg, dataset);
        gan::save_checkpoint(result.checkpoint, o->out);
        std::vector<std::string> outputs{o->out};
        if (!o->report.empty()) {
            gan::write_history_csv(result.history, o->report);
            outputs.push_back(o->report);
        }

        Resolved r("train");
        r.add("--in", o->in).add("--out", o->out);
        if (!o->report.empty()) r.add("--report", o->report);
        r.add("--kind", o->kind);
        if (o->t)
            r.add("--t", *o->t);
        else
            r.add("--T", o->T).add("--beta", o->beta);
        r.add("--sigma", o->sigma).add("--epochs", static_cast<std::uint64_t>(o->epochs));
        r.add("--batch", static_cast<std::uint64_t>(o->batch)).add("--lr", o->lr).add("--b1", o->b1).add("--b2", o->b2);
        r.add("--latent-dim", static_cast<std::uint64_t>(o->latent_dim)).add("--half-batch", o->half_batch);
        o->resolve(r);
        r.write_manifest(o->out, o->seed, outputs);

        out << "trained " << result.checkpoint.step << " steps";
        if (!result.history.empty())
            out << " (final d_obj=" << result.history.back().d_obj << ", g_obj=" << result.history.back().g_obj << ")";
        out << "; checkpoint " << o->out << '\n';
    };
}

Action sample(CLI::App& app) {
    auto* sub = app.add_subcommand("sample", "Draw fake images from a checkpoint");
    struct Opts : Common {
        std::string in, out;
        std::size_t count = 4096;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--in", o->in, "Checkpoint")->required();
    sub->add_option("--out", o->out, "Output NSST file")->required();
    sub->add_option("--count", o->count, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        const auto checkpoint = gan::load_checkpoint(o->in);
        const Batch fakes = gan::generate(checkpoint, o->count, o->seed);
        write_tensor(fakes, o->out);
        Resolved r("sample");
        r.add("--in", o->in).add("--out", o->out).add("--count", static_cast<std::uint64_t>(o->count));
        o->resolve(r);
        r.write_manifest(o->out, o->seed, {o->out});
        out << "wrote " << fakes.size() << " samples to " << o->out << '\n';
    };
}

Action eval(CLI::App& app) {
    auto* sub = app.add_subcommand("eval", "Hadamard coefficient statistics and distance to a reference set");
    struct Opts : Common {
        std::string in, ref, out, report;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--in", o->in, "Images to evaluate (NSST, 8x8)")->required();
    sub->add_option("--ref", o->ref, "Reference images, usually the real dataset");
    sub->add_option("--out", o->out, "Per-basis CSV (basis,mean,std)");
    sub->add_option("--report", o->report, "Metric CSV (metric,value); stdout when neither output is given");
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        const Batch images = read_tensor(o->in);
        const auto stats = metrics::coeff_stats(images);

        std::vector<std::pair<std::string, double>> rows;
        rows.emplace_back("count", static_cast<double>(stats.count));
        rows.emplace_back("pooled_variance", metrics::pooled_variance(images));
        rows.emplace_back("mean_residual", stats.mean_residual);
        for (std::size_t i = 0; i < hadamard::kOrder; ++i) {
            rows.emplace_back("alpha" + std::to_string(i + 1) + "_mean", stats.mean[i]);
            rows.emplace_back("alpha" + std::to_string(i + 1) + "_std", stats.std[i]);
        }
        if (!o->ref.empty()) {
            const auto ref = metrics::coeff_stats(read_tensor(o->ref));
            rows.emplace_back("coeff_frechet", metrics::coeff_frechet(stats, ref));
            for (std::size_t i = 0; i < hadamard::kOrder; ++i)
                rows.emplace_back("std_ratio" + std::to_string(i + 1), ref.std[i] > 0.0 ? stats.std[i] / ref.std[i] : 0.0);
        }
        std::ostringstream csv;
        csv << "metric,value\n";
        for (const auto& [name, value] : rows) csv << name << ',' << exact(value) << '\n';

        std::vector<std::string> outputs;
        if (!o->out.empty()) {
            metrics::write_coeff_stats_csv(stats, o->out);
            outputs.push_back(o->out);
        }
        if (!o->report.empty()) {
            std::ofstream f(o->report, std::ios::trunc);
            if (!f) throw IoError("cannot open for writing: " + o->report);
            f << csv.str();
            if (!f) throw IoError("write failure: " + o->report);
            outputs.push_back(o->report);
        }
        if (outputs.empty()) {
            out << csv.str();
            return;
        }
        Resolved r("eval");
        r.add("--in", o->in);
        if (!o->ref.empty()) r.add("--ref", o->ref);
        if (!o->out.empty()) r.add("--out", o->out);
        if (!o->report.empty()) r.add("--report", o->report);
        o->resolve(r);
        r.write_manifest(outputs.front(), o->seed, outputs);
        out << "evaluated " << stats.count << " images\n";
    };
}

Action export_pgm(CLI::App& app) {
    auto* sub = app.add_subcommand("export-pgm", "Write one image (or one Hadamard basis) as a binary PGM");
    struct Opts : Common {
        std::string in, out;
        std::size_t index = 0;
        int basis = 0;
    };
    auto o = std::make_shared<Opts>();
    auto* in_opt = sub->add_option("--in", o->in, "Input NSST file");
    auto* basis_opt = sub->add_option("--basis", o->basis, "Export Hadamard basis 1..8 instead")->check(CLI::Range(1, 8));
    in_opt->excludes(basis_opt);
    sub->add_option("--index", o->index, "Image index within --in")->capture_default_str();
    sub->add_option("--out", o->out, "Output PGM")->required();
    o->attach(sub);
    return [o, sub](std::ostream& out) {
        if (!sub->parsed()) return;
        Resolved r("export-pgm");
        if (o->basis != 0) {
            export_pgm(hadamard::hadamard_bases()[static_cast<std::size_t>(o->basis - 1)].image, o->out);
            r.add("--basis", o->basis);
        } else {
            if (o->in.empty()) throw CLI::RequiredError("--in or --basis");
            const Batch batch = read_tensor(o->in);
            if (o->index >= batch.size())
                throw ValidationError("image index " + std::to_string(o->index) + " out of range (" +
                                      std::to_string(batch.size()) + " images)");
            export_pgm(batch[o->index], o->out);
            r.add("--in", o->in).add("--index", static_cast<std::uint64_t>(o->index));
        }
        r.add("--out", o->out);
        o->resolve(r);
        r.write_manifest(o->out, o->seed, {o->out});
        out << "wrote " << o->out << '\n';
    };
}

}  // namespace

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Noisy scale-space GAN toolkit", kToolName};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", kToolVersion);

    std::vector<Action> actions{gen_hadamard(app), filter(app), anneal(app), variance_curve(app),
                                train(app),        sample(app), eval(app),   export_pgm(app)};

    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    std::string manifest;
    replay->add_option("--manifest", manifest, "Manifest JSON written by a previous run")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (replay->parsed()) {
            std::ifstream f(manifest);
            if (!f) throw IoError("cannot open manifest: " + manifest);
            const auto m = nlohmann::json::parse(f, nullptr, /*allow_exceptions=*/false);
            if (m.is_discarded() || !m.contains("args") || !m["args"].is_array())
                throw FormatError("manifest has no replayable args: " + manifest);
            const auto recorded = m["args"].get<std::vector<std::string>>();
            if (recorded.empty() || recorded.front() == "replay") throw FormatError("manifest args are not replayable");
            return dispatch(recorded, out, err);
        }
        for (auto& action : actions) action(out);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace nss::cli
