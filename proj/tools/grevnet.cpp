#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "grevnet/png.hpp"
#include "grevnet/selftest.hpp"
#include "grevnet/training.hpp"

namespace fs = std::filesystem;
using namespace grevnet;

namespace {

using Model = TrainedModel<float>;

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
    return out;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::trunc);
    f << s;
    if (!f) throw DataError("cannot write " + p.string());
}

/// Run directory: config snapshot, log, metrics and checkpoints.
class RunDir {
public:
    RunDir(const fs::path& dir, const Config& cfg) : dir_(dir), hash_(cfg.hash_hex()) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw DataError("cannot create run directory " + dir_.string() + ": " + ec.message());
        write_text(dir_ / "config.txt", cfg.to_text());
        write_text(dir_ / "config.hash", hash_ + "\n");
        log_.open(dir_ / "log.txt", std::ios::app);
        if (!log_) throw DataError("cannot write " + (dir_ / "log.txt").string());
    }

    void log(std::size_t epoch, long step, const std::string& msg) {
        log_ << utc_now() << " epoch=" << epoch << " step=" << step << " config=" << hash_ << " " << msg << "\n";
        log_.flush();
    }

    const fs::path& path() const { return dir_; }

private:
    fs::path dir_;
    std::string hash_;
    std::ofstream log_;
};

// Non-image data (channels other than 1 or 3) is shown as one gray column per example.
void save_images(const std::string& path, const Tensor<float>& x, std::size_t cols) {
    const std::size_t c = x.dim(1);
    if (c == 1 || c == 3) return save_grid(path, x, cols);
    save_grid(path, x.reshaped({x.dim(0), 1, c * x.dim(2), x.dim(3)}), cols);
}

// Sample grid written at the end of training and by `sample`.
std::pair<Tensor<float>, std::size_t> sample_grid(const Model& m, std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    if (!m.class_conditional()) {
        const std::size_t cols = std::max<std::size_t>(1, std::size_t(std::ceil(std::sqrt(double(n)))));
        return {generate_samples(m.net, m.prior, rng, n), cols};
    }
    std::vector<Tensor<float>> rows;
    for (std::size_t c = 0; c < m.class_prior.classes(); ++c) {
        Rng r = rng.split(c);
        rows.push_back(generate_class_samples(m.net, m.class_prior, c, r, n));
    }
    std::vector<const Tensor<float>*> ptrs;
    for (const auto& r : rows) ptrs.push_back(&r);
    return {concat(ptrs, 0), n};
}

int train(Regime regime, const std::string& config_path, const std::vector<std::string>& overrides,
          const std::string& out, const std::string& resume) {
    if (config_path.empty() && resume.empty()) throw ConfigError("--config is required unless --resume is given");
    std::optional<Checkpoint> ck;
    if (!resume.empty()) ck = Checkpoint::load(resume);
    Config cfg = config_path.empty() ? Config::from_text(ck->get_text("config")) : Config::from_file(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    cfg.set("training.regime", regime == Regime::ot ? "ot" : "adversarial");
    TrainSettings::from(cfg);

    RunDir run(out, cfg);
    const std::size_t start = ck ? ck->get_scalar<std::uint64_t>("epoch") : 0;
    const Trainer<float>* live = nullptr;
    auto log = [&](const std::string& msg) {
        if (live) run.log(live->epoch(), live->steps(), msg);
        else run.log(start, 0, msg);
    };
    log(ck ? "resume from " + resume : "start");
    Trainer<float> t = ck ? Trainer<float>::resume(*ck, cfg, log) : Trainer<float>(cfg, log);
    live = &t;

    try {
        t.run([&](Trainer<float>& tr) {
            write_text(run.path() / "metrics.csv", tr.metrics_csv());
            if (tr.checkpoint_due()) {
                char name[64];
                std::snprintf(name, sizeof name, "checkpoint-epoch-%04zu.ckpt", tr.epoch());
                const auto c = tr.checkpoint();
                c.save((run.path() / name).string());
                c.save((run.path() / "last.ckpt").string());
                log(std::string("wrote ") + name);
            }
        });
    } catch (const NumericError& e) {
        log(std::string("diverged: ") + e.what());
        write_text(run.path() / "metrics.csv", t.metrics_csv());
        throw;
    }
    write_text(run.path() / "metrics.csv", t.metrics_csv());
    const auto final_ck = t.checkpoint();
    final_ck.save((run.path() / "last.ckpt").string());
    const Model m = Model::load(final_ck);
    auto [grid, cols] = sample_grid(m, t.settings().seed_noise, m.class_conditional() ? 10 : 64);
    save_images((run.path() / "samples.png").string(), grid, cols);
    log("wrote samples.png; done");
    std::cout << "trained " << t.epoch() << " epochs; artifacts in " << run.path().string() << "\n";
    return 0;
}

Dataset<float> eval_dataset(const Config& cfg, const std::string& spec) {
    if (spec.empty()) return load_datasets<float>(cfg).test;
    const auto comma = spec.find(',');
    if (comma == std::string::npos) throw ConfigError("--dataset expects <images.idx>,<labels.idx>");
    return load_mnist_idx<float>(spec.substr(0, comma), spec.substr(comma + 1), cfg.get_size("data.pad"));
}

Tensor<float> rows_of(const Dataset<float>& d, std::vector<std::size_t> idx) {
    for (auto i : idx)
        if (i >= d.size())
            throw ValueError("index " + std::to_string(i) + " out of range for " + std::to_string(d.size()) + " images");
    return d.gather(idx);
}

int cmd_sample(const std::string& ckpt, std::size_t n, std::uint64_t seed, const std::string& out) {
    const Model m = Model::load(Checkpoint::load(ckpt));
    auto [grid, cols] = sample_grid(m, seed, n);
    save_images(out, grid, cols);
    return 0;
}

int cmd_interpolate(const std::string& ckpt, std::size_t a, std::size_t b, std::size_t steps, const std::string& mode,
                    const std::string& dataset, const std::string& out) {
    const Model m = Model::load(Checkpoint::load(ckpt));
    const auto d = eval_dataset(m.config, dataset);
    const auto row = interpolate(m.net, m.restricted_prior(), rows_of(d, {a}), rows_of(d, {b}), steps,
                                 parse_interpolation_mode(mode));
    save_images(out, row, steps);
    return 0;
}

std::vector<std::size_t> parse_dims(const std::string& spec, const Model& m) {
    std::vector<std::size_t> dims;
    if (spec.rfind("top:", 0) == 0) {
        std::size_t k = 0;
        try {
            k = std::stoul(spec.substr(4));
        } catch (const std::exception&) {
            throw ConfigError("--dims: bad count in '" + spec + "'");
        }
        if (m.class_conditional()) return top_dims_by_mean_std(m.class_prior, k);
        dims.assign(m.prior.active_dims.begin(), m.prior.active_dims.begin() + long(std::min(k, m.prior.k())));
        return dims;
    }
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            dims.push_back(std::stoul(tok));
        } catch (const std::exception&) {
            throw ConfigError("--dims: bad dimension '" + tok + "'");
        }
    }
    if (dims.empty()) throw ConfigError("--dims: no dimensions given");
    return dims;
}

int cmd_traverse(const std::string& ckpt, const std::string& dims_spec, double range_stds, std::size_t steps,
                 const std::string& out) {
    const Model m = Model::load(Checkpoint::load(ckpt));
    const auto dims = parse_dims(dims_spec, m);
    const std::size_t d = m.net.latent_size();
    std::vector<Tensor<float>> rows;
    if (!m.class_conditional()) {
        const double scale = m.prior.family == PriorFamily::uniform ? 2.0 / std::sqrt(3.0) : 1.0;
        for (auto dim : dims) rows.push_back(traverse_dimension(m.net, m.prior, Tensor<float>({d}), dim, scale, range_stds, steps));
    } else {
        const PriorSpec full = PriorSpec::full(d);
        for (auto dim : dims) {
            if (dim >= d) throw ValueError("traverse: dim " + std::to_string(dim) + " out of range");
            for (std::size_t c = 0; c < m.class_prior.classes(); ++c) {
                Tensor<float> base({d});
                for (std::size_t j = 0; j < d; ++j) base[j] = static_cast<float>(m.class_prior.mean(c, j));
                rows.push_back(traverse_dimension(m.net, full, base, dim, m.class_prior.std(c, dim), range_stds, steps));
            }
        }
    }
    std::vector<const Tensor<float>*> ptrs;
    for (const auto& r : rows) ptrs.push_back(&r);
    save_images(out, concat(ptrs, 0), steps);
    return 0;
}

int cmd_reconstruct(const std::string& ckpt, std::size_t n, const std::string& dataset, const std::string& out) {
    const Model m = Model::load(Checkpoint::load(ckpt));
    const auto d = eval_dataset(m.config, dataset);
    std::vector<std::size_t> idx(std::min(n, d.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto x = rows_of(d, idx);
    const auto z = m.net.forward(x);
    const auto restricted = m.net.inverse(clip_to_prior(z, m.restricted_prior()));
    const auto full = m.net.inverse(z);
    save_images(out, concat<float>({&x, &restricted, &full}, 0), idx.size());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& dataset, const std::string& out) {
    const Model m = Model::load(Checkpoint::load(ckpt));
    auto data = load_datasets<float>(m.config);
    if (!dataset.empty()) data.test = eval_dataset(m.config, dataset);
    const FeatureDistance<float> fd(data.train, data.test, m.settings);
    Rng rng = Rng(m.settings.seed_noise).split(0xe7a1u);
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw DataError("cannot write " + out);
    f << std::setprecision(17) << "metric,value\n";
    f << "epoch," << m.epoch << "\n";
    f << "round_trip_l1," << round_trip_l1(m.net, data.test.images) << "\n";
    if (!m.class_conditional()) {
        f << "frechet," << fd.distance(generate_samples(m.net, m.prior, rng, m.settings.fd_samples)) << "\n";
    } else {
        const std::size_t k = m.class_prior.classes(), per = std::max<std::size_t>(1, m.settings.fd_samples / k);
        std::vector<Tensor<float>> parts;
        std::vector<int> labels;
        for (std::size_t c = 0; c < k; ++c) {
            parts.push_back(generate_class_samples(m.net, m.class_prior, c, rng, per));
            labels.insert(labels.end(), per, int(c));
        }
        std::vector<const Tensor<float>*> ptrs;
        for (const auto& p : parts) ptrs.push_back(&p);
        const auto x = concat(ptrs, 0);
        f << "frechet," << fd.distance(x) << "\n";
        if (fd.has_classifier()) f << "sample_accuracy," << fd.classifier().accuracy(x, labels) << "\n";
        const auto eff = effective_dims(m.class_prior, m.settings.effective_threshold);
        for (std::size_t c = 0; c < eff.size(); ++c) f << "effective_dims_class_" << c << "," << eff[c] << "\n";
    }
    if (fd.has_classifier()) f << "classifier_accuracy," << fd.reference_accuracy() << "\n";
    if (!f) throw DataError("write failed for " + out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generative invertible networks: training, sampling and evaluation"};
    app.require_subcommand(1);

    std::string config, out, resume, ckpt, mode = "restricted", dims, dataset;
    std::vector<std::string> overrides;
    std::size_t n = 16, index_a = 0, index_b = 1, steps = 8;
    std::uint64_t seed = 1;
    double range_stds = 3.0;

    auto add_train = [&](const char* name, const char* help) {
        auto* c = app.add_subcommand(name, help);
        c->add_option("--config", config, "config file");
        c->add_option("--out", out, "run directory")->required();
        c->add_option("--resume", resume, "checkpoint to continue from");
        c->add_option("--set", overrides, "override section.key=value (repeatable)");
        return c;
    };
    auto* train_adv = add_train("train-adversarial", "clipped-latent adversarial training");
    auto* train_ot = add_train("train-ot", "class-conditional optimal transport training");

    auto* sample = app.add_subcommand("sample", "decode prior samples into a grid");
    sample->add_option("--ckpt", ckpt)->required();
    sample->add_option("--n", n, "samples (per class for class-conditional models)");
    sample->add_option("--seed", seed);
    sample->add_option("--out", out)->required();

    auto* interp = app.add_subcommand("interpolate", "latent interpolation between two test images");
    interp->add_option("--ckpt", ckpt)->required();
    interp->add_option("--index-a", index_a);
    interp->add_option("--index-b", index_b);
    interp->add_option("--steps", steps);
    interp->add_option("--mode", mode, "restricted | full");
    interp->add_option("--dataset", dataset, "<images.idx>,<labels.idx> (default: config test set)");
    interp->add_option("--out", out)->required();

    auto* trav = app.add_subcommand("traverse", "sweep single latent dimensions");
    trav->add_option("--ckpt", ckpt)->required();
    trav->add_option("--dims", dims, "comma list or top:k")->required();
    trav->add_option("--range-stds", range_stds);
    trav->add_option("--steps", steps);
    trav->add_option("--out", out)->required();

    auto* recon = app.add_subcommand("reconstruct", "rows: original, restricted, full reconstruction");
    recon->add_option("--ckpt", ckpt)->required();
    recon->add_option("--n", n);
    recon->add_option("--dataset", dataset);
    recon->add_option("--out", out)->required();

    auto* eval = app.add_subcommand("eval", "Frechet feature distance, effective dims and round-trip error");
    eval->add_option("--ckpt", ckpt)->required();
    eval->add_option("--dataset", dataset);
    eval->add_option("--out", out)->required();

    auto* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train_adv->parsed()) return train(Regime::adversarial, config, overrides, out, resume);
        if (train_ot->parsed()) return train(Regime::ot, config, overrides, out, resume);
        if (sample->parsed()) return cmd_sample(ckpt, n, seed, out);
        if (interp->parsed()) return cmd_interpolate(ckpt, index_a, index_b, steps, mode, dataset, out);
        if (trav->parsed()) return cmd_traverse(ckpt, dims, range_stds, steps, out);
        if (recon->parsed()) return cmd_reconstruct(ckpt, n, dataset, out);
        if (eval->parsed()) return cmd_eval(ckpt, dataset, out);
        if (selftest->parsed()) return run_selftest(std::cout) == 0 ? 0 : 1;
    } catch (const Error& e) {
        static const char* names[] = {"shape", "value", "config", "data", "numeric", "checkpoint"};
        std::cerr << "error (" << names[int(e.kind())] << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
