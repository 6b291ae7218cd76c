#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "grevnet/checkpoint.hpp"
#include "grevnet/config.hpp"
#include "grevnet/data.hpp"
#include "grevnet/eval.hpp"
#include "grevnet/losses.hpp"
#include "grevnet/ot.hpp"

namespace grevnet {

enum class Regime { adversarial, ot };

inline Regime parse_regime(const std::string& s) {
    if (s == "adversarial") return Regime::adversarial;
    if (s == "ot") return Regime::ot;
    throw ConfigError("training.regime must be adversarial or ot, got '" + s + "'");
}

/// Architecture from the [architecture] section: a preset, or explicit input + stages.
inline ArchSpec arch_from_config(const Config& cfg) {
    ArchSpec spec;
    const auto& input = cfg.get("architecture.input");
    const auto& stages = cfg.get("architecture.stages");
    if (input.empty() != stages.empty())
        throw ConfigError("architecture.input and architecture.stages must be given together");
    if (input.empty()) {
        spec = preset(cfg.get("architecture.preset"));
    } else {
        std::stringstream ss(input);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                spec.input.push_back(std::stoul(tok));
            } catch (const std::exception&) {
                throw ConfigError("architecture.input: bad extent '" + tok + "'");
            }
        }
        if (spec.input.size() != 3) throw ConfigError("architecture.input must be C,H,W");
        spec.stages = ArchSpec::parse_stages(stages);
    }
    spec.kernel = cfg.get_size("architecture.kernel");
    spec.stage_shapes();
    return spec;
}

/// Typed view of a Config, validated once.
struct TrainSettings {
    Regime regime = Regime::adversarial;
    ArchSpec arch;
    PriorFamily family = PriorFamily::standard_normal;
    std::size_t active_dims = 64;
    double clip_bound = 2;
    std::size_t selection_samples = 1000;
    ReconWeights recon;
    double adv_weight = 1, perturb_weight = 1, perturb_std = 0.1;
    CostKind ot_cost = CostKind::euclidean;
    DiscriminatorConfig disc;
    std::size_t disc_steps = 1;
    std::size_t batch_size = 64, per_class_batch = 20;
    std::size_t recon_epochs = 20, adversarial_epochs = 50, epochs = 20;
    AdamConfig net_adam, disc_adam, prior_adam;
    std::uint64_t seed_net = 1, seed_data = 2, seed_adversary = 3, seed_noise = 4;
    std::size_t checkpoint_every = 1, max_batches = 0;
    bool identity_features = false;
    std::size_t eval_every = 1, fd_samples = 1000;
    ClassifierConfig classifier;
    double effective_threshold = 0.01;

    static TrainSettings from(const Config& c) {
        TrainSettings s;
        s.regime = parse_regime(c.get("training.regime"));
        s.arch = arch_from_config(c);
        s.family = parse_prior_family(c.get("prior.family"));
        s.active_dims = c.get_size("prior.active_dims");
        s.clip_bound = c.get_double("prior.clip_bound");
        s.selection_samples = c.get_size("prior.selection_samples");
        if (s.regime == Regime::adversarial && (s.active_dims == 0 || s.active_dims > s.arch.latent_size()))
            throw ConfigError("prior.active_dims must be in [1, " + std::to_string(s.arch.latent_size()) + "]");
        if (!(s.clip_bound > 0)) throw ConfigError("prior.clip_bound must be positive");
        s.recon = ReconWeights{c.get_double("losses.l1_weight"), c.get_double("losses.l2_weight")};
        s.adv_weight = c.get_double("losses.adv_weight");
        s.perturb_weight = c.get_double("losses.perturb_weight");
        s.perturb_std = c.get_double("losses.perturb_std");
        if (s.perturb_std < 0) throw ConfigError("losses.perturb_std must be non-negative");
        s.ot_cost = parse_cost_kind(c.get("losses.ot_cost"));
        s.disc.hidden1 = c.get_size("discriminator.hidden1");
        s.disc.hidden2 = c.get_size("discriminator.hidden2");
        s.disc.power_iterations = int(c.get_size("discriminator.power_iterations"));
        s.disc.warmup_iterations = int(c.get_size("discriminator.warmup_iterations"));
        s.disc.spectral_norm = c.get_bool("discriminator.spectral_norm");
        s.disc_steps = c.get_size("discriminator.steps_per_net_step");
        if (s.disc.hidden1 == 0 || s.disc.hidden2 == 0) throw ConfigError("discriminator widths must be positive");
        s.batch_size = c.get_size("training.batch_size");
        s.per_class_batch = c.get_size("training.per_class_batch");
        if (s.batch_size == 0 || s.per_class_batch == 0) throw ConfigError("batch sizes must be positive");
        if (s.per_class_batch >= 1000) throw ConfigError("training.per_class_batch must be below 1000");
        s.recon_epochs = c.get_size("training.recon_epochs");
        s.adversarial_epochs = c.get_size("training.adversarial_epochs");
        s.epochs = c.get_size("training.epochs");
        const double b1 = c.get_double("training.beta1"), b2 = c.get_double("training.beta2"),
                     eps = c.get_double("training.adam_eps");
        s.net_adam = AdamConfig{c.get_double("training.lr_net"), b1, b2, eps};
        s.disc_adam = AdamConfig{c.get_double("training.lr_disc"), b1, b2, eps};
        s.prior_adam = AdamConfig{c.get_double("training.lr_prior"), b1, b2, eps};
        s.seed_net = c.get_seed("training.seed_net");
        s.seed_data = c.get_seed("training.seed_data");
        s.seed_adversary = c.get_seed("training.seed_adversary");
        s.seed_noise = c.get_seed("training.seed_noise");
        s.checkpoint_every = c.get_size("training.checkpoint_every");
        s.max_batches = c.get_size("training.max_batches");
        const auto& feat = c.get("eval.features");
        if (feat != "classifier" && feat != "identity")
            throw ConfigError("eval.features must be classifier or identity, got '" + feat + "'");
        s.identity_features = feat == "identity";
        s.eval_every = c.get_size("eval.every");
        s.fd_samples = c.get_size("eval.fd_samples");
        s.classifier.hidden = c.get_size("eval.classifier_hidden");
        s.classifier.epochs = c.get_size("eval.classifier_epochs");
        s.classifier.lr = c.get_double("eval.classifier_lr");
        s.classifier.seed = c.get_seed("eval.classifier_seed");
        s.effective_threshold = c.get_double("eval.effective_threshold");
        const auto& src = c.get("data.source");
        if (src != "mnist" && src != "gaussian-mixture")
            throw ConfigError("data.source must be mnist or gaussian-mixture, got '" + src + "'");
        return s;
    }

    std::size_t total_epochs() const { return regime == Regime::ot ? epochs : recon_epochs + adversarial_epochs; }
};

template <typename T>
struct DataSplits {
    Dataset<T> train;
    Dataset<T> test;
};

/// Loads the training and test sets named by the [data] section.
template <typename T>
DataSplits<T> load_datasets(const Config& c) {
    DataSplits<T> d;
    if (c.get("data.source") == "gaussian-mixture") {
        const std::size_t classes = c.get_size("data.synth_classes"), dim = c.get_size("data.synth_dim");
        const Rng base(c.get_seed("data.synth_seed"));
        Rng a = base.split(0), b = base.split(1);
        d.train = synth_gaussian_mixture<T>(a, c.get_size("data.synth_n"), classes, dim);
        d.test = synth_gaussian_mixture<T>(b, c.get_size("data.synth_test_n"), classes, dim);
    } else {
        const std::size_t pad = c.get_size("data.pad");
        d.train = load_mnist_idx<T>(c.get("data.train_images"), c.get("data.train_labels"), pad);
        d.test = load_mnist_idx<T>(c.get("data.test_images"), c.get("data.test_labels"), pad);
    }
    if (const auto n = c.get_size("data.limit")) d.train = d.train.head(n);
    if (const auto n = c.get_size("data.test_limit")) d.test = d.test.head(n);
    return d;
}

/// Fréchet feature distance against a fixed reference set.
template <typename T>
class FeatureDistance {
public:
    FeatureDistance() = default;
    FeatureDistance(const Dataset<T>& train, const Dataset<T>& reference, const TrainSettings& s)
        : identity_(s.identity_features) {
        if (!identity_) {
            clf_ = train_classifier(train, s.classifier);
            reference_accuracy_ = clf_.accuracy(reference.images, reference.labels);
        }
        ref_ = feature_fit(reference.images, [&](const Tensor<T>& x) { return features(x); });
    }

    Tensor<T> features(const Tensor<T>& x) const {
        if (identity_) return x.reshaped({x.dim(0), x.size() / x.dim(0)});
        return clf_.features(x);
    }
    double distance(const Tensor<T>& images) const {
        return frechet_distance(feature_fit(images, [&](const Tensor<T>& x) { return features(x); }), ref_);
    }
    bool has_classifier() const { return !identity_; }
    const Classifier<T>& classifier() const { return clf_; }
    double reference_accuracy() const { return reference_accuracy_; }

private:
    bool identity_ = true;
    Classifier<T> clf_;
    GaussianFit ref_;
    double reference_accuracy_ = 0;
};

/// One row of the metrics CSV. Empty cells are losses that do not apply in the current phase.
struct MetricsRow {
    std::vector<std::pair<std::string, std::optional<double>>> cells;

    void set(const std::string& k, std::optional<double> v) {
        for (auto& [name, val] : cells)
            if (name == k) {
                val = v;
                return;
            }
        cells.emplace_back(k, v);
    }
    std::optional<double> get(const std::string& k) const {
        for (const auto& [name, val] : cells)
            if (name == k) return val;
        return std::nullopt;
    }
};

inline std::vector<std::string> metric_columns(Regime r) {
    if (r == Regime::adversarial)
        return {"epoch", "phase", "steps", "recon_l1", "clip_l2", "adv_disc", "adv_enc", "total", "frechet",
                "round_trip_l1"};
    return {"epoch", "steps", "ot", "perturb", "total", "frechet", "sample_accuracy", "effective_dims_mean",
            "effective_dims_max", "round_trip_l1"};
}

inline std::string format_metric(std::optional<double> v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

/// Keys that may differ between a checkpoint's config and the config used to resume it.
inline const std::set<std::string>& resumable_keys() {
    static const std::set<std::string> keys{"training.seed_data",         "training.seed_adversary",
                                            "training.seed_noise",        "training.adversarial_epochs",
                                            "training.epochs",            "training.checkpoint_every",
                                            "training.max_batches",       "eval.every",
                                            "eval.fd_samples"};
    return keys;
}

namespace detail {

template <typename T>
void put_params(Checkpoint& ck, const std::string& prefix, const ParamRefs<T>& ps) {
    for (std::size_t i = 0; i < ps.size(); ++i) ck.put(prefix + "." + std::to_string(i) + "." + ps[i]->name, ps[i]->value);
}

template <typename T>
void get_params(const Checkpoint& ck, const std::string& prefix, const ParamRefs<T>& ps) {
    for (std::size_t i = 0; i < ps.size(); ++i)
        ck.get_into(prefix + "." + std::to_string(i) + "." + ps[i]->name, ps[i]->value);
}

} // namespace detail

/// Dims that any class uses (std above threshold * that class's largest std), unclamped.
/// This is the restricted space of the class-conditional regime.
template <typename T>
PriorSpec class_support(const ClassPrior<T>& cp, double threshold) {
    std::vector<char> used(cp.dims(), 0);
    for (std::size_t c = 0; c < cp.classes(); ++c) {
        const auto s = cp.stds(c);
        const double mx = *std::max_element(s.begin(), s.end());
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s[j] > threshold * mx) used[j] = 1;
    }
    std::vector<std::size_t> dims;
    for (std::size_t j = 0; j < used.size(); ++j)
        if (used[j]) dims.push_back(j);
    return PriorSpec(cp.dims(), dims, PriorFamily::standard_normal, std::numeric_limits<double>::infinity());
}

/// Net and latent distribution restored from a checkpoint, without data or optimizer state.
template <typename T>
struct TrainedModel {
    Config config;
    TrainSettings settings;
    InvertibleNet<T> net;
    PriorSpec prior;
    ClassPrior<T> class_prior;
    std::size_t epoch = 0;

    static TrainedModel load(const Checkpoint& ck) {
        TrainedModel m;
        m.config = Config::from_text(ck.get_text("config"));
        m.settings = TrainSettings::from(m.config);
        Rng rng(m.settings.seed_net);
        m.net = InvertibleNet<T>(m.settings.arch, rng);
        detail::get_params(ck, "net", m.net.params());
        m.epoch = ck.get_scalar<std::uint64_t>("epoch");
        const std::size_t d = m.net.latent_size();
        if (m.settings.regime == Regime::adversarial) {
            const auto active = ck.get_values<std::uint64_t>("prior.active_dims");
            m.prior = PriorSpec(d, std::vector<std::size_t>(active.begin(), active.end()), m.settings.family,
                                m.settings.clip_bound);
        } else {
            const auto& shape = ck.record("class_prior.0.prior.mean").dims;
            if (shape.size() != 2) throw CheckpointError("checkpoint: bad class prior shape");
            m.class_prior = ClassPrior<T>(shape[0], d);
            detail::get_params(ck, "class_prior", m.class_prior.params());
            m.prior = PriorSpec::full(d);
        }
        return m;
    }

    bool class_conditional() const { return settings.regime == Regime::ot; }

    PriorSpec restricted_prior() const {
        return class_conditional() ? class_support(class_prior, settings.effective_threshold) : prior;
    }
};

/// Both training regimes over one InvertibleNet. All randomness is derived from
/// the configured seeds and the epoch index, so a run is reproducible from its
/// config and resumable from an epoch-boundary checkpoint.
template <typename T>
class Trainer {
public:
    using LogFn = std::function<void(const std::string&)>;

    explicit Trainer(const Config& cfg, LogFn log = {}) : Trainer(cfg, log, true) {}

    /// Restores a run. `cfg` may only differ from the checkpoint's config in resumable_keys().
    static Trainer resume(const Checkpoint& ck, const std::optional<Config>& override_cfg = std::nullopt,
                          LogFn log = {}) {
        const Config stored = Config::from_text(ck.get_text("config"));
        Config cfg = stored;
        if (override_cfg) {
            const std::string a = stored.to_text(), b = override_cfg->to_text();
            std::istringstream sa(a), sb(b);
            std::string la, lb, section;
            while (std::getline(sa, la) && std::getline(sb, lb)) {
                if (!la.empty() && la.front() == '[') section = la.substr(1, la.size() - 2);
                if (la == lb) continue;
                const std::string key = section + "." + la.substr(0, la.find(' '));
                if (!resumable_keys().count(key))
                    throw ConfigError("resume: config key '" + key + "' differs from the checkpoint");
            }
            cfg = *override_cfg;
        }
        Trainer t(cfg, log, false);
        t.restore(ck);
        return t;
    }

    // --- run control -------------------------------------------------------

    std::size_t epoch() const { return epoch_; }
    /// Net optimizer updates so far.
    long steps() const { return net_opt_.steps(); }
    std::size_t total_epochs() const { return s_.total_epochs(); }
    bool done() const { return epoch_ >= total_epochs(); }
    bool in_recon_phase() const { return s_.regime == Regime::adversarial && epoch_ < s_.recon_epochs; }

    /// Runs the next epoch and returns its metrics row.
    const MetricsRow& run_epoch() {
        if (done()) throw ValueError("trainer: all epochs already run");
        MetricsRow row = s_.regime == Regime::ot ? ot_epoch() : adversarial_epoch();
        ++epoch_;
        if (s_.eval_every && (epoch_ % s_.eval_every == 0 || done())) evaluate(row);
        metrics_.push_back(std::move(row));
        log("epoch " + std::to_string(epoch_) + " " + summary(metrics_.back()));
        return metrics_.back();
    }

    void run(const std::function<void(Trainer&)>& after_epoch = {}) {
        while (!done()) {
            run_epoch();
            if (after_epoch) after_epoch(*this);
        }
    }

    bool checkpoint_due() const {
        return done() || (s_.checkpoint_every && epoch_ % s_.checkpoint_every == 0);
    }

    // --- per-batch updates -------------------------------------------------

    /// Reconstruction-only net step. Returns the loss report.
    LossReport recon_update(const Tensor<T>& x) {
        zero_grads(net_.params());
        auto r = recon_loss(net_, prior_, x, s_.recon, true);
        guard(r, "recon");
        net_opt_.step(net_.params());
        return r;
    }

    /// Discriminator updates on a detached encoding batch z.
    double disc_update(const Tensor<T>& z, Rng& noise) {
        ensure_discriminator();
        const Tensor<T> zk = gather_dims(z, prior_.active_dims);
        double last = 0;
        for (std::size_t k = 0; k < s_.disc_steps; ++k) {
            const Tensor<T> zp = gather_dims(sample_prior<T>(prior_, noise, z.dim(0)), prior_.active_dims);
            last = disc_step(disc_, zp, zk, disc_opt_).get("adv_disc");
            if (!std::isfinite(last)) throw NumericError("non-finite discriminator loss at epoch " + std::to_string(epoch_ + 1));
        }
        return last;
    }

    /// Net step on recon + adversarial encoder loss, given z = E(x) from the current net.
    LossReport net_adversarial_update(const Tensor<T>& x, const Tensor<T>& z) {
        ensure_discriminator();
        zero_grads(net_.params());
        auto terms = recon_terms(net_, prior_, x, z, s_.recon, true);
        auto [le, dz_adv] = adversarial_encoder_terms(disc_, prior_, z);
        Tensor<T> dz = std::move(terms.dz);
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += static_cast<T>(s_.adv_weight * dz_adv[i]);
        net_.backward(z, dz);
        LossReport r;
        r.add("recon_l1", terms.l1, s_.recon.l1);
        r.add("clip_l2", terms.l2, s_.recon.l2);
        r.add("adv_enc", le, s_.adv_weight);
        guard(r, "adversarial");
        net_opt_.step(net_.params());
        return r;
    }

    /// One OT step: per-class OT between encodings and class-prior draws plus the
    /// perturbation loss; updates the net and the class priors jointly.
    LossReport ot_update(const Tensor<T>& x, const std::vector<int>& labels, Rng& noise) {
        zero_grads(net_.params());
        zero_grads(class_prior_.params());
        const Tensor<T> z = net_.forward(x);
        const std::size_t n = z.dim(0), d = z.size() / n;
        Tensor<T> dz(z.shape());
        double ot_total = 0;
        for (std::size_t c = 0; c < class_prior_.classes(); ++c) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < n; ++i)
                if (labels[i] == int(c)) rows.push_back(i);
            if (rows.empty()) continue;
            Tensor<T> zc({rows.size(), d});
            for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(z.data() + rows[r] * d, d, zc.data() + r * d);
            auto draw = class_prior_.sample(c, noise, rows.size());
            auto ot = ot_loss_and_grad(zc, draw.z, s_.ot_cost);
            ot_total += ot.loss;
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t j = 0; j < d; ++j) dz[rows[r] * d + j] += ot.dx[r * d + j];
            class_prior_.backward(c, draw.eps, ot.dy);
        }
        const Tensor<T> eps = sample_normal<T>(noise, z.shape(), T(0), static_cast<T>(s_.perturb_std));
        auto pt = perturbation_terms(net_, x, z, eps, s_.perturb_weight, true);
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += pt.dz[i];
        net_.backward(z, dz);
        LossReport r;
        r.add("ot", ot_total);
        r.add("perturb", pt.loss, s_.perturb_weight);
        guard(r, "ot");
        net_opt_.step(net_.params());
        prior_opt_.step(class_prior_.params());
        return r;
    }

    // --- evaluation --------------------------------------------------------

    /// Decoded samples: prior draws (adversarial) or equal per-class draws (ot), with their classes.
    std::pair<Tensor<T>, std::vector<int>> eval_samples(std::size_t n) const {
        Rng rng = eval_rng();
        if (s_.regime == Regime::adversarial) return {generate_samples(net_, prior_, rng, n), {}};
        const std::size_t k = class_prior_.classes(), per = std::max<std::size_t>(1, n / k);
        std::vector<Tensor<T>> parts;
        std::vector<int> labels;
        for (std::size_t c = 0; c < k; ++c) {
            parts.push_back(generate_class_samples(net_, class_prior_, c, rng, per));
            labels.insert(labels.end(), per, int(c));
        }
        std::vector<const Tensor<T>*> ptrs;
        for (const auto& p : parts) ptrs.push_back(&p);
        return {concat(ptrs, 0), labels};
    }

    const FeatureDistance<T>& feature_distance() {
        if (!fd_) fd_.emplace(data_.train, data_.test, s_);
        return *fd_;
    }

    /// Fraction of class-conditional samples the evaluation classifier assigns to their class.
    double sample_accuracy(std::size_t n) {
        auto [x, labels] = eval_samples(n);
        return feature_distance().classifier().accuracy(x, labels);
    }

    // --- persistence -------------------------------------------------------

    Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.put_text("config", cfg_.to_text());
        ck.put_scalar<std::uint64_t>("config_hash", cfg_.hash());
        ck.put_scalar<std::uint64_t>("epoch", epoch_);
        ck.put_values<std::uint64_t>("rng.data", {Rng(s_.seed_data).key(), Rng(s_.seed_data).counter()});
        ck.put_values<std::uint64_t>("rng.noise", {Rng(s_.seed_noise).key(), Rng(s_.seed_noise).counter()});
        auto& self = const_cast<Trainer&>(*this);
        detail::put_params(ck, "net", self.net_.params());
        put_adam(ck, "net_adam", self.net_opt_);
        std::vector<std::uint64_t> active(prior_.active_dims.begin(), prior_.active_dims.end());
        ck.put_values<std::uint64_t>("prior.active_dims", active);
        if (s_.regime == Regime::ot) {
            detail::put_params(ck, "class_prior", self.class_prior_.params());
            put_adam(ck, "prior_adam", self.prior_opt_);
        }
        ck.put_scalar<std::uint64_t>("disc.present", disc_ready_ ? 1 : 0);
        if (disc_ready_) {
            detail::put_params(ck, "disc", self.disc_.params());
            std::size_t i = 0;
            for (auto* l : self.disc_.layers()) {
                ck.put("disc.buffer." + std::to_string(i) + ".u", l->u());
                ck.put("disc.buffer." + std::to_string(i) + ".v", l->v());
                ++i;
            }
            put_adam(ck, "disc_adam", self.disc_opt_);
        }
        ck.put_text("metrics", metrics_csv());
        return ck;
    }

    std::string metrics_csv() const {
        const auto cols = metric_columns(s_.regime);
        std::string out;
        for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
        out += "\n";
        for (const auto& row : metrics_) {
            for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + format_metric(row.get(cols[i]));
            out += "\n";
        }
        return out;
    }

    // --- accessors ---------------------------------------------------------

    const Config& config() const { return cfg_; }
    const TrainSettings& settings() const { return s_; }
    InvertibleNet<T>& net() { return net_; }
    const InvertibleNet<T>& net() const { return net_; }
    const PriorSpec& prior() const { return prior_; }
    ClassPrior<T>& class_prior() { return class_prior_; }
    const ClassPrior<T>& class_prior() const { return class_prior_; }
    Discriminator<T>& discriminator() {
        ensure_discriminator();
        return disc_;
    }
    bool has_discriminator() const { return disc_ready_; }
    const DataSplits<T>& data() const { return data_; }
    const std::vector<MetricsRow>& metrics() const { return metrics_; }

    /// Restricted-space view used for interpolation: the adversarial prior, or in the
    /// OT regime the union of dims any class uses, without clamping.
    PriorSpec restricted_prior() const {
        if (s_.regime == Regime::adversarial) return prior_;
        return class_support(class_prior_, s_.effective_threshold);
    }

    Rng epoch_data_rng(std::size_t e) const { return Rng(s_.seed_data).split(e); }
    Rng epoch_noise_rng(std::size_t e) const { return Rng(s_.seed_noise).split(e); }

private:
    Trainer(const Config& cfg, LogFn sink, bool initialize)
        : cfg_(cfg), s_(TrainSettings::from(cfg)), log_(std::move(sink)), data_(load_datasets<T>(cfg)),
          net_opt_(s_.net_adam), disc_opt_(s_.disc_adam), prior_opt_(s_.prior_adam) {
        if (data_.train.image_shape() != s_.arch.input)
            throw ConfigError("architecture input " + shape_string(s_.arch.input) + " does not match data " +
                              shape_string(data_.train.image_shape()));
        if (s_.regime == Regime::ot && !data_.train.labeled())
            throw DataError("ot regime needs a labeled dataset");
        Rng net_rng(s_.seed_net);
        net_ = InvertibleNet<T>(s_.arch, net_rng);
        const std::size_t d = net_.latent_size();
        if (!initialize) {
            prior_ = PriorSpec(d, {}, s_.family, s_.clip_bound);
            return;
        }
        const auto sel = data_.train.head(std::max<std::size_t>(2, s_.selection_samples));
        if (s_.regime == Regime::adversarial) {
            prior_ = PriorSpec(d, select_active_dims(net_, sel.images, s_.active_dims), s_.family, s_.clip_bound);
        } else {
            prior_ = PriorSpec::full(d);
            class_prior_ = ClassPrior<T>::from_encodings(encode_all(net_, data_.train.images), data_.train.labels,
                                                         data_.train.num_classes);
        }
        log("init regime=" + cfg.get("training.regime") + " params=" + std::to_string(parameter_count(net_.params())) +
            " latent=" + std::to_string(d) + " train=" + std::to_string(data_.train.size()));
    }

    void restore(const Checkpoint& ck) {
        epoch_ = ck.get_scalar<std::uint64_t>("epoch");
        detail::get_params(ck, "net", net_.params());
        get_adam(ck, "net_adam", net_opt_, net_.params());
        const auto active = ck.get_values<std::uint64_t>("prior.active_dims");
        if (s_.regime == Regime::adversarial)
            prior_ = PriorSpec(net_.latent_size(), std::vector<std::size_t>(active.begin(), active.end()), s_.family,
                               s_.clip_bound);
        else
            prior_ = PriorSpec::full(net_.latent_size());
        if (s_.regime == Regime::ot) {
            class_prior_ = ClassPrior<T>(data_.train.num_classes, net_.latent_size());
            detail::get_params(ck, "class_prior", class_prior_.params());
            get_adam(ck, "prior_adam", prior_opt_, class_prior_.params());
        }
        if (ck.get_scalar<std::uint64_t>("disc.present")) {
            ensure_discriminator();
            detail::get_params(ck, "disc", disc_.params());
            std::size_t i = 0;
            for (auto* l : disc_.layers()) {
                ck.get_into("disc.buffer." + std::to_string(i) + ".u", l->u());
                ck.get_into("disc.buffer." + std::to_string(i) + ".v", l->v());
                ++i;
            }
            get_adam(ck, "disc_adam", disc_opt_, disc_.params());
        }
        restore_metrics(ck.get_text("metrics"));
        log("resumed at epoch " + std::to_string(epoch_));
    }

    void restore_metrics(const std::string& csv) {
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);
        const auto cols = metric_columns(s_.regime);
        while (std::getline(in, line)) {
            MetricsRow row;
            std::stringstream ls(line);
            std::string cell;
            for (std::size_t i = 0; i < cols.size(); ++i) {
                if (!std::getline(ls, cell, ',')) cell.clear();
                if (cell.empty()) row.set(cols[i], std::nullopt);
                else row.set(cols[i], std::strtod(cell.c_str(), nullptr));
            }
            metrics_.push_back(std::move(row));
        }
    }

    void ensure_discriminator() {
        if (disc_ready_) return;
        Rng rng(s_.seed_adversary);
        disc_ = Discriminator<T>(prior_.k(), s_.disc, rng);
        disc_opt_ = Adam<T>(s_.disc_adam);
        disc_ready_ = true;
    }

    std::vector<std::vector<std::size_t>> epoch_batches(bool stratified) const {
        std::vector<std::vector<std::size_t>> batches;
        if (stratified) {
            BatchIterator it(data_.train.labels, data_.train.num_classes,
                             s_.per_class_batch * data_.train.num_classes, epoch_data_rng(epoch_));
            batches = it.epoch();
        } else {
            BatchIterator it(data_.train.size(), s_.batch_size, epoch_data_rng(epoch_));
            batches = it.epoch();
        }
        if (s_.max_batches && batches.size() > s_.max_batches) batches.resize(s_.max_batches);
        return batches;
    }

    MetricsRow adversarial_epoch() {
        const bool recon_only = in_recon_phase();
        Rng noise = epoch_noise_rng(epoch_);
        double l1 = 0, l2 = 0, ld = 0, le = 0, total = 0;
        const auto batches = epoch_batches(false);
        for (const auto& idx : batches) {
            const Tensor<T> x = data_.train.gather(idx);
            if (recon_only) {
                auto r = recon_update(x);
                l1 += r.get("recon_l1");
                l2 += r.get("clip_l2");
                total += r.total();
            } else {
                const Tensor<T> z = net_.forward(x);
                ld += disc_update(z, noise);
                auto r = net_adversarial_update(x, z);
                l1 += r.get("recon_l1");
                l2 += r.get("clip_l2");
                le += r.get("adv_enc");
                total += r.total();
            }
        }
        const double n = double(batches.size());
        MetricsRow row;
        row.set("epoch", double(epoch_ + 1));
        row.set("phase", recon_only ? 0.0 : 1.0);
        row.set("steps", n);
        row.set("recon_l1", l1 / n);
        row.set("clip_l2", l2 / n);
        row.set("adv_disc", recon_only ? std::nullopt : std::optional<double>(ld / n));
        row.set("adv_enc", recon_only ? std::nullopt : std::optional<double>(le / n));
        row.set("total", total / n);
        return row;
    }

    MetricsRow ot_epoch() {
        Rng noise = epoch_noise_rng(epoch_);
        double ot = 0, pert = 0, total = 0;
        const auto batches = epoch_batches(true);
        for (const auto& idx : batches) {
            auto r = ot_update(data_.train.gather(idx), data_.train.gather_labels(idx), noise);
            ot += r.get("ot");
            pert += r.get("perturb");
            total += r.total();
        }
        const double n = double(batches.size());
        MetricsRow row;
        row.set("epoch", double(epoch_ + 1));
        row.set("steps", n);
        row.set("ot", ot / n);
        row.set("perturb", pert / n);
        row.set("total", total / n);
        return row;
    }

    void evaluate(MetricsRow& row) {
        const auto& fd = feature_distance();
        auto [x, labels] = eval_samples(s_.fd_samples);
        if (x.all_finite() && x.dim(0) >= 2) row.set("frechet", fd.distance(x));
        if (s_.regime == Regime::ot) {
            if (fd.has_classifier()) row.set("sample_accuracy", fd.classifier().accuracy(x, labels));
            const auto eff = effective_dims(class_prior_, s_.effective_threshold);
            double mean = 0, mx = 0;
            for (auto e : eff) {
                mean += double(e) / double(eff.size());
                mx = std::max(mx, double(e));
            }
            row.set("effective_dims_mean", mean);
            row.set("effective_dims_max", mx);
        }
        row.set("round_trip_l1", round_trip_l1(net_, data_.test.head(256).images));
    }

    Rng eval_rng() const { return Rng(s_.seed_noise).split(0xe7a1u); }

    void guard(const LossReport& r, const char* what) const {
        for (const auto& [k, v] : r.values)
            if (!std::isfinite(v))
                throw NumericError(std::string(what) + " step: non-finite " + k + " at epoch " +
                                   std::to_string(epoch_ + 1));
    }

    std::string summary(const MetricsRow& row) const {
        std::string s;
        for (const auto& [k, v] : row.cells)
            if (v && k != "epoch") s += k + "=" + format_metric(v) + " ";
        if (!s.empty()) s.pop_back();
        return s;
    }

    void log(const std::string& msg) const {
        if (log_) log_(msg);
    }

    static void put_adam(Checkpoint& ck, const std::string& prefix, Adam<T>& opt) {
        ck.put_scalar<std::int64_t>(prefix + ".steps", opt.steps());
        ck.put_scalar<std::uint64_t>(prefix + ".slots", opt.first_moments().size());
        for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
            ck.put(prefix + ".m." + std::to_string(i), opt.first_moments()[i]);
            ck.put(prefix + ".v." + std::to_string(i), opt.second_moments()[i]);
        }
    }
    static void get_adam(const Checkpoint& ck, const std::string& prefix, Adam<T>& opt, const ParamRefs<T>& ps) {
        opt.set_steps(ck.get_scalar<std::int64_t>(prefix + ".steps"));
        const auto slots = ck.get_scalar<std::uint64_t>(prefix + ".slots");
        opt.first_moments().clear();
        opt.second_moments().clear();
        if (slots == 0) return;
        if (slots != ps.size()) throw CheckpointError("checkpoint: " + prefix + " slot count mismatch");
        for (std::size_t i = 0; i < slots; ++i) {
            opt.first_moments().emplace_back(ps[i]->value.shape());
            opt.second_moments().emplace_back(ps[i]->value.shape());
            ck.get_into(prefix + ".m." + std::to_string(i), opt.first_moments()[i]);
            ck.get_into(prefix + ".v." + std::to_string(i), opt.second_moments()[i]);
        }
    }

    Config cfg_;
    TrainSettings s_;
    LogFn log_;
    DataSplits<T> data_;
    InvertibleNet<T> net_;
    PriorSpec prior_;
    ClassPrior<T> class_prior_;
    Discriminator<T> disc_;
    bool disc_ready_ = false;
    Adam<T> net_opt_, disc_opt_, prior_opt_;
    std::size_t epoch_ = 0;
    std::vector<MetricsRow> metrics_;
    std::optional<FeatureDistance<T>> fd_;
};

} // namespace grevnet
