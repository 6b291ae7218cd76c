#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "grevnet/error.hpp"

namespace grevnet {

struct ConfigKey {
    std::string section;
    std::string key;
    std::string default_value;
    std::string help;
};

/// Every recognised key with its default. Order fixes the snapshot layout.
inline const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> keys{
        {"architecture", "preset", "mnist-small", "named architecture"},
        {"architecture", "input", "", "C,H,W override (requires stages)"},
        {"architecture", "stages", "", "stage list override, e.g. S,B64,B64"},
        {"architecture", "kernel", "3", "conv kernel size inside F and G"},

        {"prior", "family", "standard-normal", "standard-normal | uniform"},
        {"prior", "active_dims", "64", "number of latent dims the prior covers"},
        {"prior", "clip_bound", "2", "clip range for active dims"},
        {"prior", "selection_samples", "1000", "inputs used to pick active dims"},

        {"losses", "l1_weight", "1", "reconstruction L1 weight"},
        {"losses", "l2_weight", "1", "clip penalty weight"},
        {"losses", "adv_weight", "1", "encoder adversarial weight"},
        {"losses", "perturb_weight", "1", "perturbation loss weight"},
        {"losses", "perturb_std", "0.1", "perturbation noise std"},
        {"losses", "ot_cost", "euclidean", "euclidean | squared"},

        {"discriminator", "hidden1", "400", "first hidden width (before CReLU)"},
        {"discriminator", "hidden2", "800", "second hidden width"},
        {"discriminator", "power_iterations", "1", "power iterations per training forward"},
        {"discriminator", "warmup_iterations", "100", "power iterations at construction"},
        {"discriminator", "spectral_norm", "true", "wrap every layer in spectral normalisation"},
        {"discriminator", "steps_per_net_step", "1", "discriminator updates per net update"},

        {"training", "regime", "adversarial", "adversarial | ot"},
        {"training", "batch_size", "64", "examples per step (adversarial)"},
        {"training", "per_class_batch", "20", "examples per class per step (ot)"},
        {"training", "recon_epochs", "20", "reconstruction-only epochs (adversarial)"},
        {"training", "adversarial_epochs", "50", "adversarial epochs"},
        {"training", "epochs", "20", "epochs (ot)"},
        {"training", "lr_net", "1e-4", "Adam step size for the net"},
        {"training", "lr_disc", "4e-4", "Adam step size for the discriminator"},
        {"training", "lr_prior", "1e-2", "Adam step size for class-prior means and stds"},
        {"training", "beta1", "0", "Adam beta1"},
        {"training", "beta2", "0.9", "Adam beta2"},
        {"training", "adam_eps", "1e-8", "Adam epsilon"},
        {"training", "seed_net", "1", "net initialisation seed"},
        {"training", "seed_data", "2", "data order seed"},
        {"training", "seed_adversary", "3", "discriminator initialisation seed"},
        {"training", "seed_noise", "4", "prior and perturbation sampling seed"},
        {"training", "checkpoint_every", "1", "epochs between checkpoints (0 = final only)"},
        {"training", "max_batches", "0", "cap on batches per epoch (0 = all)"},

        {"data", "source", "mnist", "mnist | gaussian-mixture"},
        {"data", "train_images", "data/mnist/train-images.idx3-ubyte", ""},
        {"data", "train_labels", "data/mnist/train-labels.idx1-ubyte", ""},
        {"data", "test_images", "data/mnist/test-images.idx3-ubyte", ""},
        {"data", "test_labels", "data/mnist/test-labels.idx1-ubyte", ""},
        {"data", "pad", "2", "zero border on each side of 28x28 digits"},
        {"data", "limit", "0", "use only the first n training examples (0 = all)"},
        {"data", "test_limit", "0", "use only the first n test examples (0 = all)"},
        {"data", "synth_n", "256", "gaussian-mixture training size"},
        {"data", "synth_test_n", "256", "gaussian-mixture test size"},
        {"data", "synth_classes", "4", "gaussian-mixture class count"},
        {"data", "synth_dim", "4", "gaussian-mixture dimension"},
        {"data", "synth_seed", "11", "gaussian-mixture seed"},

        {"eval", "features", "classifier", "classifier | identity"},
        {"eval", "every", "1", "epochs between evaluations (0 = never)"},
        {"eval", "fd_samples", "1000", "samples per Frechet feature distance"},
        {"eval", "classifier_hidden", "128", "feature width of the evaluation classifier"},
        {"eval", "classifier_epochs", "10", "evaluation classifier training epochs"},
        {"eval", "classifier_lr", "1e-3", "evaluation classifier Adam step size"},
        {"eval", "classifier_seed", "7", "evaluation classifier seed"},
        {"eval", "effective_threshold", "0.01", "fraction of the max class std counted as used"},
        {"eval", "range_stds", "3", "default traversal half-width in stds"},
    };
    return keys;
}

/// Flat sectioned key = value settings. Later sources override earlier ones:
/// defaults, then the config file, then command-line overrides.
class Config {
public:
    Config() {
        for (const auto& k : config_schema()) values_[k.section + "." + k.key] = k.default_value;
    }

    static Config from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        Config c;
        c.merge_text(ss.str(), path);
        return c;
    }

    static Config from_text(const std::string& text) {
        Config c;
        c.merge_text(text, "<text>");
        return c;
    }

    /// Parses `[section]` headers and `key = value` lines; '#' starts a comment.
    void merge_text(const std::string& text, const std::string& origin) {
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const std::string where = origin + ":" + std::to_string(lineno);
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(where + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                if (!known_section(section)) throw ConfigError(where + ": unknown section '" + section + "'");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
            if (section.empty()) throw ConfigError(where + ": key outside any section");
            set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
        }
    }

    /// Sets a dotted key such as "training.epochs"; unknown keys are rejected.
    void set(const std::string& dotted, const std::string& value, const std::string& where = "override") {
        if (!values_.count(dotted)) throw ConfigError(where + ": unknown config key '" + dotted + "'");
        values_[dotted] = value;
    }

    /// Applies "section.key=value".
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    const std::string& get(const std::string& dotted) const {
        auto it = values_.find(dotted);
        if (it == values_.end()) throw ConfigError("unknown config key '" + dotted + "'");
        return it->second;
    }

    double get_double(const std::string& k) const {
        const auto& s = get(k);
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + k + "': expected a number, got '" + s + "'");
        }
    }

    long long get_int(const std::string& k) const {
        const auto& s = get(k);
        long long v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ConfigError("config key '" + k + "': expected an integer, got '" + s + "'");
        return v;
    }

    std::size_t get_size(const std::string& k) const {
        const long long v = get_int(k);
        if (v < 0) throw ConfigError("config key '" + k + "' must be non-negative");
        return std::size_t(v);
    }

    std::uint64_t get_seed(const std::string& k) const {
        const auto& s = get(k);
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ConfigError("config key '" + k + "': expected an unsigned integer, got '" + s + "'");
        return v;
    }

    bool get_bool(const std::string& k) const {
        const auto& s = get(k);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ConfigError("config key '" + k + "': expected true/false, got '" + s + "'");
    }

    /// Canonical text with every key, in schema order. Parsing it yields an equal config.
    std::string to_text() const {
        std::ostringstream out;
        std::string section;
        for (const auto& k : config_schema()) {
            if (k.section != section) {
                if (!section.empty()) out << "\n";
                section = k.section;
                out << "[" << section << "]\n";
            }
            out << k.key << " = " << values_.at(k.section + "." + k.key) << "\n";
        }
        return out.str();
    }

    /// FNV-1a over the canonical text.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : to_text()) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    std::string hash_hex() const {
        static const char* digits = "0123456789abcdef";
        std::string s(16, '0');
        std::uint64_t h = hash();
        for (int i = 15; i >= 0; --i, h >>= 4) s[std::size_t(i)] = digits[h & 0xf];
        return s;
    }

    bool operator==(const Config& o) const { return values_ == o.values_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }
    static bool known_section(const std::string& s) {
        return std::any_of(config_schema().begin(), config_schema().end(),
                           [&](const ConfigKey& k) { return k.section == s; });
    }

    std::map<std::string, std::string> values_;
};

} // namespace grevnet
