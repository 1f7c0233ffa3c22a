#include "nusr/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

namespace nusr {

namespace {

struct Entry {
    std::string key;
    std::string value;
    int line;
    bool used = false;
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<Entry> tokenize(const std::string& text) {
    std::vector<Entry> entries;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        }
        Entry e;
        e.key = trim(line.substr(0, eq));
        e.value = trim(line.substr(eq + 1));
        e.line = line_no;
        if (e.key.empty()) {
            throw ConfigError("missing key before '='", line_no);
        }
        for (const auto& prev : entries) {
            if (prev.key == e.key) {
                throw ConfigError("duplicate key '" + e.key + "' (first set on line " +
                                      std::to_string(prev.line) + ")",
                                  line_no);
            }
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

class Extractor {
  public:
    explicit Extractor(std::vector<Entry>& entries) : entries_(entries) {}

    Entry* find(const std::string& key) {
        for (auto& e : entries_) {
            if (e.key == key) {
                e.used = true;
                return &e;
            }
        }
        return nullptr;
    }

    void take_double(const std::string& key, double& target) {
        if (Entry* e = find(key)) target = parse_double(*e);
    }
    void take_opt_double(const std::string& key, std::optional<double>& target) {
        if (Entry* e = find(key)) target = parse_double(*e);
    }
    void take_int(const std::string& key, std::int64_t& target) {
        if (Entry* e = find(key)) target = parse_int(*e);
    }
    void take_plain_int(const std::string& key, int& target) {
        if (Entry* e = find(key)) target = static_cast<int>(parse_int(*e));
    }
    void take_opt_int(const std::string& key, std::optional<std::int64_t>& target) {
        if (Entry* e = find(key)) target = parse_int(*e);
    }
    void take_uint(const std::string& key, std::uint64_t& target) {
        if (Entry* e = find(key)) {
            const std::int64_t v = parse_int(*e);
            if (v < 0) {
                throw ConfigError("key '" + key + "' must be non-negative, got " + e->value,
                                  e->line);
            }
            target = static_cast<std::uint64_t>(v);
        }
    }
    void take_bool(const std::string& key, bool& target) {
        if (Entry* e = find(key)) {
            if (e->value == "true") {
                target = true;
            } else if (e->value == "false") {
                target = false;
            } else {
                throw ConfigError("key '" + key + "' expects 'true' or 'false', got '" + e->value +
                                      "'",
                                  e->line);
            }
        }
    }
    void take_string(const std::string& key, std::string& target) {
        if (Entry* e = find(key)) target = e->value;
    }
    void take_path(const std::string& key, std::filesystem::path& target) {
        if (Entry* e = find(key)) target = e->value;
    }
    void take_int_list(const std::string& key, std::vector<std::int64_t>& target) {
        Entry* e = find(key);
        if (!e) return;
        std::vector<std::int64_t> out;
        std::size_t start = 0;
        const std::string& v = e->value;
        while (start <= v.size()) {
            std::size_t comma = v.find(',', start);
            if (comma == std::string::npos) comma = v.size();
            const std::string item = trim(v.substr(start, comma - start));
            if (item.empty()) {
                throw ConfigError("key '" + key + "' has an empty list element", e->line);
            }
            Entry fake{e->key, item, e->line, true};
            out.push_back(parse_int(fake));
            start = comma + 1;
        }
        target = std::move(out);
    }

    void reject_unused() const {
        for (const auto& e : entries_) {
            if (!e.used) {
                throw ConfigError("unknown key '" + e.key + "'", e.line);
            }
        }
    }

  private:
    static double parse_double(const Entry& e) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(e.value, &pos);
            if (pos != e.value.size()) throw std::invalid_argument(e.value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + e.key + "' expects a number, got '" + e.value + "'",
                              e.line);
        }
    }
    static std::int64_t parse_int(const Entry& e) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(e.value, &pos);
            if (pos != e.value.size()) throw std::invalid_argument(e.value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + e.key + "' expects an integer, got '" + e.value + "'",
                              e.line);
        }
    }

    std::vector<Entry>& entries_;
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    std::vector<Entry> entries = tokenize(text);
    Extractor ex(entries);
    RunConfig cfg;

    ex.take_uint("seed", cfg.seed);
    ex.take_path("paths.data_dir", cfg.data_dir);
    ex.take_path("paths.out_dir", cfg.out_dir);

    ex.take_double("degrade.factor_horizontal", cfg.degrade.factor_horizontal);
    ex.take_double("degrade.factor_vertical", cfg.degrade.factor_vertical);
    ex.take_opt_int("degrade.intermediate_width", cfg.degrade.intermediate_width);
    ex.take_opt_int("degrade.intermediate_height", cfg.degrade.intermediate_height);
    ex.take_int("degrade.output_width", cfg.degrade.output_width);
    ex.take_int("degrade.output_height", cfg.degrade.output_height);
    ex.take_double("degrade.normalize_lo", cfg.degrade.normalize_lo);
    ex.take_double("degrade.normalize_hi", cfg.degrade.normalize_hi);

    bool augment_enabled = false;
    ex.take_bool("augment.enabled", augment_enabled);
    AugmentSpec aug;
    const char* aug_keys[] = {"augment.rotation_max_deg", "augment.translate_frac",
                              "augment.scale_lo",         "augment.scale_hi",
                              "augment.blur_sigma_max",   "augment.crop_frac"};
    if (!augment_enabled) {
        for (const char* key : aug_keys) {
            for (const auto& e : entries) {
                if (e.key == key) {
                    throw ConfigError(std::string("key '") + key +
                                          "' requires augment.enabled = true",
                                      e.line);
                }
            }
        }
    }
    ex.take_double("augment.rotation_max_deg", aug.rotation_max_deg);
    ex.take_double("augment.translate_frac", aug.translate_frac);
    ex.take_double("augment.scale_lo", aug.scale_lo);
    ex.take_double("augment.scale_hi", aug.scale_hi);
    ex.take_double("augment.blur_sigma_max", aug.blur_sigma_max);
    ex.take_double("augment.crop_frac", aug.crop_frac);
    if (augment_enabled) {
        cfg.degrade.augment = aug;
    }

    ex.take_plain_int("model.levels", cfg.model.levels);
    ex.take_int_list("model.channels", cfg.model.channels);
    ex.take_int("model.in_channels", cfg.model.in_channels);
    ex.take_int("model.out_channels", cfg.model.out_channels);
    ex.take_bool("model.nested", cfg.model.nested);

    if (Entry* e = ex.find("train.loss")) {
        if (e->value == "mse") {
            cfg.train.loss = LossKind::MSE;
        } else if (e->value == "nlmse") {
            cfg.train.loss = LossKind::NLMSE;
        } else {
            throw ConfigError("key 'train.loss' expects 'mse' or 'nlmse', got '" + e->value + "'",
                              e->line);
        }
    }
    ex.take_double("train.learning_rate", cfg.train.learning_rate);
    ex.take_double("train.weight_decay", cfg.train.weight_decay);
    ex.take_double("train.adam_beta1", cfg.train.adam_beta1);
    ex.take_double("train.adam_beta2", cfg.train.adam_beta2);
    ex.take_double("train.adam_eps", cfg.train.adam_eps);
    ex.take_int("train.steps", cfg.train.steps);
    ex.take_double("train.nlmse_epsilon", cfg.train.nlmse_epsilon);
    ex.take_int("train.checkpoint_every", cfg.train.checkpoint_every);
    ex.take_int("train.val_every", cfg.train.val_every);

    ex.take_opt_double("metrics.psnr_peak", cfg.metrics.psnr_peak);
    ex.take_plain_int("metrics.ssim_window", cfg.metrics.ssim_window);
    ex.take_double("metrics.ssim_sigma", cfg.metrics.ssim_sigma);
    ex.take_double("metrics.ssim_k1", cfg.metrics.ssim_k1);
    ex.take_double("metrics.ssim_k2", cfg.metrics.ssim_k2);
    ex.take_opt_double("metrics.ssim_dynamic_range", cfg.metrics.ssim_dynamic_range);

    ex.reject_unused();

    // One seed drives every stage; the image domain the trainer assumes is
    // whatever the degradation stage normalizes into.
    cfg.degrade.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.train.norm_lo = cfg.degrade.normalize_lo;
    cfg.train.norm_hi = cfg.degrade.normalize_hi;

    try {
        cfg.degrade.validate();
        cfg.model.validate();
        cfg.train.validate();
        cfg.metrics.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

std::string run_config_template() {
    return
        "# Run configuration. Every key is optional; the values below are the\n"
        "# defaults. Unknown keys are rejected.\n"
        "\n"
        "seed = 0\n"
        "# paths.data_dir = data\n"
        "# paths.out_dir = out\n"
        "\n"
        "degrade.factor_horizontal = 1.5\n"
        "degrade.factor_vertical = 5\n"
        "# degrade.intermediate_width = 172   # overrides the factor-derived width\n"
        "# degrade.intermediate_height = 52   # overrides the factor-derived height\n"
        "degrade.output_width = 256\n"
        "degrade.output_height = 256\n"
        "degrade.normalize_lo = -0.5\n"
        "degrade.normalize_hi = 0.5\n"
        "\n"
        "augment.enabled = false\n"
        "# augment.rotation_max_deg = 10\n"
        "# augment.translate_frac = 0.05\n"
        "# augment.scale_lo = 0.95\n"
        "# augment.scale_hi = 1.05\n"
        "# augment.blur_sigma_max = 1\n"
        "# augment.crop_frac = 0.9\n"
        "\n"
        "model.levels = 5\n"
        "model.channels = 32,64,128,256,512\n"
        "model.in_channels = 1\n"
        "model.out_channels = 1\n"
        "model.nested = true\n"
        "\n"
        "train.loss = nlmse\n"
        "train.learning_rate = 1e-4\n"
        "train.weight_decay = 5e-4\n"
        "train.adam_beta1 = 0.9\n"
        "train.adam_beta2 = 0.999\n"
        "train.adam_eps = 1e-8\n"
        "train.steps = 60000\n"
        "train.nlmse_epsilon = 1e-12\n"
        "train.checkpoint_every = 0\n"
        "train.val_every = 0\n"
        "\n"
        "# metrics.psnr_peak = 1          # default: ground-truth dynamic range\n"
        "metrics.ssim_window = 11\n"
        "metrics.ssim_sigma = 1.5\n"
        "metrics.ssim_k1 = 0.01\n"
        "metrics.ssim_k2 = 0.03\n"
        "# metrics.ssim_dynamic_range = 1 # default: ground-truth dynamic range\n";
}

}  // namespace nusr
