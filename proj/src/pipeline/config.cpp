#include <cstdlib>
#include <json.hpp>

#include "afen/binary_io.hpp"
#include "afen/pipeline.hpp"

namespace afen::pipeline {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(Errc::ConfigError, msg); }

struct KeyDef {
    ConfigKey key;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&)> set;
};

template <typename Ref>
KeyDef real_key(std::string name, std::string doc, Ref ref) {
    return {{name, std::move(doc)},
            [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [ref, name](RunConfig& c, const json& v) {
                if (!v.is_number()) config_error(name + " must be a number");
                ref(c) = v.get<double>();
            }};
}

template <typename Ref>
KeyDef count_key(std::string name, std::string doc, Ref ref) {
    return {{name, std::move(doc)},
            [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [ref, name](RunConfig& c, const json& v) {
                if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
                    config_error(name + " must be a nonnegative integer");
                ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(v.get<std::uint64_t>());
            }};
}

template <typename Ref>
KeyDef flag_key(std::string name, std::string doc, Ref ref) {
    return {{name, std::move(doc)},
            [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [ref, name](RunConfig& c, const json& v) {
                if (!v.is_boolean()) config_error(name + " must be true or false");
                ref(c) = v.get<bool>();
            }};
}

template <typename Ref>
KeyDef path_key(std::string name, std::string doc, Ref ref) {
    return {{name, std::move(doc)},
            [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c)).generic_string()); },
            [ref, name](RunConfig& c, const json& v) {
                if (!v.is_string()) config_error(name + " must be a string");
                ref(c) = fs::path(v.get<std::string>());
            }};
}

template <typename E, std::size_t N, typename Ref>
KeyDef choice_key(std::string name, std::string doc, std::array<std::pair<const char*, E>, N> choices, Ref ref) {
    return {{name, std::move(doc)},
            [ref, choices](const RunConfig& c) {
                const E value = ref(const_cast<RunConfig&>(c));
                for (const auto& [text, e] : choices)
                    if (e == value) return json(text);
                return json(nullptr);
            },
            [ref, choices, name](RunConfig& c, const json& v) {
                std::string allowed;
                for (const auto& [text, e] : choices) {
                    if (v.is_string() && v.get<std::string>() == text) {
                        ref(c) = e;
                        return;
                    }
                    allowed += (allowed.empty() ? "" : ", ") + std::string(text);
                }
                config_error(name + " must be one of: " + allowed);
            }};
}

const std::vector<KeyDef>& key_defs() {
    static const std::vector<KeyDef> defs = [] {
        std::vector<KeyDef> d;
        d.push_back(path_key("corpus_dir", "directory of WAV recordings plus patient_diagnosis.csv",
                             [](RunConfig& c) -> fs::path& { return c.corpus_dir; }));
        d.push_back(path_key("output_dir", "run directory holding caches, models and reports",
                             [](RunConfig& c) -> fs::path& { return c.output_dir; }));
        d.push_back(path_key("diagnosis_csv", "diagnosis table; empty means <corpus_dir>/patient_diagnosis.csv",
                             [](RunConfig& c) -> fs::path& { return c.diagnosis_csv; }));
        d.push_back(count_key("seed", "run seed for splitting, augmentation and training (AFEN_SEED when unset)",
                              [](RunConfig& c) -> std::uint64_t& { return c.seed; }));

        d.push_back(real_key("split.test_fraction", "per-class test share",
                             [](RunConfig& c) -> double& { return c.split.test_fraction; }));
        d.push_back(real_key("split.val_fraction", "per-class validation share of the remaining training part",
                             [](RunConfig& c) -> double& { return c.split.val_fraction; }));
        d.push_back(choice_key<dataset::SplitBy, 2>(
            "split.by", "split unit: recording or patient",
            {{{"recording", dataset::SplitBy::Recording}, {"patient", dataset::SplitBy::Patient}}},
            [](RunConfig& c) -> dataset::SplitBy& { return c.split.by; }));

        d.push_back(count_key("augment.count", "augmented variants per training clip",
                              [](RunConfig& c) -> std::size_t& { return c.augment_count; }));
        d.push_back(choice_key<AugmentBalance, 2>(
            "augment.balance", "uniform: same count for every class; proportional: scale counts up for smaller classes",
            {{{"uniform", AugmentBalance::Uniform}, {"proportional", AugmentBalance::Proportional}}},
            [](RunConfig& c) -> AugmentBalance& { return c.augment_balance; }));
        d.push_back({{"augment.snr_db", "AWGN signal-to-noise ratio in dB (null: no noise)"},
                     [](const RunConfig& c) {
                         return std::isinf(c.augment.snr_db) ? json(nullptr) : json(c.augment.snr_db);
                     },
                     [](RunConfig& c, const json& v) {
                         if (v.is_null()) c.augment.snr_db = augment::kNoNoise;
                         else if (v.is_number()) c.augment.snr_db = v.get<double>();
                         else config_error("augment.snr_db must be a number or null");
                     }});
        d.push_back(real_key("augment.band_lo_hz", "bandpass lower edge in Hz",
                             [](RunConfig& c) -> double& { return c.augment.band_lo_hz; }));
        d.push_back(real_key("augment.band_hi_hz", "bandpass upper edge in Hz",
                             [](RunConfig& c) -> double& { return c.augment.band_hi_hz; }));
        d.push_back(count_key("augment.band_order", "bandpass order: 2, 4 or 8",
                              [](RunConfig& c) -> int& { return c.augment.band_order; }));
        d.push_back(real_key("augment.shift_max_fraction", "time shift drawn from [-x, x] of the clip length",
                             [](RunConfig& c) -> double& { return c.augment.shift_max_fraction; }));
        d.push_back(real_key("augment.pitch_max_semitones", "pitch shift drawn from [-x, x] semitones",
                             [](RunConfig& c) -> double& { return c.augment.pitch_max_semitones; }));

        d.push_back(real_key("features.rolloff_pct", "spectral rolloff energy fraction",
                             [](RunConfig& c) -> double& { return c.rolloff_pct; }));
        d.push_back(flag_key("features.summary_minmax", "add per-row min and max to the tree-model vector (728 wide)",
                             [](RunConfig& c) -> bool& { return c.summary_minmax; }));

        d.push_back({{"cnn.arch", "network size: standard or compact"},
                     [](const RunConfig& c) { return json(c.cnn_arch); },
                     [](RunConfig& c, const json& v) {
                         if (!v.is_string() || (v != "standard" && v != "compact"))
                             config_error("cnn.arch must be one of: standard, compact");
                         c.cnn_arch = v.get<std::string>();
                     }});
        d.push_back(count_key("cnn.epochs", "training epochs",
                              [](RunConfig& c) -> std::size_t& { return c.cnn.epochs; }));
        d.push_back(count_key("cnn.batch_size", "mini-batch size",
                              [](RunConfig& c) -> std::size_t& { return c.cnn.batch_size; }));
        d.push_back(real_key("cnn.dropout", "dropout rate of the dense head",
                             [](RunConfig& c) -> double& { return c.cnn.dropout; }));
        d.push_back(choice_key<nn::OptimizerKind, 2>(
            "cnn.optimizer", "adam or sgd_momentum",
            {{{"adam", nn::OptimizerKind::Adam}, {"sgd_momentum", nn::OptimizerKind::SgdMomentum}}},
            [](RunConfig& c) -> nn::OptimizerKind& { return c.cnn.optimizer.kind; }));
        d.push_back(real_key("cnn.learning_rate", "optimizer step size",
                             [](RunConfig& c) -> double& { return c.cnn.optimizer.learning_rate; }));
        d.push_back(real_key("cnn.beta1", "Adam first-moment decay",
                             [](RunConfig& c) -> double& { return c.cnn.optimizer.beta1; }));
        d.push_back(real_key("cnn.beta2", "Adam second-moment decay",
                             [](RunConfig& c) -> double& { return c.cnn.optimizer.beta2; }));
        d.push_back(real_key("cnn.epsilon", "Adam denominator offset",
                             [](RunConfig& c) -> double& { return c.cnn.optimizer.epsilon; }));
        d.push_back(real_key("cnn.momentum", "SGD momentum",
                             [](RunConfig& c) -> double& { return c.cnn.optimizer.momentum; }));

        d.push_back(count_key("gbdt.n_rounds", "boosting rounds",
                              [](RunConfig& c) -> std::size_t& { return c.gbdt.n_rounds; }));
        d.push_back(real_key("gbdt.learning_rate", "shrinkage applied to leaf weights",
                             [](RunConfig& c) -> double& { return c.gbdt.learning_rate; }));
        d.push_back(count_key("gbdt.max_depth", "maximum tree depth",
                              [](RunConfig& c) -> std::size_t& { return c.gbdt.max_depth; }));
        d.push_back(real_key("gbdt.min_child_weight", "minimum hessian sum per child",
                             [](RunConfig& c) -> double& { return c.gbdt.min_child_weight; }));
        d.push_back(real_key("gbdt.lambda", "L2 penalty on leaf weights",
                             [](RunConfig& c) -> double& { return c.gbdt.lambda; }));
        d.push_back(real_key("gbdt.gamma", "minimum split gain",
                             [](RunConfig& c) -> double& { return c.gbdt.gamma; }));

        d.push_back(choice_key<WeightMode, 2>(
            "ensemble.mode", "fixed: use ensemble.weight_cnn; calibrated: grid-search it on validation log loss",
            {{{"fixed", WeightMode::Fixed}, {"calibrated", WeightMode::Calibrated}}},
            [](RunConfig& c) -> WeightMode& { return c.weight_mode; }));
        d.push_back(real_key("ensemble.weight_cnn", "CNN weight in the soft vote (GBDT gets 1 - w)",
                             [](RunConfig& c) -> double& { return c.weight_cnn; }));
        return d;
    }();
    return defs;
}

const KeyDef& find_key(std::string_view name) {
    for (const auto& d : key_defs())
        if (d.key.name == name) return d;
    config_error("unknown config key '" + std::string(name) + "'");
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
    for (const auto& [k, v] : j.items()) {
        const std::string name = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object()) flatten(v, name, out);
        else out.emplace_back(name, v);
    }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& d : key_defs()) k.push_back(d.key);
        return k;
    }();
    return keys;
}

RunConfig RunConfig::from_environment() {
    RunConfig c;
    if (const char* env = std::getenv("AFEN_SEED"); env && *env) {
        try {
            c.set("seed", env);
        } catch (const Error& e) {
            throw Error(Errc::ConfigError, "AFEN_SEED: " + e.detail());
        }
    }
    c.sync_seeds();
    return c;
}

void RunConfig::apply_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        config_error(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) config_error("config must be a JSON object");
    std::vector<std::pair<std::string, json>> flat;
    flatten(j, "", flat);
    for (const auto& [k, v] : flat) find_key(k).set(*this, v);
    sync_seeds();
}

void RunConfig::apply_file(const fs::path& path) {
    if (!fs::exists(path)) config_error("config file not found: " + path.string());
    try {
        apply_json(read_text_file(path));
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

void RunConfig::set(std::string_view key, std::string_view value) {
    const auto& def = find_key(key);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = std::string(value);
    def.set(*this, v);
    sync_seeds();
}

void RunConfig::sync_seeds() {
    split.seed = seed;
    augment.seed = seed;
    cnn.seed = seed;
    gbdt.seed = seed;
    cnn.validation_fraction = split.val_fraction;
    gbdt.class_count = dataset::kClassCount;
}

void RunConfig::validate() const {
    if (output_dir.empty()) config_error("output_dir is empty");
    if (!(split.test_fraction >= 0.0 && split.test_fraction < 1.0)) config_error("split.test_fraction must be in [0, 1)");
    if (!(split.val_fraction >= 0.0 && split.val_fraction < 1.0)) config_error("split.val_fraction must be in [0, 1)");
    try {
        augment.validate();
    } catch (const Error& e) {
        config_error("augment: " + e.detail());
    }
    if (!(rolloff_pct > 0.0 && rolloff_pct < 1.0)) config_error("features.rolloff_pct must be in (0, 1)");
    cnn.validate();
    gbdt.validate();
    if (!(weight_cnn >= 0.0 && weight_cnn <= 1.0)) config_error("ensemble.weight_cnn must be in [0, 1]");
}

std::string RunConfig::to_json() const {
    json j = json::object();
    for (const auto& d : key_defs()) j[d.key.name] = d.get(*this);
    return j.dump(2);
}

}  // namespace afen::pipeline
