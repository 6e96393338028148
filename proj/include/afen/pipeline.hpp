#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afen/augment.hpp"
#include "afen/dataset.hpp"
#include "afen/error.hpp"
#include "afen/gbdt.hpp"
#include "afen/matrix.hpp"
#include "afen/metrics.hpp"
#include "afen/nn/train.hpp"

namespace afen::pipeline {

namespace fs = std::filesystem;

enum class WeightMode { Fixed, Calibrated };
enum class AugmentBalance { Uniform, Proportional };

/// Every knob of a run. Defaults are those of the owning modules.
struct RunConfig {
    fs::path corpus_dir = "corpus";
    fs::path output_dir = "run";
    fs::path diagnosis_csv;  // empty: <corpus_dir>/patient_diagnosis.csv
    std::uint64_t seed = 0;

    dataset::SplitOptions split;

    augment::AugmentSpec augment;
    std::size_t augment_count = 4;  // variants per training clip
    AugmentBalance augment_balance = AugmentBalance::Uniform;

    double rolloff_pct = 0.85;
    bool summary_minmax = false;

    std::string cnn_arch = "standard";  // standard | compact
    nn::TrainConfig cnn;
    gbdt::BoostConfig gbdt;

    WeightMode weight_mode = WeightMode::Fixed;
    double weight_cnn = 0.5;

    /// Defaults, with the seed taken from AFEN_SEED when it is set.
    static RunConfig from_environment();

    /// Applies a JSON object of dotted keys (nested objects are flattened).
    /// Unknown keys and ill-typed values raise ConfigError.
    void apply_json(std::string_view text);
    void apply_file(const fs::path& path);
    /// `value` is parsed as JSON when possible, otherwise taken as a string.
    void set(std::string_view key, std::string_view value);

    /// Range checks of every section; ConfigError on failure.
    void validate() const;
    /// Propagates the run seed into the per-module configs.
    void sync_seeds();

    /// Flat ordered JSON of every key.
    std::string to_json() const;
};

struct ConfigKey {
    std::string name;
    std::string doc;
};
/// The documented key set, in file order.
const std::vector<ConfigKey>& config_keys();

/// Output directory layout.
struct Layout {
    fs::path root;

    fs::path manifest() const { return root / "manifest.json"; }
    fs::path lock() const { return root / ".lock"; }
    fs::path split_csv() const { return root / "split.csv"; }
    fs::path clips_dir() const { return root / "clips"; }
    fs::path clip_index() const { return root / "clips" / "clips.csv"; }
    fs::path features_dir() const { return root / "features"; }
    fs::path summary(std::string_view split) const;
    fs::path feature_file(const std::string& clip, features::FeatureKind kind) const;
    fs::path models_dir() const { return root / "models"; }
    fs::path cnn_model() const { return root / "models" / "cnn.afm"; }
    fs::path gbdt_model() const { return root / "models" / "gbdt.afg"; }
    /// JSON next to each model: class names, feature options, ensemble weight.
    fs::path sidecar(std::string_view model) const;
    fs::path history(std::string_view model) const;
    fs::path report(std::string_view model) const;
};

/// Holds <output>/.lock for the lifetime of the object. A lock whose owner
/// process is gone is taken over; a live one raises Locked.
class DirLock {
public:
    explicit DirLock(const fs::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

/// Per-stage record in manifest.json.
struct StageRecord {
    std::string key;                             // hash of inputs + config subset
    std::map<std::string, std::string> inputs;   // path relative to the output dir -> hash
    std::map<std::string, std::string> outputs;  // idem
    double seconds = 0.0;
};

struct RunManifest {
    std::string build_id;
    std::string config_json = "{}";
    std::map<std::string, StageRecord> stages;

    static RunManifest load(const fs::path& path);  // empty manifest when absent
    void save(const fs::path& path) const;
    std::string to_json() const;
};

std::string_view build_id() noexcept;

using Logger = std::function<void(const std::string&)>;

struct Context {
    RunConfig config;
    Logger log = [](const std::string&) {};
    bool force = false;  // rerun stages even when their record is current
};

/// One row of clips/clips.csv.
struct ClipEntry {
    std::string clip;    // path relative to clips/, e.g. "train/101_1b1_Al_sc_Meditron.aug1-awgn.wav"
    std::string source;  // corpus-relative path of the original recording
    int patient = 0;
    dataset::Label label = dataset::Label::Healthy;
    std::string split;
    std::string augment = "none";
    double parameter = 0.0;
    friend bool operator==(const ClipEntry&, const ClipEntry&) = default;
};
std::string clip_index_csv(const std::vector<ClipEntry>& rows);
std::vector<ClipEntry> parse_clip_index(std::string_view text);

struct StageOutcome {
    bool skipped = false;  // record was current; nothing rewritten
    double seconds = 0.0;
};

/// Split the corpus, standardize every recording and cache it as 16-bit WAV,
/// with augmented variants for the training split only.
StageOutcome prepare(Context& ctx);
/// Five feature files per cached clip plus one summary matrix per split.
StageOutcome extract(Context& ctx);

enum class Model { Cnn, Gbdt, Ensemble };
std::string_view model_name(Model m) noexcept;
Model parse_model(std::string_view name);

/// Trains the requested model (ensemble: both members, then fusion) and
/// writes models, history CSVs, test/validation probabilities and reports.
StageOutcome train(Context& ctx, Model which);
/// Class probabilities of the saved models on one split (empty matrices for
/// a model that has not been trained).
struct SplitScores {
    std::vector<int> labels;
    Matrix cnn;
    Matrix gbdt;
};
SplitScores scores(Context& ctx, std::string_view split);

/// Recomputes the test reports from the saved models and feature caches.
std::vector<metrics::EvalReport> evaluate(Context& ctx);

struct Prediction {
    std::string label;
    double probability = 0.0;
};
/// Standardize, extract and score one recording with a trained bundle.
std::vector<Prediction> predict(const fs::path& models_dir, const fs::path& wav, Model which, std::size_t top_k);
std::string predictions_json(const std::vector<Prediction>& p);

/// 2 config, 3 data, 4 numeric.
int exit_code(Errc code) noexcept;

}  // namespace afen::pipeline
