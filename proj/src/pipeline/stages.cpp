#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "afen/audio_io.hpp"
#include "afen/binary_io.hpp"
#include "afen/feature_cache.hpp"
#include "afen/features.hpp"
#include "afen/nn/serialize.hpp"
#include "afen/pipeline.hpp"

namespace afen::pipeline {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;
using features::FeatureKind;

namespace {

constexpr std::array<std::string_view, 3> kSplits{"train", "val", "test"};

std::string rel(const Layout& layout, const fs::path& p) { return fs::relative(p, layout.root).generic_string(); }

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

/// Config keys whose name starts with one of `prefixes`.
json config_subset(const RunConfig& c, std::initializer_list<std::string_view> prefixes) {
    const auto all = json::parse(c.to_json());
    json out = json::object();
    for (const auto& [k, v] : all.items())
        for (auto p : prefixes)
            if (k.rfind(p, 0) == 0) out[k] = v;
    return out;
}

std::string stage_key(std::string_view stage, const json& subset, const std::map<std::string, std::string>& inputs) {
    json j;
    j["stage"] = stage;
    j["config"] = subset;
    j["inputs"] = inputs;
    return content_hash(j.dump());
}

/// Tracks one stage: decides whether its record is current and, once the
/// outputs are written, stores their hashes in the manifest.
class Stage {
public:
    Stage(Context& ctx, std::string name, const json& subset, std::map<std::string, std::string> inputs)
        : ctx_(ctx), layout_{ctx.config.output_dir}, name_(std::move(name)), start_(Clock::now()) {
        record_.inputs = std::move(inputs);
        record_.key = stage_key(name_, subset, record_.inputs);
    }

    bool current() const {
        if (ctx_.force) return false;
        const auto m = RunManifest::load(layout_.manifest());
        const auto it = m.stages.find(name_);
        if (it == m.stages.end() || it->second.key != record_.key) return false;
        for (const auto& [path, hash] : it->second.outputs) {
            const auto p = layout_.root / path;
            if (!fs::exists(p) || file_hash(p) != hash) return false;
        }
        return true;
    }

    /// Writes `bytes` to `path` and records its hash.
    void emit(const fs::path& path, std::span<const std::uint8_t> bytes) {
        fs::create_directories(path.parent_path());
        write_file(path, bytes);
        record_.outputs[rel(layout_, path)] = content_hash(bytes);
    }
    void emit_text(const fs::path& path, std::string_view text) {
        emit(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    }

    StageOutcome commit() {
        record_.seconds = seconds_since(start_);
        auto m = RunManifest::load(layout_.manifest());
        m.build_id = std::string(build_id());
        m.config_json = ctx_.config.to_json();
        m.stages[name_] = record_;
        m.save(layout_.manifest());
        ctx_.log(name_ + ": done in " + format_seconds(record_.seconds));
        return {false, record_.seconds};
    }

    StageOutcome skip() const {
        ctx_.log(name_ + ": up to date");
        return {true, 0.0};
    }

    static std::string format_seconds(double s) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f s", s);
        return buf;
    }

private:
    Context& ctx_;
    Layout layout_;
    std::string name_;
    Clock::time_point start_;
    StageRecord record_;
};

/// Outputs of `producer`, each re-hashed and compared with its record.
std::map<std::string, std::string> verified_outputs(const Layout& layout, const std::string& producer,
                                                    const std::string& command) {
    const auto m = RunManifest::load(layout.manifest());
    const auto it = m.stages.find(producer);
    if (it == m.stages.end())
        throw Error(Errc::MissingArtifact, "no " + producer + " outputs in " + layout.root.string() + "; run `afen " +
                                               command + "` first");
    for (const auto& [path, hash] : it->second.outputs) {
        const auto p = layout.root / path;
        if (!fs::exists(p))
            throw Error(Errc::MissingArtifact, p.string() + " is missing; rerun `afen " + command + "`");
        if (file_hash(p) != hash)
            throw Error(Errc::CacheFormatError, p.string() + " changed since " + producer + " wrote it; rerun `afen " +
                                                    command + "`");
    }
    return it->second.outputs;
}

void remove_tree(const fs::path& p) {
    std::error_code ec;
    fs::remove_all(p, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot clear " + p.string() + ": " + ec.message());
}

std::string clip_name(const std::string& stem, std::size_t variant, augment::AugmentKind kind) {
    return stem + ".aug" + std::to_string(variant + 1) + "-" + std::string(augment::kind_name(kind)) + ".wav";
}

std::vector<ClipEntry> load_clip_index(const Layout& layout) {
    try {
        return parse_clip_index(read_text_file(layout.clip_index()));
    } catch (const Error& e) {
        throw e.with_context(layout.clip_index().string());
    }
}

std::vector<ClipEntry> entries_of(const std::vector<ClipEntry>& all, std::string_view split) {
    std::vector<ClipEntry> out;
    for (const auto& e : all)
        if (e.split == split) out.push_back(e);
    return out;
}

std::string test_manifest_hash(const std::vector<ClipEntry>& all) {
    return content_hash(clip_index_csv(entries_of(all, "test")));
}

features::FeatureExtractor make_extractor(const RunConfig& c) {
    features::FeatureExtractor::Options o;
    o.rolloff_pct = c.rolloff_pct;
    o.summary_minmax = c.summary_minmax;
    return features::FeatureExtractor(o);
}

struct SplitData {
    std::vector<ClipEntry> entries;
    std::vector<int> labels;
    nn::CnnData cnn;
    Matrix summary;
};

SplitData load_split(const Layout& layout, const std::vector<ClipEntry>& all, std::string_view split,
                     const nn::ArchSpec& arch, bool with_cnn) {
    SplitData d;
    d.entries = entries_of(all, split);
    d.cnn = nn::CnnData::for_arch(arch);
    for (const auto& e : d.entries) {
        d.labels.push_back(static_cast<int>(e.label));
        if (!with_cnn) continue;
        features::FeatureBundle b;
        for (auto k : features::kAllKinds) b[k] = features::read_feature(layout.feature_file(e.clip, k), k);
        d.cnn.add(b, static_cast<int>(e.label));
    }
    d.summary = features::read_cache_matrix(layout.summary(split), features::kSummaryTag).values;
    if (d.summary.rows != d.entries.size())
        throw Error(Errc::CacheFormatError, layout.summary(split).string() + " has " + std::to_string(d.summary.rows) +
                                                " rows for " + std::to_string(d.entries.size()) + " clips; rerun `afen extract`");
    return d;
}

nn::ArchSpec arch_for(const RunConfig& c) {
    nn::ArchSpec a = c.cnn_arch == "compact" ? nn::ArchSpec::compact() : nn::ArchSpec::standard();
    a.dropout = c.cnn.dropout;
    a.classes = dataset::kClassCount;
    return a;
}

json base_metadata(const RunConfig& c, const std::vector<ClipEntry>& all) {
    json m;
    m["seed"] = c.seed;
    m["split_by"] = c.split.by == dataset::SplitBy::Patient ? "patient" : "recording";
    m["test_manifest_hash"] = test_manifest_hash(all);
    m["test_size"] = entries_of(all, "test").size();
    return m;
}

std::string report_json(const Matrix& probs, const std::vector<int>& labels, std::string_view model, const json& meta) {
    auto r = metrics::evaluate(probs, labels, dataset::class_names(), std::string(model));
    r.metadata_json = meta.dump();
    return r.to_json() + "\n";
}

std::string sidecar_json(const RunConfig& c, std::optional<double> weight) {
    json j;
    j["classes"] = dataset::class_names();
    j["features.rolloff_pct"] = c.rolloff_pct;
    j["features.summary_minmax"] = c.summary_minmax;
    if (weight) {
        j["ensemble.weight_cnn"] = *weight;
        j["ensemble.mode"] = c.weight_mode == WeightMode::Calibrated ? "calibrated" : "fixed";
    }
    return j.dump(2) + "\n";
}

Matrix gbdt_probabilities(const gbdt::GbdtModel& m, const Matrix& summary) {
    if (summary.rows == 0) return Matrix(0, m.base_score.size());
    return gbdt::predict_gbdt(m, gbdt::FeatureTable::from_matrix(summary));
}

Matrix cnn_probabilities(nn::CnnModel<float>& m, const nn::CnnData& data) {
    if (data.size() == 0) return Matrix(0, m.arch().classes);
    return nn::predict_proba(m, data);
}

/// Jensen bound of the soft vote checked on consecutive batches of 32.
bool jensen_on_batches(const Matrix& pc, const Matrix& pg, const std::vector<int>& labels, double w) {
    for (std::size_t start = 0; start < labels.size(); start += 32) {
        const std::size_t end = std::min(labels.size(), start + 32);
        Matrix a(end - start, pc.cols), b(end - start, pg.cols);
        for (std::size_t i = start; i < end; ++i) {
            std::copy(pc.row(i).begin(), pc.row(i).end(), a.row(i - start).begin());
            std::copy(pg.row(i).begin(), pg.row(i).end(), b.row(i - start).begin());
        }
        if (!metrics::jensen_bound_holds(a, b, std::span(labels).subspan(start, end - start), w)) return false;
    }
    return true;
}

std::vector<std::size_t> variant_counts(const RunConfig& c, const std::vector<dataset::Recording>& corpus,
                                        const dataset::DatasetSplit& split) {
    std::vector<std::size_t> train_count(dataset::kClassCount, 0);
    for (auto i : split.train) ++train_count[static_cast<std::size_t>(corpus[i].label)];
    std::vector<std::size_t> out(dataset::kClassCount, c.augment_count);
    if (c.augment_balance == AugmentBalance::Proportional) {
        const auto largest = *std::max_element(train_count.begin(), train_count.end());
        for (std::size_t k = 0; k < out.size(); ++k)
            if (train_count[k] > 0)
                out[k] = static_cast<std::size_t>(std::lround(static_cast<double>(c.augment_count) *
                                                              static_cast<double>(largest) /
                                                              static_cast<double>(train_count[k])));
    }
    return out;
}

StageOutcome train_cnn(Context& ctx) {
    const Layout layout{ctx.config.output_dir};
    const auto& c = ctx.config;
    Stage stage(ctx, "train_cnn", config_subset(c, {"seed", "cnn."}), verified_outputs(layout, "extract", "extract"));
    if (stage.current()) return stage.skip();

    const auto all = load_clip_index(layout);
    const auto arch = arch_for(c);
    const auto train = load_split(layout, all, "train", arch, true);
    const auto val = load_split(layout, all, "val", arch, true);
    const auto test = load_split(layout, all, "test", arch, true);
    ctx.log("train_cnn: " + std::to_string(train.cnn.size()) + " train, " + std::to_string(val.cnn.size()) +
            " val samples, " + std::to_string(c.cnn.epochs) + " epochs");

    nn::CnnModel<float> model(arch);
    model.init(c.seed);
    const auto fit = nn::fit_cnn(model, train.cnn, val.cnn, c.cnn);
    const auto& last = fit.history.back();
    char line[160];
    std::snprintf(line, sizeof line, "train_cnn: best epoch %zu, final train loss %.4f acc %.4f", fit.best_epoch,
                  last.train_loss, last.train_acc);
    ctx.log(line);

    const Matrix p_test = cnn_probabilities(model, test.cnn);
    stage.emit(layout.cnn_model(), nn::encode_model(model));
    stage.emit_text(layout.sidecar("cnn"), sidecar_json(c, std::nullopt));
    stage.emit_text(layout.history("cnn"), nn::history_csv(fit.history));

    auto meta = base_metadata(c, all);
    meta["arch"] = c.cnn_arch;
    meta["epochs"] = c.cnn.epochs;
    meta["best_epoch"] = fit.best_epoch;
    stage.emit_text(layout.report("cnn"), report_json(p_test, test.labels, "cnn", meta));
    return stage.commit();
}

StageOutcome train_gbdt(Context& ctx) {
    const Layout layout{ctx.config.output_dir};
    const auto& c = ctx.config;
    Stage stage(ctx, "train_gbdt", config_subset(c, {"seed", "gbdt."}), verified_outputs(layout, "extract", "extract"));
    if (stage.current()) return stage.skip();

    const auto all = load_clip_index(layout);
    const auto arch = arch_for(c);
    const auto train = load_split(layout, all, "train", arch, false);
    const auto test = load_split(layout, all, "test", arch, false);
    ctx.log("train_gbdt: " + std::to_string(train.summary.rows) + " x " + std::to_string(train.summary.cols) +
            ", " + std::to_string(c.gbdt.n_rounds) + " rounds");

    gbdt::FitHistory history;
    const auto model = gbdt::fit_gbdt(gbdt::FeatureTable::from_matrix(train.summary), train.labels, c.gbdt, &history);
    char line[128];
    std::snprintf(line, sizeof line, "train_gbdt: final train mlogloss %.6f", history.train_mlogloss.back());
    ctx.log(line);

    const Matrix p_test = gbdt_probabilities(model, test.summary);
    stage.emit(layout.gbdt_model(), gbdt::encode_forest(model));
    stage.emit_text(layout.sidecar("gbdt"), sidecar_json(c, std::nullopt));
    stage.emit_text(layout.history("gbdt"), gbdt::history_csv(history));

    auto meta = base_metadata(c, all);
    meta["rounds"] = model.rounds();
    stage.emit_text(layout.report("gbdt"), report_json(p_test, test.labels, "gbdt", meta));
    return stage.commit();
}

SplitScores score_split(const Layout& layout, const RunConfig& c, std::string_view split) {
    const bool have_cnn = fs::exists(layout.cnn_model()), have_gbdt = fs::exists(layout.gbdt_model());
    if (!have_cnn && !have_gbdt)
        throw Error(Errc::MissingArtifact, "no trained models in " + layout.models_dir().string() + "; run `afen train` first");
    const auto all = load_clip_index(layout);
    SplitScores out;
    std::optional<nn::CnnModel<float>> cnn;
    if (have_cnn) cnn = nn::load_model(layout.cnn_model());
    const auto data = load_split(layout, all, split, have_cnn ? cnn->arch() : arch_for(c), have_cnn);
    out.labels = data.labels;
    if (have_cnn) out.cnn = cnn_probabilities(*cnn, data.cnn);
    if (have_gbdt) out.gbdt = gbdt_probabilities(gbdt::load_forest(layout.gbdt_model()), data.summary);
    return out;
}

struct Fusion {
    double weight = 0.5;
    Matrix probs;
    bool jensen = true;
};

Fusion fuse(const RunConfig& c, const SplitScores& test, const SplitScores* val) {
    Fusion f;
    f.weight = c.weight_cnn;
    if (c.weight_mode == WeightMode::Calibrated) {
        if (!val || val->labels.empty())
            throw Error(Errc::ConfigError, "ensemble.mode calibrated needs a validation split (split.val_fraction > 0)");
        f.weight = metrics::calibrate_weight(val->cnn, val->gbdt, val->labels);
    }
    f.probs = metrics::soft_vote(test.cnn, test.gbdt, f.weight);
    f.jensen = jensen_on_batches(test.cnn, test.gbdt, test.labels, f.weight);
    return f;
}

json ensemble_metadata(const RunConfig& c, const std::vector<ClipEntry>& all, const Fusion& f) {
    auto meta = base_metadata(c, all);
    meta["weight_cnn"] = f.weight;
    meta["weight_mode"] = c.weight_mode == WeightMode::Calibrated ? "calibrated" : "fixed";
    meta["jensen_bound_holds"] = f.jensen;
    return meta;
}

StageOutcome train_ensemble(Context& ctx) {
    train_cnn(ctx);
    train_gbdt(ctx);
    const Layout layout{ctx.config.output_dir};
    const auto& c = ctx.config;
    auto inputs = verified_outputs(layout, "train_cnn", "train cnn");
    inputs.merge(verified_outputs(layout, "train_gbdt", "train gbdt"));
    Stage stage(ctx, "train_ensemble", config_subset(c, {"ensemble."}), inputs);
    if (stage.current()) return stage.skip();

    const auto val = score_split(layout, c, "val");
    const auto test = score_split(layout, c, "test");
    const Fusion f = fuse(c, test, &val);
    char line[128];
    std::snprintf(line, sizeof line, "train_ensemble: weight_cnn %.2f (%s)", f.weight,
                  c.weight_mode == WeightMode::Calibrated ? "calibrated" : "fixed");
    ctx.log(line);

    stage.emit_text(layout.sidecar("ensemble"), sidecar_json(c, f.weight));
    stage.emit_text(layout.report("ensemble"),
                    report_json(f.probs, test.labels, "ensemble", ensemble_metadata(c, load_clip_index(layout), f)));
    return stage.commit();
}

}  // namespace

StageOutcome prepare(Context& ctx) {
    auto& c = ctx.config;
    c.sync_seeds();
    c.validate();
    if (!fs::is_directory(c.corpus_dir)) throw Error(Errc::ConfigError, "corpus_dir not found: " + c.corpus_dir.string());
    const Layout layout{c.output_dir};
    DirLock lock(c.output_dir);

    const auto diag = c.diagnosis_csv.empty() ? c.corpus_dir / dataset::kDiagnosisFile : c.diagnosis_csv;
    const auto corpus = dataset::scan_corpus(c.corpus_dir, diag);
    std::map<std::string, std::string> inputs;
    inputs["corpus:" + diag.filename().string()] = file_hash(diag);
    for (const auto& r : corpus) inputs["corpus:" + r.meta.path.filename().string()] = file_hash(r.meta.path);

    Stage stage(ctx, "prepare", config_subset(c, {"seed", "split.", "augment."}), inputs);
    if (stage.current()) return stage.skip();

    const auto split = dataset::stratified_split(corpus, c.split);
    ctx.log("prepare: " + std::to_string(corpus.size()) + " recordings, split " + std::to_string(split.train.size()) +
            "/" + std::to_string(split.val.size()) + "/" + std::to_string(split.test.size()) + " (train/val/test)");
    remove_tree(layout.clips_dir());
    stage.emit_text(layout.split_csv(), dataset::manifest_csv(dataset::manifest_rows(corpus, split, c.corpus_dir)));

    const auto counts = variant_counts(c, corpus, split);
    std::vector<ClipEntry> entries;
    std::size_t skipped = 0;
    const std::vector<std::size_t>* parts[] = {&split.train, &split.val, &split.test};
    for (std::size_t p = 0; p < 3; ++p) {
        for (auto i : *parts[p]) {
            const auto& rec = corpus[i];
            const std::string stem = rec.meta.path.stem().string();
            const std::string split_dir(kSplits[p]);
            ClipEntry base;
            base.source = fs::relative(rec.meta.path, c.corpus_dir).generic_string();
            base.patient = rec.meta.patient_id;
            base.label = rec.label;
            base.split = split_dir;

            audio::StandardClip clip = [&] {
                try {
                    return audio::standardize_clip(audio::read_wav(rec.meta.path));
                } catch (const Error& e) {
                    throw e.with_context(rec.meta.path.string());
                }
            }();
            ClipEntry original = base;
            original.clip = split_dir + "/" + stem + ".wav";
            stage.emit(layout.clips_dir() / original.clip, audio::encode_wav(clip.samples(), audio::kStandardRate));
            entries.push_back(original);

            if (p != 0) continue;  // augmentation multiplies the training split only
            for (std::size_t v = 0; v < counts[static_cast<std::size_t>(rec.label)]; ++v) {
                const auto kind = augment::kAllKinds[v % augment::kAllKinds.size()];
                try {
                    auto variant = augment::make_variant(clip, c.augment, stem, kind, v);
                    ClipEntry e = base;
                    e.clip = split_dir + "/" + clip_name(stem, v, kind);
                    e.augment = std::string(augment::kind_name(kind));
                    e.parameter = variant.parameter;
                    stage.emit(layout.clips_dir() / e.clip,
                               audio::encode_wav(variant.clip.samples(), audio::kStandardRate));
                    entries.push_back(std::move(e));
                } catch (const Error& e) {
                    if (e.code() != Errc::SilentClip) throw e.with_context(rec.meta.path.string());
                    ++skipped;
                }
            }
        }
    }
    if (skipped) ctx.log("prepare: skipped " + std::to_string(skipped) + " AWGN variants of silent recordings");
    stage.emit_text(layout.clip_index(), clip_index_csv(entries));
    ctx.log("prepare: cached " + std::to_string(entries.size()) + " clips");
    return stage.commit();
}

StageOutcome extract(Context& ctx) {
    auto& c = ctx.config;
    c.sync_seeds();
    c.validate();
    const Layout layout{c.output_dir};
    DirLock lock(c.output_dir);
    Stage stage(ctx, "extract", config_subset(c, {"features."}), verified_outputs(layout, "prepare", "prepare"));
    if (stage.current()) return stage.skip();

    const auto all = load_clip_index(layout);
    const auto extractor = make_extractor(c);
    remove_tree(layout.features_dir());
    const std::size_t width = features::summary_width(c.summary_minmax);
    std::map<std::string, Matrix> summaries;
    for (auto s : kSplits) summaries[std::string(s)] = Matrix(0, width);
    std::size_t done = 0;
    for (const auto& e : all) {
        const auto path = layout.clips_dir() / e.clip;
        features::FeatureBundle bundle;
        try {
            auto wav = audio::read_wav(path);
            if (wav.sample_rate != audio::kStandardRate)
                throw Error(Errc::ShapeMismatch, "cached clip is not at " + std::to_string(audio::kStandardRate) + " Hz");
            bundle = extractor.extract(audio::StandardClip::adopt(std::move(wav.samples)));
        } catch (const Error& err) {
            throw err.with_context(path.string());
        }
        for (auto k : features::kAllKinds)
            stage.emit(layout.feature_file(e.clip, k),
                       features::encode_cache_matrix(static_cast<std::uint8_t>(k), bundle[k].values));
        auto& m = summaries[e.split];
        m.data.insert(m.data.end(), bundle.gbdt_vector.begin(), bundle.gbdt_vector.end());
        ++m.rows;
        if (++done % 200 == 0) ctx.log("extract: " + std::to_string(done) + "/" + std::to_string(all.size()) + " clips");
    }
    for (const auto& [split, m] : summaries)
        stage.emit(layout.summary(split), features::encode_cache_matrix(features::kSummaryTag, m));
    ctx.log("extract: " + std::to_string(all.size() * features::kAllKinds.size()) + " feature files");
    return stage.commit();
}

StageOutcome train(Context& ctx, Model which) {
    auto& c = ctx.config;
    c.sync_seeds();
    c.validate();
    DirLock lock(c.output_dir);
    switch (which) {
        case Model::Cnn: return train_cnn(ctx);
        case Model::Gbdt: return train_gbdt(ctx);
        case Model::Ensemble: return train_ensemble(ctx);
    }
    return {};
}

SplitScores scores(Context& ctx, std::string_view split) {
    auto& c = ctx.config;
    c.sync_seeds();
    const Layout layout{c.output_dir};
    verified_outputs(layout, "extract", "extract");
    return score_split(layout, c, split);
}

std::vector<metrics::EvalReport> evaluate(Context& ctx) {
    auto& c = ctx.config;
    c.sync_seeds();
    c.validate();
    const Layout layout{c.output_dir};
    DirLock lock(c.output_dir);
    verified_outputs(layout, "extract", "extract");
    const auto all = load_clip_index(layout);
    const auto test = score_split(layout, c, "test");

    std::vector<metrics::EvalReport> reports;
    auto emit = [&](const Matrix& p, std::string_view model, const json& meta) {
        auto r = metrics::evaluate(p, test.labels, dataset::class_names(), std::string(model));
        r.metadata_json = meta.dump();
        write_text_file(layout.report(model), r.to_json() + "\n");
        reports.push_back(std::move(r));
    };
    // Training-time metadata (best epoch, rounds) is carried over from the existing reports.
    auto old_meta = [&](std::string_view model) {
        const auto path = layout.report(model);
        if (!fs::exists(path)) return base_metadata(c, all);
        return json::parse(read_text_file(path)).at("metadata");
    };
    if (test.cnn.cols) emit(test.cnn, "cnn", old_meta("cnn"));
    if (test.gbdt.cols) emit(test.gbdt, "gbdt", old_meta("gbdt"));
    if (test.cnn.cols && test.gbdt.cols && fs::exists(layout.sidecar("ensemble"))) {
        const auto val = score_split(layout, c, "val");
        const Fusion f = fuse(c, test, &val);
        emit(f.probs, "ensemble", ensemble_metadata(c, all, f));
    }
    for (const auto& r : reports) {
        char line[160];
        std::snprintf(line, sizeof line, "evaluate: %-8s accuracy %.4f  log loss %.4f  macro AUC %.4f", r.model.c_str(),
                      r.accuracy, r.log_loss, r.macro_auc);
        ctx.log(line);
    }
    return reports;
}

std::vector<Prediction> predict(const fs::path& models_dir, const fs::path& wav, Model which, std::size_t top_k) {
    auto sidecar = [&](std::string_view model) {
        const auto path = models_dir / (std::string(model) + ".json");
        if (!fs::exists(path))
            throw Error(Errc::MissingArtifact, path.string() + " not found; train the " + std::string(model) + " model first");
        return json::parse(read_text_file(path));
    };
    const auto meta = sidecar(model_name(which));
    RunConfig c;
    c.rolloff_pct = meta.at("features.rolloff_pct").get<double>();
    c.summary_minmax = meta.at("features.summary_minmax").get<bool>();
    const auto names = meta.at("classes").get<std::vector<std::string>>();

    features::FeatureBundle bundle;
    try {
        bundle = make_extractor(c).extract(audio::standardize_clip(audio::read_wav(wav)));
    } catch (const Error& e) {
        throw e.with_context(wav.string());
    }

    auto cnn_p = [&] {
        auto model = nn::load_model(models_dir / "cnn.afm");
        auto data = nn::CnnData::for_arch(model.arch());
        data.add(bundle, 0);
        return cnn_probabilities(model, data);
    };
    auto gbdt_p = [&] {
        const auto model = gbdt::load_forest(models_dir / "gbdt.afg");
        Matrix x(1, bundle.gbdt_vector.size());
        x.data = bundle.gbdt_vector;
        return gbdt_probabilities(model, x);
    };
    Matrix p;
    switch (which) {
        case Model::Cnn: p = cnn_p(); break;
        case Model::Gbdt: p = gbdt_p(); break;
        case Model::Ensemble: p = metrics::soft_vote(cnn_p(), gbdt_p(), meta.at("ensemble.weight_cnn").get<double>()); break;
    }
    if (p.cols != names.size()) throw Error(Errc::ShapeMismatch, "model has " + std::to_string(p.cols) + " classes, bundle names " +
                                                                     std::to_string(names.size()));
    std::vector<Prediction> out;
    for (std::size_t k = 0; k < p.cols; ++k) out.push_back({names[k], p(0, k)});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.probability > b.probability; });
    if (top_k < out.size()) out.resize(top_k);
    return out;
}

std::string predictions_json(const std::vector<Prediction>& p) {
    json j = json::array();
    for (const auto& x : p) j.push_back({{"label", x.label}, {"probability", x.probability}});
    return j.dump(2);
}

}  // namespace afen::pipeline
