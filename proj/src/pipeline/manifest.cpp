#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <json.hpp>

#include "afen/binary_io.hpp"
#include "afen/csv.hpp"
#include "afen/feature_cache.hpp"
#include "afen/pipeline.hpp"

#ifndef AFEN_BUILD_ID
#define AFEN_BUILD_ID "unknown"
#endif

namespace afen::pipeline {

using json = nlohmann::ordered_json;

std::string_view build_id() noexcept { return AFEN_BUILD_ID; }

fs::path Layout::summary(std::string_view split) const {
    return features_dir() / (std::string(split) + ".summary.afc");
}

fs::path Layout::feature_file(const std::string& clip, features::FeatureKind kind) const {
    // clip is "split/name.wav"; features mirror that tree.
    fs::path p = features_dir() / clip;
    p.replace_extension(std::string(features::kind_name(kind)) + ".afc");
    return p;
}

fs::path Layout::sidecar(std::string_view model) const { return models_dir() / (std::string(model) + ".json"); }

fs::path Layout::history(std::string_view model) const {
    return root / "history" / (std::string(model) + "_history.csv");
}

fs::path Layout::report(std::string_view model) const { return root / "reports" / (std::string(model) + ".json"); }

DirLock::DirLock(const fs::path& dir) : path_(Layout{dir}.lock()) {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
        if (fd >= 0) {
            const std::string pid = std::to_string(::getpid()) + "\n";
            [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            return;
        }
        if (errno != EEXIST) throw Error(Errc::IoFailure, "cannot create lock " + path_.string());
        long owner = 0;
        try {
            const auto text = read_text_file(path_);
            std::from_chars(text.data(), text.data() + text.size(), owner);
        } catch (const Error&) {
        }
        if (owner > 0 && ::kill(static_cast<pid_t>(owner), 0) == 0)
            throw Error(Errc::Locked, dir.string() + " is in use by process " + std::to_string(owner));
        if (owner > 0 && errno == EPERM)
            throw Error(Errc::Locked, dir.string() + " is in use by process " + std::to_string(owner));
        std::error_code ec;
        fs::remove(path_, ec);  // owner gone: stale lock
    }
    throw Error(Errc::Locked, "could not take " + path_.string() + "; remove it if no run is active");
}

DirLock::~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

std::string RunManifest::to_json() const {
    json j;
    j["build"] = build_id;
    j["config"] = json::parse(config_json);
    json stages_json = json::object();
    for (const auto& [name, s] : stages) {
        json st;
        st["key"] = s.key;
        st["seconds"] = s.seconds;
        st["inputs"] = s.inputs;
        st["outputs"] = s.outputs;
        stages_json[name] = st;
    }
    j["stages"] = stages_json;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::load(const fs::path& path) {
    RunManifest m;
    if (!fs::exists(path)) return m;
    try {
        const auto j = json::parse(read_text_file(path));
        m.build_id = j.at("build").get<std::string>();
        m.config_json = j.at("config").dump();
        for (const auto& [name, st] : j.at("stages").items()) {
            StageRecord r;
            r.key = st.at("key").get<std::string>();
            r.seconds = st.at("seconds").get<double>();
            r.inputs = st.at("inputs").get<std::map<std::string, std::string>>();
            r.outputs = st.at("outputs").get<std::map<std::string, std::string>>();
            m.stages[name] = std::move(r);
        }
    } catch (const json::exception& e) {
        throw Error(Errc::CacheFormatError, path.string() + ": unreadable run manifest (" + e.what() + ")");
    }
    return m;
}

void RunManifest::save(const fs::path& path) const { write_text_file(path, to_json()); }

std::string clip_index_csv(const std::vector<ClipEntry>& rows) {
    std::string out = "clip,source,patient,label,split,augment,parameter\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.parameter);
        out += csv::field(r.clip) + "," + csv::field(r.source) + "," + std::to_string(r.patient) + "," +
               std::string(dataset::label_name(r.label)) + "," + r.split + "," + r.augment + "," + buf + "\n";
    }
    return out;
}

std::vector<ClipEntry> parse_clip_index(std::string_view text) {
    const auto lines = csv::lines(text);
    if (lines.empty() || lines.front() != "clip,source,patient,label,split,augment,parameter")
        throw Error(Errc::CacheFormatError, "clip index header mismatch");
    std::vector<ClipEntry> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = csv::split_record(lines[i]);
        const auto bad = [&] {
            return Error(Errc::CacheFormatError, "clip index line " + std::to_string(i + 1) + " is malformed");
        };
        if (f.size() != 7 || (f[4] != "train" && f[4] != "val" && f[4] != "test")) throw bad();
        ClipEntry e;
        e.clip = f[0];
        e.source = f[1];
        try {
            e.patient = std::stoi(f[2]);
            e.parameter = std::stod(f[6]);
        } catch (const std::exception&) {
            throw bad();
        }
        e.label = dataset::parse_label(f[3]);
        e.split = f[4];
        e.augment = f[5];
        rows.push_back(std::move(e));
    }
    return rows;
}

std::string_view model_name(Model m) noexcept {
    switch (m) {
        case Model::Cnn: return "cnn";
        case Model::Gbdt: return "gbdt";
        case Model::Ensemble: return "ensemble";
    }
    return "?";
}

Model parse_model(std::string_view name) {
    for (auto m : {Model::Cnn, Model::Gbdt, Model::Ensemble})
        if (model_name(m) == name) return m;
    throw Error(Errc::ConfigError, "model must be cnn, gbdt or ensemble, not '" + std::string(name) + "'");
}

int exit_code(Errc code) noexcept {
    switch (code) {
        case Errc::ConfigError:
        case Errc::InvalidArgument:
        case Errc::InvalidBand:
        case Errc::WeightOutOfRange:
            return 2;
        case Errc::NumericFailure:
            return 4;
        default:
            return 3;
    }
}

}  // namespace afen::pipeline
