#include "afen/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "afen/binary_io.hpp"
#include "afen/csv.hpp"
#include "afen/error.hpp"
#include "afen/rng.hpp"

namespace afen::dataset {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 7> kLocationCodes{"Tc", "Al", "Ar", "Pl", "Pr", "Ll", "Lr"};
constexpr std::array<std::string_view, 2> kModeCodes{"sc", "mc"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::optional<int> parse_int(std::string_view s) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        return std::nullopt;
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

std::string_view label_name(Label l) noexcept { return kLabelNames[static_cast<std::size_t>(l)]; }

Label parse_label(std::string_view text) {
    const auto t = trim(text);
    for (std::size_t i = 0; i < kLabelNames.size(); ++i)
        if (iequals(t, kLabelNames[i])) return static_cast<Label>(i);
    throw Error(Errc::UnknownLabel, "unknown diagnosis '" + std::string(t) + "'");
}

std::vector<std::string> class_names() { return {kLabelNames.begin(), kLabelNames.end()}; }

std::string_view location_code(ChestLocation c) noexcept { return kLocationCodes[static_cast<std::size_t>(c)]; }
std::string_view mode_code(AcquisitionMode m) noexcept { return kModeCodes[static_cast<std::size_t>(m)]; }

RecordingMeta parse_icbhi_filename(const fs::path& name) {
    const std::string stem = name.stem().string();
    auto fail = [&](const std::string& why) -> RecordingMeta {
        throw Error(Errc::MalformedName, "'" + name.filename().string() + "': " + why);
    };
    std::vector<std::string> fields;
    std::stringstream ss(stem);
    for (std::string f; std::getline(ss, f, '_');) fields.push_back(f);
    if (!stem.empty() && stem.back() == '_') fields.emplace_back();
    if (fields.size() != 5) return fail("expected 5 underscore-separated fields, found " + std::to_string(fields.size()));

    RecordingMeta m;
    m.path = name;
    const auto id = parse_int(fields[0]);
    if (!id) return fail("patient id '" + fields[0] + "' is not a number");
    m.patient_id = *id;
    if (fields[1].empty()) return fail("empty recording index");
    m.recording_index = fields[1];
    const auto loc = std::find(kLocationCodes.begin(), kLocationCodes.end(), fields[2]);
    if (loc == kLocationCodes.end()) return fail("unknown chest location '" + fields[2] + "'");
    m.location = static_cast<ChestLocation>(loc - kLocationCodes.begin());
    const auto mode = std::find(kModeCodes.begin(), kModeCodes.end(), fields[3]);
    if (mode == kModeCodes.end()) return fail("unknown acquisition mode '" + fields[3] + "'");
    m.mode = static_cast<AcquisitionMode>(mode - kModeCodes.begin());
    if (fields[4].empty()) return fail("empty equipment field");
    m.equipment = fields[4];
    if (format_icbhi_stem(m) != stem) return fail("patient id is not in canonical form");
    return m;
}

std::string format_icbhi_stem(const RecordingMeta& m) {
    return std::to_string(m.patient_id) + "_" + m.recording_index + "_" + std::string(location_code(m.location)) +
           "_" + std::string(mode_code(m.mode)) + "_" + m.equipment;
}

DiagnosisTable parse_diagnosis_table(std::string_view text) {
    DiagnosisTable table;
    bool first = true;
    std::size_t line_no = 0;
    for (auto raw : csv::lines(text)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto sep = line.find_first_of(",\t ");
        const auto id_text = trim(line.substr(0, sep));
        const auto label_text = sep == std::string_view::npos ? std::string_view{} : trim(line.substr(sep + 1));
        const auto id = parse_int(id_text);
        if (!id) {
            if (first) {
                first = false;
                continue;  // header
            }
            throw Error(Errc::MalformedName, "line " + std::to_string(line_no) + ": bad patient id '" +
                                                 std::string(id_text) + "'");
        }
        first = false;
        const Label label = parse_label(label_text);
        const auto [it, inserted] = table.emplace(*id, label);
        if (!inserted && it->second != label)
            throw Error(Errc::DuplicatePatient, "patient " + std::to_string(*id) + " listed as both " +
                                                    std::string(label_name(it->second)) + " and " +
                                                    std::string(label_name(label)));
    }
    return table;
}

DiagnosisTable load_diagnosis_table(const fs::path& csv) {
    if (!fs::exists(csv))
        throw Error(Errc::MissingDiagnosis, "diagnosis table not found; expected " + csv.string());
    try {
        return parse_diagnosis_table(read_text_file(csv));
    } catch (const Error& e) {
        throw e.with_context(csv.string());
    }
}

std::vector<Recording> scan_corpus(const fs::path& dir, std::optional<fs::path> diagnosis) {
    if (!fs::is_directory(dir)) throw Error(Errc::EmptyCorpus, "corpus directory not found: " + dir.string());
    const fs::path diag_path = diagnosis ? *diagnosis : dir / kDiagnosisFile;
    const auto table = load_diagnosis_table(diag_path);

    std::vector<fs::path> wavs;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".wav") wavs.push_back(e.path());
    }
    if (wavs.empty()) throw Error(Errc::EmptyCorpus, "no .wav files in " + dir.string());
    std::sort(wavs.begin(), wavs.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    std::vector<Recording> out;
    for (const auto& p : wavs) {
        Recording r;
        r.meta = parse_icbhi_filename(p);
        const auto it = table.find(r.meta.patient_id);
        if (it == table.end())
            throw Error(Errc::MissingDiagnosis, "patient " + std::to_string(r.meta.patient_id) + " (" +
                                                    p.filename().string() + ") has no row in " + diag_path.string());
        r.label = it->second;
        out.push_back(std::move(r));
    }
    return out;
}

AnnotationInventory scan_annotations(const fs::path& dir) {
    AnnotationInventory inv;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            parse_icbhi_filename(f);
        } catch (const Error&) {
            continue;  // not a per-recording annotation file
        }
        ++inv.files;
        const auto text = read_text_file(f);
        for (auto line : csv::lines(text)) {
            std::istringstream ls{std::string(line)};
            double start = 0, end = 0;
            int crackle = 0, wheeze = 0;
            if (!(ls >> start >> end >> crackle >> wheeze)) continue;
            ++inv.cycles;
            inv.crackles += crackle != 0;
            inv.wheezes += wheeze != 0;
        }
    }
    return inv;
}

DatasetSplit stratified_split(const std::vector<Recording>& corpus, const SplitOptions& o) {
    if (corpus.empty()) throw Error(Errc::EmptyCorpus, "nothing to split");
    if (!(o.test_fraction >= 0.0 && o.test_fraction < 1.0) || !(o.val_fraction >= 0.0 && o.val_fraction < 1.0))
        throw Error(Errc::ConfigError, "split fractions must be in [0, 1)");

    // Units: single recordings, or all recordings of one patient.
    std::array<std::vector<std::vector<std::size_t>>, kClassCount> units;
    if (o.by == SplitBy::Recording) {
        for (std::size_t i = 0; i < corpus.size(); ++i) units[static_cast<std::size_t>(corpus[i].label)].push_back({i});
    } else {
        std::map<int, std::vector<std::size_t>> by_patient;
        for (std::size_t i = 0; i < corpus.size(); ++i) by_patient[corpus[i].meta.patient_id].push_back(i);
        for (auto& [patient, idx] : by_patient)
            units[static_cast<std::size_t>(corpus[idx.front()].label)].push_back(idx);
    }

    DatasetSplit s;
    for (std::size_t k = 0; k < kClassCount; ++k) {
        auto& u = units[k];
        if (u.empty()) continue;
        Rng rng = Rng::substream(o.seed, 0x73706c6974ULL + k);
        rng.shuffle(u.begin(), u.end());
        const std::size_t n = u.size();
        const std::size_t n_test = n < 2 ? 0 : std::min(n - 1, static_cast<std::size_t>(std::lround(o.test_fraction * n)));
        const std::size_t rest = n - n_test;
        const std::size_t n_val = rest < 2 ? 0 : std::min(rest - 1, static_cast<std::size_t>(std::lround(o.val_fraction * rest)));
        for (std::size_t i = 0; i < n; ++i) {
            auto& dst = i < n_test ? s.test : (i < n_test + n_val ? s.val : s.train);
            dst.insert(dst.end(), u[i].begin(), u[i].end());
        }
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::string_view split_name(int which) noexcept {
    switch (which) {
        case 0: return "train";
        case 1: return "val";
        default: return "test";
    }
}

std::vector<ManifestRow> manifest_rows(const std::vector<Recording>& corpus, const DatasetSplit& split,
                                       const fs::path& corpus_dir) {
    std::vector<ManifestRow> rows;
    const std::vector<std::size_t>* parts[] = {&split.train, &split.val, &split.test};
    for (int p = 0; p < 3; ++p)
        for (auto i : *parts[p]) {
            const auto& r = corpus.at(i);
            rows.push_back({fs::relative(r.meta.path, corpus_dir).generic_string(), r.meta.patient_id, r.label,
                            std::string(split_name(p))});
        }
    std::sort(rows.begin(), rows.end(), [](const ManifestRow& a, const ManifestRow& b) { return a.path < b.path; });
    return rows;
}

std::string manifest_csv(const std::vector<ManifestRow>& rows) {
    std::string out = "path,patient,label,split\n";
    for (const auto& r : rows)
        out += csv::field(r.path) + "," + std::to_string(r.patient) + "," + std::string(label_name(r.label)) + "," +
               r.split + "\n";
    return out;
}

std::vector<ManifestRow> parse_manifest_csv(std::string_view text) {
    const auto lines = csv::lines(text);
    if (lines.empty() || trim(lines.front()) != "path,patient,label,split")
        throw Error(Errc::CacheFormatError, "split manifest header must be 'path,patient,label,split'");
    std::vector<ManifestRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = csv::split_record(lines[i]);
        const auto id = f.size() == 4 ? parse_int(f[1]) : std::nullopt;
        if (!id || (f[3] != "train" && f[3] != "val" && f[3] != "test"))
            throw Error(Errc::CacheFormatError, "split manifest line " + std::to_string(i + 1) + " is malformed");
        rows.push_back({f[0], *id, parse_label(f[2]), f[3]});
    }
    return rows;
}

}  // namespace afen::dataset
