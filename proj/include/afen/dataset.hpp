#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace afen::dataset {

enum class ChestLocation : std::uint8_t { Tc, Al, Ar, Pl, Pr, Ll, Lr };
enum class AcquisitionMode : std::uint8_t { Sc, Mc };

/// Diagnosis classes in label-index order.
enum class Label : std::uint8_t { Asthma, Bronchiectasis, Bronchiolitis, Copd, Healthy, Lrti, Pneumonia, Urti };
inline constexpr std::size_t kClassCount = 8;
inline constexpr std::array<std::string_view, kClassCount> kLabelNames{
    "Asthma", "Bronchiectasis", "Bronchiolitis", "COPD", "Healthy", "LRTI", "Pneumonia", "URTI"};

std::string_view label_name(Label l) noexcept;
/// Case-insensitive; surrounding whitespace ignored. Throws UnknownLabel.
Label parse_label(std::string_view text);
std::vector<std::string> class_names();

std::string_view location_code(ChestLocation c) noexcept;
std::string_view mode_code(AcquisitionMode m) noexcept;

/// Fields of "patient_recording_location_mode_equipment.wav".
struct RecordingMeta {
    int patient_id = 0;
    std::string recording_index;
    ChestLocation location = ChestLocation::Tc;
    AcquisitionMode mode = AcquisitionMode::Sc;
    std::string equipment;
    std::filesystem::path path;

    friend bool operator==(const RecordingMeta&, const RecordingMeta&) = default;
};

/// Accepts a bare name or a path; the extension is ignored. Throws MalformedName.
RecordingMeta parse_icbhi_filename(const std::filesystem::path& name);
/// The filename stem rebuilt from the parsed fields.
std::string format_icbhi_stem(const RecordingMeta& meta);

using DiagnosisTable = std::map<int, Label>;

/// Two columns (patient id, label) separated by a comma, tab or spaces. A
/// non-numeric first line is taken as a header. Throws UnknownLabel,
/// DuplicatePatient (conflicting labels) or MalformedName (bad id).
DiagnosisTable parse_diagnosis_table(std::string_view text);
DiagnosisTable load_diagnosis_table(const std::filesystem::path& csv);

struct Recording {
    RecordingMeta meta;
    Label label = Label::Healthy;
};

inline constexpr std::string_view kDiagnosisFile = "patient_diagnosis.csv";

/// Every *.wav directly under `dir`, sorted by filename, labelled from
/// `diagnosis` (default dir/patient_diagnosis.csv). Throws MissingDiagnosis
/// naming the expected path, EmptyCorpus, MalformedName.
std::vector<Recording> scan_corpus(const std::filesystem::path& dir,
                                   std::optional<std::filesystem::path> diagnosis = std::nullopt);

struct AnnotationInventory {
    std::size_t files = 0;
    std::size_t cycles = 0;
    std::size_t crackles = 0;
    std::size_t wheezes = 0;
};

/// Counts the per-cycle "start end crackle wheeze" annotation files next to
/// the recordings. Inventory only; never used for training.
AnnotationInventory scan_annotations(const std::filesystem::path& dir);

enum class SplitBy { Recording, Patient };

struct SplitOptions {
    double test_fraction = 0.2;
    double val_fraction = 0.1;  // of the training part
    std::uint64_t seed = 0;
    SplitBy by = SplitBy::Recording;
};

/// Indices into the corpus vector.
struct DatasetSplit {
    std::vector<std::size_t> train, val, test;
};

/// Per class: shuffle with a class-keyed substream of the seed, put
/// round(test_fraction * n) in test (none when the class has a single unit),
/// then round(val_fraction * rest) of the remainder in validation, keeping at
/// least one unit in train. With SplitBy::Patient the units are patients.
DatasetSplit stratified_split(const std::vector<Recording>& corpus, const SplitOptions& options);

std::string_view split_name(int which) noexcept;  // 0 train, 1 val, 2 test

struct ManifestRow {
    std::string path;  // relative to the corpus directory
    int patient = 0;
    Label label = Label::Healthy;
    std::string split;  // train | val | test

    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

std::vector<ManifestRow> manifest_rows(const std::vector<Recording>& corpus, const DatasetSplit& split,
                                       const std::filesystem::path& corpus_dir);
std::string manifest_csv(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest_csv(std::string_view text);

}  // namespace afen::dataset
