#include "afen/error.hpp"

namespace afen {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::MalformedRiff: return "MalformedRiff";
        case Errc::UnsupportedEncoding: return "UnsupportedEncoding";
        case Errc::TruncatedData: return "TruncatedData";
        case Errc::EmptyClip: return "EmptyClip";
        case Errc::IoFailure: return "IoFailure";
        case Errc::SilentClip: return "SilentClip";
        case Errc::InvalidBand: return "InvalidBand";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::LabelOutOfRange: return "LabelOutOfRange";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::DegenerateData: return "DegenerateData";
        case Errc::WeightOutOfRange: return "WeightOutOfRange";
        case Errc::DegenerateLabels: return "DegenerateLabels";
        case Errc::NumericFailure: return "NumericFailure";
        case Errc::MalformedName: return "MalformedName";
        case Errc::UnknownLabel: return "UnknownLabel";
        case Errc::DuplicatePatient: return "DuplicatePatient";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::MissingDiagnosis: return "MissingDiagnosis";
        case Errc::CacheFormatError: return "CacheFormatError";
        case Errc::ConfigError: return "ConfigError";
        case Errc::MissingArtifact: return "MissingArtifact";
        case Errc::Locked: return "Locked";
    }
    return "Unknown";
}

}  // namespace afen
