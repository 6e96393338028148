#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace afen {

enum class Errc {
    // audio_io
    MalformedRiff,
    UnsupportedEncoding,
    TruncatedData,
    EmptyClip,
    IoFailure,
    // augment
    SilentClip,
    InvalidBand,
    InvalidArgument,
    // nn / gbdt / metrics
    ShapeMismatch,
    LabelOutOfRange,
    EmptyDataset,
    DegenerateData,
    WeightOutOfRange,
    DegenerateLabels,
    NumericFailure,
    // dataset
    MalformedName,
    UnknownLabel,
    DuplicatePatient,
    EmptyCorpus,
    MissingDiagnosis,
    // persistence / cli
    CacheFormatError,
    ConfigError,
    MissingArtifact,
    Locked,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library. The code identifies the failure class
/// from the module contracts; the message carries file/field context.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), detail_(what) {}

    Errc code() const noexcept { return code_; }
    /// Message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }
    /// Same code, message prefixed with `context` (usually a path).
    Error with_context(const std::string& context) const { return Error(code_, context + ": " + detail_); }

private:
    Errc code_;
    std::string detail_;
};

}  // namespace afen
