#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace factrec {

enum class ErrorCode {
    // record validation
    MissingField,
    EmptyQuery,
    DuplicatePromptId,
    InvalidRecord,
    // gateway
    NetworkError,
    RateLimited,
    BackendRefused,
    DimensionMismatch,
    PreconditionViolated,
    // retrieval
    SourceUnavailable,
    EmptyCorpus,
    MalformedCorpusRecord,
    // reference building / judging
    UnparseableReply,
    JudgeJsonInvalid,
    EmptyReferenceSet,
    EmptyResponse,
    // metrics
    MisalignedInputs,
    AllUndefined,
    // runner
    FatalConfigError,
    CorruptArtifact,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace factrec
