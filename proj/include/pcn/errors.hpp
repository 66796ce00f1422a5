#pragma once

#include <stdexcept>
#include <string>

namespace pcn {

enum class Errc {
    // naming
    UnknownPrincipal,
    MalformedName,
    ComponentTooLong,
    // identity / interlock
    InvalidState,
    AnswerOutOfRange,
    CommitmentOutOfRange,
    NotPrefixOwner,
    // access
    EmptyAttributeSet,
    MissingMasterKey,
    MalformedPolicy,
    UnknownAttribute,
    PolicyNotSatisfied,
    EpochMismatch,
    IntegrityFailure,
    MissingSignature,
    // router / sync
    NotAuthorized,
    WriteNotVerified,
    FetchFailed,
    BaseMismatch,
    SignatureInvalid,
    // replica management
    NotOwner,
    NotDeviceName,
    BadSignature,
    // simulator
    ScenarioParseError,
    TimeLimitExceeded,
    UnknownNode,
    NoNeighborsReachable,
    // serialization
    MalformedEncoding,
};

inline const char* errcName(Errc c)
{
    switch (c) {
    case Errc::UnknownPrincipal: return "UnknownPrincipal";
    case Errc::MalformedName: return "MalformedName";
    case Errc::ComponentTooLong: return "ComponentTooLong";
    case Errc::InvalidState: return "InvalidState";
    case Errc::AnswerOutOfRange: return "AnswerOutOfRange";
    case Errc::CommitmentOutOfRange: return "CommitmentOutOfRange";
    case Errc::NotPrefixOwner: return "NotPrefixOwner";
    case Errc::EmptyAttributeSet: return "EmptyAttributeSet";
    case Errc::MissingMasterKey: return "MissingMasterKey";
    case Errc::MalformedPolicy: return "MalformedPolicy";
    case Errc::UnknownAttribute: return "UnknownAttribute";
    case Errc::PolicyNotSatisfied: return "PolicyNotSatisfied";
    case Errc::EpochMismatch: return "EpochMismatch";
    case Errc::IntegrityFailure: return "IntegrityFailure";
    case Errc::MissingSignature: return "MissingSignature";
    case Errc::NotAuthorized: return "NotAuthorized";
    case Errc::WriteNotVerified: return "WriteNotVerified";
    case Errc::FetchFailed: return "FetchFailed";
    case Errc::BaseMismatch: return "BaseMismatch";
    case Errc::SignatureInvalid: return "SignatureInvalid";
    case Errc::NotOwner: return "NotOwner";
    case Errc::NotDeviceName: return "NotDeviceName";
    case Errc::BadSignature: return "BadSignature";
    case Errc::ScenarioParseError: return "ScenarioParseError";
    case Errc::TimeLimitExceeded: return "TimeLimitExceeded";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::NoNeighborsReachable: return "NoNeighborsReachable";
    case Errc::MalformedEncoding: return "MalformedEncoding";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errcName(code)) + ": " + what), code_(code)
    {
    }
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what)
{
    throw Error(code, what);
}

} // namespace pcn
