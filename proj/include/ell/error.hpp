#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ell {

enum class ErrorCode {
    MalformedRow,
    SchemaMismatch,
    EmptyDataset,
    UnknownCategory,
    HttpError,
    RateLimited,
    CacheCorrupt,
    InvalidConfig,
    InvariantViolation,
    EmptyGraph,
    EmptyInput,
    SingletonGroup,
    ZeroSupply,
    ZeroMarketCap,
    ZeroLiquidity,
    MissingSnapshot,
    InvalidSpec,
    IncompleteReport,
    MismatchedAxes,
    Io,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::UnknownCategory: return "UnknownCategory";
        case ErrorCode::HttpError: return "HttpError";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::CacheCorrupt: return "CacheCorrupt";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::SingletonGroup: return "SingletonGroup";
        case ErrorCode::ZeroSupply: return "ZeroSupply";
        case ErrorCode::ZeroMarketCap: return "ZeroMarketCap";
        case ErrorCode::ZeroLiquidity: return "ZeroLiquidity";
        case ErrorCode::MissingSnapshot: return "MissingSnapshot";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::IncompleteReport: return "IncompleteReport";
        case ErrorCode::MismatchedAxes: return "MismatchedAxes";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message) : Error(code, message, std::string(to_string(code)) + ": " + message) {}

    ErrorCode code() const noexcept { return code_; }
    // Message without the code prefix.
    const std::string& message() const noexcept { return message_; }

protected:
    Error(ErrorCode code, const std::string& message, const std::string& what)
        : std::runtime_error(what), code_(code), message_(message) {}

private:
    ErrorCode code_;
    std::string message_;
};

// Row index is zero-based over data rows (header excluded).
class MalformedRow : public Error {
public:
    MalformedRow(std::size_t row, const std::string& reason)
        : Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + ": " + reason), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class HttpError : public Error {
public:
    HttpError(int status, const std::string& body_excerpt)
        : Error(ErrorCode::HttpError, "status " + std::to_string(status) + ": " + body_excerpt),
          status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

}  // namespace ell
