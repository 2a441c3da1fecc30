#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "rnas/arch.hpp"

namespace rnas::dispatch {

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Hello {
    std::string worker_id;
    nlohmann::json capabilities = nlohmann::json::object();

    friend bool operator==(const Hello&, const Hello&) = default;
};

struct EvalRequest {
    std::string job_id;
    Architecture arch;
    nlohmann::json eval_config = nlohmann::json::object();

    friend bool operator==(const EvalRequest&, const EvalRequest&) = default;
};

struct EvalResult {
    std::string job_id;
    bool ok = true;
    double accuracy_pct = 0.0;
    double robustness_pct = 0.0;
    std::optional<std::uint64_t> param_count;
    std::string error_message;
    std::optional<double> elapsed_s;

    friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

struct Ping {
    std::string nonce;
    friend bool operator==(const Ping&, const Ping&) = default;
};

struct Pong {
    std::string nonce;
    friend bool operator==(const Pong&, const Pong&) = default;
};

/// A well-formed message of a type this side does not know.
struct Unknown {
    std::string type;
    nlohmann::json raw;
    friend bool operator==(const Unknown&, const Unknown&) = default;
};

using Message = std::variant<Hello, EvalRequest, EvalResult, Ping, Pong, Unknown>;

/// One line of compact JSON, without the trailing newline.
std::string encode(const Message& m);
/// Throws ProtocolError for malformed lines or known types with bad fields.
Message decode(std::string_view line);

std::string_view type_name(const Message& m);

}  // namespace rnas::dispatch
