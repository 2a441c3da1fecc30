#include "rnas/dispatch/protocol.hpp"

namespace rnas::dispatch {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <typename T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) throw ProtocolError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ProtocolError(std::string("field '") + key + "' has the wrong type");
    }
}

ordered_json ordered(const json& j) { return ordered_json::parse(j.dump()); }

double number(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
    return j.at(key).get<double>();
}

struct Encoder {
    ordered_json operator()(const Hello& m) const {
        return {{"type", "hello"}, {"worker_id", m.worker_id}, {"capabilities", ordered(m.capabilities)}};
    }
    ordered_json operator()(const EvalRequest& m) const {
        return {{"type", "eval"}, {"job_id", m.job_id}, {"arch", to_json(m.arch)}, {"eval_config", ordered(m.eval_config)}};
    }
    ordered_json operator()(const EvalResult& m) const {
        ordered_json j{{"type", "result"}, {"job_id", m.job_id}};
        if (m.ok) {
            j["status"] = "ok";
            j["accuracy_pct"] = m.accuracy_pct;
            j["robustness_pct"] = m.robustness_pct;
            if (m.param_count) j["param_count"] = *m.param_count;
        } else {
            j["status"] = "error";
            j["error_message"] = m.error_message;
        }
        if (m.elapsed_s) j["elapsed_s"] = *m.elapsed_s;
        return j;
    }
    ordered_json operator()(const Ping& m) const { return {{"type", "ping"}, {"nonce", m.nonce}}; }
    ordered_json operator()(const Pong& m) const { return {{"type", "pong"}, {"nonce", m.nonce}}; }
    ordered_json operator()(const Unknown& m) const { return ordered(m.raw); }
};

}  // namespace

std::string encode(const Message& m) { return std::visit(Encoder{}, m).dump(); }

Message decode(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ProtocolError("malformed message at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!j.is_object()) throw ProtocolError("message is not an object");
    const auto type = field<std::string>(j, "type");

    if (type == "hello") {
        Hello h{field<std::string>(j, "worker_id")};
        if (j.contains("capabilities")) h.capabilities = j.at("capabilities");
        return h;
    }
    if (type == "eval") {
        EvalRequest r;
        r.job_id = field<std::string>(j, "job_id");
        if (!j.contains("arch")) throw ProtocolError("missing field 'arch'");
        try {
            r.arch = architecture_from_json(j.at("arch"));
        } catch (const ParseError& e) {
            throw ProtocolError(std::string("invalid architecture: ") + e.what());
        }
        if (j.contains("eval_config")) r.eval_config = j.at("eval_config");
        return r;
    }
    if (type == "result") {
        EvalResult r;
        r.job_id = field<std::string>(j, "job_id");
        const auto status = field<std::string>(j, "status");
        if (status == "ok") {
            r.accuracy_pct = number(j, "accuracy_pct");
            r.robustness_pct = number(j, "robustness_pct");
            if (j.contains("param_count") && !j.at("param_count").is_null()) {
                if (!j.at("param_count").is_number_unsigned()) throw ProtocolError("field 'param_count' must be a non-negative integer");
                r.param_count = j.at("param_count").get<std::uint64_t>();
            }
        } else if (status == "error") {
            r.ok = false;
            r.error_message = field<std::string>(j, "error_message");
        } else {
            throw ProtocolError("unknown result status '" + status + "'");
        }
        if (j.contains("elapsed_s")) r.elapsed_s = number(j, "elapsed_s");
        return r;
    }
    if (type == "ping") return Ping{field<std::string>(j, "nonce")};
    if (type == "pong") return Pong{field<std::string>(j, "nonce")};
    return Unknown{type, j};
}

std::string_view type_name(const Message& m) {
    struct Namer {
        std::string_view operator()(const Hello&) const { return "hello"; }
        std::string_view operator()(const EvalRequest&) const { return "eval"; }
        std::string_view operator()(const EvalResult&) const { return "result"; }
        std::string_view operator()(const Ping&) const { return "ping"; }
        std::string_view operator()(const Pong&) const { return "pong"; }
        std::string_view operator()(const Unknown& u) const { return u.type; }
    };
    return std::visit(Namer{}, m);
}

}  // namespace rnas::dispatch
