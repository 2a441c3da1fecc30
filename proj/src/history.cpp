#include "rnas/history.hpp"

namespace rnas {

std::string history_line(const ScoredIndividual& ind) { return to_json(ind).dump() + "\n"; }

std::vector<ScoredIndividual> read_history(std::string_view text) {
    std::vector<ScoredIndividual> out;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    while (offset < text.size()) {
        const std::size_t eol = std::min(text.find('\n', offset), text.size());
        const std::string_view line = text.substr(offset, eol - offset);
        ++line_no;
        if (!line.empty()) {
            try {
                out.push_back(individual_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError("history line " + std::to_string(line_no) + ": " + e.what(), offset + e.byte - 1,
                                 "");
            } catch (const ParseError& e) {
                throw ParseError("history line " + std::to_string(line_no) + ": " + e.what(), offset, e.path);
            }
        }
        offset = eol + 1;
    }
    return out;
}

}  // namespace rnas
