#include "siot/api.hpp"

namespace siot {

const char* to_string(CommandOutcome o) {
    switch (o) {
        case CommandOutcome::applied: return "applied";
        case CommandOutcome::discarded: return "discarded";
        case CommandOutcome::failed: return "failed";
    }
    return "?";
}

CommandOutcome parse_command_outcome(std::string_view s) {
    if (s == "applied") return CommandOutcome::applied;
    if (s == "discarded") return CommandOutcome::discarded;
    if (s == "failed") return CommandOutcome::failed;
    throw ParseError("unknown command outcome: " + std::string(s));
}

}  // namespace siot
