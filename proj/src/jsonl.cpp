#include "chainqa/jsonl.hpp"

#include "chainqa/error.hpp"

#include <fstream>
#include <string>

namespace chainqa {

void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::string_view, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw CorpusError(path.string() + ": cannot open");
    }
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        try {
            fn(line, line_number);
        } catch (const std::exception& e) {
            throw CorpusError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
}

} // namespace chainqa
