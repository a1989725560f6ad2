#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string_view>

namespace chainqa {

/// Calls `fn(line, line_number)` for every non-blank line of a file, 1-based.
/// Exceptions thrown by `fn` are rethrown as CorpusError prefixed with
/// "<path>:<line>: ".
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::string_view, std::size_t)>& fn);

} // namespace chainqa
