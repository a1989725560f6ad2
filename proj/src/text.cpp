#include "chainqa/text.hpp"

#include "chainqa/error.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace chainqa {

namespace detail {
extern const std::string_view kBuiltinStopwords;
}

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_word_char(char c) {
    auto u = static_cast<unsigned char>(c);
    return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80;
}

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

char lower_char(char c) { return is_upper(c) ? static_cast<char>(c - 'A' + 'a') : c; }

constexpr std::array<std::string_view, 8> kMarkers = {
    "[SEP]", "[Question]", "[Table]", "[Passage]", "[TAB]", "[TITLE]", "[DATA]", "[PASSAGES]"};

std::size_t marker_length_at(std::string_view text, std::size_t pos) {
    for (auto marker : kMarkers) {
        if (text.substr(pos, marker.size()) == marker) {
            return marker.size();
        }
    }
    return 0;
}

struct RawToken {
    std::string_view surface;
    std::size_t begin;
    std::size_t end;
};

std::vector<RawToken> raw_tokens(std::string_view text) {
    std::vector<RawToken> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (text[i] == '[') {
            if (auto len = marker_length_at(text, i); len > 0) {
                i += len;
                continue;
            }
        }
        if (!is_word_char(text[i])) {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < n) {
            if (is_word_char(text[i])) {
                ++i;
            } else if ((text[i] == '-' || text[i] == '.') && i + 1 < n && is_word_char(text[i + 1])) {
                ++i;
            } else {
                break;
            }
        }
        out.push_back({text.substr(start, i - start), start, i});
    }
    return out;
}

bool only_spaces(std::string_view text) {
    return std::all_of(text.begin(), text.end(), is_space);
}

bool is_plain_number(std::string_view s) {
    if (s.empty() || !is_digit(s.front()) || !is_digit(s.back())) {
        return false;
    }
    bool seen_dot = false;
    for (char c : s) {
        if (c == '.') {
            if (seen_dot) {
                return false;
            }
            seen_dot = true;
        } else if (!is_digit(c)) {
            return false;
        }
    }
    return true;
}

std::size_t common_count(std::vector<std::string> a, std::vector<std::string> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t common = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++common;
            ++ia;
            ++ib;
        }
    }
    return common;
}

bool contains_subsequence(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) {
        return false;
    }
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

StopwordList& active_stopwords() {
    static StopwordList list = StopwordList::builtin();
    return list;
}

} // namespace

std::map<std::string, std::size_t> TokenSet::counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& t : tokens) {
        ++out[t];
    }
    return out;
}

std::vector<std::string> KeywordSet::terms() const {
    std::vector<std::string> out;
    out.reserve(keywords.size() + entities.size());
    std::set_union(keywords.begin(), keywords.end(), entities.begin(), entities.end(),
                   std::back_inserter(out));
    return out;
}

const StopwordList& StopwordList::builtin() {
    static const StopwordList list = parse(detail::kBuiltinStopwords);
    return list;
}

StopwordList StopwordList::parse(std::string_view text) {
    std::set<std::string, std::less<>> words;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        auto word = to_lower(trim(text.substr(pos, eol - pos)));
        if (!word.empty() && word.front() != '#') {
            words.insert(std::move(word));
        }
        pos = eol + 1;
    }
    return StopwordList(std::move(words));
}

StopwordList StopwordList::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open stopword list " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

const StopwordList& stopwords() { return active_stopwords(); }

void install_stopwords(StopwordList list) { active_stopwords() = std::move(list); }

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), lower_char);
    return out;
}

std::string trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) {
        ++b;
    }
    while (e > b && is_space(text[e - 1])) {
        --e;
    }
    return std::string(text.substr(b, e - b));
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) {
                out.push_back(' ');
                pending_space = false;
            }
            out.push_back(c);
        }
    }
    return out;
}

TokenSet tokenize(std::string_view text) {
    TokenSet out;
    for (const auto& raw : raw_tokens(text)) {
        out.tokens.push_back(to_lower(raw.surface));
    }
    return out;
}

std::vector<std::string> content_tokens(std::string_view text) {
    auto tokens = tokenize(text).tokens;
    const auto& stop = stopwords();
    std::erase_if(tokens, [&](const std::string& t) { return stop.contains(t); });
    return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
    const std::string norm = normalize_whitespace(text);
    std::vector<std::string> out;
    std::size_t start = 0;
    const std::size_t n = norm.size();
    for (std::size_t i = 0; i < n; ++i) {
        char c = norm[i];
        if (c != '.' && c != '!' && c != '?') {
            continue;
        }
        if (i + 1 == n) {
            break;
        }
        if (norm[i + 1] == ' ' && i + 2 < n && is_upper(norm[i + 2])) {
            out.push_back(norm.substr(start, i + 1 - start));
            start = i + 2;
        }
    }
    if (start < n) {
        out.push_back(norm.substr(start));
    }
    return out;
}

bool is_numeric_token(std::string_view token) {
    if (is_plain_number(token)) {
        return true;
    }
    auto dash = token.find('-');
    if (dash == std::string_view::npos) {
        return false;
    }
    return is_plain_number(token.substr(0, dash)) && is_plain_number(token.substr(dash + 1));
}

KeywordSet extract_keywords(std::string_view text) {
    KeywordSet out;
    const auto& stop = stopwords();
    const auto raws = raw_tokens(text);

    std::string run;
    std::size_t run_end = 0;
    auto flush = [&] {
        if (!run.empty()) {
            out.entities.insert(run);
            run.clear();
        }
    };

    for (const auto& raw : raws) {
        auto token = to_lower(raw.surface);
        const bool stopword = stop.contains(token);
        if (!stopword) {
            if (is_numeric_token(token)) {
                out.numerics.insert(token);
            }
            out.keywords.insert(token);
        }

        const bool capitalized = is_upper(raw.surface.front()) && !stopword;
        if (capitalized) {
            if (!run.empty() && only_spaces(text.substr(run_end, raw.begin - run_end))) {
                run += ' ';
                run += token;
            } else {
                flush();
                run = token;
            }
            run_end = raw.end;
        } else {
            flush();
        }
    }
    flush();
    return out;
}

double similarity(const std::vector<std::string>& a_content, const std::vector<std::string>& b_content) {
    if (a_content.empty() || b_content.empty()) {
        return 0.0;
    }
    const auto common = common_count(a_content, b_content);
    // 2PR/(P+R) reduces to 2c/(|a|+|b|); one division keeps equal ratios bit-identical.
    return static_cast<double>(2 * common) / static_cast<double>(a_content.size() + b_content.size());
}

double similarity(std::string_view a, std::string_view b) {
    return similarity(content_tokens(a), content_tokens(b));
}

double overlap_ratio(const KeywordSet& a, const KeywordSet& b) {
    const auto ta = a.terms();
    const auto tb = b.terms();
    if (ta.empty() || tb.empty()) {
        return 0.0;
    }
    std::size_t shared = 0;
    auto ia = ta.begin();
    auto ib = tb.begin();
    while (ia != ta.end() && ib != tb.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++shared;
            ++ia;
            ++ib;
        }
    }
    return static_cast<double>(shared) / static_cast<double>(std::min(ta.size(), tb.size()));
}

bool text_contains_answer(std::string_view text, std::string_view answer) {
    return contains_subsequence(tokenize(text).tokens, tokenize(answer).tokens);
}

bool cell_matches_answer(std::string_view cell, std::string_view answer) {
    const auto norm_answer = to_lower(normalize_whitespace(answer));
    if (!norm_answer.empty() && to_lower(normalize_whitespace(cell)) == norm_answer) {
        return true;
    }
    return text_contains_answer(cell, answer);
}

} // namespace chainqa
