#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace chainqa {

/// Normalized tokens of a text, in order of appearance.
struct TokenSet {
    std::vector<std::string> tokens;

    bool empty() const { return tokens.empty(); }
    std::size_t size() const { return tokens.size(); }
    std::map<std::string, std::size_t> counts() const;
};

/// Lexical signature of a node or question.
///
/// `keywords` are the non-stopword tokens (numerics included), `entities` the
/// lowercased runs of capitalized surface tokens, `numerics` the tokens that
/// look like numbers or numeric ranges ("25.3", "19-20").
struct KeywordSet {
    std::set<std::string> keywords;
    std::set<std::string> entities;
    std::set<std::string> numerics;

    bool empty() const { return keywords.empty() && entities.empty(); }
    /// keywords ∪ entities, sorted and deduplicated.
    std::vector<std::string> terms() const;
};

class StopwordList {
public:
    StopwordList() = default;
    explicit StopwordList(std::set<std::string, std::less<>> words) : words_(std::move(words)) {}

    /// The list compiled in from resources/stopwords.txt.
    static const StopwordList& builtin();
    static StopwordList parse(std::string_view text);
    static StopwordList from_file(const std::filesystem::path& path);

    bool contains(std::string_view word) const { return words_.find(word) != words_.end(); }
    std::size_t size() const { return words_.size(); }

private:
    std::set<std::string, std::less<>> words_;
};

/// The process-wide stopword list used by every lexical measure.
const StopwordList& stopwords();
/// Replaces the active list. Call before any concurrent work starts.
void install_stopwords(StopwordList list);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);
/// Trims and collapses every whitespace run to one space.
std::string normalize_whitespace(std::string_view text);

/// Splits on whitespace and punctuation, lowercases ASCII letters, and keeps
/// '-' and '.' when they sit between two word characters. Bracketed layout
/// markers emitted by the verbalizers ("[SEP]", "[Table]", ...) are skipped.
TokenSet tokenize(std::string_view text);

/// Tokens of `text` with stopwords removed.
std::vector<std::string> content_tokens(std::string_view text);

/// Sentence split on the whitespace-normalized text. A boundary follows '.', '!'
/// or '?' when the next characters are a space and an uppercase letter, or the
/// end of the text. Joining the result with single spaces gives back
/// normalize_whitespace(text).
std::vector<std::string> split_sentences(std::string_view text);

bool is_numeric_token(std::string_view token);

KeywordSet extract_keywords(std::string_view text);

/// Token F1 over stopword-filtered multisets; 0 when either side is empty.
double similarity(std::string_view a, std::string_view b);
double similarity(const std::vector<std::string>& a_content, const std::vector<std::string>& b_content);

/// |A ∩ B| / min(|A|, |B|) over keywords ∪ entities; 0 when either side is empty.
double overlap_ratio(const KeywordSet& a, const KeywordSet& b);

/// Whole-token containment: the answer's tokens occur contiguously in `text`.
bool text_contains_answer(std::string_view text, std::string_view answer);

/// Cell rule: normalized equality, or whole-token containment.
bool cell_matches_answer(std::string_view cell, std::string_view answer);

} // namespace chainqa
