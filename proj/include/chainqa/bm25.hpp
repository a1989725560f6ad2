#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace chainqa {

/// Okapi BM25 over pre-tokenized documents.
///
/// idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), which stays positive for
/// terms present in most documents.
class Bm25 {
public:
    static constexpr double kDefaultK1 = 1.2;
    static constexpr double kDefaultB = 0.75;

    explicit Bm25(double k1 = kDefaultK1, double b = kDefaultB) : k1_(k1), b_(b) {}

    /// Returns the id of the added document (dense, starting at 0).
    std::size_t add_document(const std::vector<std::string>& tokens);

    std::size_t document_count() const { return doc_lengths_.size(); }
    double average_length() const;
    std::size_t document_length(std::size_t doc) const { return doc_lengths_.at(doc); }
    std::size_t document_frequency(const std::string& term) const;
    double idf(const std::string& term) const;

    /// Score of every document; query tokens are summed with repetition.
    std::vector<double> score_all(const std::vector<std::string>& query) const;
    double score(const std::vector<std::string>& query, std::size_t doc) const;

    double k1() const { return k1_; }
    double b() const { return b_; }

private:
    struct Posting {
        std::size_t doc;
        std::size_t tf;
    };

    double k1_;
    double b_;
    std::vector<std::size_t> doc_lengths_;
    std::size_t total_length_ = 0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

} // namespace chainqa
