#include "chainqa/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace chainqa {

std::size_t Bm25::add_document(const std::vector<std::string>& tokens) {
    const std::size_t doc = doc_lengths_.size();
    std::map<std::string, std::size_t> tf;
    for (const auto& t : tokens) {
        ++tf[t];
    }
    for (const auto& [term, count] : tf) {
        postings_[term].push_back({doc, count});
    }
    doc_lengths_.push_back(tokens.size());
    total_length_ += tokens.size();
    return doc;
}

double Bm25::average_length() const {
    if (doc_lengths_.empty()) {
        return 0.0;
    }
    return static_cast<double>(total_length_) / static_cast<double>(doc_lengths_.size());
}

std::size_t Bm25::document_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

double Bm25::idf(const std::string& term) const {
    const auto n = static_cast<double>(doc_lengths_.size());
    const auto df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<double> Bm25::score_all(const std::vector<std::string>& query) const {
    std::vector<double> scores(doc_lengths_.size(), 0.0);
    const double avgdl = average_length();
    if (avgdl <= 0.0) {
        return scores;
    }
    for (const auto& term : query) {
        auto it = postings_.find(term);
        if (it == postings_.end()) {
            continue;
        }
        const double w = idf(term);
        for (const auto& p : it->second) {
            const double tf = static_cast<double>(p.tf);
            const double norm = 1.0 - b_ + b_ * static_cast<double>(doc_lengths_[p.doc]) / avgdl;
            scores[p.doc] += w * tf * (k1_ + 1.0) / (tf + k1_ * norm);
        }
    }
    return scores;
}

double Bm25::score(const std::vector<std::string>& query, std::size_t doc) const {
    const double avgdl = average_length();
    if (avgdl <= 0.0 || doc >= doc_lengths_.size()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& term : query) {
        auto it = postings_.find(term);
        if (it == postings_.end()) {
            continue;
        }
        auto p = std::lower_bound(it->second.begin(), it->second.end(), doc,
                                  [](const Posting& x, std::size_t d) { return x.doc < d; });
        if (p == it->second.end() || p->doc != doc) {
            continue;
        }
        const double tf = static_cast<double>(p->tf);
        const double norm = 1.0 - b_ + b_ * static_cast<double>(doc_lengths_[doc]) / avgdl;
        total += idf(term) * tf * (k1_ + 1.0) / (tf + k1_ * norm);
    }
    return total;
}

} // namespace chainqa
