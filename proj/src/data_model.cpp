// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/data_model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

namespace {

std::string trim(std::string_view value) {
    const auto first = value.find_first_not_of(" \t\r\n\"");
    if (first == std::string_view::npos) return {};
    const auto last = value.find_last_not_of(" \t\r\n\"");
    return std::string(value.substr(first, last - first + 1));
}

std::string lower(std::string value) {
    std::transform(value.begin(), value.end(), value.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string token;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            fields.push_back(trim(token));
            token.clear();
        } else {
            token.push_back(ch);
        }
    }
    fields.push_back(trim(token));
    return fields;
}

std::optional<double> parse_double(std::string_view text) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::string location(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

}  // namespace

std::string_view to_string(TextSource source) noexcept {
    return source == TextSource::News ? "news" : "tweet";
}

std::optional<TextSource> parse_text_source(std::string_view text) noexcept {
    if (text == "news") return TextSource::News;
    if (text == "tweet") return TextSource::Tweet;
    return std::nullopt;
}

PriceSeries load_price_csv(const std::filesystem::path& path, std::string symbol, std::string sector) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open price file", path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "price file has no header row", path.string());
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

    const auto header = split_csv_line(line);
    std::optional<std::size_t> date_col;
    std::optional<std::size_t> close_col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto name = lower(header[i]);
        if (name == "date") date_col = i;
        if (name == "adj close" || name == "adj_close" || name == "adjclose") close_col = i;
    }
    if (!date_col) throw Error(ErrorCode::MissingColumn, "missing column 'Date'", path.string());
    if (!close_col) throw Error(ErrorCode::MissingColumn, "missing column 'Adj Close'", path.string());

    std::vector<std::pair<Date, double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        const std::size_t need = std::max(*date_col, *close_col);
        if (fields.size() <= need) {
            throw Error(ErrorCode::MissingColumn, "row has fewer fields than the header", location(path, line_no));
        }
        const auto date = Date::parse(fields[*date_col]);
        if (!date) {
            throw Error(ErrorCode::UnparseableDate, "cannot parse date '" + fields[*date_col] + "'",
                        location(path, line_no));
        }
        const auto value = parse_double(fields[*close_col]);
        if (!value || !std::isfinite(*value)) {
            throw Error(ErrorCode::NonFiniteValue, "non-finite adjusted close '" + fields[*close_col] + "'",
                        location(path, line_no));
        }
        rows.emplace_back(*date, *value);
    }

    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].first == rows[i - 1].first) {
            throw Error(ErrorCode::DuplicateDate, "duplicate date " + rows[i].first.iso(), path.string());
        }
    }
    if (rows.empty()) throw Error(ErrorCode::EmptyInput, "price file has no data rows", path.string());

    PriceSeries series;
    series.symbol = symbol.empty() ? path.stem().string() : std::move(symbol);
    series.sector = std::move(sector);
    series.dates.reserve(rows.size());
    series.values.reserve(rows.size());
    for (const auto& [d, v] : rows) {
        series.dates.push_back(d);
        series.values.push_back(v);
    }
    return series;
}

std::vector<TextEmbeddingRecord> load_embedding_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open embedding file", path.string());

    std::vector<TextEmbeddingRecord> records;
    std::optional<std::size_t> width;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto malformed = [&](const std::string& why) {
            return Error(ErrorCode::MalformedLine, "malformed embedding line " + std::to_string(line_no) + ": " + why,
                         location(path, line_no));
        };

        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw malformed(e.what());
        }
        if (!obj.is_object() || !obj.contains("date") || !obj.contains("source") || !obj.contains("vector")) {
            throw malformed("expected an object with date, source and vector");
        }
        if (!obj["date"].is_string() || !obj["source"].is_string() || !obj["vector"].is_array()) {
            throw malformed("field types do not match the schema");
        }
        const auto date = Date::parse(obj["date"].get<std::string>());
        if (!date) throw malformed("unparseable date");
        const auto source = parse_text_source(obj["source"].get<std::string>());
        if (!source) throw malformed("source must be \"news\" or \"tweet\"");

        TextEmbeddingRecord rec{*date, *source, {}};
        rec.vector.reserve(obj["vector"].size());
        for (const auto& x : obj["vector"]) {
            if (!x.is_number()) throw malformed("vector entries must be numbers");
            const double v = x.get<double>();
            if (!std::isfinite(v)) throw malformed("vector entries must be finite");
            rec.vector.push_back(v);
        }
        if (rec.vector.empty()) throw malformed("empty vector");
        if (!width) {
            width = rec.vector.size();
        } else if (*width != rec.vector.size()) {
            throw Error(ErrorCode::WidthMismatch,
                        "vector width " + std::to_string(rec.vector.size()) + " at line " + std::to_string(line_no) +
                            " differs from width " + std::to_string(*width),
                        location(path, line_no));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::size_t embedding_width(std::span<const TextEmbeddingRecord> records) {
    return records.empty() ? 0 : records.front().vector.size();
}

AlignedDataset align(const PriceSeries& price, std::span<const TextEmbeddingRecord> texts, MissingTextPolicy policy) {
    // Group by date; records on non-trading dates have no price anchor and are dropped.
    std::map<Date, std::vector<const TextEmbeddingRecord*>> by_date;
    for (const auto& rec : texts) by_date[rec.date].push_back(&rec);

    const std::size_t width = embedding_width(texts);
    AlignedDataset out;
    out.symbol = price.symbol;
    out.steps.reserve(price.dates.size());
    for (std::size_t i = 0; i < price.dates.size(); ++i) {
        AlignedStep step{price.dates[i], price.values[i], std::nullopt};
        if (auto it = by_date.find(price.dates[i]); it != by_date.end()) {
            auto group = it->second;
            // Canonical order makes the floating-point mean independent of input order.
            std::sort(group.begin(), group.end(), [](const auto* a, const auto* b) {
                if (a->source != b->source) return a->source < b->source;
                return a->vector < b->vector;
            });
            Vector mean(width, 0.0);
            for (const auto* rec : group) {
                for (std::size_t k = 0; k < width; ++k) mean[k] += rec->vector[k];
            }
            for (auto& m : mean) m /= static_cast<double>(group.size());
            step.text = std::move(mean);
        } else if (policy == MissingTextPolicy::ZeroFill && width > 0) {
            step.text = Vector(width, 0.0);
        }
        out.steps.push_back(std::move(step));
    }
    return out;
}

std::vector<PriceSeries> channel_split(std::span<const PriceSeries> multivariate) {
    std::vector<PriceSeries> out;
    out.reserve(multivariate.size());
    for (const auto& channel : multivariate) {
        if (channel.dates != multivariate.front().dates) {
            throw Error(ErrorCode::DateIndexMismatch, "channel '" + channel.symbol + "' has a different date index");
        }
        out.push_back(channel);
    }
    return out;
}

NormalizedWindow normalize_context(std::span<const double> window) {
    NormalizedWindow out;
    const std::size_t n = window.size();
    if (n == 0) return out;

    double sum = 0.0;
    for (double x : window) sum += x;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double x : window) ss += (x - mean) * (x - mean);
    const double std = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;

    out.stats.mean = mean;
    out.values.resize(n);
    if (std > 0.0) {
        out.stats.std = std;
        for (std::size_t i = 0; i < n; ++i) out.values[i] = (window[i] - mean) / std;
    } else {
        out.stats.std = 1.0;
        std::fill(out.values.begin(), out.values.end(), 0.0);
    }
    return out;
}

Vector denormalize(std::span<const double> normalized, const NormStats& stats) {
    Vector out(normalized.size());
    for (std::size_t i = 0; i < normalized.size(); ++i) out[i] = normalized[i] * stats.std + stats.mean;
    return out;
}

std::vector<PackedBatch> pack_sequences(std::span<const AlignedDataset> datasets, std::size_t max_len) {
    if (max_len == 0) throw Error(ErrorCode::InvalidConfig, "pack_sequences requires max_len >= 1");

    std::vector<PackedBatch> rows;
    PackedBatch current;
    current.max_len = max_len;
    const auto flush = [&] {
        if (!current.tokens.empty()) rows.push_back(std::move(current));
        current = PackedBatch{};
        current.max_len = max_len;
    };

    for (const auto& ds : datasets) {
        std::size_t offset = 0;
        while (offset < ds.steps.size()) {
            if (current.tokens.size() == max_len) flush();
            const std::size_t room = max_len - current.tokens.size();
            const std::size_t take = std::min(room, ds.steps.size() - offset);
            current.boundaries.push_back(current.tokens.size());
            current.tokens.insert(current.tokens.end(), ds.steps.begin() + static_cast<std::ptrdiff_t>(offset),
                                  ds.steps.begin() + static_cast<std::ptrdiff_t>(offset + take));
            offset += take;
        }
    }
    flush();
    return rows;
}

std::size_t calendar_span_days(const PriceSeries& series) {
    if (series.dates.empty()) return 0;
    return static_cast<std::size_t>(series.dates.back() - series.dates.front()) + 1;
}

}  // namespace ftsmoe
