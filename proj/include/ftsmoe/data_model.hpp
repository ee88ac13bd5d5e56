// SPDX-License-Identifier: Apache-2.0
//
// Price and text-embedding ingestion, date alignment, per-window scaling and
// sequence packing.
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftsmoe/date.hpp"
#include "ftsmoe/linalg.hpp"

namespace ftsmoe {

/// One symbol's dated adjusted-close series. Dates strictly increasing.
struct PriceSeries {
    std::string symbol;
    std::string sector;
    std::vector<Date> dates;
    std::vector<double> values;

    std::size_t total_days() const { return values.size(); }
};

enum class TextSource { News, Tweet };

std::string_view to_string(TextSource source) noexcept;
std::optional<TextSource> parse_text_source(std::string_view text) noexcept;

struct TextEmbeddingRecord {
    Date date;
    TextSource source = TextSource::News;
    Vector vector;
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

struct AlignedStep {
    Date date;
    double value = 0.0;
    std::optional<Vector> text;
};

struct AlignedDataset {
    std::string symbol;
    std::vector<AlignedStep> steps;
    std::optional<NormStats> norm_stats;

    std::size_t size() const { return steps.size(); }
};

/// One packed row: aligned steps from one or more series laid end to end.
/// `boundaries` holds the offset of every segment start; attention never
/// crosses one.
struct PackedBatch {
    std::vector<AlignedStep> tokens;
    std::vector<std::size_t> boundaries;
    std::size_t max_len = 0;
};

enum class MissingTextPolicy {
    Bypass,    // leave the step text-absent; fusion passes the time embedding through
    ZeroFill,  // store a zero vector; fusion then averages with zero (ablation)
};

/// Reads a price CSV with at least `Date` and `Adj Close` columns. Rows may be
/// in any order; the result is date-sorted. `symbol` defaults to the file stem.
PriceSeries load_price_csv(const std::filesystem::path& path, std::string symbol = {}, std::string sector = {});

/// Reads one `{"date","source","vector"}` object per line. Blank lines are skipped.
std::vector<TextEmbeddingRecord> load_embedding_jsonl(const std::filesystem::path& path);

/// Width of the vectors in a record stream, 0 when empty.
std::size_t embedding_width(std::span<const TextEmbeddingRecord> records);

AlignedDataset align(const PriceSeries& price, std::span<const TextEmbeddingRecord> texts,
                     MissingTextPolicy policy = MissingTextPolicy::Bypass);

/// Splits channels that share one date index into independent univariate series.
std::vector<PriceSeries> channel_split(std::span<const PriceSeries> multivariate);

struct NormalizedWindow {
    Vector values;
    NormStats stats;
};

/// z-score with the sample (n-1) standard deviation. A zero-variance (or
/// single-element) window maps to zeros with std recorded as 1.
NormalizedWindow normalize_context(std::span<const double> window);
Vector denormalize(std::span<const double> normalized, const NormStats& stats);

std::vector<PackedBatch> pack_sequences(std::span<const AlignedDataset> datasets, std::size_t max_len);

/// Inclusive calendar-day span of a series (first to last date).
std::size_t calendar_span_days(const PriceSeries& series);

}  // namespace ftsmoe
