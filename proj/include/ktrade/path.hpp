#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ktrade {

/// A discretely sampled multichannel trajectory on an explicit, strictly
/// increasing time grid. values row i holds the d channel samples at times[i].
/// Immutable after construction; a single-point path is permitted (it arises
/// as the zero-length prefix) but most consumers require one increment.
class Path {
public:
    Path() = default;
    Path(std::vector<double> times, Eigen::MatrixXd values);

    const std::vector<double>& times() const { return times_; }
    const Eigen::MatrixXd& values() const { return values_; }

    /// Number of increments L (grid points minus one).
    Eigen::Index length() const { return values_.rows() - 1; }
    Eigen::Index channels() const { return values_.cols(); }

    /// The L x d matrix of forward differences values[i+1] - values[i].
    Eigen::MatrixXd increments() const;

    /// First i+1 samples, 0 <= i <= length().
    Path prefix(Eigen::Index i) const;

private:
    std::vector<double> times_;
    Eigen::MatrixXd values_; // (L+1) x d
};

/// Paths sharing a channel count; grids may differ in length.
struct PathBatch {
    std::vector<Path> paths;
    std::string label;

    PathBatch() = default;
    PathBatch(std::vector<Path> p, std::string lbl);

    std::size_t size() const { return paths.size(); }
    Eigen::Index channels() const { return paths.empty() ? 0 : paths.front().channels(); }
};

enum class Basepoint { None, TranslateToZero };

/// Feature-embedding configuration: optional normalized time channel t/T,
/// basepoint handling and path scaling gamma applied to the original
/// channels, optionally followed by concatenated exogenous signal channels.
///
/// time_horizon pins T for the time channel. When unset, T is the path's own
/// final time. Strategies pin it at fit time so that embedding a prefix gives
/// exactly the prefix of the embedded full path.
struct EmbeddingSpec {
    bool time_augment = true;
    double scale_gamma = 1.0;
    Basepoint basepoint = Basepoint::TranslateToZero;
    std::optional<Path> signal_channels;
    std::optional<double> time_horizon;

    void validate() const;
};

Path embed(const Path& path, const EmbeddingSpec& spec);

/// Copy of spec with time_horizon pinned to the batch's first-path horizon
/// (no-op when already pinned or time augmentation is off). Fit paths pin
/// before any Gram work so online prefixes embed consistently.
EmbeddingSpec with_pinned_horizon(EmbeddingSpec spec, const PathBatch& batch);

/// One OHLCV bar; ISO-8601 timestamp split into date and minute-of-day.
struct BarRecord {
    std::string date;   // YYYY-MM-DD
    int minute_of_day = 0;
    double open = 0, high = 0, low = 0, close = 0, volume = 0;
};

/// Daily session window [start, end) in minutes since midnight.
struct SessionWindow {
    int start_minute = 9 * 60 + 30;
    int end_minute = 16 * 60;
};

SessionWindow parse_session_window(const std::string& spec); // "09:30-16:00"

struct LoadBarsReport {
    std::size_t sessions_kept = 0;
    std::size_t dropped = 0;
    std::size_t rows = 0;
};

/// Parses `timestamp,open,high,low,close,volume` rows and forms one Path of
/// close prices per complete calendar session, on an equispaced unit grid.
/// Sessions without exactly bars_per_session bars inside the window are
/// dropped and counted in the report.
PathBatch load_bars(std::istream& csv, const SessionWindow& session,
                    std::size_t bars_per_session, LoadBarsReport* report = nullptr);

/// Writes one synthetic session per path (close = channel 0, flat OHLC) so
/// that load_bars round-trips the close values exactly.
void write_bars_csv(std::ostream& out, const PathBatch& batch,
                    const SessionWindow& session, int bar_minutes = 5);

std::uint64_t path_fingerprint(const Path& p);
std::uint64_t batch_fingerprint(const PathBatch& b);

} // namespace ktrade
