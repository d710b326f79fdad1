#include "ktrade/path.hpp"

#include "ktrade/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ktrade {

Path::Path(std::vector<double> times, Eigen::MatrixXd values)
    : times_(std::move(times)), values_(std::move(values)) {
    if (times_.empty() || static_cast<Eigen::Index>(times_.size()) != values_.rows()) {
        throw std::invalid_argument("path: times/values size mismatch");
    }
    if (values_.cols() < 1) {
        throw std::invalid_argument("path: needs at least one channel");
    }
    for (std::size_t i = 0; i + 1 < times_.size(); ++i) {
        if (!(times_[i + 1] > times_[i])) {
            throw std::invalid_argument("path: times must be strictly increasing");
        }
    }
    for (double t : times_) {
        if (!std::isfinite(t)) throw std::invalid_argument("path: non-finite time");
    }
    if (!values_.allFinite()) {
        throw std::invalid_argument("path: non-finite values");
    }
}

Eigen::MatrixXd Path::increments() const {
    const Eigen::Index n = length();
    return values_.bottomRows(n) - values_.topRows(n);
}

Path Path::prefix(Eigen::Index i) const {
    if (i < 0 || i > length()) {
        throw std::out_of_range("prefix: index out of range");
    }
    std::vector<double> t(times_.begin(), times_.begin() + i + 1);
    return Path(std::move(t), values_.topRows(i + 1));
}

PathBatch::PathBatch(std::vector<Path> p, std::string lbl)
    : paths(std::move(p)), label(std::move(lbl)) {
    for (const auto& path : paths) {
        if (path.channels() != paths.front().channels()) {
            throw std::invalid_argument("batch: mixed channel counts");
        }
    }
}

void EmbeddingSpec::validate() const {
    if (!(scale_gamma > 0.0)) {
        throw std::invalid_argument("embedding: scale_gamma must be positive");
    }
}

Path embed(const Path& path, const EmbeddingSpec& spec) {
    spec.validate();
    const Eigen::Index n = path.values().rows();
    const Eigen::Index d = path.channels();

    if (spec.signal_channels) {
        const auto& sig = *spec.signal_channels;
        if (sig.values().rows() != n || sig.times() != path.times()) {
            throw std::invalid_argument("embedding grid mismatch");
        }
    }

    Eigen::Index out_cols = d;
    if (spec.time_augment) ++out_cols;
    if (spec.signal_channels) out_cols += spec.signal_channels->channels();

    Eigen::MatrixXd out(n, out_cols);
    Eigen::Index col = 0;

    if (spec.time_augment) {
        const double horizon = spec.time_horizon.value_or(path.times().back());
        for (Eigen::Index i = 0; i < n; ++i) {
            out(i, 0) = horizon != 0.0 ? path.times()[static_cast<std::size_t>(i)] / horizon : 0.0;
        }
        col = 1;
    }

    Eigen::MatrixXd asset = path.values();
    if (spec.basepoint == Basepoint::TranslateToZero) {
        asset.rowwise() -= path.values().row(0);
    }
    out.middleCols(col, d) = spec.scale_gamma * asset;
    col += d;

    if (spec.signal_channels) {
        out.middleCols(col, spec.signal_channels->channels()) = spec.signal_channels->values();
    }

    return Path(path.times(), std::move(out));
}

EmbeddingSpec with_pinned_horizon(EmbeddingSpec spec, const PathBatch& batch) {
    if (spec.time_augment && !spec.time_horizon && !batch.paths.empty()) {
        spec.time_horizon = batch.paths.front().times().back();
    }
    return spec;
}

SessionWindow parse_session_window(const std::string& spec) {
    int h0, m0, h1, m1;
    if (std::sscanf(spec.c_str(), "%d:%d-%d:%d", &h0, &m0, &h1, &m1) != 4) {
        throw std::invalid_argument("session window: expected HH:MM-HH:MM");
    }
    SessionWindow w{h0 * 60 + m0, h1 * 60 + m1};
    if (w.start_minute >= w.end_minute) {
        throw std::invalid_argument("session window: start must precede end");
    }
    return w;
}

namespace {

BarRecord parse_bar_row(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) {
        throw std::runtime_error("load_bars: malformed row at line " + std::to_string(line_no));
    }

    BarRecord bar;
    // ISO-8601: YYYY-MM-DD[T ]HH:MM[:SS[...]]
    const std::string& ts = fields[0];
    int hh, mm;
    if (ts.size() < 16 || (ts[10] != 'T' && ts[10] != ' ') ||
        std::sscanf(ts.c_str() + 11, "%d:%d", &hh, &mm) != 2) {
        throw std::runtime_error("load_bars: bad timestamp at line " + std::to_string(line_no));
    }
    bar.date = ts.substr(0, 10);
    bar.minute_of_day = hh * 60 + mm;

    double* slots[5] = {&bar.open, &bar.high, &bar.low, &bar.close, &bar.volume};
    for (int i = 0; i < 5; ++i) {
        try {
            std::size_t used = 0;
            *slots[i] = std::stod(fields[static_cast<std::size_t>(i) + 1], &used);
            if (used != fields[static_cast<std::size_t>(i) + 1].size()) throw std::invalid_argument("");
        } catch (...) {
            throw std::runtime_error("load_bars: malformed row at line " + std::to_string(line_no));
        }
    }
    if (bar.high < std::max(bar.open, bar.close) || bar.low > std::min(bar.open, bar.close) ||
        bar.volume < 0.0) {
        throw std::runtime_error("load_bars: inconsistent bar at line " + std::to_string(line_no));
    }
    return bar;
}

} // namespace

PathBatch load_bars(std::istream& csv, const SessionWindow& session,
                    std::size_t bars_per_session, LoadBarsReport* report) {
    if (bars_per_session < 2) {
        throw std::invalid_argument("load_bars: bars_per_session must be >= 2");
    }

    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(csv, line)) throw std::runtime_error("load_bars: no sessions");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "timestamp,open,high,low,close,volume") {
        throw std::runtime_error("load_bars: unexpected header");
    }

    // Rows are time-sorted, so sessions appear contiguously; a map keeps the
    // grouping order stable either way.
    std::map<std::string, std::vector<double>> sessions;
    LoadBarsReport rep;
    while (std::getline(csv, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        BarRecord bar = parse_bar_row(line, line_no);
        ++rep.rows;
        if (bar.minute_of_day >= session.start_minute && bar.minute_of_day < session.end_minute) {
            sessions[bar.date].push_back(bar.close);
        }
    }

    std::vector<Path> paths;
    for (const auto& [date, closes] : sessions) {
        if (closes.size() != bars_per_session) {
            ++rep.dropped;
            continue;
        }
        std::vector<double> times(bars_per_session);
        Eigen::MatrixXd values(static_cast<Eigen::Index>(bars_per_session), 1);
        for (std::size_t i = 0; i < bars_per_session; ++i) {
            times[i] = static_cast<double>(i);
            values(static_cast<Eigen::Index>(i), 0) = closes[i];
        }
        paths.emplace_back(std::move(times), std::move(values));
        ++rep.sessions_kept;
    }

    if (report) *report = rep;
    if (paths.empty()) throw std::runtime_error("load_bars: no sessions");
    return PathBatch(std::move(paths), "bars");
}

void write_bars_csv(std::ostream& out, const PathBatch& batch,
                    const SessionWindow& session, int bar_minutes) {
    out << "timestamp,open,high,low,close,volume\n";
    int day = 0;
    for (const auto& path : batch.paths) {
        ++day;
        char date[16];
        std::snprintf(date, sizeof(date), "2024-%02d-%02d", (day - 1) / 28 + 1, (day - 1) % 28 + 1);
        for (Eigen::Index i = 0; i <= path.length(); ++i) {
            const int minute = session.start_minute + static_cast<int>(i) * bar_minutes;
            const double close = path.values()(i, 0);
            const std::string px = format_full(close);
            char ts[32];
            std::snprintf(ts, sizeof(ts), "%sT%02d:%02d:00", date, minute / 60, minute % 60);
            out << ts << ',' << px << ',' << px << ',' << px << ',' << px << ",0\n";
        }
    }
}

std::uint64_t path_fingerprint(const Path& p) {
    Fnv1a h;
    h.update(static_cast<std::uint64_t>(p.times().size()));
    for (double t : p.times()) h.update(t);
    h.update(static_cast<std::uint64_t>(p.channels()));
    for (Eigen::Index i = 0; i < p.values().rows(); ++i) {
        for (Eigen::Index j = 0; j < p.values().cols(); ++j) h.update(p.values()(i, j));
    }
    return h.digest();
}

std::uint64_t batch_fingerprint(const PathBatch& b) {
    Fnv1a h;
    h.update(b.label);
    h.update(static_cast<std::uint64_t>(b.size()));
    for (const auto& p : b.paths) h.update(path_fingerprint(p));
    return h.digest();
}

} // namespace ktrade
