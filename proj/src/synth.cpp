#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "rng.hpp"

namespace pmad {

namespace {

constexpr double kTwoPi = 6.283185307179586477;
constexpr int kEdgeMargin = 32;  // anomalies keep clear of region borders

double base_value(const SynthSpec& spec, int period, double t) {
    switch (spec.kind) {
        case DomainKind::sine:
            return std::sin(kTwoPi * t / period);
        case DomainKind::sawtooth: {
            // band-limited (8 harmonics): sampling an ideal ramp aliases the
            // reset into a one-sample jump, which is not a property of the
            // underlying process
            double v = 0.0;
            for (int k = 1; k <= 8; ++k)
                v += ((k & 1) ? 1.0 : -1.0) * std::sin(kTwoPi * k * t / period) / k;
            return v * (2.0 / 3.141592653589793238);
        }
        case DomainKind::ar_noise:
            return 0.0;  // handled by the recursion
    }
    throw std::logic_error("base_value: bad kind");
}

void validate(const SynthSpec& spec) {
    if (spec.length <= 0 || spec.series_count <= 0)
        throw std::invalid_argument("synth: length and series_count must be positive");
    if (spec.train_len <= 0 || spec.train_len >= spec.length)
        throw std::invalid_argument("synth: train_len must lie inside (0, T)");
    if (spec.kind != DomainKind::ar_noise && spec.period <= 1)
        throw std::invalid_argument("synth: period must exceed 1");
    if (spec.noise_std < 0.0) throw std::invalid_argument("synth: negative noise_std");
    if (spec.subdomain.empty() || spec.subdomain.find('_') != std::string::npos)
        throw std::invalid_argument("synth: subdomain must be one filename token");
    std::vector<AnomalyRange> sorted = spec.plan;
    std::sort(sorted.begin(), sorted.end(),
              [](const AnomalyRange& a, const AnomalyRange& b) { return a.start < b.start; });
    for (size_t i = 0; i < sorted.size(); ++i) {
        const AnomalyRange& r = sorted[i];
        if (r.length <= 0) throw std::invalid_argument("synth: anomaly length must be positive");
        if (r.start < spec.train_len || r.start + r.length > spec.length)
            throw std::invalid_argument("synth: anomaly range outside the test region");
        if (i > 0 && sorted[i - 1].start + sorted[i - 1].length > r.start)
            throw std::invalid_argument("synth: overlapping anomaly ranges");
    }
}

std::vector<double> normal_series(const SynthSpec& spec, Rng& rng) {
    std::vector<double> x(spec.length);
    if (spec.kind == DomainKind::ar_noise) {
        double v = 0.0;
        for (int t = 0; t < 128; ++t) v = spec.ar_phi * v + spec.noise_std * rng.normal();
        for (int t = 0; t < spec.length; ++t) {
            v = spec.ar_phi * v + spec.noise_std * rng.normal();
            x[t] = v;
        }
        return x;
    }
    const double phase = static_cast<double>(rng.below(static_cast<uint64_t>(spec.period)));
    for (int t = 0; t < spec.length; ++t)
        x[t] = base_value(spec, spec.period, t + phase) + spec.noise_std * rng.normal();
    return x;
}

std::vector<AnomalyRange> draw_plan(const SynthSpec& spec, Rng& rng) {
    const int count = 2 + static_cast<int>(rng.below(2));
    std::vector<AnomalyKind> kinds = {AnomalyKind::spike, AnomalyKind::level_shift,
                                      AnomalyKind::frequency_change};
    rng.shuffle(kinds);
    kinds.resize(count);

    const int lo = spec.train_len + kEdgeMargin;
    const int hi = spec.length - kEdgeMargin;
    const int seg = (hi - lo) / count;
    std::vector<AnomalyRange> plan;
    for (int k = 0; k < count; ++k) {
        AnomalyRange r;
        r.kind = kinds[k];
        switch (r.kind) {
            case AnomalyKind::spike:
                r.length = 2 + static_cast<int>(rng.below(3));  // 2..4
                break;
            case AnomalyKind::level_shift:
                r.length = 24 + static_cast<int>(rng.below(37));  // 24..60
                break;
            case AnomalyKind::frequency_change:
                r.length = 32 + static_cast<int>(rng.below(49));  // 32..80
                break;
        }
        const int slack = seg - r.length - 2 * 8;
        r.start = lo + k * seg + 8 + static_cast<int>(rng.below(static_cast<uint64_t>(slack)));
        plan.push_back(r);
    }
    return plan;
}

double train_region_std(const std::vector<double>& x, int train_len) {
    double mean = 0.0;
    for (int t = 0; t < train_len; ++t) mean += x[t];
    mean /= train_len;
    double var = 0.0;
    for (int t = 0; t < train_len; ++t) var += (x[t] - mean) * (x[t] - mean);
    return std::sqrt(var / train_len);
}

void inject(const SynthSpec& spec, const AnomalyRange& r, double sd, Rng& rng,
            std::vector<double>& x, std::vector<int>& labels) {
    const double sign = rng.below(2) ? 1.0 : -1.0;
    switch (r.kind) {
        case AnomalyKind::spike:
            for (int t = r.start; t < r.start + r.length; ++t) x[t] += sign * 6.0 * sd;
            break;
        case AnomalyKind::level_shift:
            for (int t = r.start; t < r.start + r.length; ++t) x[t] += sign * 6.0 * sd;
            break;
        case AnomalyKind::frequency_change:
            if (spec.kind == DomainKind::ar_noise) {
                // white burst: injects off-spectrum energy without touching
                // the recursion outside the range
                for (int t = r.start; t < r.start + r.length; ++t)
                    x[t] += 6.0 * sd * rng.normal();
            } else {
                // quarter period, doubled swing: a pure time compression is
                // value-preserving, which a reconstruction scorer cannot see
                const int quarter = std::max(2, spec.period / 4);
                for (int t = r.start; t < r.start + r.length; ++t)
                    x[t] = 2.0 * base_value(spec, quarter, static_cast<double>(t)) +
                           spec.noise_std * rng.normal();
            }
            break;
    }
    for (int t = r.start; t < r.start + r.length; ++t) labels[t] = 1;
}

}  // namespace

std::vector<SeriesRecord> generate_domain(const SynthSpec& spec) {
    validate(spec);
    std::vector<SeriesRecord> out;
    for (int i = 0; i < spec.series_count; ++i) {
        // separate streams so the anomaly draws never shift the normal signal
        Rng rng_signal(derive_seed(spec.seed, 1000 + static_cast<uint64_t>(i)));
        Rng rng_anom(derive_seed(spec.seed, 2000 + static_cast<uint64_t>(i)));

        SeriesRecord rec;
        rec.values = normal_series(spec, rng_signal);
        rec.labels.assign(spec.length, 0);
        rec.dataset = "SYN";
        rec.subdomain = spec.subdomain;
        rec.train_len = spec.train_len;
        rec.train_used = spec.train_len;

        std::vector<AnomalyRange> plan = spec.auto_plan ? draw_plan(spec, rng_anom) : spec.plan;
        std::sort(plan.begin(), plan.end(),
                  [](const AnomalyRange& a, const AnomalyRange& b) { return a.start < b.start; });
        const double sd = train_region_std(rec.values, spec.train_len);
        for (const AnomalyRange& r : plan) inject(spec, r, sd, rng_anom, rec.values, rec.labels);

        rec.first_anomaly = plan.empty() ? -1 : plan.front().start;
        rec.source_file = format_filename(spec.first_index + i, rec.dataset, spec.first_id + i,
                                          rec.subdomain, rec.train_len, rec.first_anomaly);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<SeriesRecord> default_suite(uint64_t seed) {
    SynthSpec sine;
    sine.kind = DomainKind::sine;
    sine.subdomain = "Sine";
    sine.period = 64;
    sine.noise_std = 0.1;
    sine.first_index = 1;
    sine.first_id = 1;
    sine.seed = derive_seed(seed, "sine");

    SynthSpec saw = sine;
    saw.kind = DomainKind::sawtooth;
    saw.subdomain = "Sawtooth";
    saw.period = 128;
    saw.first_index = 5;
    saw.first_id = 5;
    saw.seed = derive_seed(seed, "sawtooth");

    SynthSpec ar = sine;
    ar.kind = DomainKind::ar_noise;
    ar.subdomain = "ArNoise";
    ar.ar_phi = 0.9;
    ar.noise_std = 0.25;
    ar.first_index = 9;
    ar.first_id = 9;
    ar.seed = derive_seed(seed, "ar_noise");

    std::vector<SeriesRecord> corpus;
    for (const SynthSpec* spec : {&sine, &saw, &ar}) {
        std::vector<SeriesRecord> part = generate_domain(*spec);
        corpus.insert(corpus.end(), std::make_move_iterator(part.begin()),
                      std::make_move_iterator(part.end()));
    }
    return corpus;
}

void write_corpus(const std::vector<SeriesRecord>& corpus, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const SeriesRecord& rec : corpus) {
        const std::string path = (std::filesystem::path(dir) / rec.source_file).string();
        std::ofstream out(path, std::ios::binary);  // fixed newlines on every platform
        if (!out) throw std::runtime_error("write_corpus: cannot open " + path);
        out << "value,Label\n";
        char buf[64];
        for (size_t t = 0; t < rec.values.size(); ++t) {
            std::snprintf(buf, sizeof(buf), "%.17g,%d\n", rec.values[t], rec.labels[t]);
            out << buf;
        }
        if (!out) throw std::runtime_error("write_corpus: write failed for " + path);
    }
}

}  // namespace pmad
