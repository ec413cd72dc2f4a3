#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"

namespace pmad {

enum class DomainKind { sine, sawtooth, ar_noise };
enum class AnomalyKind { spike, level_shift, frequency_change };

struct AnomalyRange {
    int start = 0;
    int length = 0;
    AnomalyKind kind = AnomalyKind::spike;
};

// One synthetic domain: `series_count` sibling series sharing a morphology.
// With auto_plan each series draws 2-3 non-overlapping test-region anomalies
// of distinct kinds; otherwise `plan` is injected verbatim into every series.
struct SynthSpec {
    DomainKind kind = DomainKind::sine;
    std::string subdomain = "Sine";  // single filename token, no underscores
    int length = 4096;               // T
    int period = 64;
    double noise_std = 0.1;
    double ar_phi = 0.9;
    int train_len = 2048;
    int series_count = 4;
    int first_index = 1;  // running file index of the domain's first series
    int first_id = 1;
    uint64_t seed = 0;
    bool auto_plan = true;
    std::vector<AnomalyRange> plan;
};

std::vector<SeriesRecord> generate_domain(const SynthSpec& spec);

// sine / sawtooth / AR(1) domains, 4 series each, T=4096, train_len=2048.
std::vector<SeriesRecord> default_suite(uint64_t seed);

// One CSV per record under dir (created if needed), named rec.source_file.
void write_corpus(const std::vector<SeriesRecord>& corpus, const std::string& dir);

}  // namespace pmad
