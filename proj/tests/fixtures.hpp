#pragma once
// Shared setups for the unit tests and the acceptance binary.

#include "mrx/dispatch.hpp"

#include <map>
#include <vector>

namespace fixture {

struct SeededRound {
  mrx::RoundReport report;
  std::vector<mrx::Participant> participants;
  std::map<std::uint16_t, std::vector<std::uint64_t>> sequences;
  std::vector<mrx::Version> before;  // active version per participant
};

/// One allocation round among 2..5 agents that share a previously finalized
/// assignment, over a seeded lossy network.
inline SeededRound seeded_round(std::uint64_t seed, const mrx::NetworkParams& net_params,
                                std::uint32_t max_ticks = 2000) {
  mrx::Rng rng(seed);
  SeededRound r;
  const int n = static_cast<int>(rng.range(2, 5));
  std::vector<mrx::UnitRecord> records;
  for (int u = 0; u < 3 * n; ++u) {
    mrx::UnitRecord rec;
    rec.id = (std::uint64_t(0) << 32) | static_cast<std::uint64_t>(u);
    rec.anchor = mrx::Vec3(u, 0, 0);
    rec.grid = static_cast<std::uint32_t>(u);
    rec.num = 1 + static_cast<std::uint32_t>(u % 4);
    records.push_back(rec);
  }
  const mrx::Version prior{static_cast<std::uint32_t>(rng.range(0, 3)), 0, 0};
  for (int i = 0; i < n; ++i) {
    mrx::Participant p(i);
    if (!prior.zero()) p.install({prior, {static_cast<std::uint64_t>(i)}});
    r.participants.push_back(p);
    r.before.push_back(p.active_version());
  }
  for (const auto& rec : records) {
    const auto k = static_cast<std::uint16_t>(rng.range(0, static_cast<std::uint64_t>(n - 1)));
    r.sequences[k].push_back(rec.id);
  }
  mrx::Network net(net_params, mrx::mix_seed(seed, 1));
  r.report = mrx::run_round(r.participants, net, r.sequences, records, 1, max_ticks);
  return r;
}

}  // namespace fixture
