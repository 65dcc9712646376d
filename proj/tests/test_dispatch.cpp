#include "fixtures.hpp"
#include "oracles.hpp"

#include "mrx/dispatch.hpp"

#include <doctest.h>

using namespace mrx;

namespace {

UnitRecord unit(std::uint64_t id) {
  UnitRecord r;
  r.id = id;
  r.grid = static_cast<std::uint32_t>(id);
  r.num = 5;
  return r;
}

Message proposal(const Version& v, std::uint16_t to, const ProposalBody& body) {
  Message m;
  m.kind = MsgKind::Proposal;
  m.version = v;
  m.sender = v.host;
  m.recipient = to;
  m.payload = body.encode();
  return m;
}

}  // namespace

TEST_CASE("versions order by counter, then tick, then host") {
  CHECK(Version{1, 9, 9} < Version{2, 0, 0});
  CHECK(Version{2, 1, 9} < Version{2, 2, 0});
  CHECK(Version{2, 2, 0} < Version{2, 2, 1});
  CHECK(Version{}.zero());
}

TEST_CASE("messages round-trip through bytes") {
  ProposalBody b;
  b.finalized = {3, 40, 1};
  b.sequences = {{0, {1, 2}}, {4, {}}};
  b.records = {unit(1), unit(2)};
  const Message m = proposal({4, 50, 1}, 2, b);
  const auto bytes = m.encode();
  CHECK(bytes.size() == Message::kHeaderSize + m.payload.size());
  CHECK(Message::decode(bytes) == m);
  const ProposalBody back = ProposalBody::decode(m.payload);
  CHECK(back.finalized == b.finalized);
  CHECK(back.sequences == b.sequences);
  CHECK(back.records.size() == 2);

  auto cut = bytes;
  cut.resize(10);
  CHECK_THROWS_AS(Message::decode(cut), DecodeError);
  auto bad = bytes;
  bad[0] = 42;
  CHECK_THROWS_AS(Message::decode(bad), DecodeError);
}

TEST_CASE("host election") {
  const std::vector<int> ids{4, 2, 7};
  CHECK(elect_host({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)}, ids, 5.0) == std::vector<int>{2, 2, 2});
  CHECK(elect_host({Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(8, 0, 0)}, ids, 5.0) == std::vector<int>{2, 2, 2});
  CHECK(elect_host({Vec3(0, 0, 0), Vec3(6, 0, 0), Vec3(12, 0, 0)}, ids, 5.0) == std::vector<int>{4, 2, 7});
}

TEST_CASE("components equal the range relation's closure") {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.range(1, 9));
    std::vector<Vec3> pos;
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) {
      pos.emplace_back(30 * rng.uniform(), 30 * rng.uniform(), 0);
      ids.push_back(i);
    }
    const double r = 2.0 + 10.0 * rng.uniform();
    std::set<std::set<int>> got;
    for (const auto& g : components(pos, ids, r)) got.insert(std::set<int>(g.begin(), g.end()));
    const auto want = oracle::range_groups(pos, r);
    CHECK(got == std::set<std::set<int>>(want.begin(), want.end()));
    const auto host = elect_host(pos, ids, r);
    for (const auto& g : want)
      for (int i : g) CHECK(host[static_cast<std::size_t>(i)] == *g.begin());
  }
}

TEST_CASE("proposal validation") {
  Participant p(1);
  p.install({{5, 0, 0}, {9}});
  ProposalBody body;
  body.sequences = {{1, {1, 2}}};
  body.records = {unit(1), unit(2)};

  SUBCASE("stale") {
    RejectReason why{};
    CHECK(p.validate_proposal(proposal({5, 0, 0}, 1, body), &body, &why) == MsgKind::Reject);
    CHECK(why == RejectReason::Stale);
  }
  SUBCASE("unit already finished here") {
    p.set_terminal_check([](const UnitRecord& r) { return r.id == 2; });
    RejectReason why{};
    CHECK(p.validate_proposal(proposal({6, 0, 0}, 1, body), &body, &why) == MsgKind::Reject);
    CHECK(why == RejectReason::TerminalUnit);
  }
  SUBCASE("fresh") {
    const auto out = p.on_message(proposal({6, 0, 0}, 1, body));
    REQUIRE(out.size() == 1);
    CHECK(out[0].kind == MsgKind::Accept);
    CHECK(p.phase() == Phase::Proposed);
    REQUIRE(p.cache());
    CHECK(p.cache()->sequence == std::vector<std::uint64_t>{9});
    CHECK(p.active().sequence == std::vector<std::uint64_t>{9});
  }
}

TEST_CASE("a duplicated proposal changes state once and gets the same reply") {
  Participant p(1);
  ProposalBody body;
  body.sequences = {{1, {1}}};
  body.records = {unit(1)};
  const Message m = proposal({1, 3, 0}, 1, body);
  const auto first = p.on_message(m);
  const Phase phase = p.phase();
  const auto cache = p.cache();
  const auto second = p.on_message(m);
  REQUIRE(first.size() == 1);
  REQUIRE(second.size() == 1);
  CHECK(first[0].encode() == second[0].encode());
  CHECK(p.phase() == phase);
  CHECK(p.cache() == cache);
}

TEST_CASE("commit, ack, finalize") {
  Participant p(2);
  ProposalBody body;
  body.sequences = {{2, {7}}};
  body.records = {unit(7)};
  const Version v{1, 1, 0};
  p.on_message(proposal(v, 2, body));
  Message c;
  c.kind = MsgKind::Commit;
  c.version = v;
  c.recipient = 2;
  const auto ack = p.on_message(c);
  REQUIRE(ack.size() == 1);
  CHECK(ack[0].kind == MsgKind::Ack);
  CHECK(p.phase() == Phase::Committed);
  CHECK(p.cache());
  Message f = c;
  f.kind = MsgKind::Finalize;
  p.on_message(f);
  CHECK(p.phase() == Phase::Finalized);
  CHECK(p.active_version() == v);
  CHECK(p.active().sequence == std::vector<std::uint64_t>{7});
}

TEST_CASE("a clean round finalizes the proposal everywhere") {
  std::vector<Participant> ps{Participant(0), Participant(1), Participant(2)};
  Network net({}, 1);
  const std::map<std::uint16_t, std::vector<std::uint64_t>> seqs{{0, {1}}, {1, {2, 3}}, {2, {}}};
  const auto rep = run_round(ps, net, seqs, {unit(1), unit(2), unit(3)}, 0);
  CHECK(rep.outcome == Outcome::Finalized);
  CHECK(rep.settled);
  CHECK(rep.agreement_violations == 0);
  for (const auto& p : ps) {
    CHECK(p.active_version() == ps[0].active_version());
    const auto it = seqs.find(static_cast<std::uint16_t>(p.id()));
    CHECK(p.active().sequence == it->second);
    CHECK(p.roster() == seqs);
  }
}

TEST_CASE("one rejection cancels and restores every cache") {
  std::vector<Participant> ps{Participant(0), Participant(1), Participant(2)};
  for (auto& p : ps) p.install({{2, 0, 0}, {static_cast<std::uint64_t>(10 + p.id())}});
  ps[2].set_terminal_check([](const UnitRecord& r) { return r.id == 3; });
  Network net({}, 1);
  const auto rep = run_round(ps, net, {{0, {1}}, {1, {2}}, {2, {3}}}, {unit(1), unit(2), unit(3)}, 0);
  CHECK(rep.outcome == Outcome::Cancelled);
  CHECK(rep.settled);
  CHECK(rep.rollback_violations == 0);
  for (const auto& p : ps) {
    CHECK(p.active_version() == Version{2, 0, 0});
    CHECK(p.active().sequence == std::vector<std::uint64_t>{static_cast<std::uint64_t>(10 + p.id())});
    CHECK_FALSE(p.pending());
  }
}

TEST_CASE("seeded lossy rounds stay safe") {
  NetworkParams np;
  np.drop = 0.3;
  np.duplicate = 0.1;
  np.reorder = true;
  np.delay_max = 4;
  int settled = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto r = fixture::seeded_round(s, np);
    CHECK(r.report.agreement_violations == 0);
    CHECK(r.report.rollback_violations == 0);
    settled += r.report.settled && r.report.outcome != Outcome::Pending;
    for (std::size_t i = 0; i < r.participants.size(); ++i)
      CHECK(r.before[i] <= r.participants[i].active_version());
    if (r.report.outcome == Outcome::Finalized && r.report.settled)
      for (const auto& p : r.participants) {
        CHECK(p.active_version() == r.participants[0].active_version());
        const auto it = r.sequences.find(static_cast<std::uint16_t>(p.id()));
        CHECK(p.active().sequence == (it == r.sequences.end() ? std::vector<std::uint64_t>{} : it->second));
      }
  }
  CHECK(settled >= 198);
}

TEST_CASE("network: loopback is lossless and links are FIFO without reordering") {
  NetworkParams np;
  np.drop = 0.5;
  np.delay_min = 1;
  np.delay_max = 5;
  Network net(np, 3);
  for (std::uint32_t k = 0; k < 50; ++k) {
    Message m;
    m.kind = MsgKind::Beacon;
    m.version = {k, 0, 0};
    m.sender = 1;
    m.recipient = static_cast<std::uint16_t>(k % 2 ? 1 : 2);
    net.send(m, 0);
  }
  std::vector<std::uint32_t> loop, link;
  for (std::uint32_t t = 0; t < 20; ++t)
    for (const Message& m : net.deliver(t)) (m.recipient == 1 ? loop : link).push_back(m.version.counter);
  CHECK(loop.size() == 25);
  CHECK(std::is_sorted(link.begin(), link.end()));
  CHECK(link.size() < 25);
  CHECK(net.idle());
}

TEST_CASE("network fates depend only on the seed") {
  NetworkParams np;
  np.drop = 0.3;
  np.duplicate = 0.2;
  np.reorder = true;
  np.delay_max = 6;
  auto run = [&](std::uint64_t seed) {
    TraceLog log;
    Network net(np, seed, &log);
    for (std::uint32_t k = 0; k < 40; ++k) {
      Message m;
      m.kind = MsgKind::Proposal;
      m.version = {k, k, 0};
      m.sender = 0;
      m.recipient = static_cast<std::uint16_t>(1 + k % 3);
      net.send(m, k / 4);
      net.deliver(k / 4);
    }
    for (std::uint32_t t = 10; t < 30; ++t) net.deliver(t);
    return log.bytes();
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("traces read back entry by entry") {
  TraceLog log;
  log.add_text(TraceKind::Config, 0, "{}");
  Message m;
  m.kind = MsgKind::Ack;
  log.add(TraceKind::Send, 7, m.encode());
  const auto entries = read_trace(log.bytes());
  REQUIRE(entries.size() == 2);
  CHECK(entries[1].kind == TraceKind::Send);
  CHECK(entries[1].tick == 7);
  CHECK(Message::decode(entries[1].body) == m);
  CHECK_FALSE(describe(entries[1]).empty());
}
