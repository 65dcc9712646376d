#pragma once

#include "mrx/rng.hpp"
#include "mrx/task_registry.hpp"
#include "mrx/wire.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mrx {

/// Ordered by (counter, tick, host).
struct Version {
  std::uint32_t counter = 0;
  std::uint32_t tick = 0;
  std::uint16_t host = 0;

  auto key() const { return std::tuple(counter, tick, host); }
  bool operator==(const Version& o) const { return key() == o.key(); }
  bool operator!=(const Version& o) const { return !(*this == o); }
  bool operator<(const Version& o) const { return key() < o.key(); }
  bool operator<=(const Version& o) const { return !(o < *this); }
  bool operator>(const Version& o) const { return o < *this; }
  bool zero() const { return counter == 0 && tick == 0 && host == 0; }
  std::string str() const;
};

// BEACON is the periodic host heartbeat that repairs missed FINALIZE/CANCEL.
enum class MsgKind : std::uint8_t {
  Proposal = 0,
  Accept = 1,
  Reject = 2,
  Commit = 3,
  Ack = 4,
  Finalize = 5,
  Cancel = 6,
  Beacon = 7,
};
const char* to_string(MsgKind k);

struct Message {
  MsgKind kind = MsgKind::Proposal;
  Version version;
  std::uint16_t sender = 0;
  std::uint16_t recipient = 0;
  std::vector<std::uint8_t> payload;

  static constexpr std::size_t kHeaderSize = 19;
  std::vector<std::uint8_t> encode() const;
  static Message decode(std::span<const std::uint8_t> bytes);
  bool operator==(const Message&) const = default;
};

/// PROPOSAL body: the host's last finalized version, every agent's
/// sequence, and the unit records the recipient is not known to hold.
struct ProposalBody {
  Version finalized;
  std::map<std::uint16_t, std::vector<std::uint64_t>> sequences;
  std::vector<UnitRecord> records;

  std::vector<std::uint8_t> encode() const;
  static ProposalBody decode(std::span<const std::uint8_t> bytes);
};

enum class RejectReason : std::uint8_t { Stale = 0, TerminalUnit = 1, Malformed = 2, Busy = 3 };

struct RejectBody {
  RejectReason reason = RejectReason::Stale;
  Version active;  // newest version the participant holds, pending or active
  std::vector<std::uint8_t> encode() const;
  static RejectBody decode(std::span<const std::uint8_t> bytes);
};

struct BeaconBody {
  std::optional<Version> open;  // round in progress, if any
  std::vector<std::uint8_t> encode() const;
  static BeaconBody decode(std::span<const std::uint8_t> bytes);
};

// ---------------------------------------------------------------------------

struct NetworkParams {
  double drop = 0.0;
  double duplicate = 0.0;
  std::uint32_t delay_min = 1;
  std::uint32_t delay_max = 2;
  bool reorder = false;
};

enum class TraceKind : std::uint8_t {
  Send = 1,
  Deliver = 2,
  Drop = 3,
  Plan = 4,
  Config = 5,
  Outcome = 6,
};
const char* to_string(TraceKind k);

/// Append-only binary log: kind u8, tick u32, length u32, body.
class TraceLog {
 public:
  void add(TraceKind kind, std::uint32_t tick, std::span<const std::uint8_t> body);
  void add_text(TraceKind kind, std::uint32_t tick, const std::string& text);
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  void save(const std::string& path) const;

 private:
  std::vector<std::uint8_t> bytes_;
};

struct TraceEntry {
  TraceKind kind;
  std::uint32_t tick;
  std::vector<std::uint8_t> body;
};
std::vector<TraceEntry> read_trace(std::span<const std::uint8_t> bytes);
std::vector<TraceEntry> read_trace_file(const std::string& path);
/// One human-readable line per entry.
std::string describe(const TraceEntry& e);

/// Seeded lossy link layer. Each copy's fate (drop, delay) is drawn once at
/// send time. Without reordering, delivery per (sender, recipient) link is FIFO.
class Network {
 public:
  Network(NetworkParams params, std::uint64_t seed, TraceLog* trace = nullptr);

  void send(const Message& m, std::uint32_t now);
  /// Messages due at `now`, in (due tick, send order). `reachable` decides
  /// range at delivery time; unreachable copies are dropped.
  std::vector<Message> deliver(std::uint32_t now,
                               const std::function<bool(int, int)>& reachable = {});
  bool idle() const { return queue_.empty(); }

  std::uint64_t sent() const { return sent_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t bytes() const { return bytes_; }

 private:
  struct InFlight {
    std::uint32_t due;
    std::uint64_t seq;
    Message msg;
  };
  NetworkParams params_;
  Rng rng_;
  TraceLog* trace_;
  std::uint64_t seq_ = 0;
  std::deque<InFlight> queue_;
  std::map<std::pair<int, int>, std::uint32_t> link_tail_;
  std::uint64_t sent_ = 0, delivered_ = 0, dropped_ = 0, bytes_ = 0;
};

// ---------------------------------------------------------------------------

enum class Phase : std::uint8_t { Idle = 0, Proposed = 1, Committed = 2, Finalized = 3 };
const char* to_string(Phase p);

struct Assignment {
  Version version;
  std::vector<std::uint64_t> sequence;
  bool operator==(const Assignment&) const = default;
  std::vector<std::uint8_t> encode() const;
};

/// Per-agent side of the handshake.
class Participant {
 public:
  /// Returns true when the unit is locally known COMPLETED or INVALID.
  using TerminalCheck = std::function<bool(const UnitRecord&)>;

  explicit Participant(int id = 0) : id_(id) {}

  int id() const { return id_; }
  Phase phase() const { return phase_; }
  bool pending() const { return phase_ == Phase::Proposed || phase_ == Phase::Committed; }
  const Version& active_version() const { return active_.version; }
  const Assignment& active() const { return active_; }
  const std::optional<Assignment>& cache() const { return cache_; }
  const Version& pending_version() const { return pending_.version; }
  const std::optional<Assignment>& provisional() const { return provisional_; }
  /// Every agent's sequence of the active version.
  const std::map<std::uint16_t, std::vector<std::uint64_t>>& roster() const { return roster_; }
  const std::map<std::uint64_t, UnitRecord>& records() const { return records_; }
  std::map<std::uint64_t, UnitRecord>& mutable_records() { return records_; }
  std::uint32_t max_counter_seen() const { return max_counter_; }

  void set_terminal_check(TerminalCheck f) { terminal_ = std::move(f); }

  /// ACCEPT or REJECT for a proposal; on ACCEPT the current assignment is cached.
  MsgKind validate_proposal(const Message& proposal, const ProposalBody* body,
                            RejectReason* why = nullptr) const;

  /// Handles one delivered message; returns replies to send.
  std::vector<Message> on_message(const Message& m);

  /// Test hook: start from a given finalized assignment.
  void install(const Assignment& a);

  std::uint64_t finalized_count() const { return finalized_count_; }
  std::uint64_t rollback_count() const { return rollback_count_; }

 private:
  Message reply(const Message& to, MsgKind kind, std::vector<std::uint8_t> payload = {}) const;
  void finalize_pending();
  void rollback();
  std::vector<Message> handle_proposal(const Message& m);
  void remember(const Message& request, const Message& reply);
  const Message* recalled(const Message& request) const;

  int id_;
  Phase phase_ = Phase::Idle;
  Assignment active_;
  Assignment pending_;
  std::optional<Assignment> cache_;
  std::optional<Assignment> provisional_;
  std::map<std::uint16_t, std::vector<std::uint64_t>> roster_, pending_roster_;
  std::map<std::uint64_t, UnitRecord> records_;
  std::uint32_t max_counter_ = 0;
  TerminalCheck terminal_;
  // Replies keyed by (request kind, version) so duplicates get the same bytes.
  std::deque<std::pair<std::pair<MsgKind, Version>, Message>> replies_;
  std::uint64_t finalized_count_ = 0, rollback_count_ = 0;
};

enum class Outcome : std::uint8_t { Pending = 0, Finalized = 1, Cancelled = 2, TimedOut = 3 };
const char* to_string(Outcome o);

struct RetryPolicy {
  std::uint32_t base_timeout = 10;
  std::uint32_t factor = 2;
  std::uint32_t max_retries = 5;
};

/// Host side of one round: PROPOSAL until every ACCEPT, COMMIT until every
/// ACK, then FINALIZE. A REJECT or an exhausted retry budget sends CANCEL.
class HostRound {
 public:
  HostRound(std::uint16_t host, Version version, std::vector<std::uint16_t> participants,
            std::map<std::uint16_t, ProposalBody> bodies, RetryPolicy policy = {});

  std::vector<Message> start(std::uint32_t now);
  std::vector<Message> on_message(const Message& m, std::uint32_t now);
  std::vector<Message> on_tick(std::uint32_t now);
  /// Cancels the round as a timeout (e.g. a participant left range).
  std::vector<Message> abort(std::uint32_t now);

  bool done() const { return outcome_ != Outcome::Pending; }
  Outcome outcome() const { return outcome_; }
  const Version& version() const { return version_; }
  const std::vector<std::uint16_t>& participants() const { return participants_; }
  /// Highest active counter reported by a rejecting participant.
  std::uint32_t reported_counter() const { return reported_counter_; }
  /// Participants that accepted, with the records they were sent.
  const std::map<std::uint16_t, ProposalBody>& bodies() const { return bodies_; }
  const std::vector<std::uint16_t>& accepted() const { return accepted_; }
  std::uint32_t retries() const { return retries_; }

 private:
  enum class Stage { Proposing, Committing, Closed };
  Message make(MsgKind kind, std::uint16_t to) const;
  std::vector<Message> broadcast(MsgKind kind, const std::vector<std::uint16_t>& to) const;
  std::vector<Message> close(Outcome o);

  std::uint16_t host_;
  Version version_;
  std::vector<std::uint16_t> participants_;
  std::map<std::uint16_t, ProposalBody> bodies_;
  RetryPolicy policy_;
  Stage stage_ = Stage::Proposing;
  Outcome outcome_ = Outcome::Pending;
  std::vector<std::uint16_t> waiting_;
  std::vector<std::uint16_t> accepted_;
  std::uint32_t deadline_ = 0, timeout_ = 0, retries_ = 0;
  std::uint32_t reported_counter_ = 0;
};

/// Connected components of the range graph (union-find); each component's
/// host is its smallest id. Returns host per agent index.
std::vector<int> elect_host(const std::vector<Vec3>& positions, const std::vector<int>& ids,
                            double r_comm);
/// Component label per agent index (labels are the component's host id).
std::vector<std::vector<int>> components(const std::vector<Vec3>& positions,
                                         const std::vector<int>& ids, double r_comm);

/// Header version is the host's last finalized version.
Message make_beacon(std::uint16_t host, const Version& finalized, std::optional<Version> open,
                    std::uint16_t to);

struct RoundReport {
  Outcome outcome = Outcome::Pending;
  std::uint32_t ticks = 0;         // until the host closed the round
  std::uint32_t settle_ticks = 0;  // until every participant left its pending phase
  std::size_t agreement_violations = 0;
  std::size_t rollback_violations = 0;
  bool settled = false;
};

/// Runs one round to completion over `net` with every agent in range, then
/// keeps beaconing until no participant is pending (or `max_ticks`).
/// participants[i] must have id ids[i]; the host is the smallest id.
RoundReport run_round(std::vector<Participant>& participants, Network& net,
                      const std::map<std::uint16_t, std::vector<std::uint64_t>>& sequences,
                      const std::vector<UnitRecord>& records, std::uint32_t start_tick,
                      std::uint32_t max_ticks = 2000, RetryPolicy policy = {},
                      std::uint32_t beacon_period = 10);

}  // namespace mrx
