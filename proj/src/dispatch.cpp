#include "mrx/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace mrx {

std::string Version::str() const {
  std::ostringstream s;
  s << '(' << counter << ',' << tick << ',' << host << ')';
  return s.str();
}

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::Proposal: return "PROPOSAL";
    case MsgKind::Accept: return "ACCEPT";
    case MsgKind::Reject: return "REJECT";
    case MsgKind::Commit: return "COMMIT";
    case MsgKind::Ack: return "ACK";
    case MsgKind::Finalize: return "FINALIZE";
    case MsgKind::Cancel: return "CANCEL";
    case MsgKind::Beacon: return "BEACON";
  }
  return "?";
}

const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Send: return "SEND";
    case TraceKind::Deliver: return "DELIVER";
    case TraceKind::Drop: return "DROP";
    case TraceKind::Plan: return "PLAN";
    case TraceKind::Config: return "CONFIG";
    case TraceKind::Outcome: return "OUTCOME";
  }
  return "?";
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Proposed: return "proposed";
    case Phase::Committed: return "committed";
    case Phase::Finalized: return "finalized";
  }
  return "?";
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Pending: return "pending";
    case Outcome::Finalized: return "finalized";
    case Outcome::Cancelled: return "cancelled";
    case Outcome::TimedOut: return "timed_out";
  }
  return "?";
}

namespace {

void put_version(ByteWriter& w, const Version& v) {
  w.u32(v.counter);
  w.u32(v.tick);
  w.u16(v.host);
}

Version get_version(ByteReader& r) {
  Version v;
  v.counter = r.u32();
  v.tick = r.u32();
  v.host = r.u16();
  return v;
}

void require_done(const ByteReader& r) {
  if (!r.done()) throw DecodeError("trailing bytes in payload");
}

}  // namespace

std::vector<std::uint8_t> Message::encode() const {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + payload.size());
  ByteWriter w(out);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u16(version.host);
  w.u32(version.counter);
  w.u32(version.tick);
  w.u16(sender);
  w.u16(recipient);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return out;
}

Message Message::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Message m;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(MsgKind::Beacon)) throw DecodeError("bad message kind");
  m.kind = static_cast<MsgKind>(kind);
  m.version.host = r.u16();
  m.version.counter = r.u32();
  m.version.tick = r.u32();
  m.sender = r.u16();
  m.recipient = r.u16();
  const std::uint32_t n = r.u32();
  const auto body = r.bytes(n);
  m.payload.assign(body.begin(), body.end());
  require_done(r);
  return m;
}

std::vector<std::uint8_t> ProposalBody::encode() const {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  put_version(w, finalized);
  w.u32(static_cast<std::uint32_t>(sequences.size()));
  for (const auto& [agent, seq] : sequences) {
    w.u16(agent);
    w.u32(static_cast<std::uint32_t>(seq.size()));
    for (std::uint64_t id : seq) w.u64(id);
  }
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) r.encode(w);
  return out;
}

ProposalBody ProposalBody::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  ProposalBody b;
  b.finalized = get_version(r);
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint16_t agent = r.u16();
    const std::uint32_t len = r.u32();
    if (len > r.remaining() / 8) throw DecodeError("sequence longer than payload");
    auto& seq = b.sequences[agent];
    seq.resize(len);
    for (auto& id : seq) id = r.u64();
  }
  const std::uint32_t m = r.u32();
  if (m > r.remaining()) throw DecodeError("record count exceeds payload");
  for (std::uint32_t i = 0; i < m; ++i) b.records.push_back(UnitRecord::decode(r));
  require_done(r);
  return b;
}

std::vector<std::uint8_t> RejectBody::encode() const {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.u8(static_cast<std::uint8_t>(reason));
  put_version(w, active);
  return out;
}

RejectBody RejectBody::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  RejectBody b;
  const std::uint8_t reason = r.u8();
  if (reason > static_cast<std::uint8_t>(RejectReason::Busy)) throw DecodeError("bad reject reason");
  b.reason = static_cast<RejectReason>(reason);
  b.active = get_version(r);
  require_done(r);
  return b;
}

std::vector<std::uint8_t> BeaconBody::encode() const {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.u8(open ? 1 : 0);
  if (open) put_version(w, *open);
  return out;
}

BeaconBody BeaconBody::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  BeaconBody b;
  const std::uint8_t flag = r.u8();
  if (flag > 1) throw DecodeError("bad beacon flag");
  if (flag) b.open = get_version(r);
  require_done(r);
  return b;
}

std::vector<std::uint8_t> Assignment::encode() const {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  put_version(w, version);
  w.u32(static_cast<std::uint32_t>(sequence.size()));
  for (std::uint64_t id : sequence) w.u64(id);
  return out;
}

// ---------------------------------------------------------------------------

void TraceLog::add(TraceKind kind, std::uint32_t tick, std::span<const std::uint8_t> body) {
  ByteWriter w(bytes_);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(tick);
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.bytes(body);
}

void TraceLog::add_text(TraceKind kind, std::uint32_t tick, const std::string& text) {
  add(kind, tick,
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {
constexpr std::uint8_t kTraceMagic[4] = {'M', 'R', 'X', 'T'};
constexpr std::uint32_t kTraceFormat = 1;
}  // namespace

void TraceLog::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace: " + path);
  std::vector<std::uint8_t> head;
  ByteWriter w(head);
  w.bytes(kTraceMagic);
  w.u32(kTraceFormat);
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
}

std::vector<TraceEntry> read_trace(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::vector<TraceEntry> out;
  while (!r.done()) {
    TraceEntry e;
    const std::uint8_t k = r.u8();
    if (k < 1 || k > 6) throw DecodeError("bad trace entry kind");
    e.kind = static_cast<TraceKind>(k);
    e.tick = r.u32();
    const auto body = r.bytes(r.u32());
    e.body.assign(body.begin(), body.end());
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<TraceEntry> read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace: " + path);
  std::vector<std::uint8_t> all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (all.size() < 8 || !std::equal(all.begin(), all.begin() + 4, kTraceMagic))
    throw DecodeError("not a trace file");
  ByteReader head(std::span<const std::uint8_t>(all).subspan(4, 4));
  if (head.u32() != kTraceFormat) throw DecodeError("unsupported trace format");
  return read_trace(std::span<const std::uint8_t>(all).subspan(8));
}

std::string describe(const TraceEntry& e) {
  std::ostringstream s;
  s << e.tick << ' ' << to_string(e.kind) << ' ';
  switch (e.kind) {
    case TraceKind::Send:
    case TraceKind::Deliver:
    case TraceKind::Drop: {
      const Message m = Message::decode(e.body);
      s << to_string(m.kind) << ' ' << m.version.str() << ' ' << m.sender << "->" << m.recipient
        << " payload " << m.payload.size();
      break;
    }
    default:
      s << std::string(e.body.begin(), e.body.end());
  }
  return s.str();
}

// ---------------------------------------------------------------------------

Network::Network(NetworkParams params, std::uint64_t seed, TraceLog* trace)
    : params_(params), rng_(seed), trace_(trace) {
  if (params_.delay_max < params_.delay_min) std::swap(params_.delay_min, params_.delay_max);
}

void Network::send(const Message& m, std::uint32_t now) {
  const auto bytes = m.encode();
  ++sent_;
  bytes_ += bytes.size();
  if (trace_) trace_->add(TraceKind::Send, now, bytes);
  const bool loopback = m.sender == m.recipient;
  const int copies = (!loopback && rng_.chance(params_.duplicate)) ? 2 : 1;
  for (int c = 0; c < copies; ++c) {
    if (!loopback && rng_.chance(params_.drop)) {
      ++dropped_;
      if (trace_) trace_->add(TraceKind::Drop, now, bytes);
      continue;
    }
    std::uint32_t due = now + params_.delay_min;
    if (params_.delay_max > params_.delay_min)
      due += static_cast<std::uint32_t>(rng_.range(0, params_.delay_max - params_.delay_min));
    if (!params_.reorder) {
      auto& tail = link_tail_[{m.sender, m.recipient}];
      due = std::max(due, tail);
      tail = due;
    }
    queue_.push_back({due, seq_++, m});
  }
}

std::vector<Message> Network::deliver(std::uint32_t now,
                                      const std::function<bool(int, int)>& reachable) {
  std::vector<InFlight> due;
  std::deque<InFlight> keep;
  for (auto& f : queue_) {
    if (f.due <= now) due.push_back(std::move(f));
    else keep.push_back(std::move(f));
  }
  queue_ = std::move(keep);
  std::sort(due.begin(), due.end(), [](const InFlight& a, const InFlight& b) {
    return std::tie(a.due, a.seq) < std::tie(b.due, b.seq);
  });
  std::vector<Message> out;
  for (auto& f : due) {
    const bool ok = !reachable || f.msg.sender == f.msg.recipient ||
                    reachable(f.msg.sender, f.msg.recipient);
    if (trace_) trace_->add(ok ? TraceKind::Deliver : TraceKind::Drop, now, f.msg.encode());
    if (!ok) {
      ++dropped_;
      continue;
    }
    ++delivered_;
    out.push_back(std::move(f.msg));
  }
  return out;
}

// ---------------------------------------------------------------------------

void Participant::install(const Assignment& a) {
  active_ = a;
  phase_ = a.version.zero() ? Phase::Idle : Phase::Finalized;
  cache_.reset();
  provisional_.reset();
  max_counter_ = std::max(max_counter_, a.version.counter);
}

Message Participant::reply(const Message& to, MsgKind kind, std::vector<std::uint8_t> payload) const {
  Message m;
  m.kind = kind;
  m.version = to.version;
  m.sender = static_cast<std::uint16_t>(id_);
  m.recipient = to.sender;
  m.payload = std::move(payload);
  return m;
}

void Participant::remember(const Message& request, const Message& reply) {
  replies_.emplace_back(std::pair{request.kind, request.version}, reply);
  while (replies_.size() > 16) replies_.pop_front();
}

const Message* Participant::recalled(const Message& request) const {
  for (auto it = replies_.rbegin(); it != replies_.rend(); ++it)
    if (it->first.first == request.kind && it->first.second == request.version) return &it->second;
  return nullptr;
}

void Participant::finalize_pending() {
  active_ = provisional_ ? *provisional_ : pending_;
  roster_ = pending_roster_;
  phase_ = Phase::Finalized;
  cache_.reset();
  provisional_.reset();
  ++finalized_count_;
}

void Participant::rollback() {
  // The active assignment was never touched, so it already equals the cache.
  if (cache_) active_ = *cache_;
  phase_ = active_.version.zero() ? Phase::Idle : Phase::Finalized;
  cache_.reset();
  provisional_.reset();
  ++rollback_count_;
}

MsgKind Participant::validate_proposal(const Message& proposal, const ProposalBody* body,
                                       RejectReason* why) const {
  auto reject = [&](RejectReason r) {
    if (why) *why = r;
    return MsgKind::Reject;
  };
  if (body == nullptr) return reject(RejectReason::Malformed);
  if (proposal.version <= active_.version) return reject(RejectReason::Stale);
  if (pending() && proposal.version < pending_.version) return reject(RejectReason::Busy);
  auto it = body->sequences.find(static_cast<std::uint16_t>(id_));
  if (it == body->sequences.end()) return MsgKind::Accept;
  for (std::uint64_t unit : it->second) {
    const UnitRecord* rec = nullptr;
    for (const auto& r : body->records)
      if (r.id == unit) rec = &r;
    if (!rec) {
      auto known = records_.find(unit);
      if (known == records_.end()) return reject(RejectReason::Malformed);
      rec = &known->second;
    }
    if (terminal(rec->status)) return reject(RejectReason::TerminalUnit);
    if (terminal_ && terminal_(*rec)) return reject(RejectReason::TerminalUnit);
  }
  return MsgKind::Accept;
}

std::vector<Message> Participant::handle_proposal(const Message& m) {
  if (const Message* again = recalled(m)) return {*again};
  std::optional<ProposalBody> body;
  try {
    body = ProposalBody::decode(m.payload);
  } catch (const DecodeError&) {
    body.reset();
  }
  max_counter_ = std::max(max_counter_, m.version.counter);

  if (body && pending()) {
    const bool same_host = pending_.version.host == m.version.host;
    if (same_host && body->finalized == pending_.version && phase_ == Phase::Committed)
      finalize_pending();  // the FINALIZE was lost; the host says it happened
    else if (same_host && pending_.version != m.version)
      rollback();  // that host has moved on, so its older round ended
    else if (m.version > pending_.version)
      rollback();  // superseded by a newer round from another host
  }

  RejectReason why = RejectReason::Stale;
  const MsgKind verdict = validate_proposal(m, body ? &*body : nullptr, &why);
  Message out;
  if (verdict == MsgKind::Accept) {
    cache_ = active_;
    pending_.version = m.version;
    auto it = body->sequences.find(static_cast<std::uint16_t>(id_));
    pending_.sequence = it == body->sequences.end() ? std::vector<std::uint64_t>{} : it->second;
    pending_roster_ = body->sequences;
    provisional_.reset();
    phase_ = Phase::Proposed;
    for (const auto& r : body->records) records_.insert_or_assign(r.id, r);
    out = reply(m, MsgKind::Accept);
  } else {
    // report the newest version held so the host numbers its retry past it
    const Version held = pending() ? std::max(active_.version, pending_.version) : active_.version;
    out = reply(m, MsgKind::Reject, RejectBody{why, held}.encode());
  }
  remember(m, out);
  return {out};
}

std::vector<Message> Participant::on_message(const Message& m) {
  if (m.recipient != id_) return {};
  switch (m.kind) {
    case MsgKind::Proposal:
      return handle_proposal(m);
    case MsgKind::Commit: {
      if (pending() && pending_.version == m.version) {
        if (phase_ == Phase::Proposed) {
          provisional_ = pending_;
          phase_ = Phase::Committed;
        }
      } else if (active_.version != m.version) {
        return {};
      }
      if (const Message* again = recalled(m)) return {*again};
      Message out = reply(m, MsgKind::Ack);
      remember(m, out);
      return {out};
    }
    case MsgKind::Finalize:
      if (pending() && pending_.version == m.version && phase_ == Phase::Committed)
        finalize_pending();
      return {};
    case MsgKind::Cancel:
      if (pending() && pending_.version == m.version) rollback();
      return {};
    case MsgKind::Beacon: {
      max_counter_ = std::max(max_counter_, m.version.counter);
      if (!pending() || pending_.version.host != m.sender) return {};
      BeaconBody b;
      try {
        b = BeaconBody::decode(m.payload);
      } catch (const DecodeError&) {
        return {};
      }
      if (m.version == pending_.version && phase_ == Phase::Committed) finalize_pending();
      else if (!(b.open && *b.open == pending_.version) && m.version != pending_.version) rollback();
      return {};
    }
    default:
      return {};
  }
}

// ---------------------------------------------------------------------------

HostRound::HostRound(std::uint16_t host, Version version, std::vector<std::uint16_t> participants,
                     std::map<std::uint16_t, ProposalBody> bodies, RetryPolicy policy)
    : host_(host),
      version_(version),
      participants_(std::move(participants)),
      bodies_(std::move(bodies)),
      policy_(policy) {
  std::sort(participants_.begin(), participants_.end());
  participants_.erase(std::unique(participants_.begin(), participants_.end()), participants_.end());
}

Message HostRound::make(MsgKind kind, std::uint16_t to) const {
  Message m;
  m.kind = kind;
  m.version = version_;
  m.sender = host_;
  m.recipient = to;
  if (kind == MsgKind::Proposal) {
    auto it = bodies_.find(to);
    if (it != bodies_.end()) m.payload = it->second.encode();
  }
  return m;
}

std::vector<Message> HostRound::broadcast(MsgKind kind, const std::vector<std::uint16_t>& to) const {
  std::vector<Message> out;
  for (std::uint16_t p : to) out.push_back(make(kind, p));
  return out;
}

std::vector<Message> HostRound::start(std::uint32_t now) {
  waiting_ = participants_;
  timeout_ = policy_.base_timeout;
  deadline_ = now + timeout_;
  return broadcast(MsgKind::Proposal, participants_);
}

std::vector<Message> HostRound::close(Outcome o) {
  outcome_ = o;
  stage_ = Stage::Closed;
  waiting_.clear();
  return broadcast(o == Outcome::Finalized ? MsgKind::Finalize : MsgKind::Cancel, participants_);
}

std::vector<Message> HostRound::on_message(const Message& m, std::uint32_t now) {
  if (done() || m.version != version_ || m.recipient != host_) return {};
  auto it = std::find(waiting_.begin(), waiting_.end(), m.sender);
  if (stage_ == Stage::Proposing) {
    if (m.kind == MsgKind::Reject) {
      try {
        reported_counter_ = std::max(reported_counter_, RejectBody::decode(m.payload).active.counter);
      } catch (const DecodeError&) {
      }
      return close(Outcome::Cancelled);
    }
    if (m.kind != MsgKind::Accept || it == waiting_.end()) return {};
    waiting_.erase(it);
    accepted_.push_back(m.sender);
    if (!waiting_.empty()) return {};
    stage_ = Stage::Committing;
    waiting_ = participants_;
    timeout_ = policy_.base_timeout;
    deadline_ = now + timeout_;
    retries_ = 0;
    return broadcast(MsgKind::Commit, participants_);
  }
  if (stage_ == Stage::Committing) {
    if (m.kind != MsgKind::Ack || it == waiting_.end()) return {};
    waiting_.erase(it);
    if (waiting_.empty()) return close(Outcome::Finalized);
  }
  return {};
}

std::vector<Message> HostRound::on_tick(std::uint32_t now) {
  if (done() || now < deadline_) return {};
  if (retries_ >= policy_.max_retries) return close(Outcome::TimedOut);
  ++retries_;
  timeout_ *= policy_.factor;
  deadline_ = now + timeout_;
  return broadcast(stage_ == Stage::Proposing ? MsgKind::Proposal : MsgKind::Commit, waiting_);
}

std::vector<Message> HostRound::abort(std::uint32_t) {
  if (done()) return {};
  return close(Outcome::TimedOut);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<int>> components(const std::vector<Vec3>& positions,
                                         const std::vector<int>& ids, double r_comm) {
  const std::size_t n = positions.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((positions[i] - positions[j]).norm() <= r_comm) parent[find(i)] = find(j);
  std::map<std::size_t, std::vector<int>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  // Order components by their host id for a stable iteration order.
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    auto lo = [&](const std::vector<int>& g) {
      int m = ids[static_cast<std::size_t>(g[0])];
      for (int i : g) m = std::min(m, ids[static_cast<std::size_t>(i)]);
      return m;
    };
    return lo(a) < lo(b);
  });
  return out;
}

std::vector<int> elect_host(const std::vector<Vec3>& positions, const std::vector<int>& ids,
                            double r_comm) {
  std::vector<int> host(positions.size(), -1);
  for (const auto& group : components(positions, ids, r_comm)) {
    int h = ids[static_cast<std::size_t>(group[0])];
    for (int i : group) h = std::min(h, ids[static_cast<std::size_t>(i)]);
    for (int i : group) host[static_cast<std::size_t>(i)] = h;
  }
  return host;
}

Message make_beacon(std::uint16_t host, const Version& finalized, std::optional<Version> open,
                    std::uint16_t to) {
  Message m;
  m.kind = MsgKind::Beacon;
  m.version = finalized;
  m.sender = host;
  m.recipient = to;
  m.payload = BeaconBody{open}.encode();
  return m;
}

RoundReport run_round(std::vector<Participant>& participants, Network& net,
                      const std::map<std::uint16_t, std::vector<std::uint64_t>>& sequences,
                      const std::vector<UnitRecord>& records, std::uint32_t start_tick,
                      std::uint32_t max_ticks, RetryPolicy policy, std::uint32_t beacon_period) {
  RoundReport rep;
  if (participants.empty()) return rep;
  std::map<std::uint16_t, Participant*> by_id;
  std::vector<std::uint16_t> ids;
  for (auto& p : participants) {
    by_id[static_cast<std::uint16_t>(p.id())] = &p;
    ids.push_back(static_cast<std::uint16_t>(p.id()));
  }
  const std::uint16_t host = *std::min_element(ids.begin(), ids.end());
  Participant& self = *by_id[host];
  std::map<std::uint16_t, std::vector<std::uint8_t>> before;
  for (auto& p : participants) before[static_cast<std::uint16_t>(p.id())] = p.active().encode();

  Version v{self.max_counter_seen() + 1, start_tick, host};
  std::map<std::uint16_t, ProposalBody> bodies;
  for (std::uint16_t id : ids) bodies[id] = ProposalBody{self.active_version(), sequences, records};
  HostRound round(host, v, ids, bodies, policy);
  // Beacons carry the host's last finalized version, not what the host's own
  // participant holds, which may still be an uncommitted proposal.
  const Version prior = self.active_version();
  auto finalized = [&] { return round.outcome() == Outcome::Finalized ? v : prior; };

  auto route = [&](const std::vector<Message>& msgs, std::uint32_t now) {
    for (const Message& m : msgs) net.send(m, now);
  };
  route(round.start(start_tick), start_tick);
  std::uint32_t t = start_tick;
  for (; t < start_tick + max_ticks; ++t) {
    for (const Message& m : net.deliver(t)) {
      const bool to_host_round = m.recipient == host &&
                                 (m.kind == MsgKind::Accept || m.kind == MsgKind::Reject ||
                                  m.kind == MsgKind::Ack);
      if (to_host_round) route(round.on_message(m, t), t);
      else if (auto it = by_id.find(m.recipient); it != by_id.end())
        route(it->second->on_message(m), t);
    }
    route(round.on_tick(t), t);
    if (round.done() && rep.ticks == 0) rep.ticks = t - start_tick;
    if (round.done() && (t - start_tick) % beacon_period == 0) {
      for (std::uint16_t id : ids) net.send(make_beacon(host, finalized(), std::nullopt, id), t);
    } else if (!round.done() && (t - start_tick) % beacon_period == 0 && t > start_tick) {
      for (std::uint16_t id : ids) net.send(make_beacon(host, finalized(), v, id), t);
    }

    // Agreement: participants outside a pending phase share one version.
    std::optional<Version> seen;
    for (auto& p : participants) {
      if (p.pending()) continue;
      if (seen && *seen != p.active_version()) {
        ++rep.agreement_violations;
        break;
      }
      seen = p.active_version();
    }
    const bool any_pending =
        std::any_of(participants.begin(), participants.end(), [](const Participant& p) { return p.pending(); });
    if (round.done() && !any_pending) {
      rep.settled = true;
      break;
    }
  }
  rep.outcome = round.outcome();
  rep.settle_ticks = t - start_tick;
  if (rep.outcome != Outcome::Finalized)
    for (auto& p : participants)
      if (p.active().encode() != before[static_cast<std::uint16_t>(p.id())]) ++rep.rollback_violations;
  return rep;
}

}  // namespace mrx
