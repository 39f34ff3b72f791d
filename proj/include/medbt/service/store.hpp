#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>

#include "medbt/corpus.hpp"
#include "medbt/service/session.hpp"

namespace medbt::service {

namespace fs = std::filesystem;

struct Protocol {
  std::string name;
  std::string dsl;
  BehaviorTree tree;
  /// "corpus" or "uploaded".
  std::string origin;
  std::string figure;
};

inline bool is_valid_name(std::string_view s)
{
  return !s.empty() && s.size() <= 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
         }) && s.front() != '.';
}

/// Protocols from the corpus plus uploads. Uploads are written to
/// `<data_dir>/protocols/<name>.bt` and reloaded on start.
class ProtocolRegistry {
 public:
  explicit ProtocolRegistry(std::optional<fs::path> data_dir = std::nullopt) : data_dir_(std::move(data_dir))
  {
    if (!data_dir_) return;
    const fs::path dir = *data_dir_ / "protocols";
    if (!fs::exists(dir)) return;
    for (const auto& f : fs::directory_iterator(dir)) {
      if (f.path().extension() != ".bt") continue;
      insert(f.path().stem().string(), sim::read_file(f.path()), "uploaded", {});
    }
  }

  void load_corpus(const fs::path& corpus_dir)
  {
    const auto c = corpus::load_corpus(corpus_dir);
    for (const auto& e : c.entries) insert(e.name, sim::read_file(e.dsl_path), "corpus", e.figure);
  }

  /// Parses and stores an uploaded protocol. Names are unique.
  const Protocol& upload(const std::string& name, const std::string& dsl_text)
  {
    if (!is_valid_name(name)) throw BadRequest("protocol name must be letters, digits, '_', '-' or '.'");
    {
      std::shared_lock lock(mutex_);
      if (protocols_.count(name) != 0) throw Conflict("protocol '" + name + "' already exists");
    }
    const Protocol& p = insert(name, dsl_text, "uploaded", {});
    if (data_dir_) {
      fs::create_directories(*data_dir_ / "protocols");
      std::ofstream(*data_dir_ / "protocols" / (name + ".bt"), std::ios::binary) << dsl_text;
    }
    return p;
  }

  Protocol get(std::string_view name) const
  {
    std::shared_lock lock(mutex_);
    auto it = protocols_.find(name);
    if (it == protocols_.end()) throw NotFound("no protocol named '" + std::string(name) + "'");
    return *it->second;
  }

  std::vector<Protocol> list() const
  {
    std::shared_lock lock(mutex_);
    std::vector<Protocol> out;
    for (const auto& [name, p] : protocols_) out.push_back(*p);
    return out;
  }

 private:
  const Protocol& insert(const std::string& name, const std::string& text, std::string origin, std::string figure)
  {
    auto parsed = dsl::parse(text);
    if (!parsed.ok()) throw BadRequest("protocol '" + name + "' does not parse:\n" + parsed.format_diagnostics());
    auto p = std::make_shared<Protocol>(Protocol{name, text, std::move(*parsed.tree), std::move(origin), std::move(figure)});
    std::unique_lock lock(mutex_);
    auto [it, inserted] = protocols_.emplace(name, std::move(p));
    if (!inserted) throw Conflict("protocol '" + name + "' already exists");
    return *it->second;
  }

  std::optional<fs::path> data_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const Protocol>, std::less<>> protocols_;
};

/// Parameters of a new session.
struct SessionRequest {
  std::string protocol;
  Blackboard blackboard;
  std::uint64_t seed = 0;
  Interactive interactive = Interactive::Queries;
  LeafBindingSet overrides;
};

/// Live sessions, one mutex each. With a data directory every session has
/// an append-only log `<data_dir>/sessions/<id>.jsonl`, and existing logs
/// are replayed on construction.
class SessionStore {
 public:
  explicit SessionStore(std::optional<fs::path> data_dir = std::nullopt, std::uint64_t id_seed = std::random_device{}())
      : data_dir_(std::move(data_dir)), id_rng_(id_seed)
  {
    if (!data_dir_) return;
    fs::create_directories(*data_dir_ / "sessions");
    for (const auto& f : fs::directory_iterator(*data_dir_ / "sessions")) {
      if (f.path().extension() != ".jsonl") continue;
      const std::string id = f.path().stem().string();
      slots_.emplace(id, std::make_shared<Slot>(Session::replay(id, read_log(f.path()))));
    }
  }

  std::string create(const Protocol& protocol, const SessionRequest& req)
  {
    LeafBindingSet bindings = interactive_bindings(protocol.tree, req.interactive, req.overrides);
    const std::string id = new_id();
    Session s = Session::create(id, protocol.name, protocol.tree, std::move(bindings), req.blackboard, req.seed);
    persist(s, 0);
    std::unique_lock lock(mutex_);
    slots_.emplace(id, std::make_shared<Slot>(std::move(s)));
    return id;
  }

  /// Runs `fn` with the session locked. Events it appends are persisted
  /// before the lock is released.
  template <typename Fn>
  auto mutate(std::string_view id, Fn&& fn)
  {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    const std::size_t before = slot->session.version();
    if constexpr (std::is_void_v<decltype(fn(slot->session))>) {
      fn(slot->session);
      persist(slot->session, before);
    } else {
      auto result = fn(slot->session);
      persist(slot->session, before);
      return result;
    }
  }

  /// Consistent copy of a session.
  Session snapshot(std::string_view id) const
  {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    return slot->session;
  }

  std::string fork(std::string_view id)
  {
    Session copy = snapshot(id);
    const std::string new_id_ = new_id();
    Session forked = copy.fork(new_id_);
    persist(forked, 0);
    std::unique_lock lock(mutex_);
    slots_.emplace(new_id_, std::make_shared<Slot>(std::move(forked)));
    return new_id_;
  }

  std::vector<std::string> ids() const
  {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : slots_) out.push_back(id);
    return out;
  }

  /// Rebuilds a session from its persisted log (or the in-memory log when
  /// the store has no data directory).
  Session replay(std::string_view id) const
  {
    if (data_dir_) return Session::replay(std::string(id), read_log(log_path(id)));
    const Session s = snapshot(id);
    return Session::replay(s.id(), s.log());
  }

  const std::optional<fs::path>& data_dir() const noexcept { return data_dir_; }

 private:
  struct Slot {
    explicit Slot(Session s) : session(std::move(s)) {}
    std::mutex mutex;
    Session session;
  };

  std::shared_ptr<Slot> find(std::string_view id) const
  {
    std::shared_lock lock(mutex_);
    auto it = slots_.find(id);
    if (it == slots_.end()) throw NotFound("no session with id '" + std::string(id) + "'");
    return it->second;
  }

  std::string new_id()
  {
    std::lock_guard lock(id_mutex_);
    static constexpr char kHex[] = "0123456789abcdef";
    for (;;) {
      std::string id;
      std::uint64_t x = id_rng_();
      for (int i = 0; i < 16; ++i, x >>= 4) id += kHex[x & 0xf];
      std::shared_lock lock2(mutex_);
      if (slots_.count(id) == 0) return id;
    }
  }

  fs::path log_path(std::string_view id) const { return *data_dir_ / "sessions" / (std::string(id) + ".jsonl"); }

  void persist(const Session& s, std::size_t from) const
  {
    if (!data_dir_) return;
    std::ofstream out(log_path(s.id()), std::ios::binary | std::ios::app);
    for (std::size_t i = from; i < s.log().size(); ++i) out << s.log()[i].dump() << '\n';
    out.flush();
    if (!out) throw Error("cannot write session log for " + s.id());
  }

  static std::vector<nlohmann::json> read_log(const fs::path& p)
  {
    std::vector<nlohmann::json> out;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw NotFound("no session log " + p.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    }
    return out;
  }

  std::optional<fs::path> data_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>, std::less<>> slots_;
  std::mutex id_mutex_;
  std::mt19937_64 id_rng_;
};

}  // namespace medbt::service
