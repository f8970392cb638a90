#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "q2opt/approximator.hpp"
#include "q2opt/grasp_sim.hpp"

namespace q2opt::io {

// ---------------------------------------------------------------------------
// Parameter snapshots: fixed header + flat little-endian float64 payload.
// Round trips are bit-exact.
// ---------------------------------------------------------------------------

inline constexpr char kSnapshotMagic[8] = {'Q', '2', 'P', 'A', 'R', 'A', 'M', '1'};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw std::runtime_error("snapshot: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

inline void save_snapshot(const std::string& path, const net::ParamSnapshot& snap) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("snapshot: cannot open '" + path + "' for write");
  os.write(kSnapshotMagic, 8);
  detail::put_u64(os, snap.version);
  detail::put_u64(os, snap.spec_hash);
  detail::put_u64(os, snap.values.size());
  for (double v : snap.values) detail::put_f64(os, v);
  if (!os) throw std::runtime_error("snapshot: write failed for '" + path + "'");
}

inline net::ParamSnapshot load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("snapshot: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kSnapshotMagic, 8) != 0)
    throw std::runtime_error("snapshot: bad magic in '" + path + "'");
  net::ParamSnapshot snap;
  snap.version = detail::get_u64(is);
  snap.spec_hash = detail::get_u64(is);
  const std::uint64_t n = detail::get_u64(is);
  snap.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) snap.values[i] = detail::get_f64(is);
  if (!is) throw std::runtime_error("snapshot: truncated payload in '" + path + "'");
  return snap;
}

// ---------------------------------------------------------------------------
// Episode datasets: newline-delimited JSON, one self-contained episode per
// line. Doubles use shortest round-trip-exact encoding, so
// generate -> parse -> re-serialize is byte-identical.
// ---------------------------------------------------------------------------

inline nlohmann::json episode_to_json(const sim::EpisodeRecord& ep) {
  nlohmann::json j;
  j["episode_id"] = ep.episode_id;
  j["seed"] = ep.seed;
  j["policy_id"] = ep.policy_id;
  j["success"] = ep.success;
  nlohmann::json trs = nlohmann::json::array();
  for (const auto& t : ep.transitions) {
    nlohmann::json jt;
    jt["state"] = t.state;
    jt["action"] = {{"cont", t.action_cont}, {"mode", t.action_mode}};
    jt["reward"] = t.reward;
    jt["next_state"] = t.next_state;
    jt["terminal"] = t.terminal;
    trs.push_back(std::move(jt));
  }
  j["transitions"] = std::move(trs);
  return j;
}

inline sim::EpisodeRecord episode_from_json(const nlohmann::json& j) {
  sim::EpisodeRecord ep;
  ep.episode_id = j.at("episode_id").get<std::int64_t>();
  ep.seed = j.at("seed").get<std::uint64_t>();
  ep.policy_id = j.at("policy_id").get<std::string>();
  ep.success = j.at("success").get<bool>();
  int idx = 0;
  for (const auto& jt : j.at("transitions")) {
    distrl::Transition t;
    t.state = jt.at("state").get<std::vector<double>>();
    const auto& ja = jt.at("action");
    const auto cont = ja.at("cont").get<std::vector<double>>();
    if (cont.size() != 4) throw std::runtime_error("episode: action cont must have 4 dims");
    std::copy(cont.begin(), cont.end(), t.action_cont.begin());
    t.action_mode = ja.at("mode").get<int>();
    t.reward = jt.at("reward").get<double>();
    t.next_state = jt.at("next_state").get<std::vector<double>>();
    t.terminal = jt.at("terminal").get<bool>();
    t.policy_id = ep.policy_id;
    t.episode_id = ep.episode_id;
    t.step_index = idx++;
    ep.transitions.push_back(std::move(t));
  }
  return ep;
}

class DatasetWriter {
 public:
  explicit DatasetWriter(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) throw std::runtime_error("dataset: cannot open '" + path + "' for write");
  }

  void write(const sim::EpisodeRecord& ep) {
    os_ << episode_to_json(ep).dump() << '\n';
    if (!os_) throw std::runtime_error("dataset: write failed");
  }

  void flush() { os_.flush(); }

 private:
  std::ofstream os_;
};

// Streams a JSONL dataset; rewind() allows multi-epoch cycling. Malformed
// lines report their 1-based line number.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path) : path_(path), is_(path) {
    if (!is_) throw std::runtime_error("dataset: cannot open '" + path + "'");
  }

  std::optional<sim::EpisodeRecord> next() {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      try {
        return episode_from_json(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw std::runtime_error("dataset: malformed record at " + path_ + ":" +
                                 std::to_string(line_no_) + ": " + e.what());
      }
    }
    return std::nullopt;
  }

  void rewind() {
    is_.clear();
    is_.seekg(0);
    line_no_ = 0;
  }

 private:
  std::string path_;
  std::ifstream is_;
  std::size_t line_no_ = 0;
};

inline std::vector<sim::EpisodeRecord> read_dataset(const std::string& path) {
  DatasetReader reader(path);
  std::vector<sim::EpisodeRecord> out;
  while (auto ep = reader.next()) out.push_back(std::move(*ep));
  return out;
}

}  // namespace q2opt::io
