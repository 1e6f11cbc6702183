#pragma once

// Shared fixtures and generators for the unit and acceptance suites.

#include <unistd.h>

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "catalog/catalog.hpp"
#include "catalog/model.hpp"
#include "catalog/store.hpp"

namespace catalog::testing {

inline const SiteId BNL{"BNL", 1};
inline const SiteId SBU{"SBU", 2};
inline const SiteId VU{"VU", 3};

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "catalog") {
    std::string tmpl = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Deterministic logical clock so encodings are reproducible across runs.
struct FakeClock {
  std::int64_t now = 1'000'000;
  std::function<Timestamp()> fn() {
    return [this] { return Timestamp{now += 1000}; };
  }
};

inline FileRecord file(const std::string& lfn, const std::string& host, const std::string& path,
                       const SiteId& origin, StorageClass storage = StorageClass::Disk,
                       const std::string& production = "", std::uint64_t size = 0) {
  FileRecord r;
  r.lfn = validate_lfn(lfn);
  r.host = host;
  r.path = path;
  r.storage = storage;
  r.production = production;
  r.size_bytes = size;
  r.created_at = Timestamp{1'700'000'000'000'000};
  r.origin = origin;
  return r;
}

inline std::string random_token(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len,
                                std::string_view alphabet = "abcdefghijklmnopqrstuvwxyz0123456789") {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(len(rng), ' ');
  for (auto& c : s) c = alphabet[pick(rng)];
  return s;
}

inline FileRecord random_file(std::mt19937_64& rng, const SiteId& origin) {
  static constexpr std::string_view kLfn = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789._-";
  FileRecord r;
  r.lfn = validate_lfn(random_token(rng, 1, 40, kLfn));
  r.host = random_token(rng, 1, 12);
  r.path = "/" + random_token(rng, 0, 30, "abcdefghij/_.0123456789");
  r.storage = rng() % 2 ? StorageClass::Disk : StorageClass::Tape;
  r.production = random_token(rng, 0, 8);
  r.size_bytes = rng();
  r.created_at = Timestamp{static_cast<std::int64_t>(rng())};
  r.origin = origin;
  return r;
}

inline Row random_row(std::mt19937_64& rng, const SiteId& origin) {
  switch (rng() % 5) {
    case 0: return random_file(rng, origin);
    case 1: return HostRecord{random_token(rng, 1, 12), random_token(rng, 1, 8),
                              rng() % 2 ? StorageClass::Disk : StorageClass::Tape, origin};
    case 2: return ClusterRecord{random_token(rng, 1, 12), origin};
    case 3: return SiteRecord{origin};
    default: {
      SiteId to{random_token(rng, 1, 6, "ABCDEFGHIJ"), static_cast<std::uint32_t>(rng() % 1000)};
      return CostRecord{origin, to, Cost(rng() % 1000, 1 + rng() % 50)};
    }
  }
}

// Random local workload for one site: insert/update/delete at the given
// percentages, updates and deletes always target rows the site already holds.
class Workload {
 public:
  Workload(SiteId site, std::uint64_t seed, int insert_pct = 70, int update_pct = 20)
      : site_(std::move(site)), rng_(seed), insert_pct_(insert_pct), update_pct_(update_pct) {}

  struct Step {
    OpKind kind;
    Row row;
  };

  Step next() {
    int roll = static_cast<int>(rng_() % 100);
    if (live_.empty() || roll < insert_pct_) return insert();
    std::size_t idx = rng_() % live_.size();
    FileRecord row = live_[idx];
    if (roll < insert_pct_ + update_pct_) {
      row.size_bytes = rng_();
      row.production = "p" + std::to_string(rng_() % 7);
      row.storage = rng_() % 2 ? StorageClass::Disk : StorageClass::Tape;
      live_[idx] = row;
      return {OpKind::Update, row};
    }
    live_[idx] = live_.back();
    live_.pop_back();
    return {OpKind::Delete, row};
  }

  // Applies the next step to a store; returns the assigned sequence number.
  SequenceNumber step(Store& store) {
    Step s = next();
    return store.write_local(s.kind, s.row);
  }

  const SiteId& site() const { return site_; }

 private:
  Step insert() {
    FileRecord r;
    r.lfn = validate_lfn("f" + std::to_string(counter_++ % 5000) + "_" + std::to_string(rng_() % 3));
    r.host = site_.id + "-h" + std::to_string(rng_() % 4);
    r.path = "/data/" + site_.id + "/" + std::to_string(counter_);
    r.storage = rng_() % 3 == 0 ? StorageClass::Tape : StorageClass::Disk;
    r.production = "p" + std::to_string(rng_() % 7);
    r.size_bytes = rng_() % 1'000'000;
    r.created_at = Timestamp{static_cast<std::int64_t>(counter_)};
    r.origin = site_;
    live_.push_back(r);
    return {OpKind::Insert, r};
  }

  SiteId site_;
  std::mt19937_64 rng_;
  int insert_pct_;
  int update_pct_;
  std::uint64_t counter_ = 0;
  std::vector<FileRecord> live_;
};

// Independent fold used as the "union replay" oracle: a flat map keyed by
// (origin, subject, encoded key) holding (seq, encoded row).
class ReplayOracle {
 public:
  void apply(const OperationRecord& op) {
    Bytes key;
    if (op.kind == OpKind::Delete) {
      key = op.payload;
    } else {
      Row row = decode_row(op.subject, op.payload);
      key = std::visit([](const auto& r) { return encode_key(RowTraits<std::decay_t<decltype(r)>>::key(r)); }, row);
    }
    auto k = std::make_tuple(op.origin.ordinal, static_cast<int>(op.subject), key);
    if (op.kind == OpKind::Delete) {
      rows_.erase(k);
    } else {
      rows_[k] = {op.seq, op.payload};
    }
  }

  // Same digest definition as the store, computed from the flat map.
  Sha256 digest(const std::map<std::uint32_t, SiteId>& sites) const {
    std::vector<std::tuple<std::uint32_t, std::uint64_t, int, Bytes>> sorted;
    for (const auto& [k, v] : rows_) sorted.emplace_back(std::get<0>(k), v.first, std::get<1>(k), v.second);
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a)) <
             std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b));
    });
    Sha256Builder h;
    for (const auto& [ordinal, seq, subject, body] : sorted) {
      Encoder e;
      encode(e, sites.at(ordinal));
      e.u64(seq);
      e.u8(static_cast<std::uint8_t>(subject));
      e.bytes(body);
      h.update(e.buffer());
    }
    return h.finish();
  }

  std::size_t size() const { return rows_.size(); }

 private:
  std::map<std::tuple<std::uint32_t, int, Bytes>, std::pair<std::uint64_t, Bytes>> rows_;
};

}  // namespace catalog::testing
