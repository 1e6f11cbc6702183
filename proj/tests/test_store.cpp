#include <doctest.h>

#include <fstream>
#include <thread>

#include "catalog/error.hpp"
#include "catalog/store.hpp"
#include "support.hpp"

using namespace catalog;
using namespace catalog::testing;

namespace {

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::NotFound;
}

std::unique_ptr<Store> open_at(const std::filesystem::path& root, const SiteId& site, FakeClock* clock = nullptr) {
  StoreOptions o;
  o.root = root;
  if (clock) o.clock = clock->fn();
  return Store::open(std::move(o), site);
}

std::vector<OperationRecord> all_local_ops(const Store& s) { return s.scan_partition(s.site(), 0); }

}  // namespace

TEST_CASE("open on an empty directory yields an empty store") {
  TempDir dir;
  auto s = open_at(dir.path(), BNL);
  CHECK(s->cursors() == CursorMap{{BNL, 0}});
  CHECK(s->read([](const Catalog& c) { return c.row_count(); }) == 0);
  CHECK(s->buffer().empty());
  CHECK(std::filesystem::exists(dir / "site"));
  CHECK(std::filesystem::exists(dir / "log"));
}

TEST_CASE("reopen as another site is refused") {
  TempDir dir;
  open_at(dir.path(), SBU);
  CHECK(code_of([&] { open_at(dir.path(), BNL); }) == Errc::SiteMismatch);
  CHECK(code_of([&] { open_at(dir.path(), SiteId{"SBU", 9}); }) == Errc::SiteMismatch);
}

TEST_CASE("write_local assigns gap-free sequence numbers starting at 1") {
  auto s = Store::in_memory(BNL);
  CHECK(s->write_local(OpKind::Insert, file("a", "h", "/a", BNL)) == 1);

  auto big = Store::in_memory(BNL);
  for (std::uint64_t i = 1; i <= 20'000; ++i) {
    REQUIRE(big->write_local(OpKind::Insert, file("f" + std::to_string(i), "h", "/p", BNL)) == i);
  }
  auto ops = big->last_operations();
  REQUIRE(ops.size() == 20'000);
  for (std::size_t i = 0; i < ops.size(); ++i) REQUIRE(ops[i].seq == i + 1);
}

TEST_CASE("write_local enforces ownership and key preconditions") {
  auto s = Store::in_memory(BNL);
  CHECK(code_of([&] { s->write_local(OpKind::Insert, file("XYZ", "h", "/x", SBU)); }) == Errc::OwnershipViolation);
  CHECK(code_of([&] { s->write_local(OpKind::Insert, ClusterRecord{"c", VU}); }) == Errc::OwnershipViolation);
  CHECK(code_of([&] { s->write_local(OpKind::Update, file("XYZ", "h", "/x", BNL)); }) == Errc::UnknownKey);
  CHECK(code_of([&] { s->write_local(OpKind::Delete, file("XYZ", "h", "/x", BNL)); }) == Errc::UnknownKey);
  s->write_local(OpKind::Insert, file("XYZ", "h", "/x", BNL));
  CHECK(code_of([&] { s->write_local(OpKind::Insert, file("XYZ", "h", "/x", BNL)); }) == Errc::DuplicateKey);
  CHECK(code_of([&] { s->write_local(OpKind::Insert, file("XYZ", "h", "relative", BNL)); }) ==
        Errc::InvalidArgument);
  CHECK(s->local_high_water() == 1);
  CHECK(s->buffer().files.size() == 1);
}

TEST_CASE("apply_buffer folds Last_operations into Data") {
  auto s = Store::in_memory(BNL);
  CHECK(s->apply_buffer() == 0);

  s->write_local(OpKind::Insert, file("a", "h", "/a", BNL));
  s->write_local(OpKind::Insert, file("b", "h", "/b", BNL));
  s->write_local(OpKind::Delete, file("a", "h", "/a", BNL));
  CHECK(s->read([](const Catalog& c) { return c.row_count(); }) == 0);  // not visible before apply
  CHECK(s->queue_depth() == 3);
  CHECK(s->apply_buffer() == 3);
  CHECK(s->queue_depth() == 0);
  CHECK(s->read([](const Catalog& c) { return c.row_count(); }) == 1);
  CHECK(s->cursors().at(BNL) == 3);
}

TEST_CASE("after apply_buffer Buffer equals the local Data partition") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = Store::in_memory(BNL);
    Workload w(BNL, seed);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 1000; ++i) {
      w.step(*s);
      if (rng() % 97 == 0) s->apply_buffer();
    }
    s->apply_buffer();
    Partition buf = s->buffer();
    Partition data = s->read([&](const Catalog& c) { return c.find(BNL) ? *c.find(BNL) : Partition{BNL}; });
    CHECK(buf == data);
    CHECK(s->queue_depth() == 0);
  }
}

TEST_CASE("scan_partition returns applied ops after a cursor") {
  auto s = Store::in_memory(BNL);
  for (int i = 0; i < 5; ++i) s->write_local(OpKind::Insert, file("f" + std::to_string(i), "h", "/p", BNL));
  CHECK(s->scan_partition(BNL, 0).empty());  // unapplied ops are invisible
  s->apply_buffer();

  auto all = all_local_ops(*s);
  std::vector<std::uint64_t> expected;
  for (const auto& op : all) {
    if (op.seq > 2) expected.push_back(op.seq);
  }
  std::vector<std::uint64_t> got;
  for (const auto& op : s->scan_partition(BNL, 2)) got.push_back(op.seq);
  CHECK(got == expected);
  CHECK(got == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(s->scan_partition(BNL, 5).empty());
  CHECK(s->scan_partition(BNL, 1, 2).size() == 2);
  CHECK(code_of([&] { s->scan_partition(VU, 0); }) == Errc::UnknownOrigin);
  CHECK(code_of([&] { s->scan_partition("nope", 0); }) == Errc::UnknownOrigin);
}

TEST_CASE("pruned ranges report GapDetected") {
  TempDir dir;
  StoreOptions o;
  o.root = dir.path();
  o.retention = 2;
  auto s = Store::open(o, BNL);
  for (int i = 0; i < 6; ++i) s->write_local(OpKind::Insert, file("f" + std::to_string(i), "h", "/p", BNL));
  s->apply_buffer();
  s->compact({});
  CHECK(s->prune_floor(BNL) == 4);
  CHECK(code_of([&] { s->scan_partition(BNL, 0); }) == Errc::GapDetected);
  CHECK(s->scan_partition(BNL, 4).size() == 2);

  // Unacknowledged peers hold back pruning.
  s->write_local(OpKind::Insert, file("g", "h", "/p", BNL));
  s->apply_buffer();
  s->compact({"SBU"});
  CHECK(s->prune_floor(BNL) == 4);
  s->note_ack("SBU", BNL, 7);
  s->compact({"SBU"});
  CHECK(s->prune_floor(BNL) == 5);

  auto digest = s->checksum_data();
  s.reset();
  auto reopened = Store::open(o, BNL);
  CHECK(reopened->checksum_data() == digest);
  CHECK(reopened->prune_floor(BNL) == 5);
  CHECK(reopened->scan_partition(BNL, 5).size() == 2);
  CHECK(reopened->buffer() == *reopened->read([](const Catalog& c) { return c.find(BNL); }));
}

TEST_CASE("apply_remote is idempotent and gap-checked") {
  auto sbu = Store::in_memory(SBU);
  for (int i = 0; i < 100; ++i) sbu->write_local(OpKind::Insert, file("s" + std::to_string(i), "sbu1", "/d", SBU));
  sbu->apply_buffer();
  auto ops = sbu->scan_partition(SBU, 0);

  auto bnl = Store::in_memory(BNL);
  bnl->write_local(OpKind::Insert, file("b", "rcf", "/b", BNL));
  bnl->apply_buffer();
  auto local_before = bnl->read([](const Catalog& c) { return *c.find(BNL); });

  auto adv = bnl->apply_remote(ops);
  CHECK(adv.at(SBU) == 100);
  auto d1 = bnl->checksum_data();
  bnl->apply_remote(ops);
  CHECK(bnl->checksum_data() == d1);
  CHECK(bnl->read([](const Catalog& c) { return c.find(SBU)->files.size(); }) == 100);
  CHECK(bnl->read([](const Catalog& c) { return *c.find(BNL); }) == local_before);

  // seqs {4, 6} after high-water 3
  auto vu = Store::in_memory(VU);
  std::vector<OperationRecord> first(ops.begin(), ops.begin() + 3);
  vu->apply_remote(first);
  std::vector<OperationRecord> gap{ops[3], ops[5]};
  auto before = vu->checksum_data();
  CHECK(code_of([&] { vu->apply_remote(gap); }) == Errc::OutOfOrder);
  CHECK(vu->checksum_data() == before);
  CHECK(vu->cursor("SBU") == 3);

  CHECK(code_of([&] { sbu->apply_remote(ops); }) == Errc::OriginIsSelf);
}

TEST_CASE("apply_remote rejects rows whose owner differs from the op origin") {
  auto bnl = Store::in_memory(BNL);
  OperationRecord forged{SBU, 1, OpKind::Insert, Subject::Files, canonical_encode(file("x", "h", "/x", VU)),
                         Timestamp{}};
  CHECK(code_of([&] { bnl->apply_remote(std::vector{forged}); }) == Errc::OwnershipViolation);
  CHECK(bnl->cursor("SBU") == 0);
}

TEST_CASE("delete of an already-deleted remote key is a no-op") {
  auto bnl = Store::in_memory(BNL);
  OperationRecord del{SBU, 1, OpKind::Delete, Subject::Files, encode_key(FileKey{"x", "h", "/x"}), Timestamp{}};
  bnl->apply_remote(std::vector{del});
  CHECK(bnl->cursor("SBU") == 1);
  CHECK(bnl->read([](const Catalog& c) { return c.row_count(); }) == 0);
}

TEST_CASE("crash and reopen restores the committed state") {
  TempDir dir;
  FakeClock clock;
  Sha256 data_digest, buffer_digest;
  std::size_t queued = 0;
  {
    auto s = open_at(dir.path(), BNL, &clock);
    Workload w(BNL, 11);
    for (int i = 0; i < 100; ++i) {
      w.step(*s);
      if (i == 60) s->apply_buffer();
    }
    OperationRecord remote{SBU, 1, OpKind::Insert, Subject::Files, canonical_encode(file("r", "s", "/r", SBU)),
                           Timestamp{}};
    s->apply_remote(std::vector{remote});
    data_digest = s->checksum_data();
    buffer_digest = digest(s->buffer());
    queued = s->queue_depth();
    // no clean shutdown: the store is simply dropped
  }
  auto s = open_at(dir.path(), BNL, &clock);
  CHECK(s->checksum_data() == data_digest);
  CHECK(digest(s->buffer()) == buffer_digest);
  CHECK(s->queue_depth() == queued);
  CHECK(s->local_high_water() == 100);
  CHECK(s->cursor("SBU") == 1);
  CHECK(s->write_local(OpKind::Insert, file("next", "h", "/n", BNL)) == 101);

  // Recovery is idempotent.
  s.reset();
  auto again = open_at(dir.path(), BNL, &clock);
  auto third = [&] {
    auto d = again->checksum_data();
    again.reset();
    return d;
  }();
  CHECK(open_at(dir.path(), BNL)->checksum_data() == third);
}

TEST_CASE("a torn final record is discarded, a flipped byte is CorruptLog") {
  TempDir dir;
  {
    auto s = open_at(dir.path(), BNL);
    for (int i = 0; i < 3; ++i) s->write_local(OpKind::Insert, file("f" + std::to_string(i), "h", "/p", BNL));
  }
  auto log = dir / "log/1.oplog";
  auto size = std::filesystem::file_size(log);
  std::filesystem::resize_file(log, size - 3);
  {
    auto s = open_at(dir.path(), BNL);
    CHECK(s->local_high_water() == 2);
    CHECK(s->write_local(OpKind::Insert, file("f9", "h", "/p", BNL)) == 3);
  }
  {
    std::fstream f(log, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    char c;
    f.seekg(10);
    f.get(c);
    f.seekp(10);
    f.put(static_cast<char>(c ^ 0x40));
  }
  CHECK(code_of([&] { open_at(dir.path(), BNL); }) == Errc::CorruptLog);
}

TEST_CASE("snapshots") {
  SUBCASE("empty store") {
    auto s = Store::in_memory(BNL);
    s->register_origin(SBU);
    Snapshot snap = s->take_snapshot();
    CHECK(snap.rows.empty());
    CHECK(snap.as_of == CursorMap{{BNL, 0}, {SBU, 0}});
  }
  SUBCASE("encode/decode and tamper detection") {
    auto s = Store::in_memory(BNL);
    Workload w(BNL, 3);
    for (int i = 0; i < 50; ++i) w.step(*s);
    s->apply_buffer();
    Snapshot snap = s->take_snapshot();
    CHECK(snap.digest == s->checksum_data());
    Bytes enc = encode_snapshot(snap);
    Snapshot back = decode_snapshot(enc);
    CHECK(back.rows == snap.rows);
    CHECK(back.as_of == snap.as_of);
    enc[enc.size() / 2] ^= 0x01;
    CHECK_THROWS_AS(decode_snapshot(enc), Error);

    Snapshot tampered = snap;
    std::get<FileRecord>(tampered.rows.front().row).size_bytes ^= 1;
    auto vu = Store::in_memory(VU);
    CHECK(code_of([&] { vu->install_snapshot(tampered); }) == Errc::DigestMismatch);
    vu->install_snapshot(snap);
    CHECK(vu->checksum_data() == snap.digest);
    CHECK(vu->cursor("BNL") == 50);
    CHECK(code_of([&] { vu->scan_partition(BNL, 0); }) == Errc::GapDetected);
  }
  SUBCASE("install persists across reopen") {
    auto s = Store::in_memory(BNL);
    Workload w(BNL, 5);
    for (int i = 0; i < 30; ++i) w.step(*s);
    s->apply_buffer();
    TempDir dir;
    Sha256 d;
    {
      auto vu = open_at(dir.path(), VU);
      vu->write_local(OpKind::Insert, file("v", "vu1", "/v", VU));
      vu->install_snapshot(s->take_snapshot());
      d = vu->checksum_data();
    }
    auto vu = open_at(dir.path(), VU);
    CHECK(vu->checksum_data() == d);
    CHECK(vu->cursor("BNL") == 30);
    CHECK(vu->queue_depth() == 1);
  }
}

TEST_CASE("take_snapshot does not block write_local") {
  StoreOptions o;
  std::atomic<int> written{0};
  Store* self = nullptr;
  o.on_snapshot = [&] {
    // The Data read lock is held here; local writes must still complete.
    std::thread writer([&] {
      for (int i = 0; i < 1000; ++i) {
        self->write_local(OpKind::Insert, file("w" + std::to_string(i), "h", "/w", BNL));
        ++written;
      }
    });
    writer.join();
  };
  auto s = Store::open(o, BNL);
  self = s.get();
  for (int i = 0; i < 100; ++i) s->write_local(OpKind::Insert, file("x" + std::to_string(i), "h", "/x", BNL));
  s->apply_buffer();
  Snapshot snap = s->take_snapshot();
  CHECK(written == 1000);
  CHECK(snap.as_of.at(BNL) == 100);  // prefix-consistent: exactly the applied prefix
  CHECK(snap.rows.size() == 100);
  CHECK(s->queue_depth() == 1000);
}

TEST_CASE("checksum_data distinguishes states") {
  auto a = Store::in_memory(BNL);
  auto b = Store::in_memory(SBU);
  CHECK(a->checksum_data() == b->checksum_data());
  a->write_local(OpKind::Insert, file("x", "h", "/x", BNL));
  a->write_local(OpKind::Insert, file("y", "h", "/y", BNL));
  a->apply_buffer();
  auto full = a->checksum_data();
  a->write_local(OpKind::Delete, file("y", "h", "/y", BNL));
  a->apply_buffer();
  CHECK(a->checksum_data() != full);
}
