#include <doctest.h>

#include <fstream>

#include "catalog/error.hpp"
#include "catalog/resolver.hpp"
#include "catalog_fixture.hpp"

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

Catalog two_replicas() {
  Catalog c;
  std::uint64_t seq = 0;
  c.put(SiteRecord{BNL}, ++seq);
  c.put(SiteRecord{SBU}, ++seq);
  c.put(SiteRecord{VU}, ++seq);
  c.put(ClusterRecord{"nuc", SBU}, ++seq);
  c.put(ClusterRecord{"acc", VU}, ++seq);
  c.put(HostRecord{"nuc1", "nuc", StorageClass::Disk, SBU}, ++seq);
  c.put(HostRecord{"acc1", "acc", StorageClass::Disk, VU}, ++seq);
  c.put(CostRecord{BNL, SBU, Cost(5, 1)}, ++seq);
  c.put(CostRecord{BNL, VU, Cost(9, 1)}, ++seq);
  c.put(file("XYZ", "nuc1", "/sbu/XYZ", SBU), ++seq);
  c.put(file("XYZ", "acc1", "/vu/XYZ", VU), ++seq);
  return c;
}

}  // namespace

TEST_CASE("parse_search_path") {
  auto p = parse_search_path("/data/d1:/data/d2:DB_ANY");
  REQUIRE(p.size() == 3);
  CHECK(std::get<LocalDir>(p[0]).path == "/data/d1");
  CHECK(std::get<LocalDir>(p[1]).path == "/data/d2");
  CHECK(std::get<ReservedWord>(p[2]) == ReservedWord::Any);
  CHECK(parse_search_path("DB_CLOSEST:DB_LOCAL_DISK") == SearchPath{ReservedWord::Closest, ReservedWord::LocalDisk});

  CHECK(code_of([] { parse_search_path(""); }) == Errc::EmptyPath);
  CHECK(code_of([] { parse_search_path("relative/dir"); }) == Errc::UnknownToken);
  CHECK(code_of([] { parse_search_path("/a::DB_ANY"); }) == Errc::UnknownToken);
  CHECK(code_of([] { parse_search_path("db_any"); }) == Errc::UnknownToken);
  CHECK(code_of([] { parse_search_path("/a:"); }) == Errc::UnknownToken);
}

TEST_CASE("resolve walks the path in order") {
  TempDir dir;
  std::filesystem::create_directories(dir / "d1");
  std::filesystem::create_directories(dir / "d2");
  std::ofstream(dir / "d2" / "XYZ") << "x";
  Catalog c = two_replicas();
  auto lfn = validate_lfn("XYZ");

  auto local_first = parse_search_path((dir / "d1").string() + ":" + (dir / "d2").string() + ":DB_ANY");
  auto r = resolve(lfn, local_first, c, "BNL");
  CHECK(r.source == Resolution::Source::Directory);
  CHECK(r.physical_path == (dir / "d2" / "XYZ").string());
  CHECK_FALSE(r.replica);

  // Directory hits never look at the catalog: an empty catalog gives the same answer.
  CHECK(resolve(lfn, local_first, Catalog{}, "BNL") == r);

  auto closest = resolve(lfn, parse_search_path((dir / "d1").string() + ":DB_CLOSEST"), c, "BNL");
  CHECK(closest.source == Resolution::Source::Catalog);
  CHECK(closest.replica == find_closest_replica(c, lfn, "BNL")->replica);
  CHECK(closest.physical_path == "/sbu/XYZ");

  auto any = resolve(lfn, parse_search_path("DB_ANY"), c, "BNL");
  CHECK(any.replica->host == "acc1");  // first under (host, path) ordering

  CHECK(code_of([&] { resolve(lfn, parse_search_path("DB_LOCAL_DISK"), c, "BNL"); }) == Errc::NotFound);
  CHECK(resolve(lfn, parse_search_path("DB_LOCAL_DISK"), c, "VU").physical_path == "/vu/XYZ");
  CHECK(code_of([&] { resolve(validate_lfn("nothing"), local_first, c, "BNL"); }) == Errc::NotFound);
  // A site the catalog has never heard of simply has no local or closest copy.
  CHECK(resolve(lfn, parse_search_path("DB_CLOSEST:DB_ANY"), c, "NEW").replica->host == "acc1");
}

TEST_CASE("relocation changes only the physical path") {
  Catalog c = two_replicas();
  auto lfn = validate_lfn("XYZ");
  auto path = parse_search_path("DB_CLOSEST");
  auto before = resolve(lfn, path, c, "BNL");
  CHECK(resolve(lfn, path, c, "BNL") == before);

  // Move the SBU copy to a new path (delete + insert at its origin).
  auto sbu = c.partition(SBU);
  sbu.files.erase(FileKey{"XYZ", "nuc1", "/sbu/XYZ"});
  c.replace(sbu);
  c.put(file("XYZ", "nuc1", "/sbu/moved/XYZ", SBU), 99);
  auto after = resolve(lfn, path, c, "BNL");
  CHECK(after.lfn == before.lfn);
  CHECK(after.source == before.source);
  CHECK(after.physical_path == "/sbu/moved/XYZ");
}

TEST_CASE("random fixtures match a hand-walked expectation") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 50; ++i) {
    TempDir root("resolver");
    auto fx = make_resolver_fixture(rng, root.path());
    SearchPath path = parse_search_path(fx.raw_path);
    for (const auto& lfn : fx.queries) {
      auto want = expected_resolution(fx, lfn);
      std::optional<Resolution> got;
      try {
        got = resolve(validate_lfn(lfn), path, fx.catalog.catalog, fx.site);
      } catch (const Error& e) {
        REQUIRE(e.code() == Errc::NotFound);
      }
      REQUIRE(got == want);
    }
  }
}
