#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <lpu/collection.hpp>

#include "support/fake_collection.hpp"

using namespace lpu;
using namespace lpu_test;
namespace fs = std::filesystem;

namespace {

class CollectionTest : public ::testing::Test {
protected:
  void SetUp() override {
    cache_ = fs::temp_directory_path() /
             ("lpu_cache_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(cache_);
  }
  void TearDown() override { fs::remove_all(cache_); }
  fs::path cache_;
};

} // namespace

TEST(CollectionIndex, ParseAndResolve) {
  const auto index = parse_collection_index(kIndex);
  ASSERT_EQ(index.size(), 4u);
  EXPECT_EQ(index[1].group, "Averous");
  EXPECT_EQ(index[1].nrows, 84617u);
  EXPECT_EQ(index[1].nnz, 463625u);
  const auto ref = resolve("epb3", index);
  EXPECT_EQ(ref, (MatrixRef{"epb3", std::string("Averous")}));
  EXPECT_TRUE(ref.resolved());
  EXPECT_EQ(ref.label(), "Averous/epb3");
  EXPECT_THROW(resolve("no_such_matrix", index), not_found_error);
  EXPECT_THROW(resolve("twin", index), ambiguous_name_error);
  EXPECT_THROW(resolve("", index), argument_error);
  EXPECT_THROW(parse_collection_index("1\ndate\nonly,three,cols\n"), parse_error);
  EXPECT_THROW(parse_collection_index("0\ndate\n"), parse_error);
}

TEST(TarReader, ExtractsNamedMemberAndHandlesLongNames) {
  const auto dir = fs::temp_directory_path() / "lpu_tar_test";
  fs::create_directories(dir);
  const std::string long_dir(120, 'd');
  const std::string raw = tar_member("././@LongLink", long_dir + "/deep.mtx", 'L') + tar_member("short", "payload") +
                          tar_member("x.mtx", "prefixed", '0', "some/dir") + std::string(1024, '\0');
  std::ofstream(dir / "a.tar.gz", std::ios::binary) << gzip(raw);
  EXPECT_TRUE(extract_tar_gz_member(dir / "a.tar.gz", "deep.mtx", dir / "out1"));
  EXPECT_EQ(read_file_contents(dir / "out1"), "payload");
  EXPECT_TRUE(extract_tar_gz_member(dir / "a.tar.gz", "x.mtx", dir / "out2"));
  EXPECT_EQ(read_file_contents(dir / "out2"), "prefixed");
  EXPECT_FALSE(extract_tar_gz_member(dir / "a.tar.gz", "absent.mtx", dir / "out3"));
  std::ofstream(dir / "bad.tar.gz", std::ios::binary) << "not gzip at all, definitely not a tar";
  EXPECT_ANY_THROW(extract_tar_gz_member(dir / "bad.tar.gz", "x.mtx", dir / "out4"));
  fs::remove_all(dir);
}

TEST_F(CollectionTest, FetchCachesAndSecondFetchIsOffline) {
  FakeCollection server;
  CollectionClient client(cache_, server.url());
  const auto ref = client.resolve("tiny");
  const auto first = client.fetch(ref);
  EXPECT_GT(first.bytes_downloaded, 0u);
  EXPECT_EQ(first.local_path, cache_ / "Test" / "tiny" / "tiny.mtx");
  EXPECT_TRUE(fs::exists(cache_ / "Test" / "tiny" / "tiny.json"));
  EXPECT_EQ(first.checksum, sha256_file(first.local_path));
  EXPECT_EQ(first.checksum.size(), 64u);
  EXPECT_EQ(first.source_url, server.url() + "/MM/Test/tiny.tar.gz");
  const auto parsed = read_matrix_market(first.local_path);
  EXPECT_EQ(parsed.matrix.rows(), 3u);
  EXPECT_EQ(parsed.matrix.nnz(), 5u);

  const int before = server.requests;
  const auto second = client.fetch(ref);
  EXPECT_EQ(second.bytes_downloaded, 0u);
  EXPECT_EQ(second.checksum, first.checksum);
  EXPECT_EQ(second.fetched_at, first.fetched_at);
  EXPECT_EQ(server.requests, before);
}

TEST_F(CollectionTest, WarmCacheWorksWithNetworkDown) {
  std::string url;
  {
    FakeCollection server;
    url = server.url();
    CollectionClient client(cache_, url);
    client.fetch(MatrixRef{"tiny", std::nullopt});
  }
  CollectionClient offline(cache_, url);
  EXPECT_EQ(offline.resolve("tiny").group, std::string("Test"));
  EXPECT_EQ(offline.metadata(MatrixRef{"epb3", std::nullopt}).nrows, 84617u);
  const auto hit = offline.fetch(MatrixRef{"tiny", std::nullopt});
  EXPECT_EQ(hit.bytes_downloaded, 0u);
  EXPECT_EQ(offline.load(MatrixRef{"tiny", std::string("Test")}).matrix.nnz(), 5u);
}

TEST_F(CollectionTest, CorruptedCacheIsDetectedAndRefetched) {
  FakeCollection server;
  CollectionClient client(cache_, server.url());
  const auto e = client.fetch(MatrixRef{"tiny", std::nullopt});
  std::ofstream(e.local_path, std::ios::app) << "9 9 9\n";
  EXPECT_THROW(client.fetch(e.ref), checksum_error);
  const auto again = client.fetch(e.ref, FetchOptions{true});
  EXPECT_GT(again.bytes_downloaded, 0u);
  EXPECT_EQ(again.checksum, e.checksum);
  EXPECT_EQ(server.archive_requests, 2);
}

TEST_F(CollectionTest, ArchiveWithoutMatrixIsAnError) {
  FakeCollection server;
  CollectionClient client(cache_, server.url());
  EXPECT_THROW(client.fetch(MatrixRef{"epb3", std::string("Averous")}), parse_error);
  EXPECT_FALSE(fs::exists(cache_ / "Averous" / "epb3" / "epb3.mtx"));
}

TEST_F(CollectionTest, NetworkFailuresAreDistinct) {
  int port = 0;
  {
    FakeCollection server;
    port = std::stoi(server.url().substr(server.url().rfind(':') + 1));
  }
  CollectionClient dead(cache_, "http://127.0.0.1:" + std::to_string(port));
  EXPECT_THROW(dead.index(), network_error);

  FakeCollection server;
  CollectionClient client(cache_, server.url());
  EXPECT_THROW(client.fetch(MatrixRef{"twin", std::string("GroupA")}), network_error); // 404
  EXPECT_THROW(client.resolve("no_such_matrix"), not_found_error);
  EXPECT_THROW(client.matrix_path(MatrixRef{"x", std::nullopt}), argument_error);
}

TEST_F(CollectionTest, ConcurrentFetchesDownloadOnce) {
  FakeCollection server;
  CollectionClient client(cache_, server.url());
  client.index();
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      try {
        client.fetch(MatrixRef{"tiny", std::string("Test")});
      } catch (...) {
        ++failures;
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(failures, 0);
  EXPECT_EQ(server.archive_requests, 1);
}

TEST(CollectionDefaults, EnvironmentOverrides) {
  ::setenv("LPU_CACHE_DIR", "/tmp/lpu-cache-override", 1);
  EXPECT_EQ(default_cache_dir(), fs::path("/tmp/lpu-cache-override"));
  ::unsetenv("LPU_CACHE_DIR");
  ::setenv("XDG_CACHE_HOME", "/tmp/xdg", 1);
  EXPECT_EQ(default_cache_dir(), fs::path("/tmp/xdg/lpu-emu"));
  ::setenv("LPU_COLLECTION_URL", "http://mirror.example", 1);
  EXPECT_EQ(default_collection_url(), "http://mirror.example");
  ::unsetenv("LPU_COLLECTION_URL");
  EXPECT_EQ(default_collection_url(), "https://sparse.tamu.edu");
}
