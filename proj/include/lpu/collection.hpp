#ifndef LPU_COLLECTION_HPP
#define LPU_COLLECTION_HPP

// Requires OpenSSL (HTTPS and SHA-256) and zlib (archive inflation).

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#ifndef LPU_WITH_ZLIB
#define LPU_WITH_ZLIB
#endif

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <zlib.h>

#include "errors.hpp"
#include "matrix_market.hpp"
#include "matrix_ref.hpp"

namespace lpu {

namespace fs = std::filesystem;

/// One row of the collection's statistics index.
struct IndexEntry {
  std::string group;
  std::string name;
  std::size_t nrows = 0;
  std::size_t ncols = 0;
  std::size_t nnz = 0;
};

/**
 * Parses the collection's ssstats.csv: a count line, a date line, then
 * "group,name,nrows,ncols,nnz,..." per matrix.
 */
inline std::vector<IndexEntry> parse_collection_index(std::string_view text) {
  std::vector<IndexEntry> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no <= 2 || line.empty()) continue;
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cols.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols.size() < 5) throw parse_error("collection index: expected at least 5 columns", line_no);
    IndexEntry e;
    e.group = std::string(cols[0]);
    e.name = std::string(cols[1]);
    auto count = [&](std::string_view s, const char* what) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw parse_error(std::string("collection index: bad ") + what, line_no);
      return v;
    };
    e.nrows = count(cols[2], "nrows");
    e.ncols = count(cols[3], "ncols");
    e.nnz = count(cols[4], "nnz");
    out.push_back(std::move(e));
  }
  if (out.empty()) throw parse_error("collection index has no entries");
  return out;
}

/// Looks `name` up in the index; the match must be unique.
inline IndexEntry find_in_index(const std::string& name, const std::vector<IndexEntry>& index) {
  const IndexEntry* hit = nullptr;
  std::string groups;
  for (const auto& e : index) {
    if (e.name != name) continue;
    groups += (groups.empty() ? "" : ", ") + e.group;
    if (hit) {
      for (const auto& f : index)
        if (f.name == name && f.group != hit->group && groups.find(f.group) == std::string::npos)
          groups += ", " + f.group;
      throw ambiguous_name_error("matrix name '" + name + "' exists in several groups: " + groups);
    }
    hit = &e;
  }
  if (!hit) throw not_found_error("matrix '" + name + "' not found in the collection index");
  return *hit;
}

inline MatrixRef resolve(const std::string& name, const std::vector<IndexEntry>& index) {
  if (name.empty()) throw argument_error("resolve: empty matrix name");
  const auto e = find_in_index(name, index);
  return MatrixRef{e.name, e.group};
}

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw error("sha256: init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

namespace detail {

inline std::uint64_t tar_size(const char* field, std::size_t len) {
  if (static_cast<unsigned char>(field[0]) & 0x80) { // GNU base-256
    std::uint64_t v = 0;
    for (std::size_t i = 1; i < len; ++i) v = (v << 8) | static_cast<unsigned char>(field[i]);
    return v;
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < len && field[i]; ++i) {
    if (field[i] == ' ') continue;
    if (field[i] < '0' || field[i] > '7') throw parse_error("tar: bad size field");
    v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
  }
  return v;
}

inline std::string tar_string(const char* field, std::size_t len) {
  std::size_t n = 0;
  while (n < len && field[n]) ++n;
  return std::string(field, n);
}

class GzReader {
public:
  explicit GzReader(const fs::path& path) : f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw io_error("cannot open archive " + path.string());
    gzbuffer(f_, 1 << 17);
  }
  ~GzReader() {
    if (f_) gzclose(f_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  /// Reads exactly n bytes; false at a clean end of stream.
  bool read_exact(char* dst, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      const int r = gzread(f_, dst + got, static_cast<unsigned>(std::min<std::size_t>(n - got, 1 << 30)));
      if (r < 0) throw io_error("corrupt gzip archive");
      if (r == 0) {
        if (got == 0) return false;
        throw io_error("truncated archive");
      }
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

private:
  gzFile f_;
};

} // namespace detail

/**
 * Streams a .tar.gz and writes the first regular member whose file name is
 * `member_name` (any directory) to `dest`. Returns false if no such member.
 */
inline bool extract_tar_gz_member(const fs::path& archive, const std::string& member_name, const fs::path& dest) {
  detail::GzReader gz(archive);
  std::array<char, 512> hdr{};
  std::string long_name;
  std::vector<char> buf(1 << 16);
  while (gz.read_exact(hdr.data(), hdr.size())) {
    if (std::all_of(hdr.begin(), hdr.end(), [](char c) { return c == 0; })) break;
    const std::uint64_t size = detail::tar_size(hdr.data() + 124, 12);
    const char type = hdr[156];
    const std::uint64_t padded = (size + 511) / 512 * 512;

    std::string path = detail::tar_string(hdr.data(), 100);
    if (std::string(hdr.data() + 257, 5) == "ustar") {
      const auto prefix = detail::tar_string(hdr.data() + 345, 155);
      if (!prefix.empty()) path = prefix + "/" + path;
    }
    if (!long_name.empty()) {
      path = long_name;
      long_name.clear();
    }

    if (type == 'L' || type == 'x') {
      std::string data(padded, '\0');
      if (padded && !gz.read_exact(data.data(), padded)) throw io_error("truncated archive");
      data.resize(size);
      if (type == 'L') {
        long_name = detail::tar_string(data.data(), data.size());
      } else {
        // pax records: "<len> key=value\n"
        std::size_t p = 0;
        while (p < data.size()) {
          const std::size_t sp = data.find(' ', p);
          if (sp == std::string::npos) break;
          const std::size_t rec_len = std::strtoull(data.c_str() + p, nullptr, 10);
          if (rec_len == 0) break;
          const std::string rec = data.substr(sp + 1, p + rec_len - sp - 2);
          if (rec.rfind("path=", 0) == 0) long_name = rec.substr(5);
          p += rec_len;
        }
      }
      continue;
    }

    const bool regular = type == '0' || type == '\0';
    const auto base = fs::path(path).filename().string();
    if (regular && base == member_name) {
      std::ofstream out(dest, std::ios::binary);
      if (!out) throw io_error("cannot write " + dest.string());
      std::uint64_t left = size;
      while (left > 0) {
        const std::size_t chunk = static_cast<std::size_t>(std::min<std::uint64_t>(left, buf.size()));
        if (!gz.read_exact(buf.data(), chunk)) throw io_error("truncated archive");
        out.write(buf.data(), static_cast<std::streamsize>(chunk));
        left -= chunk;
      }
      if (!out) throw io_error("write failed for " + dest.string());
      return true;
    }
    std::uint64_t left = padded;
    while (left > 0) {
      const std::size_t chunk = static_cast<std::size_t>(std::min<std::uint64_t>(left, buf.size()));
      if (!gz.read_exact(buf.data(), chunk)) throw io_error("truncated archive");
      left -= chunk;
    }
  }
  return false;
}

struct CacheEntry {
  MatrixRef ref;
  fs::path local_path;
  std::string checksum;
  std::string fetched_at;
  std::string source_url;
  /// Bytes transferred by this fetch call; zero on a cache hit.
  std::uint64_t bytes_downloaded = 0;
};

struct FetchOptions {
  /// Re-download when the cached file fails its checksum instead of throwing.
  bool refetch_on_mismatch = false;
};

/// $LPU_CACHE_DIR, else $XDG_CACHE_HOME/lpu-emu, else ~/.cache/lpu-emu.
inline fs::path default_cache_dir() {
  if (const char* d = std::getenv("LPU_CACHE_DIR"); d && *d) return d;
  if (const char* x = std::getenv("XDG_CACHE_HOME"); x && *x) return fs::path(x) / "lpu-emu";
  if (const char* h = std::getenv("HOME"); h && *h) return fs::path(h) / ".cache" / "lpu-emu";
  return fs::temp_directory_path() / "lpu-emu";
}

/// $LPU_COLLECTION_URL, else the public collection site.
inline std::string default_collection_url() {
  if (const char* u = std::getenv("LPU_COLLECTION_URL"); u && *u) return u;
  return "https://sparse.tamu.edu";
}

namespace detail {

struct SplitUrl {
  std::string origin; // scheme://host[:port]
  std::string prefix; // path prefix without trailing slash
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw argument_error("collection URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl s;
  s.origin = url.substr(0, path_start);
  s.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!s.prefix.empty() && s.prefix.back() == '/') s.prefix.pop_back();
  return s;
}

// Holds an flock on <dir>/.lock plus an in-process mutex for the same path.
class RefLock {
public:
  explicit RefLock(const fs::path& dir) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::shared_ptr<std::mutex>> registry;
    {
      std::lock_guard<std::mutex> g(registry_mutex);
      auto& m = registry[dir.string()];
      if (!m) m = std::make_shared<std::mutex>();
      mutex_ = m;
    }
    mutex_->lock();
    fd_ = ::open((dir / ".lock").c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ >= 0) ::flock(fd_, LOCK_EX);
  }
  ~RefLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
    mutex_->unlock();
  }
  RefLock(const RefLock&) = delete;
  RefLock& operator=(const RefLock&) = delete;

private:
  std::shared_ptr<std::mutex> mutex_;
  int fd_ = -1;
};

inline std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace detail

/**
 * Resolves names through the collection index and keeps downloaded matrices in
 * cache_dir/<group>/<name>/<name>.mtx with a <name>.json sidecar holding the
 * SHA-256, source URL and fetch time. A verified cache hit does no network I/O.
 */
class CollectionClient {
public:
  explicit CollectionClient(fs::path cache_dir = default_cache_dir(), std::string base_url = default_collection_url())
      : cache_dir_(std::move(cache_dir)), base_url_(std::move(base_url)) {}

  const fs::path& cache_dir() const noexcept { return cache_dir_; }
  const std::string& base_url() const noexcept { return base_url_; }

  fs::path index_path() const { return cache_dir_ / "ssstats.csv"; }

  fs::path matrix_dir(const MatrixRef& ref) const {
    if (!ref.group) throw argument_error("unresolved matrix reference '" + ref.name + "'");
    return cache_dir_ / *ref.group / ref.name;
  }
  fs::path matrix_path(const MatrixRef& ref) const { return matrix_dir(ref) / (ref.name + ".mtx"); }
  fs::path sidecar_path(const MatrixRef& ref) const { return matrix_dir(ref) / (ref.name + ".json"); }

  /// Index entries, downloading the index only when it is not cached (or refresh is set).
  std::vector<IndexEntry> index(bool refresh = false) {
    if (refresh || !fs::exists(index_path())) {
      fs::create_directories(cache_dir_);
      const auto tmp = index_path().string() + ".part";
      download(base_url_ + "/files/ssstats.csv", tmp);
      fs::rename(tmp, index_path());
    }
    return parse_collection_index(read_file_contents(index_path()));
  }

  MatrixRef resolve(const std::string& name) { return lpu::resolve(name, index()); }

  /// Index metadata for a resolved or bare reference.
  IndexEntry metadata(const MatrixRef& ref) {
    auto entries = index();
    if (!ref.group) return find_in_index(ref.name, entries);
    for (const auto& e : entries)
      if (e.name == ref.name && e.group == *ref.group) return e;
    throw not_found_error("matrix '" + ref.label() + "' not found in the collection index");
  }

  /// Cached entry if present and valid; never touches the network.
  std::optional<CacheEntry> cached(const MatrixRef& ref) const {
    const auto mtx = matrix_path(ref), side = sidecar_path(ref);
    if (!fs::exists(mtx) || !fs::exists(side)) return std::nullopt;
    nlohmann::json j;
    try {
      std::ifstream in(side);
      j = nlohmann::json::parse(in);
    } catch (const std::exception&) {
      throw checksum_error("unreadable cache sidecar " + side.string());
    }
    CacheEntry e;
    e.ref = ref;
    e.local_path = mtx;
    e.checksum = j.value("sha256", std::string{});
    e.fetched_at = j.value("fetched_at", std::string{});
    e.source_url = j.value("source_url", std::string{});
    const auto actual = sha256_file(mtx);
    if (actual != e.checksum)
      throw checksum_error("cached " + mtx.string() + " has sha256 " + actual + ", sidecar records " + e.checksum);
    return e;
  }

  CacheEntry fetch(const MatrixRef& ref_in, const FetchOptions& opt = {}) {
    const MatrixRef ref = ref_in.group ? ref_in : resolve(ref_in.name);
    const auto dir = matrix_dir(ref);
    fs::create_directories(dir);
    detail::RefLock lock(dir);

    try {
      if (auto hit = cached(ref)) return *hit;
    } catch (const checksum_error&) {
      if (!opt.refetch_on_mismatch) throw;
      fs::remove(matrix_path(ref));
      fs::remove(sidecar_path(ref));
    }

    const std::string url = base_url_ + "/MM/" + *ref.group + "/" + ref.name + ".tar.gz";
    const auto archive = dir / (ref.name + ".tar.gz.part");
    const auto staged = dir / (ref.name + ".mtx.part");
    CacheEntry e;
    e.ref = ref;
    e.source_url = url;
    e.bytes_downloaded = download(url, archive);
    try {
      if (!extract_tar_gz_member(archive, ref.name + ".mtx", staged))
        throw parse_error("archive " + url + " contains no " + ref.name + ".mtx");
      fs::remove(archive);
      read_matrix_market(staged); // must parse before it enters the cache
    } catch (...) {
      std::error_code ec;
      fs::remove(archive, ec);
      fs::remove(staged, ec);
      throw;
    }
    e.checksum = sha256_file(staged);
    e.fetched_at = detail::utc_timestamp();
    e.local_path = matrix_path(ref);
    fs::rename(staged, e.local_path);
    nlohmann::json side = {{"schema_version", 1},     {"group", *ref.group},     {"name", ref.name},
                           {"source_url", url},       {"sha256", e.checksum},    {"fetched_at", e.fetched_at}};
    std::ofstream(sidecar_path(ref)) << side.dump(2) << '\n';
    return e;
  }

  /// fetch + parse, for bench plans that name collection matrices.
  ParsedMatrix load(const MatrixRef& ref, const FetchOptions& opt = {}) {
    const auto e = fetch(ref, opt);
    auto parsed = read_matrix_market(e.local_path);
    parsed.metadata.name = e.ref.name;
    return parsed;
  }

private:
  // Streams url to dest; returns bytes received.
  std::uint64_t download(const std::string& url, const fs::path& dest) {
    const auto parts = detail::split_url(url);
    httplib::Client cli(parts.origin);
    cli.set_follow_location(true);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(300);
    apply_proxy(cli, parts.origin.rfind("https", 0) == 0);

    std::ofstream out(dest, std::ios::binary);
    if (!out) throw io_error("cannot write " + dest.string());
    std::uint64_t bytes = 0;
    auto res = cli.Get(parts.prefix.empty() ? "/" : parts.prefix, [&](const char* data, std::size_t len) {
      out.write(data, static_cast<std::streamsize>(len));
      bytes += len;
      return static_cast<bool>(out);
    });
    out.close();
    if (!res) {
      std::error_code ec;
      fs::remove(dest, ec);
      throw network_error("GET " + url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      std::error_code ec;
      fs::remove(dest, ec);
      throw network_error("GET " + url + " returned HTTP " + std::to_string(res->status));
    }
    return bytes;
  }

  static void apply_proxy(httplib::Client& cli, bool https) {
    const char* names_https[] = {"HTTPS_PROXY", "https_proxy", "ALL_PROXY", "all_proxy"};
    const char* names_http[] = {"HTTP_PROXY", "http_proxy", "ALL_PROXY", "all_proxy"};
    const char* value = nullptr;
    for (const char* n : https ? names_https : names_http) {
      if (const char* v = std::getenv(n); v && *v) {
        value = v;
        break;
      }
    }
    if (!value) return;
    std::string p = value;
    if (auto s = p.find("://"); s != std::string::npos) p = p.substr(s + 3);
    if (auto at = p.rfind('@'); at != std::string::npos) p = p.substr(at + 1);
    if (auto slash = p.find('/'); slash != std::string::npos) p.resize(slash);
    int port = 80;
    if (auto colon = p.rfind(':'); colon != std::string::npos) {
      port = std::atoi(p.c_str() + colon + 1);
      p.resize(colon);
    }
    cli.set_proxy(p, port);
  }

  fs::path cache_dir_;
  std::string base_url_;
};

} // namespace lpu

#endif // LPU_COLLECTION_HPP
