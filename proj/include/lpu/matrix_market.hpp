#ifndef LPU_MATRIX_MARKET_HPP
#define LPU_MATRIX_MARKET_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "errors.hpp"
#include "sparse_matrix.hpp"

#ifdef LPU_WITH_ZLIB
#include <zlib.h>
#endif

namespace lpu {

enum class Symmetry { general, symmetric };

inline const char* to_string(Symmetry s) { return s == Symmetry::general ? "general" : "symmetric"; }

struct MatrixMetadata {
  std::string name;
  Symmetry symmetry = Symmetry::general;
  /// Stored entries after symmetric expansion (equals nnz() of the parsed matrix).
  std::size_t declared_nnz = 0;
  /// Entry count written in the file's size line, before expansion.
  std::size_t file_entries = 0;
  std::string source;
};

struct ParsedMatrix {
  SparseMatrix matrix;
  MatrixMetadata metadata;
};

namespace detail {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Cursor over whitespace-separated tokens of one line.
class TokenCursor {
public:
  TokenCursor(std::string_view line, std::size_t line_no) : rest_(line), line_no_(line_no) {}

  std::string_view next(const char* what) {
    skip_space();
    if (rest_.empty()) throw parse_error(std::string("missing ") + what, line_no_);
    std::size_t end = 0;
    while (end < rest_.size() && !std::isspace(static_cast<unsigned char>(rest_[end]))) ++end;
    auto tok = rest_.substr(0, end);
    rest_.remove_prefix(end);
    return tok;
  }

  std::size_t next_count(const char* what) {
    auto tok = next(what);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw parse_error(std::string("invalid ") + what + " '" + std::string(tok) + "'", line_no_);
    return v;
  }

  double next_real(const char* what) {
    auto tok = next(what);
    if (tok.size() > 1 && tok.front() == '+') tok.remove_prefix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec == std::errc::result_out_of_range) {
      // from_chars rejects subnormals; strtod does not.
      v = std::strtod(std::string(tok).c_str(), nullptr);
    } else if (ec != std::errc() || p != tok.data() + tok.size()) {
      throw parse_error(std::string("invalid ") + what + " '" + std::string(tok) + "'", line_no_);
    }
    if (!std::isfinite(v)) throw parse_error(std::string("non-finite ") + what, line_no_);
    return v;
  }

  bool at_end() {
    skip_space();
    return rest_.empty();
  }

private:
  void skip_space() {
    while (!rest_.empty() && std::isspace(static_cast<unsigned char>(rest_.front())))
      rest_.remove_prefix(1);
  }

  std::string_view rest_;
  std::size_t line_no_;
};

} // namespace detail

/**
 * Parses Matrix Market coordinate text (field real or integer; symmetry general
 * or symmetric). Symmetric files are expanded to full storage. Duplicate
 * coordinates are rejected rather than summed.
 */
inline ParsedMatrix parse_matrix_market(std::string_view text, std::string name = {},
                                        std::string source = "stream") {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };

  MatrixMetadata meta;
  meta.name = std::move(name);
  meta.source = std::move(source);

  std::string_view line;
  if (!next_line(line)) throw parse_error("empty input", 1);
  detail::TokenCursor header(line, line_no);
  if (detail::lowercase(header.next("banner")) != "%%matrixmarket")
    throw parse_error("missing %%MatrixMarket banner", line_no);
  if (detail::lowercase(header.next("object")) != "matrix")
    throw parse_error("only 'matrix' objects are supported", line_no);
  if (detail::lowercase(header.next("format")) != "coordinate")
    throw parse_error("only coordinate format is supported", line_no);
  const auto field = detail::lowercase(header.next("field"));
  if (field == "pattern" || field == "complex")
    throw parse_error("unsupported field '" + field + "' (real or integer required)", line_no);
  if (field != "real" && field != "integer" && field != "double")
    throw parse_error("unknown field '" + field + "'", line_no);
  const auto sym = detail::lowercase(header.next("symmetry"));
  if (sym == "symmetric")
    meta.symmetry = Symmetry::symmetric;
  else if (sym == "skew-symmetric" || sym == "hermitian")
    throw parse_error("unsupported symmetry '" + sym + "'", line_no);
  else if (sym != "general")
    throw parse_error("unknown symmetry '" + sym + "'", line_no);
  if (!header.at_end()) throw parse_error("trailing tokens in banner", line_no);

  // Size line: first non-comment, non-blank line.
  std::string_view size_line;
  for (;;) {
    if (!next_line(size_line)) throw parse_error("missing size line", line_no);
    auto t = detail::trim(size_line);
    if (!t.empty() && t.front() != '%') break;
  }
  detail::TokenCursor sizes(size_line, line_no);
  const std::size_t nrows = sizes.next_count("row count");
  const std::size_t ncols = sizes.next_count("column count");
  const std::size_t entries = sizes.next_count("entry count");
  if (!sizes.at_end()) throw parse_error("trailing tokens in size line", line_no);
  if (meta.symmetry == Symmetry::symmetric && nrows != ncols)
    throw parse_error("symmetric matrix must be square", line_no);
  meta.file_entries = entries;

  std::vector<Triplet> trips;
  trips.reserve(meta.symmetry == Symmetry::symmetric ? 2 * entries : entries);
  std::size_t seen = 0;
  std::string_view entry;
  while (next_line(entry)) {
    auto t = detail::trim(entry);
    if (t.empty() || t.front() == '%') continue;
    if (seen == entries) throw parse_error("more entries than declared", line_no);
    detail::TokenCursor cur(t, line_no);
    const std::size_t i = cur.next_count("row index");
    const std::size_t j = cur.next_count("column index");
    const double v = cur.next_real("value");
    if (!cur.at_end()) throw parse_error("trailing tokens in entry", line_no);
    if (i < 1 || i > nrows || j < 1 || j > ncols)
      throw parse_error("index (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside declared " + std::to_string(nrows) + "x" +
                            std::to_string(ncols),
                        line_no);
    trips.push_back({i - 1, j - 1, v});
    if (meta.symmetry == Symmetry::symmetric && i != j) trips.push_back({j - 1, i - 1, v});
    ++seen;
  }
  if (seen != entries)
    throw parse_error("expected " + std::to_string(entries) + " entries, found " +
                          std::to_string(seen),
                      line_no);

  SparseMatrix m;
  try {
    m = from_triplets(nrows, ncols, std::move(trips), DuplicatePolicy::reject);
  } catch (const argument_error& e) {
    throw parse_error(e.what());
  }
  meta.declared_nnz = m.nnz();
  return ParsedMatrix{std::move(m), std::move(meta)};
}

inline ParsedMatrix parse_matrix_market(std::istream& in, std::string name = {},
                                        std::string source = "stream") {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_matrix_market(std::string_view(text), std::move(name), std::move(source));
}

/// Reads a whole file; `.gz` files are inflated when built with zlib.
inline std::string read_file_contents(const std::filesystem::path& path) {
  if (path.extension() == ".gz") {
#ifdef LPU_WITH_ZLIB
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw io_error("cannot open " + path.string());
    std::string out;
    char buf[1 << 16];
    int got = 0;
    while ((got = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw io_error("corrupt gzip stream in " + path.string());
    return out;
#else
    throw io_error("gzip input requires a zlib-enabled build: " + path.string());
#endif
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline ParsedMatrix read_matrix_market(const std::filesystem::path& path) {
  auto name = path.filename().string();
  for (const char* ext : {".gz", ".mtx"}) {
    if (name.size() > std::string_view(ext).size() && name.ends_with(ext))
      name.resize(name.size() - std::string_view(ext).size());
  }
  const auto text = read_file_contents(path);
  return parse_matrix_market(std::string_view(text), name, path.string());
}

/// Writes general coordinate real format with round-trip (17 digit) precision.
inline void write_matrix_market(std::ostream& out, const SparseMatrix& A,
                                std::string_view comment = {}) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  if (!comment.empty()) out << '%' << comment << '\n';
  out << A.rows() << ' ' << A.cols() << ' ' << A.nnz() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto cols = A.row_cols(i);
    auto vals = A.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", vals[k]);
      out << i + 1 << ' ' << cols[k] + 1 << ' ' << buf << '\n';
    }
  }
}

} // namespace lpu

#endif // LPU_MATRIX_MARKET_HPP
