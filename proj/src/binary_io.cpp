#include "randproto/binary_io.hpp"

#include <sstream>

namespace randproto::io {

AtomicFile::AtomicFile(std::filesystem::path path)
    : path_(std::move(path)), tmp_(path_) {
  tmp_ += ".tmp";
  out_.open(tmp_, std::ios::binary | std::ios::trunc);
  if (!out_) fail(Errc::kIo, "cannot open " + tmp_.string() + " for writing");
}

AtomicFile::~AtomicFile() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_, ec);
  }
}

void AtomicFile::commit() {
  out_.flush();
  if (!out_) fail(Errc::kIo, "write failed for " + tmp_.string());
  out_.close();
  std::error_code ec;
  std::filesystem::rename(tmp_, path_, ec);
  if (ec) fail(Errc::kIo, "cannot rename " + tmp_.string() + ": " + ec.message());
  committed_ = true;
}

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& text) {
  AtomicFile file(path);
  file.stream() << text;
  file.commit();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kIo, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace randproto::io
