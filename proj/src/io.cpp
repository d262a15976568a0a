#include "pmdiag/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <array>
#include <fstream>
#include <sstream>
#include <system_error>

#include "pmdiag/errors.hpp"

namespace pmdiag {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Validation: return "ValidationError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidFault: return "InvalidFault";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::FlatSignal: return "FlatSignal";
    case ErrorCode::SegmentationFailed: return "SegmentationFailed";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::BadDistribution: return "BadDistribution";
    case ErrorCode::EmptyCalibration: return "EmptyCalibration";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::TestTooSmall: return "TestTooSmall";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
  }
  return "Unknown";
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw Error(ErrorCode::Io, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::Io, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::Io, "cannot open " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    Json obj = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + " is not a JSON object",
                  line_no);
    }
    fn(obj, line_no);
  }
  if (in.bad()) {
    throw Error(ErrorCode::Io, "read failure on " + path.string());
  }
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::InvalidArgument, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

double json_number(const Json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw Error(ErrorCode::Parse, std::string("missing or non-numeric '") + key + "'", line);
  }
  return it->get<double>();
}

std::string json_string(const Json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::Parse, std::string("missing or non-string '") + key + "'", line);
  }
  return it->get<std::string>();
}

}  // namespace pmdiag
