#include "hoi/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "hoi/io.hpp"

namespace hoi {

namespace {

// Reads the whitespace-separated header tokens of a netpbm-style file and
// returns the offset of the first payload byte.
std::size_t parse_header(const std::vector<char>& bytes, int count, std::vector<std::string>& tokens) {
  std::size_t pos = 0;
  while (static_cast<int>(tokens.size()) < count) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) tok += bytes[pos++];
    require(!tok.empty(), ErrorCode::ParseError, "truncated image header");
    tokens.push_back(tok);
  }
  require(pos < bytes.size(), ErrorCode::ParseError, "truncated image header");
  return pos + 1;  // single whitespace byte after the last token
}

int parse_int(const std::string& s) {
  try {
    return std::stoi(s);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "bad image header value '" + s + "'");
  }
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::InvalidArgument, "ppm needs 1 or 3 channels");
  std::ostringstream header;
  header << "P6\n" << img.width << " " << img.height << "\n255\n";
  const std::string h = header.str();
  std::vector<char> out(h.begin(), h.end());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = img.at(x, y, img.channels == 3 ? c : 0);
        const double q = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(q * 255.0))));
      }
  io::write_bytes(path, out);
}

Image read_ppm(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  std::vector<std::string> tok;
  const std::size_t pos = parse_header(bytes, 4, tok);
  require(tok[0] == "P6" && tok[3] == "255", ErrorCode::ParseError, path.string() + ": not an 8-bit P6 file");
  Image img(parse_int(tok[1]), parse_int(tok[2]), 3);
  require(bytes.size() >= pos + img.data.size(), ErrorCode::ParseError, path.string() + ": truncated pixel data");
  for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = static_cast<unsigned char>(bytes[pos + k]) / 255.0;
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::InvalidArgument, "pfm needs 1 or 3 channels");
  std::ostringstream header;
  header << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  const std::string h = header.str();
  std::vector<char> out(h.begin(), h.end());
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const auto f = static_cast<float>(img.at(x, y, c));
        char buf[4];
        std::memcpy(buf, &f, 4);
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + 4);
        out.insert(out.end(), buf, buf + 4);
      }
  io::write_bytes(path, out);
}

Image read_pfm(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  std::vector<std::string> tok;
  const std::size_t pos = parse_header(bytes, 4, tok);
  require(tok[0] == "PF" || tok[0] == "Pf", ErrorCode::ParseError, path.string() + ": not a PFM file");
  double scale = 0;
  try {
    scale = std::stod(tok[3]);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, path.string() + ": bad PFM scale");
  }
  const bool little = scale < 0;
  Image img(parse_int(tok[1]), parse_int(tok[2]), tok[0] == "PF" ? 3 : 1);
  require(bytes.size() >= pos + img.data.size() * 4, ErrorCode::ParseError, path.string() + ": truncated PFM data");
  std::size_t k = pos;
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c, k += 4) {
        char buf[4];
        std::memcpy(buf, bytes.data() + k, 4);
        if (little != (std::endian::native == std::endian::little)) std::reverse(buf, buf + 4);
        float f;
        std::memcpy(&f, buf, 4);
        img.at(x, y, c) = f;
      }
  return img;
}

}  // namespace hoi
