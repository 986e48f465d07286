#include "pinet/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "pinet/error.hpp"

namespace pinet {

namespace {

void write_p5(int w, int h, const std::vector<std::uint8_t>& data, bool binary,
              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  if (binary) {
    std::vector<std::uint8_t> scaled(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) scaled[i] = data[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(scaled.data()), static_cast<std::streamsize>(scaled.size()));
  } else {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  }
  if (!out) throw ValidationError("failed writing " + path.string());
}

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError(path.string() + ": truncated PGM header");
  return tok;
}

int header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad PGM header field '" + tok + "'");
  }
}

}  // namespace

void write_pgm(const MaskImage& mask, const std::filesystem::path& path) {
  write_p5(mask.width, mask.height, mask.pixels, true, path);
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_p5(image.width, image.height, image.pixels, false, path);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  if (header_token(in, path) != "P5") throw FormatError(path.string() + ": not a P5 PGM");
  const int w = header_int(in, path);
  const int h = header_int(in, path);
  const int maxval = header_int(in, path);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError(path.string() + ": unsupported PGM dimensions or maxval");
  }
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  return img;
}

MaskImage read_mask_pgm(const std::filesystem::path& path) {
  const GrayImage g = read_pgm(path);
  MaskImage m(g.width, g.height);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.pixels[i] = g.pixels[i] != 0;
  return m;
}

bool touches_border(const MaskImage& mask) {
  for (int u = 0; u < mask.width; ++u) {
    if (mask.at(u, 0) || mask.at(u, mask.height - 1)) return true;
  }
  for (int v = 0; v < mask.height; ++v) {
    if (mask.at(0, v) || mask.at(mask.width - 1, v)) return true;
  }
  return false;
}

}  // namespace pinet
