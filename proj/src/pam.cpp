#include "ctrgan/pam.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

#include "ctrgan/errors.hpp"

namespace ctrgan::gait {

namespace {

void write_all(const std::filesystem::path& path, const std::string& header,
               const std::vector<uint8_t>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<uint8_t> read_body(std::istream& in, size_t n,
                               const std::filesystem::path& path) {
  std::vector<uint8_t> body(n);
  in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw DataError("truncated image data: " + path.string());
  return body;
}

uint16_t sample16(const std::vector<uint8_t>& b, size_t i) {
  return static_cast<uint16_t>((b[2 * i] << 8) | b[2 * i + 1]);
}

}  // namespace

void save_frame_pam(const IuvaFrame& frame, const std::filesystem::path& path,
                    int bitdepth) {
  if (bitdepth != 8 && bitdepth != 16)
    throw DataError("save_frame_pam: bitdepth must be 8 or 16");
  const int h = frame.height(), w = frame.width();
  const int maxval = bitdepth == 8 ? 255 : 65535;
  std::ostringstream hdr;
  hdr << "P7\nWIDTH " << w << "\nHEIGHT " << h << "\nDEPTH 4\nMAXVAL " << maxval
      << "\nTUPLTYPE CTRGAN_IUVA\nENDHDR\n";

  std::vector<uint8_t> body;
  body.reserve(static_cast<size_t>(h) * w * 4 * (bitdepth / 8));
  auto push = [&](uint32_t v) {
    if (bitdepth == 16) body.push_back(static_cast<uint8_t>(v >> 8));
    body.push_back(static_cast<uint8_t>(v & 0xff));
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      push(static_cast<uint32_t>(std::lround(frame.I(y, x))));
      push(static_cast<uint32_t>(std::lround(frame.U(y, x) * maxval)));
      push(static_cast<uint32_t>(std::lround(frame.V(y, x) * maxval)));
      push(static_cast<uint32_t>(std::lround(frame.A(y, x) * maxval)));
    }
  write_all(path, hdr.str(), body);
}

IuvaFrame load_frame_pam(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "P7")
    throw DataError("not a PAM file: " + path.string());
  int w = -1, h = -1, depth = -1, maxval = -1;
  while (std::getline(in, line)) {
    if (line == "ENDHDR") break;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "WIDTH") ls >> w;
    else if (key == "HEIGHT") ls >> h;
    else if (key == "DEPTH") ls >> depth;
    else if (key == "MAXVAL") ls >> maxval;
    // TUPLTYPE is informative only
  }
  if (w <= 0 || h <= 0 || depth != 4 || (maxval != 255 && maxval != 65535))
    throw DataError("unsupported PAM header: " + path.string());
  const int bytes_per = maxval == 255 ? 1 : 2;
  const size_t n = static_cast<size_t>(w) * h * 4;
  const auto body = read_body(in, n * bytes_per, path);

  IuvaFrame f;
  f.I.setZero(h, w);
  f.U.setZero(h, w);
  f.V.setZero(h, w);
  f.A.setZero(h, w);
  size_t i = 0;
  auto next = [&]() -> double {
    const double v = bytes_per == 1 ? body[i] : sample16(body, i);
    ++i;
    return v;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.I(y, x) = static_cast<float>(next());
      f.U(y, x) = static_cast<float>(next() / maxval);
      f.V(y, x) = static_cast<float>(next() / maxval);
      f.A(y, x) = static_cast<float>(next() / maxval);
    }
  return f;
}

void save_image_ppm(const RgbImage& img, const std::filesystem::path& path) {
  const int h = img.height(), w = img.width();
  std::ostringstream hdr;
  hdr << "P6\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> body;
  body.reserve(static_cast<size_t>(h) * w * 3);
  auto q = [](float v) {
    return static_cast<uint8_t>(std::lround(std::min(std::max(v, 0.0f), 1.0f) * 255.0f));
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      body.push_back(q(img.r(y, x)));
      body.push_back(q(img.g(y, x)));
      body.push_back(q(img.b(y, x)));
    }
  write_all(path, hdr.str(), body);
}

RgbImage load_image_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw DataError("unsupported PPM: " + path.string());
  in.get();  // single whitespace after header
  const auto body = read_body(in, static_cast<size_t>(w) * h * 3, path);
  RgbImage img;
  img.r.setZero(h, w);
  img.g.setZero(h, w);
  img.b.setZero(h, w);
  size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.r(y, x) = body[i++] / 255.0f;
      img.g(y, x) = body[i++] / 255.0f;
      img.b(y, x) = body[i++] / 255.0f;
    }
  return img;
}

void save_heatmap_pgm(const Eigen::ArrayXXd& values,
                      const std::filesystem::path& path) {
  const int h = static_cast<int>(values.rows());
  const int w = static_cast<int>(values.cols());
  std::ostringstream hdr;
  hdr << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> body;
  body.reserve(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = std::min(std::max(values(y, x), 0.0), 1.0);
      body.push_back(static_cast<uint8_t>(std::lround(v * 255.0)));
    }
  write_all(path, hdr.str(), body);
}

}  // namespace ctrgan::gait
