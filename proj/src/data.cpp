#include "jfpd/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "jfpd/io.hpp"
#include "jfpd/rng.hpp"

namespace jfpd {

const std::vector<int>& DomainDataset::labels() const {
  if (!y) throw std::logic_error("dataset has no labels");
  return *y;
}

void DomainDataset::validate() const {
  if (x.rows() == 0 || x.cols() == 0) {
    throw std::invalid_argument("dataset must have at least one sample and one dimension");
  }
  if (classes < 2) throw std::invalid_argument("dataset must declare at least 2 classes");
  if (y) {
    if (y->size() != x.rows()) {
      throw std::invalid_argument("dataset has " + std::to_string(y->size()) + " labels for " +
                                  std::to_string(x.rows()) + " samples");
    }
    for (int label : *y) {
      if (label < 0 || label >= classes) {
        throw std::invalid_argument("label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(classes) + ")");
      }
    }
  }
}

DomainDataset DomainDataset::without_labels() const {
  DomainDataset out = *this;
  out.y.reset();
  return out;
}

namespace {

std::string shift_meta(const Shift& s) {
  std::ostringstream ss;
  ss << "rotation_deg=" << s.rotation_deg << ";translation=" << s.translation
     << ";scale=" << s.scale << ";noise_sigma=" << s.noise_sigma;
  return ss.str();
}

void rotate_plane(std::span<double> v, double cos_t, double sin_t, double cx, double cy) {
  const double x = v[0] - cx;
  const double y = v[1] - cy;
  v[0] = cx + cos_t * x - sin_t * y;
  v[1] = cy + sin_t * x + cos_t * y;
}

}  // namespace

DomainPair gen_gaussian_domains(const GaussianSpec& spec, const Shift& shift, std::uint64_t seed) {
  if (spec.classes < 2) throw std::invalid_argument("gen_gaussian_domains: classes must be >= 2");
  if (spec.dim < 2) throw std::invalid_argument("gen_gaussian_domains: dim must be >= 2");
  if (spec.n_per_class < 1) {
    throw std::invalid_argument("gen_gaussian_domains: n_per_class must be >= 1");
  }
  if (!(spec.spread >= 0.0) || !(spec.invariant_radius >= 0.0) || !(shift.noise_sigma >= 0.0) || !(shift.scale > 0.0) ||
      !std::isfinite(shift.rotation_deg) || !std::isfinite(shift.translation)) {
    throw std::invalid_argument("gen_gaussian_domains: invalid spread or shift parameters");
  }

  const auto c_count = static_cast<std::size_t>(spec.classes);
  const auto d = static_cast<std::size_t>(spec.dim);
  const auto n = static_cast<std::size_t>(spec.n_per_class);

  Xoshiro256ss root(seed);
  Xoshiro256ss source_rng = root.split();
  Xoshiro256ss target_rng = root.split();
  Xoshiro256ss offset_rng = root.split();

  Tensor offsets(c_count, d);
  if (spec.invariant_radius > 0.0 && d > 2) {
    for (std::size_t c = 0; c < c_count; ++c) {
      auto row = offsets.row(c);
      double norm = 0.0;
      for (std::size_t k = 2; k < d; ++k) {
        row[k] = offset_rng.normal();
        norm += row[k] * row[k];
      }
      norm = std::sqrt(norm);
      for (std::size_t k = 2; k < d; ++k) row[k] *= spec.invariant_radius / norm;
    }
  }

  auto draw = [&](Xoshiro256ss& rng) {
    DomainDataset ds;
    ds.x = Tensor(c_count * n, d);
    ds.y = std::vector<int>(c_count * n);
    ds.classes = spec.classes;
    for (std::size_t c = 0; c < c_count; ++c) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                           static_cast<double>(c_count);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = c * n + i;
        auto row = ds.x.row(r);
        for (std::size_t k = 0; k < d; ++k) row[k] = offsets(c, k) + spec.spread * rng.normal();
        row[0] += spec.radius * std::cos(angle);
        row[1] += spec.radius * std::sin(angle);
        (*ds.y)[r] = static_cast<int>(c);
      }
    }
    return ds;
  };

  DomainPair pair{draw(source_rng), draw(target_rng)};
  pair.source.domain = Domain::source;
  pair.target.domain = Domain::target;

  const double theta = shift.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  for (std::size_t r = 0; r < pair.target.size(); ++r) {
    auto row = pair.target.x.row(r);
    rotate_plane(row, cos_t, sin_t, 0.0, 0.0);
    for (double& v : row) v *= shift.scale;
    row[0] += shift.translation;
    if (shift.noise_sigma > 0.0) {
      for (double& v : row) v += shift.noise_sigma * target_rng.normal();
    }
  }

  std::ostringstream meta;
  meta << "gaussian;classes=" << spec.classes << ";dim=" << spec.dim
       << ";n_per_class=" << spec.n_per_class << ";radius=" << spec.radius
       << ";spread=" << spec.spread << ";invariant_radius=" << spec.invariant_radius
       << ";seed=" << seed;
  pair.source.meta = meta.str();
  pair.target.meta = meta.str() + ";" + shift_meta(shift);
  return pair;
}

DomainPair gen_two_moons_rotated(int n, double rotation_deg, double noise_sigma,
                                 std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_two_moons_rotated: n must be >= 2");
  if (!(noise_sigma >= 0.0) || !std::isfinite(rotation_deg)) {
    throw std::invalid_argument("gen_two_moons_rotated: invalid noise or rotation");
  }
  const auto total = static_cast<std::size_t>(n);
  const std::size_t n_outer = total / 2;
  const std::size_t n_inner = total - n_outer;

  Xoshiro256ss root(seed);
  Xoshiro256ss source_rng = root.split();
  Xoshiro256ss target_rng = root.split();

  auto draw = [&](Xoshiro256ss& rng) {
    DomainDataset ds;
    ds.x = Tensor(total, 2);
    ds.y = std::vector<int>(total);
    ds.classes = 2;
    auto place = [&](std::size_t r, std::size_t i, std::size_t count, int label) {
      const double t = count > 1 ? std::numbers::pi * static_cast<double>(i) /
                                       static_cast<double>(count - 1)
                                 : 0.0;
      double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = label == 0 ? std::sin(t) : 1.0 - std::sin(t) - 0.5;
      x += noise_sigma * rng.normal();
      y += noise_sigma * rng.normal();
      ds.x(r, 0) = x;
      ds.x(r, 1) = y;
      (*ds.y)[r] = label;
    };
    for (std::size_t i = 0; i < n_outer; ++i) place(i, i, n_outer, 0);
    for (std::size_t i = 0; i < n_inner; ++i) place(n_outer + i, i, n_inner, 1);
    return ds;
  };

  DomainPair pair{draw(source_rng), draw(target_rng)};
  pair.source.domain = Domain::source;
  pair.target.domain = Domain::target;
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  for (std::size_t r = 0; r < pair.target.size(); ++r) {
    rotate_plane(pair.target.x.row(r), std::cos(theta), std::sin(theta), 0.5, 0.25);
  }
  std::ostringstream meta;
  meta << "moons;n=" << n << ";noise_sigma=" << noise_sigma << ";seed=" << seed;
  pair.source.meta = meta.str();
  pair.target.meta = meta.str() + ";rotation_deg=" + std::to_string(rotation_deg);
  return pair;
}

namespace {

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_++]);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view out(bytes_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t offset() const { return pos_; }
  const std::string& name() const { return name_; }

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw IdxParseError(name_ + ": " + what + " at offset " + std::to_string(at));
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      fail("truncated file, needed " + std::to_string(n) + " more bytes", pos_);
    }
  }

  std::string bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

ByteReader open_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ByteReader(ss.str(), path.string());
}

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages parse_images(const std::filesystem::path& path) {
  ByteReader r = open_idx(path);
  const std::uint32_t magic = r.u32();
  if (magic != 0x00000803U) r.fail("bad image magic", 0);
  IdxImages img;
  img.count = r.u32();
  img.rows = r.u32();
  img.cols = r.u32();
  const std::size_t n = static_cast<std::size_t>(img.count) * img.rows * img.cols;
  const auto bytes = r.take(n);
  img.pixels.assign(bytes.begin(), bytes.end());
  return img;
}

std::vector<std::uint8_t> parse_labels(const std::filesystem::path& path) {
  ByteReader r = open_idx(path);
  const std::uint32_t magic = r.u32();
  if (magic != 0x00000801U) r.fail("bad label magic", 0);
  const std::uint32_t count = r.u32();
  const auto bytes = r.take(count);
  return {bytes.begin(), bytes.end()};
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out += static_cast<char>((v >> shift) & 0xFF);
}

}  // namespace

std::vector<std::uint8_t> read_idx_pixels(const std::filesystem::path& images) {
  return parse_images(images).pixels;
}

DomainDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  IdxImages img = parse_images(images);
  std::vector<std::uint8_t> lab = parse_labels(labels);
  if (lab.size() != img.count) {
    throw IdxParseError("label count " + std::to_string(lab.size()) + " at offset 4 of " +
                        labels.string() + " does not match image count " +
                        std::to_string(img.count) + " at offset 4 of " + images.string());
  }
  if (img.count == 0 || img.rows == 0 || img.cols == 0) {
    throw IdxParseError(images.string() + ": empty image set at offset 4");
  }
  const std::size_t dim = static_cast<std::size_t>(img.rows) * img.cols;
  DomainDataset ds;
  ds.x = Tensor(img.count, dim);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) ds.x[i] = img.pixels[i] / 255.0;
  ds.y = std::vector<int>(lab.begin(), lab.end());
  int max_label = 0;
  for (int v : *ds.y) max_label = std::max(max_label, v);
  ds.classes = std::max(2, max_label + 1);
  ds.meta = "idx;images=" + images.filename().string() + ";labels=" + labels.filename().string();
  return ds;
}

void write_idx_images(const std::filesystem::path& path, std::uint32_t count, std::uint32_t rows,
                      std::uint32_t cols, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(count) * rows * cols) {
    throw std::invalid_argument("write_idx_images: pixel count does not match dimensions");
  }
  std::string out;
  put_u32(out, 0x00000803U);
  put_u32(out, count);
  put_u32(out, rows);
  put_u32(out, cols);
  out.append(pixels.begin(), pixels.end());
  write_file_atomic(path, out);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::string out;
  put_u32(out, 0x00000801U);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  write_file_atomic(path, out);
}

Tensor Standardization::apply(const Tensor& x) const {
  if (x.cols() != mean.size()) {
    throw DimensionError("standardization fitted on " + std::to_string(mean.size()) +
                         " dims applied to " + x.shape().str());
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / stddev[j];
  }
  return out;
}

Standardization fit_standardization(const Tensor& source) {
  if (source.rows() == 0) throw std::invalid_argument("fit_standardization: empty source");
  const std::size_t d = source.cols();
  const auto n = static_cast<double>(source.rows());
  Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < source.rows(); ++i) {
    auto row = source.row(i);
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t i = 0; i < source.rows(); ++i) {
    auto row = source.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = row[j] - s.mean[j];
      s.stddev[j] += dev * dev;
    }
  }
  for (double& v : s.stddev) v = std::max(std::sqrt(v / n), kStdFloor);
  return s;
}

DomainPair standardize(const DomainPair& pair, Standardization* stats_out) {
  if (pair.source.dim() != pair.target.dim()) {
    throw DimensionError("standardize: source and target dimensions differ");
  }
  Standardization s = fit_standardization(pair.source.x);
  DomainPair out = pair;
  out.source.x = s.apply(pair.source.x);
  out.target.x = s.apply(pair.target.x);
  if (stats_out) *stats_out = std::move(s);
  return out;
}

void export_dataset_csv(const DomainDataset& data, const std::filesystem::path& path) {
  CsvTable table;
  for (std::size_t j = 0; j < data.dim(); ++j) table.header.push_back("d" + std::to_string(j));
  table.header.push_back("label");
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::string> row;
    for (double v : data.x.row(i)) row.push_back(format_real(v));
    row.push_back(data.y ? std::to_string((*data.y)[i]) : std::string());
    table.rows.push_back(std::move(row));
  }
  emit_csv(table, path);
}

}  // namespace jfpd
