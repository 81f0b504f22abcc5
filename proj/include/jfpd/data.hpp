#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jfpd/tensor.hpp"

namespace jfpd {

enum class Domain { source, target };

/// Samples as rows of x, optional labels in [0, classes).
struct DomainDataset {
  Tensor x;
  std::optional<std::vector<int>> y;
  int classes = 0;
  Domain domain = Domain::source;
  std::string meta;

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
  bool labeled() const { return y.has_value(); }
  const std::vector<int>& labels() const;

  /// Checks N >= 1, D >= 1 and label ranges; throws std::invalid_argument.
  void validate() const;
  DomainDataset without_labels() const;
};

/// Geometric change applied to the source clusters to build a target.
struct Shift {
  double rotation_deg = 0.0;
  double translation = 0.0;
  double scale = 1.0;
  double noise_sigma = 0.0;
};

struct GaussianSpec {
  int classes = 3;
  int dim = 2;
  int n_per_class = 100;
  /// Distance of the class means from the origin in the (d0, d1) plane.
  double radius = 3.0;
  /// Per-dimension standard deviation of each cluster.
  double spread = 1.0;
  /// Norm of a class-specific mean offset in dims d2..d{D-1}, which the
  /// rotation leaves untouched. 0 keeps those dims zero-mean.
  double invariant_radius = 0.0;
};

struct DomainPair {
  DomainDataset source;
  DomainDataset target;
};

/// Class c has its mean at angle 2*pi*c/C on a circle of the given radius in
/// the (d0, d1) plane, plus an optional random offset of norm
/// invariant_radius in the remaining dims. The target is an
/// independent draw pushed through rotation (d0, d1 plane) -> scale ->
/// translation (along d0) plus isotropic noise. Both sides keep labels.
DomainPair gen_gaussian_domains(const GaussianSpec& spec, const Shift& shift, std::uint64_t seed);

/// Two interleaving half circles, n samples per domain split evenly between
/// the moons. The target is rotated about the source centroid (0.5, 0.25).
DomainPair gen_two_moons_rotated(int n, double rotation_deg, double noise_sigma,
                                 std::uint64_t seed);

class IdxParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0, 1] and flattened row-major.
DomainDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Raw bytes of the images in an IDX image file, in file order.
std::vector<std::uint8_t> read_idx_pixels(const std::filesystem::path& images);

void write_idx_images(const std::filesystem::path& path, std::uint32_t count, std::uint32_t rows,
                      std::uint32_t cols, const std::vector<std::uint8_t>& pixels);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  Tensor apply(const Tensor& x) const;
};

inline constexpr double kStdFloor = 1e-8;

/// Per-dimension statistics from the source, applied to both domains.
Standardization fit_standardization(const Tensor& source);
DomainPair standardize(const DomainPair& pair, Standardization* stats_out = nullptr);

/// CSV with header d0..d{D-1},label (label column empty when unlabeled).
void export_dataset_csv(const DomainDataset& data, const std::filesystem::path& path);

}  // namespace jfpd
