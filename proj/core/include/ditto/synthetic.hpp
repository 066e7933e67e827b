#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ditto/dataset.hpp"

namespace ditto {

// Gaussian class mixture the domains are drawn from. Without explicit means
// the class centers sit on a circle of `radius` in the first two coordinates,
// starting at `phase_deg` and spaced 360/num_classes degrees apart.
struct MixtureSpec {
  std::size_t num_classes = 3;
  std::size_t dim = 2;
  std::vector<std::vector<double>> means;
  double radius = 4.0;
  double phase_deg = 90.0;
  double sigma = 1.0;

  std::vector<std::vector<double>> class_means() const;
  void validate() const;
};

enum class TransformKind { Identity, Rotation, Translation, Permutation, Noise };

struct DomainTransform {
  TransformKind kind = TransformKind::Identity;
  double degrees = 0.0;                  // Rotation: counter-clockwise in (f0, f1)
  std::vector<double> shift;             // Translation
  std::vector<std::size_t> permutation;  // Permutation: output column j = input column perm[j]
  double sigma = 0.0;                    // Noise: extra isotropic Gaussian noise

  static DomainTransform rotation(double degrees);
  std::string describe() const;
};

struct SplitSizes {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  std::size_t few_shot_pool = 0;
  std::size_t eval = 0;
};

struct DomainSpec {
  std::string id;
  bool is_source = false;
  DomainTransform transform;
  SplitSizes sizes;
};

struct SyntheticSpec {
  MixtureSpec mixture;
  std::vector<DomainSpec> domains;

  void validate() const;
};

// Three classes centered at radii 2, 5 and 8 on the positive f0 axis. A ring
// with evenly spaced classes is a poor rotation benchmark: rotating it by half
// the class spacing yields a marginal that matches the source under two
// different class assignments. Distinct radii keep the correct one
// identifiable while accuracy still drops steadily with the angle.
MixtureSpec radial_mixture();

// Source "src" plus one rotated target "rot<angle>" per angle, drawn from
// radial_mixture().
SyntheticSpec rotation_ladder(const std::vector<double>& angles, std::size_t labeled = 2000,
                              std::size_t unlabeled = 2000, std::size_t few_shot_pool = 100,
                              std::size_t eval = 1000);

// Training splits are fresh draws per domain. The eval splits of all domains
// are transforms of one shared base sample, so eval row i is paired across
// domains.
DomainDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// CSV schema: `domain,split,label,f0,...` with split one of labeled,
// unlabeled, fewshot, eval and an empty label on unlabeled rows. One file per
// domain/split plus a dataset.json manifest.
void write_dataset(const DomainDataset& data, const std::filesystem::path& dir);
DomainDataset load_dataset(const std::filesystem::path& dir);
// Reads the given CSV files; `targets` lists the domains that must be present.
DomainDataset load_dataset_files(const std::vector<std::filesystem::path>& files, const std::string& source,
                                 const std::vector<std::string>& targets, std::size_t num_classes);

// Appends `domain,split,label,f...` rows for a labeled or unlabeled split.
void write_split_csv(std::ostream& os, const std::string& domain, const std::string& split, const Tensor& x,
                     const std::vector<int>* labels);
std::string dataset_csv_header(std::size_t dim);

}  // namespace ditto
