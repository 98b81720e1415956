#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssdd/augment.hpp"
#include "ssdd/nn.hpp"
#include "ssdd/parameterization.hpp"

namespace ssdd {

// Generic binary container: a versioned header, ordered UTF-8 metadata,
// ordered named f32 fields, and a trailing CRC-32 over everything after the
// magic/version prefix. Layout (little-endian):
//
//   magic[8] "SSDDBOX1" | u32 version | u32 meta count
//   per entry: u32 key len, key, u32 value len, value
//   u32 field count
//   per field: u32 name len, name, u8 dtype (0 = f32), u8 ndim, u64 dims[],
//              f32 payload
//   u32 crc32
//
// Field order is part of the format: equal content serializes to equal bytes.
struct ContainerField {
  std::string name;
  Shape shape;
  std::vector<float> data;
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

struct Container {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<ContainerField> fields;

  std::vector<uint8_t> serialize() const;
  static Container deserialize(std::span<const uint8_t> bytes);

  const ContainerField* find(const std::string& name) const;
  const ContainerField& require(const std::string& name) const;
  const std::string* meta(const std::string& key) const;
  const std::string& require_meta(const std::string& key) const;

  void add_field(const std::string& name, const Tensor& values);  // f64 -> f32 round
  Tensor field_tensor(const std::string& name, bool requires_grad = false) const;
};

uint32_t crc32_ieee(std::span<const uint8_t> bytes);

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

// The stored output of distillation. The float budget covers bases, means,
// coefficients and approximation-net weights; augmented-view coefficient
// blocks are deliberately absent (the nets replace them).
struct DistilledArtifact {
  ImageGeom geom;
  int scale = 1;
  int64_t d_y = 0;
  int64_t budget_images = 0;  // N
  Tensor image_basis;         // U x d_x_b
  Tensor image_mean;          // d_x_b
  Tensor image_coeffs;        // m x U
  Tensor rep_basis;           // V x d_y
  Tensor rep_mean;            // d_y
  Tensor rep_coeffs;          // m x V
  std::vector<Mlp2> approx_nets;  // one per transform; may be empty pre-training
  int64_t approx_hidden = 0;
  AugmentationSpec spec;
  std::vector<std::pair<std::string, std::string>> extra_metadata;

  int64_t m() const { return image_coeffs.dim(0); }
  int64_t u() const { return image_basis.dim(0); }
  int64_t v() const { return rep_basis.dim(0); }
  int64_t d_x_b() const { return image_basis.dim(1); }
  int64_t float_count() const;

  ImageBases image_bases_view() const;
  RepBases rep_bases_view() const;
};

struct BudgetLedger {
  int64_t n_images = 0;
  int64_t d_x = 0;
  std::vector<std::pair<std::string, int64_t>> items;
  int64_t total = 0;
  int64_t slack = 0;
  bool within_budget() const { return slack >= 0; }
  std::string table() const;
};

// Itemized float accounting against N images' worth of storage.
BudgetLedger audit_budget(const DistilledArtifact& artifact, int64_t n_images, int64_t d_x);
// Same recount walking a raw container, for cross-checking the ledger.
int64_t container_payload_floats(const Container& c);
void enforce_budget(const BudgetLedger& ledger);

Container to_container(const DistilledArtifact& artifact);
DistilledArtifact artifact_from_container(const Container& c);

// Assembles the stored artifact from final distillation state; `nets` may be
// empty when approximation training has not run yet.
DistilledArtifact make_artifact(const Parameterization& param, std::vector<Mlp2> nets,
                                int64_t approx_hidden, int64_t budget_images,
                                std::vector<std::pair<std::string, std::string>> extra_metadata);

// Extractor checkpoints share the container format with a model-kind tag.
Container convnet_to_container(const ConvNetExtractor& net);
std::unique_ptr<ConvNetExtractor> convnet_from_container(const Container& c);
Container mlp_to_container(const MlpExtractor& net, const MlpExtractorConfig& cfg);
std::unique_ptr<MlpExtractor> mlp_from_container(const Container& c);
Container teacher_to_container(const TeacherModel& teacher);
TeacherModel teacher_from_container(const Container& c);

}  // namespace ssdd
