#pragma once

#include <memory>
#include <string>
#include <vector>

#include "luxmix/classical.hpp"
#include "luxmix/models.hpp"

namespace luxmix {

struct UnmixOutput {
  AbundanceVector z;
  Spectrum corrected;  // the spectrum the method reconstructs against
  bool degenerate = false;
};

// Uniform surface over the three unmixing methods; evaluate() and
// unmix_cube() run on any of them.
class UnmixEngine {
 public:
  virtual ~UnmixEngine() = default;
  virtual std::string name() const = 0;
  virtual const EndmemberLibrary& library() const = 0;
  virtual std::vector<UnmixOutput> unmix(const std::vector<LabeledSample>& samples) const = 0;
};

class BaselineEngine final : public UnmixEngine {
 public:
  BaselineEngine(LibraryPtr lib, DualBandParams params)
      : lib_(std::move(lib)), params_(params) {}
  std::string name() const override { return "baseline"; }
  const EndmemberLibrary& library() const override { return *lib_; }
  const DualBandParams& params() const { return params_; }
  std::vector<UnmixOutput> unmix(const std::vector<LabeledSample>& samples) const override;

 private:
  LibraryPtr lib_;
  DualBandParams params_;
};

// corrected := the raw fluorescence (the Eq.-3 reconstruction target).
class AcuNetEngine final : public UnmixEngine {
 public:
  AcuNetEngine(AcuNetModel model, LibraryPtr lib)
      : model_(std::move(model)), lib_(std::move(lib)) {}
  std::string name() const override { return "acu-net"; }
  const EndmemberLibrary& library() const override { return *lib_; }
  const AcuNetModel& model() const { return model_; }
  std::vector<UnmixOutput> unmix(const std::vector<LabeledSample>& samples) const override;

 private:
  AcuNetModel model_;
  LibraryPtr lib_;
};

// corrected := the normalization CNN output g(fluo, ref).
class AcuSaEngine final : public UnmixEngine {
 public:
  explicit AcuSaEngine(AcuSaModel model) : model_(std::move(model)) {}
  std::string name() const override { return "acu-sa"; }
  const EndmemberLibrary& library() const override { return *model_.library; }
  const AcuSaModel& model() const { return model_; }
  std::vector<UnmixOutput> unmix(const std::vector<LabeledSample>& samples) const override;

 private:
  AcuSaModel model_;
};

}  // namespace luxmix
