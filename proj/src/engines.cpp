#include "luxmix/engines.hpp"

namespace luxmix {

std::vector<UnmixOutput> BaselineEngine::unmix(const std::vector<LabeledSample>& samples) const {
  std::vector<UnmixOutput> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    BaselineUnmix b = baseline_unmix_sample(s, *lib_, params_);
    out.push_back({std::move(b.z), std::move(b.corrected), b.degenerate});
  }
  return out;
}

std::vector<UnmixOutput> AcuNetEngine::unmix(const std::vector<LabeledSample>& samples) const {
  std::vector<UnmixOutput> out(samples.size());
  if (samples.empty()) return out;
  Eigen::MatrixXd z = predict_acunet_batch(model_, rows_from_samples_fluo(samples),
                                           rows_from_samples_ref(samples));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i].z = AbundanceVector{z.row(static_cast<Eigen::Index>(i)).transpose()};
    out[i].corrected = samples[i].fluo;
    out[i].corrected.role = SpectrumRole::corrected;
  }
  return out;
}

std::vector<UnmixOutput> AcuSaEngine::unmix(const std::vector<LabeledSample>& samples) const {
  std::vector<UnmixOutput> out(samples.size());
  if (samples.empty()) return out;
  AcuSaBatchPrediction p = predict_acusa_batch(model_, rows_from_samples_fluo(samples),
                                               rows_from_samples_ref(samples));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out[i].z = AbundanceVector{p.z.row(r).transpose()};
    out[i].corrected =
        Spectrum{samples[i].fluo.grid, p.corrected_rows.row(r).transpose(),
                 SpectrumRole::corrected};
  }
  return out;
}

}  // namespace luxmix
