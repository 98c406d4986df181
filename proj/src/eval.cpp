#include "luxmix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "luxmix/errors.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/rng.hpp"

namespace luxmix {

SplitResult split_indices(int n, double fraction, std::uint64_t seed) {
  if (n < 2) throw ConfigError("split: need at least 2 samples");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split: fraction must lie in (0, 1)");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(Rng::mix(seed, 0x5917));
  rng.shuffle(idx);
  const int n_train = static_cast<int>(std::llround(fraction * n));
  SplitResult out;
  out.train.assign(idx.begin(), idx.begin() + n_train);
  out.test.assign(idx.begin() + n_train, idx.end());
  return out;
}

SplitResult split_dataset(const std::vector<LabeledSample>& samples, double fraction,
                          std::uint64_t seed) {
  const int n = static_cast<int>(samples.size());
  if (n < 2) throw ConfigError("split_dataset: need at least 2 samples");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split_dataset: fraction must lie in (0, 1)");

  bool all_labeled = true;
  for (const auto& s : samples)
    if (!s.c_ppix) {
      all_labeled = false;
      break;
    }
  if (!all_labeled) return split_indices(n, fraction, seed);

  // group by level, shuffle within groups, apportion by largest remainder
  std::map<double, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[*samples[i].c_ppix].push_back(i);

  const int target_train = static_cast<int>(std::llround(fraction * n));
  std::vector<std::vector<int>> shuffled;
  std::vector<int> base;
  std::vector<double> remainder;
  int base_sum = 0;
  std::uint64_t gi = 0;
  for (auto& [level, idx] : groups) {
    Rng rng(Rng::mix(seed, 0x57A7, gi++));
    rng.shuffle(idx);
    const double exact = fraction * static_cast<double>(idx.size());
    const int b = static_cast<int>(std::floor(exact + 1e-9));
    base.push_back(b);
    remainder.push_back(exact - b);
    base_sum += b;
    shuffled.push_back(std::move(idx));
  }
  int extras = target_train - base_sum;
  std::vector<std::size_t> order(shuffled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t oi = 0; oi < order.size() && extras > 0; ++oi) {
    const std::size_t g = order[oi];
    if (base[g] < static_cast<int>(shuffled[g].size())) {
      ++base[g];
      --extras;
    }
  }

  SplitResult out;
  for (std::size_t g = 0; g < shuffled.size(); ++g) {
    const auto& idx = shuffled[g];
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + base[g]);
    out.test.insert(out.test.end(), idx.begin() + base[g], idx.end());
  }
  return out;
}

std::vector<LabeledSample> gather(const std::vector<LabeledSample>& samples,
                                  const std::vector<int>& idx) {
  std::vector<LabeledSample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(samples[static_cast<std::size_t>(i)]);
  return out;
}

EvalReport evaluate(const UnmixEngine& engine, const std::vector<LabeledSample>& test_samples) {
  if (test_samples.empty()) throw UsageError("evaluate: empty test set");
  for (const auto& s : test_samples)
    if (!s.c_ppix) throw UsageError("evaluate: sample " + s.id + " has no c_ppix label");

  const std::vector<UnmixOutput> outputs = engine.unmix(test_samples);
  const Eigen::MatrixXd& B = engine.library().B();

  EvalReport report;
  report.method = engine.name();
  report.n = static_cast<int>(test_samples.size());

  std::vector<double> pred, truth, pred_sat, truth_sat;
  double recon_sum = 0.0;
  int recon_count = 0;
  std::map<double, std::vector<double>> by_level;
  for (std::size_t i = 0; i < test_samples.size(); ++i) {
    const auto& s = test_samples[i];
    const auto& o = outputs[i];
    PredictionRow row;
    row.id = s.id;
    row.c_ppix = *s.c_ppix;
    row.z = o.z.z;
    row.degenerate = o.degenerate;
    row.saturated = s.saturated;
    row.residual = 0.0;
    if (!o.degenerate) {
      const Eigen::VectorXd recon = B * o.z.z;
      row.residual = (recon - o.corrected.values).norm();
      recon_sum += mse(recon, o.corrected.values);
      ++recon_count;
    }
    report.rows.push_back(std::move(row));

    const double p = o.z.z[kPpix634];
    pred.push_back(p);
    truth.push_back(*s.c_ppix);
    by_level[*s.c_ppix].push_back(p);
    if (s.saturated) {
      pred_sat.push_back(p);
      truth_sat.push_back(*s.c_ppix);
      ++report.n_saturated;
    }
  }

  try {
    report.pearson = pearson_r(pred, truth);
    report.r_defined = true;
  } catch (const DataError&) {
    report.r_defined = false;  // surfaced in the report, R marked undefined
  }
  if (pred_sat.size() >= 2) {
    try {
      report.pearson_saturated = pearson_r(pred_sat, truth_sat);
      report.r_saturated_defined = true;
    } catch (const DataError&) {
      report.r_saturated_defined = false;
    }
  }
  report.mse_recon_mean = recon_count > 0 ? recon_sum / recon_count : 0.0;

  for (const auto& [level, values] : by_level) {
    LevelStat st;
    st.level = level;
    st.count = static_cast<int>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    st.mean_pred = mean;
    st.var_pred = var;
    report.per_level.push_back(st);
  }
  return report;
}

void save_eval_csv(const EvalReport& report, const std::vector<std::string>& endmember_names,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write eval report: " + path);
  out << "id,c_ppix";
  for (const auto& n : endmember_names) {
    std::string lower = n;
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out << ",abundance_" << lower;
  }
  out << ",residual,flags\n";
  char buf[64];
  for (const auto& row : report.rows) {
    out << row.id << ',';
    std::snprintf(buf, sizeof buf, "%.17g", row.c_ppix);
    out << buf;
    for (Eigen::Index k = 0; k < row.z.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", row.z[k]);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", row.residual);
    out << ',' << buf << ',';
    std::string flags;
    if (row.degenerate) flags += "degenerate";
    if (row.saturated) flags += flags.empty() ? "saturated" : "|saturated";
    out << flags << '\n';
  }
  if (!out) throw FormatError("failed writing eval report: " + path);
}

std::string format_eval_summary(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "method      n      R            recon_mse      saturated_n  saturated_R\n";
  char buf[160];
  for (const auto& r : reports) {
    std::string rs = r.r_defined ? [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.6f", r.pearson);
      return std::string(b);
    }()
                                 : std::string("undefined");
    std::string rsat = r.r_saturated_defined ? [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.6f", r.pearson_saturated);
      return std::string(b);
    }()
                                             : std::string("undefined");
    std::snprintf(buf, sizeof buf, "%-10s  %-5d  %-11s  %-13.6g  %-11d  %s\n",
                  r.method.c_str(), r.n, rs.c_str(), r.mse_recon_mean, r.n_saturated,
                  rsat.c_str());
    os << buf;
  }
  os << "\nper-level variance of predicted PpIX634 abundance\n";
  for (const auto& r : reports) {
    os << "  " << r.method << ":\n";
    for (const auto& st : r.per_level) {
      std::snprintf(buf, sizeof buf, "    level %-8.4g n=%-5d mean=%-12.6g var=%.6g\n",
                    st.level, st.count, st.mean_pred, st.var_pred);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace luxmix
