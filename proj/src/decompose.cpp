#include "ace/decompose.hpp"

#include <algorithm>
#include <cmath>

namespace ace {

void ToyFamily::validate() const {
  if (scms.empty()) throw param_error("toy family: no SCMs");
  const std::size_t alphabet = scms.front().emission.size();
  if (alphabet < 1) throw param_error("toy family: empty alphabet");
  double prior_sum = 0.0;
  for (const ToyScm& s : scms) {
    if (s.emission.size() != alphabet) throw param_error("toy family: ragged emissions");
    double em = 0.0;
    for (double p : s.emission) {
      if (p < 0.0) throw param_error("toy family: negative emission probability");
      em += p;
    }
    if (std::abs(em - 1.0) > 1e-9) throw param_error("toy family: emissions must sum to 1");
    if (s.prior < 0.0) throw param_error("toy family: negative prior");
    prior_sum += s.prior;
  }
  if (std::abs(prior_sum - 1.0) > 1e-9) throw param_error("toy family: priors must sum to 1");

  if (epsilon_support.size() != epsilon_probs.size() || epsilon_support.empty())
    throw param_error("toy family: epsilon support/probs mismatch");
  double mean = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < epsilon_support.size(); ++i) {
    if (epsilon_probs[i] < 0.0) throw param_error("toy family: negative epsilon probability");
    mean += epsilon_support[i] * epsilon_probs[i];
    mass += epsilon_probs[i];
  }
  if (std::abs(mass - 1.0) > 1e-9) throw param_error("toy family: epsilon probs must sum to 1");
  if (std::abs(mean) > 1e-12) throw param_error("toy family: epsilon must have mean zero");
}

namespace {

// Count vectors over the alphabet summing to n, in lexicographic order.
void enumerate_counts(int n, std::size_t alphabet, std::vector<int>& scratch,
                      std::vector<std::vector<int>>& out) {
  if (scratch.size() + 1 == alphabet) {
    scratch.push_back(n);
    out.push_back(scratch);
    scratch.pop_back();
    return;
  }
  for (int c = 0; c <= n; ++c) {
    scratch.push_back(c);
    enumerate_counts(n - c, alphabet, scratch, out);
    scratch.pop_back();
  }
}

// n! / prod(c_i!) built from exact binomial products (exact in doubles for
// the sizes enumeration permits).
double multinomial_coefficient(const std::vector<int>& counts) {
  double coef = 1.0;
  int seen = 0;
  for (int c : counts) {
    for (int i = 1; i <= c; ++i) {
      coef *= static_cast<double>(seen + i);
      coef /= static_cast<double>(i);
    }
    seen += c;
  }
  return coef;
}

double emission_product(const ToyScm& scm, const std::vector<int>& counts) {
  double p = 1.0;
  for (std::size_t z = 0; z < counts.size(); ++z)
    p *= std::pow(scm.emission[z], counts[z]);
  return p;
}

// SCMs sharing an emission law are indistinguishable even from D_infinity.
std::vector<int> identification_classes(const ToyFamily& family) {
  std::vector<int> cls(family.scms.size(), -1);
  int next = 0;
  for (std::size_t i = 0; i < family.scms.size(); ++i) {
    if (cls[i] >= 0) continue;
    cls[i] = next;
    for (std::size_t j = i + 1; j < family.scms.size(); ++j) {
      if (cls[j] >= 0) continue;
      bool same = true;
      for (std::size_t z = 0; z < family.scms[i].emission.size(); ++z) {
        if (std::abs(family.scms[i].emission[z] - family.scms[j].emission[z]) > 1e-12) {
          same = false;
          break;
        }
      }
      if (same) cls[j] = next;
    }
    ++next;
  }
  return cls;
}

}  // namespace

ToyPredictor optimal_toy_predictor(const ToyFamily& family, int n) {
  family.validate();
  (void)n;
  ToyFamily copy = family;
  return [copy](const std::vector<int>& counts) {
    double num = 0.0, den = 0.0;
    for (const ToyScm& s : copy.scms) {
      const double w = s.prior * emission_product(s, counts);
      num += w * s.effect;
      den += w;
    }
    if (den <= 0.0) return 0.0;  // dataset impossible under every SCM
    return num / den;
  };
}

ToyPredictor prior_mean_predictor(const ToyFamily& family) {
  family.validate();
  double mean = 0.0;
  for (const ToyScm& s : family.scms) mean += s.prior * s.effect;
  return [mean](const std::vector<int>&) { return mean; };
}

DecompositionReport exact_decomposition(const ToyFamily& family, int n, const ToyPredictor& predictor) {
  family.validate();
  if (n < 1) throw param_error("exact_decomposition: n must be >= 1");
  const std::size_t alphabet = family.alphabet_size();

  // refuse anything too large to enumerate exhaustively
  double dataset_count = 1.0;
  for (std::size_t i = 0; i < alphabet - 1; ++i)
    dataset_count *= static_cast<double>(n + 1 + static_cast<int>(i)) / static_cast<double>(i + 1);
  if (dataset_count > 2e5 || n > 64)
    throw contract_error("exact_decomposition: family is not enumerable at this size");

  std::vector<std::vector<int>> datasets;
  std::vector<int> scratch;
  enumerate_counts(n, alphabet, scratch, datasets);

  const std::vector<int> cls = identification_classes(family);
  const int num_classes = *std::max_element(cls.begin(), cls.end()) + 1;

  // E[effect | class]
  std::vector<double> class_mass(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> class_mean(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < family.scms.size(); ++i) {
    class_mass[static_cast<std::size_t>(cls[i])] += family.scms[i].prior;
    class_mean[static_cast<std::size_t>(cls[i])] += family.scms[i].prior * family.scms[i].effect;
  }
  for (int c = 0; c < num_classes; ++c)
    if (class_mass[static_cast<std::size_t>(c)] > 0.0)
      class_mean[static_cast<std::size_t>(c)] /= class_mass[static_cast<std::size_t>(c)];

  // E[effect | counts] under the family prior
  std::vector<double> posterior_mean(datasets.size(), 0.0);
  std::vector<double> coef(datasets.size(), 0.0);
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    coef[d] = multinomial_coefficient(datasets[d]);
    double num = 0.0, den = 0.0;
    for (const ToyScm& s : family.scms) {
      const double w = s.prior * emission_product(s, datasets[d]);
      num += w * s.effect;
      den += w;
    }
    posterior_mean[d] = den > 0.0 ? num / den : 0.0;
  }

  DecompositionReport r;
  for (std::size_t e = 0; e < family.epsilon_support.size(); ++e)
    r.term_a += family.epsilon_probs[e] * family.epsilon_support[e] * family.epsilon_support[e];
  r.epsilon_variance = r.term_a;

  for (std::size_t i = 0; i < family.scms.size(); ++i) {
    const ToyScm& s = family.scms[i];
    const double ec = class_mean[static_cast<std::size_t>(cls[i])];
    r.term_c += s.prior * (s.effect - ec) * (s.effect - ec);
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      const double p = coef[d] * emission_product(s, datasets[d]);
      if (p <= 0.0) continue;
      const double f = predictor(datasets[d]);
      const double en = posterior_mean[d];
      r.term_b += s.prior * p * (f - en) * (f - en);
      r.term_d += s.prior * p * (ec - en) * (ec - en);
      // training error against the noisy target phi_tilde = effect - eps
      for (std::size_t e = 0; e < family.epsilon_support.size(); ++e) {
        const double tgt = s.effect - family.epsilon_support[e];
        r.total += s.prior * p * family.epsilon_probs[e] * (f - tgt) * (f - tgt);
      }
    }
  }
  return r;
}

double mc_error_term(const ScmInstance& instance, long K, int repetitions, RngStream& stream) {
  if (repetitions < 30) throw param_error("mc_error_term: repetitions must be >= 30");
  std::vector<double> values(static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) values[static_cast<std::size_t>(r)] = pate(instance, K, stream).value;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(repetitions);
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(repetitions - 1);
}

ToyFamily identifiable_toy_family() {
  ToyFamily f;
  // three effects, three distinct Bernoulli-like emission laws
  f.scms = {
      ToyScm{-1.0, 1.0 / 3.0, {0.75, 0.25}},
      ToyScm{0.0, 1.0 / 3.0, {0.50, 0.50}},
      ToyScm{1.0, 1.0 / 3.0, {0.25, 0.75}},
  };
  f.epsilon_support = {-0.1, 0.1};
  f.epsilon_probs = {0.5, 0.5};
  f.validate();
  return f;
}

ToyFamily confounded_toy_family() {
  ToyFamily f;
  // two effects behind one observational law, one identified bystander
  f.scms = {
      ToyScm{-1.0, 0.25, {0.5, 0.5}},
      ToyScm{1.0, 0.25, {0.5, 0.5}},
      ToyScm{0.5, 0.5, {0.2, 0.8}},
  };
  f.epsilon_support = {-0.1, 0.1};
  f.epsilon_probs = {0.5, 0.5};
  f.validate();
  return f;
}

nlohmann::json decomposition_to_json(const DecompositionReport& r) {
  return {
      {"total", r.total},          {"term_a", r.term_a}, {"term_b", r.term_b},
      {"term_c", r.term_c},        {"term_d", r.term_d}, {"residual", r.residual()},
      {"epsilon_variance", r.epsilon_variance},
  };
}

}  // namespace ace
