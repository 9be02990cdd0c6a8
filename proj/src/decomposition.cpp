#include "dathermo/decomposition.hpp"

#include <ostream>
#include <stdexcept>

namespace dathermo {

int chi(const Vecd& q, double rho, const Vecd& x) {
  if (!(rho > 0)) throw std::invalid_argument("chi: rho must be positive");
  return flat_distance<double>(x, q) >= rho ? 1 : 0;
}

std::vector<int> chi_sequence(const DAMap& g, const Vecd& q, double rho, const Vecd& x, int n) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  Vecd y = x;
  for (int k = 0; k < n; ++k) {
    out.push_back(chi(q, rho, y));
    if (k + 1 < n) y = g(y);
  }
  return out;
}

std::vector<int> prefix_sums(const std::vector<int>& chi_values) {
  std::vector<int> s(chi_values.size() + 1, 0);
  for (std::size_t i = 0; i < chi_values.size(); ++i) s[i + 1] = s[i] + chi_values[i];
  return s;
}

bool in_G(const std::vector<int>& chi_values, double r) {
  int s = 0;
  for (std::size_t i = 0; i < chi_values.size(); ++i) {
    s += chi_values[i];
    if (s < static_cast<double>(i + 1) * r) return false;
  }
  return true;
}

bool in_G(const DAMap& g, const Vecd& q, double rho, double r, const OrbitSegment& seg) {
  return in_G(chi_sequence(g, q, rho, seg.x, seg.n), r);
}

DecompositionResult decompose(const std::vector<int>& chi_values, double r) {
  if (!(r > 0 && r < 1)) throw std::invalid_argument("decompose: r must lie in (0,1)");
  DecompositionResult res;
  res.chi_prefix = prefix_sums(chi_values);
  const int n = static_cast<int>(chi_values.size());
  for (int i = n; i >= 1; --i) {
    if (res.chi_prefix[static_cast<std::size_t>(i)] < i * r) {
      res.p = i;
      break;
    }
  }
  res.g = n - res.p;
  res.s = 0;
  const int base = res.chi_prefix[static_cast<std::size_t>(res.p)];
  for (int k = 1; k <= res.g; ++k)
    if (res.chi_prefix[static_cast<std::size_t>(res.p + k)] - base < k * r)
      throw std::logic_error("decompose: suffix is not a good segment");
  return res;
}

DecompositionResult decompose(const DAMap& g, const Vecd& q, double rho, double r, const OrbitSegment& seg) {
  if (seg.n < 0) throw std::invalid_argument("decompose: negative segment length");
  return decompose(chi_sequence(g, q, rho, seg.x, seg.n), r);
}

PressureEstimate empirical_collection_pressure(const DAMap& g, const Potential& phi, const Vecd& q, double rho,
                                               double r, double epsilon, int n_min, int n_max,
                                               const CollectionOptions& opts) {
  if (!(r > 0)) throw std::invalid_argument("collection pressure: r must be positive");
  if (!(rho > 0)) throw std::invalid_argument("collection pressure: rho must be positive");
  if (!(n_min < n_max) || n_min < 1) throw std::invalid_argument("collection pressure: bad n range");
  std::shared_ptr<const CandidateSource> src = opts.source;
  if (!src) {
    CollectionSource::Options co;
    co.rho = rho;
    co.r = std::min(r, 1.0);
    co.q = q;
    src = std::make_shared<CollectionSource>(co);
  }
  std::vector<PartitionSum> sums;
  for (int n = n_min; n <= n_max; ++n) {
    SegmentPredicate keep = [&q, rho, r, n](const std::vector<Vecd>& orb) {
      int s = 0;
      for (int k = 0; k < n; ++k) s += chi(q, rho, orb[static_cast<std::size_t>(k)]);
      return s < r * n;
    };
    sums.push_back(partition_sum(g, phi, n, epsilon, *src, r < 1 ? &keep : nullptr, opts.workers));
    if (opts.audit && r < 1) {
      for (const Vecd& x : sums.back().accepted) {
        auto c = chi_sequence(g, q, rho, x, n);
        auto d = decompose(c, r);
        opts.audit->push_back({n, d.chi_prefix.back(), d.p, d.g});
      }
    }
  }
  PressureEstimate est = estimate_from_sums(sums, epsilon);
  est.normalization = src->describe().value("kind", "");
  est.mode = "slope-fit/collection";
  return est;
}

void write_segment_audit(std::ostream& out, const std::vector<SegmentAudit>& rows) {
  out << "n,chi_sum,p,g\n";
  for (const auto& r : rows) out << r.n << ',' << r.chi_sum << ',' << r.p << ',' << r.g << '\n';
}

}  // namespace dathermo
