#include "ewmlab/inject.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ewmlab/errors.hpp"
#include "ewmlab/ops.hpp"

namespace ewmlab {

const char* placement_name(Placement p) { return p == Placement::Interleaved ? "interleaved" : "single_av"; }

Placement parse_placement(const std::string& name) {
  if (name == "interleaved") return Placement::Interleaved;
  if (name == "single_av") return Placement::SingleAv;
  throw ConfigError("unknown placement: " + name);
}

Injector::Injector(ParameterStore& store, std::size_t d, std::size_t d_w, const std::string& prefix)
    : d_(d), d_w_(d_w) {
  w_ep_ = store.add(prefix + ".w_ep", {d, d_w}, InitSpec::gaussian(1.0 / std::sqrt(double(d_w))));
  b_ep_ = store.add(prefix + ".b_ep", {d}, InitSpec::zeros(), false);
  norm_ = register_layer_norm(store, prefix + ".ln", d);
}

Tensor Injector::up_project(const Tensor& beliefs) const {
  if (beliefs.cols() != d_w_) {
    throw DimensionError("up_project: beliefs of width " + std::to_string(beliefs.cols()) + ", expected " +
                         std::to_string(d_w_));
  }
  return apply_layer_norm(linear(beliefs, w_ep_, b_ep_), norm_);
}

Boundaries locate_boundaries(std::span<const Role> roles) {
  Boundaries b;
  bool have_ans = false;
  std::size_t system_end = 0;
  bool have_av = false;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == Role::System) system_end = i + 1;
    if (roles[i] == Role::Video || roles[i] == Role::Audio) {
      b.p_av = i + 1;
      have_av = true;
    }
    if (roles[i] == Role::Answer && !have_ans) {
      b.p_ans = i;
      have_ans = true;
    }
  }
  if (!have_ans) throw ContractError("locate_boundaries: sequence has no answer region");
  if (!have_av) b.p_av = system_end;
  return b;
}

std::size_t keep_count(std::size_t len, double kappa) {
  if (len == 0) return 0;
  const auto raw = static_cast<long long>(std::floor(kappa * static_cast<double>(len)));
  return static_cast<std::size_t>(std::clamp<long long>(raw, 1, static_cast<long long>(len)));
}

std::size_t KeepMask::relocate(std::size_t original) const {
  return static_cast<std::size_t>(std::lower_bound(kept.begin(), kept.end(), original) - kept.begin());
}

KeepMask apply_keep_mask(std::span<const Role> roles, double kappa) {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ContractError("apply_keep_mask: kappa must lie in (0, 1]");
  KeepMask out;
  out.index_map.assign(roles.size(), -1);
  std::size_t i = 0;
  while (i < roles.size()) {
    std::size_t j = i + 1;
    while (j < roles.size() && roles[j] == roles[i]) ++j;
    const bool av = roles[i] == Role::Video || roles[i] == Role::Audio;
    const std::size_t keep = av ? keep_count(j - i, kappa) : j - i;
    for (std::size_t k = i; k < i + keep; ++k) {
      out.index_map[k] = static_cast<long>(out.kept.size());
      out.kept.push_back(k);
    }
    i = j;
  }
  return out;
}

AugmentedSample interleave_inject(const Tensor& embeddings, std::span<const Role> roles,
                                  std::span<const int> labels, const Tensor& beliefs, Boundaries at,
                                  Placement placement) {
  const auto len = roles.size();
  if (embeddings.rows() != len || labels.size() != len) {
    throw DimensionError("interleave_inject: embeddings/roles/labels lengths disagree");
  }
  if (at.p_av > at.p_ans || at.p_ans >= len) throw ContractError("interleave_inject: boundaries out of order");
  AugmentedSample out;
  const std::size_t nq = beliefs.defined() ? beliefs.rows() : 0;
  const std::size_t first = placement == Placement::Interleaved ? (nq + 1) / 2 : nq;
  auto copy_meta = [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      out.roles.push_back(roles[k]);
      out.labels.push_back(labels[k]);
    }
  };
  auto add_beliefs = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      out.roles.push_back(Role::Belief);
      out.labels.push_back(kIgnoreIndex);
    }
  };
  if (nq == 0) {
    out.embeddings = embeddings;
    copy_meta(0, len);
  } else {
    std::vector<Tensor> parts;
    if (at.p_av > 0) parts.push_back(slice_rows(embeddings, 0, at.p_av));
    copy_meta(0, at.p_av);
    if (first > 0) parts.push_back(slice_rows(beliefs, 0, first));
    add_beliefs(first);
    if (at.p_ans > at.p_av) parts.push_back(slice_rows(embeddings, at.p_av, at.p_ans));
    copy_meta(at.p_av, at.p_ans);
    if (nq > first) parts.push_back(slice_rows(beliefs, first, nq));
    add_beliefs(nq - first);
    parts.push_back(slice_rows(embeddings, at.p_ans, len));
    copy_meta(at.p_ans, len);
    out.embeddings = concat_rows(parts);
  }
  out.mask.assign(out.roles.size(), 1);
  out.n_beliefs = nq;
  out.n_real = out.roles.size();
  out.boundaries = {at.p_av, at.p_ans + nq};
  return out;
}

void pad_batch(std::vector<AugmentedSample>& batch) {
  std::size_t longest = 0;
  for (const auto& s : batch) longest = std::max(longest, s.size());
  for (auto& s : batch) {
    const auto extra = longest - s.size();
    if (extra == 0) continue;
    const Tensor pad = Tensor::zeros({extra, s.embeddings.cols()});
    const Tensor parts[] = {s.embeddings, pad};
    s.embeddings = concat_rows(parts);
    s.roles.insert(s.roles.end(), extra, Role::Pad);
    s.labels.insert(s.labels.end(), extra, kIgnoreIndex);
    s.mask.insert(s.mask.end(), extra, 0);
  }
}

std::string dump_layout(const AugmentedSample& sample) {
  std::ostringstream os;
  os << "pos  role      label  mask\n";
  for (std::size_t i = 0; i < sample.size(); ++i) {
    os << std::left;
    os.width(5);
    os << i;
    os.width(10);
    os << role_name(sample.roles[i]);
    os.width(7);
    os << sample.labels[i];
    os << int(sample.mask[i]) << '\n';
  }
  return os.str();
}

}  // namespace ewmlab
