#include "capgen/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "capgen/error.hpp"
#include "capgen/rng.hpp"
#include "capgen/text.hpp"

namespace capgen {

namespace {

struct Problem {
  Tensor annotations;
  std::vector<EncodedCaption> captions;
};

Problem make_problem(const GradcheckConfig& cfg) {
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> values(2 * cfg.regions * cfg.feature_dim);
  for (double& v : values) v = rng.uniform(-1.0, 1.0);
  Problem p;
  p.annotations = Tensor::from({2 * cfg.regions, cfg.feature_dim}, std::move(values));
  const size_t words = cfg.vocab_size - Vocabulary::kReservedCount;
  for (size_t len : {4, 2}) {
    EncodedCaption c;
    c.tokens.push_back(Vocabulary::kStart);
    for (size_t i = 0; i < len; ++i) c.tokens.push_back(Vocabulary::kReservedCount + rng.below(words));
    c.tokens.push_back(Vocabulary::kEnd);
    p.captions.push_back(std::move(c));
  }
  return p;
}

Tensor loss_of(const CaptionModel& model, const Problem& p, size_t regions) {
  BatchForward bf = forward_batch(model, p.annotations, regions, p.captions);
  return masked_cross_entropy(bf.logits, bf.targets, bf.mask);
}

// Gradients smaller than this are compared in absolute terms.
constexpr double kDenominatorFloor = 1e-6;

std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

GradcheckReport run_gradcheck(const GradcheckConfig& cfg, const GradientHook& hook) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.vocab_size <= Vocabulary::kReservedCount) {
    throw ConfigError("gradcheck vocabulary needs ordinary tokens");
  }
  const Problem problem = make_problem(cfg);
  GradcheckReport report;
  for (Variant variant : {Variant::kEncoderDecoder, Variant::kSoftAttention}) {
    ModelConfig mc;
    mc.variant = variant;
    mc.vocab_size = cfg.vocab_size;
    mc.embed_dim = cfg.embed_dim;
    mc.hidden = cfg.hidden;
    mc.feature_dim = cfg.feature_dim;
    mc.att_dim = cfg.att_dim;
    mc.num_layers = cfg.num_layers;
    mc.seed = cfg.seed;
    CaptionModel model(mc);
    auto& params = model.parameters();
    for (Parameter& p : params) p.tensor.zero_grad();
    loss_of(model, problem, cfg.regions).backward();
    if (hook) hook(params);

    std::vector<std::string> order;
    std::map<std::string, GroupResult> groups;
    NoGradGuard no_grad;
    for (Parameter& p : params) {
      const std::string g = group_of(p.name);
      if (!groups.count(g)) {
        order.push_back(g);
        groups[g] = GroupResult{variant_name(variant), g, 0.0, 0};
      }
      GroupResult& res = groups[g];
      auto values = p.tensor.mutable_data();
      const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
      for (size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + cfg.step;
        const double up = loss_of(model, problem, cfg.regions).item();
        values[i] = saved - cfg.step;
        const double down = loss_of(model, problem, cfg.regions).item();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * cfg.step);
        const double denom =
            std::max(std::abs(analytic[i]) + std::abs(numeric), kDenominatorFloor);
        const double rel = std::abs(analytic[i] - numeric) / denom;
        res.max_rel_error = std::max(res.max_rel_error, std::isfinite(rel) ? rel : 1.0);
        ++res.elements;
      }
    }
    for (const std::string& g : order) {
      if (!(groups[g].max_rel_error < cfg.tolerance)) report.passed = false;
      report.groups.push_back(groups[g]);
    }
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace capgen
