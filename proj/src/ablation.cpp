#include "hamf/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace hamf {

namespace {

AblationVariant encoder_variant(std::string label, EncoderVariant v) {
  return {std::move(label), [v](ModelConfig& c) { c.variant = v; }};
}

AblationVariant decoder_variant(std::string label, DecoderKind k, Index depth) {
  return {std::move(label), [k, depth](ModelConfig& c) {
            c.decoder = k;
            c.decoder_depth = depth;
          }};
}

}  // namespace

const std::vector<std::string>& ablation_suite_names() {
  static const std::vector<std::string> names = {"encoder", "decoder", "depth", "ke", "arch"};
  return names;
}

std::vector<AblationVariant> ablation_suite(const std::string& suite) {
  if (suite == "encoder")
    return {encoder_variant("Mb", EncoderVariant::no_motion_tokens), encoder_variant("M1", EncoderVariant::self_only),
            encoder_variant("M2", EncoderVariant::cross_only), encoder_variant("M3", EncoderVariant::no_interaction),
            encoder_variant("Ours", EncoderVariant::full)};
  if (suite == "decoder")
    return {decoder_variant("Md", DecoderKind::none, 1),         decoder_variant("Uni-Mamba x1", DecoderKind::uni_mamba, 1),
            decoder_variant("Uni-Mamba x2", DecoderKind::uni_mamba, 2), decoder_variant("Bi-Mamba x1", DecoderKind::bi_mamba, 1),
            decoder_variant("Bi-Mamba x2", DecoderKind::bi_mamba, 2),   decoder_variant("Bi-Mamba x3", DecoderKind::bi_mamba, 3),
            decoder_variant("Attention x1", DecoderKind::attention, 1), decoder_variant("Attention x2", DecoderKind::attention, 2),
            decoder_variant("Attention x3", DecoderKind::attention, 3)};
  if (suite == "depth") {
    std::vector<AblationVariant> out;
    for (Index l : {4, 5, 6})
      out.push_back({"L=" + std::to_string(l), [l](ModelConfig& c) { c.encoder_layers = l; }});
    return out;
  }
  if (suite == "ke") {
    std::vector<AblationVariant> out;
    for (Index k : {1, 2, 3, 6})
      out.push_back({"Ke=" + std::to_string(k), [k](ModelConfig& c) { c.motion_tokens = k; }});
    return out;
  }
  if (suite == "arch")
    return {encoder_variant("Mp", EncoderVariant::parallel), encoder_variant("Mc", EncoderVariant::reversed),
            encoder_variant("Ours", EncoderVariant::full)};
  throw std::invalid_argument("unknown ablation suite '" + suite + "' (expected encoder, decoder, depth, ke or arch)");
}

std::vector<VariantResult> run_ablation(const std::vector<AblationVariant>& variants,
                                        const std::vector<PreparedScenario>& train_set,
                                        const std::vector<Scenario>& val_set, const AblationOptions& options) {
  std::vector<VariantResult> results;
  for (const auto& v : variants) {
    VariantResult r;
    r.label = v.label;
    r.model = options.base;
    v.apply(r.model);
    r.model.validate();
    ModelConfig paper;
    v.apply(paper);
    r.params = count_parameters(r.model);
    r.paper_params = count_parameters(paper);
    for (std::uint64_t seed : options.seeds) {
      TrainConfig tc = options.train;
      tc.seed = seed;
      HamfModel<float> model(r.model, seed);
      AdamWOptions ao;
      ao.weight_decay = tc.weight_decay;
      AdamW<float> optimizer(model.parameters(), ao);
      TrainOptions to;
      to.init_seed = seed;
      if (!options.out_dir.empty()) {
        std::string dir = v.label;
        for (char& ch : dir)
          if (ch == ' ' || ch == '=') ch = '_';
        to.out_dir = options.out_dir / dir / ("seed-" + std::to_string(seed));
      }
      tc.eval_every = 0;
      train(model, optimizer, tc, train_set, {}, to);
      r.seeds.push_back(seed);
      r.reports.push_back(evaluate_model(model, val_set));
      if (options.progress)
        *options.progress << v.label << " seed " << seed << ": val minFDE6 " << r.reports.back().min_fde6 << std::endl;
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

namespace {

using Field = double MetricReport::*;

const std::vector<std::pair<const char*, Field>>& metric_fields() {
  static const std::vector<std::pair<const char*, Field>> f = {
      {"minADE1", &MetricReport::min_ade1}, {"minFDE1", &MetricReport::min_fde1},
      {"minADE6", &MetricReport::min_ade6}, {"minFDE6", &MetricReport::min_fde6},
      {"MR6", &MetricReport::miss_rate6},   {"bminFDE6", &MetricReport::brier_min_fde6}};
  return f;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string ablation_markdown(const std::string& suite, const std::vector<VariantResult>& results) {
  std::ostringstream out;
  out << "## Ablation: " << suite << "\n\n| Variant | Params (trained) | Params (full size, M) |";
  for (const auto& [name, field] : metric_fields()) out << " " << name << " |";
  out << "\n|---|---:|---:|";
  for (std::size_t i = 0; i < metric_fields().size(); ++i) out << "---:|";
  out << "\n";
  for (const auto& r : results) {
    out << "| " << r.label << " | " << r.params << " | " << fmt("%.3f", static_cast<double>(r.paper_params) / 1e6) << " |";
    for (const auto& [name, field] : metric_fields()) {
      std::vector<double> v;
      for (const auto& rep : r.reports) v.push_back(rep.*field);
      const auto [m, s] = mean_std(v);
      out << " " << fmt("%.3f", m) << " ± " << fmt("%.3f", s) << " |";
    }
    out << "\n";
  }
  if (!results.empty()) out << "\nMean ± sample std over " << results.front().reports.size() << " seed(s).\n";
  return out.str();
}

std::string ablation_csv(const std::vector<VariantResult>& results) {
  std::ostringstream out;
  out << "variant,seed,params,paper_params";
  for (const auto& [name, field] : metric_fields()) out << "," << name;
  out << "\n";
  for (const auto& r : results)
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
      out << r.label << "," << r.seeds[i] << "," << r.params << "," << r.paper_params;
      for (const auto& [name, field] : metric_fields()) out << "," << fmt("%.17g", r.reports[i].*field);
      out << "\n";
    }
  return out.str();
}

}  // namespace hamf
