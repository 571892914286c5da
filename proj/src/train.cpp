#include "hamf/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "hamf/config.hpp"
#include "hamf/io.hpp"

namespace hamf {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes a little-endian host");

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(lr0 > 0.0) || lr_min < 0.0 || lr_min > lr0) throw std::invalid_argument("train config: need 0 <= lr_min <= lr0, lr0 > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (eval_every < 0) throw std::invalid_argument("train config: eval_every must be >= 0");
}

PreparedScenario prepare_scenario(const Scenario& s) {
  const NormalizedScene n = normalize_to_focal(s);
  return {s.id, extract_features(n.scene), extract_targets(n.scene)};
}

std::vector<PreparedScenario> prepare_dataset(const std::vector<Scenario>& data) {
  std::vector<PreparedScenario> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(prepare_scenario(s));
  return out;
}

std::vector<Index> epoch_order(Index n, std::uint64_t seed, Index epoch) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed * 0x9E3779B97F4A7C15ULL ^ (static_cast<std::uint64_t>(epoch) + 0x632BE59BD9B4E019ULL));
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

LossTotals batch_loss(const HamfModel<float>& model, const std::vector<const PreparedScenario*>& batch,
                      bool accumulate) {
  LossTotals totals;
  const float weight = 1.0f / static_cast<float>(batch.size());
  for (const PreparedScenario* item : batch) {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    LossReport<float> loss;
    try {
      const ModelOutput<float> out = model.forward(item->features);
      loss = wta_loss(out.trajectories, out.logits, out.aux, item->targets);
    } catch (const NumericError&) {
      // Surfaces through the same abort path as a non-finite loss value.
      totals.total = std::numeric_limits<double>::quiet_NaN();
      return totals;
    }
    const double total = loss.total.item();
    totals.total += total / static_cast<double>(batch.size());
    totals.regression += loss.regression.item() / static_cast<double>(batch.size());
    totals.classification += loss.classification.item() / static_cast<double>(batch.size());
    totals.auxiliary += loss.auxiliary.item() / static_cast<double>(batch.size());
    if (!std::isfinite(total)) return totals;
    if (accumulate) tape.backward(scale(loss.total, weight));
  }
  return totals;
}

MetricReport evaluate_model(const HamfModel<float>& model, const std::vector<Scenario>& data) {
  return evaluate(data, [&](const Scenario& s) { return model.predict(s); });
}

namespace {

json loss_json(const LossTotals& l) {
  return {{"total", l.total}, {"regression", l.regression}, {"classification", l.classification}, {"auxiliary", l.auxiliary}};
}

json metrics_json(const MetricReport& r) {
  return {{"minADE1", r.min_ade1}, {"minFDE1", r.min_fde1}, {"minADE6", r.min_ade6}, {"minFDE6", r.min_fde6},
          {"MR6", r.miss_rate6},   {"bminFDE6", r.brier_min_fde6}, {"n", r.n_scenarios}};
}

}  // namespace

TrainResult train(HamfModel<float>& model, AdamW<float>& optimizer, const TrainConfig& config,
                  const std::vector<PreparedScenario>& train_set, const std::vector<Scenario>& val_set,
                  const TrainOptions& options, TrainProgress start) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (optimizer.options().weight_decay != config.weight_decay)
    throw std::invalid_argument("train: optimizer weight decay differs from the train config");
  const auto n = static_cast<Index>(train_set.size());
  const Index batches = (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total_steps = config.epochs * batches;
  Index last_epoch = config.epochs;
  if (options.stop_after_epochs > 0) last_epoch = std::min(last_epoch, start.epoch + options.stop_after_epochs);

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    log.open(options.out_dir / "train_log.jsonl", start.epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open training log in " + options.out_dir.string());
  }

  TrainResult result;
  TrainProgress p = start;
  for (Index epoch = start.epoch; epoch < last_epoch; ++epoch) {
    const std::vector<Index> order = epoch_order(n, config.seed, epoch);
    EpochSummary summary;
    summary.epoch = epoch;
    summary.lr_first = cosine_lr(p.step, total_steps, config.lr0, config.lr_min);
    for (Index b = 0; b < batches; ++b) {
      std::vector<const PreparedScenario*> batch;
      for (Index i = b * config.batch_size; i < std::min(n, (b + 1) * config.batch_size); ++i)
        batch.push_back(&train_set[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
      const double lr = cosine_lr(p.step, total_steps, config.lr0, config.lr_min);
      model.parameters().zero_grad();
      const LossTotals loss = batch_loss(model, batch, true);
      const bool finite_loss = std::isfinite(loss.total);
      if (!finite_loss || optimizer.step(lr) != StepOutcome::applied) {
        std::vector<std::string> ids;
        for (const auto* item : batch) ids.push_back(item->id);
        const std::string what = std::string(finite_loss ? "non-finite gradient" : "non-finite loss") + " at epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(p.step) + ", batch " +
                                 std::to_string(b);
        if (!options.out_dir.empty()) {
          json dump = {{"reason", what}, {"epoch", epoch}, {"step", p.step}, {"batch", b},
                       {"scenario_ids", ids}, {"loss", loss_json(loss)}};
          write_text_file(options.out_dir / "nan_batch.json", dump.dump(1) + "\n");
        }
        throw TrainingAborted(what, epoch, p.step, std::move(ids));
      }
      ++p.step;
      const double w = static_cast<double>(batch.size()) / static_cast<double>(n);
      summary.train.total += loss.total * w;
      summary.train.regression += loss.regression * w;
      summary.train.classification += loss.classification * w;
      summary.train.auxiliary += loss.auxiliary * w;
      if (log)
        log << json{{"kind", "step"}, {"epoch", epoch}, {"step", p.step - 1}, {"lr", lr}, {"loss", loss_json(loss)}}.dump()
            << "\n";
    }
    p.epoch = epoch + 1;
    summary.step = p.step;
    const bool due = config.eval_every > 0 && (p.epoch % config.eval_every == 0);
    if (!val_set.empty() && (due || p.epoch == last_epoch)) summary.val = evaluate_model(model, val_set);
    if (log) {
      json rec = {{"kind", "epoch"}, {"epoch", epoch}, {"step", p.step}, {"lr", summary.lr_first},
                  {"train_loss", loss_json(summary.train)}};
      if (summary.val) rec["val"] = metrics_json(*summary.val);
      log << rec.dump() << "\n";
      log.flush();
      save_checkpoint(options.out_dir / "checkpoint.bin", model, &optimizer,
                      {model.config(), config, p, options.init_seed});
    }
    if (options.progress) {
      *options.progress << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << summary.train.total;
      if (summary.val) *options.progress << " val minFDE6 " << summary.val->min_fde6;
      *options.progress << std::endl;
    }
    result.epochs.push_back(std::move(summary));
  }
  result.progress = p;
  return result;
}

namespace {

constexpr char kMagic[8] = {'H', 'A', 'M', 'F', 'C', 'K', 'P', 'T'};

void write_f64(std::ostream& out, const Vec<float>& v) {
  std::vector<double> buf(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<double>(v[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
}

void read_f64(std::istream& in, Vec<float>& v, const std::string& source) {
  std::vector<double> buf(static_cast<std::size_t>(v.size()));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!in) throw ParseError(source, static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())), "truncated checkpoint data");
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(buf[static_cast<std::size_t>(i)]);
}

struct RawHeader {
  json header;
  std::uint64_t data_offset = 0;
};

RawHeader read_header(std::istream& in, const std::string& source) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(source, 0, "not a checkpoint file");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in) throw ParseError(source, 8, "truncated checkpoint header");
  if (version != kCheckpointVersion)
    throw VersionError(source + ": unsupported checkpoint version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(source, 20, "truncated checkpoint header");
  RawHeader h;
  try {
    h.header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 20 + e.byte, e.what());
  }
  h.data_offset = 20 + len;
  return h;
}

Checkpoint meta_from(const json& h) {
  Checkpoint c;
  c.model = model_config_from_json(h.at("model"));
  c.train = train_config_from_json(h.at("train"));
  c.progress.epoch = h.at("epoch").get<Index>();
  c.progress.step = h.at("step").get<Index>();
  c.init_seed = h.at("init_seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const HamfModel<float>& model, const AdamW<float>* optimizer,
                     const Checkpoint& meta) {
  json params = json::array();
  for (const auto& e : model.parameters().entries()) params.push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
  json header = {{"model", to_json(meta.model)},
                 {"train", to_json(meta.train)},
                 {"epoch", meta.progress.epoch},
                 {"step", meta.progress.step},
                 {"init_seed", meta.init_seed},
                 {"optimizer_step", optimizer ? optimizer->state().step : 0},
                 {"has_optimizer", optimizer != nullptr},
                 {"parameters", params}};
  const std::string text = header.dump();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kMagic, 8);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto& entries = model.parameters().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      write_f64(out, entries[i].tensor.value());
      if (optimizer) {
        write_f64(out, optimizer->state().first_moment[i]);
        write_f64(out, optimizer->state().second_moment[i]);
      }
    }
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return meta_from(read_header(in, path.string()).header);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, HamfModel<float>& model, AdamW<float>* optimizer) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + source);
  const RawHeader raw = read_header(in, source);
  Checkpoint meta = meta_from(raw.header);
  if (!(meta.model == model.config())) throw std::invalid_argument(source + ": model config differs from checkpoint");
  const bool has_opt = raw.header.at("has_optimizer").get<bool>();
  if (optimizer && !has_opt) throw std::invalid_argument(source + ": checkpoint carries no optimizer state");
  const json& params = raw.header.at("parameters");
  auto& entries = model.parameters().entries();
  if (params.size() != entries.size()) throw std::invalid_argument(source + ": parameter count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (params[i].at("name").get<std::string>() != entries[i].name ||
        params[i].at("shape").get<Shape>() != entries[i].tensor.shape())
      throw std::invalid_argument(source + ": parameter '" + entries[i].name + "' does not match");
    read_f64(in, entries[i].tensor.mutable_value(), source);
    if (has_opt) {
      Vec<float> m(entries[i].tensor.numel()), v(entries[i].tensor.numel());
      read_f64(in, m, source);
      read_f64(in, v, source);
      if (optimizer) {
        optimizer->state().first_moment[i] = std::move(m);
        optimizer->state().second_moment[i] = std::move(v);
      }
    }
  }
  if (optimizer) optimizer->state().step = raw.header.at("optimizer_step").get<std::int64_t>();
  return meta;
}

}  // namespace hamf
