#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "facecap/diffusion.hpp"

namespace facecap::diffusion {
namespace {

nlohmann::json model_meta(const DiffusionModel& m) {
  const auto& c = m.config;
  return {{"model",
           {{"layers", c.layers},
            {"d_model", c.d_model},
            {"heads", c.heads},
            {"ff_width", c.ff_width},
            {"window", c.window},
            {"channels", c.channels},
            {"sensors", c.sensors},
            {"positional", c.positional}}},
          {"schedule",
           {{"steps", m.schedule_config.steps},
            {"beta_start", m.schedule_config.beta_start},
            {"beta_end", m.schedule_config.beta_end}}}};
}

Matrix gaussian_like(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = nd(rng);
  return m;
}

void write_number(std::ostream& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, r.ptr - buf);
}

}  // namespace

DiffusionModel::DiffusionModel(const DenoiserConfig& c, const ScheduleConfig& s, std::uint64_t seed)
    : config(c), schedule_config(s), denoiser(c, seed), schedule(build_schedule(s)) {}

ad::Checkpoint model_to_checkpoint(const DiffusionModel& model) {
  ad::Checkpoint ckpt;
  ckpt.put_bytes("meta", model_meta(model).dump());
  for (const auto* p : model.denoiser.parameters()) ckpt.put(*p);
  if (!model.stats.empty()) {
    const std::size_t w = model.stats.mean.size();
    ckpt.put(ad::Parameter<double>("cond.mean", Matrix({1, w}, model.stats.mean)));
    ckpt.put(ad::Parameter<double>("cond.std", Matrix({1, w}, model.stats.stddev)));
  }
  return ckpt;
}

DiffusionModel model_from_checkpoint(const ad::Checkpoint& ckpt) {
  DenoiserConfig c;
  ScheduleConfig s;
  try {
    const auto meta = nlohmann::json::parse(ckpt.get_bytes("meta"));
    const auto& m = meta.at("model");
    c.layers = m.at("layers").get<std::size_t>();
    c.d_model = m.at("d_model").get<std::size_t>();
    c.heads = m.at("heads").get<std::size_t>();
    c.ff_width = m.at("ff_width").get<std::size_t>();
    c.window = m.at("window").get<std::size_t>();
    c.channels = m.at("channels").get<std::size_t>();
    c.sensors = m.at("sensors").get<std::size_t>();
    c.positional = m.at("positional").get<bool>();
    const auto& sc = meta.at("schedule");
    s.steps = sc.at("steps").get<std::size_t>();
    s.beta_start = sc.at("beta_start").get<double>();
    s.beta_end = sc.at("beta_end").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  DiffusionModel model(c, s);
  for (auto* p : model.denoiser.parameters()) ckpt.get(*p);
  if (ckpt.find("cond.mean")) {
    const std::size_t w = c.condition_width();
    ad::Parameter<double> mean("cond.mean", Matrix(1, w));
    ad::Parameter<double> sd("cond.std", Matrix(1, w));
    ckpt.get(mean);
    ckpt.get(sd);
    model.stats.mean = mean.value.data;
    model.stats.stddev = sd.value.data;
  }
  return model;
}

void save_model(const std::filesystem::path& path, const DiffusionModel& model) {
  ad::save_checkpoint(path, model_to_checkpoint(model));
}

DiffusionModel load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(ad::load_checkpoint(path));
}

double training_loss(DiffusionModel& model, const Matrix& c_std, const Matrix& w, std::size_t t,
                     const Matrix& noise, bool accumulate_grad, double grad_scale) {
  const Matrix x_t = forward_diffuse(model.schedule, w, t, noise);
  ad::Tape<double> tape;
  auto pred = model.denoiser.forward(tape, x_t, c_std, t);
  auto loss = ad::l1_loss(pred, tape.constant(w));
  if (accumulate_grad) tape.backward(ad::scale(loss, grad_scale));
  return loss.value().data[0];
}

std::vector<LossRecord> train_model(DiffusionModel& model, const WindowSet& train_windows,
                                    const WindowSet& eval_windows, const TrainConfig& config,
                                    const EpochCallback& on_epoch) {
  if (train_windows.size() == 0) throw DiffusionError("train: empty training set");
  if (config.batch_size == 0) throw DiffusionError("train: batch size must be positive");
  auto params = model.denoiser.parameters();
  ad::AdamState<double> adam(config.adam);
  std::mt19937_64 rng(config.seed ^ 0x7261696e5f726e67ULL);
  std::uniform_int_distribution<std::size_t> step_dist(1, model.schedule.steps());
  const std::size_t rows = model.config.window, cols = model.config.channels;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LossRecord> trace;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      model.denoiser.zero_grad();
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t idx = order[i];
        const std::size_t t = step_dist(rng);
        const Matrix noise = gaussian_like(rows, cols, rng);
        total += training_loss(model, train_windows.conditions[idx], train_windows.weights[idx], t,
                               noise, true, inv);
      }
      adam.step(params);
    }
    LossRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(order.size());
    rec.eval_loss = std::numeric_limits<double>::quiet_NaN();
    if (eval_windows.size() > 0) {
      // Same steps and noise every epoch so eval losses are comparable.
      std::mt19937_64 eval_rng(config.seed ^ 0x6576616c5f726e67ULL);
      double e = 0.0;
      for (std::size_t i = 0; i < eval_windows.size(); ++i) {
        const std::size_t t = step_dist(eval_rng);
        const Matrix noise = gaussian_like(rows, cols, eval_rng);
        e += training_loss(model, eval_windows.conditions[i], eval_windows.weights[i], t, noise, false);
      }
      rec.eval_loss = e / static_cast<double>(eval_windows.size());
    }
    trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return trace;
}

TrainResult train(std::span<const SequencePair> train_set, std::span<const SequencePair> eval_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.model.validate();
  if (train_set.empty()) throw DiffusionError("train: empty training set");
  for (const auto& p : train_set) {
    if (p.condition.cols() != config.model.condition_width() || p.weights.cols() != config.model.channels) {
      throw ad::ShapeError("train: pair has condition " + p.condition.shape_string() + " and weights " +
                           p.weights.shape_string() + ", model expects " +
                           std::to_string(config.model.condition_width()) + " and " +
                           std::to_string(config.model.channels) + " columns");
    }
  }
  TrainResult res{DiffusionModel(config.model, config.schedule, config.seed), {}, 0};
  std::vector<Matrix> conds;
  for (const auto& p : train_set) conds.push_back(p.condition);
  res.model.stats = compute_condition_stats(conds);

  auto standardise = [&](std::span<const SequencePair> set) {
    std::vector<SequencePair> out;
    for (const auto& p : set) out.push_back({res.model.stats.apply(p.condition), p.weights});
    return out;
  };
  const auto tr = standardise(train_set);
  const auto ev = standardise(eval_set);
  const WindowSet train_windows = make_windows(tr, config.model.window, config.stride);
  const WindowSet eval_windows = make_windows(ev, config.model.window, config.stride);
  if (train_windows.size() == 0) {
    throw DiffusionError("train: no sequence is as long as the window (" +
                         std::to_string(config.model.window) + " frames)");
  }
  res.trace = train_model(res.model, train_windows, eval_windows, config, on_epoch);
  const std::size_t batches = (train_windows.size() + config.batch_size - 1) / config.batch_size;
  res.steps = batches * config.epochs;
  return res;
}

void save_loss_trace_csv(const std::filesystem::path& path, std::span<const LossRecord> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,train_loss,eval_loss\n";
  for (const auto& r : trace) {
    out << r.epoch << ',';
    write_number(out, r.train_loss);
    out << ',';
    if (std::isnan(r.eval_loss)) out << "nan";
    else write_number(out, r.eval_loss);
    out << '\n';
  }
}

}  // namespace facecap::diffusion
