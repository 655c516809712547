#include "ifrp/trainer.hpp"

#include <spdlog/spdlog.h>

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace ifrp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'I', 'F', 'R', 'P', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

std::string shape_key(const Shape& s) { return s.str(); }

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
  if (!(optimizer_decay > 0 && optimizer_decay <= 1)) throw ConfigError("optimizer_decay must lie in (0,1]");
  if (!(rmsprop_eps > 0)) throw ConfigError("rmsprop_eps must be > 0");
  if (epochs < 0 || max_steps < 0 || checkpoint_every < 0) throw ConfigError("epochs, max_steps and checkpoint_every must be >= 0");
  if (!(loss_weights.lambda0 >= 0 && loss_weights.eta0 >= 0)) throw ConfigError("loss weights must be >= 0");
  if (!(loss_weights.decay_rate > 0 && loss_weights.decay_rate <= 1)) throw ConfigError("decay_rate must lie in (0,1]");
  if (extractor.kind != "conv" && extractor.kind != "pixel") throw ConfigError("unknown extractor kind '" + extractor.kind + "'");
  network().validate();
  Discriminator<float>::conv_layers(image_size);
}

SRNConfig TrainConfig::network() const {
  SRNConfig c;
  c.image_size = image_size;
  c.base_channels = base_channels;
  if (depth > 0) {
    c.depth = depth;
  } else {
    Index d = 0;
    while (d < 5 && image_size % (Index{2} << d) == 0) ++d;
    c.depth = d;
  }
  c.residual_blocks = residual_blocks;
  c.use_stn = use_stn;
  c.skip_connections = skip_connections;
  c.negative_slope = negative_slope;
  c.bn_momentum = bn_momentum;
  return c;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"optimizer_decay", c.optimizer_decay},
          {"rmsprop_eps", c.rmsprop_eps},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"image_size", c.image_size},
          {"base_channels", c.base_channels},
          {"depth", c.depth},
          {"residual_blocks", c.residual_blocks},
          {"use_stn", c.use_stn},
          {"skip_connections", c.skip_connections},
          {"negative_slope", c.negative_slope},
          {"bn_momentum", c.bn_momentum},
          {"loss_weights",
           {{"lambda0", c.loss_weights.lambda0}, {"eta0", c.loss_weights.eta0}, {"decay_rate", c.loss_weights.decay_rate}}},
          {"adversarial", c.adversarial},
          {"identity", c.identity},
          {"extractor",
           {{"kind", c.extractor.kind}, {"seed", c.extractor.seed}, {"width", c.extractor.width}, {"tap", c.extractor.tap}}},
          {"checkpoint_every", c.checkpoint_every},
          {"train_styles", c.train_styles}};
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
  reject_unknown(j,
                 {"batch_size", "learning_rate", "optimizer_decay", "rmsprop_eps", "epochs", "max_steps", "seed",
                  "image_size", "base_channels", "depth", "residual_blocks", "use_stn", "skip_connections",
                  "negative_slope", "bn_momentum", "loss_weights", "adversarial", "identity", "extractor",
                  "checkpoint_every", "train_styles"},
                 "config");
  try {
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "learning_rate", c.learning_rate);
    read_field(j, "optimizer_decay", c.optimizer_decay);
    read_field(j, "rmsprop_eps", c.rmsprop_eps);
    read_field(j, "epochs", c.epochs);
    read_field(j, "max_steps", c.max_steps);
    read_field(j, "seed", c.seed);
    read_field(j, "image_size", c.image_size);
    read_field(j, "base_channels", c.base_channels);
    read_field(j, "depth", c.depth);
    read_field(j, "residual_blocks", c.residual_blocks);
    read_field(j, "use_stn", c.use_stn);
    read_field(j, "skip_connections", c.skip_connections);
    read_field(j, "negative_slope", c.negative_slope);
    read_field(j, "bn_momentum", c.bn_momentum);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      reject_unknown(w, {"lambda0", "eta0", "decay_rate"}, "config.loss_weights");
      read_field(w, "lambda0", c.loss_weights.lambda0);
      read_field(w, "eta0", c.loss_weights.eta0);
      read_field(w, "decay_rate", c.loss_weights.decay_rate);
    }
    read_field(j, "adversarial", c.adversarial);
    read_field(j, "identity", c.identity);
    if (j.contains("extractor")) {
      const auto& e = j.at("extractor");
      reject_unknown(e, {"kind", "seed", "width", "tap"}, "config.extractor");
      read_field(e, "kind", c.extractor.kind);
      read_field(e, "seed", c.extractor.seed);
      read_field(e, "width", c.extractor.width);
      read_field(e, "tap", c.extractor.tap);
    }
    read_field(j, "checkpoint_every", c.checkpoint_every);
    read_field(j, "train_styles", c.train_styles);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in), std::move(base));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
}

std::string config_hash(const TrainConfig& c) {
  nlohmann::json j = config_to_json(c);
  j.erase("epochs");
  j.erase("max_steps");
  j.erase("checkpoint_every");
  const std::string s = j.dump();
  return hex64(fnv1a64(s.data(), s.size()));
}

std::string metrics_csv_header() { return "step,epoch,L_pix,L_dis,L_id,L_SNR,lambda_n,eta_n\n"; }

std::string metrics_csv_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(m.step),
                static_cast<long long>(m.epoch), m.pix, m.dis, m.id, m.total, m.lambda, m.eta);
  return buf;
}

// ---------------------------------------------------------------- checkpoint I/O

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header = ckpt.header;
  auto& table = header["tensors"] = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, t] : ckpt.tensors) {
    const Index offset = static_cast<Index>(blob.size() / sizeof(float));
    table.push_back({{"name", name}, {"shape", {t.n(), t.c(), t.h(), t.w()}}, {"offset", offset}, {"count", t.size()}});
    blob.append(reinterpret_cast<const char*>(t.data()), static_cast<size_t>(t.size()) * sizeof(float));
  }
  header["data_bytes"] = blob.size();
  header["data_fnv1a"] = hex64(fnv1a64(blob.data(), blob.size()));
  const std::string hs = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t hlen = hs.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    out.flush();
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string() + " (disk full?)");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const size_t fixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < fixed || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": bad magic");
  }
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  std::memcpy(&hlen, bytes.data() + sizeof(kMagic) + sizeof(version), sizeof(hlen));
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  if (hlen > bytes.size() - fixed) throw CheckpointError("corrupt checkpoint " + path.string() + ": truncated header");
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(bytes.substr(fixed, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  const char* data = bytes.data() + fixed + hlen;
  const size_t data_bytes = bytes.size() - fixed - hlen;
  try {
    if (ckpt.header.at("data_bytes").get<size_t>() != data_bytes ||
        ckpt.header.at("data_fnv1a").get<std::string>() != hex64(fnv1a64(data, data_bytes))) {
      throw CheckpointError("corrupt checkpoint " + path.string() + ": payload checksum mismatch");
    }
    for (const auto& e : ckpt.header.at("tensors")) {
      const auto shape = e.at("shape").get<std::vector<Index>>();
      if (shape.size() != 4) throw CheckpointError("corrupt checkpoint: bad tensor shape");
      Tensor<float> t(shape[0], shape[1], shape[2], shape[3]);
      const auto offset = e.at("offset").get<size_t>(), count = e.at("count").get<size_t>();
      if (count != static_cast<size_t>(t.size()) || (offset + count) * sizeof(float) > data_bytes) {
        throw CheckpointError("corrupt checkpoint: tensor '" + e.at("name").get<std::string>() + "' out of bounds");
      }
      std::memcpy(t.data(), data + offset * sizeof(float), count * sizeof(float));
      ckpt.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  ckpt.header.erase("tensors");
  ckpt.header.erase("data_bytes");
  ckpt.header.erase("data_fnv1a");
  return ckpt;
}

namespace {

void export_params(const std::string& prefix, const std::vector<nn::Param<float>*>& ps, Checkpoint& ckpt) {
  for (const auto* p : ps) ckpt.tensors.emplace(prefix + p->name, p->value);
}

template <typename Net>
void export_buffers(const std::string& prefix, Net& net, Checkpoint& ckpt) {
  std::vector<nn::NamedTensor<float>> bufs;
  net.buffers(bufs);
  for (const auto& b : bufs) ckpt.tensors.emplace(prefix + b.name, *b.tensor);
}

void import_tensor(const Checkpoint& ckpt, const std::string& key, Tensor<float>& dst) {
  const auto it = ckpt.tensors.find(key);
  if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + key + "'");
  if (!(it->second.shape() == dst.shape())) {
    throw CheckpointError("checkpoint tensor '" + key + "' has shape " + shape_key(it->second.shape()) + ", expected " +
                          shape_key(dst.shape()));
  }
  dst = it->second;
}

template <typename Net>
void import_network(const Checkpoint& ckpt, const std::string& prefix, Net& net) {
  for (auto* p : net.parameters()) import_tensor(ckpt, prefix + p->name, p->value);
  std::vector<nn::NamedTensor<float>> bufs;
  net.buffers(bufs);
  for (auto& b : bufs) import_tensor(ckpt, prefix + b.name, *b.tensor);
}

TrainConfig config_of(const Checkpoint& ckpt) {
  try {
    return config_from_json(ckpt.header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------- trainer

Trainer::Trainer(const TrainConfig& config) : config_(config) {
  config_.validate();
  const SRNConfig net = config_.network();
  srn_ = std::make_unique<StyleRemovalNetwork<float>>(net, config_.seed);
  dn_ = std::make_unique<Discriminator<float>>(net, mix_seed(config_.seed, 0xD15C));
  psi_ = make_extractor<float>(config_.extractor);
  opt_g_ = std::make_unique<RMSprop<float>>(srn_->parameters(), config_.optimizer());
  opt_d_ = std::make_unique<RMSprop<float>>(dn_->parameters(), config_.optimizer());
}

Tensor<float> Trainer::generate(const Tensor<float>& sf) {
  srn_->set_training(true);
  return srn_->forward(sf);
}

double Trainer::update_discriminator(const Tensor<float>& fake, const Tensor<float>& rf) {
  opt_d_->zero_grad();
  dn_->set_training(true);
  const double loss = discriminator_gradients(*dn_, rf, fake);
  if (std::isfinite(loss)) opt_d_->step();
  return loss;
}

GeneratorObjective<float> Trainer::update_generator(const Tensor<float>& fake, const Tensor<float>& rf) {
  opt_g_->zero_grad();
  GeneratorWeights<float> w;
  w.adv = config_.adversarial ? static_cast<float>(lambda()) : 0.0f;
  w.id = config_.identity ? static_cast<float>(eta()) : 0.0f;
  const auto obj = generator_gradients(*srn_, config_.adversarial ? dn_.get() : nullptr,
                                       config_.identity ? psi_.get() : nullptr, fake, rf, w);
  if (std::isfinite(obj.total)) opt_g_->step();
  return obj;
}

StepMetrics Trainer::train_step(const Tensor<float>& sf, const Tensor<float>& rf) {
  require_same_shape(sf.shape(), rf.shape(), "train_step");
  StepMetrics m;
  m.step = step_;
  m.epoch = epoch_;
  m.lambda = lambda();
  m.eta = eta();
  const Tensor<float> fake = generate(sf);
  m.dis = config_.adversarial ? update_discriminator(fake, rf) : 0.0;
  const auto obj = update_generator(fake, rf);
  m.pix = obj.pix;
  m.id = obj.id;
  m.total = obj.total;
  if (!std::isfinite(m.pix) || !std::isfinite(m.dis) || !std::isfinite(m.id) || !std::isfinite(m.total)) {
    throw TrainingError(diagnostics(m));
  }
  ++step_;
  return m;
}

std::string Trainer::diagnostics(const StepMetrics& m) {
  nlohmann::json d;
  d["error"] = "non-finite loss";
  d["step"] = m.step;
  d["epoch"] = m.epoch;
  d["losses"] = {{"L_pix", std::isfinite(m.pix) ? nlohmann::json(m.pix) : nlohmann::json("nan")},
                 {"L_dis", std::isfinite(m.dis) ? nlohmann::json(m.dis) : nlohmann::json("nan")},
                 {"L_id", std::isfinite(m.id) ? nlohmann::json(m.id) : nlohmann::json("nan")},
                 {"L_SNR", std::isfinite(m.total) ? nlohmann::json(m.total) : nlohmann::json("nan")}};
  auto& params = d["parameters"] = nlohmann::json::object();
  auto describe = [&](const std::vector<nn::Param<float>*>& ps) {
    for (const auto* p : ps) {
      params[p->name] = {{"finite", p->value.vec().allFinite()},
                         {"max_abs", static_cast<double>(p->value.vec().cwiseAbs().maxCoeff())},
                         {"grad_finite", p->grad.vec().allFinite()}};
    }
  };
  describe(srn_->parameters());
  describe(dn_->parameters());
  return d.dump(2);
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.header = {{"format", "ifrp-checkpoint"},
                 {"config", config_to_json(config_)},
                 {"config_hash", config_hash(config_)},
                 {"epoch", epoch_},
                 {"step", step_},
                 {"batch_in_epoch", batch_},
                 {"rng", {{"scheme", "mix_seed(seed, epoch)"}, {"seed", config_.seed}}}};
  export_params("G/", srn_->parameters(), ckpt);
  export_params("D/", dn_->parameters(), ckpt);
  export_buffers("G/", *srn_, ckpt);
  export_buffers("D/", *dn_, ckpt);
  const auto& gp = opt_g_->params();
  for (size_t i = 0; i < gp.size(); ++i) ckpt.tensors.emplace("optG/" + gp[i]->name + ".square_avg", opt_g_->state()[i]);
  const auto& dp = opt_d_->params();
  for (size_t i = 0; i < dp.size(); ++i) ckpt.tensors.emplace("optD/" + dp[i]->name + ".square_avg", opt_d_->state()[i]);
  return ckpt;
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const Checkpoint& ckpt, const std::optional<TrainConfig>& config) {
  auto t = std::make_unique<Trainer>(config ? *config : config_of(ckpt));
  import_network(ckpt, "G/", *t->srn_);
  import_network(ckpt, "D/", *t->dn_);
  const auto& gp = t->opt_g_->params();
  for (size_t i = 0; i < gp.size(); ++i) import_tensor(ckpt, "optG/" + gp[i]->name + ".square_avg", t->opt_g_->state()[i]);
  const auto& dp = t->opt_d_->params();
  for (size_t i = 0; i < dp.size(); ++i) import_tensor(ckpt, "optD/" + dp[i]->name + ".square_avg", t->opt_d_->state()[i]);
  try {
    t->epoch_ = ckpt.header.at("epoch").get<Index>();
    t->step_ = ckpt.header.at("step").get<Index>();
    t->batch_ = ckpt.header.at("batch_in_epoch").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  return t;
}

// ---------------------------------------------------------------- data and loop

TrainingData load_training_data(const DatasetManifest& manifest, const TrainConfig& config) {
  if (manifest.image_size != config.image_size) {
    throw ConfigError("manifest image_size " + std::to_string(manifest.image_size) + " differs from config image_size " +
                      std::to_string(config.image_size));
  }
  const std::set<std::string> styles(config.train_styles.begin(), config.train_styles.end());
  std::vector<Image> sf, rf;
  TrainingData data;
  for (const auto* r : manifest.split("train")) {
    if (!styles.empty() && !styles.count(r->style)) continue;
    sf.push_back(load_png(manifest.resolve(r->sf_path)));
    rf.push_back(load_png(manifest.resolve(r->rf_path)));
    data.ids.push_back(r->id);
  }
  if (data.ids.empty()) throw DatasetError("training split is empty");
  data.sf = images_to_tensor<float>(sf);
  data.rf = images_to_tensor<float>(rf);
  if (data.sf.c() != 3) throw DecodeError("training images must be RGB");
  return data;
}

std::vector<Index> epoch_order(std::uint64_t seed, Index epoch, Index count) {
  std::vector<Index> order(static_cast<size_t>(count));
  for (Index i = 0; i < count; ++i) order[static_cast<size_t>(i)] = i;
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  for (Index i = count - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  return order;
}

namespace {

Tensor<float> gather(const Tensor<float>& src, const std::vector<Index>& order, Index first, Index count) {
  Tensor<float> out(count, src.c(), src.h(), src.w());
  for (Index i = 0; i < count; ++i) out.rows().row(i) = src.rows().row(order[static_cast<size_t>(first + i)]);
  return out;
}

// Keeps rows with step < keep_before from an existing metrics file.
std::string retained_metrics(const std::filesystem::path& path, Index keep_before) {
  std::string out = metrics_csv_header();
  std::ifstream in(path);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < keep_before) out += line + "\n";
  }
  return out;
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume) {
  config.validate();
  std::unique_ptr<Trainer> trainer;
  if (resume) {
    const Checkpoint ckpt = read_checkpoint(*resume);
    const auto stored = ckpt.header.value("config_hash", std::string());
    if (stored != config_hash(config)) {
      throw CheckpointError("refusing to resume: checkpoint config hash " + stored + " differs from " + config_hash(config));
    }
    trainer = Trainer::from_checkpoint(ckpt, config);
    spdlog::info("resuming from {} at epoch {}, step {}", resume->string(), trainer->epoch(), trainer->step());
  } else {
    trainer = std::make_unique<Trainer>(config);
  }
  const TrainingData data = load_training_data(manifest, config);
  const Index count = data.sf.n();
  const Index batches = (count + config.batch_size - 1) / config.batch_size;
  spdlog::info("training on {} pairs, {} batch(es) per epoch", count, batches);

  std::filesystem::create_directories(out_dir);
  const auto csv_path = out_dir / "metrics.csv";
  std::string csv = resume ? retained_metrics(csv_path, trainer->step()) : metrics_csv_header();
  TrainResult result;
  auto flush_csv = [&] {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    out << csv;
  };
  auto limit_reached = [&] { return config.max_steps > 0 && trainer->step() >= config.max_steps; };

  const auto t0 = std::chrono::steady_clock::now();
  while (trainer->epoch() < config.epochs && !limit_reached()) {
    const auto order = epoch_order(config.seed, trainer->epoch(), count);
    while (trainer->batch_in_epoch() < batches && !limit_reached()) {
      const Index first = trainer->batch_in_epoch() * config.batch_size;
      const Index n = std::min(config.batch_size, count - first);
      StepMetrics m;
      try {
        m = trainer->train_step(gather(data.sf, order, first, n), gather(data.rf, order, first, n));
      } catch (const TrainingError& e) {
        const auto dump = out_dir / "nan_dump.json";
        std::ofstream(dump) << e.what() << "\n";
        flush_csv();
        throw TrainingError("non-finite loss at step " + std::to_string(trainer->step()) + "; diagnostics in " + dump.string());
      }
      trainer->note_batch_done();
      csv += metrics_csv_row(m);
      result.metrics.push_back(m);
      spdlog::debug("step {} epoch {} L_pix {:.6f} L_dis {:.6f} L_id {:.6f}", m.step, m.epoch, m.pix, m.dis, m.id);
    }
    if (trainer->batch_in_epoch() >= batches) {
      trainer->advance_epoch();
      if (config.checkpoint_every > 0 && trainer->epoch() % config.checkpoint_every == 0) {
        write_checkpoint(trainer->to_checkpoint(), out_dir / "checkpoints" / ("epoch_" + std::to_string(trainer->epoch()) + ".ckpt"));
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("trained {} step(s) in {:.1f}s", result.metrics.size(), secs);
  flush_csv();
  result.final_checkpoint = out_dir / "final.ckpt";
  write_checkpoint(trainer->to_checkpoint(), result.final_checkpoint);
  return result;
}

// ---------------------------------------------------------------- inference

std::unique_ptr<StyleRemovalNetwork<float>> load_generator(const Checkpoint& ckpt) {
  const TrainConfig config = config_of(ckpt);
  auto srn = std::make_unique<StyleRemovalNetwork<float>>(config.network(), config.seed);
  import_network(ckpt, "G/", *srn);
  srn->set_training(false);
  return srn;
}

std::vector<Image> recover(StyleRemovalNetwork<float>& srn, const std::vector<Image>& portraits, Index batch_size) {
  const Index S = srn.config().image_size;
  srn.set_training(false);
  std::vector<Image> out;
  out.reserve(portraits.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (size_t first = 0; first < portraits.size(); first += static_cast<size_t>(batch_size)) {
    std::vector<Image> batch;
    for (size_t i = first; i < std::min(portraits.size(), first + static_cast<size_t>(batch_size)); ++i) {
      const Image& p = portraits[i];
      batch.push_back(p.width == S && p.height == S && p.channels == 3 ? p : center_crop_resize(p, S));
    }
    for (auto& img : tensor_to_images(srn.forward(images_to_tensor<float>(batch)))) out.push_back(std::move(img));
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (!portraits.empty()) spdlog::info("recovered {} portrait(s), {:.2f} ms/image", portraits.size(), ms / portraits.size());
  return out;
}

std::vector<Image> recover(const std::filesystem::path& checkpoint, const std::vector<Image>& portraits) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  auto srn = load_generator(ckpt);
  return recover(*srn, portraits, config_of(ckpt).batch_size);
}

}  // namespace ifrp
