#ifndef IFRP_TRAINER_HPP
#define IFRP_TRAINER_HPP

#include "ifrp/dataset.hpp"
#include "ifrp/extractor.hpp"
#include "ifrp/losses.hpp"
#include "ifrp/networks.hpp"
#include "ifrp/optim.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ifrp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Index batch_size = 16;
  double learning_rate = 1e-3;
  double optimizer_decay = 1e-2;  // RMSprop averaging coefficient is 1 - decay
  double rmsprop_eps = 1e-8;
  Index epochs = 1;
  Index max_steps = 0;  // 0: no limit
  std::uint64_t seed = 0;
  Index image_size = 32;
  Index base_channels = 8;
  Index depth = 0;  // 0: min(5, log2(image_size))
  Index residual_blocks = 3;
  bool use_stn = true;
  bool skip_connections = true;
  double negative_slope = 0.2;
  double bn_momentum = 0.9;
  LossWeights loss_weights;
  bool adversarial = true;
  bool identity = true;
  ExtractorSpec extractor;
  Index checkpoint_every = 1;  // epochs; 0 disables periodic checkpoints
  std::vector<std::string> train_styles;  // empty: every style in the manifest

  void validate() const;
  SRNConfig network() const;
  RMSpropConfig optimizer() const { return {learning_rate, 1.0 - optimizer_decay, rmsprop_eps}; }
};

nlohmann::json config_to_json(const TrainConfig& c);
// Overlays the keys of `j` on `base`; unknown keys are rejected with ConfigError.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
// Hash of the fields that determine the optimization trajectory (run length
// and checkpoint cadence excluded).
std::string config_hash(const TrainConfig& c);

struct StepMetrics {
  Index step = 0;
  Index epoch = 0;
  double pix = 0;
  double dis = 0;
  double id = 0;
  double total = 0;
  double lambda = 0;
  double eta = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);

template <typename Scalar>
struct GeneratorWeights {
  Scalar pix = 1;
  Scalar adv = 0;
  Scalar id = 0;
};

template <typename Scalar>
struct GeneratorObjective {
  Scalar pix = 0;
  Scalar adv = 0;
  Scalar id = 0;
  Scalar total = 0;
};

// Accumulates dL_dis/dPhi for one real and one (detached) fake batch.
template <typename Scalar>
Scalar discriminator_gradients(Discriminator<Scalar>& dn, const Tensor<Scalar>& real, const Tensor<Scalar>& fake) {
  // Layers cache their last input, so each branch is differentiated before the next forward.
  const Tensor<Scalar> d_real = dn.forward(real);
  dn.backward(discriminator_loss(d_real, d_real).grad_real);
  const Tensor<Scalar> d_fake = dn.forward(fake);
  const auto loss = discriminator_loss(d_real, d_fake);
  dn.backward(loss.grad_fake);
  return loss.value;
}

// Backpropagates w.pix L_pix + w.adv L_adv + w.id L_id into the generator
// whose last forward produced `fake`. The discriminator is only differentiated
// through; its parameter gradients are untouched.
template <typename Scalar>
GeneratorObjective<Scalar> generator_gradients(StyleRemovalNetwork<Scalar>& srn, Discriminator<Scalar>* dn,
                                               FeatureExtractor<Scalar>* psi, const Tensor<Scalar>& fake,
                                               const Tensor<Scalar>& real, const GeneratorWeights<Scalar>& w) {
  GeneratorObjective<Scalar> obj;
  const auto pix = pixel_loss(fake, real);
  obj.pix = pix.value;
  Tensor<Scalar> grad(fake.shape());
  grad.vec() = w.pix * pix.grad.vec();
  if (dn && w.adv != Scalar(0)) {
    dn->set_frozen(true);
    const auto adv = generator_adversarial_loss(dn->forward(fake));
    obj.adv = adv.value;
    Tensor<Scalar> g = adv.grad;
    g.vec() *= w.adv;
    grad.vec() += dn->backward(g).vec();
    dn->set_frozen(false);
  }
  if (psi && w.id != Scalar(0)) {
    const auto id = identity_loss(fake, real, *psi);
    obj.id = id.value;
    grad.vec() += w.id * id.grad.vec();
  }
  obj.total = srn_total_loss(obj.pix, obj.adv, obj.id, w.adv, w.id);
  srn.backward(grad);
  return obj;
}

// Named tensors of a checkpoint plus its JSON header.
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, Tensor<float>> tensors;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  StyleRemovalNetwork<float>& generator() { return *srn_; }
  Discriminator<float>& discriminator() { return *dn_; }
  FeatureExtractor<float>& extractor() { return *psi_; }
  RMSprop<float>& generator_optimizer() { return *opt_g_; }
  RMSprop<float>& discriminator_optimizer() { return *opt_d_; }

  Index epoch() const { return epoch_; }
  Index step() const { return step_; }
  Index batch_in_epoch() const { return batch_; }
  double lambda() const { return decay_schedule(config_.loss_weights.lambda0, epoch_, config_.loss_weights.decay_rate); }
  double eta() const { return decay_schedule(config_.loss_weights.eta0, epoch_, config_.loss_weights.decay_rate); }

  // One D step then one G step on a batch of [-1,1] tensors.
  StepMetrics train_step(const Tensor<float>& sf, const Tensor<float>& rf);

  // The three phases of train_step, exposed for inspection.
  Tensor<float> generate(const Tensor<float>& sf);
  double update_discriminator(const Tensor<float>& fake, const Tensor<float>& rf);
  GeneratorObjective<float> update_generator(const Tensor<float>& fake, const Tensor<float>& rf);

  void advance_epoch() {
    ++epoch_;
    batch_ = 0;
  }
  void note_batch_done() { ++batch_; }

  Checkpoint to_checkpoint() const;
  // `config` replaces the stored one (run length and cadence may differ).
  static std::unique_ptr<Trainer> from_checkpoint(const Checkpoint& ckpt,
                                                  const std::optional<TrainConfig>& config = std::nullopt);

 private:
  std::string diagnostics(const StepMetrics& m);

  TrainConfig config_;
  std::unique_ptr<StyleRemovalNetwork<float>> srn_;
  std::unique_ptr<Discriminator<float>> dn_;
  std::unique_ptr<FeatureExtractor<float>> psi_;
  std::unique_ptr<RMSprop<float>> opt_g_;
  std::unique_ptr<RMSprop<float>> opt_d_;
  Index epoch_ = 0;
  Index step_ = 0;
  Index batch_ = 0;
};

struct TrainingData {
  Tensor<float> sf;
  Tensor<float> rf;
  std::vector<std::string> ids;
};

// Train-split records (restricted to config.train_styles when set), as [-1,1] tensors.
TrainingData load_training_data(const DatasetManifest& manifest, const TrainConfig& config);

// Batch order of one epoch: a Fisher-Yates permutation seeded by (seed, epoch).
std::vector<Index> epoch_order(std::uint64_t seed, Index epoch, Index count);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<StepMetrics> metrics;  // rows produced by this call
};

// Epoch loop with seeded shuffling, per-epoch schedules and periodic
// checkpoints under out_dir. When `resume` is given, training continues from
// that checkpoint, which must have been produced by a config with the same hash.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

// Inference-mode generator from a checkpoint.
std::unique_ptr<StyleRemovalNetwork<float>> load_generator(const Checkpoint& ckpt);

// Destylizes portraits; inputs of another size are center-cropped and resized.
std::vector<Image> recover(StyleRemovalNetwork<float>& srn, const std::vector<Image>& portraits, Index batch_size = 16);
std::vector<Image> recover(const std::filesystem::path& checkpoint, const std::vector<Image>& portraits);

}  // namespace ifrp

#endif  // IFRP_TRAINER_HPP
