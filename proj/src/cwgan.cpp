// SPDX-License-Identifier: Apache-2.0
#include "t2s/cwgan.hpp"

#include <cmath>
#include <fstream>

#include "t2s/diff/optim.hpp"
#include "t2s/error.hpp"

namespace t2s {

using diff::Tensor;
namespace d = diff;

nlohmann::json GanConfig::to_json() const {
  return {{"resolution", resolution},
          {"channel_divisor", channel_divisor},
          {"embed_dim", embed_dim},
          {"noise_dim", noise_dim},
          {"noise_half_width", noise_half_width},
          {"lambda_gp", lambda_gp},
          {"warmup_generator_iters", warmup_generator_iters},
          {"warmup_critic_steps", warmup_critic_steps},
          {"critic_steps", critic_steps},
          {"generator_steps", generator_steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"decay_rate", decay_rate},
          {"decay_steps", decay_steps},
          {"beta1", beta1},
          {"beta2", beta2},
          {"seed", seed},
          {"log_every", log_every}};
}

GanConfig GanConfig::from_json(const nlohmann::json& j) {
  GanConfig c;
  c.resolution = j.value("resolution", c.resolution);
  c.channel_divisor = j.value("channel_divisor", c.channel_divisor);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.noise_dim = j.value("noise_dim", c.noise_dim);
  c.noise_half_width = j.value("noise_half_width", c.noise_half_width);
  c.lambda_gp = j.value("lambda_gp", c.lambda_gp);
  c.warmup_generator_iters = j.value("warmup_generator_iters", c.warmup_generator_iters);
  c.warmup_critic_steps = j.value("warmup_critic_steps", c.warmup_critic_steps);
  c.critic_steps = j.value("critic_steps", c.critic_steps);
  c.generator_steps = j.value("generator_steps", c.generator_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.decay_rate = j.value("decay_rate", c.decay_rate);
  c.decay_steps = j.value("decay_steps", c.decay_steps);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  return c;
}

namespace {

void check_resolution(std::int64_t r) {
  if (r < 8 || (r & (r - 1)) != 0) throw ConfigError("GAN resolution must be a power of two >= 8");
}

std::int64_t div_channels(std::int64_t c, const GanConfig& cfg) {
  return std::max<std::int64_t>(1, c / cfg.channel_divisor);
}

}  // namespace

Generator::Generator(d::ParamStore& store, const GanConfig& cfg, Rng& rng) : config_(cfg) {
  check_resolution(cfg.resolution);
  base_res_ = cfg.resolution / 8;
  base_channels_ = div_channels(512, cfg);
  fc_ = d::Linear(store, "gen.fc1", cfg.embed_dim + cfg.noise_dim, base_channels_ * base_res_ * base_res_ * base_res_, rng);
  norms_.emplace_back(store, "gen.fc1_bn", base_channels_);
  // Kernel 3 keeps the size at stride 1 with integer padding.
  stages_.emplace_back(store, "gen.conv2_trans", base_channels_, base_channels_, d::ConvGeometry{3, 1, 1}, rng);
  norms_.emplace_back(store, "gen.conv2_bn", base_channels_);
  const std::int64_t widths[] = {base_channels_, div_channels(256, cfg), div_channels(128, cfg), 4};
  const char* names[] = {"gen.conv3_trans", "gen.conv4_trans", "gen.conv5_trans"};
  for (int i = 0; i < 3; ++i) {
    stages_.emplace_back(store, names[i], widths[i], widths[i + 1], d::ConvGeometry{4, 2, 1}, rng);
    if (i < 2) norms_.emplace_back(store, std::string(names[i]) + "_bn", widths[i + 1]);
  }
}

Tensor Generator::operator()(const Tensor& text, const Tensor& noise, bool training) const {
  const std::int64_t n = text.size(0);
  Tensor x = d::reshape(fc_(d::concat({text, noise}, 1)), {n, base_channels_, base_res_, base_res_, base_res_});
  x = d::relu(norms_[0](x, training));
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    x = stages_[i](x);
    x = i + 1 < stages_.size() ? d::relu(norms_[i + 1](x, training)) : d::sigmoid(x);
  }
  return x;
}

Critic::Critic(d::ParamStore& store, const GanConfig& cfg, Rng& rng) {
  check_resolution(cfg.resolution);
  // Stride-2 kernel-4 stages down to 2^3, then a kernel-2 stride-2 stage to 1^3.
  std::int64_t res = cfg.resolution, in = 4, width = 64;
  int idx = 1;
  while (res > 2) {
    const std::string name = "critic.conv" + std::to_string(idx++);
    convs_.emplace_back(store, name, in, div_channels(width, cfg), d::ConvGeometry{4, 2, 1}, rng);
    layer_names_.push_back(name);
    in = div_channels(width, cfg);
    width *= 2;
    res /= 2;
  }
  convs_.emplace_back(store, "critic.conv5", in, div_channels(256, cfg), d::ConvGeometry{2, 2, 0}, rng);
  layer_names_.push_back("critic.conv5");
  flat_ = div_channels(256, cfg);
  const std::int64_t text_width = div_channels(256, cfg);
  text1_ = d::Linear(store, "critic.text_fc1", cfg.embed_dim, text_width, rng);
  text2_ = d::Linear(store, "critic.text_fc2", text_width, text_width, rng);
  fc6_ = d::Linear(store, "critic.fc6", flat_ + text_width, div_channels(128, cfg), rng);
  fc7_ = d::Linear(store, "critic.fc7", div_channels(128, cfg), div_channels(64, cfg), rng);
  fc8_ = d::Linear(store, "critic.fc8", div_channels(64, cfg), 1, rng);
  for (const char* n : {"critic.text_fc1", "critic.text_fc2", "critic.concat", "critic.fc6", "critic.fc7", "critic.fc8"}) {
    layer_names_.emplace_back(n);
  }
}

Tensor Critic::operator()(const Tensor& text, const Tensor& shape) const {
  Tensor x = shape;
  for (const auto& c : convs_) x = d::leaky_relu(c(x), 0.2);
  x = d::reshape(x, {x.size(0), flat_});
  const Tensor t = d::leaky_relu(text2_(d::leaky_relu(text1_(text), 0.2)), 0.2);
  Tensor h = d::concat({x, t}, 1);
  h = d::leaky_relu(fc6_(h), 0.2);
  h = d::leaky_relu(fc7_(h), 0.2);
  return fc8_(h);
}

Tensor gradient_penalty(const CriticFn& critic, const Tensor& text, const Tensor& shape) {
  Tensor t = text.detach();
  Tensor s = shape.detach();
  t.set_requires_grad(true);
  s.set_requires_grad(true);
  const Tensor out = d::sum(critic(t, s));
  const auto grads = d::grad(out, {t, s}, {}, true);
  const std::int64_t n = text.size(0);
  const Tensor gt = d::l2_norm_rows(d::reshape(grads[0], {n, grads[0].numel() / n}));
  const Tensor gs = d::l2_norm_rows(d::reshape(grads[1], {n, grads[1].numel() / n}));
  return d::mean(d::add(d::square(d::add_scalar(gt, -1.0)), d::square(d::add_scalar(gs, -1.0))));
}

CriticLoss critic_loss(const CriticFn& critic, const CriticBatch& b, double lambda_gp) {
  CriticLoss out;
  const Tensor fake = d::mean(critic(b.fake_text, b.fake_shape));
  const Tensor mis = d::mean(critic(b.mismatch_text, b.mismatch_shape));
  const Tensor mat = d::mean(critic(b.match_text, b.match_shape));
  out.fake_mean = fake.item();
  out.mismatch_mean = mis.item();
  out.match_mean = mat.item();
  out.total = d::sub(d::add(fake, mis), d::scale(mat, 2.0));
  if (lambda_gp != 0.0) {
    const Tensor gp = gradient_penalty(critic, b.gp_text, b.gp_shape);
    out.penalty = gp.item();
    out.total = d::add(out.total, d::scale(gp, lambda_gp));
  }
  return out;
}

Tensor generator_loss(const CriticFn& critic, const Tensor& text, const Tensor& generated) {
  return d::neg(d::mean(critic(text, generated)));
}

GanDataset make_gan_dataset(const EmbeddingDataset& data, const EmbeddingModel& encoder) {
  GanDataset out;
  out.grids = data.grids;
  out.classes = data.classes;
  out.records = data.records;
  out.embed_dim = encoder.config.embed_dim;
  const auto dim = static_cast<std::size_t>(out.embed_dim);
  for (const auto& caps : data.tokens) {
    const auto flat = encoder.embed_texts(caps);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < caps.size(); ++i) {
      rows.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * dim),
                        flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    }
    out.text_embeddings.push_back(std::move(rows));
  }
  return out;
}

GanSample sample_gan_batch(const GanDataset& data, std::int64_t batch_size, Rng& rng) {
  const std::size_t n = data.grids.size();
  if (n == 0) throw InvalidArgument("empty GAN dataset");
  bool multi = false;
  for (auto c : data.classes) multi = multi || c != data.classes[0];
  if (!multi) throw InvalidArgument("mismatched pairs need at least two classes");
  GanSample s;
  auto pick_text = [&](std::size_t shape, std::vector<std::size_t>& sh, std::vector<std::size_t>& ix) {
    sh.push_back(shape);
    ix.push_back(rng.below(data.text_embeddings[shape].size()));
  };
  for (std::int64_t i = 0; i < batch_size; ++i) {
    const std::size_t a = rng.below(n);
    s.match_shape.push_back(a);
    pick_text(a, s.match_text_shape, s.match_text_index);

    const std::size_t b = rng.below(n);
    pick_text(b, s.mismatch_text_shape, s.mismatch_text_index);
    std::size_t other;
    do {
      other = rng.below(n);
    } while (data.classes[other] == data.classes[b]);
    s.mismatch_shape.push_back(other);

    pick_text(rng.below(n), s.gen_text_shape, s.gen_text_index);
  }
  return s;
}

Tensor noise_tensor(std::int64_t n, const GanConfig& config, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(n * config.noise_dim));
  for (auto& x : v) x = rng.uniform(-config.noise_half_width, config.noise_half_width);
  return d::constant({n, config.noise_dim}, std::move(v));
}

namespace {

Tensor text_rows(const GanDataset& data, const std::vector<std::size_t>& shapes, const std::vector<std::size_t>& idx) {
  std::vector<double> v;
  v.reserve(shapes.size() * static_cast<std::size_t>(data.embed_dim));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& row = data.text_embeddings[shapes[i]][idx[i]];
    v.insert(v.end(), row.begin(), row.end());
  }
  return d::constant({static_cast<std::int64_t>(shapes.size()), data.embed_dim}, std::move(v));
}

Tensor shape_rows(const GanDataset& data, const std::vector<std::size_t>& shapes) {
  std::vector<const VoxelGrid*> g;
  for (auto s : shapes) g.push_back(&data.grids[s]);
  return grids_to_tensor(g);
}

}  // namespace

GanModel::GanModel(const GanConfig& cfg) : config(cfg) {
  Rng rng(hash_seed({cfg.seed, 0x6a17ULL}));
  generator = std::make_unique<Generator>(gen_store, config, rng);
  critic = std::make_unique<Critic>(critic_store, config, rng);
}

void save_gan_checkpoint(const std::filesystem::path& path, const GanModel& model, const GanLog& log) {
  d::Checkpoint ck;
  ck.put_store("generator.", model.gen_store);
  ck.put_store("critic.", model.critic_store);
  ck.meta = {{"kind", "cwgan"},
             {"config", model.config.to_json()},
             {"generator_step", log.generator_step},
             {"wasserstein", log.wasserstein},
             {"critic_loss", log.critic_loss},
             {"generator_loss", log.generator_loss}};
  ck.save(path);
}

std::shared_ptr<GanModel> load_gan_checkpoint(const std::filesystem::path& path) {
  const auto ck = d::Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "cwgan") throw FormatError(path.string() + " is not a CWGAN checkpoint");
  auto model = std::make_shared<GanModel>(GanConfig::from_json(ck.meta.at("config")));
  ck.load_store("generator.", model->gen_store);
  ck.load_store("critic.", model->critic_store);
  return model;
}

GanTrainResult train_gan(const GanDataset& data, const GanConfig& config, const std::filesystem::path& out_ckpt,
                         const std::filesystem::path& log_csv) {
  if (data.grids.empty()) throw InvalidArgument("empty GAN dataset");
  if (static_cast<std::int64_t>(data.grids[0].dims().x) != config.resolution) {
    throw ConfigError("GAN resolution " + std::to_string(config.resolution) + " does not match data resolution " +
                      std::to_string(data.grids[0].dims().x));
  }
  if (data.embed_dim != config.embed_dim) throw ConfigError("text embedding width differs from GAN config");
  GanTrainResult result;
  result.model = std::make_shared<GanModel>(config);
  GanModel& m = *result.model;
  const d::AdamConfig opt{config.lr, config.beta1, config.beta2, 1e-8, config.decay_rate, config.decay_steps};
  d::Adam gen_opt(m.gen_store, opt), critic_opt(m.critic_store, opt);
  const CriticFn critic = [&m](const Tensor& t, const Tensor& s) { return (*m.critic)(t, s); };
  Rng rng(hash_seed({config.seed, 0x7a1eULL}));

  std::ofstream csv;
  if (!log_csv.empty()) {
    csv.open(log_csv, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + log_csv.string());
    csv << "generator_step,critic_steps,wasserstein,critic_loss,generator_loss\n";
  }
  for (std::int64_t g = 0; g < config.generator_steps; ++g) {
    const std::int64_t n_critic = config.critic_steps_before(g);
    double w_sum = 0.0, c_sum = 0.0;
    for (std::int64_t c = 0; c < n_critic; ++c) {
      const GanSample s = sample_gan_batch(data, config.batch_size, rng);
      CriticBatch b;
      b.fake_text = text_rows(data, s.gen_text_shape, s.gen_text_index);
      {
        d::NoGradGuard no_grad;
        b.fake_shape = (*m.generator)(b.fake_text, noise_tensor(config.batch_size, config, rng), true);
      }
      b.mismatch_text = text_rows(data, s.mismatch_text_shape, s.mismatch_text_index);
      b.mismatch_shape = shape_rows(data, s.mismatch_shape);
      b.match_text = text_rows(data, s.match_text_shape, s.match_text_index);
      b.match_shape = shape_rows(data, s.match_shape);
      // GP samples: each row is a real matched pair or a generated pair with probability 0.5.
      std::vector<double> gt, gs;
      const auto dim = static_cast<std::size_t>(config.embed_dim);
      const auto vox = static_cast<std::size_t>(b.match_shape.numel() / config.batch_size);
      for (std::int64_t i = 0; i < config.batch_size; ++i) {
        const bool real = rng.uniform() < 0.5;
        const Tensor& tsrc = real ? b.match_text : b.fake_text;
        const Tensor& ssrc = real ? b.match_shape : b.fake_shape;
        gt.insert(gt.end(), tsrc.data().begin() + static_cast<std::ptrdiff_t>(i * dim),
                  tsrc.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
        gs.insert(gs.end(), ssrc.data().begin() + static_cast<std::ptrdiff_t>(i * vox),
                  ssrc.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * vox));
      }
      b.gp_text = d::constant(b.match_text.shape(), std::move(gt));
      b.gp_shape = d::constant(b.match_shape.shape(), std::move(gs));
      const CriticLoss loss = critic_loss(critic, b, config.lambda_gp);
      if (!std::isfinite(loss.total.item())) {
        if (!out_ckpt.empty()) save_gan_checkpoint(out_ckpt, m, result.log);
        throw DivergenceError("non-finite critic loss at generator step " + std::to_string(g));
      }
      d::backward(loss.total);
      critic_opt.step();
      w_sum += loss.wasserstein();
      c_sum += loss.total.item();
    }
    const GanSample s = sample_gan_batch(data, config.batch_size, rng);
    const Tensor text = text_rows(data, s.gen_text_shape, s.gen_text_index);
    const Tensor fake = (*m.generator)(text, noise_tensor(config.batch_size, config, rng), true);
    const Tensor gl = generator_loss(critic, text, fake);
    if (!std::isfinite(gl.item())) {
      if (!out_ckpt.empty()) save_gan_checkpoint(out_ckpt, m, result.log);
      throw DivergenceError("non-finite generator loss at generator step " + std::to_string(g));
    }
    d::backward(gl);
    m.critic_store.zero_grad();
    gen_opt.step();
    result.log.generator_step.push_back(g);
    result.log.wasserstein.push_back(w_sum / static_cast<double>(n_critic));
    result.log.critic_loss.push_back(c_sum / static_cast<double>(n_critic));
    result.log.generator_loss.push_back(gl.item());
    if (csv.is_open() && (config.log_every <= 0 || g % config.log_every == 0 || g + 1 == config.generator_steps)) {
      csv << g << ',' << n_critic << ',' << result.log.wasserstein.back() << ',' << result.log.critic_loss.back()
          << ',' << result.log.generator_loss.back() << '\n';
    }
  }
  if (!out_ckpt.empty()) save_gan_checkpoint(out_ckpt, m, result.log);
  return result;
}

std::vector<VoxelGrid> tensor_to_grids(const Tensor& t) {
  if (t.rank() != 5 || t.size(1) != VoxelGrid::kChannels) throw ShapeError("expected [N, 4, X, Y, Z], got " + d::shape_str(t.shape()));
  const GridDims dims{static_cast<std::uint32_t>(t.size(2)), static_cast<std::uint32_t>(t.size(3)),
                      static_cast<std::uint32_t>(t.size(4))};
  const std::size_t voxels = dims.count();
  std::vector<VoxelGrid> out;
  for (std::int64_t n = 0; n < t.size(0); ++n) {
    std::vector<float> v(voxels * VoxelGrid::kChannels);
    const double* src = t.data().data() + n * static_cast<std::int64_t>(voxels) * VoxelGrid::kChannels;
    for (std::size_t i = 0; i < voxels; ++i) {
      for (int c = 0; c < VoxelGrid::kChannels; ++c) {
        v[i * VoxelGrid::kChannels + c] = static_cast<float>(std::clamp(src[c * voxels + i], 0.0, 1.0));
      }
    }
    out.emplace_back(dims, std::move(v));
  }
  return out;
}

std::vector<VoxelGrid> generate(const GanModel& model, const std::vector<double>& embedding, std::int64_t n,
                                std::uint64_t seed) {
  if (static_cast<std::int64_t>(embedding.size()) != model.config.embed_dim) {
    throw ShapeError("conditioning embedding has width " + std::to_string(embedding.size()));
  }
  d::NoGradGuard no_grad;
  Rng rng(hash_seed({seed, 0x9e4eULL}));
  std::vector<double> rows;
  for (std::int64_t i = 0; i < n; ++i) rows.insert(rows.end(), embedding.begin(), embedding.end());
  const Tensor text = d::constant({n, model.config.embed_dim}, std::move(rows));
  return tensor_to_grids((*model.generator)(text, noise_tensor(n, model.config, rng)));
}

}  // namespace t2s
