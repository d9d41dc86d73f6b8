#include "ctrgan/model.hpp"

#include <cmath>

namespace ctrgan::model {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::cycle_only: return "cycle_only";
    case Ablation::attention: return "attention";
    case Ablation::time_attention: return "time_attention";
  }
  throw DataError("unknown ablation value");
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "cycle_only") return Ablation::cycle_only;
  if (s == "attention") return Ablation::attention;
  if (s == "time_attention") return Ablation::time_attention;
  throw DataError("unknown ablation: " + s +
                  " (expected cycle_only|attention|time_attention)");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.canvas = 256;
  c.enc_channels = {32, 64, 128, 256, 256};
  c.enc_strides = {2, 2, 2, 2, 1};
  c.pool_stride = 4;
  c.dec_channels = {256, 128, 64, 32, 16, 8};
  return c;
}

int ModelConfig::downsample() const {
  int d = pool_stride;
  for (int s : enc_strides) d *= s;
  return d;
}

void ModelConfig::validate() const {
  if (canvas <= 0) throw DataError("model config: canvas must be positive");
  if (enc_channels.empty() || enc_channels.size() != enc_strides.size())
    throw DataError("model config: enc_channels/enc_strides mismatch");
  const int ds = downsample();
  if (ds <= 0 || (ds & (ds - 1)) != 0)
    throw DataError("model config: downsampling factor must be a power of two");
  if (canvas % ds != 0)
    throw DataError("model config: canvas " + std::to_string(canvas) +
                    " not divisible by downsampling factor " + std::to_string(ds));
  int ups = 0;
  for (int d = ds; d > 1; d /= 2) ++ups;
  if (static_cast<int>(dec_channels.size()) != ups)
    throw DataError("model config: dec_channels must list one stage per 2x upsample (" +
                    std::to_string(ups) + ")");
  if (token_dim <= 0 || n_heads <= 0 || token_dim % n_heads != 0)
    throw DataError("model config: token_dim must be divisible by n_heads");
  if (window < 1) throw DataError("model config: window (l_w) must be >= 1");
  if (disc_channels.empty() || disc_channels.size() != disc_strides.size())
    throw DataError("model config: disc_channels/disc_strides mismatch");
  if (disc_channels.back() != 1)
    throw DataError("model config: discriminator must end in one score channel");
}

json ModelConfig::to_json() const {
  json j;
  j["canvas"] = canvas;
  j["in_channels"] = in_channels;
  j["enc_channels"] = enc_channels;
  j["enc_strides"] = enc_strides;
  j["pool_stride"] = pool_stride;
  j["dec_channels"] = dec_channels;
  j["kernel"] = kernel;
  j["token_dim"] = token_dim;
  j["n_heads"] = n_heads;
  j["n_blocks_encoder"] = n_blocks_encoder;
  j["n_blocks_decoder"] = n_blocks_decoder;
  j["ffn_mult"] = ffn_mult;
  j["window"] = window;
  j["ablation"] = to_string(ablation);
  j["leaky_slope"] = leaky_slope;
  j["disc_channels"] = disc_channels;
  j["disc_strides"] = disc_strides;
  j["disc_kernel"] = disc_kernel;
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.canvas = j.value("canvas", c.canvas);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.enc_channels = j.value("enc_channels", c.enc_channels);
  c.enc_strides = j.value("enc_strides", c.enc_strides);
  c.pool_stride = j.value("pool_stride", c.pool_stride);
  c.dec_channels = j.value("dec_channels", c.dec_channels);
  c.kernel = j.value("kernel", c.kernel);
  c.token_dim = j.value("token_dim", c.token_dim);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_blocks_encoder = j.value("n_blocks_encoder", c.n_blocks_encoder);
  c.n_blocks_decoder = j.value("n_blocks_decoder", c.n_blocks_decoder);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.window = j.value("window", c.window);
  if (j.contains("ablation")) c.ablation = ablation_from_string(j.at("ablation"));
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.disc_channels = j.value("disc_channels", c.disc_channels);
  c.disc_strides = j.value("disc_strides", c.disc_strides);
  c.disc_kernel = j.value("disc_kernel", c.disc_kernel);
  c.validate();
  return c;
}

Eigen::VectorXd attention_trace(const std::vector<AttentionRecord>& records,
                                int key_index) {
  Eigen::VectorXd trace(records.size());
  for (size_t t = 0; t < records.size(); ++t) {
    const auto& rec = records[t];
    if (rec.cross.empty())
      throw DataError("attention_trace: record has no cross-attention (cycle_only?)");
    const Tensord& a = rec.cross.back();  // last decoder block
    const int heads = a.dim(0), nq = a.dim(1), nk = a.dim(2);
    if (key_index < 0 || key_index >= nk)
      throw DataError("attention_trace: key index out of range");
    double acc = 0;
    for (int h = 0; h < heads; ++h)
      for (int q = 0; q < nq; ++q)
        acc += a[(static_cast<Eigen::Index>(h) * nq + q) * nk + key_index];
    trace[static_cast<Eigen::Index>(t)] = acc / (heads * nq);
  }
  return trace;
}

}  // namespace ctrgan::model
