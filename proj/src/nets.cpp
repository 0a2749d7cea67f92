#include "ssdas/nets.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "ssdas/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace ssdas {

namespace {

Tensor uniform_init(std::vector<int> shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

ConvLayer make_conv(int cin, int cout, int k, Rng& rng) {
  const double bound = std::sqrt(1.0 / (static_cast<double>(cin) * k * k));
  ConvLayer layer;
  layer.weights = uniform_init({cout, cin, k, k}, bound, rng);
  layer.bias = uniform_init({cout}, bound, rng);
  return layer;
}

// Temporarily detaches parameters so ops recorded in scope skip their
// gradient accumulation; restores the flags on exit.
class ParamDetach {
 public:
  ParamDetach(const std::vector<Tensor>& params, bool active) {
    if (!active) return;
    for (const Tensor& p : params) {
      nodes_.push_back(p.node());
      saved_.push_back(p.node()->requires_grad);
      p.node()->requires_grad = false;
    }
  }
  ~ParamDetach() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i]->requires_grad = saved_[i];
  }

 private:
  std::vector<std::shared_ptr<TensorNode>> nodes_;
  std::vector<char> saved_;
};

}  // namespace

SegModel::SegModel(int num_classes, std::uint64_t init_seed, int hidden1, int hidden2)
    : num_classes_(num_classes), hidden1_(hidden1), hidden2_(hidden2) {
  if (num_classes < 2) throw std::invalid_argument("SegModel: need at least two classes");
  Rng rng(init_seed);
  c1_ = make_conv(3, hidden1_, 3, rng);
  c2_ = make_conv(hidden1_, hidden2_, 3, rng);
  c3_ = make_conv(hidden2_, num_classes_, 3, rng);
}

Tensor SegModel::forward(Tape& tape, const Tensor& image) const {
  return forward_with_features(tape, image).first;
}

std::pair<Tensor, Tensor> SegModel::forward_with_features(Tape& tape, const Tensor& image) const {
  Tensor h1 = tape.relu(tape.conv2d(image, c1_.weights, c1_.bias));
  Tensor h2 = tape.relu(tape.conv2d(h1, c2_.weights, c2_.bias));
  Tensor logits = tape.conv2d(h2, c3_.weights, c3_.bias);
  return {tape.softmax(logits, 0), h2};
}

std::vector<Tensor> SegModel::parameters() const {
  return {c1_.weights, c1_.bias, c2_.weights, c2_.bias, c3_.weights, c3_.bias};
}

JigsawClassifier::JigsawClassifier(int in_channels, int in_h, int in_w, int grid_n,
                                   int num_permutations, std::uint64_t init_seed, int hidden)
    : in_channels_(in_channels),
      in_h_(in_h),
      in_w_(in_w),
      grid_n_(grid_n),
      num_permutations_(num_permutations),
      hidden_(hidden) {
  if (in_h % grid_n != 0 || in_w % grid_n != 0)
    throw std::invalid_argument("JigsawClassifier: input size not divisible by grid");
  if (num_permutations < 1)
    throw std::invalid_argument("JigsawClassifier: need at least one class");
  Rng rng(init_seed);
  conv_ = make_conv(in_channels_, hidden_, 3, rng);
  const int flat = hidden_ * grid_n_ * grid_n_;
  const double bound = std::sqrt(1.0 / static_cast<double>(flat));
  head_w_ = uniform_init({num_permutations_, flat}, bound, rng);
  head_b_ = uniform_init({num_permutations_}, bound, rng);
}

Tensor JigsawClassifier::forward(Tape& tape, const Tensor& segmap, bool learn_params) const {
  if (segmap.shape() != std::vector<int>{in_channels_, in_h_, in_w_})
    throw std::invalid_argument("JigsawClassifier: map shape does not match configuration");
  ParamDetach guard(parameters(), frozen_ || !learn_params);
  Tensor h = tape.relu(tape.conv2d(segmap, conv_.weights, conv_.bias));
  Tensor pooled = tape.avg_pool_grid(h, grid_n_);
  Tensor logits = tape.linear(pooled, head_w_, head_b_);
  return tape.softmax(logits, 0);
}

JigsawClassifier JigsawClassifier::clone_architecture(std::uint64_t init_seed) const {
  return JigsawClassifier(in_channels_, in_h_, in_w_, grid_n_, num_permutations_, init_seed,
                          hidden_);
}

std::vector<Tensor> JigsawClassifier::parameters() const {
  return {conv_.weights, conv_.bias, head_w_, head_b_};
}

std::uint64_t param_hash(const std::vector<Tensor>& params) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const Tensor& p : params)
    h = fnv1a_bytes(p.data(), p.values().size() * sizeof(double), h);
  return h;
}

namespace {
constexpr char kMagic[4] = {'S', 'S', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void save_checkpoint(const std::string& path, const SegModel& model) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  std::uint64_t count = 0;
  for (const Tensor& p : model.parameters()) count += static_cast<std::uint64_t>(p.size());
  if (std::fwrite(kMagic, 1, 4, f.get()) != 4 ||
      std::fwrite(&kVersion, sizeof(kVersion), 1, f.get()) != 1 ||
      std::fwrite(&count, sizeof(count), 1, f.get()) != 1)
    throw DataError("checkpoint write failed: " + path);
  for (const Tensor& p : model.parameters())
    if (std::fwrite(p.data(), sizeof(double), p.values().size(), f.get()) != p.values().size())
      throw DataError("checkpoint write failed: " + path);
}

SegModel load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path, 0, "bad checkpoint magic");
  if (std::fread(&version, sizeof(version), 1, f.get()) != 1 || version != kVersion)
    throw FormatError(path, 4, "unsupported checkpoint version " + std::to_string(version));
  if (std::fread(&count, sizeof(count), 1, f.get()) != 1)
    throw FormatError(path, 8, "truncated checkpoint header");

  // The stream stores no dimensions; the class count is recovered from the
  // parameter count of the fixed architecture (hidden widths 16 and 32).
  const std::uint64_t base = 16ull * 3 * 9 + 16 + 32ull * 16 * 9 + 32;
  if (count <= base || (count - base) % (32ull * 9 + 1) != 0)
    throw FormatError(path, 8, "parameter count does not match the model architecture");
  const int num_classes = static_cast<int>((count - base) / (32ull * 9 + 1));

  SegModel model(num_classes, /*init_seed=*/0);
  std::size_t offset = 16;
  for (Tensor p : model.parameters()) {
    if (std::fread(p.data(), sizeof(double), p.values().size(), f.get()) != p.values().size())
      throw FormatError(path, offset, "truncated checkpoint payload");
    offset += p.values().size() * sizeof(double);
  }
  return model;
}

}  // namespace ssdas
