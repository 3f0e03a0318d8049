#include "fcache/pipeline.hpp"

#include <unistd.h>

#include <iomanip>
#include <ostream>

#include "fcache/cache_store.hpp"
#include "fcache/refnet.hpp"
#include "fcache/rng.hpp"

namespace fcache {

namespace {

// Removes a scratch cache on scope exit.
struct ScratchFile {
  std::filesystem::path path;
  bool owned = false;
  ~ScratchFile() {
    if (owned) {
      std::error_code ec;
      std::filesystem::remove(path, ec);
    }
  }
};

constexpr std::uint64_t kEpochStream = 0x45504F4348ULL;
constexpr std::uint64_t kFlipStream = 0x464C4950ULL;

}  // namespace

E2eReport run_end_to_end(const E2eConfig& cfg) {
  const SyntheticDataset train = gen_synthetic_dataset(derive_seed(cfg.seed, 1), cfg.train_samples);
  const SyntheticDataset test = gen_synthetic_dataset(derive_seed(cfg.seed, 2), cfg.test_samples);
  const RefNet net = RefNet::create(derive_seed(cfg.seed, 3));
  constexpr std::size_t kClasses = 4;

  std::vector<Tensor> original, flipped_input;
  for (const auto& img : train.images) {
    original.push_back(net.forward(img, cfg.stage));
    flipped_input.push_back(net.forward(flip_h(img), cfg.stage));
  }
  std::vector<Tensor> test_clean, test_flipped;
  for (const auto& img : test.images) {
    test_clean.push_back(net.forward(img, cfg.stage));
    test_flipped.push_back(net.forward(flip_h(img), cfg.stage));
  }

  E2eReport report;
  report.channel_scores = dataset_channel_scores(original, flipped_input, derive_seed(cfg.seed, 4));
  report.selection = select_sensitive_channels(report.channel_scores, cfg.gamma);

  std::vector<SampleRecord> records;
  records.reserve(original.size());
  for (std::size_t i = 0; i < original.size(); ++i)
    records.push_back({original[i], train.labels[i], gather_channels(flipped_input[i], report.selection.indices), {}});

  ScratchFile scratch;
  scratch.path = cfg.cache_path;
  if (scratch.path.empty()) {
    scratch.path = std::filesystem::temp_directory_path() /
                   ("fcache_e2e_" + std::to_string(::getpid()) + "_" + std::to_string(cfg.seed) + ".afc");
    scratch.owned = true;
  }
  BuildOptions build;
  build.chunk_size = cfg.chunk_size;
  build.codec.tolerance = cfg.tolerance;
  build.aug.kind = AugKind::Channel;
  build.aug.channels = report.selection;
  build.label_width = 1;
  build.seed = cfg.seed;
  build.workers = cfg.workers;
  build_cache(records, build, scratch.path);
  const CacheHandle cache = CacheHandle::open(scratch.path);

  report.cache_bytes = cache.file_size();
  report.raw_feature_bytes = original.size() * original.front().numel() * sizeof(float);
  report.compression_ratio = double(report.cache_bytes) / double(report.raw_feature_bytes);

  const std::size_t inputs = original.front().numel();
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 5);
  const std::uint64_t epoch_base = derive_seed(cfg.seed, kEpochStream);
  const auto epoch_seed = [&](std::size_t e) { return derive_seed(epoch_base, e); };

  // Raw features visited in exactly the cache's epoch order.
  const LinearProbe raw_probe = train_linear_probe(
      [&](std::size_t e, const SampleVisitor& visit) {
        for (auto id : epoch_order(original.size(), cfg.chunk_size, epoch_seed(e)))
          visit(original[id].data(), train.labels[id]);
      },
      inputs, kClasses, tc);

  enum class Flip { None, Naive, Aware };
  const auto train_from_cache = [&](Flip mode) {
    return train_linear_probe(
        [&](std::size_t e, const SampleVisitor& visit) {
          Rng flips(derive_seed(derive_seed(cfg.seed, kFlipStream), e));
          auto stream = shuffled_epoch_iter(cache, epoch_seed(e));
          while (auto s = stream.next()) {
            const int label = static_cast<int>(s->label);
            if (mode == Flip::None || flips.uniform() >= cfg.flip_probability) {
              visit(s->features.data(), label);
            } else if (mode == Flip::Naive) {
              visit(flip_h(s->features).data(), label);
            } else {
              visit(apply_flip_augmentation(s->features, report.selection.indices, s->aug_stored).data(), label);
            }
          }
        },
        inputs, kClasses, tc);
  };

  const LinearProbe comp_probe = train_from_cache(Flip::None);
  const LinearProbe naive_probe = train_from_cache(Flip::Naive);
  const LinearProbe aware_probe = train_from_cache(Flip::Aware);

  report.acc_raw = evaluate(raw_probe, test_clean, test.labels);
  report.acc_flip_raw = evaluate(raw_probe, test_flipped, test.labels);
  report.acc_compressed = evaluate(comp_probe, test_clean, test.labels);
  report.acc_flip_naive = evaluate(naive_probe, test_flipped, test.labels);
  report.acc_flip_aug = evaluate(aware_probe, test_flipped, test.labels);
  return report;
}

void write_e2e_csv(std::ostream& out, const E2eReport& r) {
  out << "metric,value\n" << std::setprecision(9);
  out << "acc_raw," << r.acc_raw << '\n';
  out << "acc_compressed," << r.acc_compressed << '\n';
  out << "acc_flip_raw," << r.acc_flip_raw << '\n';
  out << "acc_flip_naive," << r.acc_flip_naive << '\n';
  out << "acc_flip_aug," << r.acc_flip_aug << '\n';
  out << "compression_ratio," << r.compression_ratio << '\n';
  out << "cache_bytes," << r.cache_bytes << '\n';
  out << "raw_feature_bytes," << r.raw_feature_bytes << '\n';
  out << "selected_channels," << r.selection.indices.size() << '\n';
}

}  // namespace fcache
