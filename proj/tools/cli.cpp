#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "fcache/cache_store.hpp"
#include "fcache/channel_aug.hpp"
#include "fcache/codec.hpp"
#include "fcache/error.hpp"
#include "fcache/pipeline.hpp"
#include "fcache/policy.hpp"
#include "fcache/raw_dump.hpp"
#include "fcache/refnet.hpp"
#include "fcache/rng.hpp"
#include "fcache/token_aug.hpp"

namespace fcache::cli {

namespace {

struct BuildArgs {
  std::string input, labels, out, flipped, augmented, transform = "block";
  double tau = 1e-3;
  std::size_t chunk_size = kDefaultChunkSize;
  std::optional<double> gamma, alpha;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  unsigned label_width = 4;
};

struct DataArgs {
  std::string input;
  std::size_t n = 256;
  std::size_t stage = 1;
  std::uint64_t seed = 0;
};

struct BenchArgs {
  DataArgs data;
  double tau = 1e-3;
  std::size_t chunk_size = kDefaultChunkSize;
  unsigned workers = 1;
  std::string out, transform = "block";
};

struct ProfileArgs {
  DataArgs data;
  double tau = 1e-3;
  std::vector<std::size_t> chunks = {1, 2, 4, 8, 16};
  std::string out, transform = "block";
};

struct E2eArgs {
  E2eConfig config;
  std::string out;
};

struct SynthArgs {
  std::size_t n = 64;
  std::size_t stage = 1;
  std::uint64_t seed = 0;
  std::string out, labels, flipped;
};

Transform parse_transform(const std::string& name) {
  return name == "none" ? Transform::None : Transform::BlockDecorrelate;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return kExitMissingFile;
    case ErrorKind::Corruption:
    case ErrorKind::Format:
    case ErrorKind::Decode: return kExitCorrupt;
    case ErrorKind::InvalidConfig: return kExitUsage;
    default: return kExitFailure;
  }
}

// Tracks which step of a subcommand is running so failures can name it.
struct Stage {
  std::string name = "start";
  void operator()(std::string s) { name = std::move(s); }
};

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot create " + path);
  return f;
}

// Emits CSV to --out when given, stdout otherwise.
template <typename Fn>
void emit(const std::string& path, std::ostream& out, Fn write) {
  if (path.empty()) {
    write(out);
  } else {
    auto f = open_output(path);
    write(f);
  }
}

std::vector<Tensor> load_or_generate(const DataArgs& d, Stage& stage) {
  if (!d.input.empty()) {
    stage("read input");
    return read_raw_dump(d.input);
  }
  stage("generate features");
  const auto ds = gen_synthetic_dataset(d.seed, d.n);
  const auto net = RefNet::create(derive_seed(d.seed, 3));
  std::vector<Tensor> feats;
  feats.reserve(ds.images.size());
  for (const auto& img : ds.images) feats.push_back(net.forward(img, d.stage));
  return feats;
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--input", d.input, "Raw tensor dump (default: generated refnet features)");
  cmd->add_option("--n", d.n, "Generated sample count (multiple of 4)")->check(CLI::PositiveNumber);
  cmd->add_option("--stage", d.stage, "Refnet stage for generated features")->check(CLI::Range(1, 2));
  cmd->add_option("--seed", d.seed, "Seed for generated data");
}

int cmd_build(const BuildArgs& a, std::ostream& out, Stage& stage) {
  if (a.gamma && a.alpha) throw Error(ErrorKind::InvalidConfig, "--gamma and --alpha are mutually exclusive");
  if (a.gamma && a.flipped.empty()) throw Error(ErrorKind::InvalidConfig, "--gamma needs --flipped <dump>");
  if (a.alpha && a.augmented.empty()) throw Error(ErrorKind::InvalidConfig, "--alpha needs --augmented <dump>");

  stage("read input");
  const auto features = read_raw_dump(a.input);
  stage("read labels");
  const auto labels = read_labels(a.labels);
  if (labels.size() != features.size())
    throw Error(ErrorKind::InvalidConfig, "label count " + std::to_string(labels.size()) + " != sample count " +
                                              std::to_string(features.size()));

  BuildOptions opt;
  opt.chunk_size = a.chunk_size;
  opt.codec = CodecParams{a.tau, parse_transform(a.transform)};
  opt.label_width = static_cast<std::uint8_t>(a.label_width);
  opt.seed = a.seed;
  opt.workers = a.workers;

  std::vector<SampleRecord> records;
  records.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) records.push_back({features[i], labels[i], std::nullopt, {}});

  if (a.gamma) {
    stage("channel selection");
    const auto flipped = read_raw_dump(a.flipped);
    if (flipped.size() != features.size())
      throw Error(ErrorKind::InvalidConfig, "--flipped sample count differs from --input");
    opt.aug.kind = AugKind::Channel;
    opt.aug.channels = select_channels_for_dataset(features, flipped, *a.gamma, a.seed);
    for (std::size_t i = 0; i < records.size(); ++i)
      records[i].aug_stored = gather_channels(flipped[i], opt.aug.channels.indices);
  } else if (a.alpha) {
    stage("token selection");
    const auto augmented = read_raw_dump(a.augmented);
    if (augmented.size() != features.size())
      throw Error(ErrorKind::InvalidConfig, "--augmented sample count differs from --input");
    opt.aug.kind = AugKind::Token;
    opt.aug.alpha = *a.alpha;
    opt.aug.token_count = static_cast<std::uint32_t>(features.front().dim(0));
    opt.aug.tokens_per_sample = static_cast<std::uint32_t>(selection_size(*a.alpha, opt.aug.token_count));
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto sel = build_token_selection(features[i], augmented[i], *a.alpha);
      records[i].aug_stored = std::move(sel.stored);
      records[i].token_matches = std::move(sel.matches);
    }
  }

  stage("write cache");
  const auto h = build_cache(records, opt, a.out);
  out << "wrote " << a.out << ": n=" << h.sample_count << " k=" << h.chunk_size << " chunks=" << h.chunk_count()
      << " tau=" << h.codec.tolerance << " aug=" << to_string(h.aug_kind) << '\n';
  return kExitOk;
}

int cmd_inspect(const std::string& path, std::ostream& out, Stage& stage) {
  stage("open");
  const auto cache = CacheHandle::open(path);
  const auto& h = cache.header();
  out << "file: " << path << '\n'
      << "version: " << h.version << '\n'
      << "n: " << h.sample_count << '\n'
      << "k: " << h.chunk_size << '\n'
      << "tau: " << std::setprecision(9) << h.codec.tolerance << '\n'
      << "transform: " << (h.codec.transform == Transform::None ? "none" : "block") << '\n'
      << "sample_shape: " << shape_to_string(h.sample_shape) << '\n'
      << "chunk_count: " << cache.chunk_count() << '\n'
      << "label_width: " << unsigned(h.label_width) << '\n'
      << "seed: " << h.seed << '\n'
      << "aug: " << to_string(h.aug_kind) << '\n';
  const auto& aug = cache.aug_metadata();
  if (aug.kind == AugKind::Channel) {
    out << "gamma: " << aug.channels.gamma << '\n' << "selected_channels:";
    for (auto c : aug.channels.indices) out << ' ' << c;
    out << '\n';
  } else if (aug.kind == AugKind::Token) {
    out << "alpha: " << aug.alpha << '\n' << "tokens_per_sample: " << aug.tokens_per_sample << '\n';
  }
  out << "file_bytes: " << cache.file_size() << '\n';
  out << "index: ordinal,offset,length,crc32,first,last\n";
  for (const auto& e : cache.index()) {
    out << "  " << e.ordinal << ',' << e.offset << ',' << e.length << ",0x" << std::hex << std::setw(8)
        << std::setfill('0') << e.crc << std::dec << std::setfill(' ') << ',' << e.first_sample << ','
        << e.last_sample << '\n';
  }
  stage("verify");
  cache.verify();
  out << "verify: ok\n";
  return kExitOk;
}

int cmd_bench(const BenchArgs& a, std::ostream& out, Stage& stage) {
  const auto samples = load_or_generate(a.data, stage);
  const CodecParams params{a.tau, parse_transform(a.transform)};
  const std::size_t chunks = (samples.size() + a.chunk_size - 1) / a.chunk_size;
  std::vector<EncodedChunk> encoded(chunks);
  std::vector<double> max_err(chunks, 0.0);

  auto run_pool = [&](auto fn) {
    const unsigned workers = std::max(1u, a.workers);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t c = t; c < chunks; c += workers) fn(c);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  };
  auto part = [&](std::size_t c) {
    const std::size_t first = c * a.chunk_size;
    return std::span<const Tensor>(samples).subspan(first, std::min(a.chunk_size, samples.size() - first));
  };

  using clock = std::chrono::steady_clock;
  stage("encode");
  const auto t0 = clock::now();
  run_pool([&](std::size_t c) { encoded[c] = encode(part(c), params); });
  const auto t1 = clock::now();
  stage("decode");
  run_pool([&](std::size_t c) {
    const auto dec = decode(encoded[c]);
    const auto orig = part(c);
    for (std::size_t i = 0; i < dec.size(); ++i) max_err[c] = std::max(max_err[c], max_abs_diff(orig[i], dec[i]));
  });
  const auto t2 = clock::now();

  std::uint64_t raw = 0, enc = 0;
  for (const auto& e : encoded) {
    raw += e.raw_bytes;
    enc += e.encoded_bytes;
  }
  const double mb = double(raw) / (1024.0 * 1024.0);
  const double enc_s = std::chrono::duration<double>(t1 - t0).count();
  const double dec_s = std::chrono::duration<double>(t2 - t1).count();
  stage("write report");
  emit(a.out, out, [&](std::ostream& o) {
    o << "tau,chunk_size,samples,raw_bytes,encoded_bytes,ratio,max_abs_error,encode_mb_s,decode_mb_s\n"
      << std::setprecision(9) << a.tau << ',' << a.chunk_size << ',' << samples.size() << ',' << raw << ',' << enc
      << ',' << double(enc) / double(raw) << ',' << *std::max_element(max_err.begin(), max_err.end()) << ','
      << mb / std::max(enc_s, 1e-12) << ',' << mb / std::max(dec_s, 1e-12) << '\n';
  });
  return kExitOk;
}

int cmd_profile(const ProfileArgs& a, std::ostream& out, Stage& stage) {
  const auto samples = load_or_generate(a.data, stage);
  stage("profile");
  const auto rows = profile_compressibility(samples, CodecParams{a.tau, parse_transform(a.transform)}, a.chunks);
  stage("write report");
  emit(a.out, out, [&](std::ostream& o) { write_profile_csv(o, rows); });
  return kExitOk;
}

int cmd_e2e(const E2eArgs& a, std::ostream& out, Stage& stage) {
  stage("end-to-end run");
  const auto report = run_end_to_end(a.config);
  stage("write report");
  emit(a.out, out, [&](std::ostream& o) { write_e2e_csv(o, report); });
  if (!a.out.empty()) write_e2e_csv(out, report);
  return kExitOk;
}

int cmd_cost(const std::string& input, const std::string& output, std::ostream& out, Stage& stage) {
  stage("read stages");
  std::ifstream in(input);
  if (!in) throw Error(std::filesystem::exists(input) ? ErrorKind::Io : ErrorKind::NotFound, "cannot open " + input);
  const auto stages = read_stage_csv(in);
  stage("cost totals");
  if (stages.empty()) throw Error(ErrorKind::Format, "stage CSV has no rows");
  stage("write report");
  emit(output, out, [&](std::ostream& o) { write_cost_csv(o, stages); });
  return kExitOk;
}

int cmd_synth(const SynthArgs& a, std::ostream& out, Stage& stage) {
  if (a.n % 4) throw Error(ErrorKind::InvalidConfig, "--n must be a multiple of 4");
  stage("generate");
  const auto ds = gen_synthetic_dataset(a.seed, a.n);
  const auto net = RefNet::create(derive_seed(a.seed, 3));
  std::vector<Tensor> feats, flipped;
  std::vector<std::int64_t> labels(ds.labels.begin(), ds.labels.end());
  for (const auto& img : ds.images) {
    feats.push_back(net.forward(img, a.stage));
    if (!a.flipped.empty()) flipped.push_back(net.forward(flip_h(img), a.stage));
  }
  stage("write dumps");
  write_raw_dump(a.out, feats);
  write_labels(a.labels, labels);
  if (!a.flipped.empty()) write_raw_dump(a.flipped, flipped);
  out << "wrote " << feats.size() << " samples of shape " << shape_to_string(feats.front().shape()) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compressed activation cache toolkit", "fcache"};
  app.require_subcommand(1);
  app.allow_extras(false);

  BuildArgs build;
  auto* c_build = app.add_subcommand("build", "Raw tensor dump + labels -> cache file");
  c_build->add_option("--input", build.input, "Raw tensor dump")->required();
  c_build->add_option("--labels", build.labels, "Label file, one integer per line")->required();
  c_build->add_option("--out", build.out, "Output cache path")->required();
  c_build->add_option("--tau", build.tau, "Absolute error tolerance")->check(CLI::NonNegativeNumber);
  c_build->add_option("--chunk-size", build.chunk_size, "Samples per chunk")->check(CLI::PositiveNumber);
  c_build->add_option("--gamma", build.gamma, "Fraction of channels to store")->check(CLI::Range(0.0, 1.0));
  c_build->add_option("--flipped", build.flipped, "Dump of flipped-input features (with --gamma)");
  c_build->add_option("--alpha", build.alpha, "Fraction of tokens to store")->check(CLI::Range(0.0, 1.0));
  c_build->add_option("--augmented", build.augmented, "Dump of augmented-input tokens (with --alpha)");
  c_build->add_option("--seed", build.seed, "Dataset seed");
  c_build->add_option("--workers", build.workers, "Encoding threads")->check(CLI::PositiveNumber);
  c_build->add_option("--label-width", build.label_width, "Label bytes")->check(CLI::IsMember({1, 2, 4, 8}));
  c_build->add_option("--transform", build.transform, "Codec transform")->check(CLI::IsMember({"none", "block"}));

  std::string inspect_path;
  auto* c_inspect = app.add_subcommand("inspect", "Print header and index, verify CRCs");
  c_inspect->add_option("path", inspect_path, "Cache file")->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Codec ratio and throughput");
  add_data_options(c_bench, bench.data);
  c_bench->add_option("--tau", bench.tau)->check(CLI::NonNegativeNumber);
  c_bench->add_option("--chunk-size", bench.chunk_size)->check(CLI::PositiveNumber);
  c_bench->add_option("--workers", bench.workers)->check(CLI::PositiveNumber);
  c_bench->add_option("--out", bench.out, "CSV output path (default stdout)");
  c_bench->add_option("--transform", bench.transform)->check(CLI::IsMember({"none", "block"}));

  ProfileArgs profile;
  auto* c_profile = app.add_subcommand("profile", "Compression ratio/time per chunk size (CSV)");
  add_data_options(c_profile, profile.data);
  c_profile->add_option("--tau", profile.tau)->check(CLI::NonNegativeNumber);
  c_profile->add_option("--chunks", profile.chunks, "Comma-separated chunk sizes")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  c_profile->add_option("--out", profile.out, "CSV output path (default stdout)");
  c_profile->add_option("--transform", profile.transform)->check(CLI::IsMember({"none", "block"}));

  E2eArgs e2e;
  auto* c_e2e = app.add_subcommand("e2e", "Synthetic data -> refnet -> cache -> probe accuracy report");
  c_e2e->add_option("--tau", e2e.config.tolerance)->check(CLI::NonNegativeNumber);
  c_e2e->add_option("--gamma", e2e.config.gamma)->check(CLI::Range(0.0, 1.0));
  c_e2e->add_option("--seed", e2e.config.seed);
  c_e2e->add_option("--n", e2e.config.train_samples, "Training samples (multiple of 4)")->check(CLI::PositiveNumber);
  c_e2e->add_option("--test-n", e2e.config.test_samples, "Test samples (multiple of 4)")->check(CLI::PositiveNumber);
  c_e2e->add_option("--stage", e2e.config.stage)->check(CLI::Range(1, 2));
  c_e2e->add_option("--chunk-size", e2e.config.chunk_size)->check(CLI::PositiveNumber);
  c_e2e->add_option("--epochs", e2e.config.train.epochs)->check(CLI::PositiveNumber);
  c_e2e->add_option("--lr", e2e.config.train.learning_rate)->check(CLI::PositiveNumber);
  c_e2e->add_option("--workers", e2e.config.workers)->check(CLI::PositiveNumber);
  c_e2e->add_option("--out", e2e.out, "CSV output path");

  std::string cost_input, cost_out;
  auto* c_cost = app.add_subcommand("cost-report", "Stage CSV -> FLOPs/memory totals");
  c_cost->add_option("--input", cost_input, "Stage CSV")->required();
  c_cost->add_option("--out", cost_out, "CSV output path (default stdout)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write refnet features of synthetic images as a raw dump");
  c_synth->add_option("--n", synth.n)->check(CLI::PositiveNumber);
  c_synth->add_option("--stage", synth.stage)->check(CLI::Range(1, 2));
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--out", synth.out, "Feature dump path")->required();
  c_synth->add_option("--labels", synth.labels, "Label file path")->required();
  c_synth->add_option("--flipped", synth.flipped, "Also write flipped-input features here");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Stage stage;
  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == c_build) return cmd_build(build, out, stage);
    if (active == c_inspect) return cmd_inspect(inspect_path, out, stage);
    if (active == c_bench) return cmd_bench(bench, out, stage);
    if (active == c_profile) return cmd_profile(profile, out, stage);
    if (active == c_e2e) return cmd_e2e(e2e, out, stage);
    if (active == c_cost) return cmd_cost(cost_input, cost_out, out, stage);
    if (active == c_synth) return cmd_synth(synth, out, stage);
  } catch (const Error& e) {
    err << "fcache " << active->get_name() << ": " << stage.name << ": " << to_string(e.kind()) << ": " << e.what()
        << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "fcache " << active->get_name() << ": " << stage.name << ": " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace fcache::cli
