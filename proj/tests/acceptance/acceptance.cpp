// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "cdfnet/commands.hpp"
#include "cdfnet/render.hpp"
#include "cdfnet/train.hpp"
#include "fusion_oracle.hpp"
#include "gradcheck.hpp"
#include "metrics_oracle.hpp"

using namespace cdfnet;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---- 1: metric arithmetic --------------------------------------------------

Verdict metric_arithmetic(const fs::path& fixtures) {
  Verdict v;
  std::ostringstream d;
  for (const auto& [file, overall, damage] :
       {std::tuple{"table4_ours.json", 0.804, 0.778}, std::tuple{"table4_baseline.json", 0.789, 0.757}}) {
    std::ifstream f(fixtures / file);
    const auto j = nlohmann::json::parse(f);
    const double b = j.at("f1_building").get<double>();
    const double hm = harmonic_mean(j.at("f1_per_class").get<std::vector<double>>());
    const double s = overall_score(b, damage);
    v.pass = v.pass && std::abs(s - overall) <= 5e-4 && std::abs(hm - damage) <= 1e-3;
    d << (d.tellp() > 0 ? "; " : "") << file << ": overall " << fmt("%.4f", s) << ", F1_d " << fmt("%.4f", hm);
  }
  v.detail = d.str();
  return v;
}

// ---- 2: metric oracle ------------------------------------------------------

Verdict metric_oracle() {
  Rng rng(2024);
  std::vector<std::uint8_t> all_t, all_p;
  ConfusionMatrix pooled;
  int mismatches = 0;
  auto same = [](const MetricsReport& r, const testing::OracleScores& o) {
    if (r.f1_building != o.f1_building || r.f1_damage != o.f1_damage || r.f1_overall != o.f1_overall) return false;
    for (int k = 0; k < 4; ++k)
      if (r.f1_per_class[static_cast<std::size_t>(k)] != o.per_class[static_cast<std::size_t>(k)]) return false;
    return true;
  };
  for (int i = 0; i < 1000; ++i) {
    DamageMask t(16, 16), p(16, 16);
    const double agree = rng.uniform(0.0, 1.0);
    const double ignore = i % 4 == 0 ? 0.05 : 0.0;
    // Some pairs leave damage classes out entirely so the drop rule is exercised.
    const std::uint64_t classes = 2 + rng.below(4);
    for (std::size_t k = 0; k < t.labels.size(); ++k) {
      t.labels[k] = rng.bernoulli(ignore) ? kIgnoreLabel : static_cast<std::uint8_t>(rng.below(classes));
      p.labels[k] = rng.bernoulli(agree) && t.labels[k] != kIgnoreLabel ? t.labels[k]
                                                                         : static_cast<std::uint8_t>(rng.below(5));
    }
    ConfusionMatrix cm;
    cm.accumulate(t, p);
    pooled.accumulate(t, p);
    mismatches += !same(make_report(cm), testing::oracle_scores(t.labels, p.labels));
    all_t.insert(all_t.end(), t.labels.begin(), t.labels.end());
    all_p.insert(all_p.end(), p.labels.begin(), p.labels.end());
  }
  const bool pooled_ok = same(make_report(pooled), testing::oracle_scores(all_t, all_p));
  return {mismatches == 0 && pooled_ok,
          std::to_string(mismatches) + " of 1000 pairs differ; pooled " + (pooled_ok ? "equal" : "differs")};
}

// ---- 3: fusion correctness -------------------------------------------------

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
FusionParams<T> random_params(std::int64_t c, Rng& rng) {
  return FusionParams<T>{random_tensor<T>({c, 2 * c}, rng), random_tensor<T>({c}, rng),
                         random_tensor<T>({1, 2 * c, 1, 1}, rng), random_tensor<T>({1}, rng)};
}

Verdict fusion_correctness() {
  Rng rng(3);
  double worst_value = 0.0, worst_grad = 0.0;
  auto as_double = [](const auto& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  for (int i = 0; i < 100; ++i) {
    const auto C = rng.between(1, 4), H = rng.between(1, 4), W = rng.between(1, 4);
    auto pre = random_tensor<float>({C, H, W}, rng), post = random_tensor<float>({C, H, W}, rng);
    auto params = random_params<float>(C, rng);
    Tape<float> tape(false);
    const auto io = cdf_block(tape, pre, post, params);
    const auto o = testing::oracle_fusion(static_cast<int>(C), static_cast<int>(H), static_cast<int>(W),
                                          as_double(pre), as_double(post), as_double(params.reduce_weight),
                                          as_double(params.reduce_bias), as_double(params.spatial_weight),
                                          params.spatial_bias.data()[0]);
    for (std::size_t k = 0; k < o.pre_spa.size(); ++k) {
      worst_value = std::max(worst_value, std::abs(io.u_pre_spa.data()[k] - o.pre_spa[k]));
      worst_value = std::max(worst_value, std::abs(io.u_post_spa.data()[k] - o.post_spa[k]));
    }

    auto dpre = random_tensor<double>({C, H, W}, rng), dpost = random_tensor<double>({C, H, W}, rng);
    auto dparams = random_params<double>(C, rng);
    auto cp = random_tensor<double>({C, H, W}, rng), cq = random_tensor<double>({C, H, W}, rng);
    std::vector<Tensor<double>> inputs{dpre, dpost};
    for (const auto& t : dparams.tensors()) inputs.push_back(t);
    const auto g = testing::gradcheck(inputs, [&](Tape<double>& t) {
      const auto out = cdf_block(t, dpre, dpost, dparams);
      return add(t, sum(t, multiply(t, out.u_pre_spa, cp)), sum(t, multiply(t, out.u_post_spa, cq)));
    });
    worst_grad = std::max(worst_grad, g.max_relative_error);
  }
  return {worst_value < 1e-6 && worst_grad < 1e-4,
          "max |out - oracle| " + fmt("%.2e", worst_value) + ", max gradient rel. error " + fmt("%.2e", worst_grad)};
}

// ---- 4: CutMix law ---------------------------------------------------------

Verdict cutmix_law() {
  Rng gen(4);
  int sync_fail = 0, purity_fail = 0, passthrough_fail = 0, hard_fail = 0, boxes = 0, rejected = 0;
  for (int trial = 0; boxes < 1000 && trial < 100000; ++trial) {
    const std::int64_t n = 8 + 4 * static_cast<std::int64_t>(gen.below(5));
    // Every pixel value is unique per sample and plane, so each output value names its source.
    auto make = [&](const std::string& id, float base) {
      SamplePair s{id, Tensor<float>::zeros({3, n, n}), Tensor<float>::zeros({3, n, n}), DamageMask(n, n)};
      for (std::size_t k = 0; k < s.pre.numel(); ++k) {
        s.pre.data()[k] = base + static_cast<float>(k);
        s.post.data()[k] = base + 10000.0f + static_cast<float>(k);
      }
      for (auto& l : s.mask.labels) l = static_cast<std::uint8_t>(gen.below(5));
      return s;
    };
    const auto recipient = make("r", 0.0f), donor = make("d", 50000.0f);
    CutMixPolicy policy;
    policy.box_fraction_lo = gen.uniform(0.1, 0.5);
    policy.box_fraction_hi = gen.uniform(policy.box_fraction_lo, 0.9);
    policy.min_hard_fraction = gen.uniform(0.0, 0.6);
    policy.target_classes = gen.bernoulli(0.5) ? std::set<std::uint8_t>{2, 3} : std::set<std::uint8_t>{2};
    Rng rng(static_cast<std::uint64_t>(trial));
    const auto m = sample_box(donor.mask, policy, rng);
    if (!m) {
      ++rejected;
      continue;
    }
    ++boxes;
    for (auto k : m->keep) purity_fail += k > 1;
    const auto& b = *m->box;
    std::int64_t hard = 0;
    for (std::int64_t r = b.top; r < b.top + b.height; ++r)
      for (std::int64_t c = b.left; c < b.left + b.width; ++c) hard += policy.is_target(donor.mask.at(r, c));
    hard_fail += static_cast<double>(hard) / static_cast<double>(b.area()) < policy.min_hard_fraction;

    const auto out = apply_cutmix(recipient, donor, *m);
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t c = 0; c < n; ++c) {
        const bool keep = m->at(r, c) == 1;
        const auto& src = keep ? recipient : donor;
        bool ok = out.mask.at(r, c) == src.mask.at(r, c);
        for (std::int64_t ch = 0; ch < 3; ++ch)
          ok = ok && out.pre.at(ch, r, c) == src.pre.at(ch, r, c) && out.post.at(ch, r, c) == src.post.at(ch, r, c);
        sync_fail += !ok;
      }

    policy.probability = 0.0;
    const std::vector<SamplePair> batch{recipient};
    const auto passed = augment_batch(batch, std::vector<SamplePair>{donor}, policy, static_cast<std::uint64_t>(trial));
    passthrough_fail += !same_pixels(passed[0], recipient);
  }
  return {boxes == 1000 && sync_fail == 0 && purity_fail == 0 && passthrough_fail == 0 && hard_fail == 0,
          std::to_string(boxes) + " mixes (" + std::to_string(rejected) + " donors without a qualifying box); desynchronised pixels " + std::to_string(sync_fail) + ", impure mask values " +
              std::to_string(purity_fail) + ", pass-through failures " + std::to_string(passthrough_fail) +
              ", boxes under the hard minimum " + std::to_string(hard_fail)};
}

// ---- 5: pipeline integrity -------------------------------------------------

Verdict pipeline_integrity() {
  SynthConfig sc;
  sc.num_pairs = 1;
  sc.seed = 5;
  sc.damage_distribution = {0.25, 0.25, 0.25, 0.25};
  const auto probe = generate_synthetic(sc)[0];
  const UNetConfig cfg;
  UNetModel s1(cfg, Stage::Building, 51);
  UNetModel s2(cfg, Stage::Damage, 52);
  transfer_stage1_weights(s1.state(), s2);

  Tape<float> plain(false);
  const auto a = s1.encode(plain, probe.pre), b = s2.encode(plain, probe.pre);
  auto equal = [](const Tensor<float>& x, const Tensor<float>& y) {
    return x.shape() == y.shape() && std::memcmp(x.data().data(), y.data().data(), x.numel() * sizeof(float)) == 0;
  };
  bool features = equal(a.bottleneck, b.bottleneck);
  for (std::size_t l = 0; l < a.skips.size(); ++l) features = features && equal(a.skips[l], b.skips[l]);

  const bool audit = s2.backbone_parameter_count() == s1.backbone_parameter_count() &&
                     s2.parameter_count() == s1.backbone_parameter_count() + s2.head_parameter_count() +
                                                 s2.fusion_parameter_count();

  Tape<float> tape;
  const auto loss = softmax_cross_entropy(tape, s2.forward(tape, probe.pre, probe.post), probe.mask.labels);
  tape.backward(loss);
  int cdf = 0, zero = 0;
  for (const auto& [name, t] : s2.params().entries()) {
    if (name.rfind("cdf", 0) != 0) continue;
    ++cdf;
    double norm = 0.0;
    for (float g : t.grad()) norm += static_cast<double>(g) * g;
    zero += !(norm > 0.0);
  }
  return {features && audit && zero == 0 && cdf > 0,
          std::string("encoder features ") + (features ? "bit-identical" : "differ") + "; parameters " +
              std::to_string(s2.parameter_count()) + " = " + std::to_string(s1.backbone_parameter_count()) + " + " +
              std::to_string(s2.head_parameter_count()) + " + " + std::to_string(s2.fusion_parameter_count()) + "; " +
              std::to_string(cdf - zero) + " of " + std::to_string(cdf) + " fusion tensors have gradient"};
}

// ---- 6 and 7: learning signal and determinism ------------------------------

// Desk-scale experiment: a narrow backbone keeps six stage-2 runs within the budget.
constexpr int kBaseChannels = 8;
constexpr double kStage1Lr = 1e-3;
constexpr int kStage1Epochs = 10;
constexpr double kStage2Lr = 1e-3;
constexpr int kStage2Epochs = 40;
constexpr int kStage2Batch = 2;
constexpr std::uint64_t kDataSeed = 11;
constexpr std::uint64_t kStage1Seed = 1;
constexpr std::array<std::uint64_t, 3> kStage2Seeds{101, 202, 303};

struct Experiment {
  Split data;
  std::unique_ptr<UNetModel> stage1;
  TrainConfig stage1_config;
  TrainResult stage1_result;
};

Split learning_data() {
  SynthConfig sc;
  sc.num_pairs = 200;
  sc.image_size = 64;
  sc.seed = kDataSeed;
  return split_dataset(generate_synthetic(sc), 0.2);
}

UNetConfig learning_model() {
  UNetConfig c;
  c.base_channels = kBaseChannels;
  return c;
}

TrainConfig stage1_config() {
  auto t = TrainConfig::desk(Stage::Building);
  t.learning_rate = kStage1Lr;
  t.epochs = kStage1Epochs;
  t.seed = kStage1Seed;
  t.eval_every = kStage1Epochs;
  return t;
}

std::unique_ptr<UNetModel> run_stage1(const Split& data, TrainResult& result) {
  auto model = std::make_unique<UNetModel>(learning_model(), Stage::Building, kStage1Seed);
  result = train(*model, data.train, data.val, stage1_config());
  return model;
}

std::optional<double> minor_f1(const Experiment& e, std::uint64_t seed, bool cutmix, std::ostream& log) {
  UNetModel model(learning_model(), Stage::Damage, seed);
  transfer_stage1_weights(e.stage1->state(), model);
  auto t = TrainConfig::desk(Stage::Damage);
  t.learning_rate = kStage2Lr;
  t.epochs = kStage2Epochs;
  t.batch_size = kStage2Batch;
  t.seed = seed;
  t.eval_every = 0;
  t.stage1_checkpoint = "stage-1 model in memory";
  if (cutmix) t.cutmix->seed = seed;
  else t.cutmix.reset();
  train(model, e.data.train, {}, t);
  const auto report = evaluate(model, e.data.val, TilingOptions{64, 0});
  log << "    seed " << seed << (cutmix ? " with CutMix   " : " without CutMix") << "  F1_d "
      << fmt("%.3f", report.f1_damage) << "  per class";
  for (const auto& f : report.f1_per_class) log << ' ' << (f ? fmt("%.3f", *f) : std::string("-"));
  log << '\n';
  return report.f1_per_class[1];
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Verdict learning_signal(Experiment& e, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  e.data = learning_data();
  e.stage1_config = stage1_config();
  e.stage1 = run_stage1(e.data, e.stage1_result);
  const double f1b = e.stage1_result.history.back().metrics->f1_building;
  log << "    stage 1 held-out F1_b " << fmt("%.3f", f1b) << '\n';

  std::vector<double> with, without;
  bool defined = true;
  for (auto seed : kStage2Seeds) {
    const auto a = minor_f1(e, seed, true, log);
    const auto b = minor_f1(e, seed, false, log);
    defined = defined && a && b;
    with.push_back(a.value_or(0.0));
    without.push_back(b.value_or(0.0));
  }
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  const double m_with = median3(with), m_without = median3(without);
  return {f1b >= 0.85 && defined && m_with > m_without && minutes <= 15.0,
          "(a) F1_b " + fmt("%.3f", f1b) + " (>= 0.85); (b) median minor F1 " + fmt("%.3f", m_with) +
              " with CutMix vs " + fmt("%.3f", m_without) + " without; " + fmt("%.1f", minutes) + " min (<= 15)"};
}

Verdict determinism(const Experiment& e, const fs::path& work) {
  if (!e.stage1) return {false, "criterion 6 did not run"};
  TrainResult again;
  const auto repeat = run_stage1(e.data, again);
  write_training_artifacts(work / "run_a", *e.stage1, e.stage1_config, e.stage1_result);
  write_training_artifacts(work / "run_b", *repeat, e.stage1_config, again);
  std::string differing;
  for (const char* f : {"model.ckpt", "train_log.jsonl", "model.json"})
    if (slurp(work / "run_a" / f) != slurp(work / "run_b" / f)) differing += std::string(" ") + f;
  const auto bytes = fs::file_size(work / "run_a" / "model.ckpt");
  return {differing.empty(), differing.empty() ? "checkpoint (" + std::to_string(bytes) +
                                                     " bytes), log and sidecar byte-identical"
                                               : "differing:" + differing};
}

// ---- 8: render round trip --------------------------------------------------

Verdict render_round_trip(const fs::path& work) {
  SynthConfig sc;
  sc.num_pairs = 50;
  sc.image_size = 32;
  sc.max_building_side = 12;
  sc.damage_distribution = {0.25, 0.25, 0.25, 0.25};
  sc.seed = 8;
  int recovered = 0;
  std::string failure;
  for (const auto& s : generate_synthetic(sc)) {
    const auto mask_path = work / (s.id + "_mask.png"), out_path = work / (s.id + "_render.png");
    write_png(mask_path, mask_to_image(s.mask));
    const std::string mp = mask_path.string(), op = out_path.string();
    const char* argv[] = {"cdfnet", "render", "--mask", mp.c_str(), "--out", op.c_str()};
    std::ostringstream out, err;
    if (cli::run(6, argv, out, err) != cli::kExitOk) {
      failure = err.str();
      continue;
    }
    const auto layout = render_masks(std::vector<DamageMask>{s.mask});
    recovered += decode_colors(crop(read_png(out_path), layout.panels.at(0))) == s.mask;
  }
  return {recovered == 50, std::to_string(recovered) + " of 50 masks recovered" + (failure.empty() ? "" : "; " + failure)};
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Runs the acceptance criteria and prints one PASS/FAIL line each", "acceptance"};
  std::set<int> only;
  std::string work = (fs::temp_directory_path() / "cdfnet_acceptance").string();
  std::string fixtures = CDFNET_FIXTURES;
  app.add_option("--only", only, "Run only these criteria (1-8)");
  app.add_option("--workdir", work, "Scratch directory");
  app.add_option("--fixtures", fixtures, "Directory with the Table-4 fixtures");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  Experiment experiment;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"metric arithmetic", [&] { return metric_arithmetic(fixtures); }},
      {"metric oracle equivalence", [] { return metric_oracle(); }},
      {"fusion correctness", [] { return fusion_correctness(); }},
      {"CutMix law", [] { return cutmix_law(); }},
      {"pipeline integrity", [] { return pipeline_integrity(); }},
      {"end-to-end learning signal", [&] { return learning_signal(experiment, std::cout); }},
      {"determinism", [&] { return determinism(experiment, work); }},
      {"render round trip", [&] { return render_round_trip(work); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id) && !(id == 6 && only.count(7))) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!only.empty() && !only.count(id)) continue;
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << v.detail << " ["
              << fmt("%.1f", secs) << " s]" << std::endl;
  }
  fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
