#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdfnet/commands.hpp"
#include "cdfnet/render.hpp"

using namespace cdfnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& name) : path(fs::temp_directory_path() / ("cdfnet_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() { fs::remove_all(path); }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "cdfnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int binary(const std::string& args) {
  const std::string cmd = std::string(CDFNET_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("config files reject unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(apply_config(RunConfig{}, json::parse(R"({"train": {"learnig_rate": 0.1}})")),
                       "unknown config key 'train.learnig_rate'", ConfigError);
  CHECK_THROWS_AS(apply_config(RunConfig{}, json::parse(R"({"optimizer": {}})")), ConfigError);
  CHECK_THROWS_AS(apply_config(RunConfig{}, json::parse(R"({"train": {"stage": 3}})")), ConfigError);
  CHECK_THROWS_AS(apply_config(RunConfig{}, json::parse(R"({"train": {"epochs": "ten"}})")), ConfigError);
  CHECK_THROWS_AS(apply_config(RunConfig{}, json::parse(R"({"cutmix": {"probability": 2}})")), ConfigError);
  CHECK_THROWS_AS(apply_config(RunConfig{}, json::parse(R"({"cutmix": {"box_fraction_range": [0.5]}})")), ConfigError);
  CHECK_THROWS_AS(apply_config(RunConfig{}, json::parse(R"({"synth": {"damage_distribution": [1, 1, 0, 0]}})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_preset("laptop"), ConfigError);
}

TEST_CASE("presets resolve to the published schedules") {
  RunConfig c = apply_config(RunConfig{}, json::parse(R"({"train": {"preset": "paper", "stage": 1}})"));
  auto t = c.resolved_train();
  CHECK(t.learning_rate == 0.00015);
  CHECK(t.epochs == 120);
  CHECK(t.crop_size == 512);
  CHECK_FALSE(t.cutmix.has_value());

  c = apply_config(c, json::parse(R"({"train": {"stage": 2}, "paths": {"stage1_checkpoint": "s1/model.ckpt"}})"));
  t = c.resolved_train();
  CHECK(t.learning_rate == 0.0002);
  CHECK(t.epochs == 20);
  CHECK(t.crop_size == 512);
  REQUIRE(t.cutmix.has_value());
  CHECK(t.cutmix->target_classes == std::set<std::uint8_t>{2, 3});
  CHECK(t.stage1_checkpoint == "s1/model.ckpt");

  c = apply_config(RunConfig{}, json::parse(R"({"train": {"stage": 2, "epochs": 3}, "cutmix": {"enabled": false}})"));
  t = c.resolved_train();
  CHECK(t.epochs == 3);
  CHECK(t.learning_rate == 0.0002);
  CHECK(t.crop_size == 64);
  CHECK_FALSE(t.cutmix.has_value());
}

TEST_CASE("config documents round trip") {
  RunConfig c = apply_config(RunConfig{}, json::parse(R"({
    "model": {"depth": 2, "base_channels": 8},
    "train": {"stage": 2, "learning_rate": 0.001, "seed": 9, "flip": false},
    "cutmix": {"probability": 0.75, "box_fraction_range": [0.1, 0.3], "target_classes": [2]},
    "synth": {"num_pairs": 12, "image_size": 32}
  })"));
  const auto again = apply_config(RunConfig{}, to_json(c));
  CHECK(to_json(again) == to_json(c));
  CHECK(again.cutmix.box_fraction_hi == 0.3);
  CHECK(again.resolved_train().basic_aug.flip == false);
}

TEST_CASE("exit codes of the executable") {
  Scratch dir("exit");
  CHECK(binary("--help") == cli::kExitOk);
  CHECK(binary("") == cli::kExitConfigError);
  CHECK(binary("train --bogus") == cli::kExitConfigError);
  CHECK(binary("train --stage 2 --data x --out " + (dir / "run")) == cli::kExitConfigError);
  write_text(dir.path / "bad.json", R"({"train": {"lr": 1}})");
  CHECK(binary("synth --config " + (dir / "bad.json") + " --out " + (dir / "d")) == cli::kExitConfigError);
  CHECK(binary("score --truth " + (dir / "none") + " --pred " + (dir / "none")) == cli::kExitRuntimeError);
}

TEST_CASE("synth is deterministic and its manifest adds up") {
  Scratch dir("synth");
  for (const char* name : {"a", "b"})
    REQUIRE(binary("synth --pairs 8 --size 32 --seed 4 --out " + (dir / name)) == cli::kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(dir.path / "b" / fs::relative(e.path(), dir.path / "a")));
  }
  CHECK(files == 8 * 3 + 1);
  const auto m = read_json(dir.path / "a" / "manifest.json");
  const auto counts = m.at("class_pixel_counts").get<std::vector<std::int64_t>>();
  std::int64_t total = 0;
  for (auto v : counts) total += v;
  CHECK(total == 8 * 32 * 32);
  CHECK(counts[1] > counts[2] + counts[3] + counts[4]);
}

TEST_CASE("scoring the truth against itself is perfect") {
  Scratch dir("score");
  REQUIRE(invoke({"synth", "--pairs", "4", "--size", "32", "--seed", "2", "--out", dir / "data"}).code == 0);
  fs::create_directories(dir.path / "pred");
  for (const auto& [id, path] : cli::index_masks(dir.path / "data"))
    fs::copy_file(path, dir.path / "pred" / (id + "_prediction.png"));
  const auto r = invoke({"score", "--truth", dir / "data", "--pred", dir / "pred", "--json", dir / "s.json", "--per-image"});
  REQUIRE(r.code == 0);
  const auto j = read_json(dir.path / "s.json");
  CHECK(j.at("f1_overall").get<double>() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(j.at("per_image").size() == 4);
  CHECK(r.out.find("1.000") != std::string::npos);

  fs::remove(fs::directory_iterator(dir.path / "pred")->path());
  const auto missing = invoke({"score", "--truth", dir / "data", "--pred", dir / "pred"});
  CHECK(missing.code == cli::kExitRuntimeError);
  CHECK(missing.err.find("no prediction for") != std::string::npos);
}

TEST_CASE("fixture scoring reproduces the published rows") {
  Scratch dir("fixture");
  const std::string fixtures = CDFNET_FIXTURES;
  for (const auto& [file, overall, damage] :
       {std::tuple{"table4_ours.json", 0.804, 0.778}, std::tuple{"table4_baseline.json", 0.789, 0.757}}) {
    const auto r = invoke({"score", "--f1-fixture", fixtures + "/" + file, "--json", dir / "f.json"});
    REQUIRE(r.code == 0);
    const auto j = read_json(dir.path / "f.json");
    CHECK(std::abs(j.at("f1_overall").get<double>() - overall) <= 5e-4);
    CHECK(std::abs(j.at("f1_damage").get<double>() - damage) <= 1e-3);
  }
}

TEST_CASE("render paints palette panels and a legend") {
  Scratch dir("render");
  write_png(dir.path / "m.png", mask_to_image(DamageMask(16, 16, 4)));
  const auto r = invoke({"render", "--mask", dir / "m.png", "--out", dir / "r.png"});
  REQUIRE(r.code == 0);
  const auto canvas = read_png(dir.path / "r.png");
  const auto layout = render_masks(std::vector<DamageMask>{DamageMask(16, 16, 4)});
  CHECK(canvas == layout.canvas);
  REQUIRE(layout.panels.size() == 1);
  REQUIRE(layout.swatches.size() == 5);
  const auto panel = crop(canvas, layout.panels[0]);
  for (std::size_t i = 0; i < panel.pixels.size(); i += 3) {
    CHECK(panel.pixels[i] == 0xE0);
    CHECK(panel.pixels[i + 1] == 0x00);
    CHECK(panel.pixels[i + 2] == 0x00);
  }
  for (std::size_t k = 0; k < 5; ++k) {
    const auto sw = decode_colors(crop(canvas, layout.swatches[k]));
    for (auto v : sw.labels) CHECK(v == k);
  }
  DamageMask bad(4, 4, 0);
  bad.labels[3] = 7;
  CHECK_THROWS_AS(colorize_mask(bad), RenderError);
}

TEST_CASE("rendered masks decode back exactly") {
  Rng rng(8);
  std::vector<DamageMask> masks;
  for (int i = 0; i < 6; ++i) {
    DamageMask m(12, 12);
    for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.below(5));
    masks.push_back(m);
  }
  const auto layout = render_masks(masks);
  for (std::size_t i = 0; i < masks.size(); ++i) CHECK(decode_colors(crop(layout.canvas, layout.panels[i])) == masks[i]);
}

TEST_CASE("augment preview keeps planes aligned and passes donor-free data through") {
  Scratch dir("preview");
  SynthConfig cfg;
  cfg.num_pairs = 6;
  cfg.image_size = 32;
  cfg.max_building_side = 12;
  cfg.seed = 3;
  cfg.damage_distribution = {0.4, 0.3, 0.3, 0.0};
  const auto samples = generate_synthetic(cfg);
  const auto rows = augment_preview_rows(samples, CutMixPolicy{}, 5, 17);
  REQUIRE(rows.size() == 5);
  int mixed = 0;
  for (const auto& row : rows) {
    if (!row.box) {
      CHECK(same_pixels(row.original, row.mixed));
      continue;
    }
    ++mixed;
    for (std::int64_t r = 0; r < 32; ++r)
      for (std::int64_t c = 0; c < 32; ++c) {
        if (row.box->contains(r, c)) continue;
        CHECK(row.mixed.mask.at(r, c) == row.original.mask.at(r, c));
        for (std::int64_t ch = 0; ch < 3; ++ch) {
          CHECK(row.mixed.pre.at(ch, r, c) == row.original.pre.at(ch, r, c));
          CHECK(row.mixed.post.at(ch, r, c) == row.original.post.at(ch, r, c));
        }
      }
  }
  CHECK(mixed > 0);

  cfg.damage_distribution = {1.0, 0.0, 0.0, 0.0};
  write_dataset(generate_synthetic(cfg), dir.path / "plain");
  const auto r = invoke({"augment-preview", "--data", dir / "plain", "--n", "3", "--out", dir / "p.png"});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("no donor") != std::string::npos);
  CHECK(r.out.find("(0 mixed)") != std::string::npos);
  CHECK(fs::exists(dir.path / "p.png"));
}

TEST_CASE("train, predict and score end to end") {
  Scratch dir("e2e");
  REQUIRE(invoke({"synth", "--pairs", "6", "--size", "32", "--seed", "1", "--out", dir / "data"}).code == 0);
  const std::vector<std::string> small{"--epochs", "1", "--crop", "32", "--depth", "2", "--base-channels", "4"};
  auto args = std::vector<std::string>{"train", "--stage", "1", "--data", dir / "data", "--out", dir / "s1"};
  args.insert(args.end(), small.begin(), small.end());
  auto r = invoke(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(read_json(dir.path / "s1" / "model.json").at("stage") == 1);

  r = invoke({"train", "--stage", "2", "--data", dir / "data", "--out", dir / "s2", "--from-stage1", dir / "s1",
           "--epochs", "1", "--crop", "32"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto sidecar = read_json(dir.path / "s2" / "model.json");
  CHECK(sidecar.at("model").at("base_channels") == 4);
  CHECK(sidecar.at("transfer").at("fresh").size() == 2 + 4 * 3);
  CHECK(cli::load_model(dir.path / "s2").stage() == Stage::Damage);

  r = invoke({"train", "--stage", "2", "--data", dir / "data", "--out", dir / "bad", "--from-stage1", dir / "s2"});
  CHECK(r.code == cli::kExitConfigError);

  r = invoke({"predict", "--checkpoint", dir / "s2", "--data", dir / "data", "--out", dir / "pred", "--color"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir.path / "pred" / "synth_00000_prediction_color.png"));
  r = invoke({"score", "--truth", dir / "data", "--pred", dir / "pred"});
  CHECK(r.code == 0);
  CHECK(r.out.find("F1") != std::string::npos);
}
