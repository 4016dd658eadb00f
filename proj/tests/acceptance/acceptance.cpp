/* Copyright 2026 The quakenet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "archive_oracle.hpp"
#include "conv_oracle.hpp"
#include "gradcheck.hpp"
#include "quakenet/quakenet.hpp"
#include "test_util.hpp"
#include "vgg_table.hpp"

namespace quakenet {
namespace {

// Seed for the scaled experiment and the chance-level check.
constexpr std::uint64_t kExperimentSeed = 2026;
constexpr std::size_t kExperimentEpochs = 30;
constexpr std::size_t kTrainPerClass = 40;
constexpr std::size_t kValPerClass = 8;
constexpr std::size_t kChancePerClass = 50;

int g_failures = 0;

void report(bool pass, const char* name, const std::string& detail, double seconds) {
  if (!pass) ++g_failures;
  std::printf("%s %-22s %s (%.1fs)\n", pass ? "PASS" : "FAIL", name, detail.c_str(), seconds);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void check_shape_table() {
  Stopwatch sw;
  const Network<float> net = build_vgg16_damage(1, 224);
  std::mt19937_64 rng(1);
  const TensorF x = test::random_tensor<float>({2, 3, 224, 224}, rng, -120, 120);
  const auto trace = forward(net, x, Mode::kInference);
  const auto mismatches = test::compare_with_table(net, trace);
  std::size_t flatten = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (net.layers()[i].name == "flatten") flatten = trace.output_shapes[i][1];
  }
  std::string detail = fmt("%zu rows checked at [2,3,224,224], flatten %zu, output %s",
                           test::vgg16_table().size(), flatten,
                           shape_to_string(trace.probabilities().shape()).c_str());
  if (!mismatches.empty()) {
    detail = fmt("%zu mismatches, first at %s", mismatches.size(), mismatches[0].layer.c_str());
  }
  report(mismatches.empty(), "shape_table", detail, sw.seconds());
}

void check_gradients() {
  Stopwatch sw;
  constexpr std::uint64_t kSeeds = 25;
  bool ok = true;
  std::string detail;
  for (const auto& kind : test::layer_kind_checks()) {
    test::FdResult total;
    for (std::uint64_t s = 0; s < kSeeds; ++s) total.merge(kind.run(s));
    ok = ok && total.ok() && total.checked > 0;
    detail += fmt("%s %.1e; ", kind.kind.c_str(), total.max_error);
  }
  detail += fmt("%llu seeds each, h=%.0e, tol %.0e", static_cast<unsigned long long>(kSeeds),
                test::kFdStep, test::kFdTolerance);
  report(ok, "gradient_correctness", detail, sw.seconds());
}

void check_conv_oracle() {
  Stopwatch sw;
  const auto r = test::run_conv_oracle(2026, 50);
  report(r.exact64 && r.max_rel32 <= 1e-5, "conv_oracle",
         fmt("50 shapes, 64-bit %s, 32-bit max rel %.2e (tol 1e-5)", r.exact64 ? "exact" : "NOT exact",
             r.max_rel32),
         sw.seconds());
}

void check_softmax_ce() {
  Stopwatch sw;
  std::mt19937_64 rng(3);
  double row_err = 0.0, grad_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const TensorD probs = softmax(test::random_tensor<double>({8, 4}, rng, -30, 30));
    std::vector<int> labels(8);
    for (auto& l : labels) l = static_cast<int>(rng() % 4);
    const TensorD g = loss_gradient_at_logits(probs, labels);
    for (std::size_t i = 0; i < 8; ++i) {
      double ps = 0.0, gs = 0.0;
      for (std::size_t j = 0; j < 4; ++j) ps += probs[4 * i + j], gs += g[4 * i + j];
      row_err = std::max(row_err, std::abs(ps - 1.0));
      grad_err = std::max(grad_err, std::abs(gs));
    }
  }
  const TensorD uniform = softmax(TensorD({3, 4}, 0.7));
  const std::vector<int> labels = {0, 2, 3};
  const double loss = cross_entropy(uniform, labels).loss;
  const double ln4_err = std::abs(loss - std::log(4.0));
  report(row_err <= 1e-6 && ln4_err <= 1e-6 && grad_err <= 1e-7, "softmax_cross_entropy",
         fmt("row sum err %.1e, uniform loss %.6f (err %.1e), grad row sum err %.1e", row_err, loss,
             ln4_err, grad_err),
         sw.seconds());
}

void check_optimizer() {
  Stopwatch sw;
  SgdMomentum<double> opt(0.1, 0.9);
  TensorD w({1}, 1.0);
  const TensorD g({1}, 1.0);
  opt.step("w", w, g);
  const double w1 = w[0];
  opt.step("w", w, g);
  const double w2 = w[0];
  const bool trace_ok = std::abs(w1 - 0.9) <= 1e-12 && std::abs(w2 - 0.71) <= 1e-12;

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dist(-1, 1);
  SgdMomentum<double> plain(0.05, 0.0);
  TensorD v({16}, 0.3);
  bool plain_ok = true;
  for (int step = 0; step < 20; ++step) {
    TensorD grad({16});
    for (auto& x : grad) x = dist(rng);
    TensorD expected = v;
    for (std::size_t i = 0; i < 16; ++i) expected[i] = v[i] - 0.05 * grad[i];
    plain.step("v", v, grad);
    plain_ok = plain_ok && v == expected;
  }
  report(trace_ok && plain_ok, "optimizer_trace",
         fmt("w = 1 -> %.12f -> %.12f; mu=0 %s plain SGD", w1, w2, plain_ok ? "bitwise equals" : "differs from"),
         sw.seconds());
}

struct ExperimentRun {
  History history;
  std::vector<ArchiveEntry> initial_conv;
  std::vector<ArchiveEntry> final_conv;
  std::string csv_bytes;
  std::string archive_bytes;
};

ExperimentRun run_experiment(const test::TempDir& data, const std::string& out_dir) {
  Network<float> net = build_vgg16_damage(kExperimentSeed, 224, 0.5);
  init_conv_random(net, derive_seed(kExperimentSeed, {3}));
  ExperimentRun run;
  run.initial_conv = conv_entries_from_network(net);
  TrainConfig config;
  config.epochs = kExperimentEpochs;
  config.batch_size = 20;
  config.learning_rate = 1e-4;
  config.momentum = 0.9;
  config.dropout_rate = 0.5;
  config.seed = kExperimentSeed;
  config.freeze_conv = true;
  config.image_size = 224;
  run.history = train(net, scan_dataset(data.str("train"), Split::kTraining),
                      scan_dataset(data.str("val"), Split::kValidation), config);
  run.final_conv = conv_entries_from_network(net);
  write_history(run.history, out_dir + "/history.csv");
  save_archive(archive_from_network(net), out_dir + "/model.vggw");
  run.csv_bytes = read_bytes(out_dir + "/history.csv");
  run.archive_bytes = read_bytes(out_dir + "/model.vggw");
  return run;
}

void check_experiment(const test::TempDir& data) {
  Stopwatch sw;
  test::TempDir out_a("acc_run_a"), out_b("acc_run_b");
  const ExperimentRun a = run_experiment(data, out_a.str());
  const double first_seconds = sw.seconds();
  std::size_t reached = 0;
  for (const auto& m : a.history.epochs) {
    std::printf("  epoch %2zu train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f\n", m.epoch,
                m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy);
    if (reached == 0 && m.train_accuracy >= 0.95) reached = m.epoch;
  }
  const EpochMetrics& last = a.history.epochs.back();
  report(reached != 0 && last.val_accuracy >= 0.90, "scaled_experiment",
         fmt("224px, %zu+%zu per class, seed %llu: train acc >= 0.95 %s%zu, final train %.4f, final val %.4f "
             "(need >= 0.90)",
             kTrainPerClass, kValPerClass, static_cast<unsigned long long>(kExperimentSeed),
             reached ? "at epoch " : "never, epochs ", reached ? reached : kExperimentEpochs,
             last.train_accuracy, last.val_accuracy),
         first_seconds);

  const bool frozen = test::bit_identical(a.initial_conv, a.final_conv);
  report(frozen, "freeze_invariance",
         fmt("%zu conv tensors %s after %zu epochs", a.final_conv.size(),
             frozen ? "bit-identical" : "CHANGED", a.history.epochs.size()),
         0.0);

  Stopwatch sw2;
  const ExperimentRun b = run_experiment(data, out_b.str());
  const bool same_csv = a.csv_bytes == b.csv_bytes && !a.csv_bytes.empty();
  const bool same_archive = a.archive_bytes == b.archive_bytes && !a.archive_bytes.empty();
  report(same_csv && same_archive, "determinism",
         fmt("history CSV %s (%zu bytes), archive %s (%zu bytes)", same_csv ? "identical" : "DIFFERS",
             a.csv_bytes.size(), same_archive ? "identical" : "DIFFERS", a.archive_bytes.size()),
         sw2.seconds());
}

void check_archive_round_trip() {
  Stopwatch sw;
  test::TempDir dir("acc_archive");
  std::mt19937_64 rng(5);
  std::size_t identical = 0, corruptions = 0, detected = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto entries = test::random_archive(rng);
    save_archive(entries, dir.str("a.vggw"));
    if (test::bit_identical(load_archive(dir.str("a.vggw")), entries)) ++identical;
    const auto good = encode_archive(entries);
    for (int k = 0; k < 8; ++k) {
      auto bytes = good;
      const std::size_t pos = rng() % bytes.size();
      bytes[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      ++corruptions;
      if (test::rejected(bytes)) ++detected;
    }
  }
  report(identical == 100 && detected == corruptions, "archive_round_trip",
         fmt("%zu/100 bit-identical, %zu/%zu single-byte corruptions detected", identical, detected,
             corruptions),
         sw.seconds());
}

// Smallest k with P(X <= k) >= q for X ~ Binomial(n, p).
std::size_t binomial_quantile(std::size_t n, double p, double q) {
  double cdf = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    cdf += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                    k * std::log(p) + (n - k) * std::log1p(-p));
    if (cdf >= q) return k;
  }
  return n;
}

// Balanced directories whose images are drawn independently of the label, so
// the number of correct predictions of any fixed model is Binomial(n, 1/4).
void generate_label_independent_set(const std::string& root, std::size_t per_class, std::uint64_t seed) {
  namespace fs = std::filesystem;
  for (DamageClass c : kDamageClasses) {
    const fs::path dir = fs::path(root) / std::string(class_name(c));
    fs::create_directories(dir);
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c), i}));
      const DamageClass pattern = class_from_index(static_cast<int>(uniform_index(rng, 4)));
      write_png(synthetic_pattern(pattern, 224, rng), (dir / (std::to_string(i) + ".png")).string());
    }
  }
}

void check_chance_level(const test::TempDir& data) {
  Stopwatch sw;
  Network<float> net = build_vgg16_damage(kExperimentSeed + 1, 224, 0.5);
  init_conv_random(net, derive_seed(kExperimentSeed + 1, {3}));
  const DatasetIndex index = scan_dataset(data.str("chance"), Split::kValidation);
  const EpochMetrics m = evaluate(net, index, 20);
  const std::size_t n = index.size();
  const auto correct = static_cast<std::size_t>(std::lround(m.val_accuracy * static_cast<double>(n)));
  const std::size_t lo = binomial_quantile(n, 0.25, 0.005);
  const std::size_t hi = binomial_quantile(n, 0.25, 0.995);
  report(correct >= lo && correct <= hi, "chance_level",
         fmt("untrained head %zu/%zu correct (%.4f), 99%% interval [%zu, %zu]", correct, n, m.val_accuracy, lo,
             hi),
         sw.seconds());
}

}  // namespace
}  // namespace quakenet

int main() {
  using namespace quakenet;
  check_shape_table();
  check_gradients();
  check_conv_oracle();
  check_softmax_ce();
  check_optimizer();

  test::TempDir data("acc_data");
  generate_synthetic_dataset(data.str("train"), kTrainPerClass, kExperimentSeed, 224);
  generate_synthetic_dataset(data.str("val"), kValPerClass, kExperimentSeed + 1, 224);
  generate_label_independent_set(data.str("chance"), kChancePerClass, kExperimentSeed + 2);
  check_experiment(data);
  check_archive_round_trip();
  check_chance_level(data);

  std::printf("%s: %d criteria failed\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
