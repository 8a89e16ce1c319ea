// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <regex>
#include <sstream>

#include "bench.hpp"
#include "capsq/layers.hpp"
#include "capsq/model_io.hpp"
#include "capsq/synth.hpp"
#include "commands.hpp"
#include "test_util.hpp"

using namespace capsq;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_tool(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string field(const std::string& text, const std::string& key) {
  const std::regex re(key + ":?\\s+(\\S+)");
  std::smatch m;
  return std::regex_search(text, m, re) ? m[1].str() : std::string{};
}

// Writes a float model, a calibration set and its quantized model.
struct Fixture {
  testutil::TempDir dir{"cli"};
  std::string fmodel = dir.file("f.json");
  std::string qmodel = dir.file("q.json");
  std::string calib = dir.file("calib.cqds");

  explicit Fixture(double stddev = 0.1) {
    const Architecture arch = *preset_architecture("mnist");
    save_float_model(random_float_model(arch, 1, stddev), fmodel, dir.file("f.bin"));
    save_dataset(random_dataset(arch.input, 8, 2), calib);
    const Run r = run_tool({"quantize", "--model", fmodel, "--calib", calib, "--out-prefix", dir.file("q")});
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("quantize reports the footprint and is reproducible") {
    Fixture fx;
    const Run r = run_tool({"quantize", "--model", fx.fmodel, "--calib", fx.calib, "--out-prefix",
                       fx.dir.file("again")});
    REQUIRE(r.code == 0);
    CHECK(std::stod(field(r.out, "int-8 saving")) >= 74.9);
    CHECK(r.out.find("1187.20") != std::string::npos);
    CHECK(read_file_bytes(fx.dir.file("again.bin")) == read_file_bytes(fx.dir.file("q.bin")));
    CHECK(read_file_text(fx.dir.file("again.json")) == read_file_text(fx.qmodel));
  }

  TEST_CASE("quantize with an empty calibration set fails with a data error") {
    Fixture fx;
    Dataset empty;
    empty.shape = {28, 28, 1};
    save_dataset(empty, fx.dir.file("empty.cqds"));
    const Run r = run_tool({"quantize", "--model", fx.fmodel, "--calib", fx.dir.file("empty.cqds"),
                       "--out-prefix", fx.dir.file("x")});
    CHECK(r.code == cli::kExitData);
    CHECK(r.err.find("empty calibration dataset") != std::string::npos);
  }

  TEST_CASE("usage and data errors map to exit codes") {
    CHECK(run_tool({}).code == cli::kExitUsage);
    CHECK(run_tool({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run_tool({"infer", "--input", "x"}).code == cli::kExitUsage);
    CHECK(run_tool({"bench", "--kernel", "fft"}).code == cli::kExitUsage);
    CHECK(run_tool({"--help"}).code == cli::kExitOk);
    CHECK(run_tool({"infer", "--qmodel", "/nonexistent.json", "--input", "/nonexistent"}).code ==
          cli::kExitData);
    CHECK(run_tool({"bench", "--kernel", "matmul", "--dims", "2x2"}).code == cli::kExitData);
    CHECK(run_tool({"bench", "--kernel", "matmul", "--strategy", "magic"}).code == cli::kExitData);
  }

  TEST_CASE("infer: zero model picks class 0, strategies agree, one score per class") {
    Fixture zero(0.0);
    Dataset zin;
    zin.shape = {28, 28, 1};
    zin.f32.assign(784, 0.0F);
    zin.labels = {0};
    save_dataset(zin, zero.dir.file("z.cqds"));
    const Run z = run_tool({"infer", "--qmodel", zero.qmodel, "--input", zero.dir.file("z.cqds")});
    REQUIRE(z.code == 0);
    CHECK(field(z.out, "class") == "0");

    Fixture fx;
    save_dataset(random_dataset({28, 28, 1}, 3, 9), fx.dir.file("in.cqds"));
    std::string ref;
    for (const char* s : {"naive", "transposed_b", "packed_dot"}) {
      const Run r = run_tool({"infer", "--qmodel", fx.qmodel, "--input", fx.dir.file("in.cqds"), "--index",
                         "2", "--strategy", s});
      REQUIRE(r.code == 0);
      if (ref.empty()) ref = r.out;
      CHECK(r.out == ref);
    }
    const auto scores_line = ref.substr(ref.find("scores:"));
    std::istringstream is(scores_line.substr(7, scores_line.find('\n') - 7));
    int n = 0;
    for (int v; is >> v;) ++n;
    CHECK(n == 10);
    CHECK(run_tool({"infer", "--qmodel", fx.qmodel, "--input", fx.dir.file("in.cqds"), "--index", "3"}).code ==
          cli::kExitData);
  }

  TEST_CASE("eval: matching labels, shifted labels, permutation") {
    Fixture fx;
    const QuantModel qm = load_quantized_model(fx.qmodel, fx.dir.file("q.bin"));
    Dataset d = random_dataset({28, 28, 1}, 12, 5);
    for (std::size_t i = 0; i < d.size(); ++i) {
      d.labels[i] = static_cast<std::uint8_t>(forward(qm, d.sample_f32(i)).predicted);
    }
    save_dataset(d, fx.dir.file("right.cqds"));
    CHECK(field(run_tool({"eval", "--qmodel", fx.qmodel, "--dataset", fx.dir.file("right.cqds")}).out,
                "accuracy") == "100.00%");

    Dataset wrong = d;
    for (auto& l : wrong.labels) l = static_cast<std::uint8_t>((l + 1) % 10);
    save_dataset(wrong, fx.dir.file("wrong.cqds"));
    CHECK(field(run_tool({"eval", "--qmodel", fx.qmodel, "--dataset", fx.dir.file("wrong.cqds")}).out,
                "accuracy") == "0.00%");

    Dataset mixed = d;
    for (std::size_t i = 0; i < mixed.size(); i += 3) mixed.labels[i] = static_cast<std::uint8_t>((mixed.labels[i] + 1) % 10);
    Dataset reversed = mixed;
    const std::size_t px = 784;
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      const std::size_t j = mixed.size() - 1 - i;
      std::copy_n(mixed.f32.begin() + static_cast<long>(i * px), px, reversed.f32.begin() + static_cast<long>(j * px));
      reversed.labels[j] = mixed.labels[i];
    }
    save_dataset(mixed, fx.dir.file("mixed.cqds"));
    save_dataset(reversed, fx.dir.file("rev.cqds"));
    const auto a = field(run_tool({"eval", "--qmodel", fx.qmodel, "--dataset", fx.dir.file("mixed.cqds")}).out, "accuracy");
    const auto b = field(run_tool({"eval", "--qmodel", fx.qmodel, "--dataset", fx.dir.file("rev.cqds")}).out, "accuracy");
    CHECK(a == "66.67%");
    CHECK(a == b);
  }

  TEST_CASE("compare: exact zero model, empty dataset, one row per layer") {
    Fixture zero(0.0);
    save_dataset(random_dataset({28, 28, 1}, 5, 3), zero.dir.file("t.cqds"));
    const Run r = run_tool({"compare", "--fmodel", zero.fmodel, "--qmodel", zero.qmodel, "--dataset",
                       zero.dir.file("t.cqds")});
    REQUIRE(r.code == 0);
    CHECK(field(r.out, "argmax agreement") == "100.00%");

    Dataset empty;
    empty.shape = {28, 28, 1};
    save_dataset(empty, zero.dir.file("e.cqds"));
    const Run e = run_tool({"compare", "--fmodel", zero.fmodel, "--qmodel", zero.qmodel, "--dataset",
                       zero.dir.file("e.cqds")});
    REQUIRE(e.code == 0);
    CHECK(field(e.out, "argmax agreement") == "100.00%");
    const auto table = e.out.substr(e.out.find("max_abs_deviation"));
    CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 3);
  }

  TEST_CASE("bench: closed-form MACs, fixed header, worker-independent checksum") {
    const Run r = run_tool({"bench", "--iters", "5"});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == cli::kBenchCsvHeader);
    CHECK(row.find(",matmul,packed_dot,20x30x40,5,1,120000,") != std::string::npos);

    for (const char* kernel : {"matmul", "conv", "squash", "softmax", "caps"}) {
      CAPTURE(kernel);
      cli::BenchOptions o;
      o.kernel = kernel;
      o.iters = 2;
      o.workers = 1;
      const auto one = cli::run_bench(o);
      o.workers = 8;
      const auto eight = cli::run_bench(o);
      CHECK(one.checksum == eight.checksum);
      CHECK(one.macs == eight.macs);
    }
    cli::BenchOptions o;
    std::uint64_t ref = 0;
    for (const char* s : {"naive", "transposed_b", "packed_dot", "sext16"}) {
      o.strategy = s;
      const auto rep = cli::run_bench(o);
      if (ref == 0) ref = rep.checksum;
      CHECK(rep.checksum == ref);
    }

    testutil::TempDir dir("bench");
    const auto csv = dir.file("b.csv");
    REQUIRE(run_tool({"bench", "--iters", "1", "--csv", csv}).code == 0);
    REQUIRE(run_tool({"bench", "--iters", "1", "--csv", csv}).code == 0);
    const auto text = read_file_text(csv);
    CHECK(text.rfind(std::string(cli::kBenchCsvHeader) + "\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  }

  TEST_CASE("synth commands write loadable artifacts") {
    testutil::TempDir dir("synth");
    REQUIRE(run_tool({"synth-model", "--preset", "cifar10", "--out-prefix", dir.file("c")}).code == 0);
    CHECK(load_float_model(dir.file("c.json"), dir.file("c.bin")).arch.parameter_count() == 115296);
    REQUIRE(run_tool({"synth-data", "--preset", "smallnorb", "--count", "3", "--dtype", "i8", "--out",
                 dir.file("d.cqds")})
                .code == 0);
    const Dataset d = load_dataset(dir.file("d.cqds"));
    CHECK(d.shape == FeatureShape{32, 32, 2});
    CHECK(d.dtype == SampleType::kInt8);
    CHECK(run_tool({"synth-model", "--preset", "imagenet", "--out-prefix", dir.file("x")}).code == cli::kExitData);
  }
}
