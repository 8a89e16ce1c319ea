// Copyright 2026 The capsq Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "bench.hpp"
#include "capsq/error.hpp"
#include "capsq/layers.hpp"
#include "capsq/model_io.hpp"
#include "capsq/quantizer.hpp"
#include "capsq/reference.hpp"
#include "capsq/synth.hpp"

namespace capsq::cli {
namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string qformat_name(QFormat f) {
  return "Q" + std::to_string(f.int_bits()) + "." + std::to_string(f.frac_bits());
}

fs::path blob_path_for(const fs::path& manifest, const std::string& explicit_blob) {
  if (!explicit_blob.empty()) return explicit_blob;
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

ExecConfig exec_from(const std::string& strategy, int workers) {
  ExecConfig exec;
  if (!strategy.empty()) {
    const auto s = parse_matmul_strategy(strategy);
    if (!s) throw ValueError("unknown strategy '" + strategy + "'");
    exec.strategy = *s;
  }
  if (workers < 1) throw ValueError("workers must be at least 1");
  exec.workers = workers;
  return exec;
}

QTensor sample_tensor(const QuantModel& model, const Dataset& data, std::size_t index) {
  if (!(data.shape == model.arch.input)) {
    throw ShapeError("dataset samples are " + data.shape.str() + ", model expects " +
                     model.arch.input.str());
  }
  if (data.dtype == SampleType::kInt8) {
    const auto s = data.sample_i8(index);
    return {data.shape, {s.begin(), s.end()}, model.input_fmt};
  }
  return {data.shape, quantize_tensor(data.sample_f32(index), model.input_fmt), model.input_fmt};
}

// --- quantize ---------------------------------------------------------------

struct QuantizeArgs {
  std::string model, weights, calib, out_prefix;
  int workers = 1;
};

int cmd_quantize(const QuantizeArgs& a, std::ostream& out) {
  const FloatModel fm = load_float_model(a.model, blob_path_for(a.model, a.weights));
  const Dataset calib = load_dataset(a.calib);
  const QuantizeResult r = quantize_model(fm, calib, a.workers);

  const fs::path manifest = a.out_prefix + ".json";
  const fs::path blob = a.out_prefix + ".bin";
  save_quantized_model(r.model, manifest, blob);

  const auto geo = fm.arch.geometry();
  out << "calibration samples: " << r.profile.samples() << "\n";
  out << "layer  kind          params     weights  bias     output\n";
  for (std::size_t l = 0; l < geo.size(); ++l) {
    const QLayer& q = r.model.layers[l];
    char line[160];
    const bool has_bias = geo[l].bias_count > 0;
    std::snprintf(line, sizeof(line), "%-6zu %-13s %-10zu %-8s %-8s %s\n", l,
                  std::string(layer_kind_name(fm.arch.layers[l])).c_str(),
                  geo[l].weight_count + geo[l].bias_count, qformat_name(q.weight_fmt).c_str(),
                  has_bias ? qformat_name(q.bias_fmt).c_str() : "-",
                  qformat_name(q.out_fmt).c_str());
    out << line;
  }
  for (const auto& w : r.plan.warnings) out << "warning: " << w << "\n";
  for (const auto& s : r.plan.degenerate_sites) out << "note: all-zero site " << s << "\n";

  const Footprint& f = r.footprint;
  out << "memory footprint (KB)\n";
  out << "  float32        " << fixed(static_cast<double>(f.float_bytes) / 1000.0, 2) << "\n";
  out << "  int8           " << fixed(static_cast<double>(f.quantized_bytes()) / 1000.0, 2)
      << "  (blob " << f.int8_bytes << " B, shifts " << f.shift_bytes << " B)\n";
  out << "  int-8 saving   " << fixed(f.saving_percent(), 2) << "%\n";
  out << "wrote " << manifest.string() << " and " << blob.string() << "\n";
  return kExitOk;
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
  std::string qmodel, qweights, input, strategy;
  std::size_t index = 0;
  int workers = 1;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const QuantModel m = load_quantized_model(a.qmodel, blob_path_for(a.qmodel, a.qweights));
  const Dataset data = load_dataset(a.input);
  if (a.index >= data.size()) {
    throw ValueError("sample index " + std::to_string(a.index) + " out of range (" +
                     std::to_string(data.size()) + " samples)");
  }
  const ForwardResult r = forward(m, sample_tensor(m, data, a.index), exec_from(a.strategy, a.workers));
  out << "class: " << r.predicted << "\n";
  out << "scores:";
  for (auto s : r.scores) out << ' ' << s;
  out << "\n";
  std::uint64_t h = fnv1a_of(r.scores);
  h = fnv1a_of(r.capsules.data(), h);
  out << "checksum: " << hex64(h) << "\n";
  return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string qmodel, qweights, dataset, strategy;
  int workers = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const QuantModel m = load_quantized_model(a.qmodel, blob_path_for(a.qmodel, a.qweights));
  const Dataset data = load_dataset(a.dataset);
  const ExecConfig exec = exec_from(a.strategy, a.workers);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ForwardResult r = forward(m, sample_tensor(m, data, i), exec);
    if (r.predicted == static_cast<int>(data.labels[i])) ++correct;
  }
  const double acc = data.empty() ? 100.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
  out << "samples: " << data.size() << "\n";
  out << "correct: " << correct << "\n";
  out << "accuracy: " << fixed(acc, 2) << "%\n";
  return kExitOk;
}

// --- compare ----------------------------------------------------------------

struct CompareArgs {
  std::string fmodel, weights, qmodel, qweights, dataset, strategy;
  int workers = 1;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  const FloatModel fm = load_float_model(a.fmodel, blob_path_for(a.fmodel, a.weights));
  const QuantModel qm = load_quantized_model(a.qmodel, blob_path_for(a.qmodel, a.qweights));
  if (!(fm.arch == qm.arch)) throw ShapeError("float and quantized models differ in architecture");
  const Dataset data = load_dataset(a.dataset);
  if (!data.empty() && data.dtype != SampleType::kFloat32) {
    throw ValueError("compare needs a float32 dataset");
  }
  if (!(data.shape == fm.arch.input)) {
    throw ShapeError("dataset samples are " + data.shape.str() + ", model expects " + fm.arch.input.str());
  }
  const ExecConfig exec = exec_from(a.strategy, a.workers);
  const std::size_t layers = fm.arch.layers.size();

  std::vector<double> max_dev(layers, 0.0);
  double score_dev = 0.0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto sample = data.sample_f32(i);
    std::vector<std::vector<float>> fout(layers);
    const FloatForwardResult fr = float_forward(fm, sample, [&](const SiteId& s, std::span<const float> v) {
      if (s.kind == SiteKind::kOutput) fout[static_cast<std::size_t>(s.layer)].assign(v.begin(), v.end());
    });
    const ForwardResult qr = forward(qm, sample, exec, [&](std::size_t l, std::span<const q7_t> v, QFormat f) {
      const auto& ref = fout[l];
      for (std::size_t k = 0; k < v.size() && k < ref.size(); ++k) {
        max_dev[l] = std::max(max_dev[l], std::fabs(static_cast<double>(dequantize(v[k], f)) - ref[k]));
      }
    });
    if (qr.predicted == fr.predicted) ++agree;
    double dev = 0.0;
    for (std::size_t j = 0; j < fr.scores.size(); ++j) {
      dev += std::fabs(static_cast<double>(qr.scores[j]) / 128.0 - fr.scores[j]);
    }
    score_dev += fr.scores.empty() ? 0.0 : dev / static_cast<double>(fr.scores.size());
  }
  const double n = static_cast<double>(data.size());
  out << "samples: " << data.size() << "\n";
  out << "argmax agreement: " << fixed(data.empty() ? 100.0 : 100.0 * static_cast<double>(agree) / n, 2) << "%\n";
  out << "mean score deviation: " << fixed(data.empty() ? 0.0 : score_dev / n, 6) << "\n";
  out << "layer  kind          max_abs_deviation\n";
  for (std::size_t l = 0; l < layers; ++l) {
    char line[96];
    std::snprintf(line, sizeof(line), "%-6zu %-13s %.6f\n", l,
                  std::string(layer_kind_name(fm.arch.layers[l])).c_str(), max_dev[l]);
    out << line;
  }
  return kExitOk;
}

// --- bench ------------------------------------------------------------------

int cmd_bench(const BenchOptions& o, const std::string& csv_path, std::ostream& out) {
  const BenchReport r = run_bench(o);
  out << kBenchCsvHeader << "\n" << r.csv_row() << "\n";
  if (!csv_path.empty()) {
    const bool fresh = !fs::exists(csv_path) || fs::file_size(csv_path) == 0;
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw FormatError("cannot write " + csv_path);
    if (fresh) csv << kBenchCsvHeader << "\n";
    csv << r.csv_row() << "\n";
  }
  return kExitOk;
}

// --- synthetic artifacts ----------------------------------------------------

Architecture preset_or_throw(const std::string& name) {
  auto arch = preset_architecture(name);
  if (!arch) throw ValueError("unknown preset '" + name + "'");
  return *arch;
}

struct SynthModelArgs {
  std::string preset = "mnist", out_prefix;
  std::uint64_t seed = 1;
  double stddev = 0.1;
};

int cmd_synth_model(const SynthModelArgs& a, std::ostream& out) {
  const FloatModel m = random_float_model(preset_or_throw(a.preset), a.seed, a.stddev);
  save_float_model(m, a.out_prefix + ".json", a.out_prefix + ".bin");
  out << "wrote " << a.out_prefix << ".json and " << a.out_prefix << ".bin ("
      << m.arch.parameter_count() << " parameters)\n";
  return kExitOk;
}

struct SynthDataArgs {
  std::string preset = "mnist", shape, dtype = "f32", out_path;
  std::size_t count = 64;
  std::uint64_t seed = 2;
  int classes = 0;
};

int cmd_synth_data(const SynthDataArgs& a, std::ostream& out) {
  FeatureShape shape;
  int classes = a.classes;
  if (!a.shape.empty()) {
    const auto d = parse_dims(a.shape, 3);
    shape = {d[0], d[1], d[2]};
    if (classes == 0) classes = 10;
  } else {
    const Architecture arch = preset_or_throw(a.preset);
    shape = arch.input;
    if (classes == 0) classes = arch.num_classes();
  }
  Dataset d;
  if (a.dtype == "f32") d = random_dataset(shape, a.count, a.seed, classes);
  else if (a.dtype == "i8") d = random_dataset_i8(shape, a.count, a.seed, classes);
  else throw ValueError("unknown dtype '" + a.dtype + "' (f32 or i8)");
  save_dataset(d, a.out_path);
  out << "wrote " << a.out_path << " (" << d.size() << " samples of " << shape.str() << ")\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Int-8 capsule network quantization and inference"};
  app.name("capsq");
  app.require_subcommand(1);

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Calibrate and quantize a float model");
  quantize->add_option("--model", qa.model, "Float model manifest")->required();
  quantize->add_option("--weights", qa.weights, "Float weight blob (default: manifest with .bin)");
  quantize->add_option("--calib", qa.calib, "Calibration dataset")->required();
  quantize->add_option("--out-prefix", qa.out_prefix, "Output path prefix")->required();
  quantize->add_option("--workers", qa.workers, "Calibration workers");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Classify one sample");
  infer->add_option("--qmodel", ia.qmodel, "Quantized model manifest")->required();
  infer->add_option("--qweights", ia.qweights, "Quantized blob (default: manifest with .bin)");
  infer->add_option("--input", ia.input, "Dataset file holding the sample")->required();
  infer->add_option("--index", ia.index, "Sample index");
  infer->add_option("--strategy", ia.strategy, "naive, transposed_b or packed_dot");
  infer->add_option("--workers", ia.workers, "Kernel workers");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Accuracy over a labelled dataset");
  eval->add_option("--qmodel", ea.qmodel, "Quantized model manifest")->required();
  eval->add_option("--qweights", ea.qweights, "Quantized blob (default: manifest with .bin)");
  eval->add_option("--dataset", ea.dataset, "Labelled dataset")->required();
  eval->add_option("--strategy", ea.strategy, "naive, transposed_b or packed_dot");
  eval->add_option("--workers", ea.workers, "Kernel workers");

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "Float against int-8 on a dataset");
  compare->add_option("--fmodel", ca.fmodel, "Float model manifest")->required();
  compare->add_option("--weights", ca.weights, "Float weight blob (default: manifest with .bin)");
  compare->add_option("--qmodel", ca.qmodel, "Quantized model manifest")->required();
  compare->add_option("--qweights", ca.qweights, "Quantized blob (default: manifest with .bin)");
  compare->add_option("--dataset", ca.dataset, "float32 dataset")->required();
  compare->add_option("--strategy", ca.strategy, "naive, transposed_b or packed_dot");
  compare->add_option("--workers", ca.workers, "Kernel workers");

  BenchOptions bo;
  std::string csv_path;
  auto* bench = app.add_subcommand("bench", "Time one kernel");
  bench->add_option("--kernel", bo.kernel, "matmul, conv, squash, softmax or caps")
      ->check(CLI::IsMember({"matmul", "conv", "squash", "softmax", "caps"}));
  bench->add_option("--strategy", bo.strategy,
                    "matmul/caps: naive, transposed_b, packed_dot (matmul also sext16); "
                    "conv: auto, basic, fast");
  bench->add_option("--dims", bo.dims,
                    "matmul MxKxN, conv HxWxCxOxK, squash RxD, softmax GxN, caps IxDxJxExR");
  bench->add_option("--iters", bo.iters, "Iterations");
  bench->add_option("--workers", bo.workers, "Workers");
  bench->add_option("--seed", bo.seed, "Operand seed");
  bench->add_option("--csv", csv_path, "Append the row to this CSV file");

  SynthModelArgs sm;
  auto* synth_model = app.add_subcommand("synth-model", "Write a randomly initialized float model");
  synth_model->add_option("--preset", sm.preset, "mnist, smallnorb or cifar10");
  synth_model->add_option("--seed", sm.seed, "Random seed");
  synth_model->add_option("--stddev", sm.stddev, "Weight standard deviation");
  synth_model->add_option("--out-prefix", sm.out_prefix, "Output path prefix")->required();

  SynthDataArgs sd;
  auto* synth_data = app.add_subcommand("synth-data", "Write a random dataset");
  synth_data->add_option("--preset", sd.preset, "Take shape and classes from a preset");
  synth_data->add_option("--shape", sd.shape, "HxWxC, overrides the preset");
  synth_data->add_option("--count", sd.count, "Samples");
  synth_data->add_option("--seed", sd.seed, "Random seed");
  synth_data->add_option("--dtype", sd.dtype, "f32 or i8");
  synth_data->add_option("--classes", sd.classes, "Label range");
  synth_data->add_option("--out", sd.out_path, "Output file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (quantize->parsed()) return cmd_quantize(qa, out);
    if (infer->parsed()) return cmd_infer(ia, out);
    if (eval->parsed()) return cmd_eval(ea, out);
    if (compare->parsed()) return cmd_compare(ca, out);
    if (bench->parsed()) return cmd_bench(bo, csv_path, out);
    if (synth_model->parsed()) return cmd_synth_model(sm, out);
    if (synth_data->parsed()) return cmd_synth_data(sd, out);
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace capsq::cli
