#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + MPFK_CLI_PATH + std::string(" ") + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (const std::size_t got = fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

bool contains(const Run& r, const std::string& needle) { return r.out.find(needle) != std::string::npos; }

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mpfk_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("gemm --help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("transmogrify").code == 2);
  CHECK(run("gemm --bogus").code == 2);
  CHECK(run("gemm --n notanumber").code == 2);
  CHECK(run("bench linpack").code == 2);
}

TEST_CASE("format inspect and convert") {
  const Run one = run("format inspect --type fp16 --bits 0x3C00");
  CHECK(one.code == 0);
  CHECK(contains(one, "value: 1\n"));
  CHECK(contains(one, "class: normal"));

  const Run sat = run("format convert --type e4m3 --value 500");
  CHECK(sat.code == 0);
  CHECK(contains(sat, "bits: 0x7e"));
  CHECK(contains(sat, "value: 448"));
  CHECK(contains(sat, "saturated"));

  const Run nan = run("format convert --type e4m3 --value 500 --nan-on-overflow");
  CHECK(contains(nan, "bits: 0x7f"));

  const Run inf = run("format convert --type fp16 --value 1e6");
  CHECK(contains(inf, "value: inf"));
  CHECK(contains(inf, "overflowed"));

  CHECK(run("format convert --type fp16 --value 0.1 --round toward_zero").code == 0);
  CHECK(run("format inspect --type fp12 --bits 0").code == 2);
  CHECK(run("format inspect --type fp16 --bits 0x10000").code == 2);
  CHECK(run("format convert --type fp16 --value abc").code == 2);
  CHECK(run("format convert --type fp128 --value 1").code == 2);
}

TEST_CASE("gemm") {
  const Run r = run("gemm --n 16 --verify --sweep --seed 3");
  CHECK(r.code == 0);
  CHECK(contains(r, "slice_multiplies: 28"));
  CHECK(contains(r, "max_relative_error:"));
  CHECK(contains(r, "s,slice_multiplies,max_relative_error,median_relative_error\n1,1,"));
  CHECK(contains(r, "\n7,28,"));
  CHECK(run("gemm --n 16 --verify --seed 3").out == run("gemm --n 16 --verify", "MPFK_SEED=3").out);

  const Run full = run("gemm --n 8 --s 3 --pair-policy full");
  CHECK(contains(full, "slice_multiplies: 9"));

  CHECK(run("gemm --n 4 --s 2 --w 31").code == 1);  // overflow guard
  CHECK(run("gemm --pair-policy diagonal").code == 2);
  CHECK(run("gemm --n 0").code == 2);
  CHECK(run("gemm --n 4", "MPFK_SEED=banana").code == 2);

  const auto a = scratch("a.csv");
  const auto b = scratch("b.csv");
  write_file(a, "1,2,3\n4,5,6\n");
  write_file(b, "1,0\n0,1\n");
  const Run mismatch = run("gemm --a " + a.string() + " --b " + b.string());
  CHECK(mismatch.code == 2);
  CHECK(contains(mismatch, "dimension mismatch"));
  write_file(b, "1,0\n0,1\n1,1\n");
  CHECK(run("gemm --verify --a " + a.string() + " --b " + b.string()).code == 0);
}

TEST_CASE("solve-ir") {
  const Run r = run("solve-ir --n 64");
  CHECK(r.code == 0);
  CHECK(contains(r, "converged: true"));
  CHECK(contains(r, "residual_history:\n  0 "));
  CHECK(run("solve-ir --n 64 --factor-format fp64").code == 0);
  CHECK(run("solve-ir --n 64 --max-iters 1 --tol 1e-30").code == 1);
  CHECK(run("solve-ir --n 0").code == 2);
  CHECK(run("solve-ir --factor-format fp128").code == 2);
  CHECK(run("solve-ir --rounding sideways").code == 2);
}

TEST_CASE("bench") {
  const Run a = run("bench hpl --n 64 --seed 7 --no-timing");
  const Run b = run("bench hpl --n 64 --seed 7 --no-timing");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("mode,n,seed,elapsed_s,gflops,backward_error,passed,iterations,energy_j,gflops_per_watt\n"
                    "hpl,64,7,,,",
                    0) == 0);

  const Run mxp = run("bench hplmxp --n 64 --power-constant 250 --format markdown");
  CHECK(mxp.code == 0);
  CHECK(contains(mxp, "| hplmxp | 64 | 1 |"));

  const auto trace = scratch("trace.csv");
  write_file(trace, "time_s,watts\n0,100\n10,200\n");
  const auto report = scratch("report.csv");
  std::filesystem::remove(report);
  CHECK(run("bench hpl --n 32 --power-trace " + trace.string() + " --out " + report.string()).code == 0);
  std::ifstream in(report);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("mode,n,seed", 0) == 0);

  write_file(trace, "time_s,watts\n0,100\n0,200\n");
  const Run bad = run("bench hpl --n 32 --power-trace " + trace.string());
  CHECK(bad.code == 2);
  CHECK(contains(bad, "line 3"));
  CHECK(run("bench hpl --n 32 --power-constant -5").code == 2);
  CHECK(run("bench hpl --n 32 --format xml").code == 2);
}

TEST_CASE("roofline") {
  const Run r = run("roofline --builtin a100 --precision fp16 --path tensor --intensity 10");
  CHECK(r.code == 0);
  CHECK(contains(r, "bytes_per_flop: 0.00641025641025641"));
  CHECK(contains(r, "attainable_tflops: 20 memory_bound"));

  const Run series = run("roofline --series fig4 --emulated-tflops B200=68.4");
  CHECK(series.code == 0);
  CHECK(contains(series, "V100,fp64,tensor,,0.9,,"));
  CHECK(contains(series, "B200,fp64,emulated,68.4,8,"));

  const Run cons = run("roofline --consistency");
  CHECK(cons.code == 0);
  CHECK(contains(cons, "system,precision,path,computed,published,relative_difference,flagged"));
  CHECK_FALSE(contains(cons, "true"));

  CHECK(run("roofline --builtin v100 --precision fp64 --path tensor").code == 2);
  CHECK(run("roofline --series fig9").code == 2);
  CHECK(run("roofline --series fig4 --emulated-tflops Z9=3").code == 2);
  CHECK(run("roofline").code == 2);

  const auto spec = scratch("spec.json");
  write_file(spec, "{\n  \"name\": \"desk\",\n  \"memory_bw_tbps\": 0.1,\n  \"throughput_tflops\": {\"fp64.fma\": 1}\n}\n");
  const Run desk = run("roofline --spec " + spec.string() + " --precision fp64 --path fma");
  CHECK(desk.code == 0);
  CHECK(contains(desk, "desk fp64.fma bytes_per_flop: 0.1"));
  write_file(spec, "{\n  \"name\": \"desk\",\n  \"memory_bw_tbps\": ,\n}\n");
  const Run broken = run("roofline --spec " + spec.string());
  CHECK(broken.code == 2);
  CHECK(contains(broken, "line 3"));
}
