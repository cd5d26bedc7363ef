#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace obtree::cli {

using Record = nlohmann::ordered_json;

// Line-delimited JSON records, echoed to the console and optionally a file.
class RecordSink {
 public:
  RecordSink(std::ostream& console, const std::string& path);
  void emit(const Record& record);

 private:
  std::ostream& console_;
  std::ofstream file_;
};

struct DataFlags {
  std::string train;
  std::string val;
  std::string test;
  double val_frac = 0.0;
};

struct ModelFlags {
  std::size_t depth = 4;
  double nu = 1.0;
  double lr = 0.1;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double momentum = 0.0;
  std::string algo = "sgd";
  std::string inference = "fast";
  std::string init = "co2";
  std::uint64_t seed = 0;
  std::size_t trials = 20;     // candidate hyperplanes per node for --init random
  std::size_t co2_epochs = 5;  // passes per node for --init co2
  std::size_t ssgd_inner = 200;
  double ssgd_rel = 1e-3;
};

struct TrainFlags {
  DataFlags data;
  ModelFlags model;
  std::string model_out;
  std::string metrics_out;
};

struct EvalFlags {
  std::string model;
  std::string test;
  std::string train;  // optional, aligns features and labels with training
  std::string inference = "fast";
  std::string metrics_out;
};

struct SweepFlags {
  DataFlags data;
  ModelFlags model;
  std::string nu_grid = "0.1,1,4,10,43,100";
  std::string lr_grid = "0.01,0.1,1";
  std::string model_out;
  std::string metrics_out;
};

struct TimingFlags {
  std::string data;  // empty: synthetic
  std::size_t n = 5000;
  std::size_t p = 50;
  std::size_t classes = 2;
  std::string depths = "6,8,10,12,14";
  std::size_t reps = 5;
  std::size_t batch = 32;
  double nu = 1.0;
  double lr = 0.1;
  std::uint64_t seed = 0;
  std::string metrics_out;
};

struct DepthSweepFlags {
  DataFlags data;
  ModelFlags model;
  std::string depths = "2,4,6,8";
  std::string methods = "axis,random,co2,nongreedy-sgd,nongreedy-ssgd";
  std::string nu_grid = "0.1,1,4,10,43,100";
  std::string lr_grid = "0.01,0.1,1";
  std::string metrics_out;
};

struct GenerateFlags {
  std::string kind = "xor";
  std::size_t n = 2000;
  double noise = 0.05;
  double angle = 30.0;
  std::size_t p = 10;
  std::size_t classes = 3;
  std::uint64_t seed = 0;
  std::string out;
};

struct ReplayFlags {
  std::string record;
  std::string model_out;
  std::string metrics_out;
};

std::vector<double> parse_double_list(const std::string& text, const char* what);
std::vector<std::size_t> parse_size_list(const std::string& text, const char* what);

int cmd_train(const TrainFlags& flags, const std::vector<std::string>& args, std::ostream& out);
int cmd_eval(const EvalFlags& flags, std::ostream& out);
int cmd_sweep(const SweepFlags& flags, const std::vector<std::string>& args, std::ostream& out);
int cmd_timing(const TimingFlags& flags, const std::vector<std::string>& args, std::ostream& out);
int cmd_depth_sweep(const DepthSweepFlags& flags, const std::vector<std::string>& args,
                    std::ostream& out);
int cmd_generate(const GenerateFlags& flags, std::ostream& out);
// Re-runs the command stored in the first record of a metrics file.
int cmd_replay(const ReplayFlags& flags, std::ostream& out, std::ostream& err);

}  // namespace obtree::cli
