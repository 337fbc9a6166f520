#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "soonet/cli/commands.hpp"
#include "soonet/data/feature_io.hpp"
#include "soonet/errors.hpp"

namespace {

using namespace soonet;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw FileError("cannot write '" + path + "'");
}

struct Globals {
  std::string config_path;
  std::vector<std::string> sets;
  std::string data_dir;

  std::vector<std::pair<std::string, std::string>> assignments() const {
    std::vector<std::pair<std::string, std::string>> out;
    if (!config_path.empty()) out = cli::parse_assignments(read_text(config_path));
    for (const auto& s : sets) out.push_back(cli::split_assignment(s));
    return out;
  }

  cli::RunConfig config() const {
    cli::RunConfig c;
    cli::apply_assignments(c, assignments());
    return c;
  }

  std::optional<std::string> data() const {
    return data_dir.empty() ? std::nullopt : std::optional<std::string>(data_dir);
  }
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text << "\n";
  } else {
    write_text(path, text + "\n");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"One-pass temporal grounding on synthetic video features"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config_path, "key = value config file");
  app.add_option("-s,--set", g.sets, "override one key (key=value), repeatable");
  app.add_option("-d,--data", g.data_dir, std::string("dataset directory (default $") + cli::kDataDirEnv + ")");

  auto* datagen = app.add_subcommand("datagen", "write a synthetic dataset");
  bool force = false;
  datagen->add_flag("-f,--force", force, "replace an existing dataset");

  auto* train = app.add_subcommand("train", "train and write a checkpoint");
  std::string out_model, log_path, resume;
  train->add_option("-o,--out", out_model, "checkpoint to write")->required();
  train->add_option("--log", log_path, "loss log file (default stdout)");
  train->add_option("--resume", resume, "continue from this checkpoint");

  auto* evaluate = app.add_subcommand("eval", "recall of a checkpoint on a split");
  std::string model_path, report_path;
  evaluate->add_option("-m,--model", model_path, "checkpoint")->required();
  evaluate->add_option("-r,--report", report_path, "write the report here instead of stdout");

  auto* bench = app.add_subcommand("bench", "one-pass vs sliding-window pipeline cost");
  std::string bench_model;
  bench->add_option("-m,--model", bench_model, "checkpoint (default: freshly initialised weights)");
  bench->add_option("-r,--report", report_path, "write the report here instead of stdout");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every layer and loss");
  gradcheck->add_option("-r,--report", report_path, "write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*datagen) {
    const auto dataset = cli::cmd_datagen(g.config(), cli::resolve_data_dir(g.data()), force);
    std::cerr << "wrote " << dataset.videos.size() << " videos, " << dataset.query_count() << " queries\n";
  } else if (*train) {
    const auto config = g.config();
    std::optional<std::string> from = resume.empty() ? std::nullopt : std::optional<std::string>(resume);
    if (log_path.empty()) {
      cli::cmd_train(config, cli::resolve_data_dir(g.data()), out_model, from, &std::cout);
    } else {
      std::ofstream log(log_path, from ? std::ios::app : std::ios::trunc);
      if (!log) throw FileError("cannot write '" + log_path + "'");
      cli::cmd_train(config, cli::resolve_data_dir(g.data()), out_model, from, &log);
    }
  } else if (*evaluate) {
    const auto checkpoint = model::load_checkpoint(model_path);
    const auto config = cli::checkpoint_config(checkpoint, g.assignments());
    emit(cli::cmd_eval(config, cli::resolve_data_dir(g.data()), checkpoint).report(), report_path);
  } else if (*bench) {
    std::optional<model::Checkpoint> checkpoint;
    cli::RunConfig config;
    if (bench_model.empty()) {
      config = g.config();
    } else {
      checkpoint = model::load_checkpoint(bench_model);
      config = cli::checkpoint_config(*checkpoint, g.assignments());
    }
    emit(cli::cmd_bench(config, cli::resolve_data_dir(g.data()), checkpoint).json(), report_path);
  } else if (*gradcheck) {
    const auto report = cli::cmd_gradcheck(g.config());
    emit(report.json(), report_path);
    if (!report.passed) {
      std::cerr << "gradient check failed\n";
      return kExitNumeric;
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const soonet::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const soonet::FileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const soonet::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const soonet::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const soonet::CheckError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const soonet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
