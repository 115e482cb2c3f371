// Command-line front end: generate synthetic domain pairs, pretrain, run the
// full adaptation pipeline, evaluate checkpoints, and run ablation sweeps.

#include "uda/datagen.hpp"
#include "uda/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string data_path;     // directory holding source.csv / target.csv
  std::string synthetic;     // gaussian | moons, overrides config
  std::int64_t seed = -1;    // overrides config when >= 0
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "key = value config file (# comments)");
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out_dir, "output directory");
}

uda::RunConfig resolve_config(const CommonArgs& args) {
  uda::RunConfig config = args.config_path.empty()
                              ? uda::RunConfig()
                              : uda::load_config(args.config_path);
  if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.synthetic.empty()) {
    config.data_mode = "synthetic";
    config.synthetic = args.synthetic;
  }
  if (!args.data_path.empty()) {
    config.data_mode = "csv";
    config.source_csv = args.data_path + "/source.csv";
    config.target_csv = args.data_path + "/target.csv";
  }
  uda::validate(config);
  return config;
}

int cmd_generate(const CommonArgs& args) {
  uda::RunConfig config = resolve_config(args);
  if (args.out_dir.empty()) throw uda::ConfigError("generate needs --out");
  const uda::DomainPair pair = uda::make_dataset(config);
  std::filesystem::create_directories(args.out_dir);
  uda::write_csv(args.out_dir + "/source.csv", pair.source.features,
                 pair.source.labels);
  uda::write_csv(args.out_dir + "/target.csv", pair.target.features,
                 pair.target.hidden_labels);
  std::cout << "wrote " << pair.source.features.rows() << " source and "
            << pair.target.features.rows() << " target samples to "
            << args.out_dir << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& args) {
  uda::RunConfig config = resolve_config(args);
  if (args.out_dir.empty()) throw uda::ConfigError("pretrain needs --out");
  std::filesystem::create_directories(args.out_dir);
  uda::MetricsWriter metrics(args.out_dir + "/metrics.jsonl");
  const uda::DomainPair pair = uda::make_dataset(config);
  const uda::NetworkParams params =
      uda::pretrain(config, pair.source, &metrics);
  uda::save_checkpoint(args.out_dir + "/checkpoint.bin", params);
  const uda::Evaluation eval =
      uda::evaluate(params, pair.source.features, pair.source.labels,
                    pair.source.num_classes);
  std::cout << "source accuracy " << eval.accuracy << ", checkpoint in "
            << args.out_dir << "\n";
  return 0;
}

int cmd_run(const CommonArgs& args) {
  const uda::RunConfig config = resolve_config(args);
  const uda::RunResult result = uda::run(config, args.out_dir);
  std::cout << "source-only target accuracy " << result.source_only_target_acc
            << "\n"
            << "final target accuracy       " << result.final_target_acc
            << "\n";
  if (!args.out_dir.empty())
    std::cout << "metrics and checkpoint in " << args.out_dir << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint,
                 bool use_source) {
  uda::RunConfig config = resolve_config(args);
  const uda::NetworkParams params = uda::load_checkpoint(checkpoint);
  const uda::DomainPair pair = uda::make_dataset(config);
  const uda::Matrix* features = &pair.target.features;
  const uda::IntVector* labels = &pair.target.hidden_labels;
  if (use_source) {
    features = &pair.source.features;
    labels = &pair.source.labels;
  } else if (!pair.target.has_hidden_labels()) {
    throw uda::DataError("target set has no labels to evaluate against");
  }
  const uda::Evaluation eval =
      uda::evaluate(params, *features, *labels, pair.source.num_classes);
  std::cout << "accuracy " << eval.accuracy << " over " << features->rows()
            << " samples\n";
  if (!args.out_dir.empty()) {
    std::filesystem::create_directories(args.out_dir);
    std::ofstream out(args.out_dir + "/confusion.csv");
    for (Eigen::Index i = 0; i < eval.confusion.rows(); ++i) {
      for (Eigen::Index j = 0; j < eval.confusion.cols(); ++j) {
        if (j > 0) out << ',';
        out << static_cast<long long>(eval.confusion(i, j));
      }
      out << '\n';
    }
    std::cout << "confusion matrix in " << args.out_dir << "/confusion.csv\n";
  }
  return 0;
}

int cmd_ablate(const CommonArgs& args, bool sweep_tau) {
  const uda::RunConfig config = resolve_config(args);
  const std::vector<uda::AblationRow> rows =
      uda::ablate(config, args.out_dir, sweep_tau);
  std::cout << uda::ablation_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-aware unsupervised domain adaptation pipeline"};
  app.require_subcommand(1);

  CommonArgs generate_args, pretrain_args, run_args, evaluate_args,
      ablate_args;
  std::string checkpoint;
  bool use_source = false;
  bool sweep_tau = false;

  CLI::App* generate =
      app.add_subcommand("generate", "write synthetic source/target CSVs");
  add_common(generate, generate_args);
  generate->add_option("--synthetic", generate_args.synthetic,
                       "gaussian or moons");

  CLI::App* pretrain_cmd =
      app.add_subcommand("pretrain", "source-only supervised pretraining");
  add_common(pretrain_cmd, pretrain_args);
  pretrain_cmd->add_option("--synthetic", pretrain_args.synthetic);
  pretrain_cmd->add_option("--data", pretrain_args.data_path,
                           "directory with source.csv and target.csv");

  CLI::App* run_cmd = app.add_subcommand("run", "full adaptation run");
  add_common(run_cmd, run_args);
  run_cmd->add_option("--synthetic", run_args.synthetic);
  run_cmd->add_option("--data", run_args.data_path);

  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "score a checkpoint on a dataset");
  add_common(evaluate_cmd, evaluate_args);
  evaluate_cmd->add_option("--synthetic", evaluate_args.synthetic);
  evaluate_cmd->add_option("--data", evaluate_args.data_path);
  evaluate_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")
      ->required();
  evaluate_cmd->add_flag("--source", use_source,
                         "score the source split instead of the target");

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "run the ablation matrix");
  add_common(ablate_cmd, ablate_args);
  ablate_cmd->add_option("--synthetic", ablate_args.synthetic);
  ablate_cmd->add_option("--data", ablate_args.data_path);
  ablate_cmd->add_flag("--sweep-tau", sweep_tau,
                       "sweep tau1 = tau2 instead of the flag matrix");

  try {
    app.parse(argc, argv);
    if (generate->parsed()) return cmd_generate(generate_args);
    if (pretrain_cmd->parsed()) return cmd_pretrain(pretrain_args);
    if (run_cmd->parsed()) return cmd_run(run_args);
    if (evaluate_cmd->parsed())
      return cmd_evaluate(evaluate_args, checkpoint, use_source);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_args, sweep_tau);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const uda::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
