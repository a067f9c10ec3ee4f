//! Command-line surface. Every configuration key is also a global `--key value`
//! flag that overrides the `--config` file.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::config::{RunConfig, KEYS};
use crate::error::{GradeError, Result};
use crate::io::{self, RunManifest};
use crate::rng::{substream, Stream};
use crate::{pipeline, sbm, theory, trainer};

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .required(true)
        .help(help)
}

fn graph_arg() -> Arg {
    path_arg("graph", "Dataset directory with edges.tsv, features.csv and labels.txt")
}

fn out_arg() -> Arg {
    path_arg("out", "Output directory")
}

fn seeds_arg() -> Arg {
    Arg::new("seeds")
        .long("seeds")
        .value_name("COUNT")
        .value_parser(clap::value_parser!(u64).range(1..))
        .default_value("5")
        .help("Number of consecutive seeds starting at --seed")
}

pub fn command() -> Command {
    let mut cmd = Command::new("grade")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Degree-bias-aware graph contrastive learning")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .global(true)
                .help("`key = value` configuration file"),
        );
    for &key in KEYS {
        cmd = cmd.arg(
            Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .global(true)
                .action(ArgAction::Set)
                .help_heading("Configuration overrides"),
        );
    }
    cmd.subcommand(
        Command::new("synth")
            .about("Generate a stochastic block model dataset")
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("train")
            .about("Train an encoder; writes checkpoint.bin and train_log.jsonl")
            .arg(graph_arg())
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("embed")
            .about("Embed the un-augmented graph with a checkpoint")
            .arg(graph_arg())
            .arg(path_arg("checkpoint", "Checkpoint written by `train`"))
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("eval")
            .about("Linear probe and degree-fairness report for an embedding file")
            .arg(graph_arg())
            .arg(path_arg("embeddings", "Embedding file written by `embed`"))
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("audit")
            .about("Train, embed and evaluate over several seeds")
            .arg(graph_arg())
            .arg(seeds_arg())
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("theory")
            .about("Concentration and scatter probe for a single-layer checkpoint")
            .arg(graph_arg())
            .arg(path_arg("checkpoint", "Single-layer checkpoint"))
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("compare")
            .about("Audit the similarity-guided and random-drop augmentations side by side")
            .arg(graph_arg())
            .arg(seeds_arg())
            .arg(out_arg()),
    )
}

fn resolve_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for &key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output directory plus the manifest every run writes into it.
struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Outputs {
    fn new(dir: &Path, command: &str, cfg: &RunConfig, config_file: Option<&PathBuf>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut manifest = RunManifest::new(command, cfg);
        if let Some(p) = config_file {
            manifest.add_input(p)?;
        }
        let mut out = Self {
            dir: dir.to_path_buf(),
            manifest,
        };
        out.write_text("config.resolved", &cfg.to_resolved_string())?;
        Ok(out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) {
        self.manifest.add_output(&self.dir.join(name));
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)?;
        self.record(name);
        Ok(())
    }

    fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        io::write_json(value, &self.path(name))?;
        self.record(name);
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.outputs.push("manifest.json".into());
        io::write_json(&self.manifest, &self.dir.join("manifest.json"))
    }
}

fn load_graph_input(sub: &ArgMatches, out: &mut Outputs) -> Result<crate::Graph> {
    let dir = sub.get_one::<PathBuf>("graph").expect("required");
    let (e, f, l) = io::graph_files(dir);
    out.manifest.add_input(&e)?;
    out.manifest.add_input(&f)?;
    if l.exists() {
        out.manifest.add_input(&l)?;
    }
    Ok(io::load_graph_dir(dir)?.graph)
}

fn input_file(sub: &ArgMatches, name: &str, out: &mut Outputs) -> Result<PathBuf> {
    let p = sub.get_one::<PathBuf>(name).expect("required").clone();
    out.manifest.add_input(&p)?;
    Ok(p)
}

fn seed_list(sub: &ArgMatches, cfg: &RunConfig) -> Vec<u64> {
    let count = *sub.get_one::<u64>("seeds").expect("defaulted");
    (0..count).map(|i| cfg.train.seed.wrapping_add(i)).collect()
}

fn execute(m: &ArgMatches) -> Result<()> {
    let cfg = resolve_config(m)?;
    let (name, sub) = m.subcommand().expect("subcommand required");
    let out_dir = sub.get_one::<PathBuf>("out").expect("required");
    let mut out = Outputs::new(out_dir, name, &cfg, m.get_one::<PathBuf>("config"))?;

    match name {
        "synth" => {
            let graph = sbm::generate(&cfg.sbm)?;
            for p in io::save_graph_dir(&graph, out_dir)? {
                out.manifest.add_output(&p);
            }
        }
        "train" => {
            let graph = load_graph_input(sub, &mut out)?;
            let (params, log) = trainer::train(&graph, &cfg.augment, &cfg.contrastive, &cfg.train)?;
            io::save_checkpoint(&params, &out.path("checkpoint.bin"))?;
            out.record("checkpoint.bin");
            out.write_text("train_log.jsonl", &io::train_log_jsonl(&log, true)?)?;
        }
        "embed" => {
            let graph = load_graph_input(sub, &mut out)?;
            let params = io::load_checkpoint(&input_file(sub, "checkpoint", &mut out)?)?;
            if params.dims().input != graph.num_features() {
                return Err(GradeError::Validation(format!(
                    "checkpoint expects {} features, graph has {}",
                    params.dims().input,
                    graph.num_features()
                )));
            }
            io::save_embeddings(&trainer::embed(&graph, &params), &out.path("embeddings.bin"))?;
            out.record("embeddings.bin");
        }
        "eval" => {
            let graph = load_graph_input(sub, &mut out)?;
            let emb = io::load_embeddings(&input_file(sub, "embeddings", &mut out)?)?;
            if emb.nrows() != graph.num_nodes() {
                return Err(GradeError::Validation(format!(
                    "embedding file has {} rows, graph has {} nodes",
                    emb.nrows(),
                    graph.num_nodes()
                )));
            }
            let (_, _, report, _, _) = pipeline::evaluate(&graph, &emb, &cfg, cfg.train.seed)?;
            out.write_json("fairness.json", &report)?;
            out.write_text("plot.tsv", &report.plot_data())?;
        }
        "audit" => {
            let graph = load_graph_input(sub, &mut out)?;
            let (report, _) = pipeline::audit(&graph, &cfg, &seed_list(sub, &cfg))?;
            for r in &report.per_seed {
                out.write_json(&format!("fairness_seed{}.json", r.seed), &r.fairness)?;
                out.write_text(&format!("plot_seed{}.tsv", r.seed), &r.fairness.plot_data())?;
            }
            out.write_json("aggregate.json", &report)?;
        }
        "theory" => {
            let graph = load_graph_input(sub, &mut out)?;
            let params = io::load_checkpoint(&input_file(sub, "checkpoint", &mut out)?)?;
            let mut rng = substream(cfg.train.seed, Stream::Theory);
            let report = theory::run_theory(&graph, &params, &cfg.theory, &mut rng)?;
            out.write_json("theory.json", &report)?;
        }
        "compare" => {
            let graph = load_graph_input(sub, &mut out)?;
            let report = pipeline::compare(&graph, &cfg, &seed_list(sub, &cfg))?;
            out.write_json("compare.json", &report)?;
        }
        other => unreachable!("unregistered subcommand {other}"),
    }
    out.finish()
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        command().debug_assert();
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        assert_eq!(run(["grade", "frobnicate"]), 1);
        assert_eq!(run(["grade", "train", "--bogus", "1"]), 1);
    }
}
