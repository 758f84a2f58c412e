use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use p4filter::{
    load_acl, load_scenario, load_store, load_topology, report_digest, report_to_json, rules_jsonl,
    trace_jsonl, FileStore,
};
use p4filter_core::controller::{MemoryPersistence, SequenceStore};
use p4filter_core::simnet::{Network, RunInputs, TopologySpec};

#[derive(Parser)]
#[command(name = "p4filter", version, about = "Two-level SDN firewall simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        /// Topology file. Defaults to the built-in six-switch topology.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long)]
        scenario: PathBuf,
        /// ACL file. Defaults to the scenario's inline ACL.
        #[arg(long)]
        acl: Option<PathBuf>,
        /// Sequence store, read at start and rewritten on every allocation.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Controller seed. Defaults to the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the switch event log as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the final rule dump as JSON lines.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Check a topology file.
    Validate {
        #[arg(long)]
        topology: PathBuf,
    },
}

fn topology(path: Option<&PathBuf>) -> anyhow::Result<TopologySpec> {
    match path {
        Some(p) => load_topology(p),
        None => Ok(TopologySpec::default_topology()),
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Validate { topology: path } => {
            let net = Network::build(load_topology(&path)?)?;
            let spec = net.spec();
            println!(
                "ok: {} switches, {} hosts, {} links",
                spec.switches.len(),
                spec.hosts.len(),
                spec.links.len()
            );
            Ok(true)
        }
        Command::Run {
            topology: topo,
            scenario,
            acl,
            store,
            seed,
            out,
            trace,
            rules,
        } => {
            let net = Network::build(topology(topo.as_ref())?)?;
            let scenario = load_scenario(&scenario)?;
            let mut inputs = RunInputs::from_scenario(&scenario);
            if let Some(path) = acl {
                inputs.acl = load_acl(&path)?;
            }
            if let Some(seed) = seed {
                inputs.seed = seed;
            }
            match store {
                Some(path) => {
                    inputs.store = if path.exists() {
                        load_store(&path)?
                    } else {
                        SequenceStore::new()
                    };
                    inputs.persistence = Box::new(FileStore::new(path));
                }
                None => inputs.persistence = Box::new(MemoryPersistence::default()),
            }

            let report = net.run(&scenario, inputs)?;
            fs::write(&out, report_to_json(&report))
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = trace {
                fs::write(&path, trace_jsonl(&report))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = rules {
                fs::write(&path, rules_jsonl(&report))
                    .with_context(|| format!("writing {}", path.display()))?;
            }

            for (name, h) in &report.hosts {
                println!(
                    "{name}: sent {} delivered {} dropped {} punted {} consumed {} received {}",
                    h.sent, h.delivered, h.dropped, h.punted, h.consumed, h.received
                );
            }
            for e in &report.expectations {
                let mark = if e.pass { "PASS" } else { "FAIL" };
                println!(
                    "{mark} {}.{}: expected {} got {}",
                    e.host, e.field, e.expected, e.actual
                );
            }
            for note in &report.notes {
                println!("note: {note}");
            }
            println!("report {} sha256 {}", out.display(), report_digest(&report));
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
