use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use provsim_core::harness::{
    generate_trace, run_bench, run_end_to_end, BenchConfig, RunConfig, Scenario, Suite, Workload,
};
use provsim_core::event_model::{parse_trace, write_trace};
use provsim_core::motif::{match_motif, program_motif, MatchMode, ReductionOptions};
use provsim_core::policy::{check_pairing, compile, explain, parse_policy, parse_program_graph};
use provsim_core::provenance::ProvDocument;

/// Userspace simulator of cgroup-scoped kernel audit: syscall traces expand
/// into security-hook events, dispatch to attached audit programs, and feed
/// a provenance capture engine with versioning, opacity and graph reduction.
#[derive(Parser)]
#[command(name = "provsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic workload trace.
    GenTrace {
        /// fileserver | webserver | fork-tree | mixed | fig4-scenario
        #[arg(long)]
        workload: String,
        /// Number of syscall records.
        #[arg(long, default_value_t = 1000)]
        size: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output trace file (jsonl).
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace through dispatch, capture and serialization.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory for prov.jsonl, prov.json, violations.jsonl,
        /// stats.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the consolidated provenance document to this file as well.
        #[arg(long)]
        prov_out: Option<PathBuf>,
        /// Disable event merging (oracle configuration).
        #[arg(long)]
        no_merge: bool,
        /// Disable version avoidance (oracle configuration).
        #[arg(long)]
        no_version_avoidance: bool,
        /// Drop elements when the ring buffer is full instead of blocking.
        #[arg(long)]
        drop_on_full: bool,
        #[arg(long, default_value_t = 4096)]
        ring_capacity: usize,
        /// Print storage and pipeline statistics to stdout.
        #[arg(long)]
        stats: bool,
        /// Accepted for interface uniformity; replay itself is
        /// deterministic and takes no randomness.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a captured provenance document against the trace's motif.
    VerifyMotifs {
        #[arg(long)]
        trace: PathBuf,
        /// Element stream (prov.jsonl) produced by simulate.
        #[arg(long)]
        prov: PathBuf,
        /// Accept a document that is a filtered subgraph of the motif's
        /// prediction (everything captured must still be predicted).
        #[arg(long)]
        embed: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the match report to a file instead of stdout only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a JSON policy into its minimal enforcement program set.
    CompilePolicy {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output program plan (json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the hook-to-rule mapping.
        #[arg(long)]
        explain: bool,
        /// Also run the acquire/release pairing check on a program-graph
        /// DSL file; exits nonzero on violations.
        #[arg(long)]
        check_pairing: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a benchmark suite (invocation | storage | policy).
    Bench {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 30000)]
        events: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let bytes = fs::read(path).with_context(|| format!("reading scenario {}", path.display()))?;
    // inline policy_file references relative to the scenario's directory
    let mut value: serde_json::Value =
        serde_json::from_slice(&bytes).context("scenario is not valid JSON")?;
    if let Some(policies) = value.get_mut("policies").and_then(|p| p.as_array_mut()) {
        for entry in policies {
            let Some(obj) = entry.as_object_mut() else { continue };
            if let Some(file) = obj.remove("policy_file") {
                let Some(rel) = file.as_str() else {
                    bail!("policy_file must be a string path");
                };
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                let policy_path = base.join(rel);
                let policy_bytes = fs::read(&policy_path)
                    .with_context(|| format!("reading policy {}", policy_path.display()))?;
                let policy_value: serde_json::Value = serde_json::from_slice(&policy_bytes)
                    .with_context(|| format!("policy {} is not valid JSON", policy_path.display()))?;
                obj.insert("policy".to_string(), policy_value);
            }
        }
    }
    let scenario = Scenario::from_json(&serde_json::to_vec(&value)?)?;
    Ok(scenario)
}

fn read_trace(path: &Path) -> Result<Vec<provsim_core::event_model::SyscallRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
    Ok(parse_trace(BufReader::new(file))?)
}

/// Ok(true) = success, Ok(false) = expected mismatch/violation (exit 1).
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenTrace {
            workload,
            size,
            seed,
            out,
        } => {
            let workload: Workload = workload.parse()?;
            let records = generate_trace(workload, size, seed);
            let mut file = fs::File::create(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            write_trace(&mut file, &records)?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            Ok(true)
        }
        Command::Simulate {
            trace,
            scenario,
            out,
            prov_out,
            no_merge,
            no_version_avoidance,
            drop_on_full,
            ring_capacity,
            stats,
            seed: _,
        } => {
            let scenario = load_scenario(&scenario)?;
            let records = read_trace(&trace)?;
            let cfg = RunConfig {
                merge: !no_merge,
                version_avoidance: !no_version_avoidance,
                drop_on_full,
                ring_capacity,
                ..RunConfig::default()
            };
            let output = run_end_to_end(&scenario, &records, &cfg)?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                let mut stream = fs::File::create(dir.join("prov.jsonl"))?;
                for el in &output.elements {
                    writeln!(stream, "{}", serde_json::to_string(el)?)?;
                }
                fs::write(
                    dir.join("prov.json"),
                    serde_json::to_string_pretty(&output.document.to_prov_json())?,
                )?;
                let mut vlog = fs::File::create(dir.join("violations.jsonl"))?;
                for v in &output.violations {
                    writeln!(vlog, "{}", serde_json::to_string(v)?)?;
                }
                fs::write(
                    dir.join("stats.json"),
                    serde_json::to_string_pretty(&output.stats)?,
                )?;
            }
            if let Some(path) = &prov_out {
                fs::write(
                    path,
                    serde_json::to_string_pretty(&output.document.to_prov_json())?,
                )?;
            }
            if stats || out.is_none() {
                println!("{}", serde_json::to_string_pretty(&output.stats)?);
            }
            Ok(true)
        }
        Command::VerifyMotifs {
            trace,
            prov,
            embed,
            seed: _,
            out,
        } => {
            let records = read_trace(&trace)?;
            let text = fs::read_to_string(&prov)
                .with_context(|| format!("reading document {}", prov.display()))?;
            let doc = ProvDocument::from_jsonl(&text)?;
            let motif = program_motif(&records, ReductionOptions::default())?;
            let mode = if embed { MatchMode::Embed } else { MatchMode::Exact };
            let report = match_motif(&doc, &motif, mode)?;
            let mut lines = Vec::new();
            if report.matched {
                lines.push("match: the captured graph is consistent with the trace motif".to_string());
            } else {
                lines.push("MISMATCH between captured graph and trace motif:".to_string());
                for m in &report.mismatches {
                    lines.push(format!("  {m}"));
                }
            }
            let text = lines.join("\n");
            println!("{text}");
            if let Some(path) = out {
                fs::write(path, text + "\n")?;
            }
            Ok(report.matched)
        }
        Command::CompilePolicy {
            input,
            out,
            explain: want_explain,
            check_pairing: pairing_file,
            seed: _,
        } => {
            let bytes = fs::read(&input)
                .with_context(|| format!("reading policy {}", input.display()))?;
            let policy = parse_policy(&bytes)?;
            let set = compile(&policy);
            if want_explain {
                println!("{}", explain(&set));
            }
            if let Some(path) = &out {
                let plan = serde_json::json!({
                    "subject": set.table.subject_path,
                    "source_hash": set.provenance.source_hash,
                    "categories": set.provenance.options,
                    "hooks_covered": set.hooks_covered.iter().map(|h| h.name()).collect::<Vec<_>>(),
                    "programs": set.programs.iter().map(|p| serde_json::json!({
                        "id": p.id.0,
                        "hook": p.hook.name(),
                    })).collect::<Vec<_>>(),
                });
                fs::write(path, serde_json::to_string_pretty(&plan)?)?;
                eprintln!("wrote program plan to {}", path.display());
            }
            if let Some(path) = &pairing_file {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading program graph {}", path.display()))?;
                let prog = parse_program_graph(&text)?;
                let report = check_pairing(&prog)?;
                if report.is_balanced() {
                    println!("pairing: every acquisition is released on every path");
                } else {
                    println!("pairing violations:");
                    for v in &report.violations {
                        println!(
                            "  {}: path {} ({}) unmatched {}",
                            v.program, v.path_id, v.path, v.unmatched
                        );
                    }
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Command::Bench {
            suite,
            events,
            seed,
            out,
        } => {
            let suite: Suite = suite.parse()?;
            let report = run_bench(suite, &BenchConfig { events, seed });
            println!("{}", report.render());
            if let Some(path) = out {
                fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
