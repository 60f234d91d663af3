use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use kanva::verify::checker::MAX_EVENTS;
use kanva::verify::history::parse_history;
use kanva::verify::{check_linearizable, CheckOutcome};
use kanva::IndexConfig;
use kanva_harness::dataset::{generate_dataset, DatasetSpec, Source};
use kanva_harness::suite;
use kanva_harness::workload::{prefill_keys, run_workload, Mix, Preset, Stop, WorkloadSpec};

#[derive(Parser)]
#[command(name = "kanva", version, about = "Benchmark and verify the kanva learned index")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one workload and emit a CSV row.
    Bench(BenchArgs),
    /// Run the acceptance property suites.
    Verify {
        /// Run only these criteria (e.g. `--only 1 --only 5`).
        #[arg(long)]
        only: Vec<u32>,
    },
    /// Check a recorded history log for linearizability.
    Replay {
        log: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Keys loaded before timing; defaults to half the dataset.
    #[arg(long)]
    prefill: Option<usize>,
    #[arg(long, conflicts_with = "duration")]
    ops: Option<u64>,
    /// Seconds of timed work.
    #[arg(long)]
    duration: Option<f64>,
    /// read-heavy, update-heavy, ycsb-a, ycsb-b, ycsb-c or custom (needs --mix).
    #[arg(long, default_value = "read-heavy")]
    workload: String,
    /// search,insert,delete fractions.
    #[arg(long)]
    mix: Option<Mix>,
    #[arg(long, default_value_t = 1.0)]
    hotspot: f64,
    #[arg(long, default_value_t = 0.0)]
    range_frac: f64,
    #[arg(long, default_value_t = 100)]
    range_width: u64,
    /// uniform, normal, lognormal or file:PATH.
    #[arg(long, default_value = "uniform")]
    dataset: Source,
    #[arg(long, default_value_t = 1_000_000)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = IndexConfig::default().olb_threshold)]
    olb_threshold: usize,
    #[arg(long, default_value_t = IndexConfig::default().tlb_threshold)]
    tlb_threshold: usize,
    #[arg(long, default_value_t = IndexConfig::default().fanout)]
    fanout: usize,
    #[arg(long, default_value_t = IndexConfig::default().eps)]
    eps: f64,
    /// Append the CSV to this file instead of stdout (header written when the
    /// file is new or empty).
    #[arg(long)]
    out: Option<PathBuf>,
}

const CSV_HEADER: &str = "dataset,size,workload,threads,prefill,search_frac,insert_frac,delete_frac,hotspot,range_frac,range_width,seed,olb_threshold,tlb_threshold,fanout,eps,ops,searches,ranges,inserts,deletes,elapsed_s,mops";

fn bench(a: BenchArgs) -> Result<(), String> {
    let keys = generate_dataset(&DatasetSpec {
        source: a.dataset.clone(),
        size: a.size,
        seed: a.seed,
    })
    .map_err(|e| e.to_string())?;
    let stop = match (a.ops, a.duration) {
        (Some(n), _) => Stop::Ops(n),
        (None, Some(s)) if s > 0.0 => Stop::Duration(Duration::from_secs_f64(s)),
        (None, Some(_)) => return Err("--duration must be positive".into()),
        (None, None) => Stop::Ops(1_000_000),
    };
    let prefill = a.prefill.unwrap_or(keys.len() / 2);
    let mut spec = if a.workload == "custom" {
        let mix = a.mix.ok_or("--workload custom needs --mix s,i,d")?;
        let mut s = WorkloadSpec::preset(Preset::ReadHeavy, a.threads, prefill, stop, a.seed);
        s.mix = mix;
        s
    } else {
        let p: Preset = a.workload.parse().map_err(|e: kanva_harness::workload::SpecError| e.to_string())?;
        let mut s = WorkloadSpec::preset(p, a.threads, prefill, stop, a.seed);
        if let Some(m) = a.mix {
            s.mix = m;
        }
        s
    };
    spec.hotspot = a.hotspot;
    spec.range_frac = a.range_frac;
    spec.range_width = a.range_width;
    spec.validate(keys.len()).map_err(|e| e.to_string())?;
    let config = IndexConfig {
        olb_threshold: a.olb_threshold,
        tlb_threshold: a.tlb_threshold,
        fanout: a.fanout,
        eps: a.eps,
        log_transitions: false,
    };
    let loaded = prefill_keys(&keys, spec.prefill, spec.seed);
    let pairs: Vec<_> = loaded.iter().map(|&k| (k, k)).collect();
    let index = kanva::KanvaIndex::build(&pairs, config).map_err(|e| e.to_string())?;
    let pool = if spec.updates_only { &loaded } else { &keys };
    let r = run_workload(&index, pool, &spec);

    let dataset = match &a.dataset {
        Source::Uniform { .. } => "uniform".to_string(),
        Source::Normal { .. } => "normal".to_string(),
        Source::Lognormal { .. } => "lognormal".to_string(),
        Source::File(p) => format!("file:{}", p.display()),
    };
    let c = r.counts;
    let row = format!(
        "{dataset},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.4}",
        keys.len(),
        a.workload,
        spec.threads,
        spec.prefill,
        spec.mix.search,
        spec.mix.insert,
        spec.mix.delete,
        spec.hotspot,
        spec.range_frac,
        spec.range_width,
        spec.seed,
        config.olb_threshold,
        config.tlb_threshold,
        config.fanout,
        config.eps,
        c.total(),
        c.search,
        c.range,
        c.insert,
        c.delete,
        r.elapsed.as_secs_f64(),
        r.mops()
    );
    match a.out {
        Some(path) => {
            let fresh = fs::metadata(&path).map_or(true, |m| m.len() == 0);
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            if fresh {
                writeln!(f, "{CSV_HEADER}").map_err(|e| e.to_string())?;
            }
            writeln!(f, "{row}").map_err(|e| e.to_string())?;
        }
        None => println!("{CSV_HEADER}\n{row}"),
    }
    Ok(())
}

fn replay(path: PathBuf) -> ExitCode {
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let history = match parse_history(&text) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    if history.len() > MAX_EVENTS {
        eprintln!("{}: {} events, at most {MAX_EVENTS} supported", path.display(), history.len());
        return ExitCode::from(2);
    }
    match check_linearizable(&history) {
        CheckOutcome::Linearizable { witness } => {
            println!("linearizable; witness order:");
            for i in witness {
                println!("  {}", history[i]);
            }
            ExitCode::SUCCESS
        }
        CheckOutcome::Violation { prefix, blocked } => {
            println!("NOT linearizable; longest legal prefix:");
            for &i in &prefix {
                println!("  {}", history[i]);
            }
            println!("no pending operation can follow it:");
            for &i in &blocked {
                println!("  {}", history[i]);
            }
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Bench(a) => match bench(a) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}\n\nRun `kanva bench --help` for usage.");
                ExitCode::from(2)
            }
        },
        Cmd::Verify { only } => {
            let outcomes = suite::run_all(&only, |o| println!("{o}"));
            if suite::all_passed(&outcomes) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::Replay { log } => replay(log),
    }
}
