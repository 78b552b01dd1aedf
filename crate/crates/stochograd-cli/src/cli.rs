//! Command-line surface.
//!
//! Subcommands: `phantom`, `reference`, `run`, `compare`, `diagnose`.
//! Flags: `--config PATH`, `--seed U64`, `--algorithm NAME`, `--subsets N`,
//! `--passes N`, `--out DIR`. Values from the config file are overridden by
//! flags. Exit codes: 0 success, 2 divergence, 64 usage error, 65 invalid
//! config.

use crate::config::{Algorithm, ExperimentConfig, ExperimentKind};
use crate::data::gen_shepp_logan;
use crate::images::{write_pgm16, write_raw_f64};
use crate::problems::{build_problem, compute_reference};
use crate::runner::{compare_experiment, resolve_steps, run_experiment, HarnessError};
use std::fs;
use std::path::Path;
use stochograd::solvers::guards;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;

const USAGE: &str = "\
usage: stochograd <subcommand> [flags]

subcommands:
  phantom    render the Shepp-Logan phantom (--size N --out DIR)
  reference  compute and store a high-accuracy reference solution
  run        run one experiment, write metrics CSV and reconstructions
  compare    run several algorithms on the same problem (config `algorithms`)
  diagnose   print L, L_max, upsilon and step-size guard verdicts

flags:
  --config PATH      JSON experiment config
  --seed U64         override the seed
  --algorithm NAME   override the algorithm
  --subsets N        override the subset count
  --passes N         override the pass budget
  --size N           phantom/image side (phantom subcommand)
  --out DIR          output directory
";

struct Flags {
    config: Option<String>,
    seed: Option<u64>,
    algorithm: Option<Algorithm>,
    subsets: Option<usize>,
    passes: Option<f64>,
    size: Option<usize>,
    out: Option<String>,
}

enum FlagError {
    Usage(String),
    Config(String),
}

fn parse_flags(args: &[String]) -> Result<Flags, FlagError> {
    let mut flags = Flags {
        config: None,
        seed: None,
        algorithm: None,
        subsets: None,
        passes: None,
        size: None,
        out: None,
    };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| -> Result<String, FlagError> {
            it.next()
                .cloned()
                .ok_or_else(|| FlagError::Usage(format!("flag {name} needs a value")))
        };
        match arg.as_str() {
            "--config" => flags.config = Some(take("--config")?),
            "--seed" => {
                let v = take("--seed")?;
                flags.seed = Some(v.parse().map_err(|_| {
                    FlagError::Config(format!("--seed expects an unsigned integer, got `{v}`"))
                })?);
            }
            "--algorithm" => {
                let v = take("--algorithm")?;
                flags.algorithm = Some(
                    Algorithm::parse(&v)
                        .ok_or_else(|| FlagError::Config(format!("unknown algorithm `{v}`")))?,
                );
            }
            "--subsets" => {
                let v = take("--subsets")?;
                flags.subsets = Some(v.parse().map_err(|_| {
                    FlagError::Config(format!("--subsets expects an integer, got `{v}`"))
                })?);
            }
            "--passes" => {
                let v = take("--passes")?;
                flags.passes = Some(v.parse().map_err(|_| {
                    FlagError::Config(format!("--passes expects a number, got `{v}`"))
                })?);
            }
            "--size" => {
                let v = take("--size")?;
                flags.size = Some(v.parse().map_err(|_| {
                    FlagError::Config(format!("--size expects an integer, got `{v}`"))
                })?);
            }
            "--out" => flags.out = Some(take("--out")?),
            other => return Err(FlagError::Usage(format!("unknown flag `{other}`"))),
        }
    }
    Ok(flags)
}

fn load_config(flags: &Flags) -> Result<ExperimentConfig, String> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::new(ExperimentKind::TridiagLs),
    };
    // flag overrides beat the config file
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(a) = flags.algorithm {
        cfg.algorithm = a;
    }
    if let Some(n) = flags.subsets {
        cfg.subsets = Some(n);
    }
    if let Some(p) = flags.passes {
        cfg.passes = p;
    }
    if let Some(o) = &flags.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = flags.size {
        cfg.problem.size = s;
    }
    Ok(cfg)
}

/// Entry point; returns the process exit code.
pub fn cli_main(args: &[String]) -> i32 {
    let (sub, rest) = match args.split_first() {
        Some((s, rest)) => (s.as_str(), rest),
        None => {
            eprintln!("{USAGE}");
            return EXIT_USAGE;
        }
    };
    if matches!(sub, "-h" | "--help" | "help") {
        println!("{USAGE}");
        return EXIT_OK;
    }
    let flags = match parse_flags(rest) {
        Ok(f) => f,
        Err(FlagError::Usage(msg)) => {
            eprintln!("{msg}\n{USAGE}");
            return EXIT_USAGE;
        }
        Err(FlagError::Config(msg)) => {
            eprintln!("{msg}");
            return EXIT_CONFIG;
        }
    };
    match sub {
        "phantom" => cmd_phantom(&flags),
        "reference" => cmd_reference(&flags),
        "run" => cmd_run(&flags),
        "compare" => cmd_compare(&flags),
        "diagnose" => cmd_diagnose(&flags),
        other => {
            eprintln!("unknown subcommand `{other}`\n{USAGE}");
            EXIT_USAGE
        }
    }
}

fn config_or_exit(flags: &Flags) -> Result<ExperimentConfig, i32> {
    load_config(flags).map_err(|msg| {
        eprintln!("invalid config: {msg}");
        EXIT_CONFIG
    })
}

fn harness_exit(e: HarnessError) -> i32 {
    eprintln!("{e}");
    match e {
        HarnessError::Config(_) => EXIT_CONFIG,
        _ => 1,
    }
}

fn cmd_phantom(flags: &Flags) -> i32 {
    let size = flags.size.unwrap_or(128);
    if size < 16 {
        eprintln!("phantom size must be at least 16");
        return EXIT_CONFIG;
    }
    let out = flags.out.clone().unwrap_or_else(|| "phantom-out".into());
    let img = gen_shepp_logan(size);
    let dir = Path::new(&out);
    if let Err(e) = fs::create_dir_all(dir) {
        eprintln!("cannot create {out}: {e}");
        return 1;
    }
    let r = write_pgm16(&dir.join("phantom.pgm"), &img, size, size)
        .and_then(|_| write_raw_f64(&dir.join("phantom"), &img));
    match r {
        Ok(()) => {
            println!("phantom {size}x{size} written to {out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("write failed: {e}");
            1
        }
    }
}

fn cmd_reference(flags: &Flags) -> i32 {
    let cfg = match config_or_exit(flags) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let built = match build_problem(&cfg) {
        Ok(b) => b,
        Err(e) => return harness_exit(HarnessError::Solver(e)),
    };
    let budget = cfg.reference_passes.unwrap_or(5000.0);
    let (x_star, phi_star) = match compute_reference(&built, budget) {
        Ok(r) => r,
        Err(e) => return harness_exit(HarnessError::Solver(e)),
    };
    println!("reference objective: {phi_star}");
    if let Some(dir) = &cfg.out {
        let dir = Path::new(dir);
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("cannot create output dir: {e}");
            return 1;
        }
        if let Err(e) = write_raw_f64(&dir.join("reference"), &x_star) {
            eprintln!("write failed: {e}");
            return 1;
        }
        let meta = format!("{{\n  \"objective\": {phi_star}\n}}\n");
        if fs::write(dir.join("reference-meta.json"), meta).is_err() {
            return 1;
        }
    }
    EXIT_OK
}

fn cmd_run(flags: &Flags) -> i32 {
    let cfg = match config_or_exit(flags) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run_experiment(&cfg) {
        Ok((out, code)) => {
            let last = out.rows.last();
            println!(
                "{} / {}: {} rows, final objective {}{}",
                cfg.experiment.name(),
                cfg.algorithm.name(),
                out.rows.len(),
                last.map(|r| r.objective).unwrap_or(f64::NAN),
                if out.trace.diverged {
                    " (diverged)"
                } else {
                    ""
                }
            );
            for w in &out.trace.warnings {
                eprintln!("warning: {w}");
            }
            code
        }
        Err(e) => harness_exit(e),
    }
}

fn cmd_compare(flags: &Flags) -> i32 {
    let cfg = match config_or_exit(flags) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match compare_experiment(&cfg) {
        Ok((outputs, code)) => {
            for (alg, out) in &outputs {
                println!(
                    "{}: final objective {}{}",
                    alg.name(),
                    out.rows.last().map(|r| r.objective).unwrap_or(f64::NAN),
                    if out.trace.diverged {
                        " (diverged)"
                    } else {
                        ""
                    }
                );
            }
            code
        }
        Err(e) => harness_exit(e),
    }
}

fn cmd_diagnose(flags: &Flags) -> i32 {
    let cfg = match config_or_exit(flags) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let built = match build_problem(&cfg) {
        Ok(b) => b,
        Err(e) => return harness_exit(HarnessError::Solver(e)),
    };
    let sm = &built.partitioned.smoothness;
    println!("experiment: {}", cfg.experiment.name());
    println!("subsets: {}", built.partitioned.n());
    println!("L = {:.6}", sm.l);
    println!("L_max = {:.6}", sm.l_max);
    println!("upsilon = {:.6}", sm.upsilon);
    match resolve_steps(&cfg, &built) {
        Ok((tau, sigma)) => {
            println!("algorithm: {}", cfg.algorithm.name());
            println!("tau = {tau:.6e}");
            if let Some(s) = sigma {
                println!("sigma = {s:.6e}");
            }
            let n = built.partitioned.n();
            match cfg.algorithm {
                Algorithm::Pgd | Algorithm::Gd | Algorithm::Fista | Algorithm::Nag => {
                    println!(
                        "guard tau < 2/L: {}",
                        verdict(guards::pgd_step_ok(tau, sm.l))
                    );
                }
                Algorithm::Spdhg => {
                    let max_sq = sm.l_i.iter().fold(0.0f64, |m, &v| m.max(v));
                    println!(
                        "guard sigma tau l max||A_i||^2 < 1: {}",
                        verdict(guards::spdhg_step_ok(sigma.unwrap_or(0.0), tau, n, max_sq))
                    );
                }
                Algorithm::Pdhg => {
                    let norm_sq = built.partitioned.full.op.norm_sq_auto();
                    println!(
                        "guard sigma tau ||A||^2 < 1: {}",
                        verdict(guards::pdhg_step_ok(sigma.unwrap_or(0.0), tau, norm_sq))
                    );
                }
                _ => {}
            }
            EXIT_OK
        }
        Err(e) => harness_exit(e),
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}
