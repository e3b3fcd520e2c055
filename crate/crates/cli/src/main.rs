use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use shaping_core::fiber::{power_sweep, LinkConfig};
use shaping_core::matchers::{induced_moments, odd_levels, rate_loss, Mapping, Matcher, ShaperSpec};
use shaping_core::numeric::db;
use shaping_core::pas::write_frame;
use shaping_core::selection::{selected_frame, Metric, Scorer, SelectionConfig};
use shaping_lab::compare::{compare, Tolerances};
use shaping_lab::config::ExperimentConfig;
use shaping_lab::measure::{build_source, channel_frames, strategy_for, RunContext, SourceKind};
use shaping_lab::output::{write_meta, Results};
use shaping_lab::presets;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "shaping-lab", version, about = "Probabilistic shaping experiments for nonlinear fibre links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a distribution matcher and print its size, rate and moments.
    Matcher {
        #[arg(long, value_parser = ["ccdm", "ess"])]
        kind: String,
        /// Block length in amplitudes.
        #[arg(long = "D", alias = "block-len")]
        block_len: usize,
        /// Target rate in bits per amplitude.
        #[arg(long)]
        rate: f64,
        /// Amplitude levels, e.g. 1,3,5,7 (default: 8 odd levels).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u64>>,
        /// The rate includes the sign bit (bits per real dimension).
        #[arg(long)]
        with_sign: bool,
        /// Write the shaper spec as JSON.
        #[arg(long)]
        spec_out: Option<PathBuf>,
    },
    /// Simulate the link for one source over a power sweep.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// start:step:stop in dBm.
        #[arg(long, default_value = "-4:0.5:4")]
        power_sweep: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// uniform, iid, ccdm:D or ess:D.
        #[arg(long, default_value = "iid")]
        source: String,
        #[arg(long)]
        mapping: Option<Mapping>,
        /// Switch amplifier noise off.
        #[arg(long)]
        no_ase: bool,
        /// Write the centre-channel transmit frame in binary form.
        #[arg(long)]
        dump_frame: Option<PathBuf>,
        #[arg(long)]
        full: bool,
    },
    /// Energy statistics and filter shapes (no fibre simulation).
    Analyze {
        #[arg(long)]
        psd: bool,
        #[arg(long)]
        filter: bool,
        #[arg(long)]
        edi: bool,
        #[arg(long)]
        moments: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run sequence selection and log every candidate's metric.
    Select {
        #[arg(long)]
        metric: Metric,
        #[arg(long, default_value_t = 2)]
        nu: usize,
        #[arg(long, default_value_t = 16)]
        candidates: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Per-candidate CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        full: bool,
    },
    /// Run a named preset and write results.csv and meta.json.
    Run {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run a single seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Allow links beyond the desk-scale limits (hours of runtime).
        #[arg(long)]
        full: bool,
    },
    /// List the available presets.
    List,
    /// Print a config template.
    Config {
        #[arg(long, value_parser = ["scaled", "table1"], default_value = "scaled")]
        template: String,
    },
    /// Compare a run against a baseline; the exit code is 1 on failure.
    Compare {
        baseline: PathBuf,
        run: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        abs: f64,
        #[arg(long, default_value_t = 0.0)]
        rel: f64,
        /// Accept points whose confidence intervals intersect.
        #[arg(long)]
        ci_overlap: bool,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>, full: bool) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::scaled(),
    };
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.validate(full)?;
    Ok(cfg)
}

/// A link file may hold a full experiment config or a bare link.
fn load_link_or_config(path: Option<&Path>, full: bool) -> Result<ExperimentConfig> {
    let Some(p) = path else { return load_config(None, None, full) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let cfg = match serde_json::from_str::<ExperimentConfig>(&text) {
        Ok(c) => c,
        Err(e) => match serde_json::from_str::<LinkConfig>(&text) {
            Ok(link) => ExperimentConfig { link, ..ExperimentConfig::scaled() },
            Err(_) => return Err(e).with_context(|| format!("parsing {}", p.display())),
        },
    };
    cfg.validate(full)?;
    Ok(cfg)
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s.split(':').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()
        .with_context(|| format!("power sweep '{s}' must be start:step:stop"))?;
    match parts[..] {
        [p] => Ok(vec![p]),
        [start, step, stop] if step > 0.0 && stop >= start => {
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        _ => bail!("power sweep '{s}' must be start:step:stop with a positive step"),
    }
}

fn run_preset(name: &str, ctx: &RunContext, out: &Path) -> Result<()> {
    let preset = presets::find(name)?;
    let results = (preset.run)(ctx).with_context(|| format!("preset {name}"))?;
    let dir = out.join(name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    results.write_csv(&dir.join("results.csv"))?;
    write_meta(&dir.join("meta.json"), name, &ctx.cfg, &results)?;
    eprintln!("{name}: {} rows -> {}", results.rows.len(), dir.display());
    Ok(())
}

fn matcher(kind: &str, d: usize, rate: f64, levels: Option<Vec<u64>>, with_sign: bool, spec_out: Option<PathBuf>) -> Result<()> {
    let levels = levels.unwrap_or_else(|| odd_levels(8));
    if levels != odd_levels(levels.len()) {
        bail!("levels must be 1, 3, 5, ... (got {levels:?})");
    }
    let rate = if with_sign { rate - 1.0 } else { rate };
    if rate > (levels.len() as f64).log2() {
        bail!("{rate} bits per amplitude exceed log2({}) levels; pass --with-sign if the rate counts the sign bit", levels.len());
    }
    let spec = match kind {
        "ccdm" => ShaperSpec::ccdm_for_rate(levels.len(), d, rate)?,
        _ => ShaperSpec::ess_for_rate(levels.len(), d, rate)?,
    };
    let m = Matcher::new(&spec)?;
    let moments = induced_moments(&spec, Mapping::Dim1, 1, 0)?;
    println!("kind: {kind}");
    println!("block_len: {d}");
    println!("n_seq: {}", m.n_sequences());
    println!("k_in: {}", m.input_bits());
    println!("rate: {:.6}", m.rate());
    println!("rate_loss: {:.6}", rate_loss(&spec)?);
    println!("mu4: {:.6}", moments.mu4);
    println!("mu6: {:.6}", moments.mu6);
    if let Some(p) = spec_out {
        std::fs::write(&p, serde_json::to_string_pretty(&spec)? + "\n")?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: Option<PathBuf>,
    sweep: &str,
    seed: u64,
    source: &str,
    mapping: Option<Mapping>,
    no_ase: bool,
    dump_frame: Option<PathBuf>,
    full: bool,
) -> Result<()> {
    let mut cfg = load_link_or_config(config.as_deref(), full)?;
    if let Some(m) = mapping {
        cfg.shaping.mapping = m;
    }
    let mut link = cfg.link.clone();
    link.ase = !no_ase;
    let powers = parse_sweep(sweep)?;
    let kind: SourceKind = source.parse()?;
    let src = build_source(&cfg, kind)?;
    let frames = channel_frames(&cfg, &link, &src, seed)?;
    if let Some(p) = dump_frame {
        let f = std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        write_frame(&frames[link.center_channel()], std::io::BufWriter::new(f))?;
    }
    let s = power_sweep(&link, &frames, &powers, seed, cfg.cpr)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "power_dbm,snr_db,ci_lo,ci_hi")?;
    for (p, e) in s.powers_dbm.iter().zip(&s.snr) {
        writeln!(out, "{p},{},{},{}", e.db, e.ci_lo, e.ci_hi)?;
    }
    if let Some(fit) = s.fit {
        eprintln!(
            "fit: p_ase = {:e} W, eta = {:e} 1/W^2, snr_opt = {:.3} dB at {:.2} dBm",
            fit.p_ase,
            fit.eta,
            db(fit.snr_opt()),
            shaping_core::numeric::watt_to_dbm(fit.p_opt())
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn select(metric: Metric, nu: usize, candidates: usize, config: Option<PathBuf>, seed: u64, out: Option<PathBuf>, full: bool) -> Result<()> {
    let mut cfg = load_config(config.as_deref(), None, full)?;
    cfg.selection.nu = nu;
    let ctx = RunContext::new(cfg, Path::new("results"));
    let link = &ctx.cfg.link;
    let metric = presets::resolve_metric(metric, link);
    let kernel = match metric {
        Metric::Edi { .. } => None,
        _ => Some(ctx.kernel(link, false)?),
    };
    let scorer = Scorer::new(&metric, link, kernel.as_ref())?;
    let source = presets::selection_source(&ctx)?;
    let sel = SelectionConfig {
        strategy: strategy_for(&source, nu),
        candidates,
        metric,
        block_symbols: ctx.cfg.selection.block_symbols,
        seed,
    };
    let frame = selected_frame(&source, link.n_pols(), &sel, &scorer, ctx.cfg.n_symbols, seed)?;
    let sink: Box<dyn Write> = match &out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["block", "candidate", "metric", "selected"])?;
    for (b, (scores, &chosen)) in frame.scores.iter().zip(&frame.indices).enumerate() {
        for (c, s) in scores.iter().enumerate() {
            w.write_record([b.to_string(), c.to_string(), s.to_string(), (c == chosen).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SHAPING_LAB_THREADS") {
        let n: usize = v.parse().with_context(|| format!("SHAPING_LAB_THREADS='{v}' is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Matcher { kind, block_len, rate, levels, with_sign, spec_out } => {
            matcher(&kind, block_len, rate, levels, with_sign, spec_out).map(|_| true)
        }
        Command::Simulate { config, power_sweep, seed, source, mapping, no_ase, dump_frame, full } => {
            simulate(config, &power_sweep, seed, &source, mapping, no_ase, dump_frame, full).map(|_| true)
        }
        Command::Analyze { psd, filter, edi, moments, config, seed, out } => (|| {
            let cfg = load_config(config.as_deref(), seed, false)?;
            let ctx = RunContext::new(cfg, &out);
            let chosen: Vec<&str> = [(psd, "psd-ccdm"), (psd, "psd-ess"), (filter, "filter-response"), (edi, "edi-vs-length"), (moments, "rate-loss")]
                .iter()
                .filter(|(on, _)| *on)
                .map(|(_, n)| *n)
                .collect();
            if chosen.is_empty() {
                bail!("pick at least one of --psd, --filter, --edi, --moments");
            }
            for name in chosen {
                run_preset(name, &ctx, &out)?;
            }
            Ok(true)
        })(),
        Command::Select { metric, nu, candidates, config, seed, out, full } => {
            select(metric, nu, candidates, config, seed, out, full).map(|_| true)
        }
        Command::Run { preset, config, seed, out, full } => (|| {
            let cfg = load_config(config.as_deref(), seed, full)?;
            let ctx = RunContext::new(cfg, &out);
            run_preset(&preset, &ctx, &out)?;
            Ok(true)
        })(),
        Command::List => {
            for p in presets::PRESETS {
                println!("{:<16} {}", p.name, p.about);
            }
            Ok(true)
        }
        Command::Config { template } => (|| {
            let cfg = if template == "table1" { ExperimentConfig::table1() } else { ExperimentConfig::scaled() };
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(true)
        })(),
        Command::Compare { baseline, run, abs, rel, ci_overlap, json } => (|| {
            let report = compare(&Results::read_csv(&baseline)?, &Results::read_csv(&run)?, Tolerances { abs, rel, ci_overlap })?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                for s in &report.series {
                    println!(
                        "{} {}/{}: {} points, max deviation {:.3e}, {} outside tolerance",
                        if s.pass { "PASS" } else { "FAIL" },
                        s.preset,
                        s.series,
                        s.points,
                        s.max_deviation,
                        s.failures
                    );
                }
            }
            Ok(report.pass)
        })(),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
