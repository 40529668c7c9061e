//! `feeder-topo` command-line front end.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use feeder_topo::detection::{run_stream, DetectorConfig, Mode};
use feeder_topo::grid::TopologySet;
use feeder_topo::network::{ieee33, load_network};
use feeder_topo::placement::{
    certify, greedy_place, load_placement_file, seed_placement, GramReport, PlacementSearchConfig,
};
use feeder_topo::signature::SignatureSet;
use feeder_topo::sim::{
    monte_carlo, run_scenario, samples_for, save_report_csv, MonteCarloConfig, NoiseConfig, Probe, ReportRow,
    ScenarioConfig,
};
use feeder_topo::stream::{read_stream, write_events, write_stream, write_trace};
use feeder_topo::{Execution, Grid, Placement, SignatureLibrary, SwitchStatus};

#[derive(Parser)]
#[command(
    name = "feeder-topo",
    version,
    about = "Switching-action detection from voltage phasor trends"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Ideal,
    Noisy,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Ideal => Mode::Ideal,
            ModeArg::Noisy => Mode::Noisy,
        }
    }
}

/// Detector overrides shared by several subcommands.
#[derive(clap::Args, Clone)]
struct DetectorArgs {
    /// Trend lag and confirmation length (noisy mode).
    #[arg(long)]
    tau: Option<usize>,
    /// Projection threshold.
    #[arg(long)]
    min_proj: Option<f64>,
    /// Trend-norm gate in p.u. (noisy mode); defaults to 0.0018 * sqrt(PMUs).
    #[arg(long)]
    min_norm: Option<f64>,
}

impl DetectorArgs {
    fn config(&self, mode: Mode, sensors: usize, u_n: f64) -> Result<DetectorConfig> {
        let mut cfg = match mode {
            Mode::Ideal => DetectorConfig::ideal(),
            Mode::Noisy => DetectorConfig::noisy_for_sensors(sensors),
        };
        cfg.u_n = u_n;
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(p) = self.min_proj {
            cfg.min_proj = p;
        }
        if let Some(n) = self.min_norm {
            cfg.min_norm = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the signature library of a placement and save it as JSON.
    BuildLibrary {
        /// Network CSV; the bundled IEEE 33-bus feeder when omitted.
        #[arg(long)]
        network: Option<PathBuf>,
        /// P33, P15, P7 or a placement JSON file.
        #[arg(long)]
        placement: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the detector over a measurement stream CSV.
    Detect {
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        library: PathBuf,
        /// Defaults to the library's placement.
        #[arg(long)]
        placement: Option<String>,
        /// Initial breaker status, e.g. 11101 (1 = closed).
        #[arg(long)]
        sigma0: String,
        #[arg(long, value_enum, default_value = "noisy")]
        mode: ModeArg,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Stream CSV with columns t_index,bus_id,re,im.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate the Gram-matrix observability certificate of a placement.
    CheckObservability {
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        placement: String,
        /// Certify the particular libraries instead of the full library.
        #[arg(long)]
        particular: bool,
    },
    /// Grow a placement greedily by Monte Carlo error count.
    Place {
        #[arg(long)]
        network: Option<PathBuf>,
        /// Starting placement (preset or file); `auto` for the smallest
        /// certified seed.
        #[arg(long, default_value = "auto")]
        seed_placement: String,
        #[arg(long)]
        target_size: usize,
        /// Monte Carlo runs per candidate.
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Samples per run.
        #[arg(long, default_value_t = 1000)]
        tstop: usize,
        /// Sampling frequency selecting the load variation, Hz.
        #[arg(long, default_value_t = 1.0)]
        freq: f64,
        #[arg(long, value_enum, default_value = "on")]
        noise: OnOff,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop as soon as no candidate lowers the error count.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long)]
        out: PathBuf,
        /// Audit CSV; defaults to `<out>.audit.csv`.
        #[arg(long)]
        audit: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Monte Carlo error rates; one report row per placement and frequency.
    Montecarlo {
        #[arg(long)]
        network: Option<PathBuf>,
        /// P33, P15, P7 or a placement file; repeat or comma-separate to
        /// compare placements on the same runs.
        #[arg(long, value_delimiter = ',', required = true)]
        placement: Vec<String>,
        /// Sampling frequency, Hz (1, 0.2 or 0.1); repeatable.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        freq: Vec<f64>,
        #[arg(long, value_enum, default_value = "on")]
        noise: OnOff,
        /// Defaults to noisy with noise on and ideal with noise off.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Samples per run; defaults to a 1000 s window.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
    /// Run one scripted scenario (JSON, see docs/scenario.md).
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Per-sample truth, estimate, trend norm and best score.
        #[arg(long)]
        trace_out: PathBuf,
        #[arg(long)]
        events_out: Option<PathBuf>,
        /// Measured voltages of the scenario placement, readable by `detect`.
        #[arg(long)]
        stream_out: Option<PathBuf>,
    },
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn network(path: Option<&Path>) -> Result<Grid> {
    match path {
        Some(p) => load_network(p).with_context(|| format!("loading network {}", p.display())),
        None => Ok(ieee33()),
    }
}

fn placement(grid: &Grid, spec: &str) -> Result<Placement> {
    if let Ok(p) = Placement::preset(grid, spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if path.exists() {
        return load_placement_file(grid, path).with_context(|| format!("loading placement {spec}"));
    }
    bail!("{spec:?} is neither a preset (P33, P15, P7) nor a placement file")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn status(grid: &Grid, text: &str) -> Result<SwitchStatus> {
    let s: SwitchStatus = text.parse()?;
    grid.check_admissible(&s)?;
    Ok(s)
}

fn print_gram(name: &str, lib: &SignatureLibrary, r: &GramReport) {
    println!(
        "{name}: max |G_uv| = {:.9} ({})",
        r.max,
        if r.certified() { "certified" } else { "NOT certified" }
    );
    if let Some((u, v)) = r.offending() {
        let key = |i: usize| {
            let k = lib.entries()[i].key;
            format!("S{} in context {}", k.breaker() + 1, k.context_label())
        };
        println!("  offending pair: {} / {}", key(u), key(v));
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildLibrary {
            network: net,
            placement: spec,
            out,
        } => {
            let grid = network(net.as_deref())?;
            let p = placement(&grid, &spec)?;
            let lib = SignatureSet::compute(&grid, Execution::default())?.restrict(&p)?;
            lib.save(&out)?;
            println!("{} signatures over {} buses -> {}", lib.len(), p.len(), out.display());
        }

        Command::Detect {
            network: net,
            library,
            placement: spec,
            sigma0,
            mode,
            detector,
            input,
            out,
            trace,
        } => {
            let grid = network(net.as_deref())?;
            let lib = SignatureLibrary::load(&library, &grid)
                .with_context(|| format!("loading library {}", library.display()))?;
            if let Some(spec) = spec {
                lib.validate_for(&grid, &placement(&grid, &spec)?)?;
            }
            let cfg = detector.config(mode.into(), lib.placement().len(), grid.u_n())?;
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let stream = read_stream(BufReader::new(file), lib.placement())?;
            let res = run_stream(&lib, cfg, status(&grid, &sigma0)?, &stream)?;
            write_events(create(&out)?, &res.events)?;
            if let Some(t) = trace {
                write_trace(create(&t)?, &res.trace)?;
            }
            println!(
                "{} samples, {} events -> {}",
                stream.len(),
                res.events.len(),
                out.display()
            );
        }

        Command::CheckObservability {
            network: net,
            placement: spec,
            particular,
        } => {
            let grid = network(net.as_deref())?;
            let p = placement(&grid, &spec)?;
            let set = SignatureSet::compute(&grid, Execution::default())?;
            let lib = match set.restrict(&p) {
                Ok(lib) => lib,
                Err(e) => {
                    println!("not observable: {e}");
                    return Ok(ExitCode::FAILURE);
                }
            };
            let (full, part) = certify(&grid, &set, &p)?.expect("restriction succeeded");
            let report = if particular {
                print_gram("particular libraries", &lib, &part);
                for c in part
                    .contexts
                    .iter()
                    .filter(|c| c.max >= 1.0 - feeder_topo::placement::CERT_MARGIN)
                {
                    println!("  status {}: {:.9}", c.status, c.max);
                }
                part
            } else {
                print_gram("full library", &lib, &full);
                full
            };
            if !report.certified() {
                return Ok(ExitCode::FAILURE);
            }
        }

        Command::Place {
            network: net,
            seed_placement: seed_spec,
            target_size,
            runs,
            tstop,
            freq,
            noise,
            seed,
            strict,
            detector,
            out,
            audit,
            sequential,
        } => {
            let grid = network(net.as_deref())?;
            let ex = exec(sequential);
            let topo = TopologySet::build(&grid, ex)?;
            let set = SignatureSet::from_topologies(&grid, &topo, ex)?;
            let initial = if seed_spec == "auto" {
                seed_placement(&grid, &set)?
            } else {
                placement(&grid, &seed_spec)?
            };
            println!("seed placement: {:?}", initial.bus_ids());
            let noise = match noise {
                OnOff::On => NoiseConfig::for_frequency(freq)?,
                OnOff::Off => NoiseConfig::off(),
            };
            let mut cfg = PlacementSearchConfig::new(initial, target_size, noise);
            cfg.runs = runs;
            cfg.tstop = tstop;
            cfg.seed = seed;
            cfg.strict_improvement = strict;
            cfg.tau = detector.tau.unwrap_or(cfg.tau);
            cfg.min_proj = detector.min_proj.unwrap_or(cfg.min_proj);
            cfg.min_norm = detector.min_norm;
            let res = greedy_place(&grid, &topo, &set, &cfg, ex)?;
            res.save_json(&out)?;
            let audit = audit.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".audit.csv");
                p.into()
            });
            res.write_audit_csv(create(&audit)?)?;
            println!(
                "placement {:?}{} -> {} (audit {})",
                res.bus_ids,
                if res.stopped_early { " (stopped early)" } else { "" },
                out.display(),
                audit.display()
            );
        }

        Command::Montecarlo {
            network: net,
            placement: specs,
            freq,
            noise,
            mode,
            detector,
            runs,
            seed,
            samples,
            out,
            sequential,
        } => {
            let grid = network(net.as_deref())?;
            let ex = exec(sequential);
            let topo = TopologySet::build(&grid, ex)?;
            let set = SignatureSet::from_topologies(&grid, &topo, ex)?;
            let mode = mode.map(Mode::from).unwrap_or(match noise {
                OnOff::On => Mode::Noisy,
                OnOff::Off => Mode::Ideal,
            });
            let libs = specs
                .iter()
                .map(|s| Ok(set.restrict(&placement(&grid, s)?)?))
                .collect::<Result<Vec<_>>>()?;
            let probes = libs
                .iter()
                .map(|lib| {
                    Ok(Probe {
                        library: lib,
                        config: detector.config(mode, lib.placement().len(), grid.u_n())?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let lag = probes.iter().map(|p| p.config.tau).max().unwrap_or(1);
            let mut rows = Vec::new();
            for &f in &freq {
                let noise_cfg = match noise {
                    OnOff::On => NoiseConfig::for_frequency(f)?,
                    OnOff::Off => NoiseConfig::off(),
                };
                let cfg = MonteCarloConfig {
                    noise: noise_cfg,
                    samples: samples.unwrap_or_else(|| samples_for(f)),
                    runs,
                    seed,
                    lag,
                };
                let reports = monte_carlo(&grid, &topo, &probes, &cfg, ex)?;
                for (spec, report) in specs.iter().zip(reports) {
                    let label = format!("{spec}@{f}Hz");
                    println!(
                        "{label}: {:.2}% errors (nd {}, wd {}, de {}, aborted {})",
                        report.percent_errors(),
                        report.non_detections,
                        report.wrong_detections,
                        report.decision_errors,
                        report.aborted
                    );
                    rows.push(ReportRow { label, report });
                }
            }
            save_report_csv(&rows, &out)?;
        }

        Command::Simulate {
            scenario,
            trace_out,
            events_out,
            stream_out,
        } => {
            let cfg =
                ScenarioConfig::load(&scenario).with_context(|| format!("loading scenario {}", scenario.display()))?;
            let dir = scenario.parent().unwrap_or(Path::new("."));
            let grid = network(cfg.network.as_ref().map(|p| dir.join(p)).as_deref())?;
            let sc = cfg.resolve(&grid)?;
            let topo = TopologySet::build(&grid, Execution::default())?;
            let lib = SignatureSet::from_topologies(&grid, &topo, Execution::default())?.restrict(&sc.placement)?;
            let outcome = run_scenario(&grid, &topo, &lib, &sc)?;

            let mut w = csv::Writer::from_writer(create(&trace_out)?);
            w.write_record(["sample", "truth", "estimate", "norm", "max_score", "best_breaker"])?;
            for (i, t) in outcome.trace.iter().enumerate() {
                w.write_record([
                    t.sample.to_string(),
                    outcome.truth[i].to_string(),
                    outcome.estimate[i].to_string(),
                    if t.norm.is_nan() {
                        String::new()
                    } else {
                        t.norm.to_string()
                    },
                    t.max_score.to_string(),
                    t.best_breaker.map_or_else(String::new, |b| (b + 1).to_string()),
                ])?;
            }
            w.flush()?;
            if let Some(p) = events_out {
                write_events(create(&p)?, &outcome.events)?;
            }
            if let Some(p) = stream_out {
                write_stream(create(&p)?, &sc.placement, &outcome.measured)?;
            }
            for e in &outcome.events {
                println!(
                    "sample {}: S{} {} -> {} (score {:.4})",
                    e.sample,
                    e.breaker + 1,
                    e.before,
                    e.after,
                    e.score
                );
            }
            let v = outcome.verdict;
            println!(
                "non detections {}, wrong detections {}, decision errors {}",
                v.non_detections, v.wrong_detections, v.decision_errors
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
