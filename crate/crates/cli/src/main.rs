//! `rps`: run scenario files through the simulator and write CSV artifacts.

mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use output::{Artifacts, Cell};
use rps_core::correlator::HistogramSpec;
use rps_core::photostream::{io, TimeTagStream};
use rps_core::pipeline;
use rps_core::scenario::{parse_scenario, Scenario, StreamFormat};
use rps_core::{Error, Result};
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "rps", version, about = "Raman single-photon source simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manifest populations and emission rate over one cyclic period.
    Populations(Common),
    /// Arrival-time histogram of detected photons and its exponential tail.
    Wavepacket(Common),
    /// Raman rate against IR intensity.
    ScanRate(Common),
    /// Quantum-jump click stream of one source on detector 0.
    Trajectories(Common),
    /// Correlate one (auto) or two (cross) time-tag streams.
    Correlate(CorrelateArgs),
    /// Intensity correlation behind a 50/50 beam splitter.
    Hbt(Common),
    /// Two-source interference: g2 for distinguishable and overlapping photons.
    Hom(Common),
    /// First-order coherence, envelope and beat.
    G1(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (default: the scenario's outputs.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides simulation.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Stream file format (streams only).
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Clone)]
struct CorrelateArgs {
    /// Stream files, CSV or binary; one or two streams in total.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Supplies bin width and range when given.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recorded in the manifest; correlation itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Bin width without a scenario, ns.
    #[arg(long, default_value_t = 25.0)]
    bin_ns: f64,
    /// Half range without a scenario, ns (default 2.5 periods).
    #[arg(long)]
    range_ns: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("rps: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rps: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_VALIDATION })
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("RPS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("RPS_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

struct Loaded {
    sc: Scenario,
    seed: u64,
    out: PathBuf,
    formats: Vec<StreamFormat>,
}

fn load(c: &Common) -> Result<Loaded> {
    let sc = read_scenario(&c.scenario)?;
    Ok(Loaded {
        seed: c.seed.unwrap_or(sc.simulation.seed),
        out: c.out.clone().unwrap_or_else(|| PathBuf::from(&sc.outputs.directory)),
        formats: formats(c.format, &sc.outputs.formats),
        sc,
    })
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(path).map_err(|e| match e {
        Error::Io(io) => Error::Invalid(format!("{}: {io}", path.display())),
        e => e,
    })
}

fn formats(flag: Option<Format>, scenario: &[StreamFormat]) -> Vec<StreamFormat> {
    match flag {
        Some(Format::Csv) => vec![StreamFormat::Csv],
        Some(Format::Binary) => vec![StreamFormat::Binary],
        None => scenario.to_vec(),
    }
}

fn run(cmd: Command) -> Result<()> {
    let started = Instant::now();
    let (name, seed, digest, mut art, results) = match cmd {
        Command::Correlate(a) => {
            let (digest, art, results) = correlate(&a)?;
            ("correlate", a.seed, digest, art, results)
        }
        other => {
            let (name, c) = match &other {
                Command::Populations(c) => ("populations", c),
                Command::Wavepacket(c) => ("wavepacket", c),
                Command::ScanRate(c) => ("scan-rate", c),
                Command::Trajectories(c) => ("trajectories", c),
                Command::Hbt(c) => ("hbt", c),
                Command::Hom(c) => ("hom", c),
                Command::G1(c) => ("g1", c),
                Command::Correlate(_) => unreachable!(),
            };
            let l = load(c)?;
            let mut art = Artifacts::new(&l.out, &l.sc.digest)?;
            let results = match other {
                Command::Populations(_) => populations(&l, &mut art)?,
                Command::Wavepacket(_) => wavepacket(&l, &mut art)?,
                Command::ScanRate(_) => scan_rate(&l, &mut art)?,
                Command::Trajectories(_) => trajectories(&l, &mut art)?,
                Command::Hbt(_) => hbt(&l, &mut art)?,
                Command::Hom(_) => hom(&l, &mut art)?,
                Command::G1(_) => g1(&l, &mut art)?,
                Command::Correlate(_) => unreachable!(),
            };
            (name, Some(l.seed), l.sc.digest.clone(), art, results)
        }
    };
    let mut files = art.names();
    files.push("run_manifest.json".into());
    let manifest = json!({
        "subcommand": name,
        "scenario_digest": digest,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "files": files,
        "results": results,
    });
    art.manifest(&manifest)?;
    art.commit();
    Ok(())
}

fn populations(l: &Loaded, art: &mut Artifacts) -> Result<Value> {
    let p = pipeline::populations(&l.sc)?;
    let rows = p.run.trace.samples.iter().map(|s| {
        vec![Cell::F(s.t), Cell::F(s.s), Cell::F(s.p), Cell::F(s.d), Cell::F(s.emission_rate)]
    });
    art.table("populations.csv", &["t_ns", "s", "p", "d", "emission_rate"], rows)?;
    Ok(json!({
        "prepared_d": p.prepared,
        "emission_probability": p.emission_probability,
        "fixed_point_iterations": p.run.iterations,
        "fixed_point_change": p.run.last_change,
    }))
}

fn wavepacket(l: &Loaded, art: &mut Artifacts) -> Result<Value> {
    let w = pipeline::wavepacket(&l.sc, l.seed)?;
    let e = &w.estimate;
    let rows = e.tau.iter().zip(&e.rate).map(|(t, r)| vec![Cell::F(*t), Cell::F(*r)]);
    art.table("wavepacket.csv", &["tau_ns", "rate"], rows)?;
    Ok(json!({
        "clicks": w.clicks,
        "t1_ns": w.fit.t1,
        "t1_stderr_ns": w.fit.t1_stderr,
        "gamma_per_ns": w.fit.gamma,
        "fit_window_ns": [w.fit.window.0, w.fit.window.1],
        "mode": "monte_carlo",
    }))
}

fn scan_rate(l: &Loaded, art: &mut Artifacts) -> Result<Value> {
    let s = pipeline::scan_rate(&l.sc)?;
    let rows = s
        .points
        .iter()
        .map(|p| vec![Cell::F(p.intensity_rel), Cell::F(p.fit.gamma), Cell::F(p.fit.gamma_stderr)]);
    art.table("scan.csv", &["intensity_rel", "gamma_per_ns", "stderr"], rows)?;
    let points: Vec<Value> = s
        .points
        .iter()
        .map(|p| json!({"ir_scale": p.ir_scale, "intensity_rel": p.intensity_rel, "t1_ns": p.fit.t1}))
        .collect();
    Ok(json!({
        "points": points,
        "slope_per_ns": s.linearity.slope,
        "r_squared": s.linearity.r_squared,
        "weak_points": s.weak_points,
        "weak_r_squared": s.weak_linearity.r_squared,
    }))
}

fn trajectories(l: &Loaded, art: &mut Artifacts) -> Result<Value> {
    let t = pipeline::trajectories(&l.sc, l.seed)?;
    art.streams("stream", &[&t.stream], &l.formats)?;
    Ok(json!({
        "sequences": l.sc.simulation.n_sequences,
        "emission_events": t.events.len(),
        "clicks": t.stream.len(),
    }))
}

fn hbt(l: &Loaded, art: &mut Artifacts) -> Result<Value> {
    let h = pipeline::hbt(&l.sc, l.seed)?;
    art.histogram("hbt.csv", &h.histogram)?;
    art.streams("streams", &[&h.streams[0], &h.streams[1]], &l.formats)?;
    let first_side = h
        .side_peaks
        .iter()
        .filter(|p| p.tau > 0.0)
        .min_by(|a, b| a.tau.total_cmp(&b.tau))
        .map(|p| p.counts);
    let sides: Vec<Value> = h.side_peaks.iter().map(|p| json!({"tau_ns": p.tau, "counts": p.counts})).collect();
    Ok(json!({
        "central_counts": h.central.counts,
        "central_expected": h.central_expected,
        "accidentals_per_sequence": {
            "signal_dark": h.accidentals.signal_dark,
            "dark_dark": h.accidentals.dark_dark,
            "doubles": h.accidentals.doubles,
        },
        "first_side_peak_counts": first_side,
        "side_peaks": sides,
        "off_peak_counts": h.off_peak,
        "peak_half_width_ns": h.peak_half_width,
        "dark_rates_per_ns": h.dark_rates,
        "mode": h.mode.name(),
    }))
}

fn g1_table(art: &mut Artifacts, g: &rps_core::correlator::G1Summary) -> Result<()> {
    let rows = g
        .tau
        .iter()
        .zip(&g.g1)
        .map(|(t, v)| vec![Cell::F(*t), Cell::F(v.re), Cell::F(v.im), Cell::F(v.norm())]);
    art.table("g1.csv", &["tau_ns", "re", "im", "abs"], rows)
}

fn g1_results(g: &rps_core::correlator::G1Summary) -> Value {
    json!({
        "t2_ns": g.t2,
        "t2_stderr_ns": g.t2_stderr,
        "envelope_decay_ns": g.envelope.t1,
        "beat_mhz": g.beat_mhz,
        "fft_bin_mhz": g.fft_bin_mhz,
    })
}

fn hom(l: &Loaded, art: &mut Artifacts) -> Result<Value> {
    let h = pipeline::hom(&l.sc, l.seed)?;
    for (name, m) in [("g2_ni.csv", &h.g2_ni), ("g2_int.csv", &h.g2_int)] {
        let rows = (0..m.tau.len())
            .map(|i| vec![Cell::F(m.tau[i]), Cell::F(m.counts[i]), Cell::F(m.norm[i]), Cell::F(m.err[i])]);
        art.table(name, &["tau_ns", "counts", "norm", "err"], rows)?;
    }
    g1_table(art, &h.g1)?;
    let budget = |b: &rps_core::correlator::Budget| {
        json!({
            "total_ni": b.total_ni,
            "total_int": b.total_int,
            "signal_dark_fraction_ni": b.signal_dark_fraction_ni,
            "dark_dark_fraction_ni": b.dark_dark_fraction_ni,
            "doubles_fraction_ni": b.doubles_fraction_ni,
            "signal_dark_fraction_int": b.signal_dark_fraction_int,
            "dark_dark_fraction_int": b.dark_dark_fraction_int,
            "doubles_fraction_int": b.doubles_fraction_int,
        })
    };
    Ok(json!({
        "contrast": h.contrast,
        "pure_contrast": h.pure_contrast,
        "contrast_half_width_ns": h.half_width,
        "t1_ns": h.t1.t1,
        "t1_stderr_ns": h.t1.t1_stderr,
        "g1": g1_results(&h.g1),
        "budget_distinguishable": budget(&h.budget_ni),
        "budget_overlapping": budget(&h.budget_int),
        "dark_rates_per_ns": h.dark_rates,
        "mode": h.mode.name(),
    }))
}

fn g1(l: &Loaded, art: &mut Artifacts) -> Result<Value> {
    let c = pipeline::g1(&l.sc)?;
    g1_table(art, &c.g1)?;
    let mut v = g1_results(&c.g1);
    v["t1_ns"] = json!(c.t1.t1);
    v["t1_stderr_ns"] = json!(c.t1.t1_stderr);
    v["expected_beat_mhz"] = json!(c.expected_beat_mhz);
    Ok(v)
}

fn read_streams(path: &Path) -> Result<Vec<TimeTagStream>> {
    let mut f = BufReader::new(File::open(path)?);
    let mut head = [0u8; 8];
    let n = f.get_mut().read(&mut head)?;
    let mut f = BufReader::new(File::open(path)?);
    if n == 8 && &head == b"RPSTAG01" {
        Ok(vec![io::read_binary(&mut f)?])
    } else {
        io::read_csv(f)
    }
}

fn correlate(a: &CorrelateArgs) -> Result<(String, Artifacts, Value)> {
    let sc = a.scenario.as_deref().map(read_scenario).transpose()?;
    let mut streams = Vec::new();
    for p in &a.input {
        streams.extend(read_streams(p)?);
    }
    if streams.is_empty() || streams.len() > 2 {
        return Err(Error::Invalid(format!(
            "correlate needs one or two streams, got {}",
            streams.len()
        )));
    }
    let period = streams[0].meta.repetition_period;
    let spec = match &sc {
        Some(sc) => HistogramSpec::centered(sc.analysis.bin, sc.analysis.histogram_range),
        None => HistogramSpec::centered(a.bin_ns, a.range_ns.unwrap_or(2.5 * period)),
    };
    let digest = match &sc {
        Some(sc) => sc.digest.clone(),
        None => streams[0].meta.digest.clone(),
    };
    let out = a
        .out
        .clone()
        .or_else(|| sc.as_ref().map(|s| PathBuf::from(&s.outputs.directory)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let h = pipeline::correlate(&streams, spec)?;
    let mut art = Artifacts::new(&out, &digest)?;
    art.histogram("histogram.csv", &h)?;
    let results = json!({
        "streams": streams.len(),
        "records": streams.iter().map(|s| s.len()).collect::<Vec<_>>(),
        "bins": h.counts.len(),
        "total_counts": h.counts.iter().sum::<u64>(),
    });
    Ok((digest, art, results))
}
