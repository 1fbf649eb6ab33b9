//! `cpm`: run channel profile monitoring experiments from scenario files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use cpm_core::config::{Override, ScenarioConfig, SweepAxis};
use cpm_core::detector::calibrate_threshold_with;
use cpm_core::harness::{run_calibration, run_scenario_with, sweep, RunOptions, RunReport};
use cpm_core::trace::{self, SummaryRow};
use cpm_core::{iq, mic};

const MANIFEST: &str = "manifest.toml";
const EFFECTIVE_CONFIG: &str = "config.effective.toml";

#[derive(Parser)]
#[command(name = "cpm", version, about = "Channel profile monitoring experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record a reference set and derive the threshold.
    Calibrate(Common),
    /// Calibrate (unless detector.e_th is set) and evaluate one scenario.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the receive buffer of packet K as interleaved f32 IQ.
        #[arg(long, value_name = "K")]
        dump_iq: Option<u64>,
    },
    /// Evaluate a grid of axis values times seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// d_be, snr_db, temporal_rho or e_th; defaults to [sweep].axis.
        #[arg(long)]
        axis: Option<SweepAxis>,
        /// Comma-separated axis values; defaults to [sweep].values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated seeds; defaults to [sweep].seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Print the MIC overhead table.
    Table,
    /// Run the co-located and the separated setup and print both drop-rate pairs.
    Demo(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Without it the defaults with seed 0 are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a config key, e.g. `--set geometry.d_be=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replaces the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self, preset: &[&str]) -> Result<ScenarioConfig> {
        let mut overrides = preset
            .iter()
            .map(|s| Override::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        for s in &self.overrides {
            overrides.push(Override::parse(s).with_context(|| format!("bad --set `{s}`"))?);
        }
        if let Some(seed) = self.seed {
            overrides.push(Override::parse(&format!("seed={seed}"))?);
        }
        let config = match &self.config {
            Some(path) => cpm_core::parse_config(path, &overrides)?,
            None => ScenarioConfig::from_toml_with_overrides("seed = 0\n", &overrides)?,
        };
        Ok(config)
    }
}

/// Collects the files of one output directory for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn create_file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn write_config(&mut self, config: &ScenarioConfig) -> Result<()> {
        let text = config.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).context("effective config does not re-parse")?;
        ensure!(&back == config, "effective config does not round-trip");
        let path = self.path(EFFECTIVE_CONFIG);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Writes the manifest last so that it lists every other file.
    fn finish(mut self, command: &str, seed: Option<u64>, sections: toml::Table) -> Result<()> {
        let mut m = toml::Table::new();
        m.insert("tool".into(), "cpm".into());
        m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        m.insert("command".into(), command.into());
        if let Some(seed) = seed {
            m.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        m.extend(sections);
        self.files.push(MANIFEST.to_string());
        let files = self.files.iter().map(|f| toml::Value::from(f.as_str())).collect();
        m.insert("files".into(), toml::Value::Array(files));
        let path = self.dir.join(MANIFEST);
        fs::write(&path, toml::to_string(&m)?).with_context(|| format!("cannot write {}", path.display()))?;
        for f in &self.files {
            ensure!(self.dir.join(f).is_file(), "output {f} missing after write");
        }
        Ok(())
    }
}

fn table(pairs: &[(&str, toml::Value)]) -> toml::Table {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn calibrate(common: &Common) -> Result<()> {
    let config = common.load(&[])?;
    let mut out = Outputs::create(&common.out)?;
    let cal = run_calibration(&config)?;
    let e_th = calibrate_threshold_with(&cal.refset, config.detector.threshold_rule)?;

    trace::write_reference_csv(out.create_file("reference.csv")?, &cal.refset)?;
    let back = trace::read_reference_csv(File::open(common.out.join("reference.csv"))?)?;
    ensure!(
        back.e_ab_ref.len() == cal.refset.e_ab_ref.len(),
        "reference.csv did not read back"
    );
    out.write_config(&config)?;

    println!(
        "e_th = {e_th}  mean_e_ab = {}  mean_e_ae = {}  pairs = {}  sync_failures = {}",
        cal.refset.mean_ab(),
        cal.refset.mean_ae(),
        cal.refset.e_ab_ref.len(),
        cal.sync_failures
    );
    let section = table(&[
        ("e_th", e_th.into()),
        ("mean_e_ab", cal.refset.mean_ab().into()),
        ("mean_e_ae", cal.refset.mean_ae().into()),
        ("pairs", (cal.refset.e_ab_ref.len() as i64).into()),
        ("sync_failures", (cal.sync_failures as i64).into()),
    ]);
    out.finish(
        "calibrate",
        Some(config.seed),
        table(&[("calibration", section.into())]),
    )
}

/// Writes and reads back the traces of one run; the manifest is left to the caller.
fn write_run(dir: &Path, config: &ScenarioConfig, report: &RunReport) -> Result<Outputs> {
    let mut out = Outputs::create(dir)?;
    trace::write_packet_csv(out.create_file("packets.csv")?, &report.records)?;
    let back = trace::read_packet_csv(File::open(dir.join("packets.csv"))?)?;
    ensure!(back.len() == report.records.len(), "packets.csv did not read back");

    let summary = [SummaryRow {
        axis_value: None,
        seed: config.seed,
        bob_drop_rate: report.bob_drop_rate,
        eve_drop_rate: report.eve_drop_rate,
        e_th: report.e_th_used,
    }];
    trace::write_summary_csv(out.create_file("summary.csv")?, &summary)?;
    ensure!(
        trace::read_summary_csv(File::open(dir.join("summary.csv"))?)?.len() == 1,
        "summary.csv did not read back"
    );
    out.write_config(config)?;
    Ok(out)
}

fn run_sections(report: &RunReport) -> toml::Table {
    let mut sections = toml::Table::new();
    sections.insert(
        "results".into(),
        table(&[
            ("e_th", report.e_th_used.into()),
            ("bob_drop_rate", report.bob_drop_rate.into()),
            ("eve_drop_rate", report.eve_drop_rate.into()),
            ("bob_packets", (report.bob_packets as i64).into()),
            ("eve_packets", (report.eve_packets as i64).into()),
            ("bob_sync_failures", (report.bob_sync_failures as i64).into()),
            ("eve_sync_failures", (report.eve_sync_failures as i64).into()),
        ])
        .into(),
    );
    if let Some(cal) = &report.calibration {
        sections.insert(
            "calibration".into(),
            table(&[
                ("mean_e_ab", cal.mean_e_ab.into()),
                ("mean_e_ae", cal.mean_e_ae.into()),
                ("pairs", (cal.pairs as i64).into()),
                ("sync_failures", (cal.sync_failures as i64).into()),
            ])
            .into(),
        );
    }
    sections
}

fn print_report(label: &str, config: &ScenarioConfig, report: &RunReport) {
    println!(
        "{label:<12} d_be = {:.3} m  e_th = {:.6}  bob_drop_rate = {:.2}%  eve_drop_rate = {:.2}%  sync_failures = {}/{}",
        config.geometry.d_be,
        report.e_th_used,
        100.0 * report.bob_drop_rate,
        100.0 * report.eve_drop_rate,
        report.bob_sync_failures,
        report.eve_sync_failures,
    );
}

fn run(common: &Common, dump_iq: Option<u64>) -> Result<()> {
    let config = common.load(&[])?;
    if let Some(k) = dump_iq {
        ensure!(
            (1..=config.num_packets as u64).contains(&k),
            "--dump-iq {k} is outside 1..={}",
            config.num_packets
        );
    }
    let report = run_scenario_with(
        &config,
        RunOptions {
            capture_packet: dump_iq,
        },
    )?;
    let mut out = write_run(&common.out, &config, &report)?;
    if let (Some(k), Some(buffer)) = (dump_iq, &report.captured) {
        let name = format!("packet_{k}.iq");
        iq::write_iq_file(&out.path(&name), buffer)?;
    }
    print_report("run", &config, &report);
    out.finish("run", Some(config.seed), run_sections(&report))
}

fn run_sweep(
    common: &Common,
    axis: Option<SweepAxis>,
    values: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
) -> Result<()> {
    let config = common.load(&[])?;
    let spec = config.sweep.as_ref();
    let Some(axis) = axis.or(spec.map(|s| s.axis)) else {
        bail!("no sweep axis: pass --axis or add a [sweep] table");
    };
    let Some(values) = values.or(spec.map(|s| s.values.clone())) else {
        bail!("no sweep values: pass --values or add a [sweep] table");
    };
    let seeds = seeds
        .or(spec.map(|s| s.seeds.clone()))
        .unwrap_or_else(|| (1..=10).collect());
    let result = sweep(&config, axis, &values, &seeds)?;

    let mut out = Outputs::create(&common.out)?;
    let rows: Vec<SummaryRow> = result
        .rows
        .iter()
        .map(|r| SummaryRow {
            axis_value: Some(r.axis_value),
            seed: r.seed,
            bob_drop_rate: r.bob_drop_rate,
            eve_drop_rate: r.eve_drop_rate,
            e_th: r.e_th,
        })
        .collect();
    trace::write_summary_csv(out.create_file("summary.csv")?, &rows)?;
    ensure!(
        trace::read_summary_csv(File::open(common.out.join("summary.csv"))?)?.len() == rows.len(),
        "summary.csv did not read back"
    );
    trace::write_aggregate_csv(out.create_file("aggregate.csv")?, &result.aggregates)?;
    out.write_config(&config)?;

    println!(
        "{:>12}  {:>5}  {:>17}  {:>17}",
        axis.name(),
        "cells",
        "bob_drop_rate",
        "eve_drop_rate"
    );
    for a in &result.aggregates {
        println!(
            "{:>12}  {:>5}  {:>8.4} ± {:<6.4}  {:>8.4} ± {:<6.4}",
            a.axis_value, a.cells, a.bob_mean, a.bob_std, a.eve_mean, a.eve_std
        );
    }
    let failed: Vec<_> = result
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| (r, e)))
        .collect();
    for (r, e) in &failed {
        eprintln!(
            "warning: cell {} = {}, seed {} failed: {e}",
            axis.name(),
            r.axis_value,
            r.seed
        );
    }
    let section = table(&[
        ("axis", axis.name().into()),
        ("values", toml::Value::Array(values.iter().map(|&v| v.into()).collect())),
        (
            "seeds",
            toml::Value::Array(seeds.iter().map(|&s| (s as i64).into()).collect()),
        ),
        ("failed_cells", (failed.len() as i64).into()),
    ]);
    out.finish("sweep", None, table(&[("sweep", section.into())]))
}

fn demo(common: &Common) -> Result<()> {
    // One reference set, recorded with Eve 10 cm from Bob, serves both setups.
    let setups = [
        ("co-located", ["geometry.d_be=0.0", "detector.calibration_d_be=0.10"]),
        ("separated", ["geometry.d_be=0.10", "detector.calibration_d_be=0.10"]),
    ];
    let mut top = Outputs::create(&common.out)?;
    let mut sections = toml::Table::new();
    for (label, preset) in setups {
        let config = common.load(&preset)?;
        let report = run_scenario_with(&config, RunOptions::default())?;
        print_report(label, &config, &report);
        let out = write_run(&common.out.join(label), &config, &report)?;
        out.finish("run", Some(config.seed), run_sections(&report))?;
        top.files.push(format!("{label}/{MANIFEST}"));
        sections.insert(
            label.into(),
            table(&[
                ("bob_drop_rate", report.bob_drop_rate.into()),
                ("eve_drop_rate", report.eve_drop_rate.into()),
                ("e_th", report.e_th_used.into()),
            ])
            .into(),
        );
    }
    top.finish("demo", None, sections)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(common) => calibrate(&common),
        Command::Run { common, dump_iq } => run(&common, dump_iq),
        Command::Sweep {
            common,
            axis,
            values,
            seeds,
        } => run_sweep(&common, axis, values, seeds),
        Command::Table => {
            print!("{}", mic::format_overhead_table());
            Ok(())
        }
        Command::Demo(common) => demo(&common),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
