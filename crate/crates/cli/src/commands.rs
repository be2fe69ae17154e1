//! One function per subcommand, each producing the tables it exports.

use std::path::PathBuf;

use log::{info, warn};

use qparity_core::analysis::spectroscopy::{detuning_grid, resolved_pair, DEFAULT_MIN_VISIBILITY};
use qparity_core::analysis::{
    appendix_a1_curves, choose_tau_p, fit_averages, slope_ci95, spectroscopy_map, sweep_dispersion, Estimate,
    FitResult, SweepConfig,
};
use qparity_core::montecarlo::{run_protocol, Dataset, Experiment, ParityClass, ProtocolConfig, Selection, CSV_HEADER};
use qparity_core::Error;

use crate::config::{RunConfig, SweepParams};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectroscopy,
    ParityRamsey,
    Echo,
    Sweep,
    AppendixA1,
}

pub fn spectroscopy(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let p = cfg.spectroscopy()?;
    let delta_f = detuning_grid(p.delta_f_half_width_mhz, p.delta_f_step_mhz)?;
    info!("spectroscopy: {} durations x {} detunings", p.tau_p_us.len(), delta_f.len());
    let map = spectroscopy_map(&cfg.device, &p.tau_p_us, &delta_f, p.dt_max_us)?;

    let mut grid = Table::new("spectroscopy_map", &["tau_p_us", "delta_f_mhz", "p2"]);
    let mut peaks = Table::new("spectroscopy_peaks", &["tau_p_us", "rank", "delta_f_mhz", "height"]);
    let mut summary = Table::new("spectroscopy_summary", &["tau_p_us", "peak_count", "resolved", "chosen"]);
    let choice = match choose_tau_p(&map, DEFAULT_MIN_VISIBILITY) {
        Ok(c) => {
            info!("chosen detection pulse {} us (mean peak height {:.3})", c.tau_p, c.height);
            Some(c.tau_p)
        }
        Err(Error::NotResolvable) => {
            warn!("no pulse duration in the grid resolves the parity peaks");
            None
        }
        Err(e) => return Err(e.into()),
    };
    for (i, &tau) in map.tau_p.iter().enumerate() {
        for (&df, &pop) in map.delta_f.iter().zip(map.row(i)) {
            grid.push(vec![tau.into(), df.into(), pop.into()]);
        }
        let found = map.peaks(i);
        for (rank, pk) in found.iter().enumerate() {
            peaks.push(vec![tau.into(), rank.into(), pk.frequency.into(), pk.height.into()]);
        }
        let resolved = resolved_pair(&map.delta_f, map.row(i), DEFAULT_MIN_VISIBILITY).is_some();
        summary.push(vec![tau.into(), found.len().into(), resolved.into(), (choice == Some(tau)).into()]);
    }
    Ok(vec![grid, peaks, summary])
}

pub fn shot_table(ds: &Dataset) -> Table {
    let mut t = Table::new("shots", &CSV_HEADER);
    for r in ds.records() {
        t.push(vec![
            r.delay.into(),
            r.p_i.symbol().into(),
            r.p_f.symbol().into(),
            r.class().name().into(),
            r.outcome.into(),
            r.true_flips.into(),
            r.seed_index.into(),
        ]);
    }
    t
}

const FIT_COLUMNS: [&str; 15] = [
    "selection",
    "amplitude",
    "amplitude_err",
    "t2_us",
    "t2_err_us",
    "frequency_mhz",
    "frequency_err_mhz",
    "phase_rad",
    "phase_err_rad",
    "offset",
    "offset_err",
    "residual_rms",
    "converged",
    "iterations",
    "shots",
];

fn fit_row(name: &str, f: &FitResult, shots: usize) -> Vec<Cell> {
    vec![
        name.into(),
        f.amplitude.into(),
        f.stderr.amplitude.into(),
        f.t2.into(),
        f.stderr.t2.into(),
        f.frequency.into(),
        f.stderr.frequency.into(),
        f.phase.into(),
        f.stderr.phase.into(),
        f.offset.into(),
        f.stderr.offset.into(),
        f.residual_rms.into(),
        f.converged.into(),
        f.iterations.into(),
        shots.into(),
    ]
}

pub fn parity_ramsey(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let p = cfg.parity_ramsey()?;
    let pc: ProtocolConfig = p.to_protocol(Experiment::Ramsey, cfg.seed);
    info!("parity-ramsey: {} delays x {} shots, seed {}", pc.delays.len(), pc.shots_per_delay, pc.master_seed);
    let ds = run_protocol(&pc, &cfg.device)?;

    let selections = [
        Selection::Pooled,
        Selection::Class(ParityClass::UnflippedPlus),
        Selection::Class(ParityClass::UnflippedMinus),
        Selection::Class(ParityClass::Flipped),
    ];
    let mut averages = Table::new("averages", &["delay_us", "selection", "shots", "excited", "mean", "stderr"]);
    for sel in selections {
        for a in ds.averages(sel) {
            averages.push(vec![a.delay.into(), sel.name().into(), a.shots.into(), a.excited.into(), a.mean.into(), a.stderr.into()]);
        }
    }
    let mut fits = Table::new("fits", &FIT_COLUMNS);
    for sel in &selections[..3] {
        let avgs = ds.averages(*sel);
        let shots = avgs.iter().map(|a| a.shots).sum();
        let fit = fit_averages(&avgs)?;
        info!("{}: T2* = {:.2} +- {:.2} us", sel.name(), fit.t2, fit.stderr.t2);
        fits.push(fit_row(sel.name(), &fit, shots));
    }
    Ok(vec![shot_table(&ds), averages, fits])
}

fn sweep_tables(name: &str, experiment: Experiment, p: &SweepParams, cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let sc = SweepConfig {
        device: cfg.device,
        protocol: p
            .monte_carlo
            .as_ref()
            .map(|m| m.to_protocol(experiment, cfg.seed))
            .unwrap_or_default(),
        ensemble: p.ensemble.map(|e| e.to_ensemble()).unwrap_or_default(),
    };
    info!("{name}: {} dispersion values, {:?} mode", p.delta01_mhz.len(), p.mode);
    let r = sweep_dispersion(&p.delta01_mhz, p.mode, experiment, &sc)?;

    let columns: [(&'static str, &'static str, &Vec<Option<Estimate>>); 3] = [
        ("t2_pooled_us", "t2_pooled_err_us", &r.t2_pooled),
        ("t2_sorted_us", "t2_sorted_err_us", &r.t2_sorted),
        ("t2_echo_us", "t2_echo_err_us", &r.t2_echo),
    ];
    let present: Vec<_> = columns.iter().filter(|c| c.2.iter().all(Option::is_some)).collect();
    let mut header = vec!["delta01_mhz"];
    for c in &present {
        header.extend([c.0, c.1]);
    }
    let mut table = Table::new(name, &header);
    for (i, &d) in r.delta01_values.iter().enumerate() {
        let mut row = vec![Cell::from(d)];
        for c in &present {
            let e = c.2[i].expect("column present");
            row.extend([Cell::from(e.value), Cell::from(e.stderr)]);
        }
        table.push(row);
    }

    let mut slopes = Table::new(
        format!("{name}_slope"),
        &["quantity", "slope_us_per_mhz", "stderr_us_per_mhz", "ci95_lo_us_per_mhz", "ci95_hi_us_per_mhz", "contains_zero"],
    );
    if r.delta01_values.len() >= 3 {
        for c in &present {
            let est: Vec<Estimate> = c.2.iter().map(|e| e.expect("column present")).collect();
            let ci = slope_ci95(&r.delta01_values, &est)?;
            info!("{}: slope {:.1} us/MHz, 95% CI [{:.1}, {:.1}]", c.0, ci.slope, ci.lo, ci.hi);
            slopes.push(vec![c.0.into(), ci.slope.into(), ci.stderr.into(), ci.lo.into(), ci.hi.into(), ci.contains(0.0).into()]);
        }
    } else {
        warn!("fewer than 3 sweep points; no slope interval");
    }
    Ok(vec![table, slopes])
}

pub fn sweep(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    sweep_tables("sweep", Experiment::Ramsey, cfg.sweep()?, cfg)
}

pub fn echo(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    sweep_tables("echo", Experiment::Echo, cfg.echo()?, cfg)
}

pub fn appendix_a1(cfg: &RunConfig) -> CliResult<Vec<Table>> {
    let p = cfg.appendix_a1()?;
    info!("appendix-a1: {} curves x {} points", p.delta01_mhz.len(), p.t2_ideal_us.len());
    let pts = appendix_a1_curves(&p.delta01_mhz, &p.t2_ideal_us, cfg.device.t1_us, &p.ensemble.to_ensemble())?;
    let mut t = Table::new(
        "appendix_a1",
        &["delta01_mhz", "t2_target_us", "t2_ideal_us", "t2_ideal_err_us", "t2_star_us", "t2_star_err_us"],
    );
    for a in pts {
        t.push(vec![a.delta01.into(), a.t2_target.into(), a.t2_ideal.into(), a.t2_ideal_err.into(), a.t2_star.into(), a.t2_star_err.into()]);
    }
    Ok(vec![t])
}

pub fn tables(cmd: Command, cfg: &RunConfig) -> CliResult<Vec<Table>> {
    match cmd {
        Command::Spectroscopy => spectroscopy(cfg),
        Command::ParityRamsey => parity_ramsey(cfg),
        Command::Echo => echo(cfg),
        Command::Sweep => sweep(cfg),
        Command::AppendixA1 => appendix_a1(cfg),
    }
}

/// Runs `cmd` on a pool of `workers` threads (0 = one per core) and writes
/// its tables into `cfg.output.dir`.
pub fn execute(cmd: Command, cfg: &RunConfig, workers: usize) -> CliResult<Vec<PathBuf>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config("--workers", e))?;
    let out = pool.install(|| tables(cmd, cfg))?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    out.iter().map(|t| write_logged(t, cfg)).collect()
}

fn write_logged(t: &Table, cfg: &RunConfig) -> CliResult<PathBuf> {
    let path = t.write(&cfg.output.dir, cfg.output.format)?;
    info!("wrote {}", path.display());
    Ok(path)
}

