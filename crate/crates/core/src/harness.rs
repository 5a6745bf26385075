//! Command implementations behind the CLI. Each command reads only the
//! resolved config, writes its files into one output directory and embeds
//! the config in its result document, so any run can be replayed.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::RngCore;
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibration::calibrate;
use crate::config::ExperimentConfig;
use crate::eit::{store_qubit, MemoryResult, PerModeEfficiency, Waveform};
use crate::error::{invalid, Error, Result};
use crate::optim::{optimize, scan};
use crate::quantum::{fidelity, DensityMatrix2, QubitKet};
use crate::stats::{coherent_fidelity_threshold, stream_rng, write_count_records, CoherentSource};
use crate::tomography::{
    fidelity_with_error, reconstruct, reconstruct_background_subtracted, simulate_tomography, FidelityEstimate,
    ReconstructionResult, TomographyRecord,
};

/// Name of the config file every command writes next to its outputs.
pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    ScanOam,
    Scan,
    Tomography,
    Threshold,
    Optimize,
    Calibrate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ScanOam => "scan-oam",
            Command::Scan => "scan",
            Command::Tomography => "tomography",
            Command::Threshold => "threshold",
            Command::Optimize => "optimize",
            Command::Calibrate => "calibrate",
        }
    }

    /// File holding the command's result document.
    pub fn result_file(self) -> &'static str {
        match self {
            Command::Simulate => "memory_result.json",
            Command::ScanOam => "scan_oam.json",
            Command::Scan => "scan.json",
            Command::Tomography => "tomography.json",
            Command::Threshold => "threshold.json",
            Command::Optimize => "best.json",
            Command::Calibrate => "calibration.json",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Command::Simulate,
            Command::ScanOam,
            Command::Scan,
            Command::Tomography,
            Command::Threshold,
            Command::Optimize,
            Command::Calibrate,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown command {s:?}")))
    }
}

/// Process exit status for an error: 2 config, 3 numeric, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Json(_) => 2,
        Error::Quadrature(_)
        | Error::Stability(_)
        | Error::NonFinite { .. }
        | Error::Degenerate(_)
        | Error::CountOverflow(_)
        | Error::NothingRetrieved(_) => 3,
        Error::Io(_) | Error::Csv(_) => 4,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Quadrature(_) => "quadrature",
        Error::Stability(_) => "stability",
        Error::NonFinite { .. } => "non_finite",
        Error::Degenerate(_) => "degenerate",
        Error::CountOverflow(_) => "count_overflow",
        Error::NothingRetrieved(_) => "nothing_retrieved",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

/// Machine-readable error document.
pub fn error_json(e: &Error) -> Value {
    json!({
        "error": error_kind(e),
        "message": e.to_string(),
        "exit_code": exit_code(e),
    })
}

/// Runs `cmd` and returns the files written, in order.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut w = Outputs {
        dir: out.to_path_buf(),
        written: Vec::new(),
    };
    w.json(RESOLVED_CONFIG, cfg)?;
    let body = match cmd {
        Command::Simulate => simulate(cfg, &mut w)?,
        Command::ScanOam => scan_oam(cfg, &mut w)?,
        Command::Scan => scan_param(cfg, &mut w)?,
        Command::Tomography => tomography(cfg, &mut w)?,
        Command::Threshold => threshold(cfg, &mut w)?,
        Command::Optimize => optimize_cmd(cfg, &mut w)?,
        Command::Calibrate => calibrate_cmd(cfg, &mut w)?,
    };
    let doc = json!({
        "command": cmd.as_str(),
        "config": cfg,
        "result": body,
    });
    w.json(cmd.result_file(), &doc)?;
    Ok(w.written)
}

/// Reads a result document and re-runs its command from the embedded
/// config.
pub fn replay(result_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let doc: Value = serde_json::from_str(&fs::read_to_string(result_path)?)?;
    let cmd: Command = doc
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Config(format!("{}: no command field", result_path.display())))?
        .parse()?;
    let cfg = ExperimentConfig::from_value(
        doc.get("config")
            .cloned()
            .ok_or_else(|| Error::Config(format!("{}: no config field", result_path.display())))?,
    )?;
    run_command(cmd, &cfg, out)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    /// CSV with an explicit header row, so empty tables still carry one.
    fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut wtr = csv::Writer::from_path(self.path(name))?;
        wtr.write_record(header)?;
        for row in rows {
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x:?}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Independent seed number `stream` derived from the base seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).next_u64()
}

fn waveform_rows(w: &Waveform) -> Vec<Vec<String>> {
    w.samples
        .iter()
        .enumerate()
        .map(|(k, s)| vec![num(w.time(k)), num(s.re), num(s.im), num(s.norm_sqr())])
        .collect()
}

/// Expected detector counts per gate-width bin of the exit waveform,
/// accumulated over `time_s` of pulses at the source repetition rate.
fn histogram_rows(res: &MemoryResult, cfg: &ExperimentConfig, time_s: f64) -> Vec<Vec<String>> {
    let w = &res.exit_waveform;
    let gate = cfg.detector.gate_width;
    if w.is_empty() || !(res.input_energy > 0.0) {
        return Vec::new();
    }
    let n_bins = ((w.t_end() - w.t0) / gate).floor() as usize + 1;
    let mut energy = vec![0.0; n_bins];
    for (k, s) in w.samples.iter().enumerate() {
        let bin = (((w.time(k) - w.t0) / gate).floor() as usize).min(n_bins - 1);
        energy[bin] += s.norm_sqr() * w.dt;
    }
    let src = &cfg.source;
    let photons = time_s * src.rep_rate * src.nbar * cfg.detector.efficiency;
    let background = cfg.detector.background_rate * time_s * src.rep_rate * gate * 1e-9;
    energy
        .iter()
        .enumerate()
        .map(|(b, e)| {
            let signal = photons * e / res.input_energy;
            let start = w.t0 + b as f64 * gate;
            vec![
                num(start),
                num(start + gate),
                num(signal),
                num(background),
                num(signal + background),
            ]
        })
        .collect()
}

fn simulate(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<Value> {
    let setup = cfg.setup();
    let od = setup.od()?;
    let res = setup.run()?;
    let header = ["t_ns", "re", "im", "intensity"];
    w.csv("retrieved_waveform.csv", &header, waveform_rows(&res.retrieved_waveform))?;
    w.csv("exit_waveform.csv", &header, waveform_rows(&res.exit_waveform))?;
    w.csv(
        "histogram.csv",
        &["t_start_ns", "t_end_ns", "signal_counts", "background_counts", "expected_counts"],
        histogram_rows(&res, cfg, cfg.simulate.histogram_time_s),
    )?;
    if !res.snapshots.is_empty() {
        let rows = res.snapshots.iter().flat_map(|snap| {
            snap.field
                .iter()
                .enumerate()
                .map(move |(z, f)| vec![num(snap.t_ns), z.to_string(), num(f.re), num(f.im)])
        });
        w.csv("snapshots.csv", &["t_ns", "z_index", "re", "im"], rows)?;
    }
    Ok(json!({ "od": od, "memory": res, "balance_error": res.balance_error() }))
}

fn scan_oam(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<Value> {
    let mut base = cfg.setup();
    base.od_override = None;
    let values: Vec<f64> = (0..=cfg.scan.l_max).map(f64::from).collect();
    let points = scan(&base, "l", &values)?;
    let rows = points
        .iter()
        .map(|p| vec![(p.value as u32).to_string(), opt_num(p.od), opt_num(p.se), p.error.clone().unwrap_or_default()]);
    w.csv("scan_oam.csv", &["l", "od_eff", "se", "error"], rows)?;
    Ok(serde_json::to_value(&points)?)
}

fn scan_param(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<Value> {
    let points = scan(&cfg.setup(), &cfg.scan.param, &cfg.scan.values)?;
    let rows = points
        .iter()
        .map(|p| vec![num(p.value), opt_num(p.od), opt_num(p.se), p.error.clone().unwrap_or_default()]);
    w.csv("scan.csv", &["value", "od", "se", "error"], rows)?;
    Ok(json!({ "param": cfg.scan.param, "points": points }))
}

/// Per-mode efficiencies and the conditional output state of the memory.
#[derive(Clone, Debug, Serialize)]
pub struct StoredQubit {
    pub eta_g: f64,
    pub eta_r: f64,
    pub overall_efficiency: f64,
    #[serde(skip)]
    pub output: QubitKet,
}

pub fn store_configured_qubit(cfg: &ExperimentConfig) -> Result<StoredQubit> {
    let mut base = cfg.setup();
    base.od_override = None;
    let eta = |l: u32| base.with_param("l", f64::from(l))?.se();
    let eta_g = eta(cfg.qubit.l_g)?;
    let eta_r = if cfg.qubit.l_r == cfg.qubit.l_g {
        eta_g
    } else {
        eta(cfg.qubit.l_r)?
    };
    let per_mode = PerModeEfficiency {
        eta_g,
        eta_r,
        dphi: cfg.qubit.dphi,
    };
    let (output, overall_efficiency) = store_qubit(&cfg.qubit.ket()?, &per_mode)?;
    Ok(StoredQubit {
        eta_g,
        eta_r,
        overall_efficiency,
        output,
    })
}

/// One measured and reconstructed tomography run.
#[derive(Clone, Debug)]
pub struct TomographyRun {
    pub record: TomographyRecord,
    pub result: ReconstructionResult,
    pub failed_resamples: usize,
}

/// Tomography of the configured qubit at `source`, after the memory when
/// `stored`; fidelity is against the input state.
pub fn tomography_run(
    cfg: &ExperimentConfig,
    stored: Option<&StoredQubit>,
    source: &CoherentSource,
    seed: u64,
) -> Result<TomographyRun> {
    let input = cfg.qubit.ket()?.density();
    let (state, throughput): (DensityMatrix2, f64) = match stored {
        Some(s) => (s.output.density(), s.overall_efficiency),
        None => (input, 1.0),
    };
    let t = &cfg.tomography;
    let record = simulate_tomography(&state, throughput, source, &cfg.detector, t.collection_time_s, sub_seed(seed, 0))?;
    let est = fidelity_with_error(&record, &input, t.resamples, sub_seed(seed, 1))?;
    // bootstrap spread always comes from the raw counts
    let (rec, est) = if t.background_subtraction {
        let r = reconstruct_background_subtracted(&record, cfg.detector.background_rate)?;
        let f = fidelity(&input, &r.rho)?;
        (r, FidelityEstimate { fidelity: f, ..est })
    } else {
        (reconstruct(&record)?, est)
    };
    Ok(TomographyRun {
        result: ReconstructionResult::new(&rec, &est),
        record,
        failed_resamples: est.failed_resamples,
    })
}

fn tomography(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<Value> {
    let stored = if cfg.tomography.stored {
        Some(store_configured_qubit(cfg)?)
    } else {
        None
    };
    let main = tomography_run(cfg, stored.as_ref(), &cfg.source, sub_seed(cfg.seed, 0))?;
    let mut buf = Vec::new();
    write_count_records(&mut buf, main.record.records())?;
    fs::write(w.path("counts.csv"), buf)?;

    let mut scan_rows = Vec::new();
    for (k, &nbar) in cfg.tomography.nbar_scan.iter().enumerate() {
        let source = CoherentSource { nbar, ..cfg.source };
        let run = tomography_run(cfg, stored.as_ref(), &source, sub_seed(cfg.seed, 1 + k as u64))?;
        let threshold = coherent_fidelity_threshold(nbar)?;
        scan_rows.push(json!({
            "nbar": nbar,
            "threshold": threshold,
            "fidelity": run.result.fidelity,
            "fidelity_sigma": run.result.fidelity_sigma,
        }));
    }
    if !cfg.tomography.nbar_scan.is_empty() {
        let rows = scan_rows.iter().map(|r| {
            ["nbar", "threshold", "fidelity", "fidelity_sigma"]
                .iter()
                .map(|k| num(r[*k].as_f64().unwrap_or(f64::NAN)))
                .collect()
        });
        w.csv("tomography_scan.csv", &["nbar", "threshold", "fidelity", "fidelity_sigma"], rows)?;
    }
    Ok(json!({
        "input_stokes": cfg.qubit.ket()?.stokes().as_array(),
        "storage": stored,
        "reconstruction": main.result,
        "failed_resamples": main.failed_resamples,
        "counts": main.record.records(),
        "nbar_scan": scan_rows,
    }))
}

fn threshold(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<Value> {
    let values = cfg
        .threshold
        .nbar
        .iter()
        .map(|&n| Ok((n, coherent_fidelity_threshold(n)?)))
        .collect::<Result<Vec<_>>>()?;
    w.csv(
        "threshold.csv",
        &["nbar", "f_coh"],
        values.iter().map(|(n, f)| vec![num(*n), num(*f)]),
    )?;
    Ok(json!(values.iter().map(|(n, f)| json!({"nbar": n, "f_coh": f})).collect::<Vec<_>>()))
}

fn optimize_cmd(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<Value> {
    let base = cfg.setup();
    let opt = optimize(&base, &cfg.optimize.spec, cfg.seed, cfg.optimize.coarse_search)?;
    let full_gaussian_se = opt.best_setup.full_reference().se()?;
    let mut header = vec!["eval_index".to_string()];
    header.extend(opt.names.iter().cloned());
    header.extend(["se".to_string(), "best_so_far".to_string()]);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = opt.trace.entries.iter().map(|e| {
        let mut row = vec![e.eval_index.to_string()];
        row.extend(e.params.iter().map(|p| num(*p)));
        row.push(num(e.value));
        row.push(num(e.best_so_far));
        row
    });
    w.csv("trace.csv", &header_refs, rows)?;
    let mut best_cfg = cfg.clone();
    best_cfg.set_setup(&opt.best_setup);
    w.json("best_config.json", &best_cfg)?;
    Ok(json!({
        "names": opt.names,
        "best_params": opt.best_params,
        "best_se_search": opt.best_se,
        "best_se": opt.best_se_full,
        "full_gaussian_se": full_gaussian_se,
        "gain_over_full_gaussian": opt.best_se_full - full_gaussian_se,
        "converged": opt.converged,
        "evaluations": opt.trace.entries.len(),
    }))
}

fn calibrate_cmd(cfg: &ExperimentConfig, w: &mut Outputs) -> Result<Value> {
    let res = calibrate(&cfg.setup(), &cfg.calibrate, cfg.seed)?;
    let mut calibrated = cfg.clone();
    calibrated.set_setup(&res.setup);
    w.json("calibrated_config.json", &calibrated)?;
    w.csv(
        "calibration_scan.csv",
        &["l", "od_eff", "se"],
        res.se_by_l.iter().map(|(l, od, se)| vec![l.to_string(), num(*od), num(*se)]),
    )?;
    let names: Vec<&str> = cfg.calibrate.bounds.iter().map(|b| b.name.as_str()).collect();
    let mut header = vec!["eval_index"];
    header.extend(names.iter().copied());
    header.extend(["objective", "best_so_far"]);
    let rows = res.trace.entries.iter().map(|e| {
        let mut row = vec![e.eval_index.to_string()];
        row.extend(e.params.iter().map(|p| num(*p)));
        row.push(num(e.value));
        row.push(num(e.best_so_far));
        row
    });
    w.csv("calibration_trace.csv", &header, rows)?;
    if !res.strictly_decreasing {
        log::warn!("calibrated SE is not strictly decreasing in l");
    }
    Ok(serde_json::to_value(&res)?)
}

/// Parses a comma-separated list of numbers; an empty string gives an
/// empty list.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<f64>().map_err(|_| invalid(format!("{x:?} is not a number"))))
        .collect()
}
