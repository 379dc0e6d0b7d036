use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use log::{info, warn};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use spinsqz_core::estimators::{
    circle_fit, echo_area, fit_spin_spectrum, fit_t1, fit_t2, resonator_rates, BackgroundModel, ComplexSpectrum,
    DecaySeries, FitResult, ResidualKind, ResonatorRates, SpinSpectrumMap,
};
use spinsqz_core::experiments::{
    efficiency_map, predict_squeezing, spectrum_map, AxisScale, ReferenceRow, Scenario, ScenarioTag,
    SqueezingReferenceTable,
};
use spinsqz_core::hybrid::{variance_from_db, CovarianceState};
use spinsqz_core::spin::{resonance_field, spin_levels, transition_frequency, LevelDiagram, SpinState, Transition};
use spinsqz_core::synth;
use spinsqz_core::tomography::{
    moments, planck_fit, read_iq_binary, read_iq_csv, reconstruct_gaussian, write_iq_binary, write_iq_csv,
    PlanckCalibration, IQ_MAGIC,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::provenance::Provenance;
use crate::table::{fmt_f64, num_row, write_csv, write_file, write_json, Table};
use crate::{Cli, Command, FitKind, Format, SpinKind, SynthKind};

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    threads: Option<usize>,
    format: Format,
    gnuplot: bool,
}

/// Files touched by one command, recorded in its provenance.
struct Run {
    prov: Provenance,
    stem: String,
}

impl Run {
    fn new(ctx: &Ctx, stem: &str, command: String) -> Self {
        Self {
            prov: Provenance::new(command, &ctx.cfg.canonical_json(), ctx.cfg.seed),
            stem: stem.to_string(),
        }
    }

    fn input(&mut self, p: &Path) {
        self.prov.inputs.push(p.display().to_string());
    }

    fn output(&mut self, ctx: &Ctx, name: &str) -> PathBuf {
        self.prov.outputs.push(name.to_string());
        ctx.out.join(name)
    }

    fn finish(self, ctx: &Ctx) -> CliResult<()> {
        self.prov.write(&ctx.out, &self.stem)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads == Some(0) {
        return Err(CliError::validation("--threads must be >= 1"));
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let mut ctx = Ctx {
        cfg,
        out: cli.out,
        threads: cli.threads,
        format: cli.format,
        gnuplot: cli.gnuplot,
    };
    match cli.command {
        Command::Spectrum { probe, detuning } => {
            if let Some(p) = probe {
                ctx.cfg.spectrum.probe = p;
            }
            if let Some(d) = detuning {
                ctx.cfg.spectrum.detuning = d;
            }
            ctx.cfg.validate()?;
            cmd_spectrum(&ctx)
        }
        Command::Efficiency { x, y } => {
            if let Some(x) = x {
                ctx.cfg.efficiency.x = x;
            }
            if let Some(y) = y {
                ctx.cfg.efficiency.y = y;
            }
            ctx.cfg.validate()?;
            cmd_efficiency(&ctx)
        }
        Command::Predict { reference, scenario } => {
            if reference.is_some() {
                ctx.cfg.io.reference = reference;
            }
            cmd_predict(&ctx, scenario.as_deref())
        }
        Command::Fit { kind } => cmd_fit(&mut ctx, kind),
        Command::Tomo { input, calibration } => {
            if input.is_some() {
                ctx.cfg.io.input = input;
            }
            if calibration.is_some() {
                ctx.cfg.io.calibration = calibration;
            }
            cmd_tomo(&ctx)
        }
        Command::Calibrate {
            input,
            freq,
            path_loss_db,
        } => {
            if input.is_some() {
                ctx.cfg.io.input = input;
            }
            cmd_calibrate(&ctx, freq, path_loss_db)
        }
        Command::Spin { kind } => cmd_spin(&ctx, kind),
        Command::Synth { kind } => cmd_synth(&ctx, kind),
    }
}

fn require(path: &Option<PathBuf>, what: &str, flag: &str) -> CliResult<PathBuf> {
    path.clone()
        .ok_or_else(|| CliError::validation(format!("{what} is required ({flag} or io in the config)")))
}

fn write_table(
    ctx: &Ctx,
    run: &mut Run,
    stem: &str,
    header: &[&str],
    rows: Vec<Vec<String>>,
    json_value: impl Serialize,
) -> CliResult<PathBuf> {
    match ctx.format {
        Format::Csv => {
            let path = run.output(ctx, &format!("{stem}.csv"));
            write_csv(&path, header, rows)?;
            Ok(path)
        }
        Format::Json => {
            let path = run.output(ctx, &format!("{stem}.json"));
            write_json(&path, &json_value)?;
            Ok(path)
        }
    }
}

fn write_gnuplot(ctx: &Ctx, run: &mut Run, stem: &str, script: String) -> CliResult<()> {
    if !ctx.gnuplot {
        return Ok(());
    }
    if ctx.format != Format::Csv {
        warn!("gnuplot scripts read the CSV output; skipped for --format json");
        return Ok(());
    }
    let path = run.output(ctx, &format!("{stem}.gp"));
    write_file(&path, script.as_bytes())
}

fn cmd_spectrum(ctx: &Ctx) -> CliResult<()> {
    let grid = ctx.cfg.spectrum;
    let mut run = Run::new(ctx, "spectrum", "spectrum".into());
    let map = spectrum_map(&ctx.cfg.params, &grid.probe, &grid.detuning)?;
    let mut rows = Vec::with_capacity(map.magnitude.len());
    for (i, &d) in map.spin_detunings.iter().enumerate() {
        for (&p, &m) in map.probe_detunings.iter().zip(map.row(i)) {
            rows.push(num_row(&[p, d, m]));
        }
    }
    write_table(
        ctx,
        &mut run,
        "spectrum",
        &["probe_detuning_hz", "spin_detuning_hz", "abs_s11"],
        rows,
        &map,
    )?;
    let sidecar = run.output(ctx, "spectrum.params.json");
    write_json(
        &sidecar,
        &json!({ "params": ctx.cfg.params, "probe": grid.probe, "detuning": grid.detuning }),
    )?;
    write_gnuplot(
        ctx,
        &mut run,
        "spectrum",
        "set datafile separator ','\n\
         set xlabel 'probe detuning (MHz)'\n\
         set ylabel 'spin-resonator detuning (MHz)'\n\
         set cblabel '|S11|'\n\
         plot 'spectrum.csv' skip 1 using ($1/1e6):($2/1e6):3 with image notitle\n"
            .into(),
    )?;
    info!(
        "spectrum: {} x {} grid",
        map.spin_detunings.len(),
        map.probe_detunings.len()
    );
    run.finish(ctx)
}

fn cmd_efficiency(ctx: &Ctx) -> CliResult<()> {
    let (x, y) = (ctx.cfg.efficiency.x, ctx.cfg.efficiency.y);
    let mut run = Run::new(ctx, "efficiency", "efficiency".into());
    let map = efficiency_map(&ctx.cfg.params, &x, &y, ctx.threads)?;
    let mut rows = Vec::with_capacity(map.values.len());
    for (iy, &yv) in map.y_values.iter().enumerate() {
        for (ix, &xv) in map.x_values.iter().enumerate() {
            rows.push(num_row(&[xv, yv, map.get(ix, iy)]));
        }
    }
    let (xn, yn) = (x.name.as_str(), y.name.as_str());
    write_table(ctx, &mut run, "efficiency", &[xn, yn, "efficiency"], rows, &map)?;
    let at = map.params_at_max;
    let summary = json!({
        "x_axis": map.x_axis,
        "y_axis": map.y_axis,
        "argmax_index": map.argmax_index,
        "argmax": { xn: map.argmax.0, yn: map.argmax.1 },
        "efficiency_at_max": map.efficiency_at_max,
        "cooperativity_at_max": map.cooperativity_at_max,
        "impedance_bound_at_max": at.kappa_ext / at.kappa(),
        "matched_g_eff_at_max": (at.gamma_s * at.kappa()).sqrt(),
        "params_at_max": at,
    });
    let path = run.output(ctx, "efficiency.summary.json");
    write_json(&path, &summary)?;
    let log_axes: String = [(x.scale, "x"), (y.scale, "y")]
        .iter()
        .filter(|(s, _)| *s == AxisScale::Log)
        .map(|(_, a)| format!("set logscale {a}\n"))
        .collect();
    write_gnuplot(
        ctx,
        &mut run,
        "efficiency",
        format!(
            "set datafile separator ','\n{log_axes}set xlabel '{xn} (Hz)'\nset ylabel '{yn} (Hz)'\nset cblabel '|t|^2'\n\
             set view map\nsplot 'efficiency.csv' skip 1 using 1:2:3 with points pointtype 5 palette notitle\n"
        ),
    )?;
    println!(
        "max efficiency {} at {xn} = {}, {yn} = {} (C = {})",
        fmt_f64(map.efficiency_at_max),
        fmt_f64(map.argmax.0),
        fmt_f64(map.argmax.1),
        fmt_f64(map.cooperativity_at_max)
    );
    run.finish(ctx)
}

fn scenarios(ctx: &Ctx, flag: Option<&str>) -> CliResult<Vec<Scenario>> {
    let with_config = |tag: ScenarioTag| match ctx.cfg.scenario {
        Some(s) if s.tag == tag => s,
        _ => Scenario::new(tag),
    };
    match flag.map(str::trim) {
        None => Ok(match ctx.cfg.scenario {
            Some(s) => vec![s],
            None => ScenarioTag::ALL.iter().map(|&t| Scenario::new(t)).collect(),
        }),
        Some("all") => Ok(ScenarioTag::ALL.iter().map(|&t| with_config(t)).collect()),
        Some(s) => Ok(vec![with_config(s.parse::<ScenarioTag>()?)]),
    }
}

fn cmd_predict(ctx: &Ctx, scenario_flag: Option<&str>) -> CliResult<()> {
    let reference = require(&ctx.cfg.io.reference, "a reference table", "--reference")?;
    let scen = scenarios(ctx, scenario_flag)?;
    let command = format!("predict --scenario {}", scenario_flag.unwrap_or("config"));
    let mut run = Run::new(ctx, "predictions", command);
    run.input(&reference);
    let t = Table::read(&reference, &["pump_power", "sigma_sq", "sigma_as"], &[])?;
    let rows: Vec<ReferenceRow> = (0..t.rows())
        .map(|i| ReferenceRow {
            pump_power: t.col("pump_power")[i],
            sigma_sq: t.col("sigma_sq")[i],
            sigma_as: t.col("sigma_as")[i],
        })
        .collect();
    let table = SqueezingReferenceTable::new(rows)?;
    let mut preds = Vec::new();
    for s in &scen {
        preds.extend(predict_squeezing(&table, &ctx.cfg.params, s)?);
    }
    let rows = preds
        .iter()
        .map(|p| {
            let mut r = vec![p.scenario.to_string()];
            r.extend(num_row(&[
                p.pump_power,
                p.sigma_sq,
                p.sigma_as,
                p.squeezing_db,
                p.anti_squeezing_db,
            ]));
            r
        })
        .collect();
    write_table(
        ctx,
        &mut run,
        "predictions",
        &[
            "scenario",
            "pump_power",
            "sigma_sq",
            "sigma_as",
            "squeezing_db",
            "anti_squeezing_db",
        ],
        rows,
        &preds,
    )?;
    println!("{} predictions over {} scenario(s)", preds.len(), scen.len());
    run.finish(ctx)
}

#[derive(Serialize)]
struct Failure<'a> {
    converged: bool,
    error: &'a str,
}

fn cmd_fit(ctx: &mut Ctx, kind: FitKind) -> CliResult<()> {
    let (name, input) = match &kind {
        FitKind::Circle { input } => ("circle", input),
        FitKind::Spins { input, .. } => ("spins", input),
        FitKind::T1 { input } => ("t1", input),
        FitKind::T2 { input } => ("t2", input),
        FitKind::Echo { input } => ("echo", input),
    };
    if input.is_some() {
        ctx.cfg.io.input = input.clone();
    }
    let input = require(&ctx.cfg.io.input, "an input file", "--input")?;
    let ctx = &*ctx;
    let mut command = format!("fit {name}");
    if let FitKind::Spins { rates, magnitude, .. } = &kind {
        if let Some(r) = rates {
            command.push_str(&format!(" --rates {r}"));
        }
        if *magnitude {
            command.push_str(" --magnitude");
        }
    }
    let mut run = Run::new(ctx, &format!("fit_{name}"), command);
    run.input(&input);
    let path = run.output(ctx, &format!("fit_{name}.json"));

    let outcome = match kind {
        FitKind::Circle { .. } => fit_circle(&input),
        FitKind::Spins { rates, magnitude, .. } => fit_spins(ctx, &input, rates.as_deref(), magnitude),
        FitKind::T1 { .. } => fit_decay(&input, true),
        FitKind::T2 { .. } => fit_decay(&input, false),
        FitKind::Echo { .. } => fit_echo(&input),
    };
    match outcome {
        Ok((value, fit)) => {
            write_json(&path, &value)?;
            run.finish(ctx)?;
            for p in &fit.parameters {
                let u = p.uncertainty.map_or("n/a".to_string(), fmt_f64);
                println!("{} = {} ± {}", p.name, fmt_f64(p.value), u);
            }
            if fit.converged {
                Ok(())
            } else {
                Err(CliError::NotConverged(fit.notes.join("; ")))
            }
        }
        Err(e @ CliError::NotConverged(_)) => {
            let msg = e.to_string();
            write_json(
                &path,
                &Failure {
                    converged: false,
                    error: &msg,
                },
            )?;
            run.finish(ctx)?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn rates_json(r: &ResonatorRates) -> serde_json::Value {
    json!({ "f_r": r.f_r, "kappa": r.kappa, "kappa_ext": r.kappa_ext, "kappa_int": r.kappa_int() })
}

fn fit_circle(input: &Path) -> CliResult<(serde_json::Value, FitResult)> {
    let t = Table::read(input, &["freq", "re", "im"], &[])?;
    let values = t
        .col("re")
        .into_iter()
        .zip(t.col("im"))
        .map(|(a, b)| Complex64::new(a, b))
        .collect();
    let spec = ComplexSpectrum::new(t.col("freq"), values)?;
    let (bg, fit) = circle_fit(&spec)?;
    let rates = resonator_rates(&bg)?;
    Ok((
        json!({ "background": bg, "rates": rates_json(&rates), "fit": fit }),
        fit,
    ))
}

fn parse_rates(s: &str) -> CliResult<ResonatorRates> {
    let v: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::validation(format!("--rates: `{s}` is not f_r:kappa:kappa_ext")))?;
    let [f_r, kappa, kappa_ext] = v[..] else {
        return Err(CliError::validation(format!(
            "--rates: `{s}` is not f_r:kappa:kappa_ext"
        )));
    };
    Ok(ResonatorRates { f_r, kappa, kappa_ext })
}

/// Rows must form a full grid, row-major by detuning.
fn spin_map_from_table(input: &Path, t: &Table) -> CliResult<SpinSpectrumMap> {
    let (det, freq, re, im) = (t.col("detuning"), t.col("freq"), t.col("re"), t.col("im"));
    let mut detunings: Vec<f64> = Vec::new();
    for &d in &det {
        if detunings.last() != Some(&d) {
            detunings.push(d);
        }
    }
    let nf = det.iter().take_while(|&&d| d == det[0]).count();
    let probe: Vec<f64> = freq[..nf].to_vec();
    for k in 0..det.len() {
        if nf == 0 || det.len() != nf * detunings.len() || det[k] != detunings[k / nf] || freq[k] != probe[k % nf] {
            return Err(CliError::validation(format!(
                "{}: line {}: rows must form a full grid, row-major by detuning",
                input.display(),
                k + 2
            )));
        }
    }
    let values = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
    Ok(SpinSpectrumMap::new(probe, detunings, values)?)
}

fn fit_spins(
    ctx: &Ctx,
    input: &Path,
    rates: Option<&str>,
    magnitude: bool,
) -> CliResult<(serde_json::Value, FitResult)> {
    let rates = match rates {
        Some(s) => parse_rates(s)?,
        None => ResonatorRates {
            f_r: ctx.cfg.params.f_r,
            kappa: ctx.cfg.params.kappa(),
            kappa_ext: ctx.cfg.params.kappa_ext,
        },
    };
    let t = Table::read(input, &["detuning", "freq", "re", "im"], &[])?;
    let map = spin_map_from_table(input, &t)?;
    let kind = if magnitude {
        ResidualKind::Magnitude
    } else {
        ResidualKind::Complex
    };
    let f = fit_spin_spectrum(&map, &rates, kind)?;
    Ok((
        json!({ "gamma_s": f.gamma_s, "g_eff": f.g_eff, "rates": rates_json(&rates), "residual": kind, "fit": f.fit }),
        f.fit,
    ))
}

fn fit_decay(input: &Path, t1: bool) -> CliResult<(serde_json::Value, FitResult)> {
    let t = Table::read(input, &["delay", "area"], &["error"])?;
    let errors = t.has("error").then(|| t.col("error"));
    let series = DecaySeries::new(t.col("delay"), t.col("area"), errors)?;
    let (time, fit) = if t1 { fit_t1(&series)? } else { fit_t2(&series)? };
    let key = if t1 { "t1" } else { "t2" };
    Ok((json!({ key: time, "fit": fit }), fit))
}

fn fit_echo(input: &Path) -> CliResult<(serde_json::Value, FitResult)> {
    let t = Table::read(input, &["time", "amplitude"], &[])?;
    let e = echo_area(&t.col("time"), &t.col("amplitude"))?;
    let fit = e.fit.clone();
    Ok((serde_json::to_value(&e).expect("serializable"), fit))
}

fn read_samples(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut magic = [0u8; 8];
    let n = f.read(&mut magic).map_err(|e| CliError::io(path, e))?;
    f.seek(SeekFrom::Start(0)).map_err(|e| CliError::io(path, e))?;
    let samples = if n == 8 && &magic == IQ_MAGIC {
        read_iq_binary(BufReader::new(f))
    } else {
        read_iq_csv(BufReader::new(f))
    };
    samples.map_err(|e| match CliError::from(e) {
        CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn read_calibration(path: &Path) -> CliResult<PlanckCalibration> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let c: PlanckCalibration =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    c.validate()?;
    Ok(c)
}

fn cmd_tomo(ctx: &Ctx) -> CliResult<()> {
    let calib_path = require(&ctx.cfg.io.calibration, "a calibration", "--calibration")?;
    let input = require(&ctx.cfg.io.input, "an input file", "--input")?;
    let calib = read_calibration(&calib_path)?;
    let mut run = Run::new(ctx, "tomo", "tomo".into());
    run.input(&input);
    run.input(&calib_path);
    let samples = read_samples(&input)?;
    let m = moments(&samples)?;
    let report = reconstruct_gaussian(&m, &calib)?;
    let path = run.output(ctx, "tomo.json");
    write_json(&path, &json!({ "report": report, "moments": m, "calibration": calib }))?;
    match report.squeezing_db {
        Some(s) => println!(
            "S = {} dB, angle = {} deg, purity = {}",
            fmt_f64(s),
            fmt_f64(report.angle.to_degrees()),
            report.purity.map_or("n/a".into(), fmt_f64)
        ),
        None => println!("squeezed variance not positive; see notes in tomo.json"),
    }
    run.finish(ctx)
}

fn cmd_calibrate(ctx: &Ctx, freq: Option<f64>, path_loss_db: f64) -> CliResult<()> {
    let input = require(&ctx.cfg.io.input, "an input file", "--input")?;
    let freq = freq.unwrap_or(ctx.cfg.params.f_r);
    let mut run = Run::new(
        ctx,
        "calibration",
        format!(
            "calibrate --freq {} --path-loss-db {}",
            fmt_f64(freq),
            fmt_f64(path_loss_db)
        ),
    );
    run.input(&input);
    let t = Table::read(&input, &["temperature_k", "variance_v2"], &[])?;
    let calib = planck_fit(&t.col("temperature_k"), &t.col("variance_v2"), freq)?.with_path_loss_db(path_loss_db);
    let path = run.output(ctx, "calibration.json");
    write_json(&path, &calib)?;
    run.finish(ctx)?;
    let converged = calib.diagnostics.as_ref().is_none_or(|d| d.converged);
    if converged {
        calib.validate()?;
        println!(
            "G = {} V^2, n_sys = {}",
            fmt_f64(calib.conversion_factor),
            fmt_f64(calib.system_noise)
        );
        Ok(())
    } else {
        let notes = calib.diagnostics.map(|d| d.notes.join("; ")).unwrap_or_default();
        Err(CliError::NotConverged(notes))
    }
}

fn level_row(d: &LevelDiagram) -> Vec<String> {
    let mut v = vec![d.field];
    v.extend(SpinState::ALL.iter().map(|&s| d.energy_of(s)));
    num_row(&v)
}

fn cmd_spin(ctx: &Ctx, kind: SpinKind) -> CliResult<()> {
    let sys = ctx.cfg.spin;
    match kind {
        SpinKind::Levels { field, fields } => {
            let (fields, command) = match (field, fields) {
                (Some(b), None) => (vec![b], format!("spin levels --field {}", fmt_f64(b))),
                (None, Some(r)) => (
                    r.values(),
                    format!("spin levels --fields {}:{}:{}", r.min, r.max, r.points),
                ),
                _ => return Err(CliError::validation("give --field or --fields")),
            };
            let mut run = Run::new(ctx, "levels", command);
            let levels = fields
                .iter()
                .map(|&b| spin_levels(&sys, b))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = levels.iter().map(level_row).collect();
            write_table(
                ctx,
                &mut run,
                "levels",
                &["field_t", "dd_hz", "du_hz", "ud_hz", "uu_hz"],
                rows,
                &levels,
            )?;
            if let [one] = &levels[..] {
                for (e, l) in one.energies.iter().zip(&one.labels) {
                    println!("{} {} Hz", l.symbol(), fmt_f64(*e));
                }
            }
            run.finish(ctx)
        }
        SpinKind::Resonance { freq, transition } => {
            let tr: Transition = transition.parse()?;
            if !(freq > 0.0 && freq.is_finite()) {
                return Err(CliError::validation("--freq must be finite and > 0"));
            }
            let mut run = Run::new(
                ctx,
                "resonance",
                format!("spin resonance --freq {} --transition {tr}", fmt_f64(freq)),
            );
            let field = resonance_field(&sys, freq, tr)?;
            let check = transition_frequency(&sys, field, tr)?;
            let path = run.output(ctx, "resonance.json");
            write_json(
                &path,
                &json!({ "transition": tr.to_string(), "freq": freq, "field_t": field, "freq_at_field": check }),
            )?;
            println!("{tr}: {} T", fmt_f64(field));
            run.finish(ctx)
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if n == 1 {
                a
            } else {
                a + (b - a) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Cable background with the resonator rates of the config.
fn synth_background(ctx: &Ctx) -> BackgroundModel {
    let p = &ctx.cfg.params;
    let phi: f64 = -0.002;
    BackgroundModel {
        a_mw: 0.021,
        alpha: 1.585,
        tau: 97.35e-9,
        phi,
        q_ext_mag: p.f_r * phi.cos() / (2.0 * p.kappa_ext),
        q_loaded: p.f_r / (2.0 * p.kappa()),
        f_r: p.f_r,
    }
}

fn decay_rows(s: &DecaySeries) -> Vec<Vec<String>> {
    let err = s.errors.clone().unwrap_or_else(|| vec![0.0; s.delays.len()]);
    (0..s.delays.len())
        .map(|i| num_row(&[s.delays[i], s.areas[i], err[i]]))
        .collect()
}

fn cmd_synth(ctx: &Ctx, kind: SynthKind) -> CliResult<()> {
    let seed = ctx.cfg.seed;
    let p = ctx.cfg.params;
    let (stem, command) = match &kind {
        SynthKind::Circle { snr_db, points, span } => ("circle", format!("synth circle --snr-db {snr_db} --points {points} --span {span}")),
        SynthKind::Spins { noise } => ("spins", format!("synth spins --noise {noise}")),
        SynthKind::T1 { noise } => ("t1", format!("synth t1 --noise {noise}")),
        SynthKind::T2 { noise } => ("t2", format!("synth t2 --noise {noise}")),
        SynthKind::Echo { noise } => ("echo", format!("synth echo --noise {noise}")),
        SynthKind::Iq {
            samples,
            squeezing_db,
            anti_squeezing_db,
            angle_deg,
            csv,
        } => (
            "iq",
            format!("synth iq --samples {samples} --squeezing-db {squeezing_db} --anti-squeezing-db {anti_squeezing_db} --angle-deg {angle_deg} --csv {csv}"),
        ),
        SynthKind::Planck { noise } => ("planck", format!("synth planck --noise {noise}")),
    };
    let mut run = Run::new(ctx, stem, command);
    let negative = |v: f64, what: &str| {
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(CliError::validation(format!("{what} must be finite and >= 0")))
        }
    };
    match kind {
        SynthKind::Circle { snr_db, points, span } => {
            if points < 8 || span.is_nan() || span <= 0.0 {
                return Err(CliError::validation("circle synthesis needs >= 8 points and span > 0"));
            }
            let bg = synth_background(ctx);
            let freqs = linspace(p.f_r - span, p.f_r + span, points);
            let spec = synth::resonator_spectrum(&bg, freqs, synth::noise_for_snr(bg.a_mw, snr_db), seed)?;
            let rows: Vec<_> = spec
                .freqs()
                .iter()
                .zip(spec.values())
                .map(|(&f, v)| num_row(&[f, v.re, v.im]))
                .collect();
            write_csv(&run.output(ctx, "circle.csv"), &["freq", "re", "im"], rows)?;
            write_json(&run.output(ctx, "circle.truth.json"), &json!({ "background": bg }))?;
        }
        SynthKind::Spins { noise } => {
            negative(noise, "--noise")?;
            let probe = linspace(p.f_r - 5e6, p.f_r + 5e6, 101);
            let det = linspace(-10e6, 10e6, 41);
            let map = synth::spin_map(&p, probe, det, noise, seed)?;
            let mut rows = Vec::with_capacity(map.values.len());
            for (i, &d) in map.detunings.iter().enumerate() {
                for (&f, v) in map.probe_freqs.iter().zip(map.row(i)) {
                    rows.push(num_row(&[d, f, v.re, v.im]));
                }
            }
            write_csv(&run.output(ctx, "spins.csv"), &["detuning", "freq", "re", "im"], rows)?;
            write_json(&run.output(ctx, "spins.truth.json"), &json!({ "params": p }))?;
        }
        SynthKind::T1 { noise } => {
            negative(noise, "--noise")?;
            let (t1, a, k) = (85.49, 1.0, 0.95);
            let delays = (0..25).map(|i| 0.5 * 1.25f64.powi(i)).collect();
            let s = synth::decay_series(delays, move |t| a * (1.0 - 2.0 * k * (-t / t1).exp()), noise, seed)?;
            write_csv(&run.output(ctx, "t1.csv"), &["delay", "area", "error"], decay_rows(&s))?;
            write_json(&run.output(ctx, "t1.truth.json"), &json!({ "t1": t1, "a0": a, "k": k }))?;
        }
        SynthKind::T2 { noise } => {
            negative(noise, "--noise")?;
            let (t2, a, c) = (2.16e-3, 1.0, 0.02);
            let delays = (0..30).map(|k| 20e-6 + k as f64 * 0.1e-3).collect();
            let s = synth::decay_series(delays, move |t| a * (-2.0 * t / t2).exp() + c, noise, seed)?;
            write_csv(&run.output(ctx, "t2.csv"), &["delay", "area", "error"], decay_rows(&s))?;
            write_json(&run.output(ctx, "t2.truth.json"), &json!({ "t2": t2, "a0": a, "c": c }))?;
        }
        SynthKind::Echo { noise } => {
            negative(noise, "--noise")?;
            let (amp, center, sigma, offset) = (1.0, 1e-6, 0.1e-6, 0.05);
            let times = linspace(0.0, 2e-6, 201);
            let trace = synth::echo_trace(&times, amp, center, sigma, offset, noise, seed);
            let rows: Vec<_> = times.iter().zip(&trace).map(|(&t, &v)| num_row(&[t, v])).collect();
            write_csv(&run.output(ctx, "echo.csv"), &["time", "amplitude"], rows)?;
            write_json(
                &run.output(ctx, "echo.truth.json"),
                &json!({ "amplitude": amp, "center": center, "sigma": sigma, "offset": offset,
                         "area": spinsqz_core::estimators::gaussian_window_area(amp, sigma) }),
            )?;
        }
        SynthKind::Iq {
            samples,
            squeezing_db,
            anti_squeezing_db,
            angle_deg,
            csv,
        } => {
            let state = CovarianceState::squeezed(
                variance_from_db(squeezing_db),
                variance_from_db(-anti_squeezing_db),
                angle_deg.to_radians(),
            );
            if !state.is_physical(1e-12) {
                return Err(CliError::validation(
                    "requested state violates the uncertainty relation",
                ));
            }
            let calib = PlanckCalibration::new(1e-6, 1.5, p.f_r)?;
            let data = synth::iq_samples(&state, &calib, samples, seed)?;
            if csv {
                let path = run.output(ctx, "iq.csv");
                let mut buf = Vec::new();
                write_iq_csv(&mut buf, &data)?;
                write_file(&path, &buf)?;
            } else {
                let path = run.output(ctx, "iq.bin");
                let mut buf = Vec::new();
                write_iq_binary(&mut buf, &data)?;
                write_file(&path, &buf)?;
            }
            write_json(&run.output(ctx, "iq.calibration.json"), &calib)?;
            write_json(&run.output(ctx, "iq.truth.json"), &json!({ "state": state }))?;
        }
        SynthKind::Planck { noise } => {
            negative(noise, "--noise")?;
            let calib = PlanckCalibration::new(1e-6, 1.5, p.f_r)?;
            let temps: Vec<f64> = (0..15).map(|k| 0.02 * 1.3f64.powi(k)).collect();
            let scale = calib.measured_variance(0.0);
            let s = synth::decay_series(temps, |t| calib.measured_variance(t) / scale, noise, seed)?;
            let rows: Vec<_> = s
                .delays
                .iter()
                .zip(&s.areas)
                .map(|(&t, &v)| num_row(&[t, v * scale]))
                .collect();
            write_csv(&run.output(ctx, "planck.csv"), &["temperature_k", "variance_v2"], rows)?;
            write_json(&run.output(ctx, "planck.truth.json"), &calib)?;
        }
    }
    run.finish(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_flag() {
        let r = parse_rates("5.645e9:1.78e6:1.49e6").unwrap();
        assert_eq!((r.f_r, r.kappa, r.kappa_ext), (5.645e9, 1.78e6, 1.49e6));
        assert!(parse_rates("1:2").is_err());
        assert!(parse_rates("a:b:c").is_err());
    }

    #[test]
    fn synth_background_reproduces_config_rates() {
        let ctx = Ctx {
            cfg: RunConfig::default(),
            out: PathBuf::new(),
            threads: None,
            format: Format::Csv,
            gnuplot: false,
        };
        let r = resonator_rates(&synth_background(&ctx)).unwrap();
        assert!((r.kappa - 1.78e6).abs() < 1e-6);
        assert!((r.kappa_ext - 1.49e6).abs() < 1e-6);
    }
}
