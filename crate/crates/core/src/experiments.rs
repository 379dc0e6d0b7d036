//! Reproduction pipelines: reflection maps, squeezing predictions for the
//! three coupling scenarios and transfer-efficiency sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hybrid::{
    anti_squeezing_db, cooperativity, propagate_variance, s11, squeezing_db, transfer_efficiency, HybridParams,
};

/// Spin-resonator detuning of the resonator-resonant case, Hz.
pub const RESONATOR_RESONANT_DELTA_SR: f64 = 9.2e6;
/// Squeezer-resonator detuning of the off-resonant case, Hz.
pub const OFF_RESONANT_SQUEEZER_DETUNING: f64 = 10e6;
pub const DEFAULT_GRID_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTag {
    OffResonant,
    ResonatorResonant,
    FullyResonant,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 3] = [Self::OffResonant, Self::ResonatorResonant, Self::FullyResonant];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::OffResonant => "off_resonant",
            Self::ResonatorResonant => "resonator_resonant",
            Self::FullyResonant => "fully_resonant",
        }
    }
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "off_resonant" => Ok(Self::OffResonant),
            "resonator_resonant" => Ok(Self::ResonatorResonant),
            "fully_resonant" => Ok(Self::FullyResonant),
            other => Err(invalid("scenario", format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRaw {
    tag: ScenarioTag,
    delta_sr: Option<f64>,
    squeezer_resonator_detuning: Option<f64>,
}

/// Coupling configuration of a squeezing measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRaw")]
pub struct Scenario {
    pub tag: ScenarioTag,
    /// Spin-resonator detuning, Hz.
    pub delta_sr: f64,
    /// Resonator-squeezer detuning, Hz.
    pub squeezer_resonator_detuning: f64,
}

impl TryFrom<ScenarioRaw> for Scenario {
    type Error = Error;

    fn try_from(raw: ScenarioRaw) -> Result<Self> {
        let d = Self::new(raw.tag);
        let s = Self {
            tag: raw.tag,
            delta_sr: raw.delta_sr.unwrap_or(d.delta_sr),
            squeezer_resonator_detuning: raw.squeezer_resonator_detuning.unwrap_or(d.squeezer_resonator_detuning),
        };
        s.validate()?;
        Ok(s)
    }
}

impl Scenario {
    /// Scenario with its default detunings.
    pub fn new(tag: ScenarioTag) -> Self {
        let (delta_sr, squeezer_resonator_detuning) = match tag {
            ScenarioTag::OffResonant => (0.0, OFF_RESONANT_SQUEEZER_DETUNING),
            ScenarioTag::ResonatorResonant => (RESONATOR_RESONANT_DELTA_SR, 0.0),
            ScenarioTag::FullyResonant => (0.0, 0.0),
        };
        Self {
            tag,
            delta_sr,
            squeezer_resonator_detuning,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta_sr.is_finite() || !self.squeezer_resonator_detuning.is_finite() {
            return Err(invalid("scenario", "detunings must be finite"));
        }
        if self.tag == ScenarioTag::FullyResonant && (self.delta_sr != 0.0 || self.squeezer_resonator_detuning != 0.0) {
            return Err(invalid("scenario", "fully_resonant requires zero detunings"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    /// Pump power, dBm; carried through unchanged.
    pub pump_power: f64,
    pub sigma_sq: f64,
    pub sigma_as: f64,
}

/// Off-resonant reference variances versus squeezer pump power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingReferenceTable {
    rows: Vec<ReferenceRow>,
}

impl SqueezingReferenceTable {
    pub fn new(rows: Vec<ReferenceRow>) -> Result<Self> {
        for (k, r) in rows.iter().enumerate() {
            if !(r.sigma_sq > 0.0 && r.sigma_as > 0.0 && r.sigma_sq.is_finite() && r.sigma_as.is_finite()) {
                return Err(invalid(
                    "reference",
                    format!("row {k}: variances must be finite and > 0"),
                ));
            }
            if r.sigma_sq > r.sigma_as {
                return Err(invalid("reference", format!("row {k}: sigma_sq exceeds sigma_as")));
            }
            if !r.pump_power.is_finite() {
                return Err(invalid("reference", format!("row {k}: pump power must be finite")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ReferenceRow] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub scenario: ScenarioTag,
    pub pump_power: f64,
    pub sigma_sq: f64,
    pub sigma_as: f64,
    pub squeezing_db: f64,
    pub anti_squeezing_db: f64,
}

/// Propagates each reference row through the hybrid at `ω = 0`.
///
/// The squeezed axis passes the real reflection coefficient unrotated, so
/// the two quadratures propagate independently.
pub fn predict_squeezing(
    reference: &SqueezingReferenceTable,
    params: &HybridParams,
    scenario: &Scenario,
) -> Result<Vec<PredictionRow>> {
    scenario.validate()?;
    params.validate()?;
    let p = params.with_delta_sr(scenario.delta_sr);
    reference
        .rows
        .iter()
        .map(|row| {
            let (sq, asq) = match scenario.tag {
                ScenarioTag::OffResonant => (row.sigma_sq, row.sigma_as),
                _ => (
                    propagate_variance(&p, 0.0, row.sigma_sq)?,
                    propagate_variance(&p, 0.0, row.sigma_as)?,
                ),
            };
            Ok(PredictionRow {
                scenario: scenario.tag,
                pump_power: row.pump_power,
                sigma_sq: sq,
                sigma_as: asq,
                squeezing_db: squeezing_db(sq)?,
                anti_squeezing_db: anti_squeezing_db(asq)?,
            })
        })
        .collect()
}

/// Inclusive linear range with `points ≥ 1` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl LinearRange {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let r = Self { min, max, points };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(invalid("range", "needs at least one point"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.max < self.min {
            return Err(invalid("range", format!("bad bounds [{}, {}]", self.min, self.max)));
        }
        if self.points > 1 && self.max == self.min {
            return Err(invalid("range", "zero-width range with several points"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        linear(self.min, self.max, self.points)
    }
}

fn linear(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![min];
    }
    (0..n)
        .map(|k| {
            if k + 1 == n {
                max
            } else {
                min + (max - min) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `|S11|` over probe detuning `Δ_r` (from `f_r`) and spin detuning `Δ_sr`,
/// row-major by `Δ_sr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMap {
    pub probe_detunings: Vec<f64>,
    pub spin_detunings: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl SpectrumMap {
    pub fn get(&self, spin_idx: usize, probe_idx: usize) -> f64 {
        self.magnitude[spin_idx * self.probe_detunings.len() + probe_idx]
    }

    pub fn row(&self, spin_idx: usize) -> &[f64] {
        let n = self.probe_detunings.len();
        &self.magnitude[spin_idx * n..(spin_idx + 1) * n]
    }
}

pub fn spectrum_map(params: &HybridParams, probe: &LinearRange, detuning: &LinearRange) -> Result<SpectrumMap> {
    params.validate()?;
    probe.validate()?;
    detuning.validate()?;
    let probe_detunings = probe.values();
    let spin_detunings = detuning.values();
    let mut magnitude = Vec::with_capacity(probe_detunings.len() * spin_detunings.len());
    for &d in &spin_detunings {
        let p = params.with_delta_sr(d);
        for &w in &probe_detunings {
            magnitude.push(s11(&p, p.f_r + w)?.norm());
        }
    }
    Ok(SpectrumMap {
        probe_detunings,
        spin_detunings,
        magnitude,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    KappaExt,
    KappaInt,
    GEff,
    GammaS,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::KappaExt => "kappa_ext",
            Self::KappaInt => "kappa_int",
            Self::GEff => "g_eff",
            Self::GammaS => "gamma_s",
        }
    }

    fn apply(self, p: &mut HybridParams, v: f64) {
        match self {
            Self::KappaExt => p.kappa_ext = v,
            Self::KappaInt => p.kappa_int = v,
            Self::GEff => p.g_eff = v,
            Self::GammaS => p.gamma_s = v,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kappa_ext" => Ok(Self::KappaExt),
            "kappa_int" => Ok(Self::KappaInt),
            "g_eff" => Ok(Self::GEff),
            "gamma_s" => Ok(Self::GammaS),
            other => Err(Error::InvalidAxis(format!(
                "`{other}` is not one of kappa_ext, kappa_int, g_eff, gamma_s"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisScale {
    #[default]
    Linear,
    Log,
}

fn default_points() -> usize {
    DEFAULT_GRID_POINTS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub name: SweepParam,
    pub min: f64,
    pub max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub scale: AxisScale,
}

impl AxisSpec {
    pub fn linear(name: SweepParam, min: f64, max: f64, points: usize) -> Self {
        Self {
            name,
            min,
            max,
            points,
            scale: AxisScale::Linear,
        }
    }

    pub fn log(name: SweepParam, min: f64, max: f64, points: usize) -> Self {
        Self {
            scale: AxisScale::Log,
            ..Self::linear(name, min, max, points)
        }
    }

    pub fn validate(&self) -> Result<()> {
        LinearRange {
            min: self.min,
            max: self.max,
            points: self.points,
        }
        .validate()
        .map_err(|e| Error::InvalidAxis(format!("{}: {e}", self.name)))?;
        if self.scale == AxisScale::Log && self.min <= 0.0 {
            return Err(Error::InvalidAxis(format!("{}: log axis needs min > 0", self.name)));
        }
        if self.min < 0.0 {
            return Err(Error::InvalidAxis(format!("{}: rates must be >= 0", self.name)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        match self.scale {
            AxisScale::Linear => linear(self.min, self.max, self.points),
            AxisScale::Log => {
                let mut v: Vec<f64> = linear(self.min.ln(), self.max.ln(), self.points)
                    .into_iter()
                    .map(f64::exp)
                    .collect();
                // Pin the endpoints against exp/ln round-off.
                v[0] = self.min;
                if self.points > 1 {
                    v[self.points - 1] = self.max;
                }
                v
            }
        }
    }
}

/// `|t(0)|²` at `Δ_sr = 0` over two swept parameters, row-major by `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMap {
    pub x_axis: AxisSpec,
    pub y_axis: AxisSpec,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub values: Vec<f64>,
    /// `(ix, iy)` of the first maximum in row-major order.
    pub argmax_index: (usize, usize),
    pub argmax: (f64, f64),
    pub efficiency_at_max: f64,
    pub cooperativity_at_max: f64,
    /// Base parameters with the argmax coordinates applied.
    pub params_at_max: HybridParams,
}

impl EfficiencyMap {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.x_values.len() + ix]
    }

    pub fn params_at(&self, base: &HybridParams, ix: usize, iy: usize) -> HybridParams {
        let mut p = base.with_delta_sr(0.0);
        self.x_axis.name.apply(&mut p, self.x_values[ix]);
        self.y_axis.name.apply(&mut p, self.y_values[iy]);
        p
    }
}

/// Grid of transfer efficiencies. Points where the model is undefined (for
/// example `κ = 0`) are recorded as zero. `threads` bounds the worker count;
/// the result is independent of it.
pub fn efficiency_map(
    base: &HybridParams,
    x: &AxisSpec,
    y: &AxisSpec,
    threads: Option<usize>,
) -> Result<EfficiencyMap> {
    if x.name == y.name {
        return Err(Error::InvalidAxis(format!("both axes sweep {}", x.name)));
    }
    x.validate()?;
    y.validate()?;
    let xs = x.values();
    let ys = y.values();
    let nx = xs.len();
    let base0 = base.with_delta_sr(0.0);

    let eval = |k: usize| -> f64 {
        let mut p = base0;
        x.name.apply(&mut p, xs[k % nx]);
        y.name.apply(&mut p, ys[k / nx]);
        if p.kappa_ext <= 0.0 || p.gamma_s <= 0.0 {
            return 0.0;
        }
        transfer_efficiency(&p, 0.0).unwrap_or(0.0)
    };
    let n = nx * ys.len();
    let values: Vec<f64> = match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| invalid("threads", e.to_string()))?;
            pool.install(|| (0..n).into_par_iter().map(eval).collect())
        }
        None => (0..n).into_par_iter().map(eval).collect(),
    };

    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    let (ix, iy) = (best % nx, best / nx);
    let mut at_max = base0;
    x.name.apply(&mut at_max, xs[ix]);
    y.name.apply(&mut at_max, ys[iy]);
    let coop = if at_max.gamma_s > 0.0 && at_max.kappa() > 0.0 {
        cooperativity(&at_max)
    } else {
        f64::NAN
    };
    Ok(EfficiencyMap {
        x_axis: *x,
        y_axis: *y,
        argmax: (xs[ix], ys[iy]),
        x_values: xs,
        y_values: ys,
        argmax_index: (ix, iy),
        efficiency_at_max: values[best],
        cooperativity_at_max: coop,
        params_at_max: at_max,
        values,
    })
}
