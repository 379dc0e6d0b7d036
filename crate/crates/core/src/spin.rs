//! Si:P donor spin Hamiltonian: electron spin 1/2 with Zeeman coupling,
//! nuclear spin 1/2 with Zeeman coupling and an isotropic Fermi-contact
//! hyperfine interaction.
//!
//! Energies are frequencies (`E/h`, Hz). The Hamiltonian commutes with the
//! total projection `m_F = m_S + m_I`, so it is block diagonal in the product
//! basis: two one-dimensional blocks (`m_F = ±1`) and one 2×2 block
//! (`m_F = 0`). Each block is diagonalized numerically, which keeps the
//! high-field product-state labels attached to the right eigenvalue at every
//! field without tracking eigenvectors through the zero-field degeneracy.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON, NUCLEAR_MAGNETON, PLANCK};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinSystem {
    pub g_e: f64,
    pub g_n: f64,
    /// Hyperfine constant `A/h`, Hz.
    pub hyperfine_a: f64,
    /// Sign of the nuclear Zeeman term, `+1` or `-1`.
    pub nuclear_sign: i8,
}

impl Default for SpinSystem {
    fn default() -> Self {
        Self {
            g_e: 1.9985,
            g_n: 2.2632,
            hyperfine_a: 117.53e6,
            nuclear_sign: 1,
        }
    }
}

impl SpinSystem {
    pub fn validate(&self) -> Result<()> {
        if !(self.hyperfine_a > 0.0 && self.hyperfine_a.is_finite()) {
            return Err(invalid("hyperfine_a", "must be > 0"));
        }
        if !(self.g_e > 0.0 && self.g_e.is_finite()) {
            return Err(invalid("g_e", "must be > 0"));
        }
        if !(self.g_n > 0.0 && self.g_n.is_finite()) {
            return Err(invalid("g_n", "must be > 0"));
        }
        if self.nuclear_sign != 1 && self.nuclear_sign != -1 {
            return Err(invalid("nuclear_sign", "must be +1 or -1"));
        }
        Ok(())
    }

    /// Electron Zeeman frequency `g_e μ_B B / h`.
    pub fn electron_zeeman(&self, field: f64) -> f64 {
        self.g_e * BOHR_MAGNETON * field / PLANCK
    }

    /// Signed nuclear Zeeman frequency `± g_n μ_n B / h`.
    pub fn nuclear_zeeman(&self, field: f64) -> f64 {
        f64::from(self.nuclear_sign) * self.g_n * NUCLEAR_MAGNETON * field / PLANCK
    }

    /// Full 4×4 Hamiltonian `H/h` in the product basis
    /// `|↑⇑⟩, |↑⇓⟩, |↓⇑⟩, |↓⇓⟩` (electron first).
    pub fn hamiltonian(&self, field: f64) -> Matrix4<f64> {
        let a = self.electron_zeeman(field);
        let b = self.nuclear_zeeman(field);
        let hf = self.hyperfine_a;
        let mut h = Matrix4::zeros();
        h[(0, 0)] = 0.5 * a + 0.5 * b + 0.25 * hf;
        h[(1, 1)] = 0.5 * a - 0.5 * b - 0.25 * hf;
        h[(2, 2)] = -0.5 * a + 0.5 * b - 0.25 * hf;
        h[(3, 3)] = -0.5 * a - 0.5 * b + 0.25 * hf;
        h[(1, 2)] = 0.5 * hf;
        h[(2, 1)] = 0.5 * hf;
        h
    }
}

/// High-field product state `|electron, nuclear⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinState {
    DownDown,
    DownUp,
    UpDown,
    UpUp,
}

impl SpinState {
    /// All labels in the order of ascending high-field energy.
    pub const ALL: [SpinState; 4] = [
        SpinState::DownDown,
        SpinState::DownUp,
        SpinState::UpDown,
        SpinState::UpUp,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            SpinState::DownDown => "|↓⇓⟩",
            SpinState::DownUp => "|↓⇑⟩",
            SpinState::UpDown => "|↑⇓⟩",
            SpinState::UpUp => "|↑⇑⟩",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            SpinState::DownDown => "dd",
            SpinState::DownUp => "du",
            SpinState::UpDown => "ud",
            SpinState::UpUp => "uu",
        }
    }
}

impl fmt::Display for SpinState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for SpinState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.trim_start_matches('|').trim_end_matches('⟩').trim_end_matches('>');
        match t {
            "dd" | "↓⇓" => Ok(SpinState::DownDown),
            "du" | "↓⇑" => Ok(SpinState::DownUp),
            "ud" | "↑⇓" => Ok(SpinState::UpDown),
            "uu" | "↑⇑" => Ok(SpinState::UpUp),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// A transition between two labelled levels, e.g. `dd->ud`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: SpinState,
    pub to: SpinState,
}

impl Transition {
    /// The `|↓⇓⟩ → |↑⇓⟩` ESR line.
    pub const ESR_NUCLEAR_DOWN: Transition = Transition {
        from: SpinState::DownDown,
        to: SpinState::UpDown,
    };

    pub const ESR_NUCLEAR_UP: Transition = Transition {
        from: SpinState::DownUp,
        to: SpinState::UpUp,
    };
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("->")
            .or_else(|| s.split_once('→'))
            .or_else(|| s.split_once(','))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))?;
        Ok(Transition {
            from: a.parse()?,
            to: b.parse()?,
        })
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from.short(), self.to.short())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagram {
    pub field: f64,
    /// Eigenfrequencies, ascending.
    pub energies: [f64; 4],
    /// High-field label of each entry of `energies`.
    pub labels: [SpinState; 4],
}

impl LevelDiagram {
    pub fn energy_of(&self, state: SpinState) -> f64 {
        let idx = self
            .labels
            .iter()
            .position(|&l| l == state)
            .expect("all labels present");
        self.energies[idx]
    }
}

/// Labelled eigenfrequencies in `SpinState::ALL` order.
fn labelled_energies(sys: &SpinSystem, field: f64) -> [f64; 4] {
    let h = sys.hamiltonian(field);
    let block = Matrix2::new(h[(1, 1)], h[(1, 2)], h[(2, 1)], h[(2, 2)]);
    let eig = SymmetricEigen::new(block);
    let (lo, hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (eig.eigenvalues[0], eig.eigenvalues[1])
    } else {
        (eig.eigenvalues[1], eig.eigenvalues[0])
    };
    // The m_F = 0 block never crosses itself for B > 0 (avoided crossing);
    // its upper branch connects to |↑⇓⟩ because g_e μ_B ≫ g_n μ_n.
    [h[(3, 3)], lo, hi, h[(0, 0)]]
}

pub fn spin_levels(sys: &SpinSystem, field: f64) -> Result<LevelDiagram> {
    sys.validate()?;
    if !(field >= 0.0 && field.is_finite()) {
        return Err(invalid("field", "must be finite and >= 0"));
    }
    let e = labelled_energies(sys, field);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| e[i].total_cmp(&e[j]));
    Ok(LevelDiagram {
        field,
        energies: order.map(|i| e[i]),
        labels: order.map(|i| SpinState::ALL[i]),
    })
}

pub fn transition_frequency(sys: &SpinSystem, field: f64, transition: Transition) -> Result<f64> {
    let levels = spin_levels(sys, field)?;
    Ok(levels.energy_of(transition.to) - levels.energy_of(transition.from))
}

/// Search interval for [`resonance_field`], T.
pub const FIELD_SEARCH_MAX: f64 = 5.0;

/// Field at which `transition` has frequency `target_freq`, to 1 Hz.
pub fn resonance_field(sys: &SpinSystem, target_freq: f64, transition: Transition) -> Result<f64> {
    resonance_field_in(sys, target_freq, transition, 0.0, FIELD_SEARCH_MAX)
}

pub fn resonance_field_in(sys: &SpinSystem, target_freq: f64, transition: Transition, lo: f64, hi: f64) -> Result<f64> {
    sys.validate()?;
    if !target_freq.is_finite() {
        return Err(invalid("target_freq", "must be finite"));
    }
    let f = |b: f64| transition_frequency(sys, b, transition).map(|v| v - target_freq);

    // Scan for the first sign change, then bisect.
    const SCAN: usize = 512;
    let mut b_prev = lo;
    let mut f_prev = f(lo)?;
    if f_prev == 0.0 {
        return Ok(lo);
    }
    let mut bracket = None;
    for k in 1..=SCAN {
        let b = lo + (hi - lo) * k as f64 / SCAN as f64;
        let fb = f(b)?;
        if fb == 0.0 {
            return Ok(b);
        }
        if fb.signum() != f_prev.signum() {
            bracket = Some((b_prev, f_prev, b));
            break;
        }
        b_prev = b;
        f_prev = fb;
    }
    let (mut a, mut fa, mut b) = bracket.ok_or(Error::NoBracket {
        target: target_freq,
        lo,
        hi,
    })?;

    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm.abs() <= 1e-3 || (b - a) <= f64::EPSILON * m.abs() {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
