//! Parametric pitch-contour model.
//!
//! A contour is a base frequency modulated geometrically by a periodic
//! function `psi` with period 1:
//!
//! ```text
//! f0(n) = f_b * 2^((delta_f / 1200) * psi(f_m * T * n / L + phi)),   n = 0..L-1
//! ```
//!
//! so `delta_f` is a symmetric deviation in cents and `delta_f = 0` gives a
//! constant contour.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpcError};

/// Reference frequency of the cents scale used for base-frequency targets.
pub const CENTS_REFERENCE_HZ: f64 = 25.0;

/// Default contour frame rate (1 ms frames).
pub const DEFAULT_FRAME_RATE: f64 = 1000.0;

/// Periodic modulator shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiKind {
    Sin,
    Sqr,
    Tri,
    Saw,
}

/// Evaluates `psi_kind(x)`. Output lies in `[-1, 1]` and has period 1.
pub fn eval_psi(kind: PsiKind, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(SpcError::domain(format!("psi argument must be finite, got {x}")));
    }
    Ok(psi(kind, x))
}

/// Unchecked variant of [`eval_psi`] for hot loops; `x` must be finite.
#[inline]
pub(crate) fn psi(kind: PsiKind, x: f64) -> f64 {
    match kind {
        PsiKind::Sin => (std::f64::consts::TAU * x).sin(),
        PsiKind::Sqr => {
            let s = (std::f64::consts::TAU * x).sin();
            if s > 0.0 {
                1.0
            } else if s < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        PsiKind::Tri => 2.0 * (2.0 * (x - (x + 0.5).floor())).abs() - 1.0,
        PsiKind::Saw => 2.0 * (x - (x + 0.5).floor()),
    }
}

/// The seven contour families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourType {
    Stable,
    Alternating,
    Vibrato,
    Glissando,
    Bend,
    Sawtooth,
    Triangle,
}

impl ContourType {
    /// All types in table order; the index in this array is the class label.
    pub const ALL: [ContourType; 7] = [
        ContourType::Stable,
        ContourType::Alternating,
        ContourType::Vibrato,
        ContourType::Glissando,
        ContourType::Bend,
        ContourType::Sawtooth,
        ContourType::Triangle,
    ];

    pub fn psi_kind(self) -> PsiKind {
        match self {
            ContourType::Stable | ContourType::Alternating => PsiKind::Sqr,
            ContourType::Vibrato | ContourType::Glissando | ContourType::Bend => PsiKind::Sin,
            ContourType::Sawtooth => PsiKind::Saw,
            ContourType::Triangle => PsiKind::Tri,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContourType::Stable => "stable",
            ContourType::Alternating => "alternating",
            ContourType::Vibrato => "vibrato",
            ContourType::Glissando => "glissando",
            ContourType::Bend => "bend",
            ContourType::Sawtooth => "sawtooth",
            ContourType::Triangle => "triangle",
        }
    }

    /// Class label (position in [`ContourType::ALL`]).
    pub fn label(self) -> usize {
        ContourType::ALL.iter().position(|t| *t == self).unwrap()
    }

    pub fn from_label(label: usize) -> Option<ContourType> {
        ContourType::ALL.get(label).copied()
    }

    /// Types for which time reversal produces a distinct contour.
    pub fn is_reversible(self) -> bool {
        matches!(self, ContourType::Glissando | ContourType::Sawtooth)
    }
}

impl fmt::Display for ContourType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContourType {
    type Err = SpcError;

    fn from_str(s: &str) -> Result<Self> {
        ContourType::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s.to_ascii_lowercase())
            .ok_or_else(|| SpcError::domain(format!("unknown contour type '{s}'")))
    }
}

/// Parameters of one contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourParams {
    pub kind: ContourType,
    /// Base frequency in Hz.
    pub base_hz: f64,
    /// Modulation extent in cents.
    pub extent_cents: f64,
    /// Modulation frequency in Hz.
    pub mod_hz: f64,
    /// Phase in periods, interpreted modulo 1.
    pub phase: f64,
    pub duration_s: f64,
    pub reversed: bool,
}

impl ContourParams {
    /// A constant contour at `base_hz`.
    pub fn stable(base_hz: f64, duration_s: f64) -> Self {
        ContourParams {
            kind: ContourType::Stable,
            base_hz,
            extent_cents: 0.0,
            mod_hz: 1.0,
            phase: 0.0,
            duration_s,
            reversed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.base_hz,
            self.extent_cents,
            self.mod_hz,
            self.phase,
            self.duration_s,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SpcError::domain("contour parameters must be finite"));
        }
        if self.base_hz <= 0.0 {
            return Err(SpcError::domain(format!(
                "base frequency must be positive, got {}",
                self.base_hz
            )));
        }
        if self.extent_cents < 0.0 {
            return Err(SpcError::domain(format!(
                "modulation extent must be non-negative, got {}",
                self.extent_cents
            )));
        }
        if self.mod_hz <= 0.0 {
            return Err(SpcError::domain(format!(
                "modulation frequency must be positive, got {}",
                self.mod_hz
            )));
        }
        if self.duration_s <= 0.0 {
            return Err(SpcError::domain(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if self.kind == ContourType::Stable && self.extent_cents != 0.0 {
            return Err(SpcError::domain("stable contours must have zero extent"));
        }
        if self.reversed && !self.kind.is_reversible() {
            return Err(SpcError::domain(format!(
                "time reversal is only defined for glissando and sawtooth, not {}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Lowest and highest frequency the continuous contour can reach.
    pub fn frequency_bounds(&self) -> (f64, f64) {
        let r = 2f64.powf(self.extent_cents / 1200.0);
        (self.base_hz / r, self.base_hz * r)
    }

    /// Modulator argument at frame `n` of `len` frames.
    #[inline]
    pub fn modulator_arg(&self, n: usize, len: usize) -> f64 {
        self.mod_hz * self.duration_s * n as f64 / len as f64 + self.phase.rem_euclid(1.0)
    }
}

/// Number of frames a contour of `duration_s` seconds has at `frame_rate`.
pub fn frame_count(duration_s: f64, frame_rate: f64) -> usize {
    (frame_rate * duration_s).round() as usize
}

/// Frame-rate-stamped F0 trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub frame_rate: f64,
    pub values: Vec<f64>,
    /// Per-frame voicing; `None` means every frame is voiced.
    pub voicing: Option<Vec<bool>>,
}

impl PitchContour {
    pub fn voiced(frame_rate: f64, values: Vec<f64>) -> Self {
        PitchContour {
            frame_rate,
            values,
            voicing: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.frame_rate
    }

    pub fn is_voiced(&self, n: usize) -> bool {
        self.voicing.as_ref().map_or(true, |v| v[n])
    }

    pub fn voiced_count(&self) -> usize {
        (0..self.len()).filter(|&n| self.is_voiced(n)).count()
    }

    /// Maximum over voiced frames, or `None` when nothing is voiced.
    pub fn max_voiced(&self) -> Option<f64> {
        (0..self.len())
            .filter(|&n| self.is_voiced(n))
            .map(|n| self.values[n])
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(SpcError::domain("frame rate must be positive"));
        }
        if let Some(v) = &self.voicing {
            if v.len() != self.values.len() {
                return Err(SpcError::format("voicing length differs from value count"));
            }
        }
        for n in 0..self.len() {
            if self.is_voiced(n) && !(self.values[n] > 0.0 && self.values[n].is_finite()) {
                return Err(SpcError::domain(format!(
                    "voiced frame {n} has non-positive frequency {}",
                    self.values[n]
                )));
            }
        }
        Ok(())
    }

    /// Writes the `time_s,f0_hz,voiced` CSV representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut out = String::with_capacity(self.len() * 24 + 20);
        out.push_str("time_s,f0_hz,voiced\n");
        for (n, f) in self.values.iter().enumerate() {
            let t = n as f64 / self.frame_rate;
            out.push_str(&format!(
                "{:.6},{:.4},{}\n",
                t,
                f,
                u8::from(self.is_voiced(n))
            ));
        }
        w.write_all(out.as_bytes())
    }

    /// Parses the CSV written by [`PitchContour::write_csv`]. The frame rate is
    /// inferred from the time column and falls back to `default_rate` for
    /// single-frame files.
    pub fn read_csv<R: BufRead>(r: R, default_rate: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| SpcError::format(format!("missing column '{name}'")))
        };
        let (ti, fi, vi) = (col("time_s")?, col("f0_hz")?, col("voiced")?);
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut voicing = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
            let t: f64 = field(ti)
                .parse()
                .map_err(|_| SpcError::format(format!("bad time '{}'", field(ti))))?;
            let f: f64 = field(fi)
                .parse()
                .map_err(|_| SpcError::format(format!("bad f0 '{}'", field(fi))))?;
            let v = match field(vi) {
                "1" | "true" | "True" => true,
                "0" | "false" | "False" => false,
                other => return Err(SpcError::format(format!("bad voiced flag '{other}'"))),
            };
            times.push(t);
            values.push(f);
            voicing.push(v);
        }
        let frame_rate = if times.len() >= 2 {
            let span = times[times.len() - 1] - times[0];
            let rate = (times.len() - 1) as f64 / span;
            // times carry 6 decimals; snap to the nearest integer rate when close
            if (rate - rate.round()).abs() < 1e-3 * rate {
                rate.round()
            } else {
                rate
            }
        } else {
            default_rate
        };
        let voicing = if voicing.iter().all(|&v| v) {
            None
        } else {
            Some(voicing)
        };
        Ok(PitchContour {
            frame_rate,
            values,
            voicing,
        })
    }
}

/// Evaluates the contour model on `round(frame_rate * T)` frames.
pub fn eval_contour(params: &ContourParams, frame_rate: f64) -> Result<PitchContour> {
    params.validate()?;
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(SpcError::domain(format!("frame rate must be positive, got {frame_rate}")));
    }
    let len = frame_count(params.duration_s, frame_rate);
    if len == 0 {
        return Err(SpcError::domain("contour would have no frames"));
    }
    let kind = params.kind.psi_kind();
    let scale = params.extent_cents / 1200.0;
    let mut values: Vec<f64> = (0..len)
        .map(|n| params.base_hz * (scale * psi(kind, params.modulator_arg(n, len))).exp2())
        .collect();
    if params.reversed {
        values.reverse();
    }
    Ok(PitchContour::voiced(frame_rate, values))
}

/// Time-reverses a contour (values and voicing).
pub fn reverse_contour(c: &PitchContour) -> PitchContour {
    let mut out = c.clone();
    out.values.reverse();
    if let Some(v) = out.voicing.as_mut() {
        v.reverse();
    }
    out
}

/// Cents above 25 Hz.
pub fn hz_to_cents(f: f64) -> Result<f64> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(SpcError::domain(format!("frequency must be positive, got {f}")));
    }
    Ok(1200.0 * (f / CENTS_REFERENCE_HZ).log2())
}

/// Inverse of [`hz_to_cents`].
pub fn cents_to_hz(c: f64) -> f64 {
    CENTS_REFERENCE_HZ * (c / 1200.0).exp2()
}
