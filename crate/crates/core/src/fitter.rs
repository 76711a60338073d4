//! Least-squares fitting of the contour families to an F0 trajectory.
//!
//! Fitting happens in cents above 25 Hz, where a family is affine in the
//! base and extent once the modulation frequency and phase are fixed:
//! `y(t) = b + D psi(f t + phi)`. The affine pair is solved in closed form;
//! `(f, phi)` come from a coarse grid plus periodogram seeds, refined by
//! golden-section coordinate descent.

use std::f64::consts::{PI, TAU};

use crate::contour::{
    eval_contour, hz_to_cents, psi, reverse_contour, ContourParams, ContourType, PitchContour,
    PsiKind, CENTS_REFERENCE_HZ,
};
use crate::error::{Result, SpcError};

pub const MIN_VOICED_FRAMES: usize = 50;
pub const GRID_MOD_POINTS: usize = 96;
pub const GRID_PHASE_POINTS: usize = 32;
/// Bracket shrink ratio at which one golden-section pass stops.
pub const REFINE_TOLERANCE: f64 = 1e-3;
/// Residual differences below this are ties, resolved by family simplicity.
pub const TIE_TOLERANCE_CENTS: f64 = 1e-9;

const MAX_EXTENT_CENTS: f64 = 1200.0;
const MAX_BASE_HZ: f64 = 10_000.0;
const GRID_NODES_REFINED: usize = 4;
const PERIODOGRAM_SEEDS: usize = 3;
const PERIODOGRAM_OVERSAMPLING: f64 = 8.0;
const MAX_PASSES: usize = 6;

/// Tie-break order: fewer free parameters first.
pub const FAMILY_PRIORITY: [ContourType; 7] = [
    ContourType::Stable,
    ContourType::Glissando,
    ContourType::Bend,
    ContourType::Alternating,
    ContourType::Vibrato,
    ContourType::Sawtooth,
    ContourType::Triangle,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourFit {
    pub kind: ContourType,
    pub params: ContourParams,
    /// RMS difference in cents over voiced frames.
    pub residual_cents: f64,
}

impl ContourFit {
    pub fn base_cents(&self) -> f64 {
        1200.0 * (self.params.base_hz / CENTS_REFERENCE_HZ).log2()
    }
}

/// Modulation-frequency range searched for each family.
pub fn mod_range(kind: ContourType) -> Option<(f64, f64)> {
    match kind {
        ContourType::Alternating => Some((1.0, 50.0)),
        ContourType::Vibrato | ContourType::Sawtooth | ContourType::Triangle => Some((5.0, 100.0)),
        _ => None,
    }
}

/// Voiced frames in cents, centered on their mean.
struct Series {
    /// Frame offsets from the series centre, in seconds.
    t: Vec<f64>,
    /// Frame indices (for the periodogram recurrence).
    n: Vec<usize>,
    y: Vec<f64>,
    mean: f64,
    syy: f64,
    /// Centre time in seconds.
    t_c: f64,
    frame_rate: f64,
    len: usize,
}

impl Series {
    fn new(c: &PitchContour) -> Result<Self> {
        let mut n = Vec::new();
        let mut y = Vec::new();
        for i in 0..c.len() {
            if c.is_voiced(i) {
                n.push(i);
                y.push(hz_to_cents(c.values[i])?);
            }
        }
        let count = y.len() as f64;
        let mean = y.iter().sum::<f64>() / count;
        y.iter_mut().for_each(|v| *v -= mean);
        let syy = y.iter().map(|v| v * v).sum();
        let t_c = (c.len() as f64 - 1.0) / 2.0 / c.frame_rate;
        let t = n.iter().map(|&i| i as f64 / c.frame_rate - t_c).collect();
        Ok(Series {
            t,
            n,
            y,
            mean,
            syy,
            t_c,
            frame_rate: c.frame_rate,
            len: c.len(),
        })
    }

    fn count(&self) -> f64 {
        self.y.len() as f64
    }

    fn span_s(&self) -> f64 {
        self.len as f64 / self.frame_rate
    }
}

/// Closed-form base/extent for a fixed modulator sequence summarized by
/// `(sum p, sum p^2, sum y p)`; returns (base cents, extent, SSE).
fn affine(s: &Series, sp: f64, spp: f64, syp: f64) -> (f64, f64, f64) {
    let n = s.count();
    let max_base = 1200.0 * (MAX_BASE_HZ / CENTS_REFERENCE_HZ).log2();
    let spp_c = spp - sp * sp / n;
    let mut d = if spp_c > 1e-12 * n {
        (syp / spp_c).clamp(0.0, MAX_EXTENT_CENTS)
    } else {
        0.0
    };
    // offset of the base from the data mean
    let mut off = -d * sp / n;
    let base = s.mean + off;
    if !(0.0..=max_base).contains(&base) {
        off = base.clamp(0.0, max_base) - s.mean;
        d = if spp > 0.0 {
            ((syp - off * sp) / spp).clamp(0.0, MAX_EXTENT_CENTS)
        } else {
            0.0
        };
    }
    let sse = s.syy - 2.0 * d * syp + n * off * off + 2.0 * off * d * sp + d * d * spp;
    (s.mean + off, d, sse.max(0.0))
}

/// `psi` without the sine call for the piecewise-linear shapes. The square
/// wave is sign(sin) written on the fractional part.
#[inline]
fn fast_psi(kind: PsiKind, x: f64) -> f64 {
    match kind {
        PsiKind::Sqr => {
            let r = x - x.floor();
            if r == 0.0 || r == 0.5 {
                0.0
            } else if r < 0.5 {
                1.0
            } else {
                -1.0
            }
        }
        _ => psi(kind, x),
    }
}

fn modulator_sums(s: &Series, kind: PsiKind, f: f64, phase_c: f64) -> (f64, f64, f64) {
    let mut sp = 0.0;
    let mut spp = 0.0;
    let mut syp = 0.0;
    for (t, y) in s.t.iter().zip(&s.y) {
        let p = fast_psi(kind, f * t + phase_c);
        sp += p;
        spp += p * p;
        syp += y * p;
    }
    (sp, spp, syp)
}

/// Periodic antiderivative of the square shape.
#[inline]
fn square_integral(x: f64) -> f64 {
    let r = x - x.floor();
    if r < 0.5 {
        r
    } else {
        1.0 - r
    }
}

/// Modulator sums with the square shape averaged over one frame, which
/// turns its piecewise-constant objective into a continuous one.
fn smoothed_sums(s: &Series, kind: PsiKind, f: f64, phase_c: f64) -> (f64, f64, f64) {
    if kind != PsiKind::Sqr {
        return modulator_sums(s, kind, f, phase_c);
    }
    let w = f / s.frame_rate;
    let mut sp = 0.0;
    let mut spp = 0.0;
    let mut syp = 0.0;
    for (t, y) in s.t.iter().zip(&s.y) {
        let x = f * t + phase_c;
        let p = (square_integral(x + 0.5 * w) - square_integral(x - 0.5 * w)) / w;
        sp += p;
        spp += p * p;
        syp += y * p;
    }
    (sp, spp, syp)
}

fn sse_at(s: &Series, kind: PsiKind, f: f64, phase_c: f64) -> f64 {
    let (sp, spp, syp) = smoothed_sums(s, kind, f, phase_c);
    affine(s, sp, spp, syp).2
}

/// Best free-phase sinusoid at `f`: returns (SSE, centre phase).
fn sine_at(s: &Series, f: f64) -> (f64, f64) {
    let n = s.count();
    let (mut ss, mut sc, mut sss, mut scc, mut ssc, mut sys, mut syc) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in s.t.iter().zip(&s.y) {
        let (si, co) = (TAU * f * t).sin_cos();
        ss += si;
        sc += co;
        sss += si * si;
        scc += co * co;
        ssc += si * co;
        sys += y * si;
        syc += y * co;
    }
    let a11 = sss - ss * ss / n;
    let a22 = scc - sc * sc / n;
    let a12 = ssc - ss * sc / n;
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-12 * n * n) {
        return (s.syy, 0.0);
    }
    let a = (a22 * sys - a12 * syc) / det;
    let b = (a11 * syc - a12 * sys) / det;
    let sse = (s.syy - (a * sys + b * syc)).max(0.0);
    (sse, b.atan2(a) / TAU)
}

/// Solves the normal equations of a small dense system by Gaussian
/// elimination with partial pivoting.
fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[piv][col].abs() > 1e-12) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let m = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for k in row + 1..N {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

const POLISH_ITERATIONS: usize = 8;

/// Sawtooth polish: each sample picks the ramp (cycle) index that explains
/// it best, then `y = a + beta t - gamma k` is solved exactly and the phase
/// is centred in the interval that keeps every sample on its ramp.
fn polish_saw(s: &Series, range: (f64, f64), start: (f64, f64)) -> (f64, f64) {
    let (mut f, mut ph) = start;
    let mut best = modulator_sse(s, PsiKind::Saw, f, ph);
    for _ in 0..POLISH_ITERATIONS {
        let (sp, spp, syp) = modulator_sums(s, PsiKind::Saw, f, ph);
        let (b, d, _) = affine(s, sp, spp, syp);
        if !(d > 0.0) {
            break;
        }
        let off = b - s.mean;
        let ks: Vec<f64> = s
            .t
            .iter()
            .zip(&s.y)
            .map(|(&t, &y)| {
                let x = f * t + ph;
                let k0 = (x + 0.5).floor();
                let mut best_k = k0;
                let mut best_e = f64::INFINITY;
                for k in [k0 - 1.0, k0, k0 + 1.0] {
                    let e = (y - off - 2.0 * d * (x - k)).abs();
                    if e < best_e {
                        best_e = e;
                        best_k = k;
                    }
                }
                best_k
            })
            .collect();
        let mut a = [[0.0; 3]; 3];
        let mut rhs = [0.0; 3];
        for ((&t, &y), &k) in s.t.iter().zip(&s.y).zip(&ks) {
            let row = [1.0, t, -k];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += row[i] * row[j];
                }
                rhs[i] += row[i] * y;
            }
        }
        let Some([_, beta, gamma]) = solve(a, rhs) else {
            break;
        };
        if !(gamma > 0.0) {
            break;
        }
        let nf = (beta / gamma).clamp(range.0, range.1);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (&t, &k) in s.t.iter().zip(&ks) {
            lo = lo.max(k - 0.5 - nf * t);
            hi = hi.min(k + 0.5 - nf * t);
        }
        let nph = 0.5 * (lo + hi);
        let v = modulator_sse(s, PsiKind::Saw, nf, nph);
        if v < best {
            best = v;
            f = nf;
            ph = nph;
        } else {
            break;
        }
    }
    (f, ph)
}

/// Square-wave polish. Signs come from the data; each sign change pins a
/// half-cycle boundary between two samples. For a fixed frequency the
/// admissible centre phases form an interval whose width is concave in the
/// frequency, so golden-section maximizes the width and the phase is
/// placed in the middle.
fn polish_sqr(s: &Series, range: (f64, f64), start: (f64, f64)) -> (f64, f64) {
    let (f, ph) = start;
    let best = modulator_sse(s, PsiKind::Sqr, f, ph);
    let (sp, spp, syp) = modulator_sums(s, PsiKind::Sqr, f, ph);
    let (b, d, _) = affine(s, sp, spp, syp);
    if !(d > 0.0) {
        return start;
    }
    let off = b - s.mean;
    // (time before, time after, boundary index m at x = m / 2)
    let mut crossings: Vec<(f64, f64, f64)> = Vec::new();
    for i in 1..s.y.len() {
        let before = s.y[i - 1] > off;
        let after = s.y[i] > off;
        if before == after {
            continue;
        }
        let tm = 0.5 * (s.t[i - 1] + s.t[i]);
        let guess = 2.0 * (f * tm + ph);
        // even boundaries rise (- to +), odd ones fall
        let want_even = after;
        let mut m = guess.round();
        if ((m as i64).rem_euclid(2) == 0) != want_even {
            m = if guess > m { m + 1.0 } else { m - 1.0 };
        }
        crossings.push((s.t[i - 1], s.t[i], m));
    }
    if crossings.is_empty() {
        return start;
    }
    let first_m = crossings[0].2;
    let last_m = crossings.last().unwrap().2;
    let t_first = s.t[0];
    let t_last = *s.t.last().unwrap();
    let bounds = |fr: f64| -> (f64, f64) {
        let mut lo = (first_m - 1.0) / 2.0 - fr * t_first;
        let mut hi = (last_m + 1.0) / 2.0 - fr * t_last;
        for &(ta, tb, m) in &crossings {
            lo = lo.max(m / 2.0 - fr * tb);
            hi = hi.min(m / 2.0 - fr * ta);
        }
        (lo, hi)
    };
    let f_lo = (f * 0.95).max(range.0);
    let f_hi = (f * 1.05).min(range.1);
    let (nf, _) = golden(
        |fr| {
            let (lo, hi) = bounds(fr);
            lo - hi
        },
        f_lo,
        f_hi,
        1e-9,
    );
    let (lo, hi) = bounds(nf);
    let nph = 0.5 * (lo + hi);
    if modulator_sse(s, PsiKind::Sqr, nf, nph) < best {
        (nf, nph)
    } else {
        start
    }
}

fn modulator_sse(s: &Series, kind: PsiKind, f: f64, phase_c: f64) -> f64 {
    let (sp, spp, syp) = modulator_sums(s, kind, f, phase_c);
    affine(s, sp, spp, syp).2
}

/// Golden-section search on `[lo, hi]` until the bracket has shrunk by
/// `ratio`; returns the best point evaluated.
fn golden(mut fun: impl FnMut(f64) -> f64, lo: f64, hi: f64, ratio: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let stop = (hi - lo).abs() * ratio;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = fun(x1);
    let mut f2 = fun(x2);
    while (b - a).abs() > stop {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = fun(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = fun(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Log-frequency grid over the family range.
fn mod_grid(lo: f64, hi: f64) -> Vec<f64> {
    (0..GRID_MOD_POINTS)
        .map(|i| lo * (hi / lo).powf(i as f64 / (GRID_MOD_POINTS - 1) as f64))
        .collect()
}

/// Largest local maxima of the periodogram of the centered series; each
/// seed is (frequency, complex amplitude argument).
fn periodogram_seeds(s: &Series, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let step = 1.0 / (PERIODOGRAM_OVERSAMPLING * s.span_s());
    let count = ((hi - lo) / step).floor() as usize + 1;
    let centre_frame = s.t_c * s.frame_rate;
    let first = s.n[0];
    let last = *s.n.last().unwrap();
    let mut power = Vec::with_capacity(count);
    let mut args = Vec::with_capacity(count);
    for k in 0..count {
        let f = lo + k as f64 * step;
        let w = -TAU * f / s.frame_rate;
        let rot = num_complex::Complex64::from_polar(1.0, w);
        let mut z = num_complex::Complex64::from_polar(1.0, w * (first as f64 - centre_frame));
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        let mut j = 0;
        for frame in first..=last {
            if s.n[j] == frame {
                acc += z * s.y[j];
                j += 1;
            }
            z *= rot;
        }
        power.push(acc.norm_sqr());
        args.push(acc.arg());
    }
    let mut peaks: Vec<usize> = (0..count)
        .filter(|&k| {
            let left = k == 0 || power[k] >= power[k - 1];
            let right = k + 1 == count || power[k] > power[k + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    peaks
        .into_iter()
        .take(PERIODOGRAM_SEEDS)
        .map(|k| (lo + k as f64 * step, args[k]))
        .collect()
}

/// Phase lag of the fundamental of each shape relative to `sin(2 pi x)`.
fn fundamental_offset(kind: PsiKind) -> f64 {
    match kind {
        PsiKind::Tri => -PI / 2.0,
        _ => 0.0,
    }
}

/// Coordinate descent on (f, centre phase) from a start point.
fn refine_free(
    s: &Series,
    kind: PsiKind,
    range: (f64, f64),
    start: (f64, f64),
    mut half_f: f64,
    mut half_phase: f64,
) -> (f64, f64, f64) {
    let (mut f, mut ph) = start;
    let mut best = sse_at(s, kind, f, ph);
    for _ in 0..MAX_PASSES {
        let lo = (f - half_f).max(range.0);
        let hi = (f + half_f).min(range.1);
        if hi > lo {
            let (nf, v) = golden(|x| sse_at(s, kind, x, ph), lo, hi, REFINE_TOLERANCE);
            if v < best {
                f = nf;
                best = v;
            }
        }
        let (np, v) = golden(
            |x| sse_at(s, kind, f, x),
            ph - half_phase,
            ph + half_phase,
            REFINE_TOLERANCE,
        );
        if v < best {
            ph = np;
            best = v;
        }
        half_f = (half_f * 0.1).max(1e-9 * f);
        half_phase = (half_phase * 0.1).max(1e-9);
        if best <= 0.0 {
            break;
        }
    }
    (f, ph, best)
}

fn refine_sine(s: &Series, range: (f64, f64), start: f64, mut half_f: f64) -> (f64, f64) {
    let mut f = start;
    let mut best = sine_at(s, f).0;
    for _ in 0..MAX_PASSES {
        let lo = (f - half_f).max(range.0);
        let hi = (f + half_f).min(range.1);
        if hi <= lo {
            break;
        }
        let (nf, v) = golden(|x| sine_at(s, x).0, lo, hi, REFINE_TOLERANCE);
        if v < best {
            f = nf;
            best = v;
        } else {
            break;
        }
        half_f = (half_f * 0.1).max(1e-9 * f);
    }
    (f, best)
}

/// Best (f, centre phase) for a free-modulation family on one orientation.
fn search_free(s: &Series, kind: PsiKind, range: (f64, f64)) -> (f64, f64) {
    let grid = mod_grid(range.0, range.1);
    let grid_ratio = (range.1 / range.0).powf(1.0 / (GRID_MOD_POINTS - 1) as f64);
    let seeds = periodogram_seeds(s, range.0, range.1);
    let seed_half = 1.0 / (PERIODOGRAM_OVERSAMPLING * s.span_s());
    let mut starts: Vec<(f64, f64, f64, f64)> = Vec::new();

    if kind == PsiKind::Sin {
        let mut nodes: Vec<(f64, f64)> = grid.iter().map(|&f| (sine_at(s, f).0, f)).collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, f) in nodes.iter().take(GRID_NODES_REFINED) {
            starts.push((f, 0.0, f * (grid_ratio - 1.0), 0.0));
        }
        for &(f, _) in &seeds {
            starts.push((f, 0.0, seed_half, 0.0));
        }
        let mut best = (f64::INFINITY, range.0);
        for (f0, _, half, _) in starts {
            let (f, v) = refine_sine(s, range, f0, half);
            if v < best.0 {
                best = (v, f);
            }
        }
        let phase = sine_at(s, best.1).1;
        return (best.1, phase);
    }

    let mut nodes: Vec<(f64, f64, f64)> = Vec::with_capacity(grid.len() * GRID_PHASE_POINTS);
    for &f in &grid {
        for j in 0..GRID_PHASE_POINTS {
            let ph = j as f64 / GRID_PHASE_POINTS as f64;
            nodes.push((sse_at(s, kind, f, ph), f, ph));
        }
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(_, f, ph) in nodes.iter().take(GRID_NODES_REFINED) {
        starts.push((f, ph, f * (grid_ratio - 1.0), 1.0 / GRID_PHASE_POINTS as f64));
    }
    let offset = fundamental_offset(kind);
    for &(f, arg) in &seeds {
        let ph = (arg + PI / 2.0 - offset) / TAU;
        starts.push((f, ph, seed_half, 1.0 / GRID_PHASE_POINTS as f64));
    }
    let mut best = (f64::INFINITY, range.0, 0.0);
    for (f0, ph0, hf, hp) in starts {
        let (mut f, mut ph, _) = refine_free(s, kind, range, (f0, ph0), hf, hp);
        match kind {
            PsiKind::Saw => (f, ph) = polish_saw(s, range, (f, ph)),
            PsiKind::Sqr => (f, ph) = polish_sqr(s, range, (f, ph)),
            _ => {}
        }
        let v = modulator_sse(s, kind, f, ph);
        if v < best.0 {
            best = (v, f, ph);
        }
    }
    (best.1, best.2)
}

fn residual(c: &PitchContour, params: &ContourParams) -> Result<f64> {
    let model = eval_contour(params, c.frame_rate)?;
    if model.len() != c.len() {
        return Err(SpcError::Internal(format!(
            "model has {} frames, data {}",
            model.len(),
            c.len()
        )));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for n in 0..c.len() {
        if c.is_voiced(n) {
            let d = 1200.0 * (c.values[n] / model.values[n]).log2();
            sse += d * d;
            count += 1;
        }
    }
    Ok((sse / count as f64).sqrt())
}

/// Fits one orientation (the data already reversed when `reversed`).
fn fit_oriented(s: &Series, kind: ContourType, reversed: bool) -> ContourParams {
    let psi_kind = kind.psi_kind();
    let duration_s = s.span_s();
    let (mod_hz, phase_c, base, extent) = match kind {
        ContourType::Stable => (1.0, 0.0, s.mean, 0.0),
        ContourType::Glissando | ContourType::Bend => {
            let f = if kind == ContourType::Glissando { 0.5 } else { 1.0 };
            let ph = -0.25 + f * s.t_c;
            let (sp, spp, syp) = modulator_sums(s, psi_kind, f, ph);
            let (b, d, _) = affine(s, sp, spp, syp);
            (f, ph, b, d)
        }
        _ => {
            let range = mod_range(kind).unwrap();
            let (f, ph) = search_free(s, psi_kind, range);
            let (sp, spp, syp) = modulator_sums(s, psi_kind, f, ph);
            let (b, d, _) = affine(s, sp, spp, syp);
            (f, ph, b, d)
        }
    };
    let phase = match kind {
        ContourType::Stable => 0.0,
        ContourType::Glissando | ContourType::Bend => -0.25,
        _ => (phase_c - mod_hz * s.t_c).rem_euclid(1.0),
    };
    let max_base = 1200.0 * (MAX_BASE_HZ / CENTS_REFERENCE_HZ).log2();
    ContourParams {
        kind,
        base_hz: CENTS_REFERENCE_HZ * (base.clamp(0.0, max_base) / 1200.0).exp2(),
        extent_cents: if kind == ContourType::Stable { 0.0 } else { extent },
        mod_hz,
        phase,
        duration_s,
        reversed,
    }
}

fn check(c: &PitchContour) -> Result<()> {
    c.validate()?;
    let voiced = c.voiced_count();
    if voiced < MIN_VOICED_FRAMES {
        return Err(SpcError::domain(format!(
            "need at least {MIN_VOICED_FRAMES} voiced frames, got {voiced}"
        )));
    }
    Ok(())
}

/// Least-squares fit of one family; reversible families also try the
/// time-reversed variant and keep the better one.
pub fn fit_contour(c: &PitchContour, kind: ContourType) -> Result<ContourFit> {
    check(c)?;
    let forward = Series::new(c)?;
    let mut best: Option<ContourFit> = None;
    let orientations: &[bool] = if kind.is_reversible() { &[false, true] } else { &[false] };
    for &reversed in orientations {
        let params = if reversed {
            fit_oriented(&Series::new(&reverse_contour(c))?, kind, true)
        } else {
            fit_oriented(&forward, kind, false)
        };
        let r = residual(c, &params)?;
        if best.map_or(true, |b| r < b.residual_cents - TIE_TOLERANCE_CENTS) {
            best = Some(ContourFit {
                kind,
                params,
                residual_cents: r,
            });
        }
    }
    Ok(best.unwrap())
}

/// Fits every family and returns the one with the smallest residual.
pub fn classify_contour(c: &PitchContour) -> Result<ContourFit> {
    Ok(fit_all(c)?.0)
}

/// Best fit plus the fits of all families in [`FAMILY_PRIORITY`] order.
pub fn fit_all(c: &PitchContour) -> Result<(ContourFit, Vec<ContourFit>)> {
    let fits = FAMILY_PRIORITY
        .iter()
        .map(|&k| fit_contour(c, k))
        .collect::<Result<Vec<_>>>()?;
    let mut best = fits[0];
    for f in &fits[1..] {
        if f.residual_cents < best.residual_cents - TIE_TOLERANCE_CENTS {
            best = *f;
        }
    }
    Ok((best, fits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: ContourType, fb: f64, d: f64, fm: f64, phi: f64, rev: bool) -> ContourParams {
        ContourParams {
            kind,
            base_hz: fb,
            extent_cents: d,
            mod_hz: fm,
            phase: phi,
            duration_s: 1.0,
            reversed: rev,
        }
    }

    fn contour(p: &ContourParams) -> PitchContour {
        eval_contour(p, 1000.0).unwrap()
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, v) = golden(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-6);
        assert!((x - 0.3).abs() < 1e-5);
        assert!(v < 1e-10);
    }

    #[test]
    fn stable_recovery() {
        let c = contour(&ContourParams::stable(440.0, 1.0));
        let fit = fit_contour(&c, ContourType::Stable).unwrap();
        assert!(fit.residual_cents < 0.01);
        assert!((fit.base_cents() - hz_to_cents(440.0).unwrap()).abs() < 0.1);
        assert_eq!(classify_contour(&c).unwrap().kind, ContourType::Stable);
    }

    #[test]
    fn vibrato_recovery_and_stable_misfit() {
        let c = contour(&params(ContourType::Vibrato, 1000.0, 300.0, 7.0, 0.3, false));
        let fit = fit_contour(&c, ContourType::Vibrato).unwrap();
        assert!((fit.params.extent_cents - 300.0).abs() < 3.0);
        assert!((fit.params.mod_hz - 7.0).abs() < 0.1);
        assert!(fit.residual_cents < 1e-3, "residual {}", fit.residual_cents);
        let flat = fit_contour(&c, ContourType::Stable).unwrap();
        // seven full periods: the sampled RMS equals the continuous one
        assert!((flat.residual_cents - 300.0 / 2f64.sqrt()).abs() < 1.0);
    }

    #[test]
    fn glissando_not_stable() {
        let c = contour(&params(ContourType::Glissando, 500.0, 600.0, 0.5, -0.25, false));
        let fit = classify_contour(&c).unwrap();
        assert_eq!(fit.kind, ContourType::Glissando);
        assert!(!fit.params.reversed);
        let rev = classify_contour(&reverse_contour(&c)).unwrap();
        assert_eq!(rev.kind, ContourType::Glissando);
        assert!(rev.params.reversed);
        assert!((rev.params.extent_cents - 600.0).abs() < 1e-6);
    }

    #[test]
    fn free_families_recover() {
        let cases = [
            params(ContourType::Alternating, 300.0, 400.0, 3.3, 0.71, false),
            params(ContourType::Sawtooth, 800.0, 250.0, 61.7, 0.12, true),
            params(ContourType::Triangle, 120.0, 900.0, 97.0, 0.55, false),
            params(ContourType::Vibrato, 2000.0, 50.0, 88.8, 0.9, false),
        ];
        for p in cases {
            let fit = classify_contour(&contour(&p)).unwrap();
            assert_eq!(fit.kind, p.kind, "{p:?} -> {fit:?}");
            assert!(fit.residual_cents < 1.0, "{p:?} -> {fit:?}");
            assert!((fit.params.mod_hz - p.mod_hz).abs() < 0.05, "{p:?} -> {fit:?}");
        }
    }

    #[test]
    fn too_few_frames() {
        let c = PitchContour::voiced(1000.0, vec![440.0; 49]);
        assert!(fit_contour(&c, ContourType::Stable).is_err());
    }
}
