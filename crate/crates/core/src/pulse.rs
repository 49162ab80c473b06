//! Prototype pulses and the pulse-dependent scalars that drive the
//! asymptotic MSE expressions.
//!
//! A pulse is a length-`2*M*kappa` sampling of an analog waveform supported
//! on `kappa` multicarrier symbol periods. Samples live on the half-offset
//! grid `t_n = (n - (2*M*kappa - 1)/2) * T_s / (2*M)` with `T_s = 1`, so the
//! grid never touches the support endpoints and even-length symmetry is
//! exact. Derivative pulses are sampled from the analytic derivative of the
//! closed form, never from finite differences.
//!
//! The base pulse is normalized so that the perfect-reconstruction gain (the
//! mean of the central column of `U+ R(p,p)`) equals 1, which is the same as
//! fixing the sample energy to `M`. Under that convention the scalar
//! `eta_pm(0,0,0,0)` of a PR pulse equals 1/2, and the synthesis/analysis
//! chain in [`crate::modem`] has unit end-to-end gain.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::linalg::RMat;
use crate::{FbmcError, Result};

// ---------------------------------------------------------------------------
// pulse construction

/// Reflection parity of a pulse about the center of its support.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
}

impl Symmetry {
    fn sign(self) -> f64 {
        match self {
            Symmetry::Symmetric => 1.0,
            Symmetry::Antisymmetric => -1.0,
        }
    }

    fn flipped(self) -> Symmetry {
        match self {
            Symmetry::Symmetric => Symmetry::Antisymmetric,
            Symmetry::Antisymmetric => Symmetry::Symmetric,
        }
    }
}

impl fmt::Display for Symmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symmetry::Symmetric => write!(f, "symmetric"),
            Symmetry::Antisymmetric => write!(f, "antisymmetric"),
        }
    }
}

/// Closed-form description of the analog waveform behind a pulse, kept so
/// that derivatives can be sampled analytically.
#[derive(Clone, Debug)]
enum PulseForm {
    /// `scale * [sum_k cos_coeffs[k] cos(pi k t / kappa)
    ///           + sum_k sin_coeffs[k] sin(pi k t / kappa)]`
    /// with `t` in symbol periods, support `[-kappa/2, kappa/2]`. Harmonics
    /// advance in half steps: even `k` repeats with period `kappa`, odd `k`
    /// vanishes at the support edges.
    TrigPoly {
        scale: f64,
        cos_coeffs: Vec<f64>,
        sin_coeffs: Vec<f64>,
    },
    /// Samples supplied directly; no analytic derivative available.
    Tabulated,
}

/// A sampled prototype pulse (possibly a derivative of one).
#[derive(Clone, Debug)]
pub struct PrototypePulse {
    m: usize,
    kappa: usize,
    derivative_order: usize,
    symmetry: Symmetry,
    samples: Vec<f64>,
    form: PulseForm,
}

/// Frequency-sampling coefficients of the PHYDYAS prototype family.
fn phydyas_coeffs(kappa: usize) -> Result<Vec<f64>> {
    let k2 = std::f64::consts::FRAC_1_SQRT_2;
    match kappa {
        2 => Ok(vec![1.0, k2]),
        3 => Ok(vec![1.0, 0.911_438, 0.411_438]),
        4 => Ok(vec![1.0, 0.971_960, k2, 0.235_147]),
        other => Err(FbmcError::Unsupported {
            what: "PHYDYAS overlapping factor",
            value: other.to_string(),
        }),
    }
}

impl PrototypePulse {
    /// PHYDYAS prototype with `2*M` subcarriers and overlapping factor
    /// `kappa` in {2, 3, 4}, normalized to unit reconstruction gain.
    pub fn phydyas(m: usize, kappa: usize) -> Result<PrototypePulse> {
        let coeffs = phydyas_coeffs(kappa)?;
        // Centered form: the frequency-sampled waveform is
        // c0 + 2 sum_k K_k cos(2 pi k t / kappa) on [-kappa/2, kappa/2],
        // which lives on the even half-harmonics of the closed form.
        let mut cos_coeffs = vec![0.0; 2 * coeffs.len() - 1];
        cos_coeffs[0] = coeffs[0];
        for (k, c) in coeffs[1..].iter().enumerate() {
            cos_coeffs[2 * (k + 1)] = 2.0 * c;
        }
        PrototypePulse::trig_poly(m, kappa, cos_coeffs, Vec::new(), true)
    }

    /// Rectangular kappa = 1 pulse: the exact perfect-reconstruction case
    /// (plain OQAM-OFDM). Useful as a reference in tests.
    pub fn rectangular(m: usize) -> Result<PrototypePulse> {
        PrototypePulse::trig_poly(m, 1, vec![1.0], Vec::new(), true)
    }

    /// Half-cosine arch on a single symbol period: `cos(pi t)` with kappa = 1.
    /// Power complementary across the fold for every `M`, so it reconstructs
    /// perfectly while staying smooth, unlike the rectangular pulse. The
    /// reference pulse for checking asymptotic identities without the
    /// near-reconstruction floor of the PHYDYAS family.
    pub fn cosine_arch(m: usize) -> Result<PrototypePulse> {
        PrototypePulse::trig_poly(m, 1, vec![0.0, 1.0], Vec::new(), true)
    }

    /// Phase-warped arch `cos(pi t + warp sin(4 pi t) / 4)`, kappa = 1.
    ///
    /// The warped phase still satisfies `psi(t) + psi(1/2 - t) = pi/2`
    /// pointwise, so power complementarity, and with it perfect
    /// reconstruction, holds exactly at every sample for every `warp`. Unlike
    /// the plain arch the shape is generic enough that the finer asymptotic
    /// identities have visible nonzero residuals, which makes this the pulse
    /// of choice for measuring their decay rates. The waveform is projected
    /// onto odd half-harmonics (coefficients fall off super-exponentially) so
    /// the closed form and analytic derivatives survive.
    pub fn warped_arch(m: usize, warp: f64) -> Result<PrototypePulse> {
        if !warp.is_finite() || warp.abs() > 2.0 {
            return Err(FbmcError::InvalidConfig(format!(
                "warp {warp} outside the sane range [-2, 2]"
            )));
        }
        let g = |t: f64| (std::f64::consts::PI * t + warp * (4.0 * std::f64::consts::PI * t).sin() / 4.0).cos();
        // Least-squares fit of g on the odd half-harmonics cos(pi k t),
        // k = 1, 3, ..., which are orthogonal on [0, 1/2] for even functions.
        let orders: Vec<usize> = (0..16).map(|r| 2 * r + 1).collect();
        let grid = 2048usize;
        let mut design = RMat::zeros(grid, orders.len());
        let mut target = nalgebra::DVector::zeros(grid);
        for j in 0..grid {
            let t = (j as f64 + 0.5) / (2.0 * grid as f64);
            target[j] = g(t);
            for (col, k) in orders.iter().enumerate() {
                design[(j, col)] = (std::f64::consts::PI * *k as f64 * t).cos();
            }
        }
        let fitted = design
            .clone()
            .svd(true, true)
            .solve(&target, 1e-14)
            .map_err(|_| FbmcError::SingularMatrix {
                context: "warped_arch harmonic fit",
            })?;
        let worst = (design * &fitted - target)
            .iter()
            .fold(0.0f64, |a, x| a.max(x.abs()));
        if worst > 1e-12 {
            return Err(FbmcError::InvalidConfig(format!(
                "warped arch harmonic fit left residual {worst:.3e}"
            )));
        }
        let mut cos_coeffs = vec![0.0; orders[orders.len() - 1] + 1];
        for (col, k) in orders.iter().enumerate() {
            cos_coeffs[*k] = fitted[col];
        }
        PrototypePulse::trig_poly(m, 1, cos_coeffs, Vec::new(), true)
    }

    /// Build a pulse from a trigonometric closed form. Exactly one of the
    /// coefficient sets may be non-empty so the parity is well defined.
    /// With `normalize` set the waveform is rescaled to sample energy `M`
    /// (unit PR gain).
    pub fn trig_poly(
        m: usize,
        kappa: usize,
        cos_coeffs: Vec<f64>,
        sin_coeffs: Vec<f64>,
        normalize: bool,
    ) -> Result<PrototypePulse> {
        if m == 0 || kappa == 0 {
            return Err(FbmcError::InvalidConfig(
                "pulse requires m >= 1 and kappa >= 1".into(),
            ));
        }
        let has_cos = cos_coeffs.iter().any(|&c| c != 0.0);
        let has_sin = sin_coeffs.iter().any(|&c| c != 0.0);
        if has_cos && has_sin {
            return Err(FbmcError::InvalidConfig(
                "mixed cos/sin closed forms have no definite parity".into(),
            ));
        }
        let symmetry = if has_sin {
            Symmetry::Antisymmetric
        } else {
            Symmetry::Symmetric
        };
        let mut form = PulseForm::TrigPoly {
            scale: 1.0,
            cos_coeffs,
            sin_coeffs,
        };
        let raw = sample_form(&form, m, kappa, symmetry);
        let energy: f64 = raw.iter().map(|x| x * x).sum();
        let scale = if normalize {
            if energy == 0.0 {
                return Err(FbmcError::InvalidConfig(
                    "cannot normalize an all-zero pulse".into(),
                ));
            }
            (m as f64 / energy).sqrt()
        } else {
            1.0
        };
        if let PulseForm::TrigPoly { scale: s, .. } = &mut form {
            *s = scale;
        }
        let samples = raw.iter().map(|x| x * scale).collect();
        Ok(PrototypePulse {
            m,
            kappa,
            derivative_order: 0,
            symmetry,
            samples,
            form,
        })
    }

    /// Wrap externally supplied samples (no analytic derivatives).
    pub fn from_samples(
        m: usize,
        kappa: usize,
        derivative_order: usize,
        symmetry: Symmetry,
        samples: Vec<f64>,
    ) -> Result<PrototypePulse> {
        if samples.len() != 2 * m * kappa {
            return Err(FbmcError::DimensionMismatch {
                context: "PrototypePulse::from_samples",
                expected: format!("{} samples", 2 * m * kappa),
                got: samples.len().to_string(),
            });
        }
        Ok(PrototypePulse {
            m,
            kappa,
            derivative_order,
            symmetry,
            samples,
            form: PulseForm::Tabulated,
        })
    }

    /// Analytic `r`-th derivative of this pulse, sampled on the same grid.
    /// Derivatives are taken in units of the symbol period, matching the
    /// `1/(2M)` expansion steps of the demodulator model.
    pub fn derivative(&self, r: usize) -> Result<PrototypePulse> {
        if r == 0 {
            return Ok(self.clone());
        }
        let PulseForm::TrigPoly {
            scale,
            cos_coeffs,
            sin_coeffs,
        } = &self.form
        else {
            return Err(FbmcError::Unsupported {
                what: "derivative of a tabulated pulse",
                value: format!("order {r}"),
            });
        };
        let kappa = self.kappa as f64;
        let n = cos_coeffs.len().max(sin_coeffs.len());
        let mut cos_c = vec![0.0; n];
        let mut sin_c = vec![0.0; n];
        for k in 0..n {
            cos_c[k] = cos_coeffs.get(k).copied().unwrap_or(0.0);
            sin_c[k] = sin_coeffs.get(k).copied().unwrap_or(0.0);
        }
        for _ in 0..r {
            let mut next_cos = vec![0.0; n];
            let mut next_sin = vec![0.0; n];
            for k in 1..n {
                let w = std::f64::consts::PI * k as f64 / kappa;
                next_sin[k] = -cos_c[k] * w;
                next_cos[k] = sin_c[k] * w;
            }
            cos_c = next_cos;
            sin_c = next_sin;
        }
        let symmetry = if r % 2 == 0 {
            self.symmetry
        } else {
            self.symmetry.flipped()
        };
        let form = PulseForm::TrigPoly {
            scale: *scale,
            cos_coeffs: cos_c,
            sin_coeffs: sin_c,
        };
        let samples = sample_form(&form, self.m, self.kappa, symmetry);
        Ok(PrototypePulse {
            m: self.m,
            kappa: self.kappa,
            derivative_order: self.derivative_order + r,
            symmetry,
            samples,
            form,
        })
    }

    /// Closed-form value of the analog waveform at time `t` (in symbol
    /// periods, support `[-kappa/2, kappa/2]`).
    pub fn analog_value(&self, t: f64) -> Result<f64> {
        let PulseForm::TrigPoly {
            scale,
            cos_coeffs,
            sin_coeffs,
        } = &self.form
        else {
            return Err(FbmcError::Unsupported {
                what: "analog evaluation of a tabulated pulse",
                value: String::new(),
            });
        };
        let kappa = self.kappa as f64;
        let mut acc = 0.0;
        for (k, c) in cos_coeffs.iter().enumerate() {
            acc += c * (std::f64::consts::PI * k as f64 * t / kappa).cos();
        }
        for (k, s) in sin_coeffs.iter().enumerate() {
            acc += s * (std::f64::consts::PI * k as f64 * t / kappa).sin();
        }
        Ok(scale * acc)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of subcarriers `2M`.
    pub fn two_m(&self) -> usize {
        2 * self.m
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn derivative_order(&self) -> usize {
        self.derivative_order
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Sample instant of index `n` in symbol periods, centered on 0.
    pub fn sample_time(&self, n: usize) -> f64 {
        let l = self.len() as i64;
        (2 * n as i64 - l + 1) as f64 / (4.0 * self.m as f64)
    }

    // -- CSV round trip ------------------------------------------------------

    /// One sample per line, preceded by a header carrying the grid geometry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "m,kappa,derivative_order,symmetry")?;
        writeln!(
            out,
            "{},{},{},{}",
            self.m, self.kappa, self.derivative_order, self.symmetry
        )?;
        writeln!(out, "sample")?;
        for s in &self.samples {
            writeln!(out, "{s}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<PrototypePulse> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| FbmcError::Parse("empty pulse CSV".into()))?;
        if header.trim() != "m,kappa,derivative_order,symmetry" {
            return Err(FbmcError::Parse(format!("unexpected header: {header}")));
        }
        let meta = lines
            .next()
            .transpose()?
            .ok_or_else(|| FbmcError::Parse("missing metadata line".into()))?;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(FbmcError::Parse(format!("bad metadata line: {meta}")));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| FbmcError::Parse(format!("{s}: {e}")))
        };
        let m = parse_usize(fields[0])?;
        let kappa = parse_usize(fields[1])?;
        let derivative_order = parse_usize(fields[2])?;
        let symmetry = match fields[3] {
            "symmetric" => Symmetry::Symmetric,
            "antisymmetric" => Symmetry::Antisymmetric,
            other => return Err(FbmcError::Parse(format!("bad symmetry: {other}"))),
        };
        let column = lines
            .next()
            .transpose()?
            .ok_or_else(|| FbmcError::Parse("missing sample column header".into()))?;
        if column.trim() != "sample" {
            return Err(FbmcError::Parse(format!("bad column header: {column}")));
        }
        let mut samples = Vec::with_capacity(2 * m * kappa);
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            samples.push(
                t.parse::<f64>()
                    .map_err(|e| FbmcError::Parse(format!("{t}: {e}")))?,
            );
        }
        PrototypePulse::from_samples(m, kappa, derivative_order, symmetry, samples)
    }
}

/// Sample a closed form on the half-offset grid, mirroring the first half so
/// the declared parity holds bit-exactly.
fn sample_form(form: &PulseForm, m: usize, kappa: usize, symmetry: Symmetry) -> Vec<f64> {
    let len = 2 * m * kappa;
    let eval = |t: f64| -> f64 {
        let PulseForm::TrigPoly {
            scale,
            cos_coeffs,
            sin_coeffs,
        } = form
        else {
            unreachable!("tabulated pulses are never resampled")
        };
        let kap = kappa as f64;
        let mut acc = 0.0;
        for (k, c) in cos_coeffs.iter().enumerate() {
            if *c != 0.0 {
                acc += c * (std::f64::consts::PI * k as f64 * t / kap).cos();
            }
        }
        for (k, s) in sin_coeffs.iter().enumerate() {
            if *s != 0.0 {
                acc += s * (std::f64::consts::PI * k as f64 * t / kap).sin();
            }
        }
        scale * acc
    };
    let mut samples = vec![0.0; len];
    let sign = symmetry.sign();
    for n in 0..len / 2 {
        let t = (2 * n as i64 - len as i64 + 1) as f64 / (4.0 * m as f64);
        let v = eval(t);
        samples[n] = v;
        samples[len - 1 - n] = sign * v;
    }
    samples
}

// ---------------------------------------------------------------------------
// pulse matrices and eta scalars

/// The two `2M x (2 kappa - 1)` matrices that encode how staggered symbol
/// windows of two pulses interact: `R` from aligned polyphase rows, `S` from
/// the half-period swapped rows.
pub struct PulseMatrices {
    pub r: RMat,
    pub s: RMat,
}

fn check_same_grid(p: &PrototypePulse, q: &PrototypePulse) -> Result<()> {
    if p.m != q.m || p.kappa != q.kappa {
        return Err(FbmcError::DimensionMismatch {
            context: "pulse_matrices",
            expected: format!("(m, kappa) = ({}, {})", p.m, p.kappa),
            got: format!("({}, {})", q.m, q.kappa),
        });
    }
    Ok(())
}

/// Row-wise convolution of the column-reshaped sample matrices of `p` and
/// the row-reversed reshape of `q`.
pub fn pulse_matrices(p: &PrototypePulse, q: &PrototypePulse) -> Result<PulseMatrices> {
    check_same_grid(p, q)?;
    let two_m = p.two_m();
    let m = p.m;
    let kappa = p.kappa;
    let cols = 2 * kappa - 1;
    // Column-wise reshape: P[i][j] = p[j * 2M + i].
    let pm = |s: &[f64], i: usize, j: usize| s[j * two_m + i];
    let mut r = RMat::zeros(two_m, cols);
    let mut s = RMat::zeros(two_m, cols);
    for i in 0..two_m {
        let iq = two_m - 1 - i; // row of the exchanged Q
        let ip_swap = (i + m) % two_m; // half-period block swap of P
        for c in 0..cols {
            let mut acc_r = 0.0;
            let mut acc_s = 0.0;
            let j_lo = c.saturating_sub(kappa - 1);
            let j_hi = c.min(kappa - 1);
            for j in j_lo..=j_hi {
                let qv = pm(&q.samples, iq, c - j);
                acc_r += pm(&p.samples, i, j) * qv;
                acc_s += pm(&p.samples, ip_swap, j) * qv;
            }
            r[(i, c)] = acc_r;
            s[(i, c)] = acc_s;
        }
    }
    Ok(PulseMatrices { r, s })
}

/// Index reflected within its `M`-sized half block.
fn block_flip(i: usize, m: usize) -> usize {
    if i < m {
        m - 1 - i
    } else {
        m + (2 * m - 1 - i)
    }
}

/// tr[(I_2 (x) (I_M + sign J_M)) X Y^T] for the row-reflection structure.
fn folded_trace(x: &RMat, y: &RMat, m: usize, sign: f64) -> f64 {
    let rows = x.nrows();
    let cols = x.ncols();
    let mut acc = 0.0;
    for i in 0..rows {
        let fi = block_flip(i, m);
        for c in 0..cols {
            acc += (x[(i, c)] + sign * x[(fi, c)]) * y[(i, c)];
        }
    }
    acc
}

/// The pair `(eta^{(+,-)}, eta^{(-,+)})` for four pulses on a shared grid.
pub fn eta(
    p: &PrototypePulse,
    q: &PrototypePulse,
    r: &PrototypePulse,
    s: &PrototypePulse,
) -> Result<(f64, f64)> {
    check_same_grid(p, q)?;
    check_same_grid(p, r)?;
    check_same_grid(p, s)?;
    let pq = pulse_matrices(p, q)?;
    let rs = pulse_matrices(r, s)?;
    let m = p.m;
    let norm = 1.0 / p.two_m() as f64;
    let eta_pm = norm
        * (folded_trace(&pq.r, &rs.r, m, 1.0) + folded_trace(&pq.s, &rs.s, m, -1.0));
    let eta_mp = norm
        * (folded_trace(&pq.r, &rs.r, m, -1.0) + folded_trace(&pq.s, &rs.s, m, 1.0));
    Ok((eta_pm, eta_mp))
}

// ---------------------------------------------------------------------------
// eta tables

/// All eta pairs over derivative orders up to 2, plus the two normalized
/// scalars that appear in the asymptotic MSE.
#[derive(Clone, Debug)]
pub struct EtaTable {
    pub m: usize,
    pub kappa: usize,
    entries: BTreeMap<(u8, u8, u8, u8), (f64, f64)>,
    /// First-derivative weight `2 eta_pm(1,0,1,0) / (2M)^2`.
    pub alpha: f64,
    /// Companion weight `2 eta_mp(0,0,1,1) / (2M)^2`.
    pub beta: f64,
}

impl EtaTable {
    pub fn eta_pm(&self, idx: (u8, u8, u8, u8)) -> Option<f64> {
        self.entries.get(&idx).map(|e| e.0)
    }

    pub fn eta_mp(&self, idx: (u8, u8, u8, u8)) -> Option<f64> {
        self.entries.get(&idx).map(|e| e.1)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(u8, u8, u8, u8), &(f64, f64))> {
        self.entries.iter()
    }
}

/// Compute the eta table of a base pulse (derivative order 0).
pub fn eta_table(pulse: &PrototypePulse) -> Result<EtaTable> {
    if pulse.derivative_order != 0 {
        return Err(FbmcError::InvalidConfig(
            "eta tables are defined for base pulses".into(),
        ));
    }
    let derivs = [pulse.clone(), pulse.derivative(1)?, pulse.derivative(2)?];
    // Cache the convolution matrices of all ordered pulse pairs.
    let mut mats: Vec<Vec<PulseMatrices>> = Vec::with_capacity(3);
    for a in &derivs {
        let mut row = Vec::with_capacity(3);
        for b in &derivs {
            row.push(pulse_matrices(a, b)?);
        }
        mats.push(row);
    }
    let m = pulse.m;
    let norm = 1.0 / pulse.two_m() as f64;
    let mut entries = BTreeMap::new();
    for a in 0..3u8 {
        for b in 0..3u8 {
            for c in 0..3u8 {
                for d in 0..3u8 {
                    let pq = &mats[a as usize][b as usize];
                    let rs = &mats[c as usize][d as usize];
                    let pm = norm
                        * (folded_trace(&pq.r, &rs.r, m, 1.0)
                            + folded_trace(&pq.s, &rs.s, m, -1.0));
                    let mp = norm
                        * (folded_trace(&pq.r, &rs.r, m, -1.0)
                            + folded_trace(&pq.s, &rs.s, m, 1.0));
                    entries.insert((a, b, c, d), (pm, mp));
                }
            }
        }
    }
    let two_m_sq = (pulse.two_m() as f64).powi(2);
    let alpha = 2.0 * entries[&(1, 0, 1, 0)].0 / two_m_sq;
    let beta = 2.0 * entries[&(0, 0, 1, 1)].1 / two_m_sq;
    Ok(EtaTable {
        m: pulse.m,
        kappa: pulse.kappa,
        entries,
        alpha,
        beta,
    })
}

// ---------------------------------------------------------------------------
// reconstruction residuals

/// How far a pulse is from perfect reconstruction.
#[derive(Clone, Copy, Debug)]
pub struct PrResidual {
    /// Largest deviation of the central column of `U+ R(p,p)` from 1.
    pub max_center_deviation: f64,
    /// Largest off-central entry of `U+ R(p,p)`.
    pub max_off_center: f64,
    /// Largest entry of `U- S(p,p)`.
    pub max_s_entry: f64,
    /// Predicted back-to-back relative symbol MSE, `2 (eta_pm(0,0,0,0) - 1/2)`.
    /// This is what an end-to-end modem run should reproduce.
    pub energy: f64,
}

impl PrResidual {
    /// Single headline number: the worst entrywise deviation.
    pub fn max_abs(&self) -> f64 {
        self.max_center_deviation
            .max(self.max_off_center)
            .max(self.max_s_entry)
    }
}

/// Measure the perfect-reconstruction residual of a base pulse.
pub fn pr_residual(pulse: &PrototypePulse) -> Result<PrResidual> {
    let mats = pulse_matrices(pulse, pulse)?;
    let m = pulse.m;
    let two_m = pulse.two_m();
    let center = pulse.kappa - 1;
    let cols = 2 * pulse.kappa - 1;
    let mut max_center_deviation: f64 = 0.0;
    let mut max_off_center: f64 = 0.0;
    let mut max_s_entry: f64 = 0.0;
    for i in 0..two_m {
        let fi = block_flip(i, m);
        for c in 0..cols {
            let up_r = mats.r[(i, c)] + mats.r[(fi, c)];
            let um_s = mats.s[(i, c)] - mats.s[(fi, c)];
            max_s_entry = max_s_entry.max(um_s.abs());
            if c == center {
                max_center_deviation = max_center_deviation.max((up_r - 1.0).abs());
            } else {
                max_off_center = max_off_center.max(up_r.abs());
            }
        }
    }
    let (eta0000, _) = eta(pulse, pulse, pulse, pulse)?;
    Ok(PrResidual {
        max_center_deviation,
        max_off_center,
        max_s_entry,
        energy: 2.0 * (eta0000 - 0.5),
    })
}

// ---------------------------------------------------------------------------
// perfect-reconstruction projection

/// Lags 0..kappa-1 of `corr(a, a) + corr(b, b)` minus a unit impulse at lag 0.
/// Zero for all orbits is exactly the folded reconstruction condition.
fn orbit_residual(a: &[f64], b: &[f64], kappa: usize) -> Vec<f64> {
    let mut out = vec![0.0; kappa];
    for lag in 0..kappa {
        let mut acc = 0.0;
        for j in 0..kappa - lag {
            acc += a[j] * a[j + lag] + b[j] * b[j + lag];
        }
        out[lag] = acc - if lag == 0 { 1.0 } else { 0.0 };
    }
    out
}

/// PHYDYAS-shaped pulse repaired to perfect reconstruction on this exact grid.
///
/// The frequency-sampled coefficients reconstruct only approximately: the
/// folded off-center correlations sit near 5e-4 and never shrink with `M`,
/// which leaves a floor under the finer asymptotic identities. For a
/// symmetric pulse the reconstruction conditions decouple into orbits of four
/// polyphase rows, where they reduce to a complementary-pair equation
/// `corr(a,a) + corr(b,b) = delta` per orbit. The repair solves all orbits
/// jointly: a Gauss-Newton iteration whose step minimizes the curvature of
/// the correction profile subject to the linearized orbit constraints, so the
/// correction converges to a smooth waveform instead of the jagged pointwise
/// minimum-norm one. The repaired samples are then interpolated exactly in
/// the cosine basis so the closed form, and with it analytic derivatives,
/// survives.
pub fn pr_projected_phydyas(m: usize, kappa: usize) -> Result<PrototypePulse> {
    if m % 2 != 0 {
        return Err(FbmcError::InvalidConfig(
            "reconstruction projection needs even m (orbits pair up)".into(),
        ));
    }
    let base = PrototypePulse::phydyas(m, kappa)?;
    let two_m = 2 * m;
    let len = two_m * kappa;
    let n_orbits = m / 2;
    let n_x = n_orbits * 2 * kappa;
    let n_c = n_orbits * kappa;
    // Orbit unknowns: x[o * 2k + j] = a_o[j], x[o * 2k + k + j] = b_o[j],
    // where a_o is polyphase row o and b_o is row m-1-o.
    let mut x = vec![0.0; n_x];
    for o in 0..n_orbits {
        for j in 0..kappa {
            x[o * 2 * kappa + j] = base.samples()[j * two_m + o];
            x[o * 2 * kappa + kappa + j] = base.samples()[j * two_m + (m - 1 - o)];
        }
    }
    let x0 = x.clone();
    // Sample index -> unknown index over the first half of the pulse, used to
    // express the correction as a time profile for the curvature penalty.
    let unknown_of = |n: usize| -> usize {
        let j = n / two_m;
        let i = n % two_m;
        if i < m / 2 {
            i * 2 * kappa + j
        } else if i < m {
            (m - 1 - i) * 2 * kappa + kappa + j
        } else if i < m + m / 2 {
            (i - m) * 2 * kappa + kappa + (kappa - 1 - j)
        } else {
            (two_m - 1 - i) * 2 * kappa + (kappa - 1 - j)
        }
    };
    // Quadratic objective: sum of squared second differences of the
    // correction over the first half, plus a small ridge for uniqueness.
    let n_half = len / 2;
    let mut gram = RMat::zeros(n_x, n_x);
    for n in 1..n_half - 1 {
        let idx = [unknown_of(n - 1), unknown_of(n), unknown_of(n + 1)];
        let w = [1.0, -2.0, 1.0];
        for p in 0..3 {
            for q in 0..3 {
                gram[(idx[p], idx[q])] += w[p] * w[q];
            }
        }
    }
    for d in 0..n_x {
        gram[(d, d)] += 1e-9;
    }
    let orbit_of = |x: &[f64], o: usize| -> (Vec<f64>, Vec<f64>) {
        let a = x[o * 2 * kappa..o * 2 * kappa + kappa].to_vec();
        let b = x[o * 2 * kappa + kappa..(o + 1) * 2 * kappa].to_vec();
        (a, b)
    };
    let residuals = |x: &[f64]| -> Vec<f64> {
        let mut f = vec![0.0; n_c];
        for o in 0..n_orbits {
            let (a, b) = orbit_of(x, o);
            let r = orbit_residual(&a, &b, kappa);
            f[o * kappa..(o + 1) * kappa].copy_from_slice(&r);
        }
        f
    };
    let norm_inf = |v: &[f64]| v.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    let mut f = residuals(&x);
    for _ in 0..30 {
        if norm_inf(&f) < 5e-14 {
            break;
        }
        // KKT system for: min (delta + s)' G (delta + s)  s.t.  J s = -f.
        let mut kkt = RMat::zeros(n_x + n_c, n_x + n_c);
        let mut rhs = nalgebra::DVector::zeros(n_x + n_c);
        for r in 0..n_x {
            for c in 0..n_x {
                kkt[(r, c)] = gram[(r, c)];
            }
        }
        let delta: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        for r in 0..n_x {
            let mut acc = 0.0;
            for c in 0..n_x {
                acc += gram[(r, c)] * delta[c];
            }
            rhs[r] = -acc;
        }
        for o in 0..n_orbits {
            let (a, b) = orbit_of(&x, o);
            for lag in 0..kappa {
                let row = o * kappa + lag;
                for j in 0..kappa {
                    let mut da = 0.0;
                    let mut db = 0.0;
                    if j + lag < kappa {
                        da += a[j + lag];
                        db += b[j + lag];
                    }
                    if j >= lag {
                        da += a[j - lag];
                        db += b[j - lag];
                    }
                    let ca = o * 2 * kappa + j;
                    let cb = o * 2 * kappa + kappa + j;
                    kkt[(n_x + row, ca)] = da;
                    kkt[(n_x + row, cb)] = db;
                    kkt[(ca, n_x + row)] = da;
                    kkt[(cb, n_x + row)] = db;
                }
                rhs[n_x + row] = -f[row];
            }
        }
        let step = kkt.lu().solve(&rhs).ok_or(FbmcError::SingularMatrix {
            context: "pr_projected_phydyas step",
        })?;
        for d in 0..n_x {
            x[d] += step[d];
        }
        f = residuals(&x);
    }
    let worst = norm_inf(&f);
    if worst > 1e-12 {
        return Err(FbmcError::InvalidConfig(format!(
            "reconstruction projection stalled at residual {worst:.3e}"
        )));
    }
    // Write the repaired rows back, mirroring to keep the pulse symmetric.
    let mut samples = base.samples().to_vec();
    for o in 0..n_orbits {
        let (a, b) = orbit_of(&x, o);
        for j in 0..kappa {
            samples[j * two_m + o] = a[j];
            samples[j * two_m + (m - 1 - o)] = b[j];
            samples[(kappa - 1 - j) * two_m + (two_m - 1 - o)] = a[j];
            samples[(kappa - 1 - j) * two_m + (m + o)] = b[j];
        }
    }
    // Exact trig interpolation of the even sample vector: the integer
    // harmonics cos(2 pi k t / kappa), k < M kappa, are the half-length DCT
    // basis of this grid, so they span every even vector on it.
    let n_half = len / 2;
    let mut design = RMat::zeros(n_half, n_half);
    let mut target = nalgebra::DVector::zeros(n_half);
    for n in 0..n_half {
        let t = (2 * n as i64 - len as i64 + 1) as f64 / (4.0 * m as f64);
        target[n] = samples[n];
        for k in 0..n_half {
            design[(n, k)] = (2.0 * std::f64::consts::PI * k as f64 * t / kappa as f64).cos();
        }
    }
    let coeffs = design
        .clone()
        .svd(true, true)
        .solve(&target, 1e-13)
        .map_err(|_| FbmcError::SingularMatrix {
            context: "pr_projected_phydyas interpolation",
        })?;
    let worst_fit = (design * &coeffs - target)
        .iter()
        .fold(0.0f64, |a, x| a.max(x.abs()));
    if worst_fit > 1e-10 {
        return Err(FbmcError::InvalidConfig(format!(
            "closed-form interpolation left residual {worst_fit:.3e}"
        )));
    }
    // Integer harmonics sit on the even half-harmonic slots.
    let mut cos_coeffs = vec![0.0; 2 * (n_half - 1) + 1];
    for (k, c) in coeffs.iter().enumerate() {
        cos_coeffs[2 * k] = *c;
    }
    PrototypePulse::trig_poly(m, kappa, cos_coeffs, Vec::new(), true)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference row convolution written as the obvious double loop over
    /// full-length rows, independent of the windowed production code.
    fn conv_rows_naive(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len() + b.len() - 1;
        let mut out = vec![0.0; n];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn naive_pulse_matrices(p: &PrototypePulse, q: &PrototypePulse) -> (RMat, RMat) {
        let two_m = p.two_m();
        let m = p.m();
        let kappa = p.kappa();
        let row = |s: &[f64], i: usize| -> Vec<f64> {
            (0..kappa).map(|j| s[j * two_m + i]).collect()
        };
        let mut r = RMat::zeros(two_m, 2 * kappa - 1);
        let mut s_mat = RMat::zeros(two_m, 2 * kappa - 1);
        for i in 0..two_m {
            let pr = row(p.samples(), i);
            let pr_swap = row(p.samples(), (i + m) % two_m);
            let qr = row(q.samples(), two_m - 1 - i);
            for (c, v) in conv_rows_naive(&pr, &qr).into_iter().enumerate() {
                r[(i, c)] = v;
            }
            for (c, v) in conv_rows_naive(&pr_swap, &qr).into_iter().enumerate() {
                s_mat[(i, c)] = v;
            }
        }
        (r, s_mat)
    }

    #[test]
    fn phydyas_has_expected_length_and_energy() {
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        assert_eq!(p.len(), 512);
        let energy: f64 = p.samples().iter().map(|x| x * x).sum();
        assert!(
            (energy - 64.0).abs() < 1e-9,
            "sample energy {energy} should equal M"
        );
    }

    #[test]
    fn phydyas_symmetry_is_exact() {
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        let s = p.samples();
        let l = s.len();
        for n in 0..l {
            assert_eq!(s[n], s[l - 1 - n], "sample {n} breaks symmetry");
        }
    }

    #[test]
    fn derivative_flips_parity_and_is_exact() {
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        let d1 = p.derivative(1).unwrap();
        assert_eq!(d1.symmetry(), Symmetry::Antisymmetric);
        assert_eq!(d1.derivative_order(), 1);
        let s = d1.samples();
        let l = s.len();
        for n in 0..l {
            assert_eq!(s[n], -s[l - 1 - n], "sample {n} breaks antisymmetry");
        }
        let d2 = p.derivative(2).unwrap();
        assert_eq!(d2.symmetry(), Symmetry::Symmetric);
    }

    #[test]
    fn first_derivative_matches_finite_differences() {
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        let d1 = p.derivative(1).unwrap();
        let s = p.samples();
        let m = p.m() as f64;
        let peak = d1.samples().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let mut worst = 0.0f64;
        for n in 1..s.len() - 1 {
            // Central difference over the half-offset grid, step 1/(2M).
            let fd = (s[n + 1] - s[n - 1]) * m;
            worst = worst.max((fd - d1.samples()[n]).abs());
        }
        assert!(
            worst / peak < 1e-3,
            "relative FD mismatch {} too large",
            worst / peak
        );
    }

    #[test]
    fn second_derivative_matches_finite_differences_of_first() {
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        let d1 = p.derivative(1).unwrap();
        let d2 = p.derivative(2).unwrap();
        let s = d1.samples();
        let m = p.m() as f64;
        let peak = d2.samples().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let mut worst = 0.0f64;
        for n in 1..s.len() - 1 {
            let fd = (s[n + 1] - s[n - 1]) * m;
            worst = worst.max((fd - d2.samples()[n]).abs());
        }
        assert!(worst / peak < 1e-3);
    }

    #[test]
    fn derivative_of_derivative_composes() {
        let p = PrototypePulse::phydyas(32, 4).unwrap();
        let a = p.derivative(1).unwrap().derivative(1).unwrap();
        let b = p.derivative(2).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoint_values_vanish_to_coefficient_precision() {
        // The published PHYDYAS coefficients satisfy K1 - K2 + K3 = 1/2 only
        // to their six printed digits, so the analog waveform and its first
        // derivative vanish at the support edge to roughly that accuracy,
        // not to machine precision. The second derivative genuinely does not
        // vanish there for this pulse family.
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        let edge = 2.0; // kappa/2 symbol periods
        let peak0 = p.samples().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let v0 = p.analog_value(edge).unwrap().abs();
        assert!(v0 / peak0 < 1e-6, "value at edge {v0} should be near zero");
        let d1 = p.derivative(1).unwrap();
        let v1 = d1.analog_value(edge).unwrap().abs();
        let peak1 = d1.samples().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        assert!(v1 / peak1 < 1e-6, "slope at edge {v1} should be near zero");
        let d2 = p.derivative(2).unwrap();
        let v2 = d2.analog_value(edge).unwrap().abs();
        let peak2 = d2.samples().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let ratio = v2 / peak2;
        assert!(
            (0.01..0.2).contains(&ratio),
            "second derivative keeps a structural edge residual, got {ratio}"
        );
    }

    #[test]
    fn pulse_matrices_match_naive_convolution() {
        for (m, kappa) in [(8usize, 4usize), (4, 2), (6, 3)] {
            let p = PrototypePulse::phydyas(m, kappa).unwrap();
            let q = p.derivative(1).unwrap();
            let mats = pulse_matrices(&p, &q).unwrap();
            let (r_ref, s_ref) = naive_pulse_matrices(&p, &q);
            assert!((mats.r - r_ref).abs().max() < 1e-12);
            assert!((mats.s - s_ref).abs().max() < 1e-12);
        }
    }

    #[test]
    fn rectangular_pulse_is_perfect_reconstruction() {
        let p = PrototypePulse::rectangular(16).unwrap();
        let res = pr_residual(&p).unwrap();
        assert!(res.max_abs() < 1e-12, "rectangle PR residual {res:?}");
        let (eta0000, _) = eta(&p, &p, &p, &p).unwrap();
        assert!((eta0000 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phydyas_pr_residual_is_small_and_stable() {
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        let res = pr_residual(&p).unwrap();
        assert!(res.max_abs() < 1e-3, "NPR residual too large: {res:?}");
        assert!(res.energy >= 0.0, "interference energy cannot be negative");
        assert!(res.energy < 1e-4, "NPR energy residual {res:?}");
    }

    #[test]
    fn eta_argument_swaps_leave_the_value_unchanged() {
        // eta(p,q,r,s) = eta(r,s,p,q) = eta(q,p,s,r) on arbitrary pulses.
        let base = PrototypePulse::phydyas(16, 4).unwrap();
        let p = base.clone();
        let q = base.derivative(1).unwrap();
        let r = base.derivative(2).unwrap();
        let s = PrototypePulse::trig_poly(16, 4, vec![0.3, 0.9, -0.2], vec![], false).unwrap();
        let a = eta(&p, &q, &r, &s).unwrap();
        let b = eta(&r, &s, &p, &q).unwrap();
        let c = eta(&q, &p, &s, &r).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        assert!((a.0 - c.0).abs() < 1e-12 && (a.1 - c.1).abs() < 1e-12);
    }

    #[test]
    fn eta_sign_swap_for_shared_first_slot() {
        // p = r forces the two sign variants to coincide.
        let base = PrototypePulse::phydyas(16, 4).unwrap();
        let q = base.derivative(1).unwrap();
        let s = base.derivative(2).unwrap();
        let (pm, mp) = eta(&base, &q, &base, &s).unwrap();
        assert!((pm - mp).abs() < 1e-12);
    }

    #[test]
    fn eta_sign_swap_for_shared_second_slot() {
        // q = s with p, r of equal parity also forces the variants equal.
        let base = PrototypePulse::phydyas(16, 4).unwrap();
        let p = base.clone();
        let r = base.derivative(2).unwrap(); // same parity as p
        let q = base.derivative(1).unwrap();
        let (pm, mp) = eta(&p, &q, &r, &q).unwrap();
        assert!((pm - mp).abs() < 1e-12);
    }

    #[test]
    fn eta_vanishes_for_pr_pair_with_opposite_parity_pair() {
        // With a PR pair in the first two slots, eta reduces to a product of
        // reflections; opposite parities in the last two slots cancel it.
        let rect = PrototypePulse::rectangular(16).unwrap();
        let sym = PrototypePulse::trig_poly(16, 1, vec![0.7, 0.4], vec![], false).unwrap();
        let asym =
            PrototypePulse::trig_poly(16, 1, vec![], vec![0.0, 0.8, -0.3], false).unwrap();
        let (pm, mp) = eta(&rect, &rect, &sym, &asym).unwrap();
        assert!(pm.abs() < 1e-12, "eta_pm = {pm}");
        assert!(mp.abs() < 1e-12, "eta_mp = {mp}");
    }

    #[test]
    fn eta_table_relations_hold_for_phydyas() {
        let p = PrototypePulse::phydyas(64, 4).unwrap();
        let t = eta_table(&p).unwrap();
        let pm = |i| t.eta_pm(i).unwrap();
        let mp = |i| t.eta_mp(i).unwrap();
        // Parity-driven identities, exact for any symmetric pulse.
        let rel1 = (pm((1, 0, 0, 1)) - mp((1, 0, 0, 1)))
            - (pm((0, 0, 1, 1)) - mp((0, 0, 1, 1)));
        assert!(rel1.abs() < 1e-12, "rel1 = {rel1:e}");
        let rel2 = pm((0, 0, 1, 1)) + pm((1, 0, 1, 0));
        assert!(rel2.abs() < 1e-12, "rel2 = {rel2:e}");
        // eta0000 sits at 1/2 up to the NPR residual.
        assert!((pm((0, 0, 0, 0)) - 0.5).abs() < 1e-4);
        // Shared-slot sign swaps inside the table.
        assert!((pm((1, 0, 1, 0)) - mp((1, 0, 1, 0))).abs() < 1e-12);
    }

    #[test]
    fn eta_table_alpha_beta_normalization() {
        let p = PrototypePulse::phydyas(32, 4).unwrap();
        let t = eta_table(&p).unwrap();
        let two_m_sq = (64.0f64).powi(2);
        assert_eq!(t.alpha, 2.0 * t.eta_pm((1, 0, 1, 0)).unwrap() / two_m_sq);
        assert_eq!(t.beta, 2.0 * t.eta_mp((0, 0, 1, 1)).unwrap() / two_m_sq);
        assert!(t.alpha > 0.0, "alpha must be positive, got {}", t.alpha);
    }

    #[test]
    fn csv_round_trip_preserves_samples() {
        let p = PrototypePulse::phydyas(16, 4).unwrap().derivative(1).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = PrototypePulse::read_csv(&buf[..]).unwrap();
        assert_eq!(back.m(), 16);
        assert_eq!(back.kappa(), 4);
        assert_eq!(back.derivative_order(), 1);
        assert_eq!(back.symmetry(), Symmetry::Antisymmetric);
        assert_eq!(back.samples(), p.samples());
    }

    #[test]
    fn tabulated_pulse_rejects_derivative() {
        let p = PrototypePulse::from_samples(4, 1, 0, Symmetry::Symmetric, vec![1.0; 8]).unwrap();
        assert!(p.derivative(1).is_err());
    }
}
