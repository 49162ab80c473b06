//! OQAM staggering, filterbank modulation/demodulation, channel traversal.
//!
//! The synthesis basis at symbol slot `l` and subcarrier `m` is
//!
//! ```text
//!   g_{l,m}[n] = (j^(l+m) / sqrt(M)) p[n - lM] e^{j (2 pi / 2M) m (n - D)}
//! ```
//!
//! with `D = (L_p - 1)/2`, and the analysis side correlates the received
//! signal against the same basis built on the time-reversed receive pulse.
//! With prototype pulses normalized to energy `M` (the convention of the
//! pulse module), the `1/sqrt(M)` on each side gives the back-to-back chain
//! exactly unit gain, and the demodulated complex noise variance per
//! subcarrier equals the per-sample noise variance injected by
//! [`transmit_through`]; no further calibration constants appear anywhere.
//!
//! Every operation has a plain nested-loop form and an FFT form that must
//! agree to 1e-10; the FFT form is the one the experiment harness uses.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::sync::OnceLock;

use crate::channel::ChannelModel;
use crate::linalg::{CMat, RMat};
use crate::pulse::PrototypePulse;
use crate::{FbmcError, Result};

// ---------------------------------------------------------------------------
// frame geometry

/// Shape of one transmitted frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameConfig {
    /// Number of subcarriers, `2M`.
    pub two_m: usize,
    /// Number of real-valued multicarrier symbol slots.
    pub n_sym: usize,
    /// Number of spatial streams carried per subcarrier.
    pub n_streams: usize,
    /// Edge slots excluded from metrics on each side; keep at or above the
    /// pulse overlapping factor so interior symbols see a full neighborhood.
    pub guard: usize,
}

impl FrameConfig {
    pub fn new(two_m: usize, n_sym: usize, n_streams: usize, guard: usize) -> Result<FrameConfig> {
        if two_m == 0 || two_m % 2 != 0 {
            return Err(FbmcError::InvalidConfig(format!(
                "subcarrier count {two_m} must be even and positive"
            )));
        }
        if n_streams == 0 {
            return Err(FbmcError::InvalidConfig("no streams".into()));
        }
        if n_sym <= 2 * guard {
            return Err(FbmcError::InvalidConfig(format!(
                "{n_sym} symbol slots leave no interior behind guard {guard}"
            )));
        }
        Ok(FrameConfig {
            two_m,
            n_sym,
            n_streams,
            guard,
        })
    }

    /// Symbol slots that metrics are computed on.
    pub fn interior_slots(&self) -> std::ops::Range<usize> {
        self.guard..self.n_sym - self.guard
    }
}

// ---------------------------------------------------------------------------
// symbol grids

/// Real symbols indexed (slot, stream, subcarrier); one matrix per slot.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSymbolGrid {
    data: Vec<RMat>,
}

impl RealSymbolGrid {
    pub fn zeros(n_slots: usize, n_streams: usize, two_m: usize) -> RealSymbolGrid {
        RealSymbolGrid {
            data: vec![RMat::zeros(n_streams, two_m); n_slots],
        }
    }

    pub fn n_slots(&self) -> usize {
        self.data.len()
    }

    pub fn n_streams(&self) -> usize {
        self.data[0].nrows()
    }

    pub fn two_m(&self) -> usize {
        self.data[0].ncols()
    }

    pub fn slot(&self, l: usize) -> &RMat {
        &self.data[l]
    }

    pub fn slot_mut(&mut self, l: usize) -> &mut RMat {
        &mut self.data[l]
    }
}

/// Complex symbols indexed (slot, stream, subcarrier).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    data: Vec<CMat>,
}

impl ComplexGrid {
    pub fn zeros(n_slots: usize, n_streams: usize, two_m: usize) -> ComplexGrid {
        ComplexGrid {
            data: vec![CMat::zeros(n_streams, two_m); n_slots],
        }
    }

    pub fn n_slots(&self) -> usize {
        self.data.len()
    }

    pub fn n_streams(&self) -> usize {
        self.data[0].nrows()
    }

    pub fn two_m(&self) -> usize {
        self.data[0].ncols()
    }

    pub fn slot(&self, l: usize) -> &CMat {
        &self.data[l]
    }

    pub fn slot_mut(&mut self, l: usize) -> &mut CMat {
        &mut self.data[l]
    }
}

/// Split complex symbols into their real and imaginary parts on consecutive
/// slots: slot `2u` carries the real parts of complex slot `u`, slot `2u+1`
/// the imaginary parts. The quadrature phase pattern lives in the synthesis
/// basis, not here.
pub fn stagger(qam: &ComplexGrid) -> RealSymbolGrid {
    let mut out = RealSymbolGrid::zeros(2 * qam.n_slots(), qam.n_streams(), qam.two_m());
    for u in 0..qam.n_slots() {
        out.data[2 * u] = qam.data[u].map(|z| z.re);
        out.data[2 * u + 1] = qam.data[u].map(|z| z.im);
    }
    out
}

/// Inverse of [`stagger`]: recombine consecutive real slots into complex
/// symbols.
pub fn destagger(d: &RealSymbolGrid) -> Result<ComplexGrid> {
    if d.n_slots() % 2 != 0 {
        return Err(FbmcError::InvalidConfig(format!(
            "{} real slots do not pair up",
            d.n_slots()
        )));
    }
    let mut out = ComplexGrid::zeros(d.n_slots() / 2, d.n_streams(), d.two_m());
    for u in 0..out.n_slots() {
        let re = &d.data[2 * u];
        let im = &d.data[2 * u + 1];
        out.data[u] = CMat::from_fn(re.nrows(), re.ncols(), |i, j| {
            Complex64::new(re[(i, j)], im[(i, j)])
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// constellations

/// Unit-mean-power square QAM alphabets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constellation {
    Qam4,
    Qam16,
}

impl Constellation {
    pub fn size(&self) -> usize {
        match self {
            Constellation::Qam4 => 4,
            Constellation::Qam16 => 16,
        }
    }

    pub fn points(&self) -> &'static [Complex64] {
        static QAM4: OnceLock<Vec<Complex64>> = OnceLock::new();
        static QAM16: OnceLock<Vec<Complex64>> = OnceLock::new();
        match self {
            Constellation::Qam4 => QAM4.get_or_init(|| square_qam(&[-1.0, 1.0])),
            Constellation::Qam16 => QAM16.get_or_init(|| square_qam(&[-3.0, -1.0, 1.0, 3.0])),
        }
    }

    /// Index of the nearest constellation point.
    pub fn detect(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points().iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Uniform i.i.d. symbol grid over `n_slots` complex slots.
    pub fn random_grid<R: Rng>(
        &self,
        n_slots: usize,
        n_streams: usize,
        two_m: usize,
        rng: &mut R,
    ) -> ComplexGrid {
        let points = self.points();
        let mut grid = ComplexGrid::zeros(n_slots, n_streams, two_m);
        for slot in &mut grid.data {
            for z in slot.iter_mut() {
                *z = points[rng.random_range(0..points.len())];
            }
        }
        grid
    }
}

fn square_qam(levels: &[f64]) -> Vec<Complex64> {
    let mean_sq: f64 = levels.iter().map(|a| a * a).sum::<f64>() / levels.len() as f64;
    let scale = 1.0 / (2.0 * mean_sq).sqrt();
    let mut points = Vec::with_capacity(levels.len() * levels.len());
    for &re in levels {
        for &im in levels {
            points.push(Complex64::new(re * scale, im * scale));
        }
    }
    points
}

// ---------------------------------------------------------------------------
// sample streams

/// Baseband samples, one row per antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream {
    pub samples: CMat,
}

impl SampleStream {
    pub fn n_antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Raw dump: magic, version, antenna count, sample count as little-endian
    /// u64 (magic excepted), then re/im f64 pairs, antenna-major.
    pub fn write_bin<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"FBMCSAMP")?;
        out.write_all(&1u64.to_le_bytes())?;
        out.write_all(&(self.n_antennas() as u64).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for a in 0..self.n_antennas() {
            for n in 0..self.len() {
                let z = self.samples[(a, n)];
                out.write_all(&z.re.to_le_bytes())?;
                out.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_bin<R: Read>(mut input: R) -> Result<SampleStream> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != b"FBMCSAMP" {
            return Err(FbmcError::Parse("bad sample dump magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let version = next_u64(&mut input)?;
        if version != 1 {
            return Err(FbmcError::Parse(format!("sample dump version {version}")));
        }
        let n_ant = next_u64(&mut input)? as usize;
        let n_samp = next_u64(&mut input)? as usize;
        let mut samples = CMat::zeros(n_ant, n_samp);
        let mut pair = [0u8; 16];
        for a in 0..n_ant {
            for n in 0..n_samp {
                input.read_exact(&mut pair)?;
                samples[(a, n)] = Complex64::new(
                    f64::from_le_bytes(pair[..8].try_into().unwrap()),
                    f64::from_le_bytes(pair[8..].try_into().unwrap()),
                );
            }
        }
        Ok(SampleStream { samples })
    }
}

// ---------------------------------------------------------------------------
// synthesis

fn quarter_turn(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn check_modulation(
    grid_streams: usize,
    grid_two_m: usize,
    mats: &[CMat],
    mat_cols_are_streams: bool,
    pulse: &PrototypePulse,
    context: &'static str,
) -> Result<()> {
    if pulse.two_m() != grid_two_m || mats.len() != grid_two_m {
        return Err(FbmcError::DimensionMismatch {
            context,
            expected: format!("{} subcarriers", pulse.two_m()),
            got: format!("grid {}, {} matrices", grid_two_m, mats.len()),
        });
    }
    let shape = mats[0].shape();
    if mats.iter().any(|m| m.shape() != shape) {
        return Err(FbmcError::DimensionMismatch {
            context,
            expected: format!("{}x{}", shape.0, shape.1),
            got: "mixed matrix shapes".into(),
        });
    }
    let streams = if mat_cols_are_streams { shape.1 } else { shape.0 };
    if streams != grid_streams {
        return Err(FbmcError::DimensionMismatch {
            context,
            expected: format!("{grid_streams} streams"),
            got: format!("{streams}"),
        });
    }
    Ok(())
}

/// Modulate a precoded frame: `s[n] = sum_{l,m} A(omega_m) d_{l,m} g_{l,m}[n]`.
/// FFT form; agrees with [`synthesize_direct`] to 1e-10.
pub fn synthesize(
    d: &RealSymbolGrid,
    a_mats: &[CMat],
    pulse: &PrototypePulse,
) -> Result<SampleStream> {
    check_modulation(d.n_streams(), d.two_m(), a_mats, true, pulse, "synthesize")?;
    let two_m = pulse.two_m();
    let m_half = pulse.m();
    let l_p = pulse.len();
    let n_tx = a_mats[0].nrows();
    let n_sym = d.n_slots();
    let t_len = (n_sym - 1) * m_half + l_p;
    let scale = 1.0 / (m_half as f64).sqrt();
    let center = (l_p as f64 - 1.0) / 2.0;
    // m-dependent part of the phase, constant over slots.
    let base: Vec<Complex64> = (0..two_m)
        .map(|m| Complex64::cis(-TAU * m as f64 * center / two_m as f64) * scale)
        .collect();
    let ifft = FftPlanner::new().plan_fft_inverse(two_m);
    let p = pulse.samples();
    let mut s = CMat::zeros(n_tx, t_len);
    let mut spec = vec![vec![Complex64::new(0.0, 0.0); two_m]; n_tx];
    for l in 0..n_sym {
        let slot = d.slot(l);
        for m in 0..two_m {
            let factor = quarter_turn(l + m) * base[m];
            let a = &a_mats[m];
            for row in 0..n_tx {
                let mut v = 0.0;
                let mut w = Complex64::new(0.0, 0.0);
                for s_idx in 0..slot.nrows() {
                    let coef = a[(row, s_idx)];
                    let sym = slot[(s_idx, m)];
                    v += coef.re * sym;
                    w.im += coef.im * sym;
                }
                w.re = v;
                spec[row][m] = w * factor;
            }
        }
        let offset = l * m_half;
        for row in 0..n_tx {
            ifft.process(&mut spec[row]);
            for (n, &pn) in p.iter().enumerate() {
                s[(row, offset + n)] += spec[row][(offset + n) % two_m] * pn;
            }
        }
    }
    Ok(SampleStream { samples: s })
}

/// Reference nested-loop modulator, phase factors written out one sample at
/// a time.
pub fn synthesize_direct(
    d: &RealSymbolGrid,
    a_mats: &[CMat],
    pulse: &PrototypePulse,
) -> Result<SampleStream> {
    check_modulation(d.n_streams(), d.two_m(), a_mats, true, pulse, "synthesize")?;
    let two_m = pulse.two_m();
    let m_half = pulse.m();
    let l_p = pulse.len();
    let n_tx = a_mats[0].nrows();
    let n_sym = d.n_slots();
    let scale = 1.0 / (m_half as f64).sqrt();
    let center = (l_p as f64 - 1.0) / 2.0;
    let p = pulse.samples();
    let mut s = CMat::zeros(n_tx, (n_sym - 1) * m_half + l_p);
    for l in 0..n_sym {
        let slot = d.slot(l);
        for m in 0..two_m {
            let mut v = vec![Complex64::new(0.0, 0.0); n_tx];
            for row in 0..n_tx {
                for s_idx in 0..slot.nrows() {
                    v[row] += a_mats[m][(row, s_idx)] * slot[(s_idx, m)];
                }
            }
            let lead = quarter_turn(l + m) * scale;
            for n in 0..l_p {
                let t = (l * m_half + n) as f64;
                let phase = lead * Complex64::cis(TAU * m as f64 * (t - center) / two_m as f64);
                for row in 0..n_tx {
                    s[(row, l * m_half + n)] += v[row] * p[n] * phase;
                }
            }
        }
    }
    Ok(SampleStream { samples: s })
}

// ---------------------------------------------------------------------------
// channel traversal

/// Convolve with the channel taps and add circular complex Gaussian noise of
/// variance `n0` per sample per receive antenna.
pub fn transmit_through(
    s: &SampleStream,
    ch: &ChannelModel,
    n0: f64,
    seed: u64,
) -> Result<SampleStream> {
    if ch.n_tx() != s.n_antennas() {
        return Err(FbmcError::DimensionMismatch {
            context: "transmit_through",
            expected: format!("{} transmit antennas", ch.n_tx()),
            got: s.n_antennas().to_string(),
        });
    }
    if !(n0 >= 0.0) {
        return Err(FbmcError::InvalidConfig(format!("noise power {n0}")));
    }
    let t_len = s.len();
    let mut out = CMat::zeros(ch.n_rx(), t_len + ch.impulse_len() - 1);
    for (&b, tap) in ch.delays().iter().zip(ch.taps()) {
        for n in 0..t_len {
            for i in 0..ch.n_rx() {
                let mut acc = out[(i, n + b)];
                for j in 0..ch.n_tx() {
                    acc += tap[(i, j)] * s.samples[(j, n)];
                }
                out[(i, n + b)] = acc;
            }
        }
    }
    if n0 > 0.0 {
        let sigma = (n0 / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in out.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(SampleStream { samples: out })
}

// ---------------------------------------------------------------------------
// analysis

/// Demodulate and decode a received frame against the time-reversed receive
/// pulse. Returns the complex decoded grid `x` and its real part, the symbol
/// estimates. FFT form; agrees with [`analyze_direct`] to 1e-10.
pub fn analyze(
    r: &SampleStream,
    b_mats: &[CMat],
    pulse_rx: &PrototypePulse,
    cfg: &FrameConfig,
) -> Result<(ComplexGrid, RealSymbolGrid)> {
    check_modulation(cfg.n_streams, cfg.two_m, b_mats, false, pulse_rx, "analyze")?;
    let (two_m, m_half, l_q) = (pulse_rx.two_m(), pulse_rx.m(), pulse_rx.len());
    let n_rx = b_mats[0].ncols();
    check_window(r, cfg, m_half, l_q, n_rx)?;
    let scale = 1.0 / (m_half as f64).sqrt();
    let center = (l_q as f64 - 1.0) / 2.0;
    let q_rev: Vec<f64> = pulse_rx.samples().iter().rev().copied().collect();
    let fft = FftPlanner::new().plan_fft_forward(two_m);
    // Samples are folded at their absolute time index, so the slot offset is
    // already inside the FFT phase; only the half-sample centering remains.
    let base: Vec<Complex64> = (0..two_m)
        .map(|m0| Complex64::cis(TAU * m0 as f64 * center / two_m as f64) * scale)
        .collect();
    let mut x = ComplexGrid::zeros(cfg.n_sym, cfg.n_streams, two_m);
    let mut folded = vec![Complex64::new(0.0, 0.0); two_m];
    let mut y = CMat::zeros(n_rx, two_m);
    for l0 in 0..cfg.n_sym {
        let offset = l0 * m_half;
        for a in 0..n_rx {
            folded.fill(Complex64::new(0.0, 0.0));
            for (n, &qn) in q_rev.iter().enumerate() {
                folded[(offset + n) % two_m] += r.samples[(a, offset + n)] * qn;
            }
            fft.process(&mut folded);
            for m0 in 0..two_m {
                y[(a, m0)] = folded[m0] * quarter_turn(l0 + m0).conj() * base[m0];
            }
        }
        let slot = x.slot_mut(l0);
        for m0 in 0..two_m {
            for s_idx in 0..cfg.n_streams {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..n_rx {
                    acc += b_mats[m0][(s_idx, a)] * y[(a, m0)];
                }
                slot[(s_idx, m0)] = acc;
            }
        }
    }
    let d_hat = real_part_grid(&x);
    Ok((x, d_hat))
}

/// Reference nested-loop demodulator.
pub fn analyze_direct(
    r: &SampleStream,
    b_mats: &[CMat],
    pulse_rx: &PrototypePulse,
    cfg: &FrameConfig,
) -> Result<(ComplexGrid, RealSymbolGrid)> {
    check_modulation(cfg.n_streams, cfg.two_m, b_mats, false, pulse_rx, "analyze")?;
    let (two_m, m_half, l_q) = (pulse_rx.two_m(), pulse_rx.m(), pulse_rx.len());
    let n_rx = b_mats[0].ncols();
    check_window(r, cfg, m_half, l_q, n_rx)?;
    let scale = 1.0 / (m_half as f64).sqrt();
    let center = (l_q as f64 - 1.0) / 2.0;
    let q_rev: Vec<f64> = pulse_rx.samples().iter().rev().copied().collect();
    let mut x = ComplexGrid::zeros(cfg.n_sym, cfg.n_streams, two_m);
    for l0 in 0..cfg.n_sym {
        let offset = l0 * m_half;
        for m0 in 0..two_m {
            let lead = quarter_turn(l0 + m0).conj() * scale;
            let mut y = vec![Complex64::new(0.0, 0.0); n_rx];
            for (n, &qn) in q_rev.iter().enumerate() {
                let t = (offset + n) as f64;
                let phase = Complex64::cis(-TAU * m0 as f64 * (t - center) / two_m as f64);
                for (a, acc) in y.iter_mut().enumerate() {
                    *acc += r.samples[(a, offset + n)] * qn * phase;
                }
            }
            let slot = x.slot_mut(l0);
            for s_idx in 0..cfg.n_streams {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..n_rx {
                    acc += b_mats[m0][(s_idx, a)] * y[a] * lead;
                }
                slot[(s_idx, m0)] = acc;
            }
        }
    }
    let d_hat = real_part_grid(&x);
    Ok((x, d_hat))
}

fn check_window(
    r: &SampleStream,
    cfg: &FrameConfig,
    m_half: usize,
    l_q: usize,
    n_rx: usize,
) -> Result<()> {
    if r.n_antennas() != n_rx {
        return Err(FbmcError::DimensionMismatch {
            context: "analyze",
            expected: format!("{n_rx} receive antennas"),
            got: r.n_antennas().to_string(),
        });
    }
    let needed = (cfg.n_sym - 1) * m_half + l_q;
    if r.len() < needed {
        return Err(FbmcError::DimensionMismatch {
            context: "analyze",
            expected: format!("at least {needed} samples"),
            got: r.len().to_string(),
        });
    }
    Ok(())
}

fn real_part_grid(x: &ComplexGrid) -> RealSymbolGrid {
    let mut d = RealSymbolGrid::zeros(x.n_slots(), x.n_streams(), x.two_m());
    for l in 0..x.n_slots() {
        d.data[l] = x.data[l].map(|z| z.re);
    }
    d
}

/// Identity precoder/decoder bank: `count` copies of `I_n`.
pub fn identity_bank(count: usize, n: usize) -> Vec<CMat> {
    vec![CMat::identity(n, n); count]
}

// ---------------------------------------------------------------------------
