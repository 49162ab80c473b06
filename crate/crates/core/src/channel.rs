//! Tapped-delay-line MU-MIMO channels and their frequency responses.
//!
//! Channels are quasi-static over a frame: a set of complex matrix taps at
//! integer sample delays, drawn i.i.d. Rayleigh per antenna pair from an ITU
//! vehicular power-delay profile. The frequency response and its first two
//! derivatives come from the closed form
//!
//! ```text
//!   H_k(omega) = sum_b (-j b)^k H[b] e^{-j omega b},   k = 0, 1, 2
//! ```
//!
//! evaluated on the subcarrier grid `omega_m = 2 pi m / (2M)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::linalg::CMat;
use crate::{FbmcError, Result};

// ---------------------------------------------------------------------------
// power-delay profiles

/// Multipath intensity profile: tap delays in seconds and mean powers in dB.
#[derive(Clone, Debug)]
pub struct PowerDelayProfile {
    name: String,
    delays_s: Vec<f64>,
    powers_db: Vec<f64>,
}

impl PowerDelayProfile {
    pub fn new(name: &str, delays_s: Vec<f64>, powers_db: Vec<f64>) -> Result<PowerDelayProfile> {
        if delays_s.is_empty() || delays_s.len() != powers_db.len() {
            return Err(FbmcError::InvalidConfig(format!(
                "profile {name}: {} delays vs {} powers",
                delays_s.len(),
                powers_db.len()
            )));
        }
        if delays_s[0] < 0.0 || delays_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FbmcError::InvalidConfig(format!(
                "profile {name}: delays must be nonnegative and strictly increasing"
            )));
        }
        Ok(PowerDelayProfile {
            name: name.to_string(),
            delays_s,
            powers_db,
        })
    }

    /// ITU-R M.1225 Vehicular A (mildly frequency selective).
    pub fn veh_a() -> PowerDelayProfile {
        PowerDelayProfile::new(
            "VehA",
            vec![0.0, 310e-9, 710e-9, 1090e-9, 1730e-9, 2510e-9],
            vec![0.0, -1.0, -9.0, -10.0, -15.0, -20.0],
        )
        .expect("static profile")
    }

    /// ITU-R M.1225 Vehicular B (highly frequency selective).
    pub fn veh_b() -> PowerDelayProfile {
        PowerDelayProfile::new(
            "VehB",
            vec![0.0, 300e-9, 8900e-9, 12900e-9, 17100e-9, 20000e-9],
            vec![-2.5, 0.0, -12.8, -10.0, -25.2, -16.0],
        )
        .expect("static profile")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_taps(&self) -> usize {
        self.delays_s.len()
    }

    /// Linear tap powers, normalized to sum to 1.
    pub fn linear_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.powers_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.iter().map(|p| p / total).collect()
    }

    /// Per-tap delays rounded to the nearest sample; ties may collide, which
    /// `sample_channel` resolves by merging the drawn taps.
    pub fn quantized_delays(&self, sample_rate_hz: f64) -> Result<Vec<usize>> {
        if !(sample_rate_hz > 0.0) {
            return Err(FbmcError::InvalidConfig(format!(
                "sample rate {sample_rate_hz} Hz"
            )));
        }
        Ok(self
            .delays_s
            .iter()
            .map(|t| (t * sample_rate_hz).round() as usize)
            .collect())
    }
}

// ---------------------------------------------------------------------------
// channel model

/// One quasi-static channel realization: matrix taps at integer delays.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    /// Strictly increasing sample offsets, one per stored tap.
    delays: Vec<usize>,
    /// `n_rx x n_tx` tap matrices, parallel to `delays`.
    taps: Vec<CMat>,
    n_rx: usize,
    n_tx: usize,
}

impl ChannelModel {
    pub fn from_taps(delays: Vec<usize>, taps: Vec<CMat>) -> Result<ChannelModel> {
        if delays.is_empty() || delays.len() != taps.len() {
            return Err(FbmcError::InvalidConfig(format!(
                "{} delays vs {} taps",
                delays.len(),
                taps.len()
            )));
        }
        if delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FbmcError::InvalidConfig(
                "tap delays must be strictly increasing".into(),
            ));
        }
        let (n_rx, n_tx) = taps[0].shape();
        if n_rx == 0 || n_tx == 0 || taps.iter().any(|t| t.shape() != (n_rx, n_tx)) {
            return Err(FbmcError::DimensionMismatch {
                context: "channel taps",
                expected: format!("{n_rx}x{n_tx}"),
                got: "mixed tap shapes".into(),
            });
        }
        Ok(ChannelModel {
            delays,
            taps,
            n_rx,
            n_tx,
        })
    }

    /// Flat channel: a single tap at delay zero.
    pub fn single_tap(tap: CMat) -> ChannelModel {
        let (n_rx, n_tx) = tap.shape();
        ChannelModel {
            delays: vec![0],
            taps: vec![tap],
            n_rx,
            n_tx,
        }
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn taps(&self) -> &[CMat] {
        &self.taps
    }

    /// Number of samples the impulse response spans.
    pub fn impulse_len(&self) -> usize {
        self.delays.last().unwrap() + 1
    }

    /// Reciprocal channel: every tap conjugate-transposed in place. An
    /// involution. Note this dualizes the frequency response exactly only
    /// for a single tap at delay zero; grid-exact duality experiments use
    /// [`FreqResponseSet::hermitian_dual`] instead.
    pub fn transpose_link(&self) -> ChannelModel {
        ChannelModel {
            delays: self.delays.clone(),
            taps: self.taps.iter().map(|t| t.adjoint()).collect(),
            n_rx: self.n_tx,
            n_tx: self.n_rx,
        }
    }

    /// Continuous-frequency response derivative of the given order.
    pub fn response_at(&self, omega: f64, order: usize) -> CMat {
        let mut acc = CMat::zeros(self.n_rx, self.n_tx);
        for (b, tap) in self.delays.iter().zip(&self.taps) {
            let factor = Complex64::new(0.0, -(*b as f64)).powu(order as u32)
                * Complex64::cis(-omega * *b as f64);
            acc += tap * factor;
        }
        acc
    }

    /// Evaluate the response and its derivatives on the subcarrier grid.
    pub fn freq_response(&self, two_m: usize, max_order: usize) -> Result<FreqResponseSet> {
        if max_order > 2 {
            return Err(FbmcError::Unsupported {
                what: "frequency response derivative order",
                value: max_order.to_string(),
            });
        }
        if two_m == 0 || two_m % 2 != 0 {
            return Err(FbmcError::InvalidConfig(format!(
                "subcarrier count {two_m} must be even and positive"
            )));
        }
        let omegas: Vec<f64> = (0..two_m)
            .map(|m| 2.0 * std::f64::consts::PI * m as f64 / two_m as f64)
            .collect();
        let h = (0..=max_order)
            .map(|k| omegas.iter().map(|&w| self.response_at(w, k)).collect())
            .collect();
        Ok(FreqResponseSet {
            omegas,
            h,
            n_rx: self.n_rx,
            n_tx: self.n_tx,
        })
    }

    // -- snapshots ----------------------------------------------------------

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ChannelSnapshot::from(self)).expect("channel serialization")
    }

    pub fn from_json(text: &str) -> Result<ChannelModel> {
        let snap: ChannelSnapshot =
            serde_json::from_str(text).map_err(|e| FbmcError::Parse(e.to_string()))?;
        snap.into_model()
    }

    /// One row per tap entry: `delay,rx,tx,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "delay,rx,tx,re,im")?;
        for (b, tap) in self.delays.iter().zip(&self.taps) {
            for rx in 0..self.n_rx {
                for tx in 0..self.n_tx {
                    let z = tap[(rx, tx)];
                    writeln!(out, "{b},{rx},{tx},{:e},{:e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<ChannelModel> {
        let mut rows: Vec<(usize, usize, usize, Complex64)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 5 {
                return Err(FbmcError::Parse(format!(
                    "channel csv line {}: expected 5 fields",
                    i + 1
                )));
            }
            let parse_u = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| FbmcError::Parse(format!("channel csv line {}: {e}", i + 1)))
            };
            let parse_f = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| FbmcError::Parse(format!("channel csv line {}: {e}", i + 1)))
            };
            rows.push((
                parse_u(fields[0])?,
                parse_u(fields[1])?,
                parse_u(fields[2])?,
                Complex64::new(parse_f(fields[3])?, parse_f(fields[4])?),
            ));
        }
        if rows.is_empty() {
            return Err(FbmcError::Parse("channel csv has no tap rows".into()));
        }
        let n_rx = rows.iter().map(|r| r.1).max().unwrap() + 1;
        let n_tx = rows.iter().map(|r| r.2).max().unwrap() + 1;
        let mut delays: Vec<usize> = rows.iter().map(|r| r.0).collect();
        delays.sort_unstable();
        delays.dedup();
        let mut taps = vec![CMat::zeros(n_rx, n_tx); delays.len()];
        for (b, rx, tx, z) in rows {
            let idx = delays.binary_search(&b).expect("delay collected above");
            taps[idx][(rx, tx)] = z;
        }
        ChannelModel::from_taps(delays, taps)
    }
}

/// Serialized tap layout: row-major `[re, im]` pairs per delay.
#[derive(Serialize, Deserialize)]
struct ChannelSnapshot {
    n_rx: usize,
    n_tx: usize,
    delays: Vec<usize>,
    taps: Vec<Vec<[f64; 2]>>,
}

impl From<&ChannelModel> for ChannelSnapshot {
    fn from(ch: &ChannelModel) -> ChannelSnapshot {
        ChannelSnapshot {
            n_rx: ch.n_rx,
            n_tx: ch.n_tx,
            delays: ch.delays.clone(),
            taps: ch
                .taps
                .iter()
                .map(|t| {
                    (0..ch.n_rx)
                        .flat_map(|r| (0..ch.n_tx).map(move |c| (r, c)))
                        .map(|(r, c)| [t[(r, c)].re, t[(r, c)].im])
                        .collect()
                })
                .collect(),
        }
    }
}

impl ChannelSnapshot {
    fn into_model(self) -> Result<ChannelModel> {
        let taps: Vec<CMat> = self
            .taps
            .iter()
            .map(|flat| {
                DMatrix::from_fn(self.n_rx, self.n_tx, |r, c| {
                    let [re, im] = flat[r * self.n_tx + c];
                    Complex64::new(re, im)
                })
            })
            .collect();
        ChannelModel::from_taps(self.delays, taps)
    }
}

// ---------------------------------------------------------------------------
// random draws

/// Draw one channel realization. Each profile tap is an independent circular
/// complex Gaussian matrix with per-entry variance equal to the normalized
/// linear tap power; taps quantized onto the same sample add up.
pub fn sample_channel(
    profile: &PowerDelayProfile,
    n_rx: usize,
    n_tx: usize,
    sample_rate_hz: f64,
    max_delay_samples: usize,
    seed: u64,
) -> Result<ChannelModel> {
    if n_rx == 0 || n_tx == 0 {
        return Err(FbmcError::InvalidConfig("empty antenna dimension".into()));
    }
    let quantized = profile.quantized_delays(sample_rate_hz)?;
    let max_b = *quantized.iter().max().unwrap();
    if max_b > max_delay_samples {
        return Err(FbmcError::InvalidConfig(format!(
            "profile {} spans {max_b} samples at {sample_rate_hz} Hz, above the limit {max_delay_samples}",
            profile.name
        )));
    }
    let powers = profile.linear_powers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delays: Vec<usize> = quantized.clone();
    delays.sort_unstable();
    delays.dedup();
    let mut taps = vec![CMat::zeros(n_rx, n_tx); delays.len()];
    for (&b, &power) in quantized.iter().zip(&powers) {
        let idx = delays.binary_search(&b).expect("delay collected above");
        let sigma = (power / 2.0).sqrt();
        for r in 0..n_rx {
            for c in 0..n_tx {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                taps[idx][(r, c)] += Complex64::new(sigma * re, sigma * im);
            }
        }
    }
    ChannelModel::from_taps(delays, taps)
}

// ---------------------------------------------------------------------------
// frequency response sets

/// Response and derivatives on the full subcarrier grid; immutable, cheap to
/// share across worker threads.
#[derive(Clone, Debug)]
pub struct FreqResponseSet {
    omegas: Vec<f64>,
    /// `h[k][m]`: k-th derivative at subcarrier m.
    h: Vec<Vec<CMat>>,
    n_rx: usize,
    n_tx: usize,
}

impl FreqResponseSet {
    pub fn two_m(&self) -> usize {
        self.omegas.len()
    }

    pub fn max_order(&self) -> usize {
        self.h.len() - 1
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn omega(&self, m: usize) -> f64 {
        self.omegas[m]
    }

    pub fn h(&self, order: usize, m: usize) -> &CMat {
        &self.h[order][m]
    }

    /// The grid-exact reciprocal set: every matrix conjugate-transposed.
    /// Differentiation commutes with the conjugate transpose, so derivative
    /// orders map one-to-one.
    pub fn hermitian_dual(&self) -> FreqResponseSet {
        FreqResponseSet {
            omegas: self.omegas.clone(),
            h: self
                .h
                .iter()
                .map(|per_m| per_m.iter().map(|mat| mat.adjoint()).collect())
                .collect(),
            n_rx: self.n_tx,
            n_tx: self.n_rx,
        }
    }

    /// Frequency-selectivity score: worst-case ||H'|| / ||H|| over the grid.
    pub fn flatness(&self) -> f64 {
        assert!(self.max_order() >= 1, "needs first derivatives");
        self.h[0]
            .iter()
            .zip(&self.h[1])
            .map(|(h0, h1)| (h1.norm() / h0.norm()).abs())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
