//! Monte Carlo experiment driver: seeded per-subcarrier MSE and SER sweeps
//! over random channels, paired with the closed-form curves and emitted as
//! CSV tables, a JSON run manifest, and optional SVG plots.
//!
//! Reproducibility contract: every random stream is keyed by
//! `(seed, draw, frame)` plus a lane tag, and draws are reduced in index
//! order, so outputs are byte-identical across runs and thread counts.
//! Symbol and noise streams are shared across designs and SNR points
//! (common random numbers), which tightens design-to-design comparisons.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::channel::{sample_channel, ChannelModel, PowerDelayProfile};
use crate::design::{design_bank, Criterion, DesignSpec, LinkDirection, SubcarrierDesign, Variant};
use crate::modem::{
    analyze, destagger, stagger, synthesize, transmit_through, ComplexGrid, Constellation,
    FrameConfig, RealSymbolGrid,
};
use crate::mse_theory::{mse_curve, to_db};
use crate::pulse::{eta_table, PrototypePulse};
use crate::{FbmcError, Result};

mod plot;

// ---------------------------------------------------------------------------
// configuration

/// Delay profile selector for the channel sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    VehA,
    VehB,
    /// Single tap at delay zero; frequency-flat by construction.
    Flat,
}

impl ProfileKind {
    pub fn to_profile(self) -> PowerDelayProfile {
        match self {
            ProfileKind::VehA => PowerDelayProfile::veh_a(),
            ProfileKind::VehB => PowerDelayProfile::veh_b(),
            ProfileKind::Flat => PowerDelayProfile::new("Flat", vec![0.0], vec![0.0])
                .expect("single-tap profile is always valid"),
        }
    }
}

/// One precoder/decoder family to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    ClassicalZf,
    OptZf,
    ClassicalMmse,
    OptMmse,
}

impl DesignKind {
    pub fn criterion(self) -> Criterion {
        match self {
            DesignKind::ClassicalZf | DesignKind::OptZf => Criterion::Zf,
            DesignKind::ClassicalMmse | DesignKind::OptMmse => Criterion::Mmse,
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            DesignKind::ClassicalZf | DesignKind::ClassicalMmse => Variant::Classical,
            DesignKind::OptZf | DesignKind::OptMmse => Variant::Optimized,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DesignKind::ClassicalZf => "classical-zf",
            DesignKind::OptZf => "opt-zf",
            DesignKind::ClassicalMmse => "classical-mmse",
            DesignKind::OptMmse => "opt-mmse",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn link_label(link: LinkDirection) -> &'static str {
    match link {
        LinkDirection::Uplink => "uplink",
        LinkDirection::Downlink => "downlink",
    }
}

fn constellation_label(c: Constellation) -> &'static str {
    match c {
        Constellation::Qam4 => "qam4",
        Constellation::Qam16 => "qam16",
    }
}

/// Full description of one experiment. Loadable from a flat TOML file in
/// which every field below is a key; missing keys take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Subcarrier count 2M.
    pub two_m: usize,
    pub spacing_hz: f64,
    /// Prototype pulse overlapping factor.
    pub kappa: usize,
    pub profile: ProfileKind,
    /// Base-station antennas N.
    pub n_bs: usize,
    /// Single-antenna users N_U.
    pub n_users: usize,
    pub link: LinkDirection,
    pub designs: Vec<DesignKind>,
    pub constellation: Constellation,
    /// SNR grid for SER sweeps; MSE runs use the first entry.
    pub snr_db_list: Vec<f64>,
    pub n_channel_draws: usize,
    pub n_frames_per_draw: usize,
    /// Real multicarrier symbol slots per frame; must be even.
    pub n_sym: usize,
    /// Edge slots excluded from metrics on each side; at least kappa.
    pub guard: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            two_m: 128,
            spacing_hz: 15e3,
            kappa: 4,
            profile: ProfileKind::VehB,
            n_bs: 4,
            n_users: 2,
            link: LinkDirection::Uplink,
            designs: vec![DesignKind::ClassicalZf, DesignKind::OptZf],
            constellation: Constellation::Qam4,
            snr_db_list: (0..=8).map(|i| 5.0 * i as f64).collect(),
            n_channel_draws: 50,
            n_frames_per_draw: 20,
            n_sym: 32,
            guard: 4,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<SimConfig> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| FbmcError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<SimConfig> {
        SimConfig::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.two_m == 0 || self.two_m % 2 != 0 {
            return Err(FbmcError::InvalidConfig(format!(
                "two_m = {} must be even and positive",
                self.two_m
            )));
        }
        if !(self.spacing_hz > 0.0) {
            return Err(FbmcError::InvalidConfig(format!(
                "spacing_hz = {}",
                self.spacing_hz
            )));
        }
        if self.n_bs == 0 || self.n_users == 0 {
            return Err(FbmcError::InvalidConfig("empty antenna dimension".into()));
        }
        if self.designs.is_empty() {
            return Err(FbmcError::InvalidConfig("designs list is empty".into()));
        }
        if self.snr_db_list.is_empty() {
            return Err(FbmcError::InvalidConfig("snr_db_list is empty".into()));
        }
        if self.n_channel_draws == 0 || self.n_frames_per_draw == 0 {
            return Err(FbmcError::InvalidConfig("zero Monte Carlo trials".into()));
        }
        if self.n_sym % 2 != 0 {
            return Err(FbmcError::InvalidConfig(format!(
                "n_sym = {} real slots do not pair into complex symbols",
                self.n_sym
            )));
        }
        if self.guard < self.kappa {
            return Err(FbmcError::InvalidConfig(format!(
                "guard = {} is below the overlapping factor {}",
                self.guard, self.kappa
            )));
        }
        if self.interior_pairs().is_empty() {
            return Err(FbmcError::InvalidConfig(format!(
                "n_sym = {} leaves no interior symbol pairs behind guard {}",
                self.n_sym, self.guard
            )));
        }
        // Surface bad pulse/frame parameters here rather than mid-run.
        let pulse = PrototypePulse::phydyas(self.two_m / 2, self.kappa)?;
        FrameConfig::new(self.two_m, self.n_sym, self.n_users, self.guard)?;
        for &design in &self.designs {
            self.design_spec(design, noise_power(self.snr_db_list[0]))
                .validate()?;
        }
        drop(pulse);
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.two_m as f64 * self.spacing_hz
    }

    /// Complex symbol slots whose two real halves both sit inside the guard.
    pub fn interior_pairs(&self) -> std::ops::Range<usize> {
        self.guard.div_ceil(2)..(self.n_sym - self.guard.min(self.n_sym)) / 2
    }

    /// SHA-256 over the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn design_spec(&self, kind: DesignKind, n0: f64) -> DesignSpec {
        DesignSpec {
            criterion: kind.criterion(),
            variant: kind.variant(),
            link: self.link,
            total_power: self.n_users as f64,
            noise_power: n0,
            n_users: self.n_users,
            n_bs_antennas: self.n_bs,
        }
    }
}

/// Per-antenna noise variance for a given SNR. Transmit power is one per
/// user (P_T = N_U), so SNR is per-user power over the noise floor.
pub fn noise_power(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

// ---------------------------------------------------------------------------
// random stream keying

const LANE_CHANNEL: u64 = 1;
const LANE_SYMBOLS: u64 = 2;
const LANE_NOISE: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, draw: u64, frame: u64, lane: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ draw) ^ frame) ^ lane)
}

// ---------------------------------------------------------------------------
// results

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MseCurve,
    SerCurve,
}

#[derive(Clone, Debug)]
pub struct MseRow {
    pub subcarrier: usize,
    pub omega: f64,
    pub design: DesignKind,
    pub link: LinkDirection,
    pub mse_theory_db: f64,
    pub mse_sim_db: f64,
    /// Complex data symbols that contributed at this subcarrier.
    pub n_trials: u64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SerRow {
    pub snr_db: f64,
    pub design: DesignKind,
    pub link: LinkDirection,
    pub constellation: Constellation,
    pub ser: f64,
    /// Half-width of the 95% normal-approximation interval on the
    /// per-frame SER mean.
    pub ci95: f64,
    pub n_symbols: u64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub enum RowSet {
    Mse(Vec<MseRow>),
    Ser(Vec<SerRow>),
}

impl RowSet {
    pub fn len(&self) -> usize {
        match self {
            RowSet::Mse(rows) => rows.len(),
            RowSet::Ser(rows) => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub rows: RowSet,
    pub config: SimConfig,
    pub config_hash: String,
    pub wall_time: Duration,
}

impl ExperimentResult {
    pub fn csv_file_name(&self) -> &'static str {
        match self.kind {
            ExperimentKind::MseCurve => "mse_curve.csv",
            ExperimentKind::SerCurve => "ser_curve.csv",
        }
    }

    pub fn csv_string(&self) -> String {
        let mut out = String::new();
        match &self.rows {
            RowSet::Mse(rows) => {
                out.push_str(
                    "subcarrier,omega,design,link,mse_theory_db,mse_sim_db,n_trials,seed\n",
                );
                for r in rows {
                    out.push_str(&format!(
                        "{},{:.8},{},{},{:.6},{:.6},{},{}\n",
                        r.subcarrier,
                        r.omega,
                        r.design,
                        link_label(r.link),
                        r.mse_theory_db,
                        r.mse_sim_db,
                        r.n_trials,
                        r.seed
                    ));
                }
            }
            RowSet::Ser(rows) => {
                out.push_str("snr_db,design,link,constellation,ser,ci95,n_symbols,seed\n");
                for r in rows {
                    out.push_str(&format!(
                        "{},{},{},{},{:e},{:e},{},{}\n",
                        r.snr_db,
                        r.design,
                        link_label(r.link),
                        constellation_label(r.constellation),
                        r.ser,
                        r.ci95,
                        r.n_symbols,
                        r.seed
                    ));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// shared chain pieces

fn draw_channel(cfg: &SimConfig, profile: &PowerDelayProfile, draw: usize) -> Result<ChannelModel> {
    let (n_rx, n_tx) = match cfg.link {
        LinkDirection::Uplink => (cfg.n_bs, cfg.n_users),
        LinkDirection::Downlink => (cfg.n_users, cfg.n_bs),
    };
    // Cap the delay spread at half a symbol so the frame guard covers the
    // channel tail.
    sample_channel(
        profile,
        n_rx,
        n_tx,
        cfg.sample_rate_hz(),
        cfg.two_m / 2,
        stream_seed(cfg.seed, draw as u64, 0, LANE_CHANNEL),
    )
}

fn run_chain(
    cfg: &SimConfig,
    pulse: &PrototypePulse,
    fcfg: &FrameConfig,
    ch: &ChannelModel,
    bank: &SubcarrierDesign,
    n0: f64,
    draw: usize,
    frame: usize,
) -> Result<(ComplexGrid, RealSymbolGrid, RealSymbolGrid)> {
    let mut sym_rng = ChaCha8Rng::seed_from_u64(stream_seed(
        cfg.seed,
        draw as u64,
        frame as u64,
        LANE_SYMBOLS,
    ));
    let qam = cfg
        .constellation
        .random_grid(cfg.n_sym / 2, cfg.n_users, cfg.two_m, &mut sym_rng);
    let d = stagger(&qam);
    let tx = synthesize(&d, bank.a_mats(), pulse)?;
    let rx = transmit_through(
        &tx,
        ch,
        n0,
        stream_seed(cfg.seed, draw as u64, frame as u64, LANE_NOISE),
    )?;
    let (_, d_hat) = analyze(&rx, bank.b_mats(), pulse, fcfg)?;
    Ok((qam, d, d_hat))
}

// ---------------------------------------------------------------------------
// MSE experiment

/// Per-subcarrier simulated MSE (complex-pair convention: twice the real
/// symbol error power, summed over streams) next to the closed-form curve,
/// averaged over channel draws, at the first SNR of the grid.
pub fn run_mse_experiment(cfg: &SimConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    cfg.validate()?;
    let pulse = PrototypePulse::phydyas(cfg.two_m / 2, cfg.kappa)?;
    let etas = eta_table(&pulse)?;
    let fcfg = FrameConfig::new(cfg.two_m, cfg.n_sym, cfg.n_users, cfg.guard)?;
    let n0 = noise_power(cfg.snr_db_list[0]);
    let profile = cfg.profile.to_profile();
    let (two_m, n_designs) = (cfg.two_m, cfg.designs.len());

    struct DrawAccum {
        theory: Vec<Vec<f64>>,
        sq_err: Vec<Vec<f64>>,
        slots: u64,
    }

    let per_draw: Vec<DrawAccum> = (0..cfg.n_channel_draws)
        .into_par_iter()
        .map(|draw| -> Result<DrawAccum> {
            let ch = draw_channel(cfg, &profile, draw)?;
            let fresp = ch.freq_response(two_m, 2)?;
            let mut theory = vec![vec![0.0; two_m]; n_designs];
            let mut sq_err = vec![vec![0.0; two_m]; n_designs];
            for (di, &design) in cfg.designs.iter().enumerate() {
                let bank = design_bank(&cfg.design_spec(design, n0), &fresp, etas.alpha)?;
                for row in mse_curve(&bank, &fresp, &etas, n0)? {
                    theory[di][row.subcarrier] = row.total;
                }
                for frame in 0..cfg.n_frames_per_draw {
                    let (_, d, d_hat) = run_chain(cfg, &pulse, &fcfg, &ch, &bank, n0, draw, frame)?;
                    for l in fcfg.interior_slots() {
                        let want = d.slot(l);
                        let got = d_hat.slot(l);
                        for m in 0..two_m {
                            let mut s = 0.0;
                            for u in 0..cfg.n_users {
                                let e = got[(u, m)] - want[(u, m)];
                                s += e * e;
                            }
                            sq_err[di][m] += s;
                        }
                    }
                }
            }
            Ok(DrawAccum {
                theory,
                sq_err,
                slots: (cfg.n_frames_per_draw * fcfg.interior_slots().len()) as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let draws = cfg.n_channel_draws as f64;
    let total_slots: u64 = per_draw.iter().map(|a| a.slots).sum();
    let n_trials = total_slots * cfg.n_users as u64 / 2;
    let mut rows = Vec::with_capacity(two_m * n_designs);
    for m in 0..two_m {
        for (di, &design) in cfg.designs.iter().enumerate() {
            let theory = per_draw.iter().map(|a| a.theory[di][m]).sum::<f64>() / draws;
            let sim =
                2.0 * per_draw.iter().map(|a| a.sq_err[di][m]).sum::<f64>() / total_slots as f64;
            rows.push(MseRow {
                subcarrier: m,
                omega: TAU * m as f64 / two_m as f64,
                design,
                link: cfg.link,
                mse_theory_db: to_db(theory),
                mse_sim_db: to_db(sim),
                n_trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(ExperimentResult {
        kind: ExperimentKind::MseCurve,
        rows: RowSet::Mse(rows),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        wall_time: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// SER experiment

/// Hard-decision SER per SNR point and design, averaged over users, draws,
/// frames, and subcarriers; detection is minimum-distance on the recombined
/// complex symbols.
pub fn run_ser_experiment(cfg: &SimConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    cfg.validate()?;
    let pulse = PrototypePulse::phydyas(cfg.two_m / 2, cfg.kappa)?;
    let etas = eta_table(&pulse)?;
    let fcfg = FrameConfig::new(cfg.two_m, cfg.n_sym, cfg.n_users, cfg.guard)?;
    let profile = cfg.profile.to_profile();
    let n_designs = cfg.designs.len();
    let n_cells = cfg.snr_db_list.len() * n_designs;
    let symbols_per_frame =
        (cfg.interior_pairs().len() * cfg.n_users * cfg.two_m) as u64;

    // frame_sers[cell][frame] per draw; cells ordered (snr, design).
    let per_draw: Vec<Vec<Vec<f64>>> = (0..cfg.n_channel_draws)
        .into_par_iter()
        .map(|draw| -> Result<Vec<Vec<f64>>> {
            let ch = draw_channel(cfg, &profile, draw)?;
            let fresp = ch.freq_response(cfg.two_m, 2)?;
            let mut cells = vec![Vec::with_capacity(cfg.n_frames_per_draw); n_cells];
            for (si, &snr_db) in cfg.snr_db_list.iter().enumerate() {
                let n0 = noise_power(snr_db);
                for (di, &design) in cfg.designs.iter().enumerate() {
                    let bank = design_bank(&cfg.design_spec(design, n0), &fresp, etas.alpha)?;
                    for frame in 0..cfg.n_frames_per_draw {
                        let (qam, _, d_hat) =
                            run_chain(cfg, &pulse, &fcfg, &ch, &bank, n0, draw, frame)?;
                        let decoded = destagger(&d_hat)?;
                        let mut errors = 0u64;
                        for u in cfg.interior_pairs() {
                            let sent = qam.slot(u);
                            let got = decoded.slot(u);
                            for s in 0..cfg.n_users {
                                for m in 0..cfg.two_m {
                                    if cfg.constellation.detect(got[(s, m)])
                                        != cfg.constellation.detect(sent[(s, m)])
                                    {
                                        errors += 1;
                                    }
                                }
                            }
                        }
                        cells[si * n_designs + di]
                            .push(errors as f64 / symbols_per_frame as f64);
                    }
                }
            }
            Ok(cells)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(n_cells);
    for (si, &snr_db) in cfg.snr_db_list.iter().enumerate() {
        for (di, &design) in cfg.designs.iter().enumerate() {
            let cell = si * n_designs + di;
            let frame_sers: Vec<f64> = per_draw
                .iter()
                .flat_map(|d| d[cell].iter().copied())
                .collect();
            let n = frame_sers.len() as f64;
            let mean = frame_sers.iter().sum::<f64>() / n;
            let ci95 = if frame_sers.len() > 1 {
                let var = frame_sers.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            rows.push(SerRow {
                snr_db,
                design,
                link: cfg.link,
                constellation: cfg.constellation,
                ser: mean,
                ci95,
                n_symbols: symbols_per_frame * frame_sers.len() as u64,
                seed: cfg.seed,
            });
        }
    }
    Ok(ExperimentResult {
        kind: ExperimentKind::SerCurve,
        rows: RowSet::Ser(rows),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        wall_time: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// report emission

/// Write the CSV table, a JSON run manifest, and (optionally) an SVG plot
/// into `out_dir`; returns the paths written.
pub fn emit_report(res: &ExperimentResult, out_dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let csv_path = out_dir.join(res.csv_file_name());
    fs::write(&csv_path, res.csv_string())?;
    written.push(csv_path);

    #[derive(Serialize)]
    struct Manifest<'a> {
        kind: ExperimentKind,
        config: &'a SimConfig,
        config_hash: &'a str,
        tool_version: &'static str,
        wall_time_s: f64,
        rows: usize,
    }
    let manifest = Manifest {
        kind: res.kind,
        config: &res.config,
        config_hash: &res.config_hash,
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_time_s: res.wall_time.as_secs_f64(),
        rows: res.rows.len(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| FbmcError::Parse(e.to_string()))?;
    json.push('\n');
    fs::write(&manifest_path, json)?;
    written.push(manifest_path);

    if plot {
        let svg_path = out_dir.join(match res.kind {
            ExperimentKind::MseCurve => "mse_curve.svg",
            ExperimentKind::SerCurve => "ser_curve.svg",
        });
        fs::write(&svg_path, render_plot(res))?;
        written.push(svg_path);
    }
    Ok(written)
}

fn render_plot(res: &ExperimentResult) -> String {
    match &res.rows {
        RowSet::Mse(rows) => {
            let mut series = Vec::new();
            for &design in &res.config.designs {
                let theory: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.design == design)
                    .map(|r| (r.subcarrier as f64, r.mse_theory_db))
                    .collect();
                let sim: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.design == design)
                    .map(|r| (r.subcarrier as f64, r.mse_sim_db))
                    .collect();
                series.push(plot::Series {
                    label: format!("{design} theory"),
                    points: theory,
                });
                series.push(plot::Series {
                    label: format!("{design} simulated"),
                    points: sim,
                });
            }
            plot::line_plot(
                &format!("Per-subcarrier MSE, {}", link_label(res.config.link)),
                "subcarrier m",
                "MSE [dB]",
                &series,
            )
        }
        RowSet::Ser(rows) => {
            let series: Vec<plot::Series> = res
                .config
                .designs
                .iter()
                .map(|&design| plot::Series {
                    label: design.label().to_string(),
                    points: rows
                        .iter()
                        .filter(|r| r.design == design && r.ser > 0.0)
                        .map(|r| (r.snr_db, r.ser.log10()))
                        .collect(),
                })
                .collect();
            plot::line_plot(
                &format!("SER vs SNR, {}", link_label(res.config.link)),
                "SNR [dB]",
                "log10(SER)",
                &series,
            )
        }
    }
}

// ---------------------------------------------------------------------------
