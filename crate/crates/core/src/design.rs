//! Per-subcarrier precoder and decoder banks.
//!
//! Eight designs: {classical, optimized} x {zero-forcing, MMSE} x {uplink,
//! downlink}. The single-antenna users cannot cooperate, so the uplink fixes
//! the precoder to a scalar power normalization and shapes the base-station
//! decoder; the downlink mirrors this. Classical variants treat the channel
//! as flat across each subcarrier; optimized variants admit the first two
//! channel derivatives and spend spare base-station antennas on cancelling
//! the frequency-selectivity distortion.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::FreqResponseSet;
use crate::linalg::{fro_norm_sq, identity, inverse_or_ridge, pinv_clip, pinv_strict, CMat};
use crate::{FbmcError, Result};

// ---------------------------------------------------------------------------
// specification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Zf,
    Mmse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Classical,
    Optimized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkDirection {
    Uplink,
    Downlink,
}

/// What to build and under which power/noise budget.
#[derive(Clone, Copy, Debug)]
pub struct DesignSpec {
    pub criterion: Criterion,
    pub variant: Variant,
    pub link: LinkDirection,
    /// Per-subcarrier total transmit power budget.
    pub total_power: f64,
    /// Per-subcarrier noise variance at each receive antenna.
    pub noise_power: f64,
    pub n_users: usize,
    pub n_bs_antennas: usize,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_power > 0.0) {
            return Err(FbmcError::InvalidConfig(format!(
                "total power {}",
                self.total_power
            )));
        }
        if !(self.noise_power >= 0.0) {
            return Err(FbmcError::InvalidConfig(format!(
                "noise power {}",
                self.noise_power
            )));
        }
        if self.n_users == 0 || self.n_bs_antennas == 0 {
            return Err(FbmcError::InvalidConfig("empty antenna setup".into()));
        }
        if self.criterion == Criterion::Zf && self.n_bs_antennas < self.n_users {
            return Err(FbmcError::InvalidConfig(format!(
                "channel inversion needs at least as many base-station antennas \
                 as users, got {} < {}",
                self.n_bs_antennas, self.n_users
            )));
        }
        Ok(())
    }

    /// Normalized noise level `N_0 N_U / P_T` entering every regularizer.
    fn noise_ratio(&self) -> f64 {
        self.noise_power * self.n_users as f64 / self.total_power
    }

    fn check_channel(&self, freq: &FreqResponseSet, needed_order: usize) -> Result<()> {
        let expected = match self.link {
            LinkDirection::Uplink => (self.n_bs_antennas, self.n_users),
            LinkDirection::Downlink => (self.n_users, self.n_bs_antennas),
        };
        if (freq.n_rx(), freq.n_tx()) != expected {
            return Err(FbmcError::DimensionMismatch {
                context: "design",
                expected: format!("{}x{} channel", expected.0, expected.1),
                got: format!("{}x{}", freq.n_rx(), freq.n_tx()),
            });
        }
        if freq.max_order() < needed_order {
            return Err(FbmcError::Unsupported {
                what: "channel derivative order",
                value: format!("have {}, need {}", freq.max_order(), needed_order),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// result bank

/// Precoder/decoder matrices for every subcarrier, normalizations included.
#[derive(Clone, Debug)]
pub struct SubcarrierDesign {
    criterion: Criterion,
    variant: Variant,
    link: LinkDirection,
    a_mats: Vec<CMat>,
    b_mats: Vec<CMat>,
    xi: Vec<f64>,
}

impl SubcarrierDesign {
    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn link(&self) -> LinkDirection {
        self.link
    }

    pub fn n_subcarriers(&self) -> usize {
        self.a_mats.len()
    }

    pub fn a_mats(&self) -> &[CMat] {
        &self.a_mats
    }

    pub fn b_mats(&self) -> &[CMat] {
        &self.b_mats
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Per-subcarrier matrices as JSON (row-major re/im pairs) for external
    /// verification.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            criterion: Criterion,
            variant: Variant,
            link: LinkDirection,
            xi: &'a [f64],
            a_mats: Vec<Vec<[f64; 2]>>,
            b_mats: Vec<Vec<[f64; 2]>>,
        }
        let pack = |mats: &[CMat]| -> Vec<Vec<[f64; 2]>> {
            mats.iter()
                .map(|m| {
                    let mut rows = Vec::with_capacity(m.len());
                    for i in 0..m.nrows() {
                        for j in 0..m.ncols() {
                            rows.push([m[(i, j)].re, m[(i, j)].im]);
                        }
                    }
                    rows
                })
                .collect()
        };
        serde_json::to_string_pretty(&Dump {
            criterion: self.criterion,
            variant: self.variant,
            link: self.link,
            xi: &self.xi,
            a_mats: pack(&self.a_mats),
            b_mats: pack(&self.b_mats),
        })
        .map_err(|e| FbmcError::Parse(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// entry points

/// Dispatch on the spec and build the matching bank. `alpha` is the pulse
/// curvature constant; only the optimized variants read it.
pub fn design_bank(
    spec: &DesignSpec,
    freq: &FreqResponseSet,
    alpha: f64,
) -> Result<SubcarrierDesign> {
    match (spec.criterion, spec.variant, spec.link) {
        (Criterion::Zf, Variant::Classical, _) => classical_zf(spec, freq),
        (Criterion::Zf, Variant::Optimized, LinkDirection::Uplink) => {
            opt_zf_decoder(spec, freq, alpha)
        }
        (Criterion::Zf, Variant::Optimized, LinkDirection::Downlink) => {
            opt_zf_precoder(spec, freq, alpha)
        }
        (Criterion::Mmse, Variant::Classical, _) => classical_mmse(spec, freq),
        (Criterion::Mmse, Variant::Optimized, LinkDirection::Uplink) => {
            opt_mmse_decoder(spec, freq, alpha)
        }
        (Criterion::Mmse, Variant::Optimized, LinkDirection::Downlink) => {
            opt_mmse_precoder(spec, freq, alpha)
        }
    }
}

/// Flat-channel inversion: pseudo-inverse decoder (uplink) or precoder
/// (downlink).
pub fn classical_zf(spec: &DesignSpec, freq: &FreqResponseSet) -> Result<SubcarrierDesign> {
    spec.validate()?;
    spec.check_channel(freq, 0)?;
    build_per_subcarrier(spec, freq, |m| match spec.link {
        LinkDirection::Uplink => {
            let hd = pinv_strict(freq.h(0, m), "classical zf decoder")?;
            Ok(uplink_parts(spec, hd))
        }
        LinkDirection::Downlink => {
            let hd = pinv_strict(freq.h(0, m), "classical zf precoder")?;
            let xi = (fro_norm_sq(&hd) / spec.total_power).sqrt();
            Ok(downlink_parts(spec, hd, xi))
        }
    })
}

/// Channel-inverting uplink decoder with a null-space component that soaks
/// up the first-order selectivity distortion.
pub fn opt_zf_decoder(
    spec: &DesignSpec,
    freq: &FreqResponseSet,
    alpha: f64,
) -> Result<SubcarrierDesign> {
    spec.validate()?;
    require_link(spec, LinkDirection::Uplink)?;
    check_zf_regularizer(spec, alpha)?;
    spec.check_channel(freq, 1)?;
    let c = zf_regularizer(spec, alpha);
    build_per_subcarrier(spec, freq, |m| {
        let h = freq.h(0, m);
        let h1 = freq.h(1, m);
        let hd = pinv_strict(h, "optimized zf decoder")?;
        let b_tilde = if alpha == 0.0 {
            CMat::zeros(spec.n_users, spec.n_bs_antennas)
        } else {
            let p_ul = identity(spec.n_bs_antennas) - h * &hd;
            let gram = h1.adjoint() * &p_ul * h1 + identity(spec.n_users).scale(c);
            let gram_inv = if c == 0.0 {
                pinv_clip(&gram)
            } else {
                inverse_or_ridge(&gram, "optimized zf decoder gram")?
            };
            -(&hd * h1) * gram_inv * h1.adjoint() * &p_ul
        };
        Ok(uplink_parts(spec, hd + b_tilde))
    })
}

/// Downlink mirror of [`opt_zf_decoder`]: pseudo-inverse plus a transmit
/// null-space component.
pub fn opt_zf_precoder(
    spec: &DesignSpec,
    freq: &FreqResponseSet,
    alpha: f64,
) -> Result<SubcarrierDesign> {
    spec.validate()?;
    require_link(spec, LinkDirection::Downlink)?;
    check_zf_regularizer(spec, alpha)?;
    spec.check_channel(freq, 1)?;
    let c = zf_regularizer(spec, alpha);
    build_per_subcarrier(spec, freq, |m| {
        let h = freq.h(0, m);
        let h1 = freq.h(1, m);
        let hd = pinv_strict(h, "optimized zf precoder")?;
        let projected = if alpha == 0.0 {
            CMat::zeros(spec.n_bs_antennas, spec.n_users)
        } else {
            let p_dl = identity(spec.n_bs_antennas) - &hd * h;
            let gram = h1 * &p_dl * h1.adjoint() + identity(spec.n_users).scale(c);
            let gram_inv = if c == 0.0 {
                pinv_clip(&gram)
            } else {
                inverse_or_ridge(&gram, "optimized zf precoder gram")?
            };
            let a_tilde = -(h1.adjoint() * gram_inv) * h1 * &hd;
            &p_dl * a_tilde
        };
        let a_hat = hd + projected;
        let xi = (fro_norm_sq(&a_hat) / spec.total_power).sqrt();
        Ok(downlink_parts(spec, a_hat, xi))
    })
}

/// Flat-channel MMSE design for either link direction.
pub fn classical_mmse(spec: &DesignSpec, freq: &FreqResponseSet) -> Result<SubcarrierDesign> {
    spec.validate()?;
    spec.check_channel(freq, 0)?;
    let nu = spec.noise_ratio();
    build_per_subcarrier(spec, freq, |m| match spec.link {
        LinkDirection::Uplink => {
            let b_hat = mmse_decoder_core(freq.h(0, m), None, None, 0.0, nu)?;
            Ok(uplink_parts(spec, b_hat))
        }
        LinkDirection::Downlink => {
            let (a_hat, _) = mmse_precoder_core(freq.h(0, m), None, None, 0.0, nu)?;
            let xi = (fro_norm_sq(&a_hat) / spec.total_power).sqrt();
            Ok(downlink_parts(spec, a_hat, xi))
        }
    })
}

/// Uplink MMSE decoder carrying first- and second-derivative corrections.
pub fn opt_mmse_decoder(
    spec: &DesignSpec,
    freq: &FreqResponseSet,
    alpha: f64,
) -> Result<SubcarrierDesign> {
    spec.validate()?;
    require_link(spec, LinkDirection::Uplink)?;
    spec.check_channel(freq, 2)?;
    let nu = spec.noise_ratio();
    build_per_subcarrier(spec, freq, |m| {
        let b_hat = mmse_decoder_core(
            freq.h(0, m),
            Some(freq.h(1, m)),
            Some(freq.h(2, m)),
            alpha,
            nu,
        )?;
        Ok(uplink_parts(spec, b_hat))
    })
}

/// Downlink MMSE precoder carrying derivative corrections; the end-to-end
/// matrix is constrained to be real so that taking the real part at the
/// users loses nothing.
pub fn opt_mmse_precoder(
    spec: &DesignSpec,
    freq: &FreqResponseSet,
    alpha: f64,
) -> Result<SubcarrierDesign> {
    spec.validate()?;
    require_link(spec, LinkDirection::Downlink)?;
    spec.check_channel(freq, 2)?;
    let nu = spec.noise_ratio();
    build_per_subcarrier(spec, freq, |m| {
        let (a_hat, _) = mmse_precoder_core(
            freq.h(0, m),
            Some(freq.h(1, m)),
            Some(freq.h(2, m)),
            alpha,
            nu,
        )?;
        let xi = (fro_norm_sq(&a_hat) / spec.total_power).sqrt();
        Ok(downlink_parts(spec, a_hat, xi))
    })
}

// ---------------------------------------------------------------------------
// per-subcarrier cores

fn require_link(spec: &DesignSpec, expected: LinkDirection) -> Result<()> {
    if spec.link != expected {
        return Err(FbmcError::InvalidConfig(format!(
            "design is specific to the {expected:?} direction, spec says {:?}",
            spec.link
        )));
    }
    Ok(())
}

fn check_zf_regularizer(spec: &DesignSpec, alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(FbmcError::InvalidConfig(format!("pulse constant {alpha}")));
    }
    if alpha == 0.0 && spec.noise_power == 0.0 {
        return Err(FbmcError::InvalidConfig(
            "noiseless design with a zero pulse constant leaves the null-space \
             weighting undefined"
                .into(),
        ));
    }
    Ok(())
}

/// Regularizer `N_0 N_U / (P_T alpha)` of the null-space weighting; infinite
/// alpha-free designs never call this.
fn zf_regularizer(spec: &DesignSpec, alpha: f64) -> f64 {
    if alpha == 0.0 {
        0.0
    } else {
        spec.noise_power * spec.n_users as f64 / (spec.total_power * alpha)
    }
}

fn uplink_parts(spec: &DesignSpec, b_hat: CMat) -> (CMat, CMat, f64) {
    let xi = (spec.total_power / spec.n_users as f64).sqrt();
    let a = identity(spec.n_users).scale(xi);
    let b = b_hat.scale(1.0 / xi);
    (a, b, xi)
}

fn downlink_parts(spec: &DesignSpec, a_hat: CMat, xi: f64) -> (CMat, CMat, f64) {
    let a = a_hat.scale(1.0 / xi);
    let b = identity(spec.n_users).scale(xi);
    (a, b, xi)
}

/// `(H^H + (alpha/2) H''^H) (H H^H + alpha H'H'^H + (alpha/2)(H H''^H +
/// H'' H^H) + nu I)^-1`; the classical design is alpha = 0.
fn mmse_decoder_core(
    h: &CMat,
    h1: Option<&CMat>,
    h2: Option<&CMat>,
    alpha: f64,
    nu: f64,
) -> Result<CMat> {
    let n = h.nrows();
    let mut gram = h * h.adjoint() + identity(n).scale(nu);
    let mut target = h.adjoint();
    if alpha != 0.0 {
        let h1 = h1.expect("derivative required for the optimized design");
        let h2 = h2.expect("curvature required for the optimized design");
        gram += (h1 * h1.adjoint()).scale(alpha);
        gram += (h * h2.adjoint() + h2 * h.adjoint()).scale(alpha / 2.0);
        target += h2.adjoint().scale(alpha / 2.0);
    }
    let inv = inverse_or_ridge(&gram, "mmse decoder gram")?;
    Ok(target * inv)
}

/// Unnormalized downlink MMSE precoder and its multiplier: solves the
/// quadratic program subject to a real end-to-end matrix, Im(H A_hat) = 0.
fn mmse_precoder_core(
    h: &CMat,
    h1: Option<&CMat>,
    h2: Option<&CMat>,
    alpha: f64,
    nu: f64,
) -> Result<(CMat, DMatrix<f64>)> {
    let n = h.ncols();
    let mut x = h.adjoint() * h + identity(n).scale(nu);
    let mut target = h.adjoint();
    if alpha != 0.0 {
        let h1 = h1.expect("derivative required for the optimized design");
        let h2 = h2.expect("curvature required for the optimized design");
        x += (h1.adjoint() * h1).scale(alpha);
        x += (h.adjoint() * h2 + h2.adjoint() * h).scale(alpha / 2.0);
        target += h2.adjoint().scale(alpha / 2.0);
    }
    let x_inv = inverse_or_ridge(&x, "mmse precoder gram")?;
    let h_xinv = h * &x_inv;
    let gain = &h_xinv * h.adjoint();
    let gain_re = gain.map(|z| z.re);
    let gain_re_inv = gain_re
        .try_inverse()
        .ok_or(FbmcError::SingularMatrix {
            context: "mmse precoder real end-to-end gain",
        })?;
    let psi = -gain_re_inv * (&h_xinv * &target).map(|z| z.im);
    let j_psi = psi.map(|v| Complex64::new(0.0, v));
    let a_hat = x_inv * (h.adjoint() * j_psi + target);
    Ok((a_hat, psi))
}

fn build_per_subcarrier<F>(
    spec: &DesignSpec,
    freq: &FreqResponseSet,
    mut core: F,
) -> Result<SubcarrierDesign>
where
    F: FnMut(usize) -> Result<(CMat, CMat, f64)>,
{
    let two_m = freq.two_m();
    let mut a_mats = Vec::with_capacity(two_m);
    let mut b_mats = Vec::with_capacity(two_m);
    let mut xi = Vec::with_capacity(two_m);
    for m in 0..two_m {
        let (a, b, x) = core(m).map_err(|e| FbmcError::DesignAtSubcarrier {
            subcarrier: m,
            source: Box::new(e),
            snapshot: channel_snapshot(freq, m),
        })?;
        a_mats.push(a);
        b_mats.push(b);
        xi.push(x);
    }
    Ok(SubcarrierDesign {
        criterion: spec.criterion,
        variant: spec.variant,
        link: spec.link,
        a_mats,
        b_mats,
        xi,
    })
}

fn channel_snapshot(freq: &FreqResponseSet, m: usize) -> String {
    let pack = |mat: &CMat| -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(mat.len());
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                out.push([mat[(i, j)].re, mat[(i, j)].im]);
            }
        }
        out
    };
    let orders: Vec<Vec<[f64; 2]>> = (0..=freq.max_order()).map(|k| pack(freq.h(k, m))).collect();
    serde_json::json!({
        "subcarrier": m,
        "omega": freq.omega(m),
        "n_rx": freq.n_rx(),
        "n_tx": freq.n_tx(),
        "h_by_order": orders,
    })
    .to_string()
}

// ---------------------------------------------------------------------------
