//! Path loss, UPA array responses and the three link sets (direct, UAV→RIS, RIS→user).
//!
//! The RIS is a vertical planar array. Its outward normal points along azimuth
//! `ris_normal_azimuth` in the horizontal plane (default `π`, i.e. `−x`). Element
//! `(l_x, l_y)` sits `l_x·d` along the horizontal in-plane axis and `l_y·d` up the
//! vertical axis; elements are stored row-major, index `l_x·cols + l_y`.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub type Complex = Complex64;
pub type Point = [f64; 3];

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub uav_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub ris_position: Point,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// Element spacing `d` in meters.
    pub element_spacing: f64,
    pub carrier_freq_hz: f64,
    /// Azimuth of the RIS outward normal, radians.
    pub ris_normal_azimuth: f64,
}

impl Geometry {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn num_pairs(&self) -> usize {
        self.uav_positions.len()
    }

    pub fn num_elements(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.uav_positions.len() != self.user_positions.len() {
            return Err(Error::config(
                "geometry.user_positions",
                format!(
                    "{} UAVs but {} users",
                    self.uav_positions.len(),
                    self.user_positions.len()
                ),
            ));
        }
        if self.uav_positions.is_empty() {
            return Err(Error::config("geometry.uav_positions", "at least one pair required"));
        }
        if self.num_elements() == 0 {
            return Err(Error::config("geometry.ris_rows", "RIS must have at least one element"));
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return Err(Error::config("geometry.element_spacing", "must be positive"));
        }
        if !(self.carrier_freq_hz > 0.0 && self.carrier_freq_hz.is_finite()) {
            return Err(Error::config("geometry.carrier_freq_hz", "must be positive"));
        }
        let all = self
            .uav_positions
            .iter()
            .chain(&self.user_positions)
            .chain(std::iter::once(&self.ris_position));
        if all.flatten().any(|c| !c.is_finite()) {
            return Err(Error::config("geometry", "positions must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingParams {
    /// Rician factor `α` of the RIS→user links.
    pub rician_k: f64,
    pub pl_exp_direct: f64,
    pub pl_exp_uav_ris: f64,
    pub pl_exp_ris_user: f64,
    pub ref_distance: f64,
    pub uav_antenna_gain_dbi: f64,
    pub user_antenna_gain_dbi: f64,
    /// Taken from the scenario's top-level seed.
    #[serde(skip)]
    pub seed: u64,
    /// Draw independent small-scale fading every frame (block fading). When false the
    /// fading of frame 0 is reused for every frame.
    pub redraw_per_frame: bool,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            rician_k: 10.0,
            pl_exp_direct: 3.5,
            pl_exp_uav_ris: 2.2,
            pl_exp_ris_user: 2.8,
            ref_distance: 1.0,
            uav_antenna_gain_dbi: 10.0,
            user_antenna_gain_dbi: 5.0,
            seed: 0,
            redraw_per_frame: true,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        for (path, tau) in [
            ("fading.pl_exp_direct", self.pl_exp_direct),
            ("fading.pl_exp_uav_ris", self.pl_exp_uav_ris),
            ("fading.pl_exp_ris_user", self.pl_exp_ris_user),
        ] {
            if !(tau >= 2.0 && tau.is_finite()) {
                return Err(Error::config(path, format!("path loss exponent {tau} must be >= 2")));
            }
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::config("fading.rician_k", "must be >= 0"));
        }
        if !(self.ref_distance > 0.0 && self.ref_distance.is_finite()) {
            return Err(Error::config("fading.ref_distance", "must be positive"));
        }
        Ok(())
    }

    /// Combined UAV + user antenna gain as a linear power factor.
    pub fn antenna_gain_linear(&self) -> f64 {
        db_to_linear(self.uav_antenna_gain_dbi + self.user_antenna_gain_dbi)
    }

    /// Linear reference gain `h0` at `ref_distance` for the given carrier.
    pub fn reference_gain(&self, carrier_freq_hz: f64) -> Result<f64> {
        let pl = reference_path_loss_db(self.ref_distance, carrier_freq_hz / 1e9)?;
        Ok(db_to_linear(-pl))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Urban-macro LoS reference path loss in dB, frequency in GHz.
pub fn reference_path_loss_db(ref_distance: f64, freq_ghz: f64) -> Result<f64> {
    if !(ref_distance > 0.0) || !(freq_ghz > 0.0) {
        return Err(Error::domain(format!(
            "path loss needs positive distance and frequency, got d0={ref_distance}, f={freq_ghz} GHz"
        )));
    }
    Ok(28.0 + 22.0 * ref_distance.log10() + 20.0 * freq_ghz.log10())
}

/// Large-scale power gain `h0 · d^(−τ)`.
pub fn path_gain(h0: f64, distance: f64, exponent: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::domain(format!("link distance must be positive, got {distance}")));
    }
    Ok(h0 * distance.powf(-exponent))
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Azimuth and elevation (polar angle from the vertical) of `target` seen from the RIS.
pub fn ris_angles(ris: &Point, normal_azimuth: f64, target: &Point) -> Result<(f64, f64)> {
    let v = [target[0] - ris[0], target[1] - ris[1], target[2] - ris[2]];
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(r > 0.0) {
        return Err(Error::domain("point coincides with the RIS"));
    }
    let u = [v[0] / r, v[1] / r, v[2] / r];
    let (sa, ca) = normal_azimuth.sin_cos();
    let along_normal = u[0] * ca + u[1] * sa;
    let along_tangent = u[0] * sa - u[1] * ca;
    let azimuth = along_tangent.atan2(along_normal);
    let elevation = u[2].clamp(-1.0, 1.0).acos();
    Ok((azimuth, elevation))
}

/// UPA steering vector `a_R(φ, ϑ)` over all `rows·cols` elements.
pub fn array_response(
    azimuth: f64,
    elevation: f64,
    rows: usize,
    cols: usize,
    spacing: f64,
    wavelength: f64,
) -> Vec<Complex> {
    array_response_block(azimuth, elevation, cols, spacing, wavelength, 0..rows * cols)
}

/// Steering vector entries for the row-major element indices in `elements`.
pub fn array_response_block(
    azimuth: f64,
    elevation: f64,
    cols: usize,
    spacing: f64,
    wavelength: f64,
    elements: Range<usize>,
) -> Vec<Complex> {
    let k = 2.0 * PI / wavelength * spacing;
    let horizontal = azimuth.sin() * elevation.sin();
    let vertical = elevation.cos();
    elements
        .map(|idx| {
            let lx = (idx / cols) as f64;
            let ly = (idx % cols) as f64;
            Complex::from_polar(1.0, k * (lx * horizontal + ly * vertical))
        })
        .collect()
}

/// Zero-mean unit-variance circularly symmetric complex Gaussian.
pub fn cscg<R: Rng + ?Sized>(rng: &mut R) -> Complex {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn pair_positions(geometry: &Geometry, pair: usize) -> Result<(&Point, &Point)> {
    match (geometry.uav_positions.get(pair), geometry.user_positions.get(pair)) {
        (Some(u), Some(v)) => Ok((u, v)),
        _ => Err(Error::domain(format!(
            "pair index {pair} out of range for {} pairs",
            geometry.num_pairs()
        ))),
    }
}

fn check_group_size(geometry: &Geometry, group_size: usize) -> Result<()> {
    let n = geometry.num_elements();
    if group_size == 0 || n % group_size != 0 {
        return Err(Error::domain(format!("group size {group_size} does not divide N = {n}")));
    }
    Ok(())
}

/// Deterministic amplitude `sqrt(h0 · d^(−τ))` of the direct link; the sampled gain is
/// this times a unit CSCG draw.
pub fn direct_amplitude(geometry: &Geometry, fading: &FadingParams, pair: usize) -> Result<f64> {
    let (uav, user) = pair_positions(geometry, pair)?;
    let h0 = fading.reference_gain(geometry.carrier_freq_hz)?;
    Ok(path_gain(h0, distance(uav, user), fading.pl_exp_direct)?.sqrt())
}

pub fn sample_direct<R: Rng + ?Sized>(
    geometry: &Geometry,
    fading: &FadingParams,
    pair: usize,
    rng: &mut R,
) -> Result<Complex> {
    Ok(direct_amplitude(geometry, fading, pair)? * cscg(rng))
}

pub fn uav_ris_block(
    geometry: &Geometry,
    fading: &FadingParams,
    pair: usize,
    elements: Range<usize>,
) -> Result<Vec<Complex>> {
    let (uav, _) = pair_positions(geometry, pair)?;
    let h0 = fading.reference_gain(geometry.carrier_freq_hz)?;
    let amp = path_gain(
        h0,
        distance(uav, &geometry.ris_position),
        fading.pl_exp_uav_ris,
    )?
    .sqrt();
    let (az, el) = ris_angles(&geometry.ris_position, geometry.ris_normal_azimuth, uav)?;
    let resp = array_response_block(
        az,
        el,
        geometry.ris_cols,
        geometry.element_spacing,
        geometry.wavelength(),
        elements,
    );
    Ok(resp.into_iter().map(|a| a * amp).collect())
}

/// UAV→RIS vector `g_k` over the first `group_size` elements. The link is pure LoS, so
/// no randomness is involved.
pub fn sample_uav_ris(
    geometry: &Geometry,
    fading: &FadingParams,
    pair: usize,
    group_size: usize,
) -> Result<Vec<Complex>> {
    check_group_size(geometry, group_size)?;
    uav_ris_block(geometry, fading, pair, 0..group_size)
}

pub fn ris_user_block<R: Rng + ?Sized>(
    geometry: &Geometry,
    fading: &FadingParams,
    pair: usize,
    elements: Range<usize>,
    rng: &mut R,
) -> Result<Vec<Complex>> {
    let (_, user) = pair_positions(geometry, pair)?;
    let h0 = fading.reference_gain(geometry.carrier_freq_hz)?;
    let amp = path_gain(
        h0,
        distance(&geometry.ris_position, user),
        fading.pl_exp_ris_user,
    )?
    .sqrt();
    let (az, el) = ris_angles(&geometry.ris_position, geometry.ris_normal_azimuth, user)?;
    let los = array_response_block(
        az,
        el,
        geometry.ris_cols,
        geometry.element_spacing,
        geometry.wavelength(),
        elements,
    );
    let alpha = fading.rician_k;
    let (w_los, w_nlos) = if alpha.is_infinite() {
        (1.0, 0.0)
    } else {
        ((alpha / (1.0 + alpha)).sqrt(), (1.0 / (1.0 + alpha)).sqrt())
    };
    Ok(los
        .into_iter()
        .map(|a| amp * (w_los * a.conj() + w_nlos * cscg(rng)))
        .collect())
}

/// RIS→user vector `h_k` over the first `group_size` elements (Rician).
pub fn sample_ris_user<R: Rng + ?Sized>(
    geometry: &Geometry,
    fading: &FadingParams,
    pair: usize,
    group_size: usize,
    rng: &mut R,
) -> Result<Vec<Complex>> {
    check_group_size(geometry, group_size)?;
    ris_user_block(geometry, fading, pair, 0..group_size, rng)
}

/// Channels of one pair restricted to a set of RIS elements.
#[derive(Debug, Clone, Copy)]
pub struct PairChannel<'a> {
    pub direct: Complex,
    pub uav_to_ris: &'a [Complex],
    pub ris_to_user: &'a [Complex],
}

/// One frame's realization of every link.
///
/// The reflected vectors span the whole surface; a group of `N/L` elements is a
/// contiguous slice of them, so every allocation candidate sees the same physical
/// channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub direct: Vec<Complex>,
    pub uav_to_ris: Vec<Vec<Complex>>,
    pub ris_to_user: Vec<Vec<Complex>>,
}

impl ChannelRealization {
    pub fn new(
        direct: Vec<Complex>,
        uav_to_ris: Vec<Vec<Complex>>,
        ris_to_user: Vec<Vec<Complex>>,
    ) -> Result<Self> {
        let k = direct.len();
        if uav_to_ris.len() != k || ris_to_user.len() != k || k == 0 {
            return Err(Error::domain("link sets must cover the same nonzero number of pairs"));
        }
        let n = uav_to_ris[0].len();
        if n == 0 || uav_to_ris.iter().chain(&ris_to_user).any(|v| v.len() != n) {
            return Err(Error::domain("reflected vectors must share one nonzero length"));
        }
        let finite = |c: &Complex| c.re.is_finite() && c.im.is_finite();
        if !direct.iter().chain(uav_to_ris.iter().flatten()).chain(ris_to_user.iter().flatten()).all(finite) {
            return Err(Error::domain("channel entries must be finite"));
        }
        Ok(Self {
            direct,
            uav_to_ris,
            ris_to_user,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.direct.len()
    }

    pub fn num_elements(&self) -> usize {
        self.uav_to_ris[0].len()
    }

    pub fn pair(&self, k: usize) -> PairChannel<'_> {
        self.pair_elements(k, 0..self.num_elements())
    }

    pub fn pair_elements(&self, k: usize, elements: Range<usize>) -> PairChannel<'_> {
        PairChannel {
            direct: self.direct[k],
            uav_to_ris: &self.uav_to_ris[k][elements.clone()],
            ris_to_user: &self.ris_to_user[k][elements],
        }
    }

    /// Keep only pairs in `pairs`, in the given order.
    pub fn select(&self, pairs: &[usize]) -> Self {
        Self {
            direct: pairs.iter().map(|&k| self.direct[k]).collect(),
            uav_to_ris: pairs.iter().map(|&k| self.uav_to_ris[k].clone()).collect(),
            ris_to_user: pairs.iter().map(|&k| self.ris_to_user[k].clone()).collect(),
        }
    }
}

/// Draw every link for `frame`, folding the antenna gains into the direct and
/// UAV→RIS gains.
pub fn realize(geometry: &Geometry, fading: &FadingParams, frame: u64) -> Result<ChannelRealization> {
    geometry.validate()?;
    let n = geometry.num_elements();
    let key = if fading.redraw_per_frame { frame } else { 0 };
    let gain = fading.antenna_gain_linear().sqrt();
    let k = geometry.num_pairs();
    let mut direct = Vec::with_capacity(k);
    let mut g = Vec::with_capacity(k);
    let mut h = Vec::with_capacity(k);
    for pair in 0..k {
        let mut rng = rng::keyed(fading.seed, key, pair as u64, Stream::Direct);
        direct.push(gain * sample_direct(geometry, fading, pair, &mut rng)?);
        let gk = uav_ris_block(geometry, fading, pair, 0..n)?;
        g.push(gk.into_iter().map(|x| x * gain).collect());
        let mut rng = rng::keyed(fading.seed, key, pair as u64, Stream::RisUser);
        h.push(ris_user_block(geometry, fading, pair, 0..n, &mut rng)?);
    }
    ChannelRealization::new(direct, g, h)
}
