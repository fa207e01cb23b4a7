//! Scenario files: a TOML superset of the simulation parameter table, resolved into
//! the concrete geometry / radio / power structs the rest of the crate consumes.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{dbm_to_watts, FadingParams, Geometry, Point, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::mtl::TrainConfig;
use crate::optimizer::{PhaseMode, SolverConfig};
use crate::protocol::{MobilityConfig, ProtocolConfig, SolverChoice};
use crate::rng::{self, Stream};
use crate::system::{PowerConfig, RadioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub seed: u64,
    pub geometry: GeometrySection,
    pub radio: RadioSection,
    pub power: PowerSection,
    pub protocol: ProtocolConfig,
    pub mobility: MobilityConfig,
    pub fading: FadingParams,
    pub optimizer: OptimizerSection,
    pub mtl: TrainConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            geometry: GeometrySection::default(),
            radio: RadioSection::default(),
            power: PowerSection::default(),
            protocol: ProtocolConfig::default(),
            mobility: MobilityConfig::default(),
            fading: FadingParams::default(),
            optimizer: OptimizerSection::default(),
            mtl: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub num_pairs: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub element_spacing_wavelengths: f64,
    pub ris_position: Point,
    pub ris_normal_azimuth_deg: f64,
    /// Explicit positions for the first pairs; the remaining pairs are placed at random.
    pub uav_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub placement: PlacementBox,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            num_pairs: 8,
            ris_rows: 16,
            ris_cols: 32,
            element_spacing_wavelengths: 0.5,
            ris_position: [100.0, 75.0, 120.0],
            ris_normal_azimuth_deg: 180.0,
            uav_positions: vec![[20.0, 80.0, 280.0]],
            user_positions: vec![[10.0, 30.0, 1.0]],
            placement: PlacementBox::default(),
        }
    }
}

/// Bounds for randomly placed pairs. Each entry is `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub uav_altitude: [f64; 2],
    pub user_altitude: [f64; 2],
}

impl Default for PlacementBox {
    fn default() -> Self {
        Self {
            x: [0.0, 100.0],
            y: [0.0, 100.0],
            uav_altitude: [250.0, 300.0],
            user_altitude: [0.0, 1.0],
        }
    }
}

impl PlacementBox {
    fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("x", self.x),
            ("y", self.y),
            ("uav_altitude", self.uav_altitude),
            ("user_altitude", self.user_altitude),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::config(
                    format!("geometry.placement.{name}"),
                    format!("range [{}, {}] must be finite with min <= max", r[0], r[1]),
                ));
            }
        }
        Ok(())
    }

    /// UAV and user position for one pair, drawn from a keyed stream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Point, Point) {
        let mut draw = |r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.gen_range(r[0]..r[1]) };
        let uav = [draw(self.x), draw(self.y), draw(self.uav_altitude)];
        let user = [draw(self.x), draw(self.y), draw(self.user_altitude)];
        (uav, user)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    /// Defaults to the number of pairs.
    pub num_subcarriers: Option<usize>,
    pub bandwidth_mhz: f64,
    pub carrier_ghz: f64,
    pub omega: [f64; 2],
    pub tx_power_mw: f64,
    pub noise_dbm: f64,
    /// Defaults to `min(K, N)`.
    pub max_groups: Option<usize>,
    pub noise_scales_with_bandwidth: bool,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            num_subcarriers: None,
            bandwidth_mhz: 10.0,
            carrier_ghz: 5.0,
            omega: [0.6, 0.4],
            tx_power_mw: 10.0,
            noise_dbm: -94.0,
            max_groups: None,
            noise_scales_with_bandwidth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub amp_inv_efficiency: f64,
    pub uav_static_w: f64,
    pub user_static_ris_w: f64,
    pub user_static_direct_w: f64,
    pub ris_per_element_w: f64,
    pub max_total_w: f64,
}

impl Default for PowerSection {
    fn default() -> Self {
        let p = PowerConfig::for_elements(1);
        Self {
            amp_inv_efficiency: p.amp_inv_efficiency,
            uav_static_w: p.uav_static_w,
            user_static_ris_w: p.user_static_ris_w,
            user_static_direct_w: p.user_static_direct_w,
            ris_per_element_w: p.ris_total_w,
            max_total_w: p.max_total_w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub solver: SolverChoice,
    pub phase_mode: PhaseMode,
    pub parallel: bool,
    pub tie_quantum_bps: f64,
    pub alternating_max_iter: usize,
    pub alternating_tol: f64,
    /// Replace MTL-predicted phases with the closed form for the predicted allocation.
    pub mtl_closed_form_phases: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            solver: SolverChoice::Exhaustive,
            phase_mode: PhaseMode::PerElement,
            parallel: false,
            tie_quantum_bps: 1e-3,
            alternating_max_iter: 50,
            alternating_tol: 1e-9,
            mtl_closed_form_phases: false,
        }
    }
}

impl OptimizerSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            phase_mode: self.phase_mode,
            parallel: self.parallel,
            tie_quantum_bps: self.tie_quantum_bps,
        }
    }
}

/// Everything a run needs, with defaults applied and cross-field checks done.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub geometry: Geometry,
    pub fading: FadingParams,
    pub radio: RadioConfig,
    pub power: PowerConfig,
    pub protocol: ProtocolConfig,
    pub mobility: MobilityConfig,
    pub optimizer: OptimizerSection,
    pub mtl: TrainConfig,
    pub placement: PlacementBox,
    pub config_hash: String,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().to_string();
            Error::config(if path == "." { String::new() } else { path }, message)
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 over the canonical TOML dump, hex encoded.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let g = &self.geometry;
        let k = g.num_pairs;
        if k == 0 {
            return Err(Error::config("geometry.num_pairs", "must be >= 1"));
        }
        if g.uav_positions.len() != g.user_positions.len() {
            return Err(Error::config(
                "geometry.user_positions",
                format!(
                    "{} UAV positions but {} user positions",
                    g.uav_positions.len(),
                    g.user_positions.len()
                ),
            ));
        }
        if g.uav_positions.len() > k {
            return Err(Error::config(
                "geometry.uav_positions",
                format!("{} explicit positions for {k} pairs", g.uav_positions.len()),
            ));
        }
        g.placement.validate()?;
        if !(g.element_spacing_wavelengths > 0.0 && g.element_spacing_wavelengths.is_finite()) {
            return Err(Error::config("geometry.element_spacing_wavelengths", "must be positive"));
        }
        let r = &self.radio;
        if !(r.carrier_ghz > 0.0 && r.carrier_ghz.is_finite()) {
            return Err(Error::config("radio.carrier_ghz", "must be positive"));
        }
        let carrier_freq_hz = r.carrier_ghz * 1e9;
        let wavelength = SPEED_OF_LIGHT / carrier_freq_hz;

        let mut uav_positions = g.uav_positions.clone();
        let mut user_positions = g.user_positions.clone();
        for pair in uav_positions.len()..k {
            let mut rng = rng::keyed(self.seed, 0, pair as u64, Stream::Placement);
            let (uav, user) = g.placement.sample(&mut rng);
            uav_positions.push(uav);
            user_positions.push(user);
        }
        let geometry = Geometry {
            uav_positions,
            user_positions,
            ris_position: g.ris_position,
            ris_rows: g.ris_rows,
            ris_cols: g.ris_cols,
            element_spacing: g.element_spacing_wavelengths * wavelength,
            carrier_freq_hz,
            ris_normal_azimuth: g.ris_normal_azimuth_deg * PI / 180.0,
        };
        geometry.validate()?;
        let n = geometry.num_elements();

        let mut fading = self.fading.clone();
        fading.seed = self.seed;
        fading.validate()?;

        let radio = RadioConfig {
            num_pairs: k,
            num_elements: n,
            num_subcarriers: r.num_subcarriers.unwrap_or(k),
            bandwidth_hz: r.bandwidth_mhz * 1e6,
            omega1: r.omega[0],
            omega2: r.omega[1],
            tx_power_w: r.tx_power_mw * 1e-3,
            noise_power_w: dbm_to_watts(r.noise_dbm),
            max_groups: r.max_groups.unwrap_or(k.min(n)),
            noise_scales_with_bandwidth: r.noise_scales_with_bandwidth,
        };
        radio.validate().map_err(|e| prefix(e, "radio"))?;

        let p = &self.power;
        let power = PowerConfig {
            amp_inv_efficiency: p.amp_inv_efficiency,
            uav_static_w: p.uav_static_w,
            user_static_ris_w: p.user_static_ris_w,
            user_static_direct_w: p.user_static_direct_w,
            ris_total_w: p.ris_per_element_w * n as f64,
            max_total_w: p.max_total_w,
        };
        power.validate().map_err(|e| prefix(e, "power"))?;
        self.protocol.validate()?;
        self.mobility.validate()?;
        self.mtl.validate()?;
        let o = &self.optimizer;
        if !(o.tie_quantum_bps > 0.0 && o.tie_quantum_bps.is_finite()) {
            return Err(Error::config("optimizer.tie_quantum_bps", "must be positive"));
        }
        if o.alternating_max_iter == 0 {
            return Err(Error::config("optimizer.alternating_max_iter", "must be >= 1"));
        }
        if !(o.alternating_tol >= 0.0) {
            return Err(Error::config("optimizer.alternating_tol", "must be >= 0"));
        }

        Ok(Resolved {
            seed: self.seed,
            geometry,
            fading,
            radio,
            power,
            protocol: self.protocol.clone(),
            mobility: self.mobility.clone(),
            optimizer: self.optimizer.clone(),
            mtl: self.mtl.clone(),
            placement: g.placement.clone(),
            config_hash: self.config_hash(),
        })
    }
}

fn prefix(e: Error, section: &str) -> Error {
    match e {
        Error::Config { path, message } if !path.starts_with(section) => {
            Error::config(format!("{section}.{path}"), message)
        }
        Error::Domain(message) => Error::config(section, message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_parameter_table() {
        let r = Scenario::default().resolve().unwrap();
        assert_eq!(r.radio.num_pairs, 8);
        assert_eq!(r.radio.num_elements, 512);
        assert_eq!(r.radio.num_subcarriers, 8);
        assert_eq!(r.radio.bandwidth_hz, 10e6);
        assert_eq!(r.radio.tx_power_w, 0.01);
        assert!((r.radio.noise_power_w - 10f64.powf(-12.4)).abs() < 1e-25);
        assert_eq!((r.radio.omega1, r.radio.omega2), (0.6, 0.4));
        assert_eq!((r.mtl.xi_c, r.mtl.xi_r), (0.5, 0.5));
        assert_eq!(r.protocol.frame_duration_s, 1e-3);
        assert_eq!(r.geometry.ris_position, [100.0, 75.0, 120.0]);
        assert_eq!(r.geometry.uav_positions[0], [20.0, 80.0, 280.0]);
        assert_eq!(r.geometry.user_positions[0], [10.0, 30.0, 1.0]);
        assert_eq!(r.geometry.carrier_freq_hz, 5e9);
    }

    #[test]
    fn random_placement_is_seeded_and_in_bounds() {
        let s = Scenario::default();
        let a = s.resolve().unwrap();
        assert_eq!(a.geometry, s.resolve().unwrap().geometry);
        for (u, v) in a.geometry.uav_positions[1..].iter().zip(&a.geometry.user_positions[1..]) {
            assert!((0.0..=100.0).contains(&u[0]) && (250.0..=300.0).contains(&u[2]));
            assert!((0.0..=100.0).contains(&v[1]) && (0.0..=1.0).contains(&v[2]));
        }
        let other = Scenario { seed: 2, ..Scenario::default() }.resolve().unwrap();
        assert_ne!(a.geometry.uav_positions[1], other.geometry.uav_positions[1]);
        assert_eq!(a.geometry.uav_positions[0], other.geometry.uav_positions[0]);
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = Scenario::from_toml_str("[radio]\nbandwith_mhz = 5\n").unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "radio.bandwith_mhz");
                assert!(message.contains("bandwith_mhz"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let err = Scenario::from_toml_str("[fading]\nrician_k = \"ten\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "fading.rician_k"), "{err:?}");
    }

    #[test]
    fn partial_files_take_defaults() {
        let s = Scenario::from_toml_str("seed = 9\n[geometry]\nnum_pairs = 4\n").unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.geometry.num_pairs, 4);
        assert_eq!(s.radio, RadioSection::default());
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let s = Scenario::default();
        let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.config_hash(), s.config_hash());
        assert_eq!(s.config_hash().len(), 64);
        let mut t = s.clone();
        t.radio.tx_power_mw = 20.0;
        assert_ne!(t.config_hash(), s.config_hash());
    }

    #[test]
    fn cross_field_errors_name_fields() {
        let mut s = Scenario::default();
        s.radio.omega = [0.7, 0.4];
        assert!(matches!(s.resolve(), Err(Error::Config { ref path, .. }) if path.starts_with("radio")));
        let mut s = Scenario::default();
        s.geometry.uav_positions.push([0.0, 0.0, 100.0]);
        assert!(matches!(s.resolve(), Err(Error::Config { ref path, .. }) if path == "geometry.user_positions"));
        let mut s = Scenario::default();
        s.fading.pl_exp_direct = 1.5;
        assert!(matches!(s.resolve(), Err(Error::Config { ref path, .. }) if path == "fading.pl_exp_direct"));
    }
}
