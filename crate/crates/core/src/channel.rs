//! Geometric cluster channel.
//!
//! Each gNB owns a fixed set of scatterer clusters inside its cell disc. A
//! link (gNB, UE) has one single-bounce path per scatterer, so path angles,
//! delays and gains all follow from three points. Moving the UE and
//! recomputing the paths gives channels that evolve consistently along a
//! trajectory.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ComplexMatrix, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Scatterers closer than this to a link endpoint are rejected.
pub const MIN_SEGMENT_M: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("segment distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("channel list is empty")]
    EmptyChannelList,
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    /// Bearing of `to` seen from `self`, in `[0, 2pi)` from the +x axis.
    pub fn bearing_to(self, to: Point) -> f64 {
        (to.y - self.y).atan2(to.x - self.x).rem_euclid(2.0 * PI)
    }
}

/// Uniform linear array laid along the x axis (broadside is +y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_antennas: usize,
    pub spacing_over_wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(n_antennas: usize, spacing_over_wavelength: f64) -> Result<Self, ChannelError> {
        if n_antennas == 0 || !(spacing_over_wavelength > 0.0) {
            return Err(ChannelError::InvalidParams(format!(
                "array needs >= 1 antenna and positive spacing (got {n_antennas}, {spacing_over_wavelength})"
            )));
        }
        Ok(Self { n_antennas, spacing_over_wavelength })
    }
}

/// Radio and propagation parameters. Defaults are the numerical-simulation
/// rows of the reference setup (28 GHz, 120 kHz spacing, 1024-point FFT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub carrier_hz: f64,
    pub sampling_hz: f64,
    pub total_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub n_clusters: usize,
    pub paths_per_cluster: usize,
    /// `P_0` in the per-segment amplitude factor `sqrt(P_0 / 4pi) / eta(r)`.
    pub reference_loss: f64,
    /// `eta(r) = r^(pathloss_exponent / 2)`.
    pub pathloss_exponent: f64,
    pub gnb_antennas: usize,
    pub ue_antennas: usize,
    pub antenna_spacing_over_wavelength: f64,
    /// Std-dev of scatterer positions around their cluster centre.
    pub cluster_spread_m: f64,
}

/// Calibrated so that a UE at the edge of a 40 m cell served at 30 dBm sees
/// roughly 10 dB per-antenna SNR on the beamformed channel.
pub const DEFAULT_REFERENCE_LOSS: f64 = 6.5e-5;

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            sampling_hz: 122.88e6,
            total_subcarriers: 1024,
            subcarrier_spacing_hz: 120e3,
            noise_density_dbm_hz: -174.0,
            n_clusters: 4,
            paths_per_cluster: 5,
            reference_loss: DEFAULT_REFERENCE_LOSS,
            pathloss_exponent: 2.0,
            gnb_antennas: 8,
            ue_antennas: 4,
            antenna_spacing_over_wavelength: 0.5,
            cluster_spread_m: 5.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("sampling_hz", self.sampling_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("reference_loss", self.reference_loss),
            ("antenna_spacing_over_wavelength", self.antenna_spacing_over_wavelength),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ChannelError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.total_subcarriers == 0 || self.n_clusters == 0 || self.paths_per_cluster == 0 {
            return Err(ChannelError::InvalidParams(
                "total_subcarriers, n_clusters and paths_per_cluster must be >= 1".into(),
            ));
        }
        if self.gnb_antennas == 0 || self.ue_antennas == 0 {
            return Err(ChannelError::InvalidParams("antenna counts must be >= 1".into()));
        }
        if !(self.cluster_spread_m >= 0.0) || !self.pathloss_exponent.is_finite() || !self.noise_density_dbm_hz.is_finite() {
            return Err(ChannelError::InvalidParams("cluster spread, pathloss exponent and noise density must be finite".into()));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Per-subcarrier noise power `N_0 * W`, in mW.
    pub fn noise_variance_mw(&self) -> f64 {
        dbm_to_mw(self.noise_density_dbm_hz) * self.subcarrier_spacing_hz
    }

    pub fn tx_array(&self) -> ArrayGeometry {
        ArrayGeometry { n_antennas: self.gnb_antennas, spacing_over_wavelength: self.antenna_spacing_over_wavelength }
    }

    pub fn rx_array(&self) -> ArrayGeometry {
        ArrayGeometry { n_antennas: self.ue_antennas, spacing_over_wavelength: self.antenna_spacing_over_wavelength }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub cluster: usize,
    pub gain: C64,
    pub delay_s: f64,
    pub aoa_rad: f64,
    pub aod_rad: f64,
    pub segment_distances_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub tx_position_m: Point,
    pub rx_position_m: Point,
    pub scatterer_positions_m: Vec<Vec<Point>>,
    pub paths: Vec<PathRecord>,
}

impl LinkGeometry {
    /// Builds a link and derives its paths from the point geometry.
    pub fn new(
        tx: Point,
        rx: Point,
        scatterers: Vec<Vec<Point>>,
        params: &ChannelParams,
    ) -> Result<Self, ChannelError> {
        let mut link = Self { tx_position_m: tx, rx_position_m: rx, scatterer_positions_m: scatterers, paths: Vec::new() };
        link.recompute_paths(params)?;
        Ok(link)
    }

    pub fn recompute_paths(&mut self, params: &ChannelParams) -> Result<(), ChannelError> {
        let (tx, rx) = (self.tx_position_m, self.rx_position_m);
        let mut paths = Vec::with_capacity(self.scatterer_positions_m.iter().map(Vec::len).sum());
        for (cluster, points) in self.scatterer_positions_m.iter().enumerate() {
            for &s in points {
                let d1 = tx.distance(s);
                let d2 = s.distance(rx);
                if d1 < MIN_SEGMENT_M || d2 < MIN_SEGMENT_M {
                    return Err(ChannelError::DegenerateGeometry(format!(
                        "scatterer ({:.3}, {:.3}) within {MIN_SEGMENT_M} m of an endpoint",
                        s.x, s.y
                    )));
                }
                let segments = vec![d1, d2];
                let gain = path_gain(params, &segments)?;
                paths.push(PathRecord {
                    cluster,
                    gain: C64::new(gain, 0.0),
                    delay_s: (d1 + d2) / SPEED_OF_LIGHT,
                    aoa_rad: rx.bearing_to(s),
                    aod_rad: tx.bearing_to(s),
                    segment_distances_m: segments,
                });
            }
        }
        self.paths = paths;
        Ok(())
    }
}

/// `a(theta)[k] = exp(j 2pi (d/lambda) k cos(theta))`.
pub fn steering_vector(geom: ArrayGeometry, angle_rad: f64) -> Vec<C64> {
    let step = 2.0 * PI * geom.spacing_over_wavelength * angle_rad.cos();
    (0..geom.n_antennas).map(|k| C64::from_polar(1.0, step * k as f64)).collect()
}

/// Amplitude of a multi-segment path: product over segments of
/// `sqrt(P_0 / 4pi) / r^(gamma / 2)`.
pub fn path_gain(params: &ChannelParams, segment_distances_m: &[f64]) -> Result<f64, ChannelError> {
    let per_segment = (params.reference_loss / (4.0 * PI)).sqrt();
    let half_exp = params.pathloss_exponent / 2.0;
    segment_distances_m.iter().try_fold(1.0, |acc, &r| {
        if !(r > 0.0) {
            return Err(ChannelError::NonPositiveDistance(r));
        }
        Ok(acc * per_segment / r.powf(half_exp))
    })
}

/// Where the gNBs and UEs of one drop sit. UE `k` is served by gNB `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLayout {
    pub cell_radius_m: f64,
    pub gnb_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
}

/// Scatterers of every gNB plus the links from every gNB to every UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropGeometry {
    /// `scatterers[gnb][cluster][path]`.
    pub scatterers: Vec<Vec<Vec<Point>>>,
    /// `links[gnb][ue]`.
    pub links: Vec<Vec<LinkGeometry>>,
}

/// Places `n_clusters` cluster centres uniformly in each gNB's cell disc and
/// scatters `paths_per_cluster` points around each with a Gaussian spread.
pub fn generate_drop_geometry<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &CellLayout,
    params: &ChannelParams,
) -> Result<DropGeometry, ChannelError> {
    params.validate()?;
    if !(layout.cell_radius_m > 0.0) {
        return Err(ChannelError::InvalidParams(format!("cell radius must be positive, got {}", layout.cell_radius_m)));
    }
    if layout.gnb_positions.is_empty() {
        return Err(ChannelError::InvalidParams("at least one gNB is required".into()));
    }
    let spread = Normal::new(0.0, params.cluster_spread_m)
        .map_err(|e| ChannelError::InvalidParams(e.to_string()))?;
    let mut scatterers = Vec::with_capacity(layout.gnb_positions.len());
    for &gnb in &layout.gnb_positions {
        let mut clusters = Vec::with_capacity(params.n_clusters);
        for _ in 0..params.n_clusters {
            let r = layout.cell_radius_m * rng.gen::<f64>().sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            let centre = gnb.offset(r * phi.cos(), r * phi.sin());
            let points = (0..params.paths_per_cluster)
                .map(|_| centre.offset(spread.sample(rng), spread.sample(rng)))
                .collect();
            clusters.push(points);
        }
        scatterers.push(clusters);
    }
    let mut links = Vec::with_capacity(layout.gnb_positions.len());
    for (g, &gnb) in layout.gnb_positions.iter().enumerate() {
        let row = layout
            .ue_positions
            .iter()
            .map(|&ue| LinkGeometry::new(gnb, ue, scatterers[g].clone(), params))
            .collect::<Result<Vec<_>, _>>()?;
        links.push(row);
    }
    Ok(DropGeometry { scatterers, links })
}

/// Precomputed per-path terms so that many subcarriers can be evaluated cheaply.
struct PathTerms {
    outer: ComplexMatrix,
    base: C64,
    delay_s: f64,
}

fn path_terms(link: &LinkGeometry, rx: ArrayGeometry, tx: ArrayGeometry, params: &ChannelParams) -> Vec<PathTerms> {
    link.paths
        .iter()
        .map(|p| {
            let a_rx = steering_vector(rx, p.aoa_rad);
            let a_tx = steering_vector(tx, p.aod_rad);
            let carrier = C64::from_polar(1.0, -2.0 * PI * (params.carrier_hz * p.delay_s).fract());
            PathTerms { outer: ComplexMatrix::outer(&a_rx, &a_tx), base: p.gain * carrier, delay_s: p.delay_s }
        })
        .collect()
}

fn subcarrier_phase(params: &ChannelParams, m: usize, delay_s: f64) -> C64 {
    let cycles = params.sampling_hz * (m as f64 / params.total_subcarriers as f64) * delay_s;
    C64::from_polar(1.0, -2.0 * PI * cycles.fract())
}

/// `H_m = sum_p alpha_p e^{-j2pi f_c tau_p} e^{-j2pi f_s (m/K) tau_p} a_rx(theta_p) a_tx(phi_p)^H`.
pub fn subcarrier_channel(
    link: &LinkGeometry,
    rx: ArrayGeometry,
    tx: ArrayGeometry,
    m: usize,
    params: &ChannelParams,
) -> ComplexMatrix {
    subcarrier_channels(link, rx, tx, &[m], params).pop().expect("one subcarrier requested")
}

/// [`subcarrier_channel`] for several subcarriers at once.
pub fn subcarrier_channels(
    link: &LinkGeometry,
    rx: ArrayGeometry,
    tx: ArrayGeometry,
    subcarriers: &[usize],
    params: &ChannelParams,
) -> Vec<ComplexMatrix> {
    let terms = path_terms(link, rx, tx, params);
    subcarriers
        .iter()
        .map(|&m| {
            let mut h = ComplexMatrix::zeros(rx.n_antennas, tx.n_antennas);
            for t in &terms {
                let coeff = t.base * subcarrier_phase(params, m, t.delay_s);
                for i in 0..rx.n_antennas {
                    for j in 0..tx.n_antennas {
                        h[(i, j)] += coeff * t.outer[(i, j)];
                    }
                }
            }
            h
        })
        .collect()
}

/// Translates the UE and recomputes every path. Scatterers and gNB stay put.
pub fn advance_ue(link: &LinkGeometry, displacement_m: (f64, f64), params: &ChannelParams) -> Result<LinkGeometry, ChannelError> {
    let mut moved = link.clone();
    moved.rx_position_m = link.rx_position_m.offset(displacement_m.0, displacement_m.1);
    moved.recompute_paths(params)?;
    Ok(moved)
}

/// `P_tx + 10 log10( mean_m ||H_m f||^2 / N_r )`.
pub fn rsrp_dbm(channels: &[ComplexMatrix], precoder: &[C64], tx_power_dbm: f64) -> Result<f64, ChannelError> {
    if channels.is_empty() {
        return Err(ChannelError::EmptyChannelList);
    }
    let n_r = channels[0].rows() as f64;
    let mean_gain = channels
        .iter()
        .map(|h| h.mul_vec(precoder).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        / channels.len() as f64;
    Ok(tx_power_dbm + 10.0 * (mean_gain / n_r).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;

    fn unit_params() -> ChannelParams {
        ChannelParams { reference_loss: 4.0 * PI, pathloss_exponent: 2.0, ..ChannelParams::default() }
    }

    #[test]
    fn steering_vector_cases() {
        let one = steering_vector(ArrayGeometry::new(1, 0.5).unwrap(), 1.234);
        assert_eq!(one, vec![C64::new(1.0, 0.0)]);
        let broadside = steering_vector(ArrayGeometry::new(4, 0.5).unwrap(), PI / 2.0);
        for z in broadside {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let endfire = steering_vector(ArrayGeometry::new(2, 0.5).unwrap(), 0.0);
        assert!((endfire[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn steering_vector_norm_is_antenna_count() {
        let g = ArrayGeometry::new(8, 0.5).unwrap();
        for k in 0..50 {
            let a = steering_vector(g, k as f64 * 0.13);
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
            let n2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
            assert!((n2 - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn path_gain_cases() {
        let p = unit_params();
        assert!((path_gain(&p, &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((path_gain(&p, &[2.0]).unwrap() - 0.5).abs() < 1e-15);
        // (1/2) * (1/5)
        assert!((path_gain(&p, &[2.0, 5.0]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(path_gain(&p, &[1.0, 0.0]), Err(ChannelError::NonPositiveDistance(0.0)));
        assert!(path_gain(&p, &[3.0]).unwrap() < path_gain(&p, &[2.5]).unwrap());
    }

    fn layout() -> CellLayout {
        CellLayout {
            cell_radius_m: 40.0,
            gnb_positions: vec![Point::new(0.0, 0.0), Point::new(80.0, 0.0)],
            ue_positions: vec![Point::new(30.0, 0.0), Point::new(30.0, 5.0)],
        }
    }

    #[test]
    fn drop_geometry_shape_and_determinism() {
        let params = ChannelParams::default();
        let a = generate_drop_geometry(&mut rng_from_seed(9), &layout(), &params).unwrap();
        let b = generate_drop_geometry(&mut rng_from_seed(9), &layout(), &params).unwrap();
        assert_eq!(a, b);
        for row in &a.links {
            for link in row {
                assert_eq!(link.paths.len(), 20);
            }
        }
    }

    #[test]
    fn delays_respect_line_of_sight() {
        let params = ChannelParams::default();
        for seed in 0..30 {
            let g = generate_drop_geometry(&mut rng_from_seed(seed), &layout(), &params).unwrap();
            for row in &g.links {
                for link in row {
                    let los = link.tx_position_m.distance(link.rx_position_m) / SPEED_OF_LIGHT;
                    for p in &link.paths {
                        assert!(p.delay_s > 0.0 && p.delay_s >= los - 1e-18);
                        assert!((0.0..2.0 * PI).contains(&p.aoa_rad) && (0.0..2.0 * PI).contains(&p.aod_rad));
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_scatterer_is_rejected() {
        let params = ChannelParams::default();
        let tx = Point::new(0.0, 0.0);
        let err = LinkGeometry::new(tx, Point::new(5.0, 0.0), vec![vec![tx]], &params).unwrap_err();
        assert!(matches!(err, ChannelError::DegenerateGeometry(_)));
    }

    fn single_path_link(gain: f64, delay_s: f64, aoa: f64, aod: f64) -> LinkGeometry {
        LinkGeometry {
            tx_position_m: Point::new(0.0, 0.0),
            rx_position_m: Point::new(1.0, 0.0),
            scatterer_positions_m: vec![],
            paths: vec![PathRecord {
                cluster: 0,
                gain: C64::new(gain, 0.0),
                delay_s,
                aoa_rad: aoa,
                aod_rad: aod,
                segment_distances_m: vec![1.0],
            }],
        }
    }

    #[test]
    fn single_path_zero_delay_is_outer_product() {
        let params = ChannelParams::default();
        let (rx, tx) = (params.rx_array(), params.tx_array());
        let link = single_path_link(1.0, 0.0, 0.7, 2.1);
        let h = subcarrier_channel(&link, rx, tx, 0, &params);
        let expect = ComplexMatrix::outer(&steering_vector(rx, 0.7), &steering_vector(tx, 2.1));
        assert!((&h - &expect).frobenius_norm() < 1e-14);
    }

    #[test]
    fn channel_is_linear_in_paths() {
        let params = ChannelParams::default();
        let (rx, tx) = (params.rx_array(), params.tx_array());
        let a = single_path_link(0.3, 1.3e-7, 0.2, 1.0);
        let b = single_path_link(0.7, 2.9e-7, 2.5, 4.0);
        let mut both = a.clone();
        both.paths.extend(b.paths.clone());
        for m in [0, 17, 239] {
            let sum = &subcarrier_channel(&a, rx, tx, m, &params) + &subcarrier_channel(&b, rx, tx, m, &params);
            assert!((&subcarrier_channel(&both, rx, tx, m, &params) - &sum).frobenius_norm() < 1e-13);
        }
    }

    #[test]
    fn zero_displacement_keeps_paths_and_round_trip_restores() {
        let params = ChannelParams::default();
        let g = generate_drop_geometry(&mut rng_from_seed(2), &layout(), &params).unwrap();
        let link = &g.links[0][0];
        assert_eq!(&advance_ue(link, (0.0, 0.0), &params).unwrap(), link);
        let back = advance_ue(&advance_ue(link, (0.37, -1.2), &params).unwrap(), (-0.37, 1.2), &params).unwrap();
        for (p, q) in link.paths.iter().zip(&back.paths) {
            assert!((p.delay_s - q.delay_s).abs() < 1e-12);
            assert!((p.gain - q.gain).norm() < 1e-12 * p.gain.norm().max(1e-300));
            assert!((p.aoa_rad - q.aoa_rad).abs() < 1e-9);
        }
    }

    #[test]
    fn small_step_bounds_delay_change() {
        let params = ChannelParams::default();
        for seed in 0..20 {
            let g = generate_drop_geometry(&mut rng_from_seed(seed), &layout(), &params).unwrap();
            let link = &g.links[0][0];
            let moved = advance_ue(link, (0.1, 0.0), &params).unwrap();
            for (p, q) in link.paths.iter().zip(&moved.paths) {
                assert!((p.delay_s - q.delay_s).abs() <= 0.1 / SPEED_OF_LIGHT + 1e-18);
            }
        }
    }

    #[test]
    fn rsrp_cases() {
        let h = vec![ComplexMatrix::identity(4)];
        let mut f = vec![C64::new(0.0, 0.0); 4];
        f[0] = C64::new(1.0, 0.0);
        let r = rsrp_dbm(&h, &f, 30.0).unwrap();
        assert!((r - (30.0 + 10.0 * (0.25f64).log10())).abs() < 1e-12);
        let h10: Vec<_> = h.iter().map(|m| m.scale(10.0)).collect();
        assert!((rsrp_dbm(&h10, &f, 30.0).unwrap() - r - 20.0).abs() < 1e-12);
        assert_eq!(rsrp_dbm(&[], &f, 30.0), Err(ChannelError::EmptyChannelList));
    }

    #[test]
    fn noise_variance_matches_density_times_bandwidth() {
        let p = ChannelParams::default();
        let dbm = mw_to_dbm(p.noise_variance_mw());
        assert!((dbm - (-174.0 + 10.0 * 120e3f64.log10())).abs() < 1e-9);
    }
}
