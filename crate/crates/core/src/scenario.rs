//! The two-cell mobility experiment: crossing UE trajectories, SVD
//! beamforming, pilot-based channel estimation, labelled detector datasets,
//! CSI-IM measurement, and symbol-error evaluation under whitening policies.
//!
//! Positions and index sets are 0-based in code. Config files write index
//! sets 1-based (`"61-68,86-90"`), see [`IndexSet`].

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    dbm_to_mw, generate_drop_geometry, rsrp_dbm, subcarrier_channels, CellLayout, ChannelError, ChannelParams,
    DropGeometry, LinkGeometry, Point,
};
use crate::detector::{featurize_vectors, trigger, DetectorError, FeatureVector, Phase, SvddModel, TriggerThresholds};
use crate::metrics::{symbol_error_rate, MetricsError};
use crate::numerics::{dominant_singular_triplet, inner, ComplexMatrix, NumericsError, C64};
use crate::random::{complex_gaussian, derive_seed, rng_from_seed, stream, SimRng};
use crate::whitening::{apply_whitening, sample_covariance, whitening_filter, InterferenceNoiseSample, WhiteningError};

pub const SUBCARRIERS_PER_RB: usize = 12;
/// Neighbour gNBs sit on a ring of radius `2R`; at most this many are placed.
pub const MAX_NEIGHBORS: usize = 6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("index {index} out of range for {n} positions")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Whitening(#[from] WhiteningError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Sorted, de-duplicated 0-based position indices. Textual form is 1-based
/// comma-separated ranges, e.g. `"1-50,151-200"`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn from_zero_based(indices: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        Self(set.into_iter().collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|i| !other.contains(*i))
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }
}

impl FromStr for IndexSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad index `{t}` in `{s}`"));
            let (lo, hi) = match part.split_once('-') {
                Some((a, b)) => (parse(a)?, parse(b)?),
                None => {
                    let v = parse(part)?;
                    (v, v)
                }
            };
            if lo == 0 || hi < lo {
                return Err(format!("bad range `{part}` (indices are 1-based, low <= high)"));
            }
            out.extend(lo - 1..hi);
        }
        Ok(Self::from_zero_based(out))
    }
}

impl TryFrom<String> for IndexSet {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<IndexSet> for String {
    fn from(s: IndexSet) -> String {
        s.to_string()
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut i = 0;
        while i < self.0.len() {
            let start = self.0[i];
            let mut end = start;
            while i + 1 < self.0.len() && self.0[i + 1] == end + 1 {
                i += 1;
                end += 1;
            }
            if !first {
                f.write_str(",")?;
            }
            first = false;
            if start == end {
                write!(f, "{}", start + 1)?;
            } else {
                write!(f, "{}-{}", start + 1, end + 1)?;
            }
            i += 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub cell_radius_m: f64,
    pub n_neighbors: usize,
    pub tx_power_serving_dbm: f64,
    pub tx_power_interferer_dbm: f64,
    /// Informational: positions are sampled every `step_m` with block fading.
    pub ue_speed_mps: f64,
    pub step_m: f64,
    pub n_positions: usize,
    /// Distance from the cell border, inside the serving cell, at which the UEs cross.
    pub meeting_offset_m: f64,
    pub rb_count: usize,
    pub n_f_per_rb: usize,
    /// Pilot OFDM symbols per position; estimates average over them.
    pub n_pilot_symbols: usize,
    pub symbols_per_position: usize,
    pub train_indices: IndexSet,
    pub test_indices: IndexSet,
    pub interfered_indices: IndexSet,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cell_radius_m: 40.0,
            n_neighbors: 1,
            tx_power_serving_dbm: 30.0,
            tx_power_interferer_dbm: 30.0,
            ue_speed_mps: 3.0,
            step_m: 0.1,
            n_positions: 200,
            meeting_offset_m: 0.0,
            rb_count: 20,
            n_f_per_rb: 12,
            n_pilot_symbols: 2,
            symbols_per_position: 10_000,
            train_indices: "1-50,151-200".parse().expect("static"),
            test_indices: "51-150".parse().expect("static"),
            interfered_indices: "61-68,86-90,121-123".parse().expect("static"),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, params: &ChannelParams) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        if !(self.cell_radius_m > 0.0 && self.cell_radius_m.is_finite()) {
            return bad(format!("cell_radius_m must be positive, got {}", self.cell_radius_m));
        }
        if !(self.meeting_offset_m >= 0.0 && self.meeting_offset_m < self.cell_radius_m) {
            return bad(format!("meeting_offset_m must lie in [0, cell_radius_m), got {}", self.meeting_offset_m));
        }
        if self.n_neighbors == 0 || self.n_neighbors > MAX_NEIGHBORS {
            return bad(format!("n_neighbors must be in 1..={MAX_NEIGHBORS}, got {}", self.n_neighbors));
        }
        if !(self.step_m > 0.0) || self.n_positions == 0 {
            return bad("step_m must be positive and n_positions at least 1".into());
        }
        if self.tx_power_serving_dbm.is_nan() || self.tx_power_interferer_dbm.is_nan() {
            return bad("transmit powers must not be NaN".into());
        }
        if self.rb_count == 0 || self.rb_count * SUBCARRIERS_PER_RB > params.total_subcarriers {
            return bad(format!("rb_count {} does not fit {} subcarriers", self.rb_count, params.total_subcarriers));
        }
        if self.n_f_per_rb == 0 || !SUBCARRIERS_PER_RB.is_multiple_of(self.n_f_per_rb) {
            return bad(format!("n_f_per_rb must divide {SUBCARRIERS_PER_RB}, got {}", self.n_f_per_rb));
        }
        if self.n_pilot_symbols < 2 {
            return bad("n_pilot_symbols must be at least 2 so residuals carry interference-plus-noise".into());
        }
        for (name, set) in [("train", &self.train_indices), ("test", &self.test_indices), ("interfered", &self.interfered_indices)] {
            if let Some(&i) = set.as_slice().last() {
                if i >= self.n_positions {
                    return bad(format!("{name}_indices contains {} beyond {} positions", i + 1, self.n_positions));
                }
            }
        }
        if !self.train_indices.is_disjoint(&self.test_indices) {
            return bad("train_indices and test_indices overlap".into());
        }
        if !self.interfered_indices.is_subset(&self.test_indices) {
            return bad("interfered_indices must be a subset of test_indices".into());
        }
        Ok(())
    }

    pub fn allocated_subcarriers(&self) -> usize {
        self.rb_count * SUBCARRIERS_PER_RB
    }

    /// Pilot REs: every `12 / n_f_per_rb`-th RE of every RB, starting at RE 0.
    pub fn pilot_subcarriers(&self) -> Vec<usize> {
        let spacing = SUBCARRIERS_PER_RB / self.n_f_per_rb;
        (0..self.rb_count).flat_map(|rb| (0..self.n_f_per_rb).map(move |j| rb * SUBCARRIERS_PER_RB + j * spacing)).collect()
    }

    pub fn serving_gnb(&self) -> Point {
        Point { x: 0.0, y: 0.0 }
    }

    /// Neighbour `k` (0-based) on a ring of radius `2R` around the serving gNB,
    /// the first one along +x.
    pub fn neighbor_gnb(&self, k: usize) -> Point {
        const ANGLES: [f64; MAX_NEIGHBORS] = [0.0, PI / 3.0, -PI / 3.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0, PI];
        let r = 2.0 * self.cell_radius_m;
        Point { x: r * ANGLES[k].cos(), y: r * ANGLES[k].sin() }
    }

    pub fn meeting_point(&self) -> Point {
        Point { x: self.cell_radius_m - self.meeting_offset_m, y: 0.0 }
    }

    /// Signed travel of both UEs relative to the meeting point at `position`.
    fn travel(&self, position: usize) -> f64 {
        (position as f64 + 0.5) * self.step_m - 0.5 * self.n_positions as f64 * self.step_m
    }

    /// UE 1 moves along +x through the meeting point.
    pub fn ue1_position(&self, position: usize) -> Point {
        self.meeting_point().offset(self.travel(position), 0.0)
    }

    /// UE 2 (served by the first neighbour) moves along +y through the meeting point.
    pub fn ue2_position(&self, position: usize) -> Point {
        self.meeting_point().offset(0.0, self.travel(position))
    }

    /// Static UE of neighbour `k >= 1`, halfway between that gNB and its cell border
    /// facing the serving cell.
    fn extra_ue_position(&self, k: usize) -> Point {
        let g = self.neighbor_gnb(k);
        let d = g.distance(self.serving_gnb());
        let f = 0.5 * self.cell_radius_m / d;
        g.offset(-g.x * f, -g.y * f)
    }

    fn neighbor_ue_position(&self, k: usize, position: usize) -> Point {
        if k == 0 {
            self.ue2_position(position)
        } else {
            self.extra_ue_position(k)
        }
    }
}

/// What UE 1 sees at one trajectory position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionState {
    pub ue_position_m: Point,
    /// Serving precoder `f_S` (unit norm, length `M_t`).
    pub serving_precoder: Vec<C64>,
    /// `H_m f_S` per allocated subcarrier, without transmit power.
    pub serving_effective: Vec<Vec<C64>>,
    /// `G_{k,m} f_{I,k}` per neighbour and allocated subcarrier, without transmit power.
    pub interference_effective: Vec<Vec<Vec<C64>>>,
    pub rsrp_serving_dbm: f64,
    /// Strongest neighbour.
    pub rsrp_neighbor_dbm: f64,
    pub interfered: bool,
}

/// One random realisation of the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub seed: u64,
    pub geometry: DropGeometry,
    pub positions: Vec<PositionState>,
    /// Per-subcarrier noise variance `N_0 W`, mW.
    pub noise_variance_mw: f64,
}

impl Drop {
    pub fn n_receive_antennas(&self) -> usize {
        self.positions.first().and_then(|p| p.serving_effective.first()).map_or(0, Vec::len)
    }

    pub fn interfered_count(&self) -> usize {
        self.positions.iter().filter(|p| p.interfered).count()
    }

    /// JSON with positions, scatterers and per-position effective channels.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("drop serialises")
    }
}

/// Dominant right singular vector of `(1/N_f) sum_m H_m^H H_m`, phase-fixed
/// so that its largest entry is real and positive.
pub fn svd_precoder(channels: &[ComplexMatrix]) -> Result<Vec<C64>, ScenarioError> {
    let first = channels.first().ok_or_else(|| ScenarioError::InvalidConfig("no channels to precode".into()))?;
    let n = first.cols();
    let mut acc = ComplexMatrix::zeros(n, n);
    for h in channels {
        if h.cols() != n {
            return Err(ScenarioError::Numerics(NumericsError::DimensionMismatch(format!(
                "channel with {} columns, expected {n}",
                h.cols()
            ))));
        }
        acc = &acc + &h.gram();
    }
    let acc = acc.scale(1.0 / channels.len() as f64);
    let mut f = dominant_singular_triplet(&acc)?.right;
    let norm = crate::numerics::vec_norm(&f);
    let pivot = f.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).expect("non-empty");
    let rot = pivot.conj() / pivot.norm() / norm;
    for z in f.iter_mut() {
        *z *= rot;
    }
    Ok(f)
}

fn link_channels(
    gnb: Point,
    ue: Point,
    scatterers: &[Vec<Point>],
    subcarriers: &[usize],
    params: &ChannelParams,
) -> Result<Vec<ComplexMatrix>, ScenarioError> {
    let link = LinkGeometry::new(gnb, ue, scatterers.to_vec(), params)?;
    Ok(subcarrier_channels(&link, params.rx_array(), params.tx_array(), subcarriers, params))
}

fn effective(channels: &[ComplexMatrix], f: &[C64]) -> Vec<Vec<C64>> {
    channels.iter().map(|h| h.mul_vec(f)).collect()
}

fn build_position(
    cfg: &ScenarioConfig,
    params: &ChannelParams,
    geometry: &DropGeometry,
    position: usize,
) -> Result<PositionState, ScenarioError> {
    let subcarriers: Vec<usize> = (0..cfg.allocated_subcarriers()).collect();
    let ue1 = cfg.ue1_position(position);
    let serving = link_channels(cfg.serving_gnb(), ue1, &geometry.scatterers[0], &subcarriers, params)?;
    let f_s = svd_precoder(&serving)?;
    let rsrp_serving_dbm = rsrp_dbm(&serving, &f_s, cfg.tx_power_serving_dbm)?;
    let mut interference_effective = Vec::with_capacity(cfg.n_neighbors);
    let mut rsrp_neighbor_dbm = f64::NEG_INFINITY;
    for k in 0..cfg.n_neighbors {
        let gnb = cfg.neighbor_gnb(k);
        let scat = &geometry.scatterers[k + 1];
        let own = link_channels(gnb, cfg.neighbor_ue_position(k, position), scat, &subcarriers, params)?;
        let f_i = svd_precoder(&own)?;
        let cross = link_channels(gnb, ue1, scat, &subcarriers, params)?;
        rsrp_neighbor_dbm = rsrp_neighbor_dbm.max(rsrp_dbm(&cross, &f_i, cfg.tx_power_interferer_dbm)?);
        interference_effective.push(effective(&cross, &f_i));
    }
    Ok(PositionState {
        ue_position_m: ue1,
        serving_effective: effective(&serving, &f_s),
        serving_precoder: f_s,
        interference_effective,
        rsrp_serving_dbm,
        rsrp_neighbor_dbm,
        interfered: cfg.interfered_indices.contains(position),
    })
}

/// Draws scatterers for every gNB, then evaluates every position of the
/// trajectories. Positions are computed in parallel; the result does not
/// depend on the thread count.
pub fn build_drop<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ScenarioConfig,
    params: &ChannelParams,
) -> Result<Drop, ScenarioError> {
    use rayon::prelude::*;

    cfg.validate(params)?;
    let seed = rng.gen();
    let mut gnbs = vec![cfg.serving_gnb()];
    gnbs.extend((0..cfg.n_neighbors).map(|k| cfg.neighbor_gnb(k)));
    let mut ues = vec![cfg.ue1_position(0)];
    ues.extend((0..cfg.n_neighbors).map(|k| cfg.neighbor_ue_position(k, 0)));
    let layout = CellLayout { cell_radius_m: cfg.cell_radius_m, gnb_positions: gnbs, ue_positions: ues };
    let geometry = generate_drop_geometry(&mut rng_from_seed(derive_seed(seed, stream::GEOMETRY)), &layout, params)?;
    let positions = (0..cfg.n_positions)
        .into_par_iter()
        .map(|p| build_position(cfg, params, &geometry, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Drop { seed, geometry, positions, noise_variance_mw: params.noise_variance_mw() })
}

/// Unit-power QPSK point for symbol index `0..4` (Gray order by quadrant).
pub fn qpsk_symbol(index: u8) -> C64 {
    C64::from_polar(1.0, FRAC_PI_4 + FRAC_PI_2 * f64::from(index % 4))
}

/// Quadrant decision, inverse of [`qpsk_symbol`].
pub fn qpsk_decide(z: C64) -> u8 {
    match (z.re >= 0.0, z.im >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Received pilots and data at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub pilot_subcarriers: Vec<usize>,
    /// Least-squares effective-channel estimate per pilot RE (includes `sqrt(P_S)`).
    pub pilot_estimates: Vec<Vec<C64>>,
    /// Bias-corrected pilot residuals, `n_pilot_symbols` per pilot RE.
    pub u_samples: Vec<InterferenceNoiseSample>,
    /// Subcarrier of each data symbol.
    pub data_subcarriers: Vec<usize>,
    pub rx_symbols: Vec<Vec<C64>>,
    pub tx_symbols: Vec<u8>,
}

/// Independent reception stream of `position` in `drop`.
pub fn position_rng(drop: &Drop, position: usize) -> SimRng {
    rng_from_seed(derive_seed(derive_seed(drop.seed, stream::RECEPTION), position as u64))
}

fn received<R: Rng + ?Sized>(
    rng: &mut R,
    state: &PositionState,
    m: usize,
    s: C64,
    amp_s: f64,
    amp_i: f64,
    noise: f64,
) -> Vec<C64> {
    let mut y: Vec<C64> = state.serving_effective[m].iter().map(|h| h * (amp_s * s)).collect();
    if state.interfered {
        for g in &state.interference_effective {
            let z = qpsk_symbol(rng.gen_range(0..4)) * amp_i;
            for (yi, gi) in y.iter_mut().zip(&g[m]) {
                *yi += gi * z;
            }
        }
    }
    for yi in y.iter_mut() {
        *yi += complex_gaussian(rng, noise);
    }
    y
}

/// `y = sqrt(P_S) H_m f_S s + 1{ICI} sqrt(P_I) sum_k G_{k,m} f_{I,k} z_k + n`
/// on the pilot REs for `n_pilot_symbols` symbols, then `n_symbols` data
/// symbols cycling over every allocated RE. Pilots are drawn first, so the
/// pilot part does not depend on `n_symbols`.
pub fn synthesize_reception<R: Rng + ?Sized>(
    drop: &Drop,
    position: usize,
    cfg: &ScenarioConfig,
    rng: &mut R,
    n_symbols: usize,
) -> Result<Reception, ScenarioError> {
    let state = drop
        .positions
        .get(position)
        .ok_or(ScenarioError::IndexOutOfRange { index: position, n: drop.positions.len() })?;
    let amp_s = dbm_to_mw(cfg.tx_power_serving_dbm).sqrt();
    let amp_i = dbm_to_mw(cfg.tx_power_interferer_dbm).sqrt();
    let noise = drop.noise_variance_mw;
    let n_r = state.serving_effective[0].len();
    let pilots = cfg.pilot_subcarriers();
    let t_p = cfg.n_pilot_symbols;

    let mut pilot_rx = Vec::with_capacity(pilots.len());
    for &m in &pilots {
        let mut per_symbol = Vec::with_capacity(t_p);
        for _ in 0..t_p {
            let s = qpsk_symbol(rng.gen_range(0..4));
            per_symbol.push((s, received(rng, state, m, s, amp_s, amp_i, noise)));
        }
        pilot_rx.push(per_symbol);
    }
    let correction = (t_p as f64 / (t_p as f64 - 1.0)).sqrt();
    let mut pilot_estimates = Vec::with_capacity(pilots.len());
    let mut u_samples = Vec::with_capacity(pilots.len() * t_p);
    for (&m, per_symbol) in pilots.iter().zip(&pilot_rx) {
        let mut h = vec![C64::new(0.0, 0.0); n_r];
        for (s, y) in per_symbol {
            for (hi, yi) in h.iter_mut().zip(y) {
                *hi += yi * s.conj();
            }
        }
        for hi in h.iter_mut() {
            *hi /= t_p as f64;
        }
        for (t, (s, y)) in per_symbol.iter().enumerate() {
            let u = y.iter().zip(&h).map(|(yi, hi)| (yi - hi * s) * correction).collect();
            u_samples.push(InterferenceNoiseSample { u, subcarrier: m, time_index: t });
        }
        pilot_estimates.push(h);
    }

    let n_alloc = cfg.allocated_subcarriers();
    let mut data_subcarriers = Vec::with_capacity(n_symbols);
    let mut rx_symbols = Vec::with_capacity(n_symbols);
    let mut tx_symbols = Vec::with_capacity(n_symbols);
    for n in 0..n_symbols {
        let m = n % n_alloc;
        let b: u8 = rng.gen_range(0..4);
        rx_symbols.push(received(rng, state, m, qpsk_symbol(b), amp_s, amp_i, noise));
        data_subcarriers.push(m);
        tx_symbols.push(b);
    }
    Ok(Reception { pilot_subcarriers: pilots, pilot_estimates, u_samples, data_subcarriers, rx_symbols, tx_symbols })
}

/// Fills every RE in `0..n_res` from estimates at sorted `pilot_res`: linear
/// between neighbouring pilots, nearest pilot beyond the first and last.
pub fn interpolate_grid(pilot_res: &[usize], estimates: &[Vec<C64>], n_res: usize) -> Result<Vec<Vec<C64>>, ScenarioError> {
    if pilot_res.is_empty() || pilot_res.len() != estimates.len() {
        return Err(ScenarioError::InvalidConfig(format!(
            "{} pilot positions for {} estimates",
            pilot_res.len(),
            estimates.len()
        )));
    }
    if pilot_res.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScenarioError::InvalidConfig("pilot positions must be strictly increasing".into()));
    }
    let mut out = Vec::with_capacity(n_res);
    let mut seg = 0;
    for k in 0..n_res {
        while seg + 1 < pilot_res.len() && pilot_res[seg + 1] <= k {
            seg += 1;
        }
        let v = if k <= pilot_res[0] {
            estimates[0].clone()
        } else if seg + 1 == pilot_res.len() {
            estimates[seg].clone()
        } else {
            let (k0, k1) = (pilot_res[seg], pilot_res[seg + 1]);
            let w = (k - k0) as f64 / (k1 - k0) as f64;
            estimates[seg].iter().zip(&estimates[seg + 1]).map(|(a, b)| a * (1.0 - w) + b * w).collect()
        };
        out.push(v);
    }
    Ok(out)
}

/// Effective-channel estimate on every allocated RE.
pub fn full_grid_estimate(reception: &Reception, cfg: &ScenarioConfig) -> Result<Vec<Vec<C64>>, ScenarioError> {
    interpolate_grid(&reception.pilot_subcarriers, &reception.pilot_estimates, cfg.allocated_subcarriers())
}

/// Mean `||u||^2 / N_r` over the samples (linear power).
pub fn csi_im_measure(u_samples: &[InterferenceNoiseSample]) -> Result<f64, ScenarioError> {
    if u_samples.is_empty() {
        return Err(WhiteningError::EmptySampleSet.into());
    }
    let total: f64 = u_samples.iter().map(|s| s.u.iter().map(|z| z.norm_sqr()).sum::<f64>() / s.u.len() as f64).sum();
    Ok(total / u_samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    /// Interference present.
    pub label: bool,
    pub position_index: usize,
    /// CSI-IM in dB relative to the per-subcarrier noise variance.
    pub csi_im_db: f64,
    pub rsrp_serving_dbm: f64,
    pub rsrp_neighbor_dbm: f64,
}

impl LabeledSample {
    pub fn trigger(&self, phase: Phase, th: &TriggerThresholds) -> bool {
        trigger(phase, self.rsrp_serving_dbm, self.rsrp_neighbor_dbm, self.csi_im_db, th)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datasets {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

impl Datasets {
    /// JSON array of `{position, label, features}` over train then test samples.
    pub fn dump_json(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            position: usize,
            label: bool,
            features: &'a [f64],
        }
        let rows: Vec<Row> = self
            .train
            .iter()
            .chain(&self.test)
            .map(|s| Row { position: s.position_index, label: s.label, features: s.features.as_slice() })
            .collect();
        serde_json::to_string(&rows).expect("rows serialise")
    }
}

/// Pilot-derived sample at one position (same random stream as [`position_ser`]).
pub fn observe_position(drop: &Drop, position: usize, cfg: &ScenarioConfig) -> Result<LabeledSample, ScenarioError> {
    let rx = synthesize_reception(drop, position, cfg, &mut position_rng(drop, position), 0)?;
    sample_from_reception(drop, position, cfg, &rx)
}

fn sample_from_reception(drop: &Drop, position: usize, cfg: &ScenarioConfig, rx: &Reception) -> Result<LabeledSample, ScenarioError> {
    let state = &drop.positions[position];
    let grid = full_grid_estimate(rx, cfg)?;
    let csi_im = csi_im_measure(&rx.u_samples)?;
    Ok(LabeledSample {
        features: featurize_vectors(&grid)?,
        label: state.interfered,
        position_index: position,
        csi_im_db: 10.0 * (csi_im / drop.noise_variance_mw).log10(),
        rsrp_serving_dbm: state.rsrp_serving_dbm,
        rsrp_neighbor_dbm: state.rsrp_neighbor_dbm,
    })
}

/// Training and test samples for the configured index split.
pub fn make_datasets(drop: &Drop, cfg: &ScenarioConfig) -> Result<Datasets, ScenarioError> {
    use rayon::prelude::*;

    let build = |set: &IndexSet| -> Result<Vec<LabeledSample>, ScenarioError> {
        if let Some(&i) = set.as_slice().iter().find(|&&i| i >= drop.positions.len()) {
            return Err(ScenarioError::IndexOutOfRange { index: i, n: drop.positions.len() });
        }
        set.as_slice().par_iter().map(|&p| observe_position(drop, p, cfg)).collect()
    };
    Ok(Datasets { train: build(&cfg.train_indices)?, test: build(&cfg.test_indices)? })
}

/// Symbol error rates of one position with whitening off and on, evaluated on
/// the same received symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSer {
    pub position: usize,
    pub ser_iw_off: f64,
    pub ser_iw_on: f64,
    /// The covariance estimate could not be factored; IW-on fell back to IW-off.
    pub iw_fallback: bool,
    pub n_symbols: usize,
    pub sample: LabeledSample,
}

impl PositionSer {
    pub fn ser(&self, iw_on: bool) -> f64 {
        if iw_on {
            self.ser_iw_on
        } else {
            self.ser_iw_off
        }
    }
}

fn mrc_decisions(estimates: &[Vec<C64>], rx: &Reception) -> Vec<u8> {
    rx.rx_symbols.iter().zip(&rx.data_subcarriers).map(|(y, &m)| qpsk_decide(inner(&estimates[m], y))).collect()
}

/// MRC on the raw estimate versus MRC on the whitened estimate, with the
/// whitening filter from the pilot-residual sample covariance.
pub fn position_ser(drop: &Drop, position: usize, cfg: &ScenarioConfig, n_symbols: usize) -> Result<PositionSer, ScenarioError> {
    if n_symbols == 0 {
        return Err(ScenarioError::InvalidConfig("symbols_per_position must be positive".into()));
    }
    let rx = synthesize_reception(drop, position, cfg, &mut position_rng(drop, position), n_symbols)?;
    let sample = sample_from_reception(drop, position, cfg, &rx)?;
    let grid = full_grid_estimate(&rx, cfg)?;
    let ser_iw_off = symbol_error_rate(&rx.tx_symbols, &mrc_decisions(&grid, &rx))?;
    let filter = sample_covariance(&rx.u_samples).and_then(|r| whitening_filter(&r));
    let (ser_iw_on, iw_fallback) = match filter {
        Ok(w) => {
            let white_grid = grid.iter().map(|h| apply_whitening(&w, h)).collect::<Result<Vec<_>, _>>()?;
            let white_rx = Reception {
                rx_symbols: rx.rx_symbols.iter().map(|y| apply_whitening(&w, y)).collect::<Result<Vec<_>, _>>()?,
                ..rx.clone()
            };
            (symbol_error_rate(&rx.tx_symbols, &mrc_decisions(&white_grid, &white_rx))?, false)
        }
        Err(WhiteningError::Numerics(_)) => (ser_iw_off, true),
        Err(e) => return Err(e.into()),
    };
    Ok(PositionSer { position, ser_iw_off, ser_iw_on, iw_fallback, n_symbols, sample })
}

/// Whitening policies compared in the SER experiment.
#[derive(Debug, Clone, Copy)]
pub enum IwPolicy<'a> {
    AlwaysOn,
    AlwaysOff,
    Genie,
    /// Whitening where the test-phase trigger fires and the score exceeds the threshold.
    Detector { model: &'a SvddModel, thresholds: TriggerThresholds },
}

impl IwPolicy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            IwPolicy::AlwaysOn => "always_on",
            IwPolicy::AlwaysOff => "always_off",
            IwPolicy::Genie => "genie",
            IwPolicy::Detector { .. } => "detector",
        }
    }

    pub fn activates(&self, sample: &LabeledSample) -> Result<bool, ScenarioError> {
        Ok(match self {
            IwPolicy::AlwaysOn => true,
            IwPolicy::AlwaysOff => false,
            IwPolicy::Genie => sample.label,
            IwPolicy::Detector { model, thresholds } => {
                sample.trigger(Phase::Test, thresholds) && model.is_anomalous(&sample.features)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySer {
    /// `(position, ser, whitening active)` per evaluated position.
    pub per_position: Vec<(usize, f64, bool)>,
    /// Errors over all evaluated symbols divided by their count.
    pub aggregate: f64,
    pub activations: usize,
    pub fallbacks: usize,
}

/// Applies per-position whitening decisions to precomputed error rates.
pub fn select_ser(results: &[PositionSer], activations: &[bool]) -> PolicySer {
    let mut per_position = Vec::with_capacity(results.len());
    let (mut errors, mut total, mut fallbacks) = (0.0, 0usize, 0usize);
    for (r, &on) in results.iter().zip(activations) {
        let ser = r.ser(on);
        per_position.push((r.position, ser, on));
        errors += ser * r.n_symbols as f64;
        total += r.n_symbols;
        fallbacks += usize::from(on && r.iw_fallback);
    }
    let aggregate = if total == 0 { 0.0 } else { errors / total as f64 };
    PolicySer { per_position, aggregate, activations: activations.iter().filter(|a| **a).count(), fallbacks }
}

/// Per-position SER of `policy` over the test positions.
pub fn evaluate_policy_ser(
    drop: &Drop,
    policy: &IwPolicy,
    cfg: &ScenarioConfig,
    symbols_per_position: usize,
) -> Result<PolicySer, ScenarioError> {
    use rayon::prelude::*;

    let results = cfg
        .test_indices
        .as_slice()
        .par_iter()
        .map(|&p| position_ser(drop, p, cfg, symbols_per_position))
        .collect::<Result<Vec<_>, _>>()?;
    let activations = results.iter().map(|r| policy.activates(&r.sample)).collect::<Result<Vec<_>, _>>()?;
    Ok(select_ser(&results, &activations))
}
