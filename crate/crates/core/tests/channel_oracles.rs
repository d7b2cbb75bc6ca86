use std::f64::consts::PI;

use ici_core::channel::{
    advance_ue, generate_drop_geometry, path_gain, rsrp_dbm, steering_vector, subcarrier_channel, subcarrier_channels,
    CellLayout, ChannelParams, LinkGeometry, Point, SPEED_OF_LIGHT,
};
use ici_core::numerics::{ComplexMatrix, C64};
use ici_core::random::rng_from_seed;
use proptest::prelude::*;

/// Straight-line evaluation of the cluster model from raw point geometry.
fn direct_channel(tx: Point, rx: Point, scatterers: &[Point], m: usize, p: &ChannelParams) -> ComplexMatrix {
    let (nr, nt) = (p.ue_antennas, p.gnb_antennas);
    let mut h = ComplexMatrix::zeros(nr, nt);
    for s in scatterers {
        let d1 = ((s.x - tx.x).powi(2) + (s.y - tx.y).powi(2)).sqrt();
        let d2 = ((rx.x - s.x).powi(2) + (rx.y - s.y).powi(2)).sqrt();
        let amp = (p.reference_loss / (4.0 * PI)) / (d1 * d2).powf(p.pathloss_exponent / 2.0);
        let tau = (d1 + d2) / SPEED_OF_LIGHT;
        let theta = (s.y - rx.y).atan2(s.x - rx.x);
        let phi = (s.y - tx.y).atan2(s.x - tx.x);
        let phase = -2.0 * PI * (p.carrier_hz * tau + p.sampling_hz * (m as f64 / p.total_subcarriers as f64) * tau);
        let alpha = C64::from_polar(amp, phase);
        for i in 0..nr {
            for j in 0..nt {
                let arx = C64::from_polar(1.0, 2.0 * PI * p.antenna_spacing_over_wavelength * i as f64 * theta.cos());
                let atx = C64::from_polar(1.0, 2.0 * PI * p.antenna_spacing_over_wavelength * j as f64 * phi.cos());
                h[(i, j)] += alpha * arx * atx.conj();
            }
        }
    }
    h
}

#[test]
fn channel_matches_direct_evaluation() {
    let p = ChannelParams::default();
    let layout = CellLayout {
        cell_radius_m: 40.0,
        gnb_positions: vec![Point::new(0.0, 0.0), Point::new(80.0, 0.0)],
        ue_positions: vec![Point::new(35.0, 3.0), Point::new(45.0, -8.0)],
    };
    let geo = generate_drop_geometry(&mut rng_from_seed(21), &layout, &p).unwrap();
    for (g, row) in geo.links.iter().enumerate() {
        for link in row {
            let pts: Vec<Point> = geo.scatterers[g].iter().flatten().copied().collect();
            for m in [0, 7, 239, 1023] {
                let ours = subcarrier_channel(link, p.rx_array(), p.tx_array(), m, &p);
                let oracle = direct_channel(link.tx_position_m, link.rx_position_m, &pts, m, &p);
                let err = (&ours - &oracle).frobenius_norm() / oracle.frobenius_norm();
                assert!(err < 1e-8, "relative error {err}");
            }
        }
    }
}

#[test]
fn batched_equals_single_subcarrier() {
    let p = ChannelParams::default();
    let link = LinkGeometry::new(
        Point::new(0.0, 0.0),
        Point::new(30.0, 5.0),
        vec![vec![Point::new(10.0, 10.0), Point::new(12.0, -4.0)], vec![Point::new(25.0, 20.0)]],
        &p,
    )
    .unwrap();
    let ms = [0, 5, 100];
    let batch = subcarrier_channels(&link, p.rx_array(), p.tx_array(), &ms, &p);
    for (h, &m) in batch.iter().zip(&ms) {
        assert_eq!(h, &subcarrier_channel(&link, p.rx_array(), p.tx_array(), m, &p));
    }
}

#[test]
fn rsrp_matches_hand_computation() {
    // H = [[1, 0], [0, 2]], f = e1: ||H f||^2 = 1, / N_r = 0.5
    let h = ComplexMatrix::from_real_diagonal(&[1.0, 2.0]);
    let f = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let r = rsrp_dbm(&[h.clone(), h], &f, 30.0).unwrap();
    assert!((r - (30.0 + 10.0 * 0.5f64.log10())).abs() < 1e-12);
}

#[test]
fn scatterers_are_shared_per_gnb_and_inside_a_spread_disc() {
    let p = ChannelParams::default();
    let layout = CellLayout {
        cell_radius_m: 40.0,
        gnb_positions: vec![Point::new(0.0, 0.0)],
        ue_positions: vec![Point::new(30.0, 0.0), Point::new(0.0, 30.0)],
    };
    let geo = generate_drop_geometry(&mut rng_from_seed(3), &layout, &p).unwrap();
    assert_eq!(geo.links[0][0].scatterer_positions_m, geo.links[0][1].scatterer_positions_m);
    assert_eq!(geo.scatterers[0].len(), p.n_clusters);
    for s in geo.scatterers[0].iter().flatten() {
        // centre within R, points within R + 8 sigma with overwhelming probability
        assert!(s.distance(Point::new(0.0, 0.0)) < 40.0 + 8.0 * p.cluster_spread_m);
    }
}

proptest! {
    #[test]
    fn steering_entries_are_unit_modulus(n in 1usize..16, angle in 0.0..(2.0 * PI)) {
        let p = ChannelParams::default();
        let a = steering_vector(ici_core::channel::ArrayGeometry::new(n, p.antenna_spacing_over_wavelength).unwrap(), angle);
        prop_assert_eq!(a.len(), n);
        prop_assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        prop_assert_eq!(a[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn path_gain_decreases_with_distance(r1 in 1.0..500.0f64, r2 in 1.0..500.0f64, extra in 0.1..100.0f64) {
        let p = ChannelParams::default();
        prop_assert!(path_gain(&p, &[r1 + extra, r2]).unwrap() < path_gain(&p, &[r1, r2]).unwrap());
    }

    #[test]
    fn advancing_back_restores_paths(seed in any::<u64>(), dx in -2.0..2.0f64, dy in -2.0..2.0f64) {
        let p = ChannelParams::default();
        let layout = CellLayout {
            cell_radius_m: 40.0,
            gnb_positions: vec![Point::new(0.0, 0.0)],
            ue_positions: vec![Point::new(30.0, 0.0)],
        };
        let Ok(geo) = generate_drop_geometry(&mut rng_from_seed(seed), &layout, &p) else { return Ok(()) };
        let link = &geo.links[0][0];
        let Ok(moved) = advance_ue(link, (dx, dy), &p) else { return Ok(()) };
        let back = advance_ue(&moved, (-dx, -dy), &p).unwrap();
        for (a, b) in back.paths.iter().zip(&link.paths) {
            prop_assert!((a.delay_s - b.delay_s).abs() < 1e-15);
            prop_assert!((a.gain - b.gain).norm() < 1e-12 * b.gain.norm());
        }
    }
}

fn step_statistics(step_m: f64) -> (f64, f64) {
    let p = ChannelParams::default();
    let (mut ratio, mut gain_change, mut n_paths) = (0.0, 0.0, 0usize);
    let drops = 200;
    for seed in 0..drops {
        let layout = CellLayout {
            cell_radius_m: 40.0,
            gnb_positions: vec![Point::new(0.0, 0.0)],
            ue_positions: vec![Point::new(30.0, 0.0)],
        };
        let geo = generate_drop_geometry(&mut rng_from_seed(1000 + seed), &layout, &p).unwrap();
        let link = &geo.links[0][0];
        let moved = advance_ue(link, (step_m, 0.0), &p).unwrap();
        let h0 = subcarrier_channel(link, p.rx_array(), p.tx_array(), 0, &p);
        let h1 = subcarrier_channel(&moved, p.rx_array(), p.tx_array(), 0, &p);
        ratio += (&h1 - &h0).frobenius_norm() / h0.frobenius_norm();
        for (a, b) in link.paths.iter().zip(&moved.paths) {
            gain_change += (b.gain.norm() / a.gain.norm() - 1.0).abs();
            n_paths += 1;
        }
    }
    (ratio / drops as f64, gain_change / n_paths as f64)
}

#[test]
fn sub_wavelength_steps_keep_the_channel_coherent() {
    let lambda = ChannelParams::default().wavelength_m();
    let (ratio, _) = step_statistics(lambda / 20.0);
    assert!(ratio < 1.0, "mean relative change {ratio}");
}

#[test]
fn position_steps_keep_large_scale_parameters() {
    // 0.1 m is about 9 wavelengths at 28 GHz: carrier phases decorrelate but
    // path magnitudes stay put.
    let (_, gain_change) = step_statistics(0.1);
    assert!(gain_change < 0.01, "mean relative path-gain change {gain_change}");
}
