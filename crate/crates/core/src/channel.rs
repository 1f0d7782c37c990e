//! Position-dependent channels under the field-response model.
//!
//! Both antenna regions are centred on their phase reference, so coordinates
//! lie in `[-A/2, A/2]^2`. Transmit and receive regions are physically
//! separate; their offset is absorbed into the SI scattering matrix.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::scenario::{PathAngles, Scenario};

pub type Point = [f64; 2];

/// Path-length difference of a plane wave between `position` and the region origin.
pub fn path_delta(position: Point, angles: PathAngles) -> f64 {
    let [x, y] = position;
    x * angles.elevation.sin() * angles.azimuth.cos() + y * angles.elevation.cos()
}

fn phase_term(position: Point, angles: PathAngles, wavelength: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI / wavelength * path_delta(position, angles))
}

/// One unit-modulus phase term per path.
pub fn field_response(position: Point, paths: &[PathAngles], wavelength: f64) -> CVector {
    CVector::from_iterator(paths.len(), paths.iter().map(|&a| phase_term(position, a, wavelength)))
}

/// Field-response matrix with one column per antenna.
pub fn field_response_matrix(positions: &[Point], paths: &[PathAngles], wavelength: f64) -> CMatrix {
    CMatrix::from_fn(paths.len(), positions.len(), |l, m| {
        phase_term(positions[m], paths[l], wavelength)
    })
}

/// Transmit and receive antenna positions in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
}

impl AntennaLayout {
    pub fn new(tx: Vec<Point>, rx: Vec<Point>) -> Self {
        AntennaLayout { tx, rx }
    }

    /// All antennas stacked on their region origins.
    pub fn at_origin(m: usize, n: usize) -> Self {
        AntennaLayout::new(vec![[0.0; 2]; m], vec![[0.0; 2]; n])
    }

    /// Unstacks `[t_1x, t_1y, ..., t_Mx, t_My, r_1x, ..., r_Ny]`.
    pub fn from_stacked(u: &[f64], m: usize, n: usize) -> Self {
        assert_eq!(u.len(), 2 * (m + n), "stacked layout has wrong length");
        let pts = |s: &[f64]| s.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        AntennaLayout::new(pts(&u[..2 * m]), pts(&u[2 * m..]))
    }

    pub fn to_stacked(&self) -> Vec<f64> {
        self.tx.iter().chain(&self.rx).flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn translated(&self, tx_offset: Point, rx_offset: Point) -> Self {
        let shift = |pts: &[Point], o: Point| pts.iter().map(|p| [p[0] + o[0], p[1] + o[1]]).collect();
        AntennaLayout::new(shift(&self.tx, tx_offset), shift(&self.rx, rx_offset))
    }

    pub fn is_finite(&self) -> bool {
        self.tx.iter().chain(&self.rx).all(|p| p[0].is_finite() && p[1].is_finite())
    }

    /// Whether every antenna lies in its centred square region.
    pub fn within_regions(&self, size_tx: f64, size_rx: f64) -> bool {
        let inside = |pts: &[Point], a: f64| {
            pts.iter().all(|p| p[0].abs() <= a / 2.0 && p[1].abs() <= a / 2.0)
        };
        inside(&self.tx, size_tx) && inside(&self.rx, size_rx)
    }

    pub fn min_tx_spacing(&self) -> f64 {
        min_pairwise_distance(&self.tx)
    }

    pub fn min_rx_spacing(&self) -> f64 {
        min_pairwise_distance(&self.rx)
    }
}

/// Smallest distance between two distinct points; infinity for fewer than two.
pub fn min_pairwise_distance(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for (a, p) in points.iter().enumerate() {
        for q in &points[a + 1..] {
            best = best.min((p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    best
}

/// H_SI = F(r)^H Sigma G(t), an N x M matrix.
pub fn si_channel(layout: &AntennaLayout, scenario: &Scenario) -> CMatrix {
    let wl = scenario.config.wavelength;
    let g = field_response_matrix(&layout.tx, &scenario.si_tx_angles, wl);
    let f = field_response_matrix(&layout.rx, &scenario.si_rx_angles, wl);
    f.adjoint() * scenario.si_core_matrix() * g
}

/// LoS uplink channel of UL terminal `j` (zero-based) at the receive antennas.
pub fn ul_channel(layout: &AntennaLayout, scenario: &Scenario, j: usize) -> Result<CVector> {
    let len = scenario.ul_coeffs.len();
    if j >= len {
        return Err(Error::Index { what: "uplink terminal", index: j, len });
    }
    let resp = steering_vector(
        &layout.rx,
        scenario.ul_angles[j],
        scenario.config.wavelength,
    );
    Ok(resp * scenario.ul_coeffs[j])
}

/// LoS downlink channel of DL terminal `k` (zero-based) from the transmit antennas.
pub fn dl_channel(layout: &AntennaLayout, scenario: &Scenario, k: usize) -> Result<CVector> {
    let len = scenario.dl_coeffs.len();
    if k >= len {
        return Err(Error::Index { what: "downlink terminal", index: k, len });
    }
    let resp = steering_vector(
        &layout.tx,
        scenario.dl_angles[k],
        scenario.config.wavelength,
    );
    Ok(resp * scenario.dl_coeffs[k])
}

// Steering vector over antennas for a single path.
fn steering_vector(positions: &[Point], angles: PathAngles, wavelength: f64) -> CVector {
    CVector::from_iterator(
        positions.len(),
        positions.iter().map(|&p| phase_term(p, angles, wavelength)),
    )
}

/// All channels for one layout.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// N x M self-interference matrix (before the loss coefficient).
    pub si: CMatrix,
    pub ul: Vec<CVector>,
    pub dl: Vec<CVector>,
}

impl ChannelSet {
    pub fn assemble(layout: &AntennaLayout, scenario: &Scenario) -> ChannelSet {
        let ul = (0..scenario.config.num_ul_uts)
            .map(|j| ul_channel(layout, scenario, j).expect("index in range"))
            .collect();
        let dl = (0..scenario.config.num_dl_uts)
            .map(|k| dl_channel(layout, scenario, k).expect("index in range"))
            .collect();
        ChannelSet { si: si_channel(layout, scenario), ul, dl }
    }

    pub fn num_tx(&self) -> usize {
        self.si.ncols()
    }

    pub fn num_rx(&self) -> usize {
        self.si.nrows()
    }

    /// L = [l_1, ..., l_J].
    pub fn ul_matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.ul)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SystemConfig;
    use approx::assert_abs_diff_eq;

    #[test]
    fn path_delta_cases() {
        let a = PathAngles::new(1.1, 0.3);
        assert_eq!(path_delta([0.0, 0.0], a), 0.0);
        let wl = 0.0375;
        assert_abs_diff_eq!(
            path_delta([wl / 2.0, 0.0], PathAngles::new(PI / 2.0, 0.0)),
            wl / 2.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(path_delta([0.0, 1.0], PathAngles::new(PI / 3.0, 2.0)), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn field_response_cases() {
        let paths = [PathAngles::new(0.2, 0.4), PathAngles::new(2.0, 3.0)];
        let v = super::field_response([0.0, 0.0], &paths, 0.1);
        assert!(v.iter().all(|z| (*z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let v = super::field_response([0.05, 0.0], &[PathAngles::new(PI / 2.0, 0.0)], 0.1);
        assert_abs_diff_eq!(v[0].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn origin_layout_si_is_constant() {
        let s = Scenario::generate(&SystemConfig::desk()).unwrap();
        let h = si_channel(&AntennaLayout::at_origin(8, 8), &s);
        let total: Complex64 = s.si_core.iter().flatten().sum();
        for z in h.iter() {
            assert!((*z - total).norm() < 1e-12);
        }
    }

    #[test]
    fn origin_layout_channels_are_scaled_ones() {
        let s = Scenario::generate(&SystemConfig::desk()).unwrap();
        let ch = ChannelSet::assemble(&AntennaLayout::at_origin(8, 8), &s);
        for (j, l) in ch.ul.iter().enumerate() {
            assert!(l.iter().all(|z| (*z - s.ul_coeffs[j]).norm() < 1e-25));
        }
        for (k, h) in ch.dl.iter().enumerate() {
            assert!(h.iter().all(|z| (z.norm() - s.dl_coeffs[k].norm()).abs() < 1e-25));
        }
    }

    #[test]
    fn broadside_elevation_kills_y_dependence() {
        let mut s = Scenario::generate(&SystemConfig::desk()).unwrap();
        s.ul_angles[0] = PathAngles::new(PI / 2.0, 0.7);
        let wl = s.config.wavelength;
        let layout = AntennaLayout::new(vec![[0.0; 2]; 8], {
            let mut rx = vec![[0.3 * wl, -wl]; 8];
            rx[1] = [0.3 * wl, 0.0];
            rx
        });
        let l = ul_channel(&layout, &s, 0).unwrap();
        assert!((l[0] - l[1]).norm() <= 1e-12 * l[0].norm());
    }

    #[test]
    fn index_errors() {
        let s = Scenario::generate(&SystemConfig::desk()).unwrap();
        let layout = AntennaLayout::at_origin(8, 8);
        assert!(matches!(ul_channel(&layout, &s, 3), Err(Error::Index { .. })));
        assert!(matches!(dl_channel(&layout, &s, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn stacking_round_trip() {
        let layout = AntennaLayout::new(vec![[1.0, 2.0], [3.0, 4.0]], vec![[5.0, 6.0]]);
        let u = layout.to_stacked();
        assert_eq!(u, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(AntennaLayout::from_stacked(&u, 2, 1), layout);
    }

    #[test]
    fn spacing_helpers() {
        assert_eq!(min_pairwise_distance(&[[0.0, 0.0]]), f64::INFINITY);
        assert_abs_diff_eq!(min_pairwise_distance(&[[0.0, 0.0], [3.0, 4.0], [0.0, 10.0]]), 5.0);
        let l = AntennaLayout::new(vec![[0.5, -0.5]], vec![[0.6, 0.0]]);
        assert!(l.within_regions(1.0, 1.2));
        assert!(!l.within_regions(1.0, 1.0));
    }
}
