//! Kinematic and quasi-static performance of a swept path.
//!
//! `d_max` is the largest distance between any two sampled end-effector
//! positions. `eta` is the end-effector displacement per unit of crank
//! rotation; under work conservation it is the torque needed per unit of
//! output force. The closed path is cut in two at the `d_max` points and the
//! larger of the two per-arc minima of `eta` is reported as `eta_min`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{self, Branch, Linkage, Path, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionPair {
    pub d_max: f64,
    pub eta_min: f64,
}

impl ConditionPair {
    pub const fn new(d_max: f64, eta_min: f64) -> Self {
        Self { d_max, eta_min }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.d_max, self.eta_min]
    }

    pub fn from_array(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

/// `eta` along the path together with the split used for `eta_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaProfile {
    /// `eta[i]` belongs to the segment from point `i` to point `i + 1` (cyclic).
    pub eta: Vec<f64>,
    /// Indices of the two points realizing `d_max`, `split.0 < split.1`.
    pub split: (usize, usize),
    /// Minimum over each arc. `None` when the arc has at most one own segment.
    pub arc_minima: (Option<f64>, Option<f64>),
}

/// Exact maximum pairwise distance over the sampled points.
///
/// Returns the distance and the first index pair `(i, j)`, `i < j`, attaining it.
pub fn compute_dmax(points: &[Vec2]) -> (f64, (usize, usize)) {
    let mut best = 0.0;
    let mut pair = (0, usize::from(points.len() > 1));
    for (i, &p) in points.iter().enumerate() {
        for (j, &q) in points.iter().enumerate().skip(i + 1) {
            let d2 = (p - q).norm_squared();
            if d2 > best {
                best = d2;
                pair = (i, j);
            }
        }
    }
    (f64::sqrt(best), pair)
}

pub fn compute_eta_profile(path: &Path) -> EtaProfile {
    let n = path.len();
    let step = path.step();
    let eta: Vec<f64> =
        (0..n).map(|i| path.points[(i + 1) % n].distance(path.points[i]) / step).collect();
    let (_, split) = compute_dmax(&path.points);
    let arc_minima = arc_minima(&eta, split);
    EtaProfile { eta, split, arc_minima }
}

// Arc A owns segments p..q, arc B owns q..n and 0..p. The segment on either
// side of a split point is shared by both arcs.
fn arc_minima(eta: &[f64], (p, q): (usize, usize)) -> (Option<f64>, Option<f64>) {
    let n = eta.len();
    let seg_min = |start: usize, count: usize| {
        (0..count).map(|k| eta[(start + k) % n]).fold(f64::INFINITY, f64::min)
    };
    let own_a = q - p;
    let own_b = n - own_a;
    let a = (own_a > 1).then(|| seg_min(p + n - 1, own_a + 2));
    let b = (own_b > 1).then(|| seg_min(q - 1, own_b + 2));
    (a, b)
}

/// The larger of the two per-arc minima.
///
/// A degenerate split (adjacent `d_max` points) leaves one arc without an
/// interior; the other arc's minimum is returned. If neither arc qualifies the
/// global minimum is used.
pub fn compute_eta_min(profile: &EtaProfile) -> f64 {
    match profile.arc_minima {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => {
            log::debug!("degenerate eta split {:?}", profile.split);
            profile.eta.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }
}

pub fn conditions_of_path(path: &Path) -> (ConditionPair, EtaProfile) {
    let profile = compute_eta_profile(path);
    let (d_max, _) = compute_dmax(&path.points);
    let eta_min = compute_eta_min(&profile);
    (ConditionPair { d_max, eta_min }, profile)
}

/// Ground-truth conditions of a linkage on the default assembly branch.
pub fn evaluate(linkage: &Linkage, n_steps: usize) -> Result<ConditionPair> {
    evaluate_detailed(linkage, n_steps).map(|(c, _, _)| c)
}

pub fn evaluate_detailed(
    linkage: &Linkage,
    n_steps: usize,
) -> Result<(ConditionPair, Path, EtaProfile)> {
    if let Some(v) = kinematics::crank_rocker_violation(linkage) {
        return Err(Error::InvalidLinkage(v));
    }
    let path = kinematics::sweep_path(linkage, n_steps, Branch::Open)?;
    let (conditions, profile) = conditions_of_path(&path);
    Ok((conditions, path, profile))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(l2: f64) -> Linkage {
        Linkage::new(l2, 1.2, 1.0, 0.0, 0.0)
    }

    #[test]
    fn dmax_of_circle_is_diameter() {
        let path = kinematics::sweep_path(&circle(0.5), 360, Branch::Open).unwrap();
        let (d, (i, j)) = compute_dmax(&path.points);
        assert!((d - 1.0).abs() < 2e-5);
        assert!(d <= 1.0 + 1e-12);
        assert_eq!(j - i, 180);
    }

    #[test]
    fn dmax_two_points() {
        let (d, pair) = compute_dmax(&[Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0)]);
        assert_eq!(d, 5.0);
        assert_eq!(pair, (0, 1));
    }

    #[test]
    fn circle_eta_equals_crank() {
        for l2 in [0.5, 0.25] {
            let path = kinematics::sweep_path(&circle(l2), 360, Branch::Open).unwrap();
            let profile = compute_eta_profile(&path);
            for &e in &profile.eta {
                assert!((e - l2).abs() < 1e-4 * l2.max(1.0));
            }
        }
        let c = evaluate(&circle(0.5), 360).unwrap();
        assert!((c.d_max - 1.0).abs() < 1e-3);
        assert!((c.eta_min - 0.5).abs() < 1e-3);
    }

    #[test]
    fn constant_profile() {
        let profile = EtaProfile {
            eta: vec![0.7; 10],
            split: (2, 7),
            arc_minima: arc_minima(&[0.7; 10], (2, 7)),
        };
        assert_eq!(compute_eta_min(&profile), 0.7);
    }

    #[test]
    fn picks_higher_arc_minimum() {
        // arc A owns segments 2..6 (+1 and 6 shared), arc B owns 6..10, 0..2
        let mut eta = vec![1.0; 10];
        eta[3] = 0.2;
        eta[8] = 0.7;
        let minima = arc_minima(&eta, (2, 6));
        assert_eq!(minima, (Some(0.2), Some(0.7)));
        let profile = EtaProfile { eta, split: (2, 6), arc_minima: minima };
        assert_eq!(compute_eta_min(&profile), 0.7);
    }

    #[test]
    fn boundary_segments_are_shared() {
        let mut eta = vec![1.0; 10];
        // segment 1 ends at split point 2, so it borders both arcs
        eta[1] = 0.1;
        let (a, b) = arc_minima(&eta, (2, 6));
        assert_eq!(a, Some(0.1));
        assert_eq!(b, Some(0.1));
    }

    #[test]
    fn degenerate_split_uses_other_arc() {
        let mut eta = vec![2.0; 8];
        eta[5] = 0.5;
        let minima = arc_minima(&eta, (3, 4));
        assert_eq!(minima.0, None);
        let profile = EtaProfile { eta, split: (3, 4), arc_minima: minima };
        assert_eq!(compute_eta_min(&profile), 0.5);
    }

    #[test]
    fn invalid_linkage_is_rejected() {
        let err = evaluate(&Linkage::new(0.5, 1.5, 1.0, 0.0, 0.0), 360).unwrap_err();
        assert!(matches!(err, Error::InvalidLinkage(_)));
    }

    #[test]
    fn eta_matches_finite_difference_oracle() {
        let linkage = Linkage::new(0.5, 1.2, 1.0, 1.0, 0.3);
        let n = 3600;
        let path = kinematics::sweep_path(&linkage, n, Branch::Open).unwrap();
        let profile = compute_eta_profile(&path);
        let h = path.step() / 10.0;
        for i in (0..n).step_by(7) {
            // forward difference belongs to the segment midpoint
            let mid = path.theta[i] + 0.5 * path.step();
            let ahead = kinematics::solve_position(&linkage, mid + h, Branch::Open).unwrap().ee;
            let behind = kinematics::solve_position(&linkage, mid - h, Branch::Open).unwrap().ee;
            let speed = ahead.distance(behind) / (2.0 * h);
            let rel = (profile.eta[i] - speed).abs() / speed;
            assert!(rel < 0.01, "i={i}: {} vs {speed}", profile.eta[i]);
        }
        let local_minima = (0..n)
            .filter(|&i| {
                let e = &profile.eta;
                e[i] < e[(i + n - 1) % n] && e[i] <= e[(i + 1) % n]
            })
            .count();
        assert!(local_minima >= 2, "{local_minima}");
    }
}
