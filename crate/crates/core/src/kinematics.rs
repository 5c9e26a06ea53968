//! Position analysis of crank-rocker four-bar linkages.
//!
//! The frame link runs from the crank pivot `A = (0, 0)` to the rocker pivot
//! `D = (1, 0)`; every other length is a ratio to it. The end-effector is
//! rigidly attached to the coupler, expressed in a frame with origin at the
//! crank tip `B` and x-axis pointing at the coupler-rocker joint `C`.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp window for the squared half-chord of the circle intersection.
pub const DISCRIMINANT_EPS: f64 = 1e-12;

/// Smallest supported path resolution.
pub const MIN_STEPS: usize = 8;

/// Rocker pivot. The frame length is fixed at one.
pub const ROCKER_PIVOT: Vec2 = Vec2 { x: 1.0, y: 0.0 };

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Rotation by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// The five free design parameters of a crank-rocker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linkage {
    /// Crank.
    pub l2: f64,
    /// Coupler.
    pub l3: f64,
    /// Rocker.
    pub l4: f64,
    /// End-effector offset along the coupler.
    pub ee_x: f64,
    /// End-effector offset perpendicular to the coupler.
    pub ee_y: f64,
}

impl Linkage {
    pub const FIELDS: [&'static str; 5] = ["l2", "l3", "l4", "ee_x", "ee_y"];

    pub const fn new(l2: f64, l3: f64, l4: f64, ee_x: f64, ee_y: f64) -> Self {
        Self { l2, l3, l4, ee_x, ee_y }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.l2, self.l3, self.l4, self.ee_x, self.ee_y]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_valid_crank_rocker(&self) -> bool {
        is_valid_crank_rocker(self)
    }
}

/// Why a set of lengths is not a fully rotating crank-rocker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    NonPositiveLength,
    CrankNotShortest,
    GrashofSum,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveLength => f.write_str("link lengths must be positive"),
            Violation::CrankNotShortest => f.write_str("crank not shortest"),
            Violation::GrashofSum => f.write_str(
                "sum inequality failed: crank + longest link must be less than the sum of the other two",
            ),
        }
    }
}

/// Returns the first crank-rocker condition the linkage breaks, if any.
///
/// The crank must be strictly the shortest of the four links and the
/// strict Grashof inequality must hold. End-effector offsets are ignored.
pub fn crank_rocker_violation(linkage: &Linkage) -> Option<Violation> {
    let Linkage { l2, l3, l4, .. } = *linkage;
    if !(l2 > 0.0 && l3 > 0.0 && l4 > 0.0) {
        return Some(Violation::NonPositiveLength);
    }
    if !(l2 < 1.0 && l2 < l3 && l2 < l4) {
        return Some(Violation::CrankNotShortest);
    }
    let mut others = [1.0, l3, l4];
    others.sort_by(f64::total_cmp);
    let [a, b, longest] = others;
    if l2 + longest < a + b {
        None
    } else {
        Some(Violation::GrashofSum)
    }
}

pub fn is_valid_crank_rocker(linkage: &Linkage) -> bool {
    crank_rocker_violation(linkage).is_none()
}

/// Assembly configuration of the coupler-rocker joint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `C` lies left of the directed line from `B` to `D`.
    #[default]
    Open,
    Crossed,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Open => 1.0,
            Branch::Crossed => -1.0,
        }
    }

    fn other(self) -> Branch {
        match self {
            Branch::Open => Branch::Crossed,
            Branch::Crossed => Branch::Open,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointState {
    pub theta: f64,
    pub b: Vec2,
    pub c: Vec2,
    pub ee: Vec2,
}

/// Solves the loop-closure equations at one crank angle.
///
/// `C` is the intersection of the coupler circle around `B` and the rocker
/// circle around `D`. The result does not depend on any previous solve.
pub fn solve_position(linkage: &Linkage, theta: f64, branch: Branch) -> Result<JointState> {
    let b = Vec2::new(linkage.l2 * theta.cos(), linkage.l2 * theta.sin());
    let c = coupler_joint(linkage, b, branch).ok_or(Error::NoAssembly { theta })?;
    let u = (c - b) * (1.0 / linkage.l3);
    let ee = b + u * linkage.ee_x + u.perp() * linkage.ee_y;
    Ok(JointState { theta, b, c, ee })
}

fn coupler_joint(linkage: &Linkage, b: Vec2, branch: Branch) -> Option<Vec2> {
    let bd = ROCKER_PIVOT - b;
    let d = bd.norm();
    if d == 0.0 {
        return None;
    }
    let (l3, l4) = (linkage.l3, linkage.l4);
    let along = (d * d + l3 * l3 - l4 * l4) / (2.0 * d);
    let mut h2 = l3 * l3 - along * along;
    if h2 < 0.0 {
        if h2 < -DISCRIMINANT_EPS {
            return None;
        }
        h2 = 0.0;
    }
    let e = bd * (1.0 / d);
    Some(b + e * along + e.perp() * (branch.sign() * h2.sqrt()))
}

/// End-effector trajectory over one crank revolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub theta: Vec<f64>,
    pub points: Vec<Vec2>,
    /// Coupler-rocker joint positions, kept for continuity checks and drawing.
    pub joints: Vec<Vec2>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Crank increment between consecutive samples.
    pub fn step(&self) -> f64 {
        TAU / self.points.len() as f64
    }

    /// Builds a path from raw points, assuming uniform crank spacing.
    pub fn from_points(points: Vec<Vec2>) -> Self {
        let n = points.len();
        let theta = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        Self { theta, joints: points.clone(), points }
    }

    /// Largest distance between consecutive points, including the wrap-around.
    pub fn max_gap(&self) -> f64 {
        max_cyclic_gap(&self.points)
    }
}

pub(crate) fn max_cyclic_gap(points: &[Vec2]) -> f64 {
    let n = points.len();
    (0..n).map(|i| points[i].distance(points[(i + 1) % n])).fold(0.0, f64::max)
}

/// Samples the end-effector at `n_steps` uniformly spaced crank angles.
pub fn sweep_path(linkage: &Linkage, n_steps: usize, branch: Branch) -> Result<Path> {
    if n_steps < MIN_STEPS {
        return Err(Error::TooFewSteps { min: MIN_STEPS, got: n_steps });
    }
    let mut theta = Vec::with_capacity(n_steps);
    let mut points = Vec::with_capacity(n_steps);
    let mut joints = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let angle = TAU * i as f64 / n_steps as f64;
        let state = solve_position(linkage, angle, branch)?;
        theta.push(angle);
        points.push(state.ee);
        joints.push(state.c);
    }
    check_branch_continuity(linkage, &theta, &joints, branch)?;
    Ok(Path { theta, points, joints })
}

// A flip shows up as C landing closer to the other branch's solution at the
// next angle than to its own. Near-singular linkages can legitimately swing C
// further than that in one step, so a failing step is subdivided before it is
// reported.
fn check_branch_continuity(
    linkage: &Linkage,
    theta: &[f64],
    joints: &[Vec2],
    branch: Branch,
) -> Result<()> {
    let n = joints.len();
    for i in 0..n {
        let next = (i + 1) % n;
        let end = if next == 0 { TAU } else { theta[next] };
        if !continuous_step(linkage, branch, theta[i], joints[i], end, joints[next], MAX_SUBDIVISION) {
            return Err(Error::BranchDiscontinuity { index: i, next });
        }
    }
    Ok(())
}

const MAX_SUBDIVISION: u32 = 16;

fn continuous_step(linkage: &Linkage, branch: Branch, t0: f64, c0: Vec2, t1: f64, c1: Vec2, depth: u32) -> bool {
    let crank = |t: f64| Vec2::new(linkage.l2 * t.cos(), linkage.l2 * t.sin());
    let Some(mirror) = coupler_joint(linkage, crank(t1), branch.other()) else {
        return true;
    };
    if c0.distance(c1) <= c0.distance(mirror) + 1e-12 {
        return true;
    }
    if depth == 0 {
        return false;
    }
    let mid = 0.5 * (t0 + t1);
    let Some(cm) = coupler_joint(linkage, crank(mid), branch) else {
        return false;
    };
    continuous_step(linkage, branch, t0, c0, mid, cm, depth - 1)
        && continuous_step(linkage, branch, mid, cm, t1, c1, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn reference() -> Linkage {
        Linkage::new(0.5, 1.2, 1.0, 0.0, 0.0)
    }

    /// Newton iteration on the two circle equations, started on the
    /// requested side of the line B-D. Shares nothing with `coupler_joint`.
    fn newton_circle_intersection(b: Vec2, l3: f64, l4: f64, above: bool) -> Vec2 {
        let mid = (b + ROCKER_PIVOT) * 0.5;
        let n = (ROCKER_PIVOT - b).perp();
        let mut p = mid + n * if above { 1.0 } else { -1.0 };
        for _ in 0..200 {
            let f1 = (p - b).norm_squared() - l3 * l3;
            let f2 = (p - ROCKER_PIVOT).norm_squared() - l4 * l4;
            let (j11, j12) = (2.0 * (p.x - b.x), 2.0 * (p.y - b.y));
            let (j21, j22) = (2.0 * (p.x - 1.0), 2.0 * p.y);
            let det = j11 * j22 - j12 * j21;
            let dx = (f1 * j22 - f2 * j12) / det;
            let dy = (j11 * f2 - j21 * f1) / det;
            p = Vec2::new(p.x - dx, p.y - dy);
        }
        p
    }

    #[test]
    fn validity_examples() {
        assert!(is_valid_crank_rocker(&Linkage::new(0.5, 1.2, 1.0, 0.3, -0.2)));
        assert_eq!(
            crank_rocker_violation(&Linkage::new(0.95, 2.0, 0.05, 0.0, 0.0)),
            Some(Violation::CrankNotShortest)
        );
        assert_eq!(
            crank_rocker_violation(&Linkage::new(0.5, 1.5, 1.0, 0.0, 0.0)),
            Some(Violation::GrashofSum)
        );
        assert_eq!(
            crank_rocker_violation(&Linkage::new(0.0, 1.5, 1.0, 0.0, 0.0)),
            Some(Violation::NonPositiveLength)
        );
    }

    #[test]
    fn solve_at_zero_matches_closed_form() {
        let s = solve_position(&reference(), 0.0, Branch::Open).unwrap();
        assert_eq!(s.b, Vec2::new(0.5, 0.0));
        assert!((s.c.x - 1.19).abs() < 1e-12);
        assert!((s.c.y - 0.9639f64.sqrt()).abs() < 1e-12);
        assert!((s.c.y - 0.98178).abs() < 1e-5);
        assert_eq!(s.ee, s.b);
    }

    #[test]
    fn solve_matches_newton_oracle() {
        let linkage = reference();
        for (theta, branch) in [(0.0, Branch::Open), (PI, Branch::Open), (1.3, Branch::Crossed)] {
            let s = solve_position(&linkage, theta, branch).unwrap();
            let oracle = newton_circle_intersection(s.b, 1.2, 1.0, branch == Branch::Open);
            assert!(s.c.distance(oracle) < 1e-10, "theta={theta}: {:?} vs {:?}", s.c, oracle);
        }
        let s = solve_position(&linkage, PI, Branch::Open).unwrap();
        assert!((s.b.x + 0.5).abs() < 1e-15);
        // d = 1.5 -> along = (2.25 + 1.44 - 1) / 3
        assert!((s.c.x - (-0.5 + 2.69 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn open_branch_is_left_of_b_to_d() {
        let linkage = Linkage::new(0.3, 1.1, 0.9, 0.0, 0.0);
        for i in 0..36 {
            let theta = i as f64 * TAU / 36.0;
            let s = solve_position(&linkage, theta, Branch::Open).unwrap();
            assert!((ROCKER_PIVOT - s.b).cross(s.c - s.b) > 0.0);
            let s = solve_position(&linkage, theta, Branch::Crossed).unwrap();
            assert!((ROCKER_PIVOT - s.b).cross(s.c - s.b) < 0.0);
        }
    }

    #[test]
    fn unassemblable_lengths_report_no_assembly() {
        let short = Linkage::new(0.5, 0.1, 0.1, 0.0, 0.0);
        assert!(matches!(
            solve_position(&short, 0.0, Branch::Open),
            Err(Error::NoAssembly { .. })
        ));
    }

    #[test]
    fn end_effector_offset_is_in_coupler_frame() {
        let linkage = Linkage::new(0.5, 1.2, 1.0, 1.2, 0.0);
        let s = solve_position(&linkage, 0.7, Branch::Open).unwrap();
        assert!(s.ee.distance(s.c) < 1e-12);
        let linkage = Linkage::new(0.5, 1.2, 1.0, 0.0, 0.4);
        let s = solve_position(&linkage, 0.7, Branch::Open).unwrap();
        assert!(((s.ee - s.b).norm() - 0.4).abs() < 1e-12);
        assert!((s.c - s.b).cross(s.ee - s.b) > 0.0);
    }

    #[test]
    fn circle_case_sweep() {
        let path = sweep_path(&reference(), 360, Branch::Open).unwrap();
        assert_eq!(path.len(), 360);
        for p in &path.points {
            assert!((p.norm() - 0.5).abs() < 1e-12);
        }
        let first = solve_position(&reference(), 0.0, Branch::Open).unwrap();
        assert_eq!(path.points[0], first.ee);
    }

    #[test]
    fn offset_sweep_is_smooth() {
        let linkage = Linkage::new(0.5, 1.2, 1.0, 1.0, 0.3);
        let path = sweep_path(&linkage, 720, Branch::Open).unwrap();
        assert!(path.max_gap() < 0.1, "gap {}", path.max_gap());
    }

    #[test]
    fn too_few_steps_rejected() {
        assert!(matches!(
            sweep_path(&reference(), 7, Branch::Open),
            Err(Error::TooFewSteps { .. })
        ));
    }

    #[test]
    fn refinement_shrinks_joint_gaps() {
        let linkage = Linkage::new(0.4, 1.3, 1.1, 0.5, -0.4);
        let coarse = sweep_path(&linkage, 360, Branch::Open).unwrap();
        let fine = sweep_path(&linkage, 3600, Branch::Open).unwrap();
        assert!(max_cyclic_gap(&fine.joints) < 0.25 * max_cyclic_gap(&coarse.joints));
    }
}
