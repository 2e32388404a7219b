//! Holomorphic automorphisms, compact automorphism groups and their Haar
//! quadrature.
//!
//! Every automorphism form handled here is a linear fractional map, so all
//! evaluation goes through a [`Mobius`] matrix. Composites apply their
//! members left to right.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{GridSpec, PlanarDomain};
use crate::error::{Error, Result};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `ζ ↦ (aζ + b)/(cζ + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Mobius {
    pub const IDENTITY: Mobius = Mobius {
        a: ONE,
        b: ZERO,
        c: ZERO,
        d: ONE,
    };

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { a, b, c, d }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    /// `α′(z) = (ad − bc)/(cz + d)²`.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let den = self.c * z + self.d;
        self.det() / (den * den)
    }

    /// `k`-th complex derivative, `k ≥ 1`:
    /// `(−1)^{k+1} k! c^{k−1} (ad − bc) / (cz + d)^{k+1}`.
    pub fn nth_derivative(&self, k: u32, z: Complex64) -> Complex64 {
        if k == 0 {
            return self.apply(z);
        }
        let factorial: f64 = (1..=k).map(f64::from).product();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let den = self.c * z + self.d;
        self.det() * self.c.powu(k - 1) * (sign * factorial) / den.powu(k + 1)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn after(&self, other: &Mobius) -> Mobius {
        Mobius {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn inverse(&self) -> Mobius {
        Mobius {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    /// Finite pole `−d/c`, if any.
    pub fn pole(&self) -> Option<Complex64> {
        if self.c == ZERO {
            None
        } else {
            Some(-self.d / self.c)
        }
    }

    /// Image of the circle `|z − center| = radius`. Returns the image center,
    /// radius, and whether the inside of the circle maps to the outside of the
    /// image (pole inside the circle). `None` if the image is a line.
    pub fn image_circle(&self, center: Complex64, radius: f64) -> Option<(Complex64, f64, bool)> {
        let q = self.c * center + self.d;
        let denom = q.norm_sqr() - self.c.norm_sqr() * radius * radius;
        let scale = q.norm_sqr() + self.c.norm_sqr() * radius * radius;
        if denom.abs() <= 1e-14 * scale {
            return None;
        }
        let num = (self.a * center + self.b) * q.conj() - self.a * self.c.conj() * radius * radius;
        let img_center = num / denom;
        let img_radius = radius * self.det().norm() / denom.abs();
        Some((img_center, img_radius, denom < 0.0))
    }
}

/// Holomorphic self-map in one of the supported closed forms.
///
/// JSON: `{"rotation": θ}`, `{"moebius": [a, b, c, d]}`, `{"inversion": k}`,
/// `{"composite": [...]}`, complex numbers as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Automorphism {
    Rotation(f64),
    Moebius([Complex64; 4]),
    /// `ζ ↦ k/ζ`.
    Inversion(f64),
    /// Members applied left to right.
    Composite(Vec<Automorphism>),
}

impl Automorphism {
    pub fn identity() -> Self {
        Automorphism::Rotation(0.0)
    }

    /// The disc automorphism `φ_a(ζ) = (ζ − a)/(1 − ā ζ)`.
    pub fn disc_mobius(a: Complex64) -> Self {
        Automorphism::Moebius([ONE, -a, -a.conj(), ONE])
    }

    /// `Φ ∘ self ∘ Φ⁻¹`.
    pub fn conjugated_by(&self, phi: &Automorphism) -> Self {
        Automorphism::Composite(vec![phi.inverse(), self.clone(), phi.clone()])
    }

    pub fn then(self, next: Automorphism) -> Self {
        Automorphism::Composite(vec![self, next])
    }

    /// Matrix form, validating `ad − bc ≠ 0`.
    pub fn mobius(&self) -> Result<Mobius> {
        let m = match self {
            Automorphism::Rotation(theta) => {
                Mobius::new(Complex64::from_polar(1.0, *theta), ZERO, ZERO, ONE)
            }
            Automorphism::Moebius([a, b, c, d]) => Mobius::new(*a, *b, *c, *d),
            Automorphism::Inversion(k) => {
                if *k == 0.0 || !k.is_finite() {
                    return Err(Error::InvalidAutomorphism(format!(
                        "inversion constant {k}"
                    )));
                }
                Mobius::new(ZERO, Complex64::new(*k, 0.0), ONE, ZERO)
            }
            Automorphism::Composite(parts) => {
                let mut m = Mobius::IDENTITY;
                for p in parts {
                    m = p.mobius()?.after(&m);
                }
                m
            }
        };
        let det = m.det();
        if !(det.norm() > 0.0) || !det.norm().is_finite() {
            return Err(Error::InvalidAutomorphism(format!(
                "degenerate map {self:?}"
            )));
        }
        Ok(m)
    }

    pub fn inverse(&self) -> Automorphism {
        match self {
            Automorphism::Rotation(theta) => Automorphism::Rotation(-theta),
            Automorphism::Inversion(k) => Automorphism::Inversion(*k),
            Automorphism::Moebius([a, b, c, d]) => Automorphism::Moebius([*d, -*b, -*c, *a]),
            Automorphism::Composite(parts) => {
                Automorphism::Composite(parts.iter().rev().map(Automorphism::inverse).collect())
            }
        }
    }

    pub fn apply(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.mobius()?.apply(z))
    }

    /// `α′(z)`; the real Jacobian is `[[Re α′, −Im α′], [Im α′, Re α′]]`.
    pub fn complex_derivative(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.mobius()?.derivative(z))
    }

    /// Checks that the map has no pole on the closure of `domain`.
    pub fn register(&self, domain: &PlanarDomain) -> Result<Mobius> {
        let m = self.mobius()?;
        if let Some(pole) = m.pole() {
            if domain.eval_defining(pole) <= 1e-12 {
                return Err(Error::InvalidAutomorphism(format!(
                    "pole {pole} lies in the closure of the domain"
                )));
            }
        }
        Ok(m)
    }
}

/// Largest distance from an image of a boundary sample to the boundary set,
/// over `m` samples per component. Infinite if a fixed interior point is not
/// mapped into the domain.
pub fn self_map_residual(aut: &Automorphism, domain: &PlanarDomain, m: usize) -> f64 {
    let Ok(map) = aut.mobius() else {
        return f64::INFINITY;
    };
    mobius_self_map_residual(&map, domain, m)
}

pub(crate) fn mobius_self_map_residual(map: &Mobius, domain: &PlanarDomain, m: usize) -> f64 {
    let m = m.max(16);
    let mut worst: f64 = 0.0;
    for (_, z) in domain.boundary_points(m) {
        let w = map.apply(z);
        let r = domain.distance_to_boundary_set(w);
        worst = worst.max(if r.is_finite() { r } else { f64::INFINITY });
    }
    if !domain.contains(map.apply(domain.interior_point())) {
        return f64::INFINITY;
    }
    worst
}

/// Residual threshold for admitting an element into a group.
pub const SELF_MAP_TOL: f64 = 1e-9;

/// How the group is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStructure {
    Finite {
        elements: Vec<Automorphism>,
    },
    /// Rotations `θ ↦ Rotation(θ)` conjugated by `Φ`: `Φ ∘ R_θ ∘ Φ⁻¹`.
    Circle {
        #[serde(default)]
        conjugator: Option<Automorphism>,
    },
    /// Circle group plus the coset of `ζ ↦ k/ζ` (before conjugation).
    CircleWithInversion {
        inversion: f64,
        #[serde(default)]
        conjugator: Option<Automorphism>,
    },
}

/// One quadrature node of the Haar measure.
#[derive(Debug, Clone)]
pub struct HaarNode {
    pub aut: Automorphism,
    pub map: Mobius,
    pub weight: f64,
}

/// Compact group of automorphisms of a planar domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactGroup {
    structure: GroupStructure,
    domain: PlanarDomain,
}

impl CompactGroup {
    /// Validates self-map residuals and, for finite groups, closure.
    pub fn new(structure: GroupStructure, domain: PlanarDomain) -> Result<Self> {
        let group = Self { structure, domain };
        group.validate()?;
        Ok(group)
    }

    pub fn trivial(domain: PlanarDomain) -> Self {
        Self {
            structure: GroupStructure::Finite {
                elements: vec![Automorphism::identity()],
            },
            domain,
        }
    }

    /// Cyclic group of `k` rotations about the origin.
    pub fn rotations(k: usize, domain: PlanarDomain) -> Result<Self> {
        let elements = (0..k)
            .map(|j| Automorphism::Rotation(TAU * j as f64 / k as f64))
            .collect();
        Self::new(GroupStructure::Finite { elements }, domain)
    }

    pub fn circle(domain: PlanarDomain) -> Result<Self> {
        Self::new(GroupStructure::Circle { conjugator: None }, domain)
    }

    pub fn circle_with_inversion(inversion: f64, domain: PlanarDomain) -> Result<Self> {
        Self::new(
            GroupStructure::CircleWithInversion {
                inversion,
                conjugator: None,
            },
            domain,
        )
    }

    pub fn structure(&self) -> &GroupStructure {
        &self.structure
    }

    pub fn domain(&self) -> &PlanarDomain {
        &self.domain
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.structure, GroupStructure::Finite { .. })
    }

    fn validate(&self) -> Result<()> {
        let probe: Vec<Automorphism> = match &self.structure {
            GroupStructure::Finite { elements } => {
                if elements.is_empty() {
                    return Err(Error::InvalidGroup("finite group with no elements".into()));
                }
                elements.clone()
            }
            // a few generic angles; exact rotations are checked by construction
            _ => self.haar_nodes(7).into_iter().map(|n| n.aut).collect(),
        };
        for aut in &probe {
            aut.register(&self.domain)?;
            let r = self_map_residual(aut, &self.domain, 64);
            if !(r < SELF_MAP_TOL) {
                return Err(Error::InvalidGroup(format!(
                    "{aut:?} does not map the domain onto itself (residual {r:e})"
                )));
            }
        }
        if let GroupStructure::Finite { elements } = &self.structure {
            self.check_closure(elements)?;
        }
        Ok(())
    }

    fn check_closure(&self, elements: &[Automorphism]) -> Result<()> {
        let samples = closure_samples(&self.domain);
        let maps: Vec<Mobius> = elements.iter().map(|e| e.mobius()).collect::<Result<_>>()?;
        for (i, a) in maps.iter().enumerate() {
            for (j, b) in maps.iter().enumerate() {
                let ab = b.after(a);
                let found = maps.iter().any(|c| {
                    samples
                        .iter()
                        .all(|&z| (ab.apply(z) - c.apply(z)).norm() < 1e-10)
                });
                if !found {
                    return Err(Error::InvalidGroup(format!(
                        "composition of elements {i} and {j} is not in the group"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Haar quadrature: finite groups use every element with weight `1/|G|`;
    /// circle groups use `n` equally spaced rotations (trapezoid rule), and
    /// the inversion coset doubles that to `2n`.
    pub fn haar_nodes(&self, n: usize) -> Vec<HaarNode> {
        let n = n.max(1);
        let auts: Vec<Automorphism> = match &self.structure {
            GroupStructure::Finite { elements } => elements.clone(),
            GroupStructure::Circle { conjugator } => (0..n)
                .map(|k| {
                    conjugate(
                        Automorphism::Rotation(TAU * k as f64 / n as f64),
                        conjugator,
                    )
                })
                .collect(),
            GroupStructure::CircleWithInversion {
                inversion,
                conjugator,
            } => {
                let rot = (0..n).map(|k| Automorphism::Rotation(TAU * k as f64 / n as f64));
                let inv = (0..n).map(|k| {
                    Automorphism::Rotation(TAU * k as f64 / n as f64)
                        .then(Automorphism::Inversion(*inversion))
                });
                rot.chain(inv).map(|a| conjugate(a, conjugator)).collect()
            }
        };
        let weight = 1.0 / auts.len() as f64;
        auts.into_iter()
            .map(|aut| {
                let map = aut
                    .mobius()
                    .expect("group elements are validated at construction");
                HaarNode { aut, map, weight }
            })
            .collect()
    }

    /// Group elements on a parameter grid of `n` angles (all elements for
    /// finite groups), used for scans rather than integration.
    pub fn scan_elements(&self, n: usize) -> Vec<HaarNode> {
        self.haar_nodes(n)
    }

    /// `{Φ ∘ α ∘ Φ⁻¹}` acting on `Φ(domain)`.
    pub fn conjugate_group(&self, phi: &Automorphism) -> Result<CompactGroup> {
        phi.register(&self.domain)?;
        let image = PlanarDomain::moebius_image(&self.domain, phi.clone()).map_err(|e| {
            Error::InvalidAutomorphism(format!("conjugator is not admissible: {e}"))
        })?;
        let compose = |old: &Option<Automorphism>| match old {
            None => Some(phi.clone()),
            Some(c) => Some(c.clone().then(phi.clone())),
        };
        let structure = match &self.structure {
            GroupStructure::Finite { elements } => GroupStructure::Finite {
                elements: elements.iter().map(|a| a.conjugated_by(phi)).collect(),
            },
            GroupStructure::Circle { conjugator } => GroupStructure::Circle {
                conjugator: compose(conjugator),
            },
            GroupStructure::CircleWithInversion {
                inversion,
                conjugator,
            } => GroupStructure::CircleWithInversion {
                inversion: *inversion,
                conjugator: compose(conjugator),
            },
        };
        CompactGroup::new(structure, image)
    }
}

fn conjugate(aut: Automorphism, conjugator: &Option<Automorphism>) -> Automorphism {
    match conjugator {
        None => aut,
        Some(phi) => aut.conjugated_by(phi),
    }
}

/// 32 deterministic interior points spread over the domain.
pub(crate) fn closure_samples(domain: &PlanarDomain) -> Vec<Complex64> {
    let spec = GridSpec::around(domain, 33, 0.0);
    let pts: Vec<Complex64> = spec
        .nodes()
        .filter(|&z| domain.eval_defining(z) < 0.0)
        .collect();
    let stride = (pts.len() / 32).max(1);
    pts.into_iter().step_by(stride).take(32).collect()
}

/// The disc sequence `φ_j(ζ) = (ζ + (1 − 1/j))/(1 + (1 − 1/j)ζ)`, which
/// pushes `0` to the boundary point `1` as `j → ∞`.
pub fn noncompact_disc_sequence(j: u32) -> Automorphism {
    let t = Complex64::new(1.0 - 1.0 / f64::from(j), 0.0);
    Automorphism::Moebius([ONE, t, t, ONE])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Disc;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn half_shift() -> Automorphism {
        Automorphism::Moebius([c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(1.0, 0.0)])
    }

    #[test]
    fn apply_examples() {
        assert_eq!(
            noncompact_disc_sequence(10).apply(c(0.0, 0.0)).unwrap(),
            c(0.9, 0.0)
        );
        let r = Automorphism::Rotation(PI / 2.0).apply(c(1.0, 0.0)).unwrap();
        assert!((r - c(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(
            Automorphism::Inversion(2.0).apply(c(1.0, 0.0)).unwrap(),
            c(2.0, 0.0)
        );
    }

    #[test]
    fn derivative_examples() {
        let theta = 0.7;
        let d = Automorphism::Rotation(theta)
            .complex_derivative(c(0.3, 0.2))
            .unwrap();
        assert!((d - Complex64::from_polar(1.0, theta)).norm() < 1e-15);
        assert_eq!(
            Automorphism::Inversion(2.0)
                .complex_derivative(c(1.0, 0.0))
                .unwrap(),
            c(-2.0, 0.0)
        );
        assert_eq!(
            Automorphism::identity()
                .complex_derivative(c(0.4, 0.1))
                .unwrap(),
            c(1.0, 0.0)
        );
    }

    #[test]
    fn composite_applies_left_to_right() {
        let comp = Automorphism::Composite(vec![
            Automorphism::Inversion(2.0),
            Automorphism::Rotation(PI),
        ]);
        let z = c(1.0, 1.0);
        let expected = -(c(2.0, 0.0) / z);
        assert!((comp.apply(z).unwrap() - expected).norm() < 1e-14);
        // chain rule through the matrix product
        let d = comp.complex_derivative(z).unwrap();
        let expected_d = -(-c(2.0, 0.0) / (z * z));
        assert!((d - expected_d).norm() < 1e-14);
    }

    #[test]
    fn nth_derivative_matches_finite_differences() {
        let m = half_shift().mobius().unwrap();
        let z = c(0.3, -0.2);
        let h = 1e-4;
        let fd2 = (m.derivative(z + h) - m.derivative(z - h)) / (2.0 * h);
        assert!((m.nth_derivative(2, z) - fd2).norm() < 1e-7);
        let fd3 = (m.nth_derivative(2, z + h) - m.nth_derivative(2, z - h)) / (2.0 * h);
        assert!((m.nth_derivative(3, z) - fd3).norm() < 1e-6);
    }

    #[test]
    fn haar_node_counts_and_weights() {
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let four = CompactGroup::rotations(4, annulus.clone()).unwrap();
        let nodes = four.haar_nodes(99);
        assert_eq!(nodes.len(), 4);
        assert!(nodes.iter().all(|n| n.weight == 0.25));

        let circle = CompactGroup::circle(annulus.clone()).unwrap();
        let nodes = circle.haar_nodes(8);
        assert_eq!(nodes.len(), 8);
        for (k, n) in nodes.iter().enumerate() {
            assert_eq!(n.aut, Automorphism::Rotation(TAU * k as f64 / 8.0));
            assert_eq!(n.weight, 1.0 / 8.0);
        }

        let full = CompactGroup::circle_with_inversion(2.0, annulus).unwrap();
        let nodes = full.haar_nodes(16);
        assert_eq!(nodes.len(), 32);
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(nodes.iter().all(|n| n.weight == 1.0 / 32.0));
    }

    #[test]
    fn self_map_residuals() {
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        assert!(self_map_residual(&Automorphism::Rotation(0.37), &annulus, 64) < 1e-14);
        assert!(self_map_residual(&Automorphism::Inversion(2.0), &annulus, 64) < 1e-14);
        let rigid = PlanarDomain::disc_minus_discs(
            Disc::new(c(0.0, 0.0), 1.0),
            vec![
                Disc::new(c(0.5, 0.0), 0.1),
                Disc::new(c(0.0, 0.5), 0.05),
                Disc::new(c(-0.5, 0.0), 1.0 / 30.0),
            ],
        )
        .unwrap();
        assert!(self_map_residual(&Automorphism::Rotation(0.1), &rigid, 64) > 1e-3);
    }

    #[test]
    fn rejects_non_automorphisms() {
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let bad = GroupStructure::Finite {
            elements: vec![Automorphism::identity(), Automorphism::Rotation(0.1)],
        };
        assert!(matches!(
            CompactGroup::new(bad, annulus.clone()),
            Err(Error::InvalidGroup(_))
        ));
        // a pole inside the closure is rejected at registration
        let pole = Automorphism::Moebius([c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.5, 0.0)]);
        assert!(matches!(
            pole.register(&annulus),
            Err(Error::InvalidAutomorphism(_))
        ));
        // not closed: {id, R_{π/2}} without R_π
        let open = GroupStructure::Finite {
            elements: vec![Automorphism::identity(), Automorphism::Rotation(PI / 2.0)],
        };
        assert!(matches!(
            CompactGroup::new(open, annulus),
            Err(Error::InvalidGroup(_))
        ));
    }

    #[test]
    fn finite_group_is_closed_pointwise() {
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let g = CompactGroup::rotations(4, annulus.clone()).unwrap();
        let nodes = g.haar_nodes(1);
        let samples = closure_samples(&annulus);
        assert_eq!(samples.len(), 32);
        for a in &nodes {
            for b in &nodes {
                let ab = b.map.after(&a.map);
                assert!(nodes.iter().any(|c| samples
                    .iter()
                    .all(|&z| (ab.apply(z) - c.map.apply(z)).norm() < 1e-10)));
            }
        }
    }

    #[test]
    fn conjugation_examples() {
        let base = PlanarDomain::annulus(0.25, 1.0).unwrap();
        let g = CompactGroup::circle(base.clone()).unwrap();
        let same = g.conjugate_group(&Automorphism::identity()).unwrap();
        for (a, b) in g.haar_nodes(8).iter().zip(same.haar_nodes(8)) {
            for z in [c(0.5, 0.0), c(0.1, 0.6)] {
                assert!((a.map.apply(z) - b.map.apply(z)).norm() < 1e-14);
            }
        }

        let conj = g.conjugate_group(&half_shift()).unwrap();
        let hole = conj.domain().holes().next().unwrap();
        assert!((hole.center - c(10.0 / 21.0, 0.0)).norm() < 1e-14);
        let phi = half_shift().mobius().unwrap();
        let p = c(0.5, 0.2);
        for (base_node, node) in g.haar_nodes(8).iter().zip(conj.haar_nodes(8)) {
            assert_eq!(node.weight, base_node.weight);
            let lhs = node.map.apply(phi.apply(p));
            let rhs = phi.apply(base_node.map.apply(p));
            assert!((lhs - rhs).norm() < 1e-13);
            assert!(self_map_residual(&node.aut, conj.domain(), 64) < 1e-12);
        }
    }

    #[test]
    fn noncompact_sequence_approaches_boundary() {
        let disc = PlanarDomain::unit_disc();
        for j in [2u32, 10, 100] {
            let p = noncompact_disc_sequence(j).apply(c(0.0, 0.0)).unwrap();
            assert_eq!(p.re, 1.0 - 1.0 / f64::from(j));
            let d = disc.euclidean_boundary_distance(p).unwrap();
            assert!((d - 1.0 / f64::from(j)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn inverse_undoes_map(re in -0.6f64..0.6, im in -0.6f64..0.6, theta in 0.0f64..6.2,
                              zr in -0.9f64..0.9, zi in -0.9f64..0.9) {
            let a = c(re, im);
            let z = c(zr, zi);
            prop_assume!(z.norm() < 0.95);
            let aut = Automorphism::disc_mobius(a).then(Automorphism::Rotation(theta));
            let w = aut.apply(z).unwrap();
            prop_assert!(w.norm() < 1.0);
            let back = aut.inverse().apply(w).unwrap();
            prop_assert!((back - z).norm() < 1e-10);
        }
    }
}
