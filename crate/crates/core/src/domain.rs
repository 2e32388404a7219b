//! Bounded planar domains bounded by finitely many circles.
//!
//! Every supported domain is an outer disc with finitely many closed discs
//! removed (possibly after a Möbius change of variables), so its boundary is
//! a finite set of circles. Defining functions are kept per boundary
//! component: `|z - c| - r` for the outer circle and `r - |z - c|` for a
//! hole. The global defining function is their maximum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::automorphism::Automorphism;
use crate::error::{Error, Result};

/// Closed-form disc `D(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Complex64,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Self { center, radius }
    }
}

/// Declarative description of a domain, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Disc {
        center: Complex64,
        radius: f64,
    },
    /// `inner < |z| < outer`.
    Annulus {
        inner: f64,
        outer: f64,
    },
    DiscMinusDiscs {
        outer: Disc,
        holes: Vec<Disc>,
    },
    MoebiusImage {
        base: Box<DomainKind>,
        map: Automorphism,
    },
}

/// One boundary circle. `outer` is true when the domain lies inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCircle {
    pub center: Complex64,
    pub radius: f64,
    pub outer: bool,
}

impl BoundaryCircle {
    /// Signed-distance-like defining function of this component.
    pub fn rho(&self, z: Complex64) -> f64 {
        let d = (z - self.center).norm() - self.radius;
        if self.outer {
            d
        } else {
            -d
        }
    }

    pub fn point_at(&self, angle: f64) -> Complex64 {
        self.center + Complex64::from_polar(self.radius, angle)
    }

    pub fn angle_of(&self, z: Complex64) -> f64 {
        (z - self.center).arg()
    }

    /// Euclidean distance from `z` to the circle.
    pub fn distance(&self, z: Complex64) -> f64 {
        ((z - self.center).norm() - self.radius).abs()
    }
}

/// Choice of per-component defining function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DefiningForm {
    /// `|z - c| - r` (outer) / `r - |z - c|` (hole).
    #[default]
    Distance,
    /// `|z - c|² - r²` (outer) / `r² - |z - c|²` (hole); for the unit disc
    /// this is the ball function `|z|² - 1`.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainKind", into = "DomainKind")]
pub struct PlanarDomain {
    kind: DomainKind,
    circles: Vec<BoundaryCircle>,
}

impl TryFrom<DomainKind> for PlanarDomain {
    type Error = Error;

    fn try_from(kind: DomainKind) -> Result<Self> {
        let circles = circles_of(&kind)?;
        Ok(Self { kind, circles })
    }
}

impl From<PlanarDomain> for DomainKind {
    fn from(d: PlanarDomain) -> Self {
        d.kind
    }
}

fn circles_of(kind: &DomainKind) -> Result<Vec<BoundaryCircle>> {
    match kind {
        DomainKind::Disc { center, radius } => {
            if !(*radius > 0.0) || !radius.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "disc radius {radius} must be positive"
                )));
            }
            Ok(vec![BoundaryCircle {
                center: *center,
                radius: *radius,
                outer: true,
            }])
        }
        DomainKind::Annulus { inner, outer } => {
            if !(*inner > 0.0) || !(inner < outer) || !outer.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "annulus needs 0 < inner < outer, got inner={inner}, outer={outer}"
                )));
            }
            Ok(vec![
                BoundaryCircle {
                    center: Complex64::new(0.0, 0.0),
                    radius: *outer,
                    outer: true,
                },
                BoundaryCircle {
                    center: Complex64::new(0.0, 0.0),
                    radius: *inner,
                    outer: false,
                },
            ])
        }
        DomainKind::DiscMinusDiscs { outer, holes } => {
            if !(outer.radius > 0.0) {
                return Err(Error::InvalidDomain(
                    "outer disc radius must be positive".into(),
                ));
            }
            for (i, h) in holes.iter().enumerate() {
                if !(h.radius > 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "hole {i} has non-positive radius"
                    )));
                }
                if (h.center - outer.center).norm() + h.radius >= outer.radius {
                    return Err(Error::InvalidDomain(format!(
                        "hole {i} is not contained in the open outer disc"
                    )));
                }
                for (j, g) in holes.iter().enumerate().skip(i + 1) {
                    if (h.center - g.center).norm() <= h.radius + g.radius {
                        return Err(Error::InvalidDomain(format!("holes {i} and {j} intersect")));
                    }
                }
            }
            let mut circles = vec![BoundaryCircle {
                center: outer.center,
                radius: outer.radius,
                outer: true,
            }];
            circles.extend(holes.iter().map(|h| BoundaryCircle {
                center: h.center,
                radius: h.radius,
                outer: false,
            }));
            Ok(circles)
        }
        DomainKind::MoebiusImage { base, map } => {
            let base_circles = circles_of(base)?;
            let m = map.mobius()?;
            if let Some(pole) = m.pole() {
                let rho = base_circles
                    .iter()
                    .map(|c| c.rho(pole))
                    .fold(f64::NEG_INFINITY, f64::max);
                if rho <= 1e-12 {
                    return Err(Error::InvalidDomain(format!(
                        "map has a pole at {pole} inside the base domain closure"
                    )));
                }
            }
            let mut circles = Vec::with_capacity(base_circles.len());
            for c in &base_circles {
                let (center, radius, flips) =
                    m.image_circle(c.center, c.radius).ok_or_else(|| {
                        Error::InvalidDomain("map sends a boundary circle to a line".into())
                    })?;
                circles.push(BoundaryCircle {
                    center,
                    radius,
                    outer: c.outer != flips,
                });
            }
            if circles.iter().filter(|c| c.outer).count() != 1 {
                return Err(Error::InvalidDomain(
                    "image domain must have exactly one outer circle".into(),
                ));
            }
            // outer circle first
            circles.sort_by_key(|c| !c.outer);
            Ok(circles)
        }
    }
}

impl PlanarDomain {
    pub fn new(kind: DomainKind) -> Result<Self> {
        Self::try_from(kind)
    }

    pub fn disc(center: Complex64, radius: f64) -> Result<Self> {
        Self::new(DomainKind::Disc { center, radius })
    }

    pub fn unit_disc() -> Self {
        Self::disc(Complex64::new(0.0, 0.0), 1.0).expect("unit disc is valid")
    }

    pub fn annulus(inner: f64, outer: f64) -> Result<Self> {
        Self::new(DomainKind::Annulus { inner, outer })
    }

    pub fn disc_minus_discs(outer: Disc, holes: Vec<Disc>) -> Result<Self> {
        Self::new(DomainKind::DiscMinusDiscs { outer, holes })
    }

    pub fn moebius_image(base: &PlanarDomain, map: Automorphism) -> Result<Self> {
        Self::new(DomainKind::MoebiusImage {
            base: Box::new(base.kind.clone()),
            map,
        })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// Boundary circles, outer circle first.
    pub fn circles(&self) -> &[BoundaryCircle] {
        &self.circles
    }

    pub fn outer_circle(&self) -> &BoundaryCircle {
        &self.circles[0]
    }

    pub fn holes(&self) -> impl Iterator<Item = &BoundaryCircle> {
        self.circles.iter().filter(|c| !c.outer)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.outer_circle().radius
    }

    /// Per-component defining function values.
    pub fn component_values(&self, z: Complex64) -> impl Iterator<Item = f64> + '_ {
        self.circles.iter().map(move |c| c.rho(z))
    }

    /// `ρ(z)`: negative inside, zero on the boundary, positive outside.
    pub fn eval_defining(&self, z: Complex64) -> f64 {
        self.component_values(z).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval_defining_form(&self, z: Complex64, form: DefiningForm) -> f64 {
        match form {
            DefiningForm::Distance => self.eval_defining(z),
            DefiningForm::Squared => self
                .circles
                .iter()
                .map(|c| {
                    let d = (z - c.center).norm_sqr() - c.radius * c.radius;
                    if c.outer {
                        d
                    } else {
                        -d
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Index of the boundary component whose defining function is active at `z`.
    pub fn active_component(&self, z: Complex64) -> Result<usize> {
        let mut best = (0, f64::NEG_INFINITY);
        let mut second = (0, f64::NEG_INFINITY);
        for (i, v) in self.component_values(z).enumerate() {
            if v > best.1 {
                second = best;
                best = (i, v);
            } else if v > second.1 {
                second = (i, v);
            }
        }
        if self.circles.len() > 1 && (best.1 - second.1).abs() <= 1e-12 {
            return Err(Error::AmbiguousComponent(
                z,
                best.0.min(second.0),
                best.0.max(second.0),
            ));
        }
        Ok(best.0)
    }

    pub fn grad_defining(&self, z: Complex64) -> Result<[f64; 2]> {
        self.grad_defining_form(z, DefiningForm::Distance)
    }

    /// Analytic gradient of the active component's defining function.
    pub fn grad_defining_form(&self, z: Complex64, form: DefiningForm) -> Result<[f64; 2]> {
        let c = &self.circles[self.active_component(z)?];
        let v = z - c.center;
        let sign = if c.outer { 1.0 } else { -1.0 };
        match form {
            DefiningForm::Distance => {
                let r = v.norm();
                if r == 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "gradient undefined at the center {z}"
                    )));
                }
                Ok([sign * v.re / r, sign * v.im / r])
            }
            DefiningForm::Squared => Ok([sign * 2.0 * v.re, sign * 2.0 * v.im]),
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.eval_defining(z) < 0.0
    }

    pub fn in_closure(&self, z: Complex64, tol: f64) -> bool {
        self.eval_defining(z) <= tol
    }

    pub fn euclidean_boundary_distance(&self, z: Complex64) -> Result<f64> {
        let rho = self.eval_defining(z);
        if rho >= 0.0 {
            return Err(Error::OutsideDomain(z));
        }
        Ok(-rho)
    }

    /// Euclidean distance from any point to the boundary set.
    pub fn distance_to_boundary_set(&self, w: Complex64) -> f64 {
        self.circles
            .iter()
            .map(|c| c.distance(w))
            .fold(f64::INFINITY, f64::min)
    }

    /// `m` equally spaced points on each boundary circle, tagged by component.
    pub fn boundary_points(&self, m: usize) -> Vec<(usize, Complex64)> {
        let mut out = Vec::with_capacity(m * self.circles.len());
        for (i, c) in self.circles.iter().enumerate() {
            for k in 0..m {
                let t = std::f64::consts::TAU * k as f64 / m as f64;
                out.push((i, c.point_at(t)));
            }
        }
        out
    }

    pub fn bounding_box(&self) -> (Complex64, Complex64) {
        let c = self.outer_circle();
        let r = Complex64::new(c.radius, c.radius);
        (c.center - r, c.center + r)
    }

    /// Deepest point of a fixed 65×65 lattice, then refined by pattern search.
    pub fn deepest_point(&self) -> (Complex64, f64) {
        let spec = GridSpec::around(self, 65, 0.0);
        let mut best = (self.outer_circle().center, f64::NEG_INFINITY);
        for z in spec.nodes() {
            let d = -self.eval_defining(z);
            if d > best.1 {
                best = (z, d);
            }
        }
        let mut step = spec.cell_size();
        let dirs = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        while step > 1e-12 * self.diameter() {
            let mut moved = false;
            for d in dirs {
                let z = best.0 + d * step;
                let v = -self.eval_defining(z);
                if v > best.1 {
                    best = (z, v);
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best
    }

    /// Radius of the largest inscribed disc.
    pub fn inradius(&self) -> f64 {
        self.deepest_point().1
    }

    /// A deterministic interior point (the deepest lattice point).
    pub fn interior_point(&self) -> Complex64 {
        self.deepest_point().0
    }

    /// Grid nodes in row-major order with `ρ < 0` and boundary distance at
    /// least `margin`.
    pub fn sample_interior(&self, spec: &GridSpec, margin: f64) -> Result<Vec<Complex64>> {
        if !(margin >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "margin {margin} must be nonnegative"
            )));
        }
        let pts: Vec<Complex64> = spec
            .nodes()
            .filter(|&z| {
                let rho = self.eval_defining(z);
                rho < 0.0 && -rho >= margin
            })
            .collect();
        if pts.is_empty() {
            return Err(Error::EmptySample(margin));
        }
        Ok(pts)
    }
}

/// Rectangular lattice `lo + (i dx, j dy)`, `i < nx`, `j < ny`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Complex64,
    pub hi: Complex64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(lo: Complex64, hi: Complex64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidInput(format!(
                "grid resolution {nx}x{ny} is below 8"
            )));
        }
        if !(lo.re < hi.re && lo.im < hi.im) {
            return Err(Error::InvalidInput("grid corners are not ordered".into()));
        }
        Ok(Self { lo, hi, nx, ny })
    }

    /// Square grid of `n × n` nodes centered on the outer circle, padded by
    /// `pad` (fraction of the radius) plus two cells.
    pub fn around(domain: &PlanarDomain, n: usize, pad: f64) -> Self {
        let c = domain.outer_circle();
        let n = n.max(8);
        // two extra cells on each side so every boundary cell has exterior neighbours
        let half = c.radius * (1.0 + pad) * (n as f64 - 1.0) / (n as f64 - 5.0);
        let r = Complex64::new(half, half);
        Self {
            lo: c.center - r,
            hi: c.center + r,
            nx: n,
            ny: n,
        }
    }

    pub fn contains_domain(&self, domain: &PlanarDomain) -> bool {
        let (lo, hi) = domain.bounding_box();
        self.lo.re <= lo.re && self.lo.im <= lo.im && self.hi.re >= hi.re && self.hi.im >= hi.im
    }

    pub fn dx(&self) -> f64 {
        (self.hi.re - self.lo.re) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.hi.im - self.lo.im) / (self.ny - 1) as f64
    }

    pub fn cell_size(&self) -> f64 {
        self.dx().max(self.dy())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(
            self.lo.re + i as f64 * self.dx(),
            self.lo.im + j as f64 * self.dy(),
        )
    }

    pub fn node_at(&self, idx: usize) -> Complex64 {
        let (i, j) = self.ij(idx);
        self.node(i, j)
    }

    /// All nodes, row-major (x fastest).
    pub fn nodes(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.len()).map(move |k| self.node_at(k))
    }

    /// Cell containing `z` and the fractional offsets inside it.
    pub fn locate(&self, z: Complex64) -> Option<(usize, usize, f64, f64)> {
        let u = (z.re - self.lo.re) / self.dx();
        let v = (z.im - self.lo.im) / self.dy();
        if !(u >= 0.0 && v >= 0.0 && u <= (self.nx - 1) as f64 && v <= (self.ny - 1) as f64) {
            return None;
        }
        let i = (u.floor() as usize).min(self.nx - 2);
        let j = (v.floor() as usize).min(self.ny - 2);
        Some((i, j, u - i as f64, v - j as f64))
    }

    /// Index of the node nearest to `z`.
    pub fn nearest(&self, z: Complex64) -> Option<usize> {
        let u = ((z.re - self.lo.re) / self.dx()).round();
        let v = ((z.im - self.lo.im) / self.dy()).round();
        if u < 0.0 || v < 0.0 || u > (self.nx - 1) as f64 || v > (self.ny - 1) as f64 {
            return None;
        }
        Some(self.index(u as usize, v as usize))
    }

    /// Same box with `(n + 1) / 2` nodes per axis; every coarse node is a fine node
    /// when `n` is odd.
    pub fn coarsened(&self) -> Self {
        Self {
            nx: self.nx.div_ceil(2),
            ny: self.ny.div_ceil(2),
            ..*self
        }
    }
}
