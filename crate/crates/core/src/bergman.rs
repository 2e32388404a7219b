//! Bergman kernels, the Bergman metric and kernel-derived coordinates.
//!
//! Kernels are holomorphic in the first argument and antiholomorphic in the
//! second: `K(z, w) = Σ φ_k(z) conj(φ_k(w))` for an orthonormal basis `φ_k`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::automorphism::{Automorphism, CompactGroup};
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::metric::{MetricField, Provenance};
use crate::output::{fmt_f64, write_csv};
use crate::quadrature::{graded_gauss_legendre, smoothstep_gauss_legendre};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Bergman kernel evaluator.
#[derive(Clone, Debug)]
pub enum KernelModel {
    /// Unit disc, `1/(π(1 − z w̄)²)`.
    DiscClosed,
    /// Unit ball in `Cⁿ`, `n!/πⁿ (1 − ⟨z, w⟩)^{−(n+1)}`.
    BallClosed { n: usize },
    /// Laurent series on `inner < |z| < outer`, terms `|m| ≤ truncation`.
    AnnulusSeries {
        inner: f64,
        outer: f64,
        truncation: usize,
    },
    /// Gram orthonormalization of a finite basis by quadrature.
    NumericBasis(Arc<NumericBasis>),
}

/// Default number of Laurent terms on each side for [`KernelModel::AnnulusSeries`].
pub const DEFAULT_TRUNCATION: usize = 60;

impl KernelModel {
    pub fn annulus(inner: f64, outer: f64) -> Result<Self> {
        Self::annulus_truncated(inner, outer, DEFAULT_TRUNCATION)
    }

    pub fn annulus_truncated(inner: f64, outer: f64, truncation: usize) -> Result<Self> {
        if !(inner > 0.0 && inner < outer && outer.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "annulus series needs 0 < {inner} < {outer}"
            )));
        }
        Ok(KernelModel::AnnulusSeries {
            inner,
            outer,
            truncation,
        })
    }

    pub fn numeric(domain: &PlanarDomain, spec: BasisSpec) -> Result<Self> {
        Ok(KernelModel::NumericBasis(Arc::new(NumericBasis::new(
            domain, spec,
        )?)))
    }

    pub fn name(&self) -> String {
        match self {
            KernelModel::DiscClosed => "disc_closed".into(),
            KernelModel::BallClosed { n } => format!("ball_closed(n={n})"),
            KernelModel::AnnulusSeries {
                inner,
                outer,
                truncation,
            } => {
                format!("annulus_series({inner},{outer},N={truncation})")
            }
            KernelModel::NumericBasis(b) => format!("numeric_basis({} functions)", b.len()),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            KernelModel::BallClosed { n } => *n,
            _ => 1,
        }
    }

    /// `K(z, w)` for points of `Cⁿ`.
    pub fn kernel(&self, z: &[Complex64], w: &[Complex64]) -> Result<Complex64> {
        let n = self.dimension();
        if z.len() != n || w.len() != n {
            return Err(Error::InvalidInput(format!(
                "kernel of dimension {n} evaluated at points of dimension {} and {}",
                z.len(),
                w.len()
            )));
        }
        match self {
            KernelModel::BallClosed { n } => {
                let dot: Complex64 = z.iter().zip(w).map(|(a, b)| a * b.conj()).sum();
                let factorial: f64 = (1..=*n).map(|k| k as f64).product();
                Ok(factorial
                    / PI.powi(*n as i32)
                    / (Complex64::new(1.0, 0.0) - dot).powi(*n as i32 + 1))
            }
            _ => Ok(self.kernel1(z[0], w[0])),
        }
    }

    /// Planar kernel `K(z, w)`.
    pub fn kernel1(&self, z: Complex64, w: Complex64) -> Complex64 {
        match self {
            KernelModel::DiscClosed | KernelModel::BallClosed { .. } => {
                let s = Complex64::new(1.0, 0.0) - z * w.conj();
                1.0 / (PI * s * s)
            }
            KernelModel::AnnulusSeries {
                inner,
                outer,
                truncation,
            } => annulus_terms(*inner, *outer, *truncation, z * w.conj()).0,
            KernelModel::NumericBasis(b) => b.kernel(z, w),
        }
    }

    /// Bound on the neglected series tail at `(z, w)`; zero for closed forms.
    pub fn truncation_tail(&self, z: Complex64, w: Complex64) -> f64 {
        match self {
            KernelModel::AnnulusSeries {
                inner,
                outer,
                truncation,
            } => annulus_terms(*inner, *outer, *truncation, z * w.conj()).1,
            _ => 0.0,
        }
    }

    /// Conformal factor `B(z) = ∂²/∂z∂z̄ log K(z, z)`.
    pub fn metric_factor(&self, z: Complex64) -> Result<f64> {
        let b = match self {
            KernelModel::DiscClosed => {
                let s = 1.0 - z.norm_sqr();
                2.0 / (s * s)
            }
            KernelModel::BallClosed { n } => {
                if *n != 1 {
                    return Err(Error::InvalidInput(
                        "the Bergman metric field is planar only".into(),
                    ));
                }
                let s = 1.0 - z.norm_sqr();
                2.0 / (s * s)
            }
            KernelModel::AnnulusSeries {
                inner,
                outer,
                truncation,
            } => annulus_metric_factor(*inner, *outer, *truncation, z.norm_sqr()),
            KernelModel::NumericBasis(b) => b.metric_factor(z),
        };
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::NumericalBreakdown {
                at: z,
                detail: format!("Bergman metric factor {b:e} is not positive"),
            });
        }
        Ok(b)
    }
}

/// Laurent coefficient `1/ν_m` of the annulus kernel, scaled as
/// `c_m = (1/ν_m)` with `ν_m = π(R^{2m+2} − r^{2m+2})/(m+1)`, `ν_{−1} = 2π ln(R/r)`.
/// Returned as a function of `t` to avoid overflow: the term `t^m/ν_m`.
fn annulus_term(inner: f64, outer: f64, m: i64, t: Complex64) -> Complex64 {
    let (r2, big2) = (inner * inner, outer * outer);
    if m == -1 {
        return 1.0 / (t * TAU * (outer / inner).ln());
    }
    if m >= 0 {
        let k = m as i32;
        let ratio = (r2 / big2).powi(k + 1);
        // t^m / (π R^{2m+2}(1 − (r/R)^{2m+2})/(m+1))
        (t / big2).powi(k) * ((m + 1) as f64 / (PI * big2 * (1.0 - ratio)))
    } else {
        let k = (-m) as i32;
        let ratio = (r2 / big2).powi(k - 1);
        // ν_{−k} = π r^{2−2k}(1 − (r/R)^{2k−2})/(k − 1)
        (r2 / t).powi(k) * ((k - 1) as f64 / (PI * r2 * (1.0 - ratio)))
    }
}

fn annulus_terms(inner: f64, outer: f64, truncation: usize, t: Complex64) -> (Complex64, f64) {
    let n = truncation as i64;
    let terms: Vec<Complex64> = (-n..=n).map(|m| annulus_term(inner, outer, m, t)).collect();
    let sum = pairwise_sum_c(&terms);
    let qp = t.norm() / (outer * outer);
    let qm = inner * inner / t.norm();
    let geometric = |q: f64| {
        if q < 1.0 {
            q / (1.0 - q)
        } else {
            f64::INFINITY
        }
    };
    let tail =
        terms[terms.len() - 1].norm() * geometric(qp) * 1.1 + terms[0].norm() * geometric(qm) * 1.1;
    (sum, tail)
}

fn pairwise_sum_c(terms: &[Complex64]) -> Complex64 {
    match terms.len() {
        0 => ZERO,
        1 => terms[0],
        n => {
            let (a, b) = terms.split_at(n / 2);
            pairwise_sum_c(a) + pairwise_sum_c(b)
        }
    }
}

/// `B = f′(t) + t f″(t)` for `f = log S(t)`, `S(t) = Σ c_m t^m`, written as
/// the variance `(A₂/A₀ − (A₁/A₀)²)/t` with `A_k = Σ m^k c_m t^m`.
fn annulus_metric_factor(inner: f64, outer: f64, truncation: usize, t: f64) -> f64 {
    let n = truncation as i64;
    let tc = Complex64::new(t, 0.0);
    let mut a0 = Vec::with_capacity(2 * truncation + 1);
    let mut a1 = Vec::with_capacity(2 * truncation + 1);
    let mut a2 = Vec::with_capacity(2 * truncation + 1);
    for m in -n..=n {
        let v = annulus_term(inner, outer, m, tc).re;
        let mf = m as f64;
        a0.push(v);
        a1.push(mf * v);
        a2.push(mf * mf * v);
    }
    use crate::sym2::pairwise_sum_f64 as sum;
    let (s0, s1, s2) = (sum(&a0), sum(&a1), sum(&a2));
    let mean = s1 / s0;
    (s2 / s0 - mean * mean) / t
}

/// Size and quadrature parameters of a [`NumericBasis`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BasisSpec {
    /// Highest power of `(z − o)/s`, with `o`, `s` the outer center and radius.
    pub outer_degree: usize,
    /// Highest power of `r/(z − c)` for each hole `D(c, r)`.
    pub hole_degree: usize,
    /// Trapezoid nodes in angle (rays from the single hole or the outer center).
    pub angular_nodes: usize,
    /// Gauss–Legendre nodes per angular panel when several holes are present.
    pub panel_nodes: usize,
    /// Gauss–Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// Radial panels are halved this many times toward each end of a segment.
    pub radial_levels: usize,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            outer_degree: 40,
            hole_degree: 12,
            angular_nodes: 256,
            panel_nodes: 64,
            radial_nodes: 16,
            radial_levels: 5,
        }
    }
}

/// Bergman kernel of a circle domain from a monomial/Laurent basis
/// orthonormalized by quadrature: `K(z, w) = a(z)ᵀ G⁻¹ conj(a(w))`.
pub struct NumericBasis {
    spec: BasisSpec,
    center: Complex64,
    scale: f64,
    holes: Vec<(Complex64, f64)>,
    /// Jacobi scaling `1/√G_ii` applied to the raw basis.
    jacobi: Vec<f64>,
    gram_inverse: DMatrix<Complex64>,
    nodes: usize,
}

impl fmt::Debug for NumericBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericBasis")
            .field("spec", &self.spec)
            .field("functions", &self.len())
            .field("quadrature_nodes", &self.nodes)
            .finish()
    }
}

impl NumericBasis {
    pub fn new(domain: &PlanarDomain, spec: BasisSpec) -> Result<Self> {
        let outer = domain.outer_circle();
        let holes: Vec<(Complex64, f64)> = domain.holes().map(|h| (h.center, h.radius)).collect();
        let mut basis = Self {
            spec,
            center: outer.center,
            scale: outer.radius,
            holes,
            jacobi: Vec::new(),
            gram_inverse: DMatrix::zeros(0, 0),
            nodes: 0,
        };
        let n = basis.len();
        basis.jacobi = vec![1.0; n];
        let rule = quadrature(domain, &spec);
        basis.nodes = rule.len();

        // Hermitian Gram matrix G_ij = Σ_q w_q conj(φ_i(z_q)) φ_j(z_q), upper triangle
        let mut gram = vec![ZERO; n * n];
        let mut v = vec![ZERO; n];
        for &(z, w) in &rule {
            basis.raw_values(z, &mut v);
            let sw = w.sqrt();
            for x in v.iter_mut() {
                *x *= sw;
            }
            for i in 0..n {
                let ci = v[i].conj();
                let row = &mut gram[i * n..(i + 1) * n];
                for j in i..n {
                    row[j] += ci * v[j];
                }
            }
        }
        let jacobi: Vec<f64> = (0..n).map(|i| 1.0 / gram[i * n + i].re.sqrt()).collect();
        if jacobi.iter().any(|s| !s.is_finite()) {
            return Err(Error::NumericalBreakdown {
                at: outer.center,
                detail: "a basis function has zero norm on the quadrature".into(),
            });
        }
        let g = DMatrix::from_fn(n, n, |i, j| {
            let v = if i <= j {
                gram[i * n + j]
            } else {
                gram[j * n + i].conj()
            };
            v * jacobi[i] * jacobi[j]
        });
        let inverse = match g.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => pseudo_inverse(g, outer.center)?,
        };
        let adjoint = inverse.adjoint();
        basis.gram_inverse = (inverse + adjoint) * Complex64::new(0.5, 0.0);
        basis.jacobi = jacobi;
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.spec.outer_degree + 1 + self.holes.len() * self.spec.hole_degree
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.nodes
    }

    fn raw_values(&self, z: Complex64, out: &mut [Complex64]) {
        let u = (z - self.center) / self.scale;
        let mut p = Complex64::new(1.0, 0.0);
        let mut k = 0;
        for _ in 0..=self.spec.outer_degree {
            out[k] = p;
            p *= u;
            k += 1;
        }
        for &(c, r) in &self.holes {
            let t = r / (z - c);
            let mut p = t;
            for _ in 0..self.spec.hole_degree {
                out[k] = p;
                p *= t;
                k += 1;
            }
        }
    }

    /// Scaled basis values `a(z)` and derivatives `a′(z)`.
    fn values_and_derivatives(&self, z: Complex64) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.len();
        let mut v = vec![ZERO; n];
        let mut d = vec![ZERO; n];
        let u = (z - self.center) / self.scale;
        let mut p = Complex64::new(1.0, 0.0);
        let mut prev = ZERO;
        let mut k = 0;
        for j in 0..=self.spec.outer_degree {
            v[k] = p;
            d[k] = prev * (j as f64) / self.scale;
            prev = p;
            p *= u;
            k += 1;
        }
        for &(c, r) in &self.holes {
            let t = r / (z - c);
            let mut p = t;
            for j in 1..=self.spec.hole_degree {
                let next = p * t;
                v[k] = p;
                // d/dz t^j = −j t^{j+1}/r
                d[k] = -next * (j as f64) / r;
                p = next;
                k += 1;
            }
        }
        for i in 0..n {
            v[i] *= self.jacobi[i];
            d[i] *= self.jacobi[i];
        }
        (v, d)
    }

    fn values(&self, z: Complex64) -> Vec<Complex64> {
        let mut v = vec![ZERO; self.len()];
        self.raw_values(z, &mut v);
        for (x, s) in v.iter_mut().zip(&self.jacobi) {
            *x *= *s;
        }
        v
    }

    /// `G⁻¹ conj(x)`.
    fn solve_conj(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                x.iter()
                    .enumerate()
                    .map(|(j, xj)| self.gram_inverse[(i, j)] * xj.conj())
                    .sum()
            })
            .collect()
    }

    fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn kernel(&self, z: Complex64, w: Complex64) -> Complex64 {
        let u = self.solve_conj(&self.values(w));
        Self::dot(&self.values(z), &u)
    }

    /// `(K K_{zz̄} − |K_z|²)/K²` with all three from the Gram form.
    pub fn metric_factor(&self, z: Complex64) -> f64 {
        let (v, d) = self.values_and_derivatives(z);
        let u = self.solve_conj(&v);
        let ud = self.solve_conj(&d);
        let k = Self::dot(&v, &u).re;
        let kz = Self::dot(&d, &u);
        let kzz = Self::dot(&d, &ud).re;
        (k * kzz - kz.norm_sqr()) / (k * k)
    }
}

fn pseudo_inverse(g: DMatrix<Complex64>, at: Complex64) -> Result<DMatrix<Complex64>> {
    let n = g.nrows();
    let eig = g.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if !(max > 0.0) {
        return Err(Error::NumericalBreakdown {
            at,
            detail: "Gram matrix vanishes".into(),
        });
    }
    let cutoff = 1e-13 * max;
    let q = &eig.eigenvectors;
    let mut inv = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        if lambda <= cutoff {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] += q[(i, k)] * q[(j, k)].conj() / lambda;
            }
        }
    }
    Ok(inv)
}

/// Area quadrature `(z_q, w_q)` over a circle domain.
///
/// One hole: rays from the hole center (the domain is star-shaped about it),
/// trapezoid in angle. Otherwise rays from the outer center, angular panels
/// split where rays become tangent to a hole, Gauss–Legendre in angle with a
/// smoothstep substitution to absorb the square-root behaviour at tangency.
/// Radially, graded Gauss–Legendre on every ray segment inside the domain.
pub fn quadrature(domain: &PlanarDomain, spec: &BasisSpec) -> Vec<(Complex64, f64)> {
    let outer = *domain.outer_circle();
    let holes: Vec<_> = domain.holes().copied().collect();
    let radial =
        |a: f64, b: f64| graded_gauss_legendre(spec.radial_nodes, a, b, spec.radial_levels);
    let mut rule = Vec::new();
    if holes.len() == 1 {
        let h = holes[0];
        let d = h.center - outer.center;
        let m = spec.angular_nodes.max(8);
        for k in 0..m {
            let theta = TAU * k as f64 / m as f64;
            let e = Complex64::from_polar(1.0, theta);
            let b = (e.conj() * d).re;
            let r_out = -b + (b * b - d.norm_sqr() + outer.radius * outer.radius).sqrt();
            for (r, wr) in radial(h.radius, r_out) {
                rule.push((h.center + e * r, wr * r * TAU / m as f64));
            }
        }
        return rule;
    }
    if holes.is_empty() {
        let m = spec.angular_nodes.max(8);
        for k in 0..m {
            let e = Complex64::from_polar(1.0, TAU * k as f64 / m as f64);
            for (r, wr) in radial(0.0, outer.radius) {
                rule.push((outer.center + e * r, wr * r * TAU / m as f64));
            }
        }
        return rule;
    }
    let mut breaks = Vec::new();
    for h in &holes {
        let d = h.center - outer.center;
        if d.norm() > h.radius {
            let half = (h.radius / d.norm()).asin();
            breaks.push((d.arg() - half).rem_euclid(TAU));
            breaks.push((d.arg() + half).rem_euclid(TAU));
        }
    }
    breaks.sort_by(f64::total_cmp);
    if breaks.is_empty() {
        breaks.push(0.0);
    }
    let first = breaks[0];
    breaks.push(first + TAU);
    for pair in breaks.windows(2) {
        if pair[1] - pair[0] <= 0.0 {
            continue;
        }
        for (theta, wt) in smoothstep_gauss_legendre(spec.panel_nodes, pair[0], pair[1]) {
            let e = Complex64::from_polar(1.0, theta);
            for (a, b) in ray_segments(outer.center, e, outer.radius, &holes) {
                for (r, wr) in radial(a, b) {
                    rule.push((outer.center + e * r, wr * r * wt));
                }
            }
        }
    }
    rule
}

/// Parts of the ray `o + r e`, `0 ≤ r ≤ radius`, outside every hole.
fn ray_segments(
    o: Complex64,
    e: Complex64,
    radius: f64,
    holes: &[crate::domain::BoundaryCircle],
) -> Vec<(f64, f64)> {
    let mut cuts: Vec<(f64, f64)> = holes
        .iter()
        .filter_map(|h| {
            let b = (e.conj() * (h.center - o)).re;
            let disc = b * b - (h.center - o).norm_sqr() + h.radius * h.radius;
            if disc <= 0.0 {
                return None;
            }
            let s = disc.sqrt();
            Some(((b - s).max(0.0), b + s))
        })
        .filter(|&(a, b)| b > 0.0 && b > a)
        .collect();
    cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut segments = Vec::new();
    let mut start = 0.0;
    for (a, b) in cuts {
        if a > start {
            segments.push((start, a));
        }
        start = start.max(b);
    }
    if radius > start {
        segments.push((start, radius));
    }
    segments
}

/// Conformal Bergman metric field `B(z) I`.
pub fn bergman_metric_field(model: &KernelModel, domain: &PlanarDomain) -> Result<MetricField> {
    if model.dimension() != 1 {
        return Err(Error::InvalidInput(
            "the Bergman metric field is planar only".into(),
        ));
    }
    let m = model.clone();
    Ok(MetricField::conformal(
        domain.clone(),
        Provenance::Bergman {
            model: model.name(),
        },
        false,
        move |z| m.metric_factor(z),
    ))
}

/// `max |Φ′(z) K₂(Φz, Φw) conj(Φ′(w)) − K₁(z, w)| / |K₁(z, w)|` over the pairs.
pub fn transformation_residual(
    model1: &KernelModel,
    model2: &KernelModel,
    phi: &Automorphism,
    pairs: &[(Complex64, Complex64)],
) -> Result<f64> {
    let m = phi.mobius()?;
    let mut worst: f64 = 0.0;
    for &(z, w) in pairs {
        let lhs = m.derivative(z) * model2.kernel1(m.apply(z), m.apply(w)) * m.derivative(w).conj();
        let rhs = model1.kernel1(z, w);
        worst = worst.max((lhs - rhs).norm() / rhs.norm());
    }
    Ok(worst)
}

/// Default finite-difference step for [`representative_coords`].
pub fn default_step(domain: &PlanarDomain) -> f64 {
    1e-5 * domain.diameter()
}

/// Bergman representative coordinate
/// `b_p(z) = ∂/∂w̄ [log K(z, w) − log K(w, w)]` at `w = p`, by central
/// differences in `w`. The logarithms are taken of the ratios
/// `K(z, w)/K(z, p)` and `K(w, w)/K(p, p)`, which stay near 1 on the stencil,
/// so the principal branch is consistent.
pub fn representative_coords(
    model: &KernelModel,
    p: Complex64,
    z: Complex64,
    step: f64,
) -> Result<Complex64> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("step {step} must be positive")));
    }
    let kzp = model.kernel1(z, p);
    let kpp = model.kernel1(p, p).re;
    let threshold = 1e-12 * (model.kernel1(z, z).re * kpp).sqrt();
    if !(kzp.norm() >= threshold) {
        return Err(Error::KernelZero {
            modulus: kzp.norm(),
            threshold,
        });
    }
    let l = |w: Complex64| (model.kernel1(z, w) / kzp).ln() - (model.kernel1(w, w).re / kpp).ln();
    let dx = (l(p + step) - l(p - step)) / (2.0 * step);
    let iy = Complex64::new(0.0, step);
    let dy = (l(p + iy) - l(p - iy)) / (2.0 * step);
    Ok(0.5 * (dx + Complex64::new(0.0, 1.0) * dy))
}

type RealFn = dyn Fn(&[Complex64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync;
type HessFn = dyn Fn(&[Complex64]) -> Vec<Vec<Complex64>> + Send + Sync;

/// Inputs of the Levi polynomial: `ρ`, its holomorphic first and second
/// partials `∂ρ/∂w_j`, `∂²ρ/∂w_j∂w_k`, and the points `z`, `w`.
#[derive(Clone)]
pub struct LeviInput {
    pub dimension: usize,
    pub rho: Arc<RealFn>,
    pub d_rho: Arc<GradFn>,
    pub d2_rho: Arc<HessFn>,
    pub z: Vec<Complex64>,
    pub w: Vec<Complex64>,
}

impl LeviInput {
    /// Unit ball `ρ(w) = |w|² − 1`: `∂ρ/∂w_j = w̄_j`, holomorphic Hessian zero.
    pub fn ball(z: Vec<Complex64>, w: Vec<Complex64>) -> Self {
        let n = w.len();
        Self {
            dimension: n,
            rho: Arc::new(|w: &[Complex64]| w.iter().map(|x| x.norm_sqr()).sum::<f64>() - 1.0),
            d_rho: Arc::new(|w: &[Complex64]| w.iter().map(|x| x.conj()).collect()),
            d2_rho: Arc::new(move |_w: &[Complex64]| vec![vec![ZERO; n]; n]),
            z,
            w,
        }
    }
}

/// `X(z, w) = ρ(w) + Σ (z_j − w_j) ∂ρ/∂w_j + ½ Σ (z_j − w_j)(z_k − w_k) ∂²ρ/∂w_j∂w_k`.
pub fn levi_polynomial(input: &LeviInput) -> Result<Complex64> {
    let n = input.dimension;
    if input.z.len() != n || input.w.len() != n {
        return Err(Error::InvalidInput(format!(
            "Levi polynomial of dimension {n} with points of dimension {} and {}",
            input.z.len(),
            input.w.len()
        )));
    }
    let grad = (input.d_rho)(&input.w);
    let hess = (input.d2_rho)(&input.w);
    if grad.len() != n || hess.len() != n || hess.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput(
            "derivative evaluators return the wrong dimension".into(),
        ));
    }
    let dz: Vec<Complex64> = input.z.iter().zip(&input.w).map(|(a, b)| a - b).collect();
    let mut x = Complex64::new((input.rho)(&input.w), 0.0);
    for j in 0..n {
        x += dz[j] * grad[j];
        for k in 0..n {
            x += 0.5 * dz[j] * dz[k] * hess[j][k];
        }
    }
    Ok(x)
}

/// `sup |α^{(k)}(z)|` over the Haar nodes (`n` per circle factor), the samples
/// and the orders `1 ≤ k ≤ order`. Order zero is left out: it measures the
/// point itself rather than the map.
pub fn derivative_bound_probe(
    group: &CompactGroup,
    order: u32,
    samples: &[Complex64],
    n: usize,
) -> Result<f64> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidInput(format!(
            "derivative order {order} outside 1..=4"
        )));
    }
    let mut sup: f64 = 0.0;
    for node in group.haar_nodes(n) {
        for &z in samples {
            for k in 1..=order {
                sup = sup.max(node.map.nth_derivative(k, z).norm());
            }
        }
    }
    Ok(sup)
}

/// CSV `re(z),im(z),re(w),im(w),re(K),im(K)`.
pub fn write_kernel_csv<W: Write>(
    model: &KernelModel,
    pairs: &[(Complex64, Complex64)],
    out: W,
) -> Result<()> {
    let rows = pairs.iter().map(|&(z, w)| {
        let k = model.kernel1(z, w);
        vec![
            fmt_f64(z.re),
            fmt_f64(z.im),
            fmt_f64(w.re),
            fmt_f64(w.im),
            fmt_f64(k.re),
            fmt_f64(k.im),
        ]
    });
    write_csv(out, "re(z),im(z),re(w),im(w),re(K),im(K)", rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn disc_closed_values() {
        let k = KernelModel::DiscClosed;
        assert!((k.kernel1(c(0.0, 0.0), c(0.0, 0.0)).re - 1.0 / PI).abs() < 1e-16);
        let (z, w) = (c(0.3, -0.2), c(-0.1, 0.5));
        assert!((k.kernel1(z, w) - k.kernel1(w, z).conj()).norm() < 1e-15);
        assert_eq!(k.metric_factor(c(0.0, 0.0)).unwrap(), 2.0);
        let z = c(0.4, 0.3);
        assert!((k.metric_factor(z).unwrap() * (1.0 - z.norm_sqr()).powi(2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn disc_metric_matches_central_differences() {
        let k = KernelModel::DiscClosed;
        let z = c(0.3, 0.25);
        let h = 1e-4;
        let f = |z: Complex64| k.kernel1(z, z).re.ln();
        // ∂²/∂z∂z̄ = Δ/4
        let lap =
            (f(z + h) + f(z - h) + f(z + c(0.0, h)) + f(z - c(0.0, h)) - 4.0 * f(z)) / (h * h);
        assert!((lap / 4.0 - k.metric_factor(z).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn ball_kernel_reduces_to_disc() {
        let ball = KernelModel::BallClosed { n: 1 };
        let (z, w) = (c(0.3, 0.1), c(-0.2, 0.4));
        assert!(
            (ball.kernel(&[z], &[w]).unwrap() - KernelModel::DiscClosed.kernel1(z, w)).norm()
                < 1e-15
        );
        let b2 = KernelModel::BallClosed { n: 2 };
        let v = b2.kernel(&[c(0.0, 0.0); 2], &[c(0.0, 0.0); 2]).unwrap();
        assert!((v.re - 2.0 / (PI * PI)).abs() < 1e-15);
        assert!(matches!(b2.kernel(&[z], &[w]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn annulus_series_is_hermitian_and_rotation_invariant() {
        let k = KernelModel::annulus(1.0, 2.0).unwrap();
        let (z, w) = (c(1.3, 0.2), c(-0.4, 1.4));
        assert!((k.kernel1(z, w) - k.kernel1(w, z).conj()).norm() < 1e-12 * k.kernel1(z, w).norm());
        let z = Complex64::from_polar(2f64.sqrt(), 0.3);
        let b0 = k.metric_factor(z).unwrap();
        for theta in [0.7, 2.0, 4.4] {
            let b = k
                .metric_factor(z * Complex64::from_polar(1.0, theta))
                .unwrap();
            assert!((b - b0).abs() < 1e-13 * b0);
        }
        assert!(k.truncation_tail(z, z) < 1e-12 * k.kernel1(z, z).re);
    }

    #[test]
    fn annulus_metric_matches_central_differences() {
        let k = KernelModel::annulus_truncated(1.0, 2.0, 120).unwrap();
        let z = c(1.1, 0.6);
        let h = 1e-4;
        let f = |z: Complex64| k.kernel1(z, z).re.ln();
        let lap =
            (f(z + h) + f(z - h) + f(z + c(0.0, h)) + f(z - c(0.0, h)) - 4.0 * f(z)) / (h * h);
        let b = k.metric_factor(z).unwrap();
        assert!((lap / 4.0 - b).abs() < 1e-5 * b);
    }

    #[test]
    fn numeric_basis_reproduces_disc() {
        let disc = PlanarDomain::unit_disc();
        let spec = BasisSpec {
            outer_degree: 40,
            angular_nodes: 96,
            ..BasisSpec::default()
        };
        let oracle = KernelModel::numeric(&disc, spec).unwrap();
        let exact = KernelModel::DiscClosed;
        assert!((oracle.kernel1(c(0.0, 0.0), c(0.0, 0.0)).re - 1.0 / PI).abs() < 1e-13);
        for (z, w) in [(c(0.2, 0.1), c(-0.3, 0.4)), (c(0.5, 0.0), c(0.5, 0.0))] {
            let r =
                (oracle.kernel1(z, w) - exact.kernel1(z, w)).norm() / exact.kernel1(z, w).norm();
            assert!(r < 1e-8, "{r:e}");
        }
        let b = oracle.metric_factor(c(0.3, 0.2)).unwrap();
        assert!((b - exact.metric_factor(c(0.3, 0.2)).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn multi_hole_quadrature_measures_area() {
        let d = PlanarDomain::disc_minus_discs(
            crate::domain::Disc::new(c(0.0, 0.0), 1.0),
            vec![
                crate::domain::Disc::new(c(0.5, 0.0), 0.1),
                crate::domain::Disc::new(c(0.0, -0.5), 0.2),
            ],
        )
        .unwrap();
        let rule = quadrature(&d, &BasisSpec::default());
        let area: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((area - PI * (1.0 - 0.01 - 0.04)).abs() < 1e-9, "{area}");
        let moment: f64 = rule.iter().map(|(z, w)| w * z.norm_sqr()).sum();
        let exact = PI / 2.0 - (PI * 0.01 * (0.25 + 0.005)) - (PI * 0.04 * (0.25 + 0.02));
        assert!((moment - exact).abs() < 1e-9);
    }

    #[test]
    fn levi_polynomial_examples() {
        let w = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let x = levi_polynomial(&LeviInput::ball(vec![c(0.0, 0.0); 2], w.clone())).unwrap();
        assert_eq!(x, c(-1.0, 0.0));
        assert_eq!(
            levi_polynomial(&LeviInput::ball(w.clone(), w.clone())).unwrap(),
            c(0.0, 0.0)
        );
        let w = vec![c(0.3, 0.1), c(-0.2, 0.4)];
        assert!(
            (levi_polynomial(&LeviInput::ball(w.clone(), w.clone()))
                .unwrap()
                .re
                - (0.1 + 0.2 - 1.0))
                .abs()
                < 1e-15
        );
        let mut bad = LeviInput::ball(vec![c(0.0, 0.0)], w);
        bad.dimension = 2;
        assert!(matches!(levi_polynomial(&bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn representative_coordinates_on_disc() {
        let k = KernelModel::DiscClosed;
        let step = default_step(&PlanarDomain::unit_disc());
        assert!(
            representative_coords(&k, c(0.2, 0.1), c(0.2, 0.1), step)
                .unwrap()
                .norm()
                < 1e-9
        );
        let b = representative_coords(&k, c(0.0, 0.0), c(0.3, 0.0), step).unwrap();
        assert!((b - c(0.6, 0.0)).norm() < 1e-9);
        let z = c(0.2, -0.35);
        let rot = Complex64::from_polar(1.0, 1.1);
        let lhs = representative_coords(&k, c(0.0, 0.0), rot * z, step).unwrap();
        let rhs = rot * representative_coords(&k, c(0.0, 0.0), z, step).unwrap();
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn derivative_probe_examples() {
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let g = CompactGroup::circle(annulus.clone()).unwrap();
        let samples = [c(1.5, 0.0), c(0.0, -1.2)];
        assert!((derivative_bound_probe(&g, 1, &samples, 16).unwrap() - 1.0).abs() < 1e-15);
        assert!((derivative_bound_probe(&g, 3, &samples, 16).unwrap() - 1.0).abs() < 1e-15);
        let trivial = CompactGroup::trivial(annulus);
        assert_eq!(
            derivative_bound_probe(&trivial, 1, &samples, 1).unwrap(),
            1.0
        );
        assert!(derivative_bound_probe(&trivial, 5, &samples, 1).is_err());
    }

    #[test]
    fn kernel_csv_header() {
        let mut buf = Vec::new();
        write_kernel_csv(
            &KernelModel::DiscClosed,
            &[(c(0.0, 0.0), c(0.0, 0.0))],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("re(z),im(z),re(w),im(w),re(K),im(K)\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
