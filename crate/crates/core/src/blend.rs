//! Cutoffs, distance to the boundary in a metric `h`, and the blended metrics
//! `H = (1 − η) h + η b` and `H̃ = µ H + (1 − µ) H*` with the boundary product
//! metric `H*`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::domain::{GridSpec, PlanarDomain};
use crate::error::{Error, Result};
use crate::metric::{interpolate_sym2, MetricField, Provenance};
use crate::output::{fmt_f64, write_csv};
use crate::quadrature::gauss_legendre_on;
use crate::sym2::{Mat2, Sym2};

/// Smooth step `s((x − lo)/(hi − lo))`, `s(t) = f(t)/(f(t) + f(1 − t))`,
/// `f(x) = exp(−1/x)` for `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub lo: f64,
    pub hi: f64,
}

impl Cutoff {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cutoff needs lo < hi, got {lo}, {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn eval(&self, x: f64) -> f64 {
        smooth_step((x - self.lo) / (self.hi - self.lo))
    }
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |x: f64| (-1.0 / x).exp();
    let a = f(t);
    a / (a + f(1.0 - t))
}

/// `η` with `lo = ε/3`, `hi = 2ε/3`.
pub fn eta(epsilon: f64) -> Result<Cutoff> {
    Cutoff::new(epsilon / 3.0, 2.0 * epsilon / 3.0)
}

/// `µ` with `lo = δ/3`, `hi = 2δ/3`.
pub fn mu(delta: f64) -> Result<Cutoff> {
    Cutoff::new(delta / 3.0, 2.0 * delta / 3.0)
}

/// Nearest boundary point, as a boundary circle index and an angle on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Foot {
    pub circle: usize,
    pub angle: f64,
}

/// Distance to the boundary in the metric `h` at the nodes of a grid, with
/// its gradient and the nearest boundary point.
///
/// Values are positive inside, negative on a thin exterior band (so central
/// differences work up to the boundary) and undefined elsewhere.
#[derive(Debug, Clone)]
pub struct DistanceGrid {
    spec: GridSpec,
    domain: PlanarDomain,
    dist: Vec<f64>,
    grad: Vec<[f64; 2]>,
    foot: Vec<Option<Foot>>,
    foot_jacobian: Vec<Option<Mat2>>,
    metric: Vec<Sym2>,
    tube_width: f64,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBOURS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Curve lengths in a cached, bilinearly interpolated metric.
pub(crate) struct SegmentMetric<'a> {
    spec: &'a GridSpec,
    values: &'a [Sym2],
    rule: Vec<(f64, f64)>,
}

impl<'a> SegmentMetric<'a> {
    pub(crate) fn new(spec: &'a GridSpec, values: &'a [Sym2]) -> Self {
        Self {
            spec,
            values,
            rule: gauss_legendre_on(4, 0.0, 1.0),
        }
    }

    pub(crate) fn at(&self, z: Complex64) -> Sym2 {
        match interpolate_sym2(self.spec, self.values, z) {
            Some(g) => g,
            None => {
                let k = self
                    .spec
                    .nearest(clamp_to_box(self.spec, z))
                    .expect("clamped point lies in the box");
                self.values[k]
            }
        }
    }

    /// h-length of the straight segment `a → b` (4-point Gauss–Legendre).
    pub(crate) fn length(&self, a: Complex64, b: Complex64) -> f64 {
        let d = b - a;
        let v = [d.re, d.im];
        self.rule
            .iter()
            .map(|&(t, w)| w * self.at(a + d * t).quad(v).max(0.0).sqrt())
            .sum()
    }
}

fn clamp_to_box(spec: &GridSpec, z: Complex64) -> Complex64 {
    Complex64::new(
        z.re.clamp(spec.lo.re, spec.hi.re),
        z.im.clamp(spec.lo.im, spec.hi.im),
    )
}

/// Caches `field` at every node. Unavailable nodes (outside the closure, or
/// non-SPD) within a few cells of `∂Ω` take the linear extrapolation
/// `2 g(p) − g(2p − z)` across their nearest boundary point `p`, so that
/// interpolation across boundary cells stays first-order accurate; the rest
/// take the value of the nearest available node.
pub(crate) fn cache_metric(field: &MetricField, spec: &GridSpec) -> Result<Vec<Sym2>> {
    let mut values: Vec<Option<Sym2>> = field.sample_grid(spec);
    let domain = field.domain();
    let band = 3.0 * spec.cell_size();
    for (k, v) in values.iter_mut().enumerate() {
        if v.is_none() {
            *v = reflected_extension(field, domain, spec.node_at(k), band);
        }
    }
    let mut queue: VecDeque<usize> = (0..values.len()).filter(|&k| values[k].is_some()).collect();
    if queue.is_empty() {
        return Err(Error::GridTooCoarse(
            "the metric is unavailable at every grid node".into(),
        ));
    }
    while let Some(k) = queue.pop_front() {
        let (i, j) = spec.ij(k);
        let v = values[k];
        for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni >= spec.nx as i64 || nj >= spec.ny as i64 {
                continue;
            }
            let nk = spec.index(ni as usize, nj as usize);
            if values[nk].is_none() {
                values[nk] = v;
                queue.push_back(nk);
            }
        }
    }
    Ok(values
        .into_iter()
        .map(|v| v.expect("filled by the sweep"))
        .collect())
}

fn reflected_extension(
    field: &MetricField,
    domain: &PlanarDomain,
    z: Complex64,
    band: f64,
) -> Option<Sym2> {
    let circle = domain
        .circles()
        .iter()
        .min_by(|a, b| a.distance(z).total_cmp(&b.distance(z)))?;
    let gap = circle.distance(z);
    let offset = z - circle.center;
    if !(gap <= band) || offset.norm() == 0.0 {
        return None;
    }
    let unit = offset / offset.norm();
    let p = circle.center + unit * circle.radius;
    let inward = if circle.outer { -unit } else { unit };
    let mirror = p + inward * gap;
    let edge = field
        .eval(p)
        .or_else(|_| field.eval(p + inward * (1e-9 * circle.radius)))
        .ok()?;
    let Ok(inner) = field.eval(mirror) else {
        return Some(edge);
    };
    let extended = 2.0 * edge - inner;
    let floor = 0.25 * edge.eigenvalues().0;
    if extended.is_spd() && extended.eigenvalues().0 >= floor {
        Some(extended)
    } else {
        Some(edge)
    }
}

/// Golden-section search for the angle on `circle` minimizing the h-length
/// of the straight segment from `z`.
fn refine_foot(
    seg: &SegmentMetric<'_>,
    domain: &PlanarDomain,
    z: Complex64,
    circle: usize,
    center: f64,
    half_width: f64,
) -> (f64, f64) {
    let c = &domain.circles()[circle];
    let f = |t: f64| seg.length(z, c.point_at(t));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (center - half_width, center + half_width);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-9 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Distance to `∂Ω` in the metric `h` on the nodes of `spec`.
///
/// Nodes next to the boundary are initialized with their nearest boundary
/// point (radial guess refined by golden-section search). A Dijkstra sweep
/// over the 8-connected grid then hands each node the foot point of its best
/// neighbour, and every node's value is the h-length of the straight segment
/// to its foot, re-minimized over the foot angle when the node is settled. Propagating foot points rather than summing edge
/// lengths avoids the directional bias of plain graph distances.
pub fn h_distance_field(
    domain: &PlanarDomain,
    h: &MetricField,
    spec: &GridSpec,
) -> Result<DistanceGrid> {
    if !spec.contains_domain(domain) {
        return Err(Error::InvalidInput(
            "grid box does not contain the domain".into(),
        ));
    }
    let metric = cache_metric(h, spec)?;
    let seg = SegmentMetric::new(spec, &metric);
    let cell = spec.cell_size();
    let n = spec.len();
    let mut dist = vec![f64::NAN; n];
    let mut foot: Vec<Option<Foot>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let inside: Vec<bool> = spec.nodes().map(|z| domain.contains(z)).collect();

    for k in 0..n {
        let z = spec.node_at(k);
        let boundary_gap = domain.distance_to_boundary_set(z);
        if boundary_gap > 2.5 * cell {
            continue;
        }
        let mut best = (f64::INFINITY, None);
        for (ci, circle) in domain.circles().iter().enumerate() {
            if circle.distance(z) > boundary_gap + 3.0 * cell {
                continue;
            }
            let half = (4.0 * cell / circle.radius).min(std::f64::consts::PI);
            let (angle, len) = refine_foot(&seg, domain, z, ci, circle.angle_of(z), half);
            if len < best.0 {
                best = (len, Some(Foot { circle: ci, angle }));
            }
        }
        if inside[k] {
            dist[k] = best.0;
            foot[k] = best.1;
            heap.push(Entry(best.0, k));
        } else {
            dist[k] = -best.0;
            foot[k] = best.1;
            done[k] = true;
        }
    }

    while let Some(Entry(value, k)) = heap.pop() {
        if done[k] || value > dist[k] {
            continue;
        }
        done[k] = true;
        let z = spec.node_at(k);
        let f = foot[k].expect("queued nodes carry a foot");
        let circle = &domain.circles()[f.circle];
        let (angle, len) = refine_foot(
            &seg,
            domain,
            z,
            f.circle,
            f.angle,
            (2.0 * cell / circle.radius).min(1.0),
        );
        dist[k] = len;
        foot[k] = Some(Foot {
            circle: f.circle,
            angle,
        });
        let p = circle.point_at(foot[k].unwrap().angle);
        let (i, j) = spec.ij(k);
        for (di, dj) in NEIGHBOURS {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni >= spec.nx as i64 || nj >= spec.ny as i64 {
                continue;
            }
            let nk = spec.index(ni as usize, nj as usize);
            if !inside[nk] || done[nk] {
                continue;
            }
            let cand = seg.length(spec.node_at(nk), p);
            if !(cand >= dist[nk]) {
                dist[nk] = cand;
                foot[nk] = foot[k];
                heap.push(Entry(cand, nk));
            }
        }
    }
    if let Some(k) = (0..n).find(|&k| inside[k] && !done[k]) {
        return Err(Error::GridTooCoarse(format!(
            "interior node {} is not connected to the boundary",
            spec.node_at(k)
        )));
    }

    let grad = (0..n).map(|k| central_gradient(spec, &dist, k)).collect();
    let foot_jacobian = (0..n)
        .map(|k| foot_jacobian(spec, domain, &foot, k))
        .collect();
    Ok(DistanceGrid {
        spec: *spec,
        domain: domain.clone(),
        dist,
        grad,
        foot,
        foot_jacobian,
        metric,
        tube_width: f64::INFINITY,
    })
}

/// Neighbour index in direction `(di, dj)` if it exists.
fn step(spec: &GridSpec, k: usize, di: i64, dj: i64) -> Option<usize> {
    let (i, j) = spec.ij(k);
    let (ni, nj) = (i as i64 + di, j as i64 + dj);
    if ni < 0 || nj < 0 || ni >= spec.nx as i64 || nj >= spec.ny as i64 {
        None
    } else {
        Some(spec.index(ni as usize, nj as usize))
    }
}

/// Central difference along one axis, one-sided where a neighbour is missing.
fn difference<T: Copy>(
    spec: &GridSpec,
    k: usize,
    axis: (i64, i64),
    h: f64,
    value: impl Fn(usize) -> Option<T>,
    sub: impl Fn(T, T) -> T,
    scale: impl Fn(T, f64) -> T,
) -> Option<T> {
    let here = value(k)?;
    let fwd = step(spec, k, axis.0, axis.1).and_then(&value);
    let bwd = step(spec, k, -axis.0, -axis.1).and_then(&value);
    match (fwd, bwd) {
        (Some(f), Some(b)) => Some(scale(sub(f, b), 0.5 / h)),
        (Some(f), None) => Some(scale(sub(f, here), 1.0 / h)),
        (None, Some(b)) => Some(scale(sub(here, b), 1.0 / h)),
        (None, None) => None,
    }
}

fn central_gradient(spec: &GridSpec, dist: &[f64], k: usize) -> [f64; 2] {
    let value = |m: usize| {
        if dist[m].is_finite() {
            Some(dist[m])
        } else {
            None
        }
    };
    let gx = difference(
        spec,
        k,
        (1, 0),
        spec.dx(),
        value,
        |a, b| a - b,
        |a, s| a * s,
    );
    let gy = difference(
        spec,
        k,
        (0, 1),
        spec.dy(),
        value,
        |a, b| a - b,
        |a, s| a * s,
    );
    [gx.unwrap_or(f64::NAN), gy.unwrap_or(f64::NAN)]
}

fn foot_jacobian(
    spec: &GridSpec,
    domain: &PlanarDomain,
    foot: &[Option<Foot>],
    k: usize,
) -> Option<Mat2> {
    let own = foot[k]?;
    let position = |m: usize| {
        let f = foot[m]?;
        (f.circle == own.circle).then(|| domain.circles()[f.circle].point_at(f.angle))
    };
    let sub = |a: Complex64, b: Complex64| a - b;
    let scale = |a: Complex64, s: f64| a * s;
    let dx = difference(spec, k, (1, 0), spec.dx(), position, sub, scale)?;
    let dy = difference(spec, k, (0, 1), spec.dy(), position, sub, scale)?;
    Some([[dx.re, dy.re], [dx.im, dy.im]])
}

impl DistanceGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn domain(&self) -> &PlanarDomain {
        &self.domain
    }

    pub fn tube_width(&self) -> f64 {
        self.tube_width
    }

    /// Sets the width of the tube `U = {dist_h < width}` on which `H*` lives.
    pub fn with_tube_width(mut self, width: f64) -> Self {
        self.tube_width = width;
        self
    }

    pub fn node_distance(&self, k: usize) -> f64 {
        self.dist[k]
    }

    pub fn node_gradient(&self, k: usize) -> [f64; 2] {
        self.grad[k]
    }

    pub fn node_foot(&self, k: usize) -> Option<Foot> {
        self.foot[k]
    }

    /// Cached node values of `h`.
    pub fn node_metric(&self, k: usize) -> Sym2 {
        self.metric[k]
    }

    fn corners(&self, z: Complex64) -> Result<([usize; 4], [f64; 4])> {
        let (i, j, fx, fy) = self.spec.locate(z).ok_or(Error::OutsideDomain(z))?;
        let idx = [
            self.spec.index(i, j),
            self.spec.index(i + 1, j),
            self.spec.index(i, j + 1),
            self.spec.index(i + 1, j + 1),
        ];
        let w = [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ];
        Ok((idx, w))
    }

    /// Bilinearly interpolated `dist_h(z, ∂Ω)`.
    pub fn distance(&self, z: Complex64) -> Result<f64> {
        let (idx, w) = self.corners(z)?;
        let mut s = 0.0;
        for (k, wk) in idx.iter().zip(w) {
            let d = self.dist[*k];
            if !d.is_finite() {
                return Err(Error::OutsideDomain(z));
            }
            s += wk * d;
        }
        Ok(s)
    }

    /// Bilinearly interpolated gradient of `dist_h`.
    pub fn gradient(&self, z: Complex64) -> Result<[f64; 2]> {
        let (idx, w) = self.corners(z)?;
        let mut g = [0.0; 2];
        for (k, wk) in idx.iter().zip(w) {
            let v = self.grad[*k];
            if !(v[0].is_finite() && v[1].is_finite()) {
                return Err(Error::OutsideDomain(z));
            }
            g[0] += wk * v[0];
            g[1] += wk * v[1];
        }
        Ok(g)
    }

    /// Nearest boundary point `π(z)` and its circle.
    pub fn projection(&self, z: Complex64) -> Result<(usize, Complex64)> {
        let (idx, w) = self.corners(z)?;
        let near = self.spec.nearest(z).ok_or(Error::OutsideDomain(z))?;
        let circle = self.foot[near]
            .or_else(|| idx.iter().find_map(|&k| self.foot[k]))
            .ok_or(Error::OutsideTube(z))?
            .circle;
        let c = &self.domain.circles()[circle];
        let (mut sum, mut weight) = (Complex64::new(0.0, 0.0), 0.0);
        for (k, wk) in idx.iter().zip(w) {
            if let Some(f) = self.foot[*k] {
                if f.circle == circle {
                    sum += c.point_at(f.angle) * wk;
                    weight += wk;
                }
            }
        }
        if weight == 0.0 {
            return Err(Error::OutsideTube(z));
        }
        Ok((circle, c.point_at(c.angle_of(sum / weight))))
    }

    /// Bilinearly interpolated Jacobian `Dπ` of the nearest-point map.
    pub fn projection_jacobian(&self, z: Complex64) -> Result<Mat2> {
        let (idx, w) = self.corners(z)?;
        let mut m = [[0.0; 2]; 2];
        for (k, wk) in idx.iter().zip(w) {
            let j = self.foot_jacobian[*k].ok_or(Error::ProjectionBreakdown {
                at: z,
                condition: f64::INFINITY,
            })?;
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += wk * j[r][c];
                }
            }
        }
        Ok(m)
    }

    /// Layer of `z` for the cutoff width `δ`.
    pub fn layer(&self, z: Complex64, delta: f64) -> Result<Layer> {
        Ok(classify_layer(self.distance(z)?, delta))
    }
}

/// `H = (1 − η(dist_h)) h + η(dist_h) b`, `η` with `lo = ε/3`, `hi = 2ε/3`.
/// The plateaus return `h` or `b` exactly.
pub fn blend_h(
    h: &MetricField,
    b: &MetricField,
    dist: Arc<DistanceGrid>,
    epsilon: f64,
) -> Result<MetricField> {
    let cut = eta(epsilon)?;
    let (h, b) = (h.clone(), b.clone());
    let domain = h.domain().clone();
    let eval = Arc::new(move |z: Complex64| {
        let e = cut.eval(dist.distance(z)?);
        if e == 0.0 {
            h.eval(z)
        } else if e == 1.0 {
            b.eval(z)
        } else {
            Ok((1.0 - e) * h.eval(z)? + e * b.eval(z)?)
        }
    });
    Ok(MetricField::from_parts(
        domain,
        Provenance::Blended { stage: "H".into() },
        true,
        eval,
        None,
    ))
}

/// Condition number above which the tube coordinates `(arclength ∘ π, dist_h)`
/// are treated as degenerate.
pub const PROJECTION_CONDITION_LIMIT: f64 = 1e8;

/// `H*(v, w) = h(π_* v, π_* w) + d dist_h(v) d dist_h(w)` at `z`.
pub fn product_metric_hstar(h: &MetricField, dist: &DistanceGrid, z: Complex64) -> Result<Sym2> {
    let d = dist.distance(z)?;
    if !(d < dist.tube_width()) || !dist.domain().in_closure(z, 0.0) {
        return Err(Error::OutsideTube(z));
    }
    let (circle, p) = dist.projection(z)?;
    let jac = dist.projection_jacobian(z)?;
    let g = dist.gradient(z)?;
    let c = &dist.domain().circles()[circle];
    let radial = (p - c.center) / c.radius;
    let tangent = [-radial.im, radial.re];
    // rows: tangential component of Dπ, and d dist_h
    let row0 = [
        tangent[0] * jac[0][0] + tangent[1] * jac[1][0],
        tangent[0] * jac[0][1] + tangent[1] * jac[1][1],
    ];
    let (lo, hi) = tube_singular_squares([row0, g]);
    let condition = if lo > 0.0 {
        (hi / lo).sqrt()
    } else {
        f64::INFINITY
    };
    if !(condition <= PROJECTION_CONDITION_LIMIT) {
        return Err(Error::ProjectionBreakdown { at: z, condition });
    }
    let hp = h.eval(p)?;
    let s = hp.congruence(jac) + Sym2::outer(g);
    Ok(s.with_eigen_floor(1e-10))
}

/// Eigenvalues of `MᵀM` for the 2×2 matrix with the given rows.
fn tube_singular_squares(rows: [[f64; 2]; 2]) -> (f64, f64) {
    let m = rows;
    Sym2::new(
        m[0][0] * m[0][0] + m[1][0] * m[1][0],
        m[0][0] * m[0][1] + m[1][0] * m[1][1],
        m[0][1] * m[0][1] + m[1][1] * m[1][1],
    )
    .eigenvalues()
}

/// `H̃ = µ(dist_h) H + (1 − µ(dist_h)) H*`, `µ` with `lo = δ/3`, `hi = 2δ/3`.
/// `h` supplies the boundary metric inside `H*`.
pub fn blend_htilde(
    h: &MetricField,
    big_h: &MetricField,
    dist: Arc<DistanceGrid>,
    delta: f64,
) -> Result<MetricField> {
    let cut = mu(delta)?;
    let (h, big_h) = (h.clone(), big_h.clone());
    let domain = h.domain().clone();
    let eval = Arc::new(move |z: Complex64| {
        let m = cut.eval(dist.distance(z)?);
        if m == 1.0 {
            big_h.eval(z)
        } else if m == 0.0 {
            product_metric_hstar(&h, &dist, z)
        } else {
            Ok(m * big_h.eval(z)? + (1.0 - m) * product_metric_hstar(&h, &dist, z)?)
        }
    });
    Ok(MetricField::from_parts(
        domain,
        Provenance::Blended { stage: "H~".into() },
        true,
        eval,
        None,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Layer {
    /// Product metric near the boundary.
    P,
    /// Averaged metric.
    A,
    /// Bergman metric in the interior.
    B,
}

impl Layer {
    pub fn label(self) -> &'static str {
        match self {
            Layer::P => "P",
            Layer::A => "A",
            Layer::B => "B",
        }
    }
}

/// `P` below `δ/3`, `A` below `4δ/3 = 2ε/3`, `B` beyond.
pub fn classify_layer(dist: f64, delta: f64) -> Layer {
    if dist < delta / 3.0 {
        Layer::P
    } else if dist < 4.0 * delta / 3.0 {
        Layer::A
    } else {
        Layer::B
    }
}

/// Default `δ`: a fraction 0.15 of the inradius.
pub fn default_delta(domain: &PlanarDomain) -> f64 {
    0.15 * domain.inradius()
}

/// All stages of the blended metric.
#[derive(Debug, Clone)]
pub struct BlendedMetric {
    pub h: MetricField,
    pub bergman: MetricField,
    pub big_h: MetricField,
    pub htilde: MetricField,
    pub dist: Arc<DistanceGrid>,
    pub delta: f64,
    pub epsilon: f64,
}

/// `h` and `b` → distance grid → `H` (with `ε = 2δ`) → `H̃`. Tube width `2δ`.
pub fn build_blended(
    h: &MetricField,
    b: &MetricField,
    spec: &GridSpec,
    delta: f64,
) -> Result<BlendedMetric> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "delta {delta} must be positive"
        )));
    }
    let epsilon = 2.0 * delta;
    let dist = Arc::new(h_distance_field(h.domain(), h, spec)?.with_tube_width(2.0 * delta));
    let big_h = blend_h(h, b, Arc::clone(&dist), epsilon)?;
    let htilde = blend_htilde(h, &big_h, Arc::clone(&dist), delta)?;
    Ok(BlendedMetric {
        h: h.clone(),
        bergman: b.clone(),
        big_h,
        htilde,
        dist,
        delta,
        epsilon,
    })
}

/// CSV `x,y,dist,gx,gy,layer` over interior nodes, row-major.
pub fn write_layers_csv<W: Write>(dist: &DistanceGrid, delta: f64, out: W) -> Result<()> {
    let spec = dist.spec;
    let rows = (0..spec.len())
        .filter(|&k| dist.domain.contains(spec.node_at(k)))
        .map(|k| {
            let z = spec.node_at(k);
            let g = dist.grad[k];
            vec![
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(dist.dist[k]),
                fmt_f64(g[0]),
                fmt_f64(g[1]),
                classify_layer(dist.dist[k], delta).label().to_string(),
            ]
        });
    write_csv(out, "x,y,dist,gx,gy,layer", rows)
}

/// Sample counts on each cutoff plateau and the largest entrywise deviation
/// between the stages that must coincide there.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PlateauReport {
    /// `dist ≤ δ/3`: `H̃ = H*`.
    pub product: usize,
    /// `dist ≤ ε/3`: `H = h`.
    pub averaged: usize,
    /// `dist ≥ 2δ/3`: `H̃ = H`.
    pub blended: usize,
    /// `dist ≥ 2ε/3`: `H̃ = b`.
    pub bergman: usize,
    pub max_deviation: f64,
}

/// `|H̃(τ, ν)| / √(H̃(τ, τ) H̃(ν, ν))` on P-layer samples, `τ ⊥ ∇dist_h` and `ν`
/// the h-normalized gradient direction.
#[derive(Debug, Clone, Default, Serialize)]
pub struct OrthogonalityReport {
    pub checked: usize,
    pub max_ratio: f64,
}

impl BlendedMetric {
    pub fn plateau_report(&self, samples: &[Complex64]) -> Result<PlateauReport> {
        let mut r = PlateauReport::default();
        let (d13, d23, e23) = (
            self.delta / 3.0,
            2.0 * self.delta / 3.0,
            2.0 * self.epsilon / 3.0,
        );
        for &z in samples {
            let d = self.dist.distance(z)?;
            let ht = self.htilde.eval(z)?;
            let mut dev =
                |a: Sym2, b: Sym2| r.max_deviation = r.max_deviation.max(a.max_abs_diff(&b));
            if d <= d13 {
                r.product += 1;
                dev(ht, product_metric_hstar(&self.h, &self.dist, z)?);
            }
            if d <= self.epsilon / 3.0 {
                r.averaged += 1;
                dev(self.big_h.eval(z)?, self.h.eval(z)?);
            }
            if d >= d23 {
                r.blended += 1;
                dev(ht, self.big_h.eval(z)?);
            }
            if d >= e23 {
                r.bergman += 1;
                dev(ht, self.bergman.eval(z)?);
            }
        }
        Ok(r)
    }

    pub fn product_orthogonality(&self, samples: &[Complex64]) -> Result<OrthogonalityReport> {
        let mut r = OrthogonalityReport::default();
        for &z in samples {
            if classify_layer(self.dist.distance(z)?, self.delta) != Layer::P {
                continue;
            }
            let g = self.dist.gradient(z)?;
            let tau = [-g[1], g[0]];
            let hz = self.h.eval(z)?;
            let inv = hz.inverse().ok_or(Error::NumericalBreakdown {
                at: z,
                detail: "singular h".into(),
            })?;
            let nu = inv.apply(g);
            let ht = self.htilde.eval(z)?;
            let denom = (ht.quad(tau) * ht.quad(nu)).sqrt();
            if denom > 0.0 {
                r.max_ratio = r.max_ratio.max(ht.bilinear(tau, nu).abs() / denom);
            }
            r.checked += 1;
        }
        Ok(r)
    }
}

/// Layer agreement between `z` and `α(z)` over samples and Haar nodes.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LayerEquivariance {
    pub checked: usize,
    pub mismatches: usize,
    /// Mismatches with neither distance within one grid cell (in `h`-length)
    /// of a layer threshold.
    pub unexcused: usize,
}

pub fn layer_equivariance(
    dist: &DistanceGrid,
    h: &MetricField,
    group: &crate::automorphism::CompactGroup,
    n: usize,
    delta: f64,
    samples: &[Complex64],
) -> Result<LayerEquivariance> {
    let nodes = group.haar_nodes(n);
    let thresholds = [delta / 3.0, 4.0 * delta / 3.0];
    let cell = dist.spec().cell_size();
    let mut r = LayerEquivariance::default();
    for &z in samples {
        let dz = dist.distance(z)?;
        let tol = cell * h.eval(z)?.eigenvalues().1.sqrt();
        for node in &nodes {
            let w = node.map.apply(z);
            let dw = match dist.distance(w) {
                Ok(d) => d,
                Err(Error::OutsideDomain(_)) => continue,
                Err(e) => return Err(e),
            };
            r.checked += 1;
            if classify_layer(dz, delta) != classify_layer(dw, delta) {
                r.mismatches += 1;
                let tol = tol.max(cell * h.eval(w)?.eigenvalues().1.sqrt());
                if !thresholds
                    .iter()
                    .any(|t| (dz - t).abs() <= tol || (dw - t).abs() <= tol)
                {
                    r.unexcused += 1;
                }
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cutoff_examples() {
        let eps = 0.3;
        let e = eta(eps).unwrap();
        assert_eq!(e.eval(eps / 3.0), 0.0);
        assert_eq!(e.eval(2.0 * eps / 3.0), 1.0);
        assert!((e.eval(0.5 * eps) - 0.5).abs() < 1e-15);
        assert!(Cutoff::new(1.0, 1.0).is_err());
        let mut prev = 0.0;
        for k in 5..95 {
            let v = e.eval(eps / 3.0 + k as f64 * eps / 300.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn layer_examples() {
        let d = 0.3;
        assert_eq!(classify_layer(d / 6.0, d), Layer::P);
        assert_eq!(classify_layer(d, d), Layer::A);
        assert_eq!(classify_layer(2.0 * d, d), Layer::B);
    }

    #[test]
    fn euclidean_distance_on_disc_and_annulus() {
        let disc = PlanarDomain::unit_disc();
        let spec = GridSpec::around(&disc, 129, 0.0);
        let grid = h_distance_field(&disc, &MetricField::euclidean(disc.clone()), &spec).unwrap();
        assert!((grid.distance(c(0.0, 0.0)).unwrap() - 1.0).abs() < 2.0 * spec.cell_size());
        assert!((grid.distance(c(0.3, -0.4)).unwrap() - 0.5).abs() < 1e-3);

        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let spec = GridSpec::around(&annulus, 129, 0.0);
        let e = MetricField::euclidean(annulus.clone());
        let grid = h_distance_field(&annulus, &e, &spec).unwrap();
        // |z| = 1.5 sits on the ridge between the two circles, where
        // interpolation is only accurate to a cell
        let z = Complex64::from_polar(1.5, 0.4);
        assert!((grid.distance(z).unwrap() - 0.5).abs() < spec.cell_size());
        let z = Complex64::from_polar(1.3, 2.4);
        assert!((grid.distance(z).unwrap() - 0.3).abs() < 1e-3);
        let g = grid.gradient(Complex64::from_polar(1.8, 0.4)).unwrap();
        assert!(((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0).abs() < 0.02);
    }

    #[test]
    fn distance_scales_with_metric() {
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let spec = GridSpec::around(&annulus, 97, 0.0);
        let e =
            h_distance_field(&annulus, &MetricField::euclidean(annulus.clone()), &spec).unwrap();
        let four = MetricField::constant(annulus.clone(), Sym2::scalar(4.0));
        let s = h_distance_field(&annulus, &four, &spec).unwrap();
        for z in [c(1.3, 0.2), c(-0.1, 1.6), c(0.9, -1.1)] {
            let ratio = s.distance(z).unwrap() / e.distance(z).unwrap();
            assert!((ratio - 2.0).abs() < 0.04, "{ratio}");
        }
    }

    #[test]
    fn hstar_on_euclidean_disc() {
        let disc = PlanarDomain::unit_disc();
        let spec = GridSpec::around(&disc, 257, 0.0);
        let h = MetricField::euclidean(disc.clone());
        let grid = h_distance_field(&disc, &h, &spec)
            .unwrap()
            .with_tube_width(0.3);
        let z = c(0.9, 0.0);
        let s = product_metric_hstar(&h, &grid, z).unwrap();
        // polar product form: dr² + (boundary length)², so H* ≈ diag(1, 1/0.9²)
        assert!((s.xx - 1.0).abs() < 1e-2, "{s:?}");
        assert!((s.yy - 1.0 / 0.81).abs() < 2e-2, "{s:?}");
        assert!(s.xy.abs() < 1e-2);
        assert!(matches!(
            product_metric_hstar(&h, &grid, c(0.0, 0.0)),
            Err(Error::OutsideTube(_))
        ));
    }

    #[test]
    fn blend_plateaus_are_exact() {
        let disc = PlanarDomain::unit_disc();
        let spec = GridSpec::around(&disc, 129, 0.0);
        let h = MetricField::euclidean(disc.clone());
        let b = MetricField::constant(disc.clone(), Sym2::diag(3.0, 2.0));
        let delta = 0.12;
        let m = build_blended(&h, &b, &spec, delta).unwrap();
        for z in [c(0.0, 0.0), c(0.2, 0.3), c(-0.5, 0.1)] {
            assert!(m.dist.distance(z).unwrap() >= 4.0 * delta / 3.0);
            assert_eq!(m.htilde.eval(z).unwrap(), Sym2::diag(3.0, 2.0));
        }
        let z = c(0.0, 0.92);
        let d = m.dist.distance(z).unwrap();
        assert!(d > 2.0 * delta / 3.0 && d < 2.0 * 2.0 * delta / 3.0);
        assert_eq!(m.htilde.eval(z).unwrap(), Sym2::IDENTITY);
        let z = c(0.0, -0.98);
        assert_eq!(
            m.htilde.eval(z).unwrap(),
            product_metric_hstar(&h, &m.dist, z).unwrap()
        );
        // h = b: H equals both
        let same = blend_h(&h, &h, Arc::clone(&m.dist), 2.0 * delta).unwrap();
        assert_eq!(same.eval(c(0.0, 0.9)).unwrap(), Sym2::IDENTITY);
    }

    #[test]
    fn layers_csv_layout() {
        let disc = PlanarDomain::unit_disc();
        let spec = GridSpec::around(&disc, 17, 0.0);
        let grid = h_distance_field(&disc, &MetricField::euclidean(disc.clone()), &spec).unwrap();
        let mut buf = Vec::new();
        write_layers_csv(&grid, 0.1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,dist,gx,gy,layer\n"));
        assert!(text
            .lines()
            .skip(1)
            .all(|l| l.ends_with(",P") || l.ends_with(",A") || l.ends_with(",B")));
    }
}
