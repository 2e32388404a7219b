//! Geodesics, curvature, grid distances, metric balls, common fixed points
//! and boundary rigidity scans for metric fields.

use std::collections::BinaryHeap;
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::automorphism::{Automorphism, CompactGroup, HaarNode};
use crate::blend::{cache_metric, SegmentMetric};
use crate::domain::{GridSpec, PlanarDomain};
use crate::error::{Error, Result};
use crate::metric::{MetricField, Provenance};
use crate::output::{fmt_f64, write_csv};
use crate::sym2::Sym2;

/// A value together with a flag telling whether its finite-difference
/// stencil had to be made one-sided near the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub clipped: bool,
}

/// `Γ[k][i][j] = Γ^k_ij`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// Default finite-difference step: `1e-4` of the domain diameter.
pub fn default_fd_step(domain: &PlanarDomain) -> f64 {
    1e-4 * domain.diameter()
}

const AXES: [Complex64; 2] = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];

/// `∂_x G`, `∂_y G` by central differences, one-sided where the stencil
/// leaves the domain.
fn metric_gradient(field: &MetricField, z: Complex64, h: f64) -> Result<(Sym2, [Sym2; 2], bool)> {
    let g = field.eval(z)?;
    let mut clipped = false;
    let mut d = [Sym2::ZERO; 2];
    for (axis, e) in AXES.iter().enumerate() {
        let fwd = field.eval(z + e * h);
        let bwd = field.eval(z - e * h);
        d[axis] = match (fwd, bwd) {
            (Ok(f), Ok(b)) => (0.5 / h) * (f - b),
            (Ok(f), Err(_)) => {
                clipped = true;
                (1.0 / h) * (f - g)
            }
            (Err(_), Ok(b)) => {
                clipped = true;
                (1.0 / h) * (g - b)
            }
            (Err(e), Err(_)) => return Err(e),
        };
    }
    Ok((g, d, clipped))
}

fn component(s: &Sym2, i: usize, j: usize) -> f64 {
    match (i, j) {
        (0, 0) => s.xx,
        (1, 1) => s.yy,
        _ => s.xy,
    }
}

/// Levi-Civita symbols `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`
/// from central differences of the metric.
pub fn christoffel(
    field: &MetricField,
    z: Complex64,
    fd_step: f64,
) -> Result<Flagged<Christoffel>> {
    let (g, d, clipped) = metric_gradient(field, z, fd_step)?;
    let inv = g.inverse().ok_or(Error::NumericalBreakdown {
        at: z,
        detail: "singular metric".into(),
    })?;
    let mut gamma = [[[0.0; 2]; 2]; 2];
    for (k, gk) in gamma.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for l in 0..2 {
                    let lowered =
                        component(&d[i], j, l) + component(&d[j], i, l) - component(&d[l], i, j);
                    s += component(&inv, k, l) * lowered;
                }
                gk[i][j] = 0.5 * s;
            }
        }
    }
    Ok(Flagged {
        value: gamma,
        clipped,
    })
}

/// Gauss curvature. Conformal fields `λ I` use `K = −Δ log λ / (2λ)` with
/// the 5-point Laplacian; other fields use the Brioschi formula.
pub fn gauss_curvature(field: &MetricField, z: Complex64, fd_step: f64) -> Result<Flagged<f64>> {
    let h = fd_step;
    if field.is_conformal() {
        let lam = |w: Complex64| -> Result<f64> {
            let factor = field
                .conformal_factor(w)
                .ok_or(Error::InvalidInput("field is not conformal".into()))??;
            Ok(factor.ln())
        };
        let l0 = lam(z)?;
        let mut clipped = false;
        let mut lap = -4.0 * l0;
        for e in AXES {
            for s in [1.0, -1.0] {
                match lam(z + e * (s * h)) {
                    Ok(v) => lap += v,
                    Err(_) => {
                        clipped = true;
                        lap += l0;
                    }
                }
            }
        }
        lap /= h * h;
        return Ok(Flagged {
            value: -lap / (2.0 * l0.exp()),
            clipped,
        });
    }
    let mut clipped = false;
    let mut at = |dx: f64, dy: f64| -> Result<Sym2> {
        let w = z + Complex64::new(dx * h, dy * h);
        match field.eval(w) {
            Ok(g) => Ok(g),
            Err(Error::OutsideDomain(_)) => {
                clipped = true;
                field.eval(z)
            }
            Err(e) => Err(e),
        }
    };
    let c = at(0.0, 0.0)?;
    let (xp, xm, yp, ym) = (at(1.0, 0.0)?, at(-1.0, 0.0)?, at(0.0, 1.0)?, at(0.0, -1.0)?);
    let (pp, pm, mp, mm) = (
        at(1.0, 1.0)?,
        at(1.0, -1.0)?,
        at(-1.0, 1.0)?,
        at(-1.0, -1.0)?,
    );
    let du = (0.5 / h) * (xp - xm);
    let dv = (0.5 / h) * (yp - ym);
    let duu = (1.0 / (h * h)) * (xp + xm - 2.0 * c);
    let dvv = (1.0 / (h * h)) * (yp + ym - 2.0 * c);
    let duv = (0.25 / (h * h)) * (pp - pm - mp + mm);
    let (e, f, g) = (c.xx, c.xy, c.yy);
    let (e_u, e_v, f_u, f_v, g_u, g_v) = (du.xx, dv.xx, du.xy, dv.xy, du.yy, dv.yy);
    let m1 = [
        [
            -0.5 * dvv.xx + duv.xy - 0.5 * duu.yy,
            0.5 * e_u,
            f_u - 0.5 * e_v,
        ],
        [f_v - 0.5 * g_u, e, f],
        [0.5 * g_v, f, g],
    ];
    let m2 = [
        [0.0, 0.5 * e_v, 0.5 * g_u],
        [0.5 * e_v, e, f],
        [0.5 * g_u, f, g],
    ];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let w = e * g - f * f;
    Ok(Flagged {
        value: (det3(m1) - det3(m2)) / (w * w),
        clipped,
    })
}

/// Samples of a geodesic `γ(t)` with `γ′(t)`.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicPath {
    pub times: Vec<f64>,
    pub points: Vec<Complex64>,
    pub velocities: Vec<[f64; 2]>,
    pub step: f64,
    pub provenance: Provenance,
}

impl GeodesicPath {
    /// `‖γ′(t_k)‖_h` at every sample.
    pub fn speeds(&self, field: &MetricField) -> Result<Vec<f64>> {
        self.points
            .iter()
            .zip(&self.velocities)
            .map(|(&z, &v)| Ok(field.eval(z)?.quad(v).sqrt()))
            .collect()
    }

    /// CSV `t,x,y,vx,vy`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = (0..self.points.len()).map(|k| {
            let (z, v) = (self.points[k], self.velocities[k]);
            vec![
                fmt_f64(self.times[k]),
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(v[0]),
                fmt_f64(v[1]),
            ]
        });
        write_csv(out, "t,x,y,vx,vy", rows)
    }
}

type State = [f64; 4];

fn geodesic_rhs(field: &MetricField, s: State, fd: f64) -> Result<State> {
    let z = Complex64::new(s[0], s[1]);
    let v = [s[2], s[3]];
    let room = field.domain().euclidean_boundary_distance(z)?;
    let gamma = christoffel(field, z, fd.min(0.25 * room))?.value;
    let mut acc = [0.0; 2];
    for (k, a) in acc.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                *a -= gamma[k][i][j] * v[i] * v[j];
            }
        }
    }
    Ok([v[0], v[1], acc[0], acc[1]])
}

/// Unit-speed geodesic from `start` in the direction `velocity`, integrated
/// with classical RK4 over `steps` steps up to h-length `length`.
pub fn geodesic(
    field: &MetricField,
    start: Complex64,
    velocity: [f64; 2],
    length: f64,
    steps: usize,
) -> Result<GeodesicPath> {
    if steps == 0 || !(length > 0.0) {
        return Err(Error::InvalidInput(
            "geodesic needs a positive length and step count".into(),
        ));
    }
    let g = field.eval(start)?;
    let speed = g.quad(velocity).sqrt();
    if !(speed > 0.0) {
        return Err(Error::InvalidInput("initial velocity vanishes".into()));
    }
    let dt = length / steps as f64;
    let fd = default_fd_step(field.domain());
    let mut path = GeodesicPath {
        times: vec![0.0],
        points: vec![start],
        velocities: vec![[velocity[0] / speed, velocity[1] / speed]],
        step: dt,
        provenance: field.provenance().clone(),
    };
    let mut s: State = [start.re, start.im, velocity[0] / speed, velocity[1] / speed];
    let add = |a: State, b: State, t: f64| {
        [
            a[0] + t * b[0],
            a[1] + t * b[1],
            a[2] + t * b[2],
            a[3] + t * b[3],
        ]
    };
    for n in 1..=steps {
        let stepped = (|| -> Result<State> {
            let k1 = geodesic_rhs(field, s, fd)?;
            let k2 = geodesic_rhs(field, add(s, k1, 0.5 * dt), fd)?;
            let k3 = geodesic_rhs(field, add(s, k2, 0.5 * dt), fd)?;
            let k4 = geodesic_rhs(field, add(s, k3, dt), fd)?;
            let mut next = s;
            for i in 0..4 {
                next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            Ok(next)
        })();
        match stepped {
            Ok(next) if field.domain().contains(Complex64::new(next[0], next[1])) => {
                s = next;
                path.times.push(n as f64 * dt);
                path.points.push(Complex64::new(s[0], s[1]));
                path.velocities.push([s[2], s[3]]);
            }
            Ok(_) | Err(Error::OutsideDomain(_)) => return Err(Error::PathExited(Box::new(path))),
            Err(e) => return Err(e),
        }
    }
    Ok(path)
}

/// Stencil moves `(a, b)` with `max(|a|, |b|) ≤ 4` and `gcd(|a|, |b|) = 1`;
/// the largest angular gap between moves keeps the worst-case direction
/// error of grid paths below 0.8%.
fn stencil() -> Vec<(i64, i64)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut moves = Vec::new();
    for a in -4i64..=4 {
        for b in -4i64..=4 {
            if (a, b) != (0, 0) && gcd(a.abs(), b.abs()) == 1 {
                moves.push((a, b));
            }
        }
    }
    moves
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest paths in a metric on a fixed grid. The metric is cached at the
/// nodes once; edge weights use the interpolated metric at the edge midpoint.
pub struct GridGraph {
    spec: GridSpec,
    domain: PlanarDomain,
    metric: Vec<Sym2>,
    inside: Vec<bool>,
    moves: Vec<(i64, i64)>,
}

impl GridGraph {
    pub fn new(field: &MetricField, spec: &GridSpec) -> Result<Self> {
        let metric = cache_metric(field, spec)?;
        let domain = field.domain().clone();
        let inside = spec.nodes().map(|z| domain.contains(z)).collect();
        Ok(Self {
            spec: *spec,
            domain,
            metric,
            inside,
            moves: stencil(),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn segment_inside(&self, a: Complex64, b: Complex64) -> bool {
        [0.25, 0.5, 0.75, 1.0]
            .iter()
            .all(|&t| self.domain.contains(a + (b - a) * t))
    }

    fn snap_radius(&self) -> f64 {
        2.0 * self.spec.cell_size()
    }

    /// Interior nodes within the snapping radius of `z` that see `z` along a
    /// straight segment.
    fn snap_nodes(&self, z: Complex64) -> Vec<usize> {
        let r = self.snap_radius();
        let (dx, dy) = (self.spec.dx(), self.spec.dy());
        let i0 = ((z.re - r - self.spec.lo.re) / dx).floor().max(0.0) as usize;
        let j0 = ((z.im - r - self.spec.lo.im) / dy).floor().max(0.0) as usize;
        let i1 = (((z.re + r - self.spec.lo.re) / dx).ceil() as usize).min(self.spec.nx - 1);
        let j1 = (((z.im + r - self.spec.lo.im) / dy).ceil() as usize).min(self.spec.ny - 1);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let k = self.spec.index(i, j);
                let w = self.spec.node_at(k);
                if self.inside[k] && (w - z).norm() <= r && self.segment_inside(z, w) {
                    out.push(k);
                }
            }
        }
        out
    }

    /// Single-source distances from `p` to every node. Stops early once the
    /// snapping neighbourhoods of all `targets` are settled.
    pub fn distances_from(&self, p: Complex64, targets: &[Complex64]) -> Result<Vec<f64>> {
        if !self.domain.contains(p) {
            return Err(Error::OutsideDomain(p));
        }
        let seg = SegmentMetric::new(&self.spec, &self.metric);
        let n = self.spec.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for k in self.snap_nodes(p) {
            let d = seg.length(p, self.spec.node_at(k));
            if d < dist[k] {
                dist[k] = d;
                heap.push(Entry(d, k));
            }
        }
        let mut pending: std::collections::HashSet<usize> =
            targets.iter().flat_map(|&q| self.snap_nodes(q)).collect();
        let early = !targets.is_empty();
        while let Some(Entry(d, k)) = heap.pop() {
            if done[k] || d > dist[k] {
                continue;
            }
            done[k] = true;
            if early {
                pending.remove(&k);
                if pending.is_empty() {
                    break;
                }
            }
            let (i, j) = self.spec.ij(k);
            let a = self.spec.node_at(k);
            for &(di, dj) in &self.moves {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= self.spec.nx as i64 || nj >= self.spec.ny as i64 {
                    continue;
                }
                let nk = self.spec.index(ni as usize, nj as usize);
                if done[nk] || !self.inside[nk] {
                    continue;
                }
                let b = self.spec.node_at(nk);
                if (di.abs() > 1 || dj.abs() > 1) && !self.segment_inside(a, b) {
                    continue;
                }
                let e = b - a;
                let w = seg.at(a + e * 0.5).quad([e.re, e.im]).max(0.0).sqrt();
                let cand = d + w;
                if cand < dist[nk] {
                    dist[nk] = cand;
                    heap.push(Entry(cand, nk));
                }
            }
        }
        Ok(dist)
    }

    /// Distance from the source of `dist` (at `p`) to `q`.
    pub fn query(&self, dist: &[f64], p: Complex64, q: Complex64) -> f64 {
        let seg = SegmentMetric::new(&self.spec, &self.metric);
        let mut best = f64::INFINITY;
        if (q - p).norm() <= self.snap_radius() && self.segment_inside(p, q) {
            best = seg.length(p, q);
        }
        for k in self.snap_nodes(q) {
            best = best.min(dist[k] + seg.length(self.spec.node_at(k), q));
        }
        best
    }

    pub fn distance(&self, p: Complex64, q: Complex64) -> Result<f64> {
        if !self.domain.contains(q) {
            return Err(Error::OutsideDomain(q));
        }
        let d = self.distances_from(p, &[q])?;
        let v = self.query(&d, p, q);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Unreachable(p, q))
        }
    }
}

/// Grid graphs on `spec` and on its coarsening. Distances are
/// Richardson-extrapolated assuming second-order convergence of the midpoint
/// edge weights. Build once when many pairs share a field.
pub struct ExtrapolatedDistance {
    fine: GridGraph,
    coarse: GridGraph,
}

impl ExtrapolatedDistance {
    pub fn new(field: &MetricField, spec: &GridSpec) -> Result<Self> {
        Ok(Self {
            fine: GridGraph::new(field, spec)?,
            coarse: GridGraph::new(field, &spec.coarsened())?,
        })
    }

    pub fn distance(&self, p: Complex64, q: Complex64) -> Result<f64> {
        let fine = self.fine.distance(p, q)?;
        let coarse = self.coarse.distance(p, q)?;
        Ok(fine + (fine - coarse) / 3.0)
    }
}

pub fn distance(field: &MetricField, p: Complex64, q: Complex64, spec: &GridSpec) -> Result<f64> {
    ExtrapolatedDistance::new(field, spec)?.distance(p, q)
}

/// Indicator of grid nodes, e.g. a metric ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallIndicator {
    pub spec: GridSpec,
    pub inside: Vec<bool>,
}

impl BallIndicator {
    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Value at the node nearest to `z` (false off the grid).
    pub fn at(&self, z: Complex64) -> bool {
        self.spec.nearest(z).is_some_and(|k| self.inside[k])
    }

    /// `{z : self(map(z))}` sampled at the nodes; with `map = α⁻¹` this is
    /// the image of the indicator under `α`.
    pub fn resampled(&self, map: impl Fn(Complex64) -> Complex64) -> BallIndicator {
        let inside = self.spec.nodes().map(|z| self.at(map(z))).collect();
        BallIndicator {
            spec: self.spec,
            inside,
        }
    }

    /// `|A ∩ B| / |A ∪ B|`; 1 for two empty sets.
    pub fn jaccard(&self, other: &BallIndicator) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.inside.iter().zip(&other.inside) {
            inter += usize::from(*a && *b);
            union += usize::from(*a || *b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Plain PGM (P2), 255 inside, top row at the largest `y`.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "P2")?;
        writeln!(out, "{} {}", self.spec.nx, self.spec.ny)?;
        writeln!(out, "255")?;
        for j in (0..self.spec.ny).rev() {
            let row: Vec<&str> = (0..self.spec.nx)
                .map(|i| {
                    if self.inside[self.spec.index(i, j)] {
                        "255"
                    } else {
                        "0"
                    }
                })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }

    /// CSV `x,y,inside` over all nodes, row-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = (0..self.spec.len()).map(|k| {
            let z = self.spec.node_at(k);
            vec![
                fmt_f64(z.re),
                fmt_f64(z.im),
                u8::from(self.inside[k]).to_string(),
            ]
        });
        write_csv(out, "x,y,inside", rows)
    }
}

/// Nodes within metric distance `radius` of `center` (single grid level).
pub fn metric_ball(
    field: &MetricField,
    center: Complex64,
    radius: f64,
    spec: &GridSpec,
) -> Result<BallIndicator> {
    let graph = GridGraph::new(field, spec)?;
    graph.ball(center, radius)
}

impl GridGraph {
    /// Grid distance from `p` to the nearest interior node that has an
    /// exterior 4-neighbour.
    pub fn boundary_distance(&self, p: Complex64) -> Result<f64> {
        let d = self.distances_from(p, &[])?;
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut best = f64::INFINITY;
        for (k, &dk) in d.iter().enumerate() {
            if !self.inside[k] {
                continue;
            }
            let (i, j) = self.spec.ij(k);
            let edge = i == 0
                || j == 0
                || i + 1 == nx
                || j + 1 == ny
                || !self.inside[self.spec.index(i - 1, j)]
                || !self.inside[self.spec.index(i + 1, j)]
                || !self.inside[self.spec.index(i, j - 1)]
                || !self.inside[self.spec.index(i, j + 1)];
            if edge {
                best = best.min(dk);
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::GridTooCoarse("no boundary node reachable".into()))
        }
    }

    pub fn ball(&self, center: Complex64, radius: f64) -> Result<BallIndicator> {
        let d = self.distances_from(center, &[])?;
        Ok(BallIndicator {
            spec: self.spec,
            inside: d.iter().map(|&v| v <= radius).collect(),
        })
    }
}

/// Parameters of [`common_fixed_point_with`].
#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    /// Nodes per axis of the distance grid.
    pub grid: usize,
    /// Haar nodes per circle factor.
    pub quadrature_n: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            grid: 129,
            quadrature_n: 16,
        }
    }
}

/// Minimizer of `F(x) = Σ_k w_k dist(x, α_k x)²` if `F < 1e-4 diam²`.
pub fn common_fixed_point(
    group: &CompactGroup,
    field: &MetricField,
    seed: Complex64,
) -> Result<Option<Complex64>> {
    common_fixed_point_with(group, field, seed, FixedPointOptions::default())
}

pub fn common_fixed_point_with(
    group: &CompactGroup,
    field: &MetricField,
    seed: Complex64,
    options: FixedPointOptions,
) -> Result<Option<Complex64>> {
    let domain = group.domain();
    if !domain.contains(seed) {
        return Err(Error::OutsideDomain(seed));
    }
    let nodes = group.haar_nodes(options.quadrature_n);
    let spec = GridSpec::around(domain, options.grid, 0.0);
    let graph = GridGraph::new(field, &spec)?;
    let tol = 1e-4 * domain.diameter() * domain.diameter();
    let cell = spec.cell_size();
    let objective = |x: Complex64| -> Result<f64> {
        let targets: Vec<Complex64> = nodes.iter().map(|n| n.map.apply(x)).collect();
        let d = graph.distances_from(x, &targets)?;
        Ok(nodes
            .iter()
            .zip(&targets)
            .map(|(n, &t)| n.weight * graph.query(&d, x, t).powi(2))
            .sum())
    };
    let admissible = |x: Complex64| domain.eval_defining(x) < -cell;
    for start in std::iter::once(seed).chain(restart_seeds(domain)) {
        if !admissible(start) {
            continue;
        }
        let (x, f) = descend(&objective, &admissible, start, cell)?;
        if f < tol {
            return Ok(Some(x));
        }
    }
    Ok(None)
}

fn restart_seeds(domain: &PlanarDomain) -> Vec<Complex64> {
    let c = domain.outer_circle();
    let mut seeds = vec![domain.interior_point()];
    for k in 0..4 {
        let angle = std::f64::consts::FRAC_PI_4 + k as f64 * std::f64::consts::FRAC_PI_2;
        seeds.push(c.center + Complex64::from_polar(0.5 * c.radius, angle));
    }
    seeds
}

/// Compass search with step halving, then one parabolic step per axis.
fn descend(
    f: &dyn Fn(Complex64) -> Result<f64>,
    admissible: &dyn Fn(Complex64) -> bool,
    start: Complex64,
    cell: f64,
) -> Result<(Complex64, f64)> {
    let mut x = start;
    let mut fx = f(x)?;
    let mut step = 8.0 * cell;
    while step >= cell / 8.0 {
        let mut moved = false;
        for e in [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ] {
            let y = x + e * step;
            if !admissible(y) {
                continue;
            }
            let fy = f(y)?;
            if fy < fx {
                x = y;
                fx = fy;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let s = cell / 4.0;
    for e in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
        let (a, b) = (x - e * s, x + e * s);
        if !(admissible(a) && admissible(b)) {
            continue;
        }
        let (fa, fb) = (f(a)?, f(b)?);
        let curvature = fa + fb - 2.0 * fx;
        if curvature > 0.0 {
            let t = 0.5 * s * (fa - fb) / curvature;
            let y = x + e * t.clamp(-s, s);
            if admissible(y) {
                let fy = f(y)?;
                if fy < fx {
                    x = y;
                    fx = fy;
                }
            }
        }
    }
    Ok((x, fx))
}

/// One scanned group element.
#[derive(Debug, Clone, Serialize)]
pub struct FixEntry {
    pub automorphism: Automorphism,
    pub fixed_residual: f64,
    pub derivative_residual: f64,
    /// `max |α(z) − z|` over interior samples.
    pub identity_deviation: f64,
}

/// Elements that fix the given boundary points, with their deviation from the
/// identity. `consistent` holds when every such element is the identity to
/// sample tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct FixReport {
    pub points: Vec<Complex64>,
    pub tolerance: f64,
    pub scanned: usize,
    pub elements: Vec<FixEntry>,
    pub consistent: bool,
}

impl FixReport {
    pub fn non_identity(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| e.identity_deviation > IDENTITY_TOL)
            .count()
    }
}

/// Sample tolerance for "is the identity".
pub const IDENTITY_TOL: f64 = 1e-9;

/// Scan resolution for circle groups.
pub const SCAN_RESOLUTION: usize = 4096;

fn identity_samples(domain: &PlanarDomain) -> Vec<Complex64> {
    let spec = GridSpec::around(domain, 25, 0.0);
    let pts: Vec<Complex64> = spec.nodes().filter(|&z| domain.contains(z)).collect();
    let stride = (pts.len() / 100).max(1);
    pts.into_iter().step_by(stride).take(100).collect()
}

fn scan(group: &CompactGroup, points: &[Complex64], tol: f64, with_derivative: bool) -> FixReport {
    let samples = identity_samples(group.domain());
    let nodes: Vec<HaarNode> = group.haar_nodes(SCAN_RESOLUTION);
    let scanned = nodes.len();
    let mut elements = Vec::new();
    for node in nodes {
        let fixed = points
            .iter()
            .map(|&p| (node.map.apply(p) - p).norm())
            .fold(0.0, f64::max);
        let deriv = if with_derivative {
            points
                .iter()
                .map(|&p| (node.map.derivative(p) - 1.0).norm())
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        if fixed < tol && deriv < tol {
            let dev = samples
                .iter()
                .map(|&z| (node.map.apply(z) - z).norm())
                .fold(0.0, f64::max);
            elements.push(FixEntry {
                automorphism: node.aut,
                fixed_residual: fixed,
                derivative_residual: deriv,
                identity_deviation: dev,
            });
        }
    }
    let consistent = elements
        .iter()
        .all(|e| e.identity_deviation <= IDENTITY_TOL);
    FixReport {
        points: points.to_vec(),
        tolerance: tol,
        scanned,
        elements,
        consistent,
    }
}

fn check_on_boundary(domain: &PlanarDomain, p: Complex64) -> Result<()> {
    if domain.distance_to_boundary_set(p) > 1e-9 {
        return Err(Error::InvalidInput(format!("{p} is not on the boundary")));
    }
    Ok(())
}

/// Elements with `α(P) = P` and `α′(P) = 1` at a boundary point `P`.
pub fn boundary_rigidity_check(
    group: &CompactGroup,
    boundary_point: Complex64,
    tol: f64,
) -> Result<FixReport> {
    check_on_boundary(group.domain(), boundary_point)?;
    Ok(scan(group, &[boundary_point], tol, true))
}

/// Elements fixing every listed boundary point. The points are assumed to be
/// in general position; at least two are required.
pub fn general_position_fix_check(
    group: &CompactGroup,
    points: &[Complex64],
    tol: f64,
) -> Result<FixReport> {
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    fixed_point_scan(group, points, tol)
}

/// Elements fixing every listed boundary point, without a lower bound on the
/// number of points.
pub fn fixed_point_scan(group: &CompactGroup, points: &[Complex64], tol: f64) -> Result<FixReport> {
    for &p in points {
        check_on_boundary(group.domain(), p)?;
    }
    Ok(scan(group, points, tol, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automorphism::GroupStructure;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn christoffel_examples() {
        let disc = PlanarDomain::unit_disc();
        let e = MetricField::euclidean(disc.clone());
        let g = christoffel(&e, c(0.3, 0.1), 1e-4).unwrap().value;
        assert!(g.iter().flatten().flatten().all(|&x| x == 0.0));
        let p = MetricField::poincare();
        let g0 = christoffel(&p, c(0.0, 0.0), 2e-4).unwrap().value;
        assert!(g0.iter().flatten().flatten().all(|&x| x.abs() < 1e-8));
        // λ = (1 − |z|²)^{−2}: Γ¹₁₁ = ½ ∂₁ log λ = 2x/(1 − |z|²)
        let g = christoffel(&p, c(0.5, 0.0), 2e-4).unwrap().value;
        let half_dlog = 2.0 * 0.5 / 0.75;
        assert!((g[0][0][0] - half_dlog).abs() < 1e-6);
        assert!((g[0][1][1] + half_dlog).abs() < 1e-6);
        assert!((g[1][0][1] - half_dlog).abs() < 1e-6);
        assert!(g[1][0][0].abs() < 1e-8);
    }

    #[test]
    fn curvature_examples() {
        let p = MetricField::poincare();
        let k = gauss_curvature(&p, c(0.2, 0.1), 2e-4).unwrap();
        assert!((k.value + 4.0).abs() < 1e-3 && !k.clipped);
        let e = MetricField::euclidean(PlanarDomain::unit_disc());
        assert!(gauss_curvature(&e, c(0.2, 0.1), 2e-4).unwrap().value.abs() < 1e-8);
        // the same metric through the general formula
        let general = MetricField::custom(
            PlanarDomain::unit_disc(),
            "poincare",
            false,
            |z: Complex64| Ok(Sym2::scalar((1.0 - z.norm_sqr()).powi(-2))),
        );
        let k = gauss_curvature(&general, c(0.2, 0.1), 1e-3).unwrap();
        assert!((k.value + 4.0).abs() < 1e-3, "{}", k.value);
    }

    #[test]
    fn geodesic_examples() {
        let e = MetricField::euclidean(PlanarDomain::unit_disc());
        let path = geodesic(&e, c(0.0, 0.0), [3.0, 4.0], 0.5, 50).unwrap();
        let end = *path.points.last().unwrap();
        assert!((end - c(0.3, 0.4)).norm() < 1e-12);

        let p = MetricField::poincare();
        let path = geodesic(&p, c(0.0, 0.0), [1.0, 0.0], 1.0, 1000).unwrap();
        let end = *path.points.last().unwrap();
        assert!((end.re - 1f64.tanh()).abs() < 1e-7 && end.im.abs() < 1e-12);
        let speeds = path.speeds(&p).unwrap();
        assert!(speeds.iter().all(|s| (s - 1.0).abs() < 1e-4));

        match geodesic(&e, c(0.0, 0.0), [1.0, 0.0], 2.0, 200) {
            Err(Error::PathExited(partial)) => assert_eq!(partial.points.len(), 100),
            other => panic!("expected an exit, got {other:?}"),
        }
    }

    #[test]
    fn grid_distances() {
        let disc = PlanarDomain::unit_disc();
        let spec = GridSpec::around(&disc, 129, 0.0);
        let e = MetricField::euclidean(disc.clone());
        let d = distance(&e, c(0.0, 0.0), c(0.5, 0.0), &spec).unwrap();
        assert!((d - 0.5).abs() < 0.005, "{d}");
        let p = MetricField::poincare();
        let d = distance(&p, c(0.0, 0.0), c(0.5, 0.0), &spec).unwrap();
        assert!((d - 0.5f64.atanh()).abs() < 0.01 * 0.5f64.atanh(), "{d}");
        let (a, b) = (c(0.1, 0.2), c(-0.4, -0.1));
        let g = GridGraph::new(&p, &spec).unwrap();
        assert!((g.distance(a, b).unwrap() - g.distance(b, a).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn poincare_ball_is_round() {
        let p = MetricField::poincare();
        let spec = GridSpec::around(p.domain(), 129, 0.0);
        let ball = metric_ball(&p, c(0.0, 0.0), 0.5f64.atanh(), &spec).unwrap();
        let exact = BallIndicator {
            spec,
            inside: spec.nodes().map(|z| z.norm() <= 0.5).collect(),
        };
        assert!(ball.jaccard(&exact) >= 0.99, "{}", ball.jaccard(&exact));
    }

    #[test]
    fn fixed_points() {
        let disc = PlanarDomain::unit_disc();
        let e = MetricField::euclidean(disc.clone());
        let trivial = CompactGroup::trivial(disc.clone());
        assert_eq!(
            common_fixed_point(&trivial, &e, c(0.2, 0.1)).unwrap(),
            Some(c(0.2, 0.1))
        );
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let g = CompactGroup::rotations(4, annulus.clone()).unwrap();
        let opts = FixedPointOptions {
            grid: 65,
            quadrature_n: 4,
        };
        let r = common_fixed_point_with(&g, &MetricField::euclidean(annulus), c(1.5, 0.0), opts)
            .unwrap();
        assert_eq!(r, None);
    }

    #[test]
    fn rigidity_scans() {
        let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let rot = CompactGroup::circle(annulus.clone()).unwrap();
        let report = boundary_rigidity_check(&rot, c(1.0, 0.0), 1e-6).unwrap();
        assert_eq!(report.elements.len(), 1);
        assert!(report.consistent);
        let full = CompactGroup::new(
            GroupStructure::CircleWithInversion {
                inversion: 2.0,
                conjugator: None,
            },
            annulus,
        )
        .unwrap();
        let report = boundary_rigidity_check(&full, c(0.0, 2.0), 1e-6).unwrap();
        assert_eq!(report.non_identity(), 0);
        assert!(matches!(
            general_position_fix_check(&full, &[c(1.0, 0.0)], 1e-6),
            Err(Error::InsufficientPoints { needed: 2, got: 1 })
        ));
        let report = general_position_fix_check(&full, &[c(1.0, 0.0), c(0.0, 2.0)], 1e-6).unwrap();
        assert_eq!(report.elements.len(), 1);
        assert!(report.consistent);
        assert!(boundary_rigidity_check(&full, c(1.5, 0.0), 1e-6).is_err());
    }

    #[test]
    fn pgm_layout() {
        let spec = GridSpec::new(c(0.0, 0.0), c(1.0, 1.0), 8, 8).unwrap();
        let mut inside = vec![false; 64];
        inside[spec.index(0, 7)] = true;
        let ball = BallIndicator { spec, inside };
        let mut buf = Vec::new();
        ball.write_pgm(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(&lines[..3], &["P2", "8 8", "255"]);
        assert!(lines[3].starts_with("255 0"));
    }
}
