//! Riemannian metrics on planar domains as fields of SPD 2×2 matrices,
//! pullback under automorphisms and Haar averaging.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::automorphism::{
    mobius_self_map_residual, Automorphism, CompactGroup, Mobius, SELF_MAP_TOL,
};
use crate::domain::{GridSpec, PlanarDomain};
use crate::error::{Error, Result};
use crate::output::{fmt_f64, write_csv};
use crate::sym2::{complex_jacobian, pairwise_sum, Sym2};

type Evaluator = dyn Fn(Complex64) -> Result<Sym2> + Send + Sync;
type Scalar = dyn Fn(Complex64) -> Result<f64> + Send + Sync;

/// Where a field came from; recorded in manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Euclidean,
    Poincare,
    Constant,
    Custom { name: String },
    Bergman { model: String },
    Averaged { base: Box<Provenance>, nodes: usize },
    Blended { stage: String },
    GridInterpolated { nx: usize, ny: usize },
}

/// Metric field `z ↦ G(z)` on a planar domain.
#[derive(Clone)]
pub struct MetricField {
    domain: PlanarDomain,
    provenance: Provenance,
    smooth_to_boundary: bool,
    eval: Arc<Evaluator>,
    conformal: Option<Arc<Scalar>>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("provenance", &self.provenance)
            .field("smooth_to_boundary", &self.smooth_to_boundary)
            .field("conformal", &self.conformal.is_some())
            .finish()
    }
}

impl MetricField {
    /// Field from an arbitrary evaluator. `smooth_to_boundary` allows
    /// evaluation on the closure.
    pub fn custom(
        domain: PlanarDomain,
        name: &str,
        smooth_to_boundary: bool,
        f: impl Fn(Complex64) -> Result<Sym2> + Send + Sync + 'static,
    ) -> Self {
        Self::from_parts(
            domain,
            Provenance::Custom { name: name.into() },
            smooth_to_boundary,
            Arc::new(f),
            None,
        )
    }

    pub(crate) fn from_parts(
        domain: PlanarDomain,
        provenance: Provenance,
        smooth_to_boundary: bool,
        eval: Arc<Evaluator>,
        conformal: Option<Arc<Scalar>>,
    ) -> Self {
        Self {
            domain,
            provenance,
            smooth_to_boundary,
            eval,
            conformal,
        }
    }

    /// Conformal field `λ(z) I`.
    pub fn conformal(
        domain: PlanarDomain,
        provenance: Provenance,
        smooth_to_boundary: bool,
        lambda: impl Fn(Complex64) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        let lambda: Arc<Scalar> = Arc::new(lambda);
        let l = Arc::clone(&lambda);
        let eval: Arc<Evaluator> = Arc::new(move |z| Ok(Sym2::scalar(l(z)?)));
        Self::from_parts(domain, provenance, smooth_to_boundary, eval, Some(lambda))
    }

    pub fn euclidean(domain: PlanarDomain) -> Self {
        Self::conformal(domain, Provenance::Euclidean, true, |_| Ok(1.0))
    }

    pub fn constant(domain: PlanarDomain, value: Sym2) -> Self {
        Self::from_parts(
            domain,
            Provenance::Constant,
            true,
            Arc::new(move |_| Ok(value)),
            None,
        )
    }

    /// `|ξ|² / (1 − |z|²)²` on the unit disc.
    pub fn poincare() -> Self {
        Self::conformal(
            PlanarDomain::unit_disc(),
            Provenance::Poincare,
            false,
            |z: Complex64| {
                let s = 1.0 - z.norm_sqr();
                Ok(1.0 / (s * s))
            },
        )
    }

    /// Bilinear interpolation of node values with SPD repair.
    pub fn grid_interpolated(
        domain: PlanarDomain,
        spec: GridSpec,
        values: Vec<Sym2>,
    ) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidInput(format!(
                "{} node values for a {}x{} grid",
                values.len(),
                spec.nx,
                spec.ny
            )));
        }
        let values = Arc::new(values);
        let eval: Arc<Evaluator> =
            Arc::new(move |z| interpolate_sym2(&spec, &values, z).ok_or(Error::OutsideDomain(z)));
        Ok(Self::from_parts(
            domain,
            Provenance::GridInterpolated {
                nx: spec.nx,
                ny: spec.ny,
            },
            true,
            eval,
            None,
        ))
    }

    pub fn domain(&self) -> &PlanarDomain {
        &self.domain
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn is_smooth_to_boundary(&self) -> bool {
        self.smooth_to_boundary
    }

    pub fn is_conformal(&self) -> bool {
        self.conformal.is_some()
    }

    /// `λ(z)` for conformal fields.
    pub fn conformal_factor(&self, z: Complex64) -> Option<Result<f64>> {
        self.conformal.as_ref().map(|l| {
            self.check_point(z)?;
            l(z)
        })
    }

    fn check_point(&self, z: Complex64) -> Result<()> {
        let rho = self.domain.eval_defining(z);
        let ok = if self.smooth_to_boundary {
            rho <= 1e-9 * self.domain.diameter()
        } else {
            rho < 0.0
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutsideDomain(z))
        }
    }

    /// `G(z)`, checked for membership and positivity.
    pub fn eval(&self, z: Complex64) -> Result<Sym2> {
        self.check_point(z)?;
        let g = (self.eval)(z)?;
        if !g.is_spd() {
            let (lo, hi) = g.eigenvalues();
            return Err(Error::NumericalBreakdown {
                at: z,
                detail: format!(
                    "metric {g:?} is not positive definite (eigenvalues {lo:e}, {hi:e})"
                ),
            });
        }
        Ok(g)
    }

    /// Evaluator without the membership and positivity checks, used to extend
    /// smooth fields a little past the boundary.
    pub fn eval_unchecked(&self, z: Complex64) -> Result<Sym2> {
        (self.eval)(z)
    }

    /// Values at every grid node in row-major order. Nodes outside the closure
    /// are evaluated unchecked and may be non-finite.
    pub fn sample_grid(&self, spec: &GridSpec) -> Vec<Option<Sym2>> {
        (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let z = spec.node_at(k);
                let g = if self.domain.in_closure(z, 0.0) {
                    self.eval(z).ok()
                } else {
                    self.eval_unchecked(z).ok()
                };
                g.filter(Sym2::is_spd)
            })
            .collect()
    }
}

/// Bilinear interpolation on a grid of SPD values, symmetrized and floored.
pub(crate) fn interpolate_sym2(spec: &GridSpec, values: &[Sym2], z: Complex64) -> Option<Sym2> {
    let (i, j, fx, fy) = spec.locate(z)?;
    let v00 = values[spec.index(i, j)];
    let v10 = values[spec.index(i + 1, j)];
    let v01 = values[spec.index(i, j + 1)];
    let v11 = values[spec.index(i + 1, j + 1)];
    let s = (1.0 - fx) * (1.0 - fy) * v00
        + fx * (1.0 - fy) * v10
        + (1.0 - fx) * fy * v01
        + fx * fy * v11;
    Some(s.with_eigen_floor(1e-10))
}

/// `Jᵀ G(α(z)) J` with `J` the real Jacobian of `α` at `z`.
pub fn pullback(field: &MetricField, aut: &Automorphism, z: Complex64) -> Result<Sym2> {
    pullback_mobius(field, &aut.mobius()?, z)
}

pub(crate) fn pullback_mobius(field: &MetricField, map: &Mobius, z: Complex64) -> Result<Sym2> {
    let g = field.eval(map.apply(z))?;
    Ok(g.congruence(complex_jacobian(map.derivative(z))))
}

/// Haar average `z ↦ Σ_k w_k α_k^* G(z)` over `haar_nodes(group, n)`.
pub fn average(group: &CompactGroup, base: &MetricField, n: usize) -> Result<MetricField> {
    let nodes = group.haar_nodes(n);
    for node in &nodes {
        let r = mobius_self_map_residual(&node.map, group.domain(), 64);
        if !(r < SELF_MAP_TOL) {
            return Err(Error::InvalidGroup(format!(
                "{:?} fails the self-map check (residual {r:e})",
                node.aut
            )));
        }
    }
    let count = nodes.len();
    let terms: Vec<(Mobius, f64)> = nodes.into_iter().map(|n| (n.map, n.weight)).collect();
    let base_field = base.clone();
    let eval: Arc<Evaluator> = Arc::new(move |z| {
        let parts = terms
            .iter()
            .map(|(m, w)| Ok(*w * pullback_mobius(&base_field, m, z)?))
            .collect::<Result<Vec<Sym2>>>()?;
        Ok(pairwise_sum(&parts))
    });
    Ok(MetricField::from_parts(
        group.domain().clone(),
        Provenance::Averaged {
            base: Box::new(base.provenance.clone()),
            nodes: count,
        },
        base.smooth_to_boundary,
        eval,
        None,
    ))
}

/// `max_{z, α} ‖α^* G(z) − G(z)‖_F / max(1, ‖G(z)‖_F)` over the samples and
/// the Haar nodes of `group`.
pub fn invariance_residual(
    field: &MetricField,
    group: &CompactGroup,
    samples: &[Complex64],
    n: usize,
) -> Result<f64> {
    let maps: Vec<Mobius> = group.haar_nodes(n).into_iter().map(|n| n.map).collect();
    let per_sample = samples
        .par_iter()
        .map(|&z| {
            let g = field.eval(z)?;
            let scale = g.frobenius().max(1.0);
            let mut worst: f64 = 0.0;
            for m in &maps {
                let p = pullback_mobius(field, m, z)?;
                worst = worst.max((p - g).frobenius() / scale);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_sample.into_iter().fold(0.0, f64::max))
}

/// Values on the interior nodes of `spec`, row-major.
pub fn interior_values(field: &MetricField, spec: &GridSpec) -> Result<Vec<(Complex64, Sym2)>> {
    let nodes: Vec<Complex64> = spec
        .nodes()
        .filter(|&z| field.domain().contains(z))
        .collect();
    nodes.par_iter().map(|&z| Ok((z, field.eval(z)?))).collect()
}

/// CSV `x,y,g11,g12,g22` over the interior nodes of `spec`, row-major.
pub fn write_metric_csv<W: Write>(field: &MetricField, spec: &GridSpec, out: W) -> Result<()> {
    let values = interior_values(field, spec)?;
    let rows = values.into_iter().map(|(z, g)| {
        vec![
            fmt_f64(z.re),
            fmt_f64(z.im),
            fmt_f64(g.xx),
            fmt_f64(g.xy),
            fmt_f64(g.yy),
        ]
    });
    write_csv(out, "x,y,g11,g12,g22", rows)
}
