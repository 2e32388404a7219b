//! Config-driven batch front end.
//!
//! A run reads an [`ExperimentConfig`], executes one or more [`Command`]s and
//! writes CSV/PGM/JSON artifacts plus `manifest.json` into the output
//! directory. Exit status: 0 success, 2 a checked property failed its
//! tolerance, 1 any error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::automorphism::{noncompact_disc_sequence, CompactGroup, GroupStructure};
use crate::bergman::{
    bergman_metric_field, transformation_residual, write_kernel_csv, BasisSpec, KernelModel,
};
use crate::blend::{
    build_blended, classify_layer, default_delta, h_distance_field, layer_equivariance,
    write_layers_csv, BlendedMetric, DistanceGrid, Layer,
};
use crate::domain::{DomainKind, GridSpec, PlanarDomain};
use crate::error::{Error, Result};
use crate::geometry::{
    boundary_rigidity_check, common_fixed_point, default_fd_step, fixed_point_scan,
    gauss_curvature, general_position_fix_check, geodesic, GridGraph,
};
use crate::metric::{average, invariance_residual, write_metric_csv, MetricField};
use crate::output::{fmt_f64, write_csv};
use crate::sym2::Sym2;

/// Every command the front end knows, in kebab-case on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    BuildMetric,
    InvarianceReport,
    Layers,
    Geodesic,
    Ball,
    KernelCheck,
    FixedPoint,
    Rigidity,
    Curvature,
    DemoNoncompact,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::BuildMetric,
        Command::InvarianceReport,
        Command::Layers,
        Command::Geodesic,
        Command::Ball,
        Command::KernelCheck,
        Command::FixedPoint,
        Command::Rigidity,
        Command::Curvature,
        Command::DemoNoncompact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::BuildMetric => "build-metric",
            Command::InvarianceReport => "invariance-report",
            Command::Layers => "layers",
            Command::Geodesic => "geodesic",
            Command::Ball => "ball",
            Command::KernelCheck => "kernel-check",
            Command::FixedPoint => "fixed-point",
            Command::Rigidity => "rigidity",
            Command::Curvature => "curvature",
            Command::DemoNoncompact => "demo-noncompact",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMetric {
    Euclidean,
    Poincare,
    /// Constant `[g11, g12, g22]`.
    Constant([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BergmanChoice {
    /// Closed form for the unit disc, series for a centered annulus, numeric
    /// basis otherwise.
    Auto {
        #[serde(default)]
        basis: Option<BasisSpec>,
    },
    DiscClosed,
    AnnulusSeries {
        #[serde(default)]
        truncation: Option<usize>,
    },
    Numeric {
        #[serde(default)]
        basis: Option<BasisSpec>,
    },
}

/// Which stage of the pipeline a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    Base,
    Averaged,
    Bergman,
    BlendedH,
    Htilde,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub invariance: Option<f64>,
    pub kernel: Option<f64>,
    pub jaccard: Option<f64>,
    pub speed_drift: Option<f64>,
    pub curvature: Option<f64>,
    pub rigidity: Option<f64>,
    pub orthogonality: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicConfig {
    pub field: Option<FieldChoice>,
    pub start: Option<Complex64>,
    pub velocity: Option<[f64; 2]>,
    pub length: Option<f64>,
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub field: Option<FieldChoice>,
    pub center: Option<Complex64>,
    /// Absolute radius; overrides `radius_fraction`.
    pub radius: Option<f64>,
    /// Radius as a fraction of the grid distance from the center to the boundary.
    pub radius_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckConfig {
    /// Number of sample pairs.
    pub pairs: Option<usize>,
    /// Every checked group image of a sample keeps this Euclidean distance
    /// from the boundary; a finite basis converges slowly near the boundary.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    pub field: Option<FieldChoice>,
    pub seed: Option<Complex64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityConfig {
    pub points: Option<Vec<Complex64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    pub field: Option<FieldChoice>,
    pub grid: Option<usize>,
    /// Minimum Euclidean distance of sampled nodes from the boundary.
    pub margin: Option<f64>,
    /// If set, every sample must match within the curvature tolerance.
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoncompactConfig {
    pub j: Option<Vec<u32>>,
}

/// JSON experiment description. Unset fields take documented defaults, which
/// are recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub domain: DomainKind,
    /// Trivial group when absent.
    #[serde(default)]
    pub group: Option<GroupStructure>,
    #[serde(default)]
    pub base_metric: Option<BaseMetric>,
    /// Haar nodes per circle factor.
    #[serde(default)]
    pub quadrature_n: Option<usize>,
    /// Grid nodes per axis.
    #[serde(default)]
    pub grid: Option<usize>,
    /// Cutoff width; `ε = 2δ` always.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub bergman: Option<BergmanChoice>,
    /// Interior samples for the statistical checks.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub commands: Option<Vec<Command>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub geodesic: Option<GeodesicConfig>,
    #[serde(default)]
    pub ball: Option<BallConfig>,
    #[serde(default)]
    pub kernel_check: Option<KernelCheckConfig>,
    #[serde(default)]
    pub fixed_point: Option<FixedPointConfig>,
    #[serde(default)]
    pub rigidity: Option<RigidityConfig>,
    #[serde(default)]
    pub curvature: Option<CurvatureConfig>,
    #[serde(default)]
    pub noncompact: Option<NoncompactConfig>,
}

impl ExperimentConfig {
    /// Parses JSON; diagnostics carry the line, column and offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Records which defaults were applied.
#[derive(Default)]
struct Defaults(BTreeMap<String, Value>);

impl Defaults {
    fn pick<T: Serialize>(
        &mut self,
        key: &str,
        value: Option<T>,
        default: impl FnOnce() -> T,
    ) -> T {
        match value {
            Some(v) => v,
            None => {
                let v = default();
                self.0.insert(
                    key.to_string(),
                    serde_json::to_value(&v).unwrap_or(Value::Null),
                );
                v
            }
        }
    }
}

/// A config with every default filled in.
struct Settings {
    domain: PlanarDomain,
    group: CompactGroup,
    base: BaseMetric,
    n: usize,
    grid: usize,
    delta: f64,
    bergman: BergmanChoice,
    samples: usize,
    seed: u64,
    tol: ResolvedTolerances,
    geodesic: GeodesicConfig,
    ball: BallConfig,
    kernel_check: KernelCheckConfig,
    fixed_point: FixedPointConfig,
    rigidity: RigidityConfig,
    curvature: CurvatureConfig,
    noncompact: NoncompactConfig,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct ResolvedTolerances {
    invariance: f64,
    kernel: f64,
    jaccard: f64,
    speed_drift: f64,
    curvature: f64,
    rigidity: f64,
    orthogonality: f64,
}

fn resolve(config: &ExperimentConfig, seed: Option<u64>) -> Result<(Settings, Defaults)> {
    let mut d = Defaults::default();
    let domain = PlanarDomain::new(config.domain.clone())?;
    let structure = d.pick("group", config.group.clone(), || GroupStructure::Finite {
        elements: vec![crate::Automorphism::identity()],
    });
    let group = CompactGroup::new(structure, domain.clone())?;
    let base = d.pick("base_metric", config.base_metric, || BaseMetric::Euclidean);
    let n = d.pick("quadrature_n", config.quadrature_n, || 64);
    let grid = d.pick("grid", config.grid, || 256);
    let delta = d.pick("delta", config.delta, || default_delta(&domain));
    let bergman = d.pick("bergman", config.bergman.clone(), || BergmanChoice::Auto {
        basis: None,
    });
    let samples = d.pick("samples", config.samples, || 200);
    let seed = match seed {
        Some(s) => s,
        None => d.pick("seed", config.seed, || 0),
    };
    let t = config.tolerances.clone().unwrap_or_default();
    let tol = ResolvedTolerances {
        invariance: d.pick("tolerances.invariance", t.invariance, || 1e-8),
        kernel: d.pick("tolerances.kernel", t.kernel, || 1e-5),
        jaccard: d.pick("tolerances.jaccard", t.jaccard, || 0.99),
        speed_drift: d.pick("tolerances.speed_drift", t.speed_drift, || 1e-4),
        curvature: d.pick("tolerances.curvature", t.curvature, || 1e-3),
        rigidity: d.pick("tolerances.rigidity", t.rigidity, || 1e-6),
        orthogonality: d.pick("tolerances.orthogonality", t.orthogonality, || 1e-2),
    };
    if n == 0 {
        return Err(Error::Config("quadrature_n must be positive".into()));
    }
    if grid < 16 {
        return Err(Error::Config(format!("grid {grid} is below 16")));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta {delta} must be positive")));
    }
    if samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    let settings = Settings {
        domain,
        group,
        base,
        n,
        grid,
        delta,
        bergman,
        samples,
        seed,
        tol,
        geodesic: config.geodesic.clone().unwrap_or_default(),
        ball: config.ball.clone().unwrap_or_default(),
        kernel_check: config.kernel_check.clone().unwrap_or_default(),
        fixed_point: config.fixed_point.clone().unwrap_or_default(),
        rigidity: config.rigidity.clone().unwrap_or_default(),
        curvature: config.curvature.clone().unwrap_or_default(),
        noncompact: config.noncompact.clone().unwrap_or_default(),
    };
    Ok((settings, d))
}

/// Result of one command.
#[derive(Debug, Clone, Serialize)]
pub struct CommandOutcome {
    pub command: Command,
    /// Names of the properties that failed their tolerance.
    pub failures: Vec<String>,
    pub outputs: Vec<String>,
    pub seconds: f64,
}

/// Result of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub commands: Vec<CommandOutcome>,
    pub error: Option<String>,
}

/// Runs `commands` (or the config's command list) into `out` (or the
/// config's output directory). Errors are reported through the exit code and
/// the manifest; the returned `Err` is reserved for failures to write the
/// manifest itself.
pub fn run(
    config: &ExperimentConfig,
    commands: &[Command],
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<RunOutcome> {
    let out: PathBuf = match out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
    {
        Some(p) => p,
        None => return Err(Error::Config("no output directory given".into())),
    };
    std::fs::create_dir_all(&out)?;
    let commands: Vec<Command> = if commands.is_empty() {
        config.commands.clone().unwrap_or_default()
    } else {
        commands.to_vec()
    };
    let mut outcome = RunOutcome {
        exit_code: 0,
        commands: Vec::new(),
        error: None,
    };
    let mut defaults = Defaults::default();
    let mut timings: Vec<(String, f64)> = Vec::new();
    let started = Instant::now();
    let result = (|| -> Result<()> {
        if commands.is_empty() {
            return Err(Error::Config("no command given".into()));
        }
        let (settings, d) = resolve(config, seed)?;
        defaults = d;
        let mut pipeline = Pipeline::new(&settings);
        for &command in &commands {
            let t0 = Instant::now();
            let mut report = Report::default();
            pipeline.execute(command, &out, &mut defaults, &mut report)?;
            let seconds = t0.elapsed().as_secs_f64();
            outcome.commands.push(CommandOutcome {
                command,
                failures: report.failures,
                outputs: report.outputs,
                seconds,
            });
        }
        timings = pipeline.timings;
        Ok(())
    })();
    if let Err(e) = result {
        outcome.exit_code = 1;
        outcome.error = Some(e.to_string());
    } else if outcome.commands.iter().any(|c| !c.failures.is_empty()) {
        outcome.exit_code = 2;
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": config.hash(),
        "config_name": config.name,
        "commands": commands.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "defaults_applied": defaults.0,
        "timings_seconds": timings.iter().map(|(k, v)| json!({"stage": k, "seconds": v})).collect::<Vec<_>>(),
        "total_seconds": started.elapsed().as_secs_f64(),
        "results": outcome.commands,
        "exit_code": outcome.exit_code,
        "error": outcome.error,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(outcome)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    Ok(())
}

#[derive(Default)]
struct Report {
    failures: Vec<String>,
    outputs: Vec<String>,
}

impl Report {
    fn check(&mut self, ok: bool, property: &str) {
        if !ok {
            self.failures.push(property.to_string());
        }
    }

    fn file(&mut self, out: &Path, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(out.join(name))?))
    }

    fn json(&mut self, out: &Path, name: &str, value: &Value) -> Result<()> {
        self.outputs.push(name.to_string());
        write_json(&out.join(name), value)
    }
}

fn point(z: Complex64) -> Value {
    json!([z.re, z.im])
}

/// Lazily built pipeline stages shared by the commands of one run.
struct Pipeline<'a> {
    s: &'a Settings,
    timings: Vec<(String, f64)>,
    base: Option<MetricField>,
    averaged: Option<MetricField>,
    kernel: Option<KernelModel>,
    bergman: Option<MetricField>,
    blended: Option<BlendedMetric>,
    distance: Option<std::sync::Arc<DistanceGrid>>,
}

impl<'a> Pipeline<'a> {
    fn new(s: &'a Settings) -> Self {
        Self {
            s,
            timings: Vec::new(),
            base: None,
            averaged: None,
            kernel: None,
            bergman: None,
            blended: None,
            distance: None,
        }
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let v = f(self)?;
        self.timings
            .push((stage.to_string(), t0.elapsed().as_secs_f64()));
        Ok(v)
    }

    fn spec(&self) -> GridSpec {
        GridSpec::around(&self.s.domain, self.s.grid, 0.0)
    }

    fn base(&mut self) -> Result<MetricField> {
        if self.base.is_none() {
            let domain = self.s.domain.clone();
            self.base = Some(match self.s.base {
                BaseMetric::Euclidean => MetricField::euclidean(domain),
                BaseMetric::Poincare => {
                    if domain != PlanarDomain::unit_disc() {
                        return Err(Error::Config(
                            "the poincare base metric needs the unit disc".into(),
                        ));
                    }
                    MetricField::poincare()
                }
                BaseMetric::Constant([a, b, c]) => {
                    let g = Sym2::new(a, b, c);
                    if !g.is_spd() {
                        return Err(Error::Config(
                            "constant base metric is not positive definite".into(),
                        ));
                    }
                    MetricField::constant(domain, g)
                }
            });
        }
        Ok(self.base.clone().expect("set above"))
    }

    fn averaged(&mut self) -> Result<MetricField> {
        if self.averaged.is_none() {
            let base = self.base()?;
            let h = self.timed("average", |p| average(&p.s.group, &base, p.s.n))?;
            self.averaged = Some(h);
        }
        Ok(self.averaged.clone().expect("set above"))
    }

    fn kernel(&mut self) -> Result<KernelModel> {
        if self.kernel.is_none() {
            let domain = &self.s.domain;
            let model = self.timed("bergman kernel", |p| -> Result<KernelModel> {
                match &p.s.bergman {
                    BergmanChoice::DiscClosed => {
                        if *domain != PlanarDomain::unit_disc() {
                            return Err(Error::Config("disc_closed needs the unit disc".into()));
                        }
                        Ok(KernelModel::DiscClosed)
                    }
                    BergmanChoice::AnnulusSeries { truncation } => match domain.kind() {
                        DomainKind::Annulus { inner, outer } => KernelModel::annulus_truncated(
                            *inner,
                            *outer,
                            truncation.unwrap_or(crate::bergman::DEFAULT_TRUNCATION),
                        ),
                        _ => Err(Error::Config(
                            "annulus_series needs an annulus domain".into(),
                        )),
                    },
                    BergmanChoice::Numeric { basis } => {
                        KernelModel::numeric(domain, basis.unwrap_or_default())
                    }
                    BergmanChoice::Auto { basis } => match domain.kind() {
                        DomainKind::Annulus { inner, outer } => {
                            KernelModel::annulus(*inner, *outer)
                        }
                        _ if *domain == PlanarDomain::unit_disc() => Ok(KernelModel::DiscClosed),
                        _ => KernelModel::numeric(domain, basis.unwrap_or_default()),
                    },
                }
            })?;
            self.kernel = Some(model);
        }
        Ok(self.kernel.clone().expect("set above"))
    }

    fn bergman(&mut self) -> Result<MetricField> {
        if self.bergman.is_none() {
            let model = self.kernel()?;
            self.bergman = Some(bergman_metric_field(&model, &self.s.domain)?);
        }
        Ok(self.bergman.clone().expect("set above"))
    }

    fn distance(&mut self) -> Result<std::sync::Arc<DistanceGrid>> {
        if let Some(b) = &self.blended {
            return Ok(std::sync::Arc::clone(&b.dist));
        }
        if self.distance.is_none() {
            let h = self.averaged()?;
            let spec = self.spec();
            let delta = self.s.delta;
            let dist = self.timed("distance grid", |p| {
                h_distance_field(&p.s.domain, &h, &spec)
            })?;
            self.distance = Some(std::sync::Arc::new(dist.with_tube_width(2.0 * delta)));
        }
        Ok(std::sync::Arc::clone(
            self.distance.as_ref().expect("set above"),
        ))
    }

    fn blended(&mut self) -> Result<BlendedMetric> {
        if self.blended.is_none() {
            let h = self.averaged()?;
            let b = self.bergman()?;
            let spec = self.spec();
            let bm = self.timed("blend", |p| build_blended(&h, &b, &spec, p.s.delta))?;
            self.blended = Some(bm);
        }
        Ok(self.blended.clone().expect("set above"))
    }

    fn field(&mut self, choice: FieldChoice) -> Result<MetricField> {
        match choice {
            FieldChoice::Base => self.base(),
            FieldChoice::Averaged => self.averaged(),
            FieldChoice::Bergman => self.bergman(),
            FieldChoice::BlendedH => Ok(self.blended()?.big_h),
            FieldChoice::Htilde => Ok(self.blended()?.htilde),
        }
    }

    /// `count` interior points with `ρ < −margin`, drawn from the run seed.
    fn samples(&self, count: usize, margin: f64, stream: u64) -> Vec<Complex64> {
        random_interior(
            &self.s.domain,
            count,
            margin,
            self.s.seed.wrapping_add(stream),
        )
    }

    fn execute(
        &mut self,
        command: Command,
        out: &Path,
        d: &mut Defaults,
        r: &mut Report,
    ) -> Result<()> {
        match command {
            Command::BuildMetric => self.build_metric(out, r),
            Command::InvarianceReport => self.invariance_report(out, r),
            Command::Layers => self.layers(out, r),
            Command::Geodesic => self.geodesic(out, d, r),
            Command::Ball => self.ball(out, d, r),
            Command::KernelCheck => self.kernel_check(out, d, r),
            Command::FixedPoint => self.fixed_point(out, d, r),
            Command::Rigidity => self.rigidity(out, d, r),
            Command::Curvature => self.curvature(out, d, r),
            Command::DemoNoncompact => self.demo_noncompact(out, d, r),
        }
    }

    fn build_metric(&mut self, out: &Path, r: &mut Report) -> Result<()> {
        let bm = self.blended()?;
        let spec = self.spec();
        self.timed("export", |_| {
            write_metric_csv(&bm.htilde, &spec, r.file(out, "metric.csv")?)?;
            write_layers_csv(&bm.dist, bm.delta, r.file(out, "layers.csv")?)
        })?;
        let samples = self.samples(self.s.samples, 0.0, 1);
        let plateau = bm.plateau_report(&samples)?;
        let near = p_layer_samples(&bm, 100, self.s.seed.wrapping_add(5))?;
        let orth = bm.product_orthogonality(&near)?;
        r.check(plateau.max_deviation == 0.0, "plateau exactness");
        r.check(
            orth.max_ratio < self.s.tol.orthogonality,
            "product orthogonality",
        );
        r.json(
            out,
            "build-metric.json",
            &json!({
                "delta": bm.delta,
                "epsilon": bm.epsilon,
                "tube_width": bm.dist.tube_width(),
                "grid": [spec.nx, spec.ny],
                "bergman": self.kernel()?.name(),
                "layer_counts": layer_counts(&bm.dist, bm.delta),
                "plateau": plateau,
                "product_orthogonality": orth,
                "orthogonality_tolerance": self.s.tol.orthogonality,
            }),
        )
    }

    fn invariance_report(&mut self, out: &Path, r: &mut Report) -> Result<()> {
        let h = self.averaged()?;
        let base = self.base()?;
        let samples = self.samples(self.s.samples, 0.0, 2);
        let n = self.s.n;
        let (check, base_residual) = self.timed("invariance", |p| {
            let check = invariance_residual(&h, &p.s.group, &samples, 97.max(2 * n + 1))?;
            Ok((
                check,
                invariance_residual(&base, &p.s.group, &samples, 97.max(2 * n + 1))?,
            ))
        })?;
        r.check(check < self.s.tol.invariance, "averaged metric invariance");
        r.json(
            out,
            "invariance.json",
            &json!({
                "quadrature_n": n,
                "samples": samples.len(),
                "averaged_residual": check,
                "base_residual": base_residual,
                "tolerance": self.s.tol.invariance,
            }),
        )
    }

    fn layers(&mut self, out: &Path, r: &mut Report) -> Result<()> {
        let dist = self.distance()?;
        let h = self.averaged()?;
        write_layers_csv(&dist, self.s.delta, r.file(out, "layers.csv")?)?;
        let samples = self.samples(500, 0.0, 3);
        let eq = self.timed("layer equivariance", |p| {
            layer_equivariance(&dist, &h, &p.s.group, p.s.n, p.s.delta, &samples)
        })?;
        r.check(eq.unexcused == 0, "layer equivariance");
        r.json(
            out,
            "layers.json",
            &json!({
                "delta": self.s.delta,
                "thresholds": [self.s.delta / 3.0, 4.0 * self.s.delta / 3.0],
                "layer_counts": layer_counts(&dist, self.s.delta),
                "equivariance": eq,
            }),
        )
    }

    fn geodesic(&mut self, out: &Path, d: &mut Defaults, r: &mut Report) -> Result<()> {
        let g = self.s.geodesic.clone();
        let field = self.field(d.pick("geodesic.field", g.field, || FieldChoice::Averaged))?;
        let start = d.pick("geodesic.start", g.start, || {
            self.s.domain.deepest_point().0
        });
        let velocity = d.pick("geodesic.velocity", g.velocity, || [1.0, 0.0]);
        let length = d.pick("geodesic.length", g.length, || 1.0);
        let steps = d.pick("geodesic.steps", g.steps, || 1000);
        let (path, exited) = match geodesic(&field, start, velocity, length, steps) {
            Ok(p) => (p, false),
            Err(Error::PathExited(p)) => (*p, true),
            Err(e) => return Err(e),
        };
        path.write_csv(r.file(out, "geodesic.csv")?)?;
        let speeds = path.speeds(&field)?;
        let drift = speeds.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        r.check(
            drift < self.s.tol.speed_drift,
            "geodesic speed conservation",
        );
        r.json(
            out,
            "geodesic.json",
            &json!({
                "start": point(start),
                "end": point(*path.points.last().expect("path starts with one point")),
                "samples": path.points.len(),
                "exited": exited,
                "speed_drift": drift,
                "tolerance": self.s.tol.speed_drift,
            }),
        )
    }

    fn fixed_point_of(
        &mut self,
        field: &MetricField,
        seed: Complex64,
    ) -> Result<Option<Complex64>> {
        self.timed("fixed point", |p| {
            common_fixed_point(&p.s.group, field, seed)
        })
    }

    fn ball(&mut self, out: &Path, d: &mut Defaults, r: &mut Report) -> Result<()> {
        let b = self.s.ball.clone();
        let field = self.field(d.pick("ball.field", b.field, || FieldChoice::Htilde))?;
        let center = match b.center {
            Some(c) => c,
            None => {
                let h = self.averaged()?;
                let fallback = self.s.domain.deepest_point().0;
                let c = self.fixed_point_of(&h, fallback)?.unwrap_or(fallback);
                d.0.insert("ball.center".into(), point(c));
                c
            }
        };
        let spec = self.spec();
        let graph = self.timed("ball grid", |_| GridGraph::new(&field, &spec))?;
        let radius = match b.radius {
            Some(v) => v,
            None => {
                let fraction = d.pick("ball.radius_fraction", b.radius_fraction, || 0.5);
                let v = fraction * graph.boundary_distance(center)?;
                d.0.insert("ball.radius".into(), json!(v));
                v
            }
        };
        let ball = self.timed("ball", |_| graph.ball(center, radius))?;
        ball.write_pgm(r.file(out, "ball.pgm")?)?;
        ball.write_csv(r.file(out, "ball.csv")?)?;
        let mut worst = 1.0f64;
        let mut per_element = Vec::new();
        for node in self.s.group.scan_elements(self.s.n) {
            let inv = node.map.inverse();
            let j = ball.jaccard(&ball.resampled(|z| inv.apply(z)));
            worst = worst.min(j);
            per_element.push(json!({"automorphism": node.aut, "jaccard": j}));
        }
        r.check(worst >= self.s.tol.jaccard, "ball equivariance");
        r.json(
            out,
            "ball.json",
            &json!({
                "center": point(center),
                "radius": radius,
                "nodes_inside": ball.count(),
                "min_jaccard": worst,
                "elements": per_element,
                "tolerance": self.s.tol.jaccard,
            }),
        )
    }

    fn kernel_check(&mut self, out: &Path, d: &mut Defaults, r: &mut Report) -> Result<()> {
        let model = self.kernel()?;
        let k = self.s.kernel_check.clone();
        let count = d.pick("kernel_check.pairs", k.pairs, || 20);
        let margin = d.pick("kernel_check.margin", k.margin, || {
            0.15 * self.s.domain.inradius()
        });
        let nodes = self.s.group.haar_nodes(self.s.n.min(16));
        let domain = &self.s.domain;
        let orbit_ok = |z: Complex64| {
            nodes
                .iter()
                .all(|n| domain.eval_defining(n.map.apply(z)) < -margin)
        };
        let pool = self.samples(200 * count, margin, 4);
        let pts: Vec<Complex64> = pool
            .into_iter()
            .filter(|&z| orbit_ok(z))
            .take(2 * count)
            .collect();
        if pts.len() < 2 * count {
            return Err(Error::Config(format!(
                "fewer than {count} sample pairs keep the kernel-check margin {margin}"
            )));
        }
        let pairs: Vec<(Complex64, Complex64)> =
            pts.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        write_kernel_csv(&model, &pairs, r.file(out, "kernel.csv")?)?;
        let mut worst = 0.0f64;
        for node in &nodes {
            worst = worst.max(transformation_residual(&model, &model, &node.aut, &pairs)?);
        }
        r.check(worst < self.s.tol.kernel, "kernel transformation law");
        r.json(
            out,
            "kernel.json",
            &json!({
                "model": model.name(),
                "pairs": pairs.len(),
                "margin": margin,
                "group_nodes": nodes.len(),
                "transformation_residual": worst,
                "tolerance": self.s.tol.kernel,
            }),
        )
    }

    fn fixed_point(&mut self, out: &Path, d: &mut Defaults, r: &mut Report) -> Result<()> {
        let f = self.s.fixed_point.clone();
        let field = self.field(d.pick("fixed_point.field", f.field, || FieldChoice::Averaged))?;
        let seed = d.pick("fixed_point.seed", f.seed, || {
            self.s.domain.deepest_point().0
        });
        let found = self.fixed_point_of(&field, seed)?;
        r.json(
            out,
            "fixed-point.json",
            &json!({
                "seed": point(seed),
                "found": found.is_some(),
                "point": found.map(point),
                "grid_cell": GridSpec::around(&self.s.domain, crate::geometry::FixedPointOptions::default().grid, 0.0).cell_size(),
            }),
        )
    }

    fn rigidity(&mut self, out: &Path, d: &mut Defaults, r: &mut Report) -> Result<()> {
        let domain = &self.s.domain;
        let points = d.pick("rigidity.points", self.s.rigidity.points.clone(), || {
            let first = domain
                .holes()
                .next()
                .unwrap_or(domain.outer_circle())
                .point_at(0.0);
            vec![
                first,
                domain.outer_circle().point_at(std::f64::consts::FRAC_PI_2),
            ]
        });
        if points.is_empty() {
            return Err(Error::Config(
                "rigidity needs at least one boundary point".into(),
            ));
        }
        let tol = self.s.tol.rigidity;
        let group = &self.s.group;
        let rigid = boundary_rigidity_check(group, points[0], tol)?;
        let singles = points
            .iter()
            .map(|&p| fixed_point_scan(group, &[p], tol))
            .collect::<Result<Vec<_>>>()?;
        let general = if points.len() >= 2 {
            Some(general_position_fix_check(group, &points, tol)?)
        } else {
            None
        };
        let consistent = rigid.consistent
            && singles.iter().all(|s| s.consistent)
            && general.as_ref().is_none_or(|g| g.consistent);
        r.check(consistent, "boundary rigidity");
        r.json(
            out,
            "rigidity.json",
            &json!({
                "tolerance": tol,
                "boundary_rigidity": rigid,
                "single_point_scans": singles,
                "general_position": general,
                "consistent": consistent,
            }),
        )
    }

    fn curvature(&mut self, out: &Path, d: &mut Defaults, r: &mut Report) -> Result<()> {
        let c = self.s.curvature.clone();
        let field = self.field(d.pick("curvature.field", c.field, || FieldChoice::Averaged))?;
        let n = d.pick("curvature.grid", c.grid, || 33);
        let margin = d.pick("curvature.margin", c.margin, || {
            0.1 * self.s.domain.inradius()
        });
        let spec = GridSpec::around(&self.s.domain, n, 0.0);
        let pts = self.s.domain.sample_interior(&spec, margin)?;
        let step = default_fd_step(&self.s.domain);
        let values = pts
            .iter()
            .map(|&z| gauss_curvature(&field, z, step))
            .collect::<Result<Vec<_>>>()?;
        let rows = pts.iter().zip(&values).map(|(z, k)| {
            vec![
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(k.value),
                u8::from(k.clipped).to_string(),
            ]
        });
        write_csv(r.file(out, "curvature.csv")?, "x,y,curvature,clipped", rows)?;
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), k| {
                (a.min(k.value), b.max(k.value))
            });
        let worst = c.expected.map(|e| {
            values
                .iter()
                .map(|k| (k.value - e).abs())
                .fold(0.0, f64::max)
        });
        if let Some(w) = worst {
            r.check(w <= self.s.tol.curvature, "curvature");
        }
        r.json(
            out,
            "curvature.json",
            &json!({
                "samples": pts.len(),
                "min": lo,
                "max": hi,
                "expected": c.expected,
                "max_deviation": worst,
                "tolerance": self.s.tol.curvature,
            }),
        )
    }

    fn demo_noncompact(&mut self, out: &Path, d: &mut Defaults, r: &mut Report) -> Result<()> {
        if self.s.domain != PlanarDomain::unit_disc() {
            return Err(Error::Config(
                "demo-noncompact runs on the unit disc".into(),
            ));
        }
        let js = d.pick("noncompact.j", self.s.noncompact.j.clone(), || {
            vec![2, 10, 100]
        });
        let mut rows = Vec::new();
        let mut table = Vec::new();
        let mut exact = true;
        for &j in &js {
            if j == 0 {
                return Err(Error::Config(
                    "noncompact.j entries must be positive".into(),
                ));
            }
            let image = noncompact_disc_sequence(j).apply(Complex64::new(0.0, 0.0))?;
            let expected = 1.0 - 1.0 / f64::from(j);
            let distance = self.s.domain.euclidean_boundary_distance(image)?;
            exact &= image == Complex64::new(expected, 0.0);
            rows.push(vec![
                j.to_string(),
                fmt_f64(image.re),
                fmt_f64(image.im),
                fmt_f64(distance),
                fmt_f64(1.0 / f64::from(j)),
            ]);
            table.push(json!({"j": j, "image": point(image), "boundary_distance": distance}));
        }
        write_csv(
            r.file(out, "noncompact.csv")?,
            "j,x,y,boundary_distance,inverse_j",
            rows,
        )?;
        r.check(exact, "noncompact sequence");
        r.json(
            out,
            "noncompact.json",
            &json!({ "sequence": table, "exact": exact }),
        )
    }
}

fn layer_counts(dist: &DistanceGrid, delta: f64) -> Value {
    let (mut p, mut a, mut b) = (0usize, 0usize, 0usize);
    let spec = dist.spec();
    for k in 0..spec.len() {
        if !dist.domain().contains(spec.node_at(k)) {
            continue;
        }
        match classify_layer(dist.node_distance(k), delta) {
            Layer::P => p += 1,
            Layer::A => a += 1,
            Layer::B => b += 1,
        }
    }
    json!({"P": p, "A": a, "B": b})
}

/// Up to `count` uniform samples from the P layer of `bm`.
pub fn p_layer_samples(bm: &BlendedMetric, count: usize, seed: u64) -> Result<Vec<Complex64>> {
    let domain = bm.dist.domain();
    let mut out = Vec::with_capacity(count);
    for z in random_interior(domain, 400 * count, 0.0, seed) {
        if out.len() == count {
            break;
        }
        if classify_layer(bm.dist.distance(z)?, bm.delta) == Layer::P {
            out.push(z);
        }
    }
    Ok(out)
}

/// Deterministic uniform samples from `{ρ < −margin}` by rejection in the
/// bounding box.
pub fn random_interior(
    domain: &PlanarDomain,
    count: usize,
    margin: f64,
    seed: u64,
) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain.bounding_box();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 1000 * count.max(1) {
        attempts += 1;
        let z = Complex64::new(rng.gen_range(lo.re..hi.re), rng.gen_range(lo.im..hi.im));
        if domain.eval_defining(z) < -margin {
            out.push(z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
            assert_eq!(serde_json::to_value(c).unwrap(), json!(c.name()));
        }
        assert!("nope".parse::<Command>().is_err());
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = ExperimentConfig::from_json(
            "{\"domain\": {\"disc\": {\"center\": [0,0], \"radius\": 1}},\n \"gird\": 3}",
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("gird") && e.contains("line 2"), "{e}");
    }

    #[test]
    fn defaults_are_recorded() {
        let cfg = ExperimentConfig::from_json(
            r#"{"domain": {"annulus": {"inner": 1, "outer": 2}}, "grid": 64}"#,
        )
        .unwrap();
        let (s, d) = resolve(&cfg, Some(5)).unwrap();
        assert_eq!(s.grid, 64);
        assert_eq!(s.seed, 5);
        assert!(!d.0.contains_key("grid"));
        assert!(
            d.0.contains_key("quadrature_n")
                && d.0.contains_key("delta")
                && !d.0.contains_key("seed")
        );
    }

    #[test]
    fn random_interior_is_deterministic() {
        let a = PlanarDomain::annulus(1.0, 2.0).unwrap();
        let x = random_interior(&a, 50, 0.1, 3);
        assert_eq!(x, random_interior(&a, 50, 0.1, 3));
        assert!(x.iter().all(|&z| a.eval_defining(z) < -0.1));
    }
}
