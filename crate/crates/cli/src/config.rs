use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use jumpsde_core::coefficients::{
    CoefficientTriple, ConditionId, IntensityMeasure, JumpKernel, ScalarFn,
};
use jumpsde_core::lab::certification_grid;
use jumpsde_core::models::{Builtin, Model};
use jumpsde_core::risk::{build_refracted, RefractedParams};
use jumpsde_core::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub numerics: Numerics,
    pub experiment: Experiment,
    pub output: Output,
}

/// A builtin, optionally with refracted-parameter overrides, or a custom model
/// from tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub builtin: Option<String>,
    pub x0: Option<f64>,
    pub drift: Option<FnSpec>,
    pub diffusion: Option<FnSpec>,
    pub jump: Option<JumpSpec>,
    pub measure: Option<IntensityMeasure>,
    pub refracted: Option<RefractedSection>,
    pub bound_k: Option<f64>,
    pub sigma_lower: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FnSpec {
    Constant { value: f64 },
    Step { at: f64, below: f64, above: f64 },
    PiecewiseConstant { knots: Vec<f64>, values: Vec<f64> },
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
}

impl FnSpec {
    fn build(&self) -> Result<ScalarFn> {
        match self {
            FnSpec::Constant { value } => Ok(ScalarFn::constant(*value)),
            FnSpec::Step { at, below, above } => Ok(ScalarFn::step(*at, *below, *above)),
            FnSpec::PiecewiseConstant { knots, values } => ScalarFn::piecewise_constant(knots.clone(), values.clone()),
            FnSpec::PiecewiseLinear { knots, values } => ScalarFn::piecewise_linear(knots.clone(), values.clone()),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            FnSpec::Step { at, below, above } if below != above => vec![*at],
            FnSpec::PiecewiseConstant { knots, .. } => knots.clone(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    Zero,
    Additive,
    Reflecting,
    /// `g(x, u) = c(x) u`
    Scaled(FnSpec),
}

impl JumpSpec {
    fn build(&self) -> Result<JumpKernel> {
        Ok(match self {
            JumpSpec::Zero => JumpKernel::zero(),
            JumpSpec::Additive => JumpKernel::additive(),
            JumpSpec::Reflecting => JumpKernel::reflecting(),
            JumpSpec::Scaled(c) => JumpKernel::scaled(c.build()?),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefractedSection {
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub p: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub q: Option<f64>,
    pub claims: Option<ClaimsSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimsSpec {
    /// Claims of fixed size `-size` at rate `rate`.
    Atom { size: f64, rate: f64 },
    /// Exponential claim sizes with mean `mean` at rate `rate`.
    Exponential { rate: f64, mean: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub horizon: f64,
    pub h: f64,
    /// Mollification level; raw coefficients when unset.
    pub n: Option<u32>,
    /// Local-time bandwidth; `sqrt h` when unset.
    pub eps: Option<f64>,
    /// Small-mark truncation, overriding the measure's own.
    pub truncation: Option<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { horizon: 1.0, h: 1e-3, n: None, eps: None, truncation: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub seed_base: u64,
    pub n_paths: usize,
    /// Step ladder for pathwise and maximum experiments.
    pub resolutions: Vec<f64>,
    /// Tie the mollification level to the step (`n = 1/h`); raw otherwise.
    pub mollify: bool,
    /// Comparison times for the weak experiment; the horizon when empty.
    pub times: Vec<f64>,
    pub alpha: f64,
    pub sampler_a: Sampler,
    pub sampler_b: Sampler,
    /// Shift of the initial value used by sampler B.
    pub shift_b: f64,
    /// Levels for the local-time command.
    pub levels: Vec<f64>,
    /// Local-time bandwidth of the maximum experiment, in units of `sqrt h`.
    pub bandwidth_scale: f64,
    /// Condition ids for `check`; all applicable ones when empty.
    pub conditions: Vec<String>,
    /// Coefficient of the linear modulus `rho(a) = c a` used by `mod_rho`.
    pub rho: f64,
    /// Number of individual path CSVs written by `simulate`.
    pub write_paths: usize,
    /// Initial capital for `risk`; the model's `x0` when unset.
    pub capital: Option<f64>,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            seed_base: 0,
            n_paths: 1000,
            resolutions: vec![1e-2, 1e-3, 1e-4],
            mollify: true,
            times: Vec::new(),
            alpha: 0.01,
            sampler_a: Sampler::Euler,
            sampler_b: Sampler::Timechanged,
            shift_b: 0.0,
            levels: vec![0.0],
            bandwidth_scale: 1.0,
            conditions: Vec::new(),
            rho: 1.0,
            write_paths: 1,
            capital: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Euler,
    Timechanged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub directory: String,
    pub formats: Vec<Format>,
    pub dump_noise: bool,
}

impl Default for Output {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec![Format::Json, Format::Csv], dump_noise: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Configuration(e.to_string()))?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let config: RunConfig =
            toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| Error::Configuration(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Configuration(format!("{name} must be positive, got {v}")))
            }
        };
        positive("numerics.horizon", self.numerics.horizon)?;
        positive("numerics.h", self.numerics.h)?;
        if let Some(eps) = self.numerics.eps {
            positive("numerics.eps", eps)?;
        }
        if self.numerics.n == Some(0) {
            return Err(Error::Configuration("numerics.n must be at least 1".into()));
        }
        for &h in &self.experiment.resolutions {
            positive("experiment.resolutions", h)?;
        }
        positive("experiment.alpha", self.experiment.alpha)?;
        positive("experiment.bandwidth_scale", self.experiment.bandwidth_scale)?;
        positive("experiment.rho", self.experiment.rho)?;
        if self.experiment.n_paths == 0 {
            return Err(Error::Configuration("experiment.n_paths must be positive".into()));
        }
        for id in &self.experiment.conditions {
            ConditionId::parse(id)?;
        }
        if let Some(name) = &self.model.builtin {
            Builtin::parse(name)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form with the output directory blanked,
    /// so the hash ignores key order and where reports are written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.directory.clear();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..16])
    }

    pub fn times(&self) -> Vec<f64> {
        if self.experiment.times.is_empty() {
            vec![self.numerics.horizon]
        } else {
            self.experiment.times.clone()
        }
    }

    pub fn eps(&self) -> f64 {
        self.numerics.eps.unwrap_or_else(|| self.numerics.h.sqrt())
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// Refracted parameters: the defaults with this config's overrides.
    pub fn refracted_params(&self) -> Result<RefractedParams> {
        let builtin = self.model.builtin.as_deref();
        if self.model.refracted.is_none() && builtin != Some("refracted") {
            return Err(Error::Configuration(
                "risk runs need model.builtin = \"refracted\" or a [model.refracted] section".into(),
            ));
        }
        let mut p = RefractedParams::default();
        if let Some(r) = &self.model.refracted {
            p.mu1 = r.mu1.unwrap_or(p.mu1);
            p.mu2 = r.mu2.unwrap_or(p.mu2);
            p.p = r.p.unwrap_or(p.p);
            p.sigma1 = r.sigma1.unwrap_or(p.sigma1);
            p.sigma2 = r.sigma2.unwrap_or(p.sigma2);
            p.q = r.q.unwrap_or(p.q);
            match &r.claims {
                Some(ClaimsSpec::Atom { size, rate }) => p.claims = IntensityMeasure::atom(-size.abs(), *rate),
                Some(ClaimsSpec::Exponential { rate, mean }) => p.claims = IntensityMeasure::exponential_claims(*rate, *mean),
                None => {}
            }
        }
        if let Some(m) = &self.model.measure {
            p.claims = m.clone();
        }
        if let Some(eta) = self.numerics.truncation {
            p.claims.truncation = eta;
        }
        Ok(p)
    }

    pub fn model(&self) -> Result<Model> {
        let m = &self.model;
        let mut model = if m.refracted.is_some() {
            let params = self.refracted_params()?;
            Model { name: "refracted".into(), triple: build_refracted(&params)?, measure: params.claims, x0: 1.5 }
        } else if let Some(name) = &m.builtin {
            Builtin::parse(name)?.model()
        } else {
            self.custom_model()?
        };
        if let Some(x0) = m.x0 {
            model.x0 = x0;
        }
        if let Some(measure) = &m.measure {
            model.measure = measure.clone();
        }
        if let Some(jump) = &m.jump {
            model.triple.jump = jump.build()?;
        }
        if let Some(eta) = self.numerics.truncation {
            model.measure.truncation = eta;
        }
        if let Some(k) = m.bound_k {
            model.triple.bound_k = k;
        }
        if let Some(s) = m.sigma_lower {
            model.triple.sigma_lower = s;
        }
        model.measure.validate()?;
        Ok(model)
    }

    fn custom_model(&self) -> Result<Model> {
        let m = &self.model;
        let (Some(drift), Some(diffusion)) = (&m.drift, &m.diffusion) else {
            return Err(Error::Configuration(
                "model needs either a builtin or both drift and diffusion tables".into(),
            ));
        };
        let mut breaks = drift.breakpoints();
        breaks.extend(diffusion.breakpoints());
        let jump = m.jump.as_ref().map(JumpSpec::build).transpose()?.unwrap_or_else(JumpKernel::zero);
        let measure = m.measure.clone().unwrap_or_default();
        let mut triple = CoefficientTriple::new(drift.build()?, diffusion.build()?, jump).with_discontinuities(breaks);
        let x0 = m.x0.unwrap_or(0.0);
        let grid = certification_grid(&triple, x0);
        // K and sigma_0 default to their tightest values on the check grid
        let sigma0 = grid.iter().map(|&x| triple.diffusion.eval(x).abs()).fold(f64::INFINITY, f64::min);
        let mut k: f64 = 0.0;
        for &x in &grid {
            let b = triple.drift.eval(x);
            let s = triple.diffusion.eval(x);
            let sq = measure.integrate(|u| {
                let g = triple.jump.eval(x, u);
                g.abs().max(g * g)
            })?;
            let abs = measure.integrate(|u| triple.jump.eval(x, u).abs())?;
            k = k.max(b * b + s * s + sq.value).max(s.abs());
            if sigma0 > 0.0 {
                k = k.max((b.abs() + abs.value) / (sigma0 * sigma0));
            }
        }
        if !k.is_finite() {
            return Err(Error::Configuration("coefficients are not bounded on the check grid".into()));
        }
        triple = triple.with_bounds(k, sigma0);
        Ok(Model { name: "custom".into(), triple, measure, x0 })
    }
}

/// Apply `section.key=value`; the value is parsed as a TOML value, falling
/// back to a string.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Configuration(format!("override `{item}` is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut cur = table;
    for key in &keys[..keys.len() - 1] {
        let entry = cur.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Configuration(format!("`{key}` in `{path}` is not a section")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_directory() {
        let a = RunConfig::from_toml("[numerics]\nh = 0.01\nhorizon = 2.0\n[model]\nbuiltin = \"brownian\"", &[]).unwrap();
        let b = RunConfig::from_toml("[model]\nbuiltin = \"brownian\"\n[numerics]\nhorizon = 2.0\nh = 0.01", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_toml("[model]\nbuiltin = \"brownian\"\n[numerics]\nhorizon = 2.0\nh = 0.01\n[output]\ndirectory = \"elsewhere\"", &[]).unwrap();
        assert_eq!(a.hash(), c.hash());
        let d = RunConfig::from_toml("[model]\nbuiltin = \"brownian\"\n[numerics]\nhorizon = 2.0\nh = 0.02", &[]).unwrap();
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn overrides_and_validation() {
        let c = RunConfig::from_toml("", &["numerics.h=0.5".into(), "model.builtin=zero".into()]).unwrap();
        assert_eq!(c.numerics.h, 0.5);
        assert_eq!(c.model.builtin.as_deref(), Some("zero"));
        assert!(RunConfig::from_toml("[numerics]\nh = -1.0", &[]).is_err());
        assert!(RunConfig::from_toml("[model]\nbuiltin = \"nope\"", &[]).is_err());
        assert!(RunConfig::from_toml("[numerics]\nstep = 1.0", &[]).is_err());
        assert!(RunConfig::from_toml("", &["broken".into()]).is_err());
    }

    #[test]
    fn custom_tables_and_refracted_overrides() {
        let c = RunConfig::from_toml(
            r#"
            [model]
            x0 = 0.5
            drift = { kind = "step", at = 0.0, below = 1.0, above = -1.0 }
            diffusion = { kind = "constant", value = 1.0 }
            jump = "additive"
            measure = { atoms = [{ location = -0.5, mass = 2.0 }] }
            "#,
            &[],
        )
        .unwrap();
        let m = c.model().unwrap();
        assert_eq!(m.triple.discontinuities, vec![0.0]);
        assert_eq!(m.triple.sigma_lower, 1.0);
        assert!((m.triple.bound_k - 3.0).abs() < 1e-12);

        let r = RunConfig::from_toml(
            "[model.refracted]\nsigma2 = 3.0\nclaims = { kind = \"exponential\", rate = 2.0, mean = 0.5 }",
            &[],
        )
        .unwrap();
        let p = r.refracted_params().unwrap();
        assert_eq!(p.sigma2, 3.0);
        assert!(p.claims.continuous.is_some());
        assert!(RunConfig::default().refracted_params().is_err());
    }
}
