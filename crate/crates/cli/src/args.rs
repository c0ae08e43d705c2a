use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use gramlab::priors::{PriorDescription, Prior};
use gramlab::stability::{plane_prior, segment_prior};
use gramlab::RepSpec;
use serde::Serialize;

/// Parse a spec given as JSON (`{"blocks":[[N,R],...]}`), `znN` or `cryo:L:R`.
pub fn parse_spec(text: &str) -> anyhow::Result<RepSpec> {
    let t = text.trim();
    if let Some(n) = t.strip_prefix("zn") {
        let n: usize = n.parse().with_context(|| format!("bad Z_N order in {t:?}"))?;
        return Ok(RepSpec::zn(n)?);
    }
    if let Some(rest) = t.strip_prefix("cryo:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 {
            bail!("expected cryo:L:R, got {t:?}");
        }
        return Ok(RepSpec::cryoem(parts[0].parse()?, parts[1].parse()?)?);
    }
    if t.starts_with('{') {
        return Ok(RepSpec::from_json(t)?);
    }
    let body = std::fs::read_to_string(t).with_context(|| format!("reading spec file {t}"))?;
    Ok(RepSpec::from_json(&body)?)
}

/// Comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().with_context(|| format!("bad list entry {s:?}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorChoice {
    Linear,
    Sparse,
    SparseOrthonormal,
    SparseStandard,
    Relu,
    Sphere,
    Torus,
    /// `{(1, t)}` in a single `O(2)` block.
    Segment,
    /// `(s, t, s + 1, t + 1)` in four `O(1)` blocks.
    Plane,
}

/// Prior selection shared by several subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct PriorArgs {
    #[arg(long, value_enum)]
    pub prior: Option<PriorChoice>,
    /// Representation spec: JSON, `znN`, `cryo:L:R` or a JSON file.
    #[arg(long)]
    pub spec: Option<String>,
    /// Prior dimension M (sparsity for sparse priors, latent size for ReLU,
    /// intrinsic dimension for spheres).
    #[arg(long)]
    pub m: Option<usize>,
    /// ReLU layer widths after the latent layer, comma separated; the last
    /// must equal the ambient dimension. Default: `D,D`.
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 2.0)]
    pub major: f64,
    #[arg(long, default_value_t = 0.5)]
    pub minor: f64,
    /// Compose manifold priors with a random linear map.
    #[arg(long)]
    pub generic_embed: bool,
    /// Box bound for the segment and plane priors.
    #[arg(long)]
    pub bound: Option<f64>,
    /// Seed for the prior's own random draws. Defaults to `--seed`.
    #[arg(long)]
    pub prior_seed: Option<u64>,
    /// JSON prior description; replaces the flags above.
    #[arg(long)]
    pub prior_config: Option<String>,
}

impl PriorArgs {
    fn require_spec(&self) -> anyhow::Result<RepSpec> {
        match &self.spec {
            Some(s) => parse_spec(s),
            None => bail!("--spec is required for this prior"),
        }
    }

    fn require_m(&self) -> anyhow::Result<usize> {
        self.m.context("--m is required for this prior")
    }

    pub fn build(&self, seed: u64) -> anyhow::Result<Prior<f64>> {
        if let Some(path) = &self.prior_config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading prior config {path}"))?;
            let desc: PriorDescription = serde_json::from_str(&text).context("parsing prior config")?;
            return Ok(desc.build()?);
        }
        let seed = self.prior_seed.unwrap_or(seed);
        let choice = self.prior.context("--prior or --prior-config is required")?;
        let desc = match choice {
            PriorChoice::Segment => {
                return Ok(segment_prior(self.bound.map(|b| (-b, b))));
            }
            PriorChoice::Plane => return Ok(plane_prior(Some(self.bound.unwrap_or(101.0)))),
            PriorChoice::Linear => PriorDescription::Linear {
                spec: self.require_spec()?,
                m: self.require_m()?,
                seed,
            },
            PriorChoice::Sparse | PriorChoice::SparseOrthonormal | PriorChoice::SparseStandard => {
                PriorDescription::Sparse {
                    spec: self.require_spec()?,
                    m: self.require_m()?,
                    orthonormal: choice == PriorChoice::SparseOrthonormal,
                    standard_basis: choice == PriorChoice::SparseStandard,
                    seed,
                }
            }
            PriorChoice::Relu => {
                let spec = self.require_spec()?;
                let d = spec.ambient_dim();
                let mut layer_dims = vec![self.require_m()?];
                match &self.layers {
                    Some(l) => layer_dims.extend(parse_list::<usize>(l)?),
                    None => layer_dims.extend([d, d]),
                }
                PriorDescription::Relu { spec, layer_dims, seed }
            }
            PriorChoice::Sphere => PriorDescription::Sphere {
                spec: self.require_spec()?,
                dim: self.require_m()?,
                radius: self.radius,
                generic_embed: self.generic_embed,
                seed,
            },
            PriorChoice::Torus => PriorDescription::Torus {
                spec: self.require_spec()?,
                major: self.major,
                minor: self.minor,
                generic_embed: self.generic_embed,
                seed,
            },
        };
        Ok(desc.build()?)
    }
}
