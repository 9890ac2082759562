//! On-disk chain bundles.
//!
//! A bundle is a directory holding:
//! - `meta`: `key=value` lines with the format version, model, sampler
//!   settings, scaling metadata and acceptance diagnostics;
//! - `thetas.csv`: one row per sample (`theta_w,theta_y`; `NA` for shallow chains);
//! - `w_0000.csv`, `w_0001.csv`, ...: one latent matrix per sample (deep chains only);
//! - `x.csv`, `y.csv`: the training data in natural units.
//!
//! Floats are written with 17 significant digits, so loading reproduces every
//! sample bit for bit. The plug-in coregionalization estimates are recomputed
//! on load from `(theta_w, theta_y, W)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::data::{fmt_f64, numbered_header, read_csv, write_csv, Dataset};
use crate::error::{Error, Result};
use crate::icm::PriorSpec;
use crate::sampler::{AcceptanceRates, Chain, ChainSample, Layers, ModelMeta, ModelSpec, SamplerConfig};

pub const FORMAT_VERSION: u32 = 1;

const NA: &str = "NA";

fn w_file(index: usize) -> String {
    format!("w_{index:04}.csv")
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |v| format!("{v:?}"))
}

fn render_meta(chain: &Chain) -> String {
    let m = &chain.meta;
    let c = &chain.config;
    let p = &chain.model.priors;
    let a = &chain.acceptance;
    let bounds: Vec<String> = m.x_bounds.iter().map(|(lo, hi)| format!("{lo:?}:{hi:?}")).collect();
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    put("format_version", FORMAT_VERSION.to_string());
    put("layers", m.layers.count().to_string());
    put("n", m.n.to_string());
    put("d", m.d.to_string());
    put("q", m.q.to_string());
    put("latent_dim", m.latent_dim.to_string());
    put("latent_dim_override", chain.model.latent_dim.map_or_else(|| NA.into(), |v| v.to_string()));
    put("samples", chain.len().to_string());
    put("iterations", c.iterations.to_string());
    put("burn_in", c.burn_in.to_string());
    put("thinning", c.thinning.to_string());
    put("proposal_l", format!("{:?}", c.proposal_l));
    put("proposal_u", format!("{:?}", c.proposal_u));
    put("seed", c.seed.to_string());
    put("jitter", format!("{:?}", c.jitter));
    put("ess_max_shrinks", c.ess_max_shrinks.to_string());
    put("prior_shape", format!("{:?}", p.shape));
    put("prior_rate_theta_y", format!("{:?}", p.rate_theta_y));
    put("prior_rate_theta_w", format!("{:?}", p.rate_theta_w));
    put("x_bounds", bounds.join(" "));
    put("y_center", join_floats(&m.y_center));
    put("y_scale", join_floats(&m.y_scale));
    put("acceptance_theta_w", opt_float(a.theta_w));
    put("acceptance_theta_y", format!("{:?}", a.theta_y));
    put("mean_ess_shrinks", opt_float(a.mean_ess_shrinks));
    put("failed_evaluations", a.failed_evaluations.to_string());
    out
}

/// Writes `chain` and its training data into directory `dir` (created if needed).
pub fn save(chain: &Chain, data: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut meta = fs::File::create(dir.join("meta"))?;
    meta.write_all(render_meta(chain).as_bytes())?;

    let mut thetas = String::from("theta_w,theta_y\n");
    for s in &chain.samples {
        let tw = s.theta_w.map_or_else(|| NA.to_string(), fmt_f64);
        let _ = writeln!(thetas, "{tw},{}", fmt_f64(s.theta_y));
    }
    fs::write(dir.join("thetas.csv"), thetas)?;

    if chain.meta.layers == Layers::Deep {
        let header = numbered_header("w", chain.meta.latent_dim);
        for (t, s) in chain.samples.iter().enumerate() {
            write_csv(&dir.join(w_file(t)), &header, &s.w)?;
        }
    }
    write_csv(&dir.join("x.csv"), &numbered_header("x", data.d()), data.x())?;
    write_csv(&dir.join("y.csv"), &numbered_header("y", data.q()), data.y())?;
    Ok(())
}

struct Meta(BTreeMap<String, String>);

impl Meta {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i as u64 + 1,
                message: format!("expected key=value, found `{line}`"),
            })?;
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse {
                    line: i as u64 + 1,
                    message: format!("duplicate key `{}`", k.trim()),
                });
            }
        }
        Ok(Self(map))
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Data(format!("bundle meta lacks `{key}`")))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| Error::Data(format!("bundle meta `{key}` has invalid value `{raw}`")))
    }

    fn get_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.raw(key)? == NA {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)?
            .split_whitespace()
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Data(format!("bundle meta `{key}` has invalid number `{v}`")))
            })
            .collect()
    }

    fn bounds(&self) -> Result<Vec<(f64, f64)>> {
        self.raw("x_bounds")?
            .split_whitespace()
            .map(|pair| {
                let bad = || Error::Data(format!("invalid bound `{pair}`"));
                let (lo, hi) = pair.split_once(':').ok_or_else(bad)?;
                Ok((lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?))
            })
            .collect()
    }
}

/// A chain together with the training data it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedBundle {
    pub chain: Chain,
    pub data: Dataset,
}

/// Reads a bundle written by [`save`].
pub fn load(dir: &Path) -> Result<LoadedBundle> {
    let text = fs::read_to_string(dir.join("meta"))
        .map_err(|e| Error::Data(format!("cannot read bundle meta in {}: {e}", dir.display())))?;
    let meta = Meta::parse(&text)?;
    let version: u32 = meta.get("format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "bundle format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let layers = Layers::from_count(meta.get("layers")?)?;
    let config = SamplerConfig {
        iterations: meta.get("iterations")?,
        burn_in: meta.get("burn_in")?,
        thinning: meta.get("thinning")?,
        proposal_l: meta.get("proposal_l")?,
        proposal_u: meta.get("proposal_u")?,
        seed: meta.get("seed")?,
        jitter: meta.get("jitter")?,
        ess_max_shrinks: meta.get("ess_max_shrinks")?,
    };
    let model = ModelSpec {
        layers,
        latent_dim: meta.get_opt("latent_dim_override")?,
        priors: PriorSpec {
            shape: meta.get("prior_shape")?,
            rate_theta_y: meta.get("prior_rate_theta_y")?,
            rate_theta_w: meta.get("prior_rate_theta_w")?,
        },
    };
    let x = read_csv(&dir.join("x.csv"))?.data;
    let y = read_csv(&dir.join("y.csv"))?.data;
    let data = Dataset::from_parts(x, y, meta.bounds()?, meta.floats("y_center")?, meta.floats("y_scale")?)?;
    let meta_block = ModelMeta {
        n: meta.get("n")?,
        d: meta.get("d")?,
        q: meta.get("q")?,
        latent_dim: meta.get("latent_dim")?,
        layers,
        x_bounds: data.x_bounds().to_vec(),
        y_center: data.y_center().to_vec(),
        y_scale: data.y_scale().to_vec(),
    };
    if (meta_block.n, meta_block.d, meta_block.q) != (data.n(), data.d(), data.q()) {
        return Err(Error::Data("bundle meta disagrees with its training data".into()));
    }

    let thetas = fs::read_to_string(dir.join("thetas.csv"))?;
    let expected: usize = meta.get("samples")?;
    let mut samples = Vec::with_capacity(expected);
    for (i, line) in thetas.lines().skip(1).enumerate() {
        let parse_err = |message: String| Error::Parse {
            line: i as u64 + 2,
            message,
        };
        let (tw, ty) = line
            .split_once(',')
            .ok_or_else(|| parse_err(format!("expected two fields in `{line}`")))?;
        let theta_y: f64 = ty.trim().parse().map_err(|_| parse_err(format!("bad theta_y `{ty}`")))?;
        let (theta_w, w) = match layers {
            Layers::Shallow => (None, data.scaled_x().clone()),
            Layers::Deep => {
                let tw: f64 = tw.trim().parse().map_err(|_| parse_err(format!("bad theta_w `{tw}`")))?;
                let w = read_csv(&dir.join(w_file(i)))?.data;
                if w.shape() != (data.n(), meta_block.latent_dim) {
                    return Err(Error::Shape(format!("{} has shape {:?}", w_file(i), w.shape())));
                }
                (Some(tw), w)
            }
        };
        samples.push(ChainSample::from_state(theta_w, theta_y, w, &data, config.jitter)?);
    }
    if samples.len() != expected {
        return Err(Error::Data(format!(
            "bundle declares {expected} samples but thetas.csv holds {}",
            samples.len()
        )));
    }
    let acceptance = AcceptanceRates {
        theta_w: meta.get_opt("acceptance_theta_w")?,
        theta_y: meta.get("acceptance_theta_y")?,
        mean_ess_shrinks: meta.get_opt("mean_ess_shrinks")?,
        failed_evaluations: meta.get("failed_evaluations")?,
    };
    Ok(LoadedBundle {
        chain: Chain {
            samples,
            config,
            model,
            meta: meta_block,
            acceptance,
        },
        data,
    })
}
