//! `key = value` run configuration for assimilation.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use icoadj::adjoint::AdjointMethod;
use icoadj::assim::{BackgroundMode, TruthSource, TwinConfig, Weights};
use icoadj::cases::{ScalarCase, WindKind};
use icoadj::transport::{Limiter, Order, SchemeConfig};
use icoadj::PERIOD;

/// `scalar:wind`, e.g. `vortex:moving_vortices`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CasePair {
    pub scalar: ScalarCase,
    pub wind: WindKind,
}

impl FromStr for CasePair {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("case must look like scalar:wind, got {s:?}"))?;
        Ok(CasePair {
            scalar: a.parse().map_err(|_| anyhow!("unknown scalar case {a:?}"))?,
            wind: b.parse().map_err(|_| anyhow!("unknown wind case {b:?}"))?,
        })
    }
}

impl fmt::Display for CasePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.scalar, self.wind)
    }
}

/// Accepts `R2B3`, `r2b3` or a bare bisection level `3` (meaning `n_r = 2`).
pub fn parse_grid(s: &str) -> Result<(u32, u32)> {
    let t = s.trim().to_ascii_uppercase();
    if let Some(rest) = t.strip_prefix('R') {
        let (r, b) = rest.split_once('B').ok_or_else(|| anyhow!("bad grid name {s:?}"))?;
        return Ok((r.parse()?, b.parse()?));
    }
    Ok((2, t.parse().with_context(|| format!("bad grid {s:?}"))?))
}

pub fn parse_order(s: &str) -> Result<Order> {
    match s {
        "1" | "first" => Ok(Order::First),
        "2" | "second" => Ok(Order::Second),
        _ => bail!("order must be 1 or 2, got {s:?}"),
    }
}

pub fn parse_limiter(s: &str) -> Result<Limiter> {
    Limiter::parse(s).map_err(|_| anyhow!("unknown limiter {s:?}"))
}

pub fn parse_method(s: &str) -> Result<AdjointMethod> {
    AdjointMethod::parse(s).map_err(|_| anyhow!("unknown adjoint method {s:?}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: CasePair,
    pub n_r: u32,
    pub n_b: u32,
    pub dt: f64,
    pub t_end: f64,
    pub weights: Weights,
    /// `None` observes every fourth cell.
    pub n_obs: Option<usize>,
    pub background: BackgroundMode,
    pub method: AdjointMethod,
    pub limiter: Limiter,
    pub order: Order,
    /// `None` picks a monotone reference for deformational flows and the
    /// model's own run otherwise.
    pub truth: Option<TruthSource>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: CasePair {
                scalar: ScalarCase::Vortex,
                wind: WindKind::MovingVortices,
            },
            n_r: 2,
            n_b: 3,
            dt: 600.0,
            t_end: PERIOD,
            weights: Weights::default(),
            n_obs: None,
            background: BackgroundMode::Uniform10Pct,
            method: AdjointMethod::ArtSource,
            limiter: Limiter::None,
            order: Order::Second,
            truth: None,
        }
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Keys not given keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", no + 1))?;
            let (k, v) = (k.trim(), v.trim());
            c.set(k, v).with_context(|| format!("line {}: {k}", no + 1))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "case" => self.case = v.parse()?,
            "grid" => (self.n_r, self.n_b) = parse_grid(v)?,
            "dt" => self.dt = v.parse()?,
            "T" | "t_end" => self.t_end = v.parse()?,
            "w_b" => self.weights.w_b = v.parse()?,
            "w_o" => self.weights.w_o = v.parse()?,
            "n_obs" => self.n_obs = Some(v.parse()?),
            "background_mode" => {
                let m = BackgroundMode::parse(v).map_err(|_| anyhow!("unknown background mode {v:?}"))?;
                // keep a split longitude given earlier
                if !matches!(
                    (m, self.background),
                    (BackgroundMode::HalfDomain { .. }, BackgroundMode::HalfDomain { .. })
                ) {
                    self.background = m;
                }
            }
            "split_lon" => self.background = BackgroundMode::HalfDomain { split_lon: v.parse()? },
            "method" => self.method = parse_method(v)?,
            "limiter" => self.limiter = parse_limiter(v)?,
            "order" => self.order = parse_order(v)?,
            "truth" => {
                self.truth = Some(
                    TruthSource::parse(v)
                        .map_err(|_| anyhow!("truth must be exact, reference or monotone_reference, got {v:?}"))?,
                )
            }
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate().map_err(|e| anyhow!("{e}"))?;
        if !(self.dt > 0.0 && self.t_end >= 0.0) {
            bail!("dt must be positive and T nonnegative");
        }
        if self.method == AdjointMethod::Standard && self.limiter != Limiter::None {
            bail!("standard adjoint undefined for limited scheme");
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        icoadj::spheregrid::SphereGrid::expected_counts(self.n_r, self.n_b).0
    }

    pub fn truth_source(&self) -> TruthSource {
        self.truth.unwrap_or(crate::experiment::default_truth(self.case.wind))
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig::new(self.dt).with_order(self.order).with_limiter(self.limiter)
    }

    pub fn twin(&self) -> TwinConfig {
        TwinConfig {
            case: self.case.scalar,
            wind: self.case.wind,
            t_end: self.t_end,
            scheme: self.scheme(),
            method: self.method,
            n_obs: self.n_obs.unwrap_or(self.n_cells() / 4),
            truth: self.truth_source(),
            background: self.background,
            weights: self.weights,
        }
    }

    /// The configuration as `key = value` text that `parse` reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("case", self.case.to_string());
        kv("grid", format!("R{}B{}", self.n_r, self.n_b));
        kv("dt", format!("{}", self.dt));
        kv("T", format!("{}", self.t_end));
        kv("w_b", format!("{}", self.weights.w_b));
        kv("w_o", format!("{}", self.weights.w_o));
        if let Some(n) = self.n_obs {
            kv("n_obs", n.to_string());
        }
        kv("background_mode", self.background.name().to_string());
        if let BackgroundMode::HalfDomain { split_lon } = self.background {
            if split_lon != icoadj::math::PI {
                kv("split_lon", format!("{split_lon}"));
            }
        }
        kv("method", self.method.name().to_string());
        kv("limiter", self.limiter.name().to_string());
        kv(
            "order",
            match self.order {
                Order::First => "1",
                Order::Second => "2",
            }
            .to_string(),
        );
        if let Some(t) = self.truth {
            kv("truth", t.name().to_string());
        }
        s
    }
}
