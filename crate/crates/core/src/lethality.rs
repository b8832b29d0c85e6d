//! Warhead lethality models and the empirical-CDF warhead design rule.

use std::f64::consts::SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Damage function of a circularly symmetric warhead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WarheadModel {
    /// Kill iff the miss does not exceed `r_sk`.
    CookieCutter { r_sk: f64 },
    /// `d(M) = ½·erfc((M − μ_w)/(√2·σ_w))`.
    Probabilistic { mu_w: f64, sigma_w: f64 },
}

/// Named warheads of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarheadPreset {
    Htk,
    Small,
    Medium,
    Large,
}

impl WarheadPreset {
    pub const ALL: [WarheadPreset; 4] = [
        WarheadPreset::Htk,
        WarheadPreset::Small,
        WarheadPreset::Medium,
        WarheadPreset::Large,
    ];

    pub fn model(self) -> WarheadModel {
        let (mu_w, sigma_w) = match self {
            WarheadPreset::Htk => (0.5, 0.01),
            WarheadPreset::Small => (5.0, 0.5),
            WarheadPreset::Medium => (10.0, 0.5),
            WarheadPreset::Large => (15.0, 0.5),
        };
        WarheadModel::Probabilistic { mu_w, sigma_w }
    }

    pub fn label(self) -> &'static str {
        match self {
            WarheadPreset::Htk => "htk",
            WarheadPreset::Small => "small",
            WarheadPreset::Medium => "medium",
            WarheadPreset::Large => "large",
        }
    }
}

impl fmt::Display for WarheadPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for WarheadPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "htk" => Ok(WarheadPreset::Htk),
            "small" => Ok(WarheadPreset::Small),
            "medium" => Ok(WarheadPreset::Medium),
            "large" => Ok(WarheadPreset::Large),
            other => Err(Error::InvalidParameter(format!("unknown warhead preset {other:?}"))),
        }
    }
}

impl WarheadModel {
    pub fn cookie_cutter(r_sk: f64) -> Result<Self> {
        let m = WarheadModel::CookieCutter { r_sk };
        m.validate()?;
        Ok(m)
    }

    pub fn probabilistic(mu_w: f64, sigma_w: f64) -> Result<Self> {
        let m = WarheadModel::Probabilistic { mu_w, sigma_w };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WarheadModel::CookieCutter { r_sk } => r_sk > 0.0,
            WarheadModel::Probabilistic { mu_w, sigma_w } => mu_w > 0.0 && sigma_w > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid warhead {self:?}")))
        }
    }

    /// Kill and miss probabilities, the smaller one computed directly from
    /// `erfc` so that far-tail values keep full relative precision.
    #[inline]
    fn probabilities(&self, miss: f64) -> (f64, f64) {
        match *self {
            WarheadModel::CookieCutter { r_sk } => {
                if miss <= r_sk {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            WarheadModel::Probabilistic { mu_w, sigma_w } => {
                let x = (miss - mu_w) / (SQRT_2 * sigma_w);
                if x > 0.0 {
                    let kill = 0.5 * libm::erfc(x);
                    (kill, 1.0 - kill)
                } else {
                    let miss_p = 0.5 * libm::erfc(-x);
                    (1.0 - miss_p, miss_p)
                }
            }
        }
    }

    /// `P_d(M_s)`.
    pub fn kill_prob(&self, miss: f64) -> Result<f64> {
        if miss < 0.0 || miss.is_nan() {
            return Err(domain("miss distance", miss));
        }
        Ok(self.probabilities(miss).0)
    }

    /// `P_m(M_s) = 1 − P_d(M_s)`.
    pub fn miss_prob(&self, miss: f64) -> Result<f64> {
        if miss < 0.0 || miss.is_nan() {
            return Err(domain("miss distance", miss));
        }
        Ok(self.probabilities(miss).1)
    }

    /// Miss probability for a miss already known to be non-negative.
    #[inline]
    pub(crate) fn miss_prob_unchecked(&self, miss: f64) -> f64 {
        self.probabilities(miss).1
    }

    /// Effective lethal radius `μ_w − n_σ·σ_w` of a probabilistic warhead.
    pub fn r_eff(&self, n_sigma: f64) -> Result<f64> {
        let WarheadModel::Probabilistic { mu_w, sigma_w } = *self else {
            return Err(Error::InvalidParameter(
                "effective radius is defined for probabilistic warheads only".into(),
            ));
        };
        if !(n_sigma > 0.0) {
            return Err(domain("n_sigma", n_sigma));
        }
        let r = mu_w - n_sigma * sigma_w;
        if r <= 0.0 {
            return Err(domain("effective lethal radius", r));
        }
        Ok(r)
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Smallest `k` with `k / n ≥ kappa`.
fn order_statistic_rank(n: usize, kappa: f64) -> usize {
    let nf = n as f64;
    let mut k = ((kappa * nf).ceil() as usize).clamp(1, n);
    while k > 1 && ((k - 1) as f64) / nf >= kappa {
        k -= 1;
    }
    while k < n && (k as f64) / nf < kappa {
        k += 1;
    }
    k
}

/// Lethality radius achieving `F̂(R) ≥ κ` on the empirical miss CDF: the
/// `⌈κN⌉`-th order statistic.
pub fn design_radius(miss_samples: &[f64], kappa: f64) -> Result<f64> {
    if miss_samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(domain("kappa", kappa));
    }
    if let Some(bad) = miss_samples.iter().find(|m| m.is_nan()) {
        return Err(domain("miss sample", *bad));
    }
    let mut sorted = miss_samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = order_statistic_rank(sorted.len(), kappa);
    Ok(sorted[k - 1])
}

/// Right-continuous empirical CDF over a fixed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    /// `F̂(m) = #{M_s ≤ m} / N`.
    pub fn eval(&self, m: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= m) as f64 / self.sorted.len() as f64
    }

    /// `F̂(m⁻) = #{M_s < m} / N`.
    pub fn eval_left(&self, m: f64) -> f64 {
        self.sorted.partition_point(|&x| x < m) as f64 / self.sorted.len() as f64
    }

    /// Distinct support points with the CDF value reached at each.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            let f = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = f,
                _ => out.push((x, f)),
            }
        }
        out
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}
