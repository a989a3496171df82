//! Reproduction laws and sampling of individual life histories.
//!
//! A life history is a lifetime plus the sorted ages at which the individual
//! makes contacts (gives birth). The lifetime law, the offspring-count law
//! and the placement of contacts over the lifetime are independent
//! configuration axes; the Bellman-Harris case is `placement = at_death`.
//!
//! All draws are inverse-CDF transforms of open uniforms consumed in a fixed
//! order (lifetime, count, placement), so two laws that share an axis also
//! share the realized values on that axis when driven by the same stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::UniformSource;
use crate::special::{gamma_p_inv, poisson_quantile};

/// Law of the lifetime I, in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LifetimeLaw {
    Gamma { shape: f64, mean: f64 },
    Exponential { mean: f64 },
    Fixed { value: f64 },
}

impl LifetimeLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            LifetimeLaw::Gamma { mean, .. } | LifetimeLaw::Exponential { mean } => mean,
            LifetimeLaw::Fixed { value } => value,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LifetimeLaw::Gamma { shape, mean } => shape > 0.0 && mean > 0.0 && shape.is_finite() && mean.is_finite(),
            LifetimeLaw::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            LifetimeLaw::Fixed { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLaw(format!("lifetime parameters out of range: {self:?}")))
        }
    }

    fn sample<R: UniformSource>(&self, rng: &mut R) -> f64 {
        let u = rng.next_uniform();
        match *self {
            LifetimeLaw::Gamma { shape, mean } => mean / shape * gamma_p_inv(shape, u),
            LifetimeLaw::Exponential { mean } => -mean * (-u).ln_1p(),
            LifetimeLaw::Fixed { value } => value,
        }
    }
}

/// Law of the number of contacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringLaw {
    Poisson { mean: f64 },
    Fixed { count: u32 },
    Bernoulli { p: f64 },
}

impl OffspringLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            OffspringLaw::Poisson { mean } => mean,
            OffspringLaw::Fixed { count } => count as f64,
            OffspringLaw::Bernoulli { p } => p,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            OffspringLaw::Poisson { mean } => mean >= 0.0 && mean.is_finite(),
            OffspringLaw::Fixed { .. } => true,
            OffspringLaw::Bernoulli { p } => (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLaw(format!("offspring parameters out of range: {self:?}")))
        }
    }

    fn sample<R: UniformSource>(&self, rng: &mut R) -> usize {
        let u = rng.next_uniform();
        match *self {
            OffspringLaw::Poisson { mean } => poisson_quantile(mean, u) as usize,
            OffspringLaw::Fixed { count } => count as usize,
            OffspringLaw::Bernoulli { p } => usize::from(u > 1.0 - p),
        }
    }
}

/// Where the contacts fall inside the lifetime.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// All contacts at the end of life (Bellman-Harris).
    #[default]
    AtDeath,
    /// Contacts iid uniform over [0, I].
    UniformOverLifetime,
    /// Homogeneous Poisson process of the given rate on [0, I]; the process
    /// determines the count, so no offspring law may be given.
    #[serde(rename = "poisson_process_rate")]
    PoissonProcess { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproductionLaw {
    pub lifetime: LifetimeLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring: Option<OffspringLaw>,
    #[serde(default)]
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeHistory {
    pub lifetime: f64,
    pub contact_ages: Vec<f64>,
}

impl ReproductionLaw {
    /// Bellman-Harris law: gamma incubation, Poisson contagion at its end.
    pub fn bellman_harris(shape: f64, mean_lifetime: f64, offspring_mean: f64) -> Self {
        ReproductionLaw {
            lifetime: LifetimeLaw::Gamma { shape, mean: mean_lifetime },
            offspring: Some(OffspringLaw::Poisson { mean: offspring_mean }),
            placement: Placement::AtDeath,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lifetime.validate()?;
        match (&self.placement, &self.offspring) {
            (Placement::PoissonProcess { rate }, offspring) => {
                if offspring.is_some() {
                    return Err(Error::InvalidLaw(
                        "poisson_process_rate placement determines the count; remove `offspring`".into(),
                    ));
                }
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidLaw(format!("contact rate must be > 0, got {rate}")));
                }
                Ok(())
            }
            (_, None) => Err(Error::InvalidLaw("missing `offspring` law".into())),
            (_, Some(offspring)) => offspring.validate(),
        }
    }

    /// Draws one life history. The law is assumed valid.
    pub(crate) fn sample_unchecked<R: UniformSource>(&self, rng: &mut R) -> LifeHistory {
        let lifetime = self.lifetime.sample(rng);
        let contact_ages = match (&self.placement, &self.offspring) {
            (Placement::PoissonProcess { rate }, _) => {
                let mut ages = Vec::new();
                let mut t = 0.0;
                loop {
                    t += -(-rng.next_uniform()).ln_1p() / rate;
                    if t > lifetime {
                        break;
                    }
                    ages.push(t);
                }
                ages
            }
            (placement, Some(offspring)) => {
                let count = offspring.sample(rng);
                match placement {
                    Placement::AtDeath => vec![lifetime; count],
                    _ => {
                        let mut ages: Vec<f64> =
                            (0..count).map(|_| lifetime * rng.next_uniform()).collect();
                        ages.sort_by(f64::total_cmp);
                        ages
                    }
                }
            }
            (_, None) => Vec::new(),
        };
        LifeHistory { lifetime, contact_ages }
    }
}

pub fn sample_life_history<R: UniformSource>(law: &ReproductionLaw, rng: &mut R) -> Result<LifeHistory> {
    law.validate()?;
    Ok(law.sample_unchecked(rng))
}

/// Expected number of contacts per individual.
pub fn offspring_mean(law: &ReproductionLaw) -> f64 {
    match (&law.placement, &law.offspring) {
        (Placement::PoissonProcess { rate }, _) => rate * law.lifetime.mean(),
        (_, Some(offspring)) => offspring.mean(),
        (_, None) => 0.0,
    }
}

/// Smallest constant coverage that makes the vaccinated process
/// (sub)critical: max(0, 1 - 1/m).
pub fn critical_coverage(law: &ReproductionLaw) -> f64 {
    critical_coverage_for_mean(offspring_mean(law))
}

pub fn critical_coverage_for_mean(m: f64) -> f64 {
    if m <= 1.0 {
        0.0
    } else {
        1.0 - 1.0 / m
    }
}
